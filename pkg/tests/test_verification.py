"""
Tests for verification scores, lead-time reports, the FSL baseline and external scoring.
"""

import io
import itertools
from fractions import Fraction

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.components.ingestion import parse_observations
from src.components.verification import (
    LeadTimeReport,
    VerificationComponent,
    confusion,
    fsl_pairs,
    fsl_visibility,
    join_pairs,
    observed_labels,
    read_pairing,
    score_by_leadtime,
    score_external,
    scores,
    write_report,
)
from src.models import ConfusionMatrix, Dataset
from src.utils import EmptyDatasetError, InputError


def exact_reference(a, b, c, d):
    """POD, ETS and HSS computed with rational arithmetic."""
    n = a + b + c + d
    pod = Fraction(a, a + c) if a + c else None
    if n == 0:
        return pod, None, None
    random_hits = Fraction((a + b) * (a + c), n)
    ets_den = a + b + c - random_hits
    ets = (a - random_hits) / ets_den if ets_den else None
    expected = Fraction((a + b) * (a + c) + (c + d) * (b + d), n)
    hss_den = n - expected
    hss = (a + d - expected) / hss_den if hss_den else None
    return pod, ets, hss


def pairs_frame(rows):
    return pd.DataFrame(rows, columns=["station_id", "launch_utc", "lead_hour", "forecast_label", "observed_label"])


class TestConfusion:
    def test_counts(self):
        cm = confusion([1, 1, 0, 0], [1, 0, 1, 0])

        assert (cm.a, cm.b, cm.c, cm.d) == (1, 1, 1, 1)

    def test_missing_pairs_skipped(self):
        cm = confusion([1, np.nan, 0], [1, 1, np.nan])

        assert cm == ConfusionMatrix(a=1)

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            confusion([1, 0], [1])

    def test_non_binary_label(self):
        with pytest.raises(InputError):
            confusion([2, 0], [1, 0])

    def test_no_pairs(self):
        with pytest.raises(EmptyDatasetError):
            confusion([np.nan], [1])


class TestScores:
    """Categorical skill scores."""

    def test_worked_example(self):
        s = scores(ConfusionMatrix(a=2, b=3, c=1, d=4))

        assert s.pod == pytest.approx(0.666667, abs=1e-6)
        assert s.far_paper == pytest.approx(0.5)
        assert s.far_conventional == pytest.approx(0.6)
        assert s.far == s.far_paper
        assert s.ets == pytest.approx(0.111111, abs=1e-6)
        assert s.hss == pytest.approx(0.2)

    def test_conventional_far_selected(self):
        s = scores(ConfusionMatrix(a=2, b=3, c=1, d=4), far_definition="conventional")

        assert s.far == pytest.approx(0.6)
        assert s.far_definition == "conventional"

    def test_perfect_forecast(self):
        s = scores(ConfusionMatrix(a=10, b=0, c=0, d=90))

        assert (s.pod, s.far, s.ets, s.hss) == (1.0, 0.0, 1.0, 1.0)

    def test_undefined_scores(self):
        s = scores(ConfusionMatrix(a=0, b=0, c=0, d=5))

        assert s.pod is None
        assert s.far_paper == 0.0
        assert s.far_conventional is None
        assert s.ets is None
        assert s.hss is None

    def test_empty_matrix(self):
        s = scores(ConfusionMatrix())

        assert (s.pod, s.far_paper, s.far_conventional, s.ets, s.hss) == (None, None, None, None, None)

    def test_unknown_far_definition(self):
        with pytest.raises(InputError):
            scores(ConfusionMatrix(a=1), far_definition="other")

    def test_matches_exact_arithmetic_on_every_small_matrix(self):
        for a, b, c, d in itertools.product(range(7), repeat=4):
            s = scores(ConfusionMatrix(a=a, b=b, c=c, d=d))
            pod, ets, hss = exact_reference(a, b, c, d)

            for got, want in ((s.pod, pod), (s.ets, ets), (s.hss, hss)):
                if want is None:
                    assert got is None, (a, b, c, d)
                else:
                    assert got == pytest.approx(float(want), abs=1e-12), (a, b, c, d)


    @given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
    def test_scores_stay_in_range(self, a, b, c, d):
        s = scores(ConfusionMatrix(a=a, b=b, c=c, d=d))

        for value in (s.pod, s.far_conventional):
            assert value is None or 0.0 <= value <= 1.0
        assert s.far_paper is None or s.far_paper >= 0.0
        assert s.ets is None or -1.0 / 3.0 - 1e-12 <= s.ets <= 1.0 + 1e-12
        assert s.hss is None or -1.0 - 1e-12 <= s.hss <= 1.0 + 1e-12


class TestScoreByLeadtime:
    """Per-lead rows and horizon aggregates."""

    def test_rows_and_pooled_aggregate(self):
        pairs = pairs_frame([
            ("A", "2019-03-01T00:00:00Z", 3, 1, 1),
            ("A", "2019-03-01T00:00:00Z", 6, 1, 0),
            ("B", "2019-03-01T00:00:00Z", 6, 0, 1),
            ("B", "2019-03-01T00:00:00Z", 12, 0, 0),
        ])

        report = score_by_leadtime(pairs, stride=3, horizons=[6, 12])

        assert [row.label for row in report.per_lead] == ["3", "6", "9", "12"]
        assert report.per_lead[2].matrix.n == 0
        assert report.per_lead[2].scores.pod is None
        assert report.aggregate(6).label == "pooled_6h"
        assert report.aggregate(6).matrix == ConfusionMatrix(a=1, b=1, c=1, d=0)
        assert report.aggregate(12).matrix.n == 4

    def test_per_lead_averaging(self):
        pairs = pairs_frame([
            ("A", "2019-03-01T00:00:00Z", 3, 1, 1),
            ("A", "2019-03-01T00:00:00Z", 6, 0, 1),
            ("B", "2019-03-01T00:00:00Z", 6, 1, 1),
        ])

        report = score_by_leadtime(pairs, stride=3, horizons=[6], averaging="per_lead")
        row = report.aggregate(6)

        assert row.label == "mean_6h"
        assert row.scores.pod == pytest.approx((1.0 + 0.5) / 2)
        assert row.matrix == ConfusionMatrix(a=2, c=1)

    def test_missing_observation_skipped(self):
        pairs = pairs_frame([
            ("A", "2019-03-01T00:00:00Z", 3, 1, np.nan),
            ("A", "2019-03-01T00:00:00Z", 6, 1, 1),
        ])

        report = score_by_leadtime(pairs, stride=3, horizons=[6])

        assert report.aggregate(6).matrix == ConfusionMatrix(a=1)

    def test_bad_lead(self):
        with pytest.raises(InputError):
            score_by_leadtime(pairs_frame([("A", "2019-03-01T00:00:00Z", 0, 1, 1)]))

    def test_unknown_horizon(self):
        report = score_by_leadtime(pairs_frame([("A", "2019-03-01T00:00:00Z", 3, 1, 1)]), horizons=[24])

        with pytest.raises(KeyError):
            report.aggregate(60)

    def test_write_report(self, temp_dir):
        report = score_by_leadtime(pairs_frame([("A", "2019-03-01T00:00:00Z", 3, 1, 1)]), stride=3, horizons=[6])
        path = temp_dir / "report.csv"

        write_report(report, path)

        lines = path.read_text().splitlines()
        assert lines[0] == "lead_hour,a,b,c,d,pod,far_paper,far_conventional,ets,hss"
        assert lines[1] == "3,1,0,0,0,1.0,0.0,0.0,NA,NA"
        assert lines[2] == "6,0,0,0,0,NA,NA,NA,NA,NA"
        assert lines[3].startswith("pooled_6h,1,0,0,0")

    def test_frame_view(self):
        report = score_by_leadtime(pairs_frame([("A", "2019-03-01T00:00:00Z", 3, 1, 1)]), horizons=[3])

        frame = report.to_frame()

        assert list(frame["lead_hour"]) == ["3", "pooled_3h"]


class TestFslBaseline:
    """Fog-stability visibility."""

    def test_reference_values(self):
        assert fsl_visibility(12.0, 10.0, 95.0) == pytest.approx(6.68, abs=0.005)
        assert fsl_visibility(10.0, 10.0, 90.0) == 0.0
        assert fsl_visibility(10.32756, 10.0, 100.0) == pytest.approx(1.000, abs=5e-4)

    def test_strictly_monotone_on_grid(self):
        depression = np.linspace(0.1, 3.0, 50)
        rh = np.linspace(50.0, 100.0, 50)
        dep_grid, rh_grid = np.meshgrid(depression, rh, indexing="ij")

        vis = fsl_visibility(10.0 + dep_grid, np.full_like(dep_grid, 10.0), rh_grid)

        assert vis.shape == (50, 50)
        assert vis.max() < 100.0
        assert (np.diff(vis, axis=0) > 0).all()
        assert (np.diff(vis, axis=1) < 0).all()

    def test_negative_depression_clamped(self):
        assert fsl_visibility(9.0, 10.0, 99.0) == 0.0

    def test_cap(self):
        assert fsl_visibility(30.0, -70.0, 10.0) == 100.0
        assert fsl_visibility(30.0, -70.0, 10.0, cap_km=50.0) == 50.0

    def test_nan_propagates(self):
        assert np.isnan(fsl_visibility(np.array([np.nan]), np.array([1.0]), np.array([90.0]))).all()

    def test_rh_must_be_positive(self):
        with pytest.raises(InputError):
            fsl_visibility(10.0, 8.0, 0.0)

    def test_fsl_pairs(self, small_dataset):
        catalog = small_dataset.catalog
        X = small_dataset.X.copy()
        X[:, catalog.index("TMP_GDS3_HTGL"), :] = 10.0
        X[:, catalog.index("R_H_GDS3_HTGL"), :] = 95.0
        X[:, catalog.index("DPT_GDS3_HTGL"), :] = np.where(small_dataset.Y <= 1.0, 10.0, 8.0)
        dataset = Dataset(**{**dict(small_dataset), "X": X})

        pairs = fsl_pairs(dataset)

        assert len(pairs) == int((~np.isnan(small_dataset.Y)).sum())
        assert (pairs["forecast_label"] == pairs["observed_label"]).all()

    def test_fsl_pairs_need_channels(self, small_dataset):
        catalog = small_dataset.catalog.model_copy(update={"channels": small_dataset.catalog.channels[:-3]})
        with pytest.raises(InputError, match="FSL"):
            fsl_pairs(small_dataset.model_copy(update={"catalog": catalog}))


class TestExternalScoring:
    """Label files produced elsewhere."""

    FORECASTS = (
        "station_id,launch_utc,lead_hour,forecast_label\n"
        "A,2019-03-01T00:00:00Z,3,1\n"
        "A,2019-03-01T00:00:00Z,6,0\n"
        "B,2019-03-01T00:00:00Z,3,1\n"
    )
    OBSERVATIONS = (
        "station_id,launch_utc,lead_hour,observed_label\n"
        "A,2019-03-01T00:00:00Z,3,1\n"
        "A,2019-03-01T00:00:00Z,6,1\n"
        "C,2019-03-01T00:00:00Z,3,0\n"
    )

    def test_two_files_join_on_keys(self):
        result = score_external(io.StringIO(self.FORECASTS), io.StringIO(self.OBSERVATIONS), horizons=[6])

        assert result.matched == 2
        assert result.unmatched_forecasts == 1
        assert result.unmatched_observations == 1
        assert result.report.aggregate(6).matrix == ConfusionMatrix(a=1, c=1)

    def test_single_file_needs_observed_column(self):
        with pytest.raises(InputError):
            score_external(io.StringIO(self.FORECASTS))

    def test_single_pairing_file(self):
        text = ("station_id,launch_utc,lead_hour,forecast_label,observed_label\n"
                "A,2019-03-01T00:00:00Z,3,1,NA\n"
                "A,2019-03-01T00:00:00Z,6,0,0\n")

        result = score_external(io.StringIO(text), horizons=[6])

        assert result.report.aggregate(6).matrix == ConfusionMatrix(d=1)

    def test_read_pairing_missing_columns(self):
        with pytest.raises(InputError):
            read_pairing(io.StringIO("station_id,lead_hour\nA,3\n"))

    def test_join_pairs(self):
        joined, orphan_f, orphan_o = join_pairs(read_pairing(io.StringIO(self.FORECASTS)),
                                                read_pairing(io.StringIO(self.OBSERVATIONS)))

        assert list(joined["lead_hour"]) == [3, 6]
        assert (orphan_f, orphan_o) == (1, 1)

    def test_observed_labels_from_observation_table(self):
        observations = parse_observations(io.StringIO(
            "station_id,lat,lon,time_utc,visibility_km,present_weather\n"
            "A,30.5,122.5,2019-03-01T03:00:00Z,0.4,\n"
            "A,30.5,122.5,2019-03-01T06:00:00Z,4.0,\n"
        ))
        predictions = pairs_frame([
            ("A", "2019-03-01T00:00:00Z", 3, 1, np.nan),
            ("A", "2019-03-01T00:00:00Z", 6, 1, np.nan),
            ("A", "2019-03-01T00:00:00Z", 9, 0, np.nan),
        ])

        labelled = observed_labels(predictions, observations)

        assert list(labelled["observed_label"][:2]) == [1.0, 0.0]
        assert np.isnan(labelled["observed_label"].iloc[2])


class TestVerificationComponent:
    """The verification pipeline stage."""

    def test_execute_and_write(self, sample_config, temp_dir):
        pairs = pairs_frame([
            ("A", "2019-03-01T00:00:00Z", 3, 1, 1),
            ("A", "2019-03-01T00:00:00Z", 27, 0, 1),
        ])
        component = VerificationComponent(sample_config)

        report = component.execute(pairs)
        component.write(report, temp_dir / "report.csv", {"pred": "p.csv"})

        assert isinstance(report, LeadTimeReport)
        assert [row.label for row in report.aggregates] == ["pooled_24h", "pooled_60h"]
        assert report.aggregate(24).matrix == ConfusionMatrix(a=1)
        assert report.aggregate(60).matrix == ConfusionMatrix(a=1, c=1)
        assert component.stats["pairs"] == 2
        assert (temp_dir / "report.csv.run.json").exists()
