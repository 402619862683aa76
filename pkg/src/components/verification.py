"""
Categorical forecast verification.

Confusion counts, POD / FAR / ETS / HSS, per-lead score curves with pooled horizon rows,
the fog-stability (FSL) visibility baseline, and scoring of externally produced label
files.
"""

from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import duckdb
import numpy as np
import pandas as pd

from src.components.base import PipelineComponent
from src.config import PipelineConfig
from src.models import ConfusionMatrix, Dataset, ObservationTable, ScoreSet, fog_labels, format_utc, parse_utc
from src.models.data import HOUR, format_score
from src.utils import EmptyDatasetError, FogPipelineError, InputError, get_logger
from src.utils.io import atomic_output, write_run_sidecar

logger = get_logger(__name__)

PAIRING_COLUMNS = ["station_id", "launch_utc", "lead_hour", "forecast_label", "observed_label"]
REPORT_COLUMNS = ["lead_hour", "a", "b", "c", "d", "pod", "far_paper", "far_conventional", "ets", "hss"]
KEY_COLUMNS = ["station_id", "launch_utc", "lead_hour"]

# 2 m fields feeding the FSL baseline
FSL_TEMPERATURE = "TMP_GDS3_HTGL"
FSL_DEW_POINT = "DPT_GDS3_HTGL"
FSL_HUMIDITY = "R_H_GDS3_HTGL"


# ----------------------------------------------------------------------- scores

def _as_labels(values, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    present = array[~np.isnan(array)]
    if not np.isin(present, (0.0, 1.0)).all():
        raise InputError(f"{name} labels must be 0 or 1")
    return array


def confusion(forecast: Sequence[float], observed: Sequence[float]) -> ConfusionMatrix:
    """
    Contingency counts of forecast against observed labels.

    Pairs with a missing (NaN) observation or forecast are skipped.

    Raises:
        InputError: Lengths differ or a label is not 0/1
        EmptyDatasetError: No complete pair remains
    """
    f = _as_labels(forecast, "Forecast")
    o = _as_labels(observed, "Observed")
    if f.shape != o.shape:
        raise InputError(f"Forecast and observed lengths differ: {f.shape} vs {o.shape}")
    keep = ~(np.isnan(f) | np.isnan(o))
    if not keep.any():
        raise EmptyDatasetError("No forecast/observation pairs to verify")
    f = f[keep].astype(bool)
    o = o[keep].astype(bool)
    return ConfusionMatrix(
        a=int(np.sum(f & o)),
        b=int(np.sum(f & ~o)),
        c=int(np.sum(~f & o)),
        d=int(np.sum(~f & ~o)),
    )


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return None if denominator == 0 else numerator / denominator


def scores(cm: ConfusionMatrix, far_definition: str = "paper") -> ScoreSet:
    """
    POD, FAR, ETS and HSS from a confusion matrix; zero denominators give None.

    FAR is b/(a+d) under ``paper`` and b/(a+b) under ``conventional``; both variants are
    always filled in, ``far`` carries the selected one.
    """
    if far_definition not in ("paper", "conventional"):
        raise InputError(f"Unknown FAR definition {far_definition!r}")
    a, b, c, d = cm.a, cm.b, cm.c, cm.d
    n = cm.n
    # ETS and HSS scaled by n and n² so the undefined test is on exact integers
    random_hits = (a + b) * (a + c)
    expected = random_hits + (c + d) * (b + d)
    far_paper = _ratio(b, a + d)
    far_conventional = _ratio(b, a + b)
    return ScoreSet(
        pod=_ratio(a, a + c),
        far=far_paper if far_definition == "paper" else far_conventional,
        far_paper=far_paper,
        far_conventional=far_conventional,
        ets=_ratio(a * n - random_hits, (a + b + c) * n - random_hits),
        hss=_ratio((a + d) * n - expected, n * n - expected),
        far_definition=far_definition,
    )


# ------------------------------------------------------------------ lead curves

class LeadScore(NamedTuple):
    label: str
    matrix: ConfusionMatrix
    scores: ScoreSet


class LeadTimeReport(NamedTuple):
    """Per-lead rows followed by one aggregate row per horizon."""
    per_lead: List[LeadScore]
    aggregates: List[LeadScore]

    def rows(self) -> List[LeadScore]:
        return self.per_lead + self.aggregates

    def aggregate(self, horizon: int) -> LeadScore:
        for row in self.aggregates:
            if row.label.endswith(f"_{horizon}h"):
                return row
        raise KeyError(horizon)

    def to_frame(self) -> pd.DataFrame:
        records = []
        for row in self.rows():
            s = row.scores
            records.append({
                "lead_hour": row.label,
                "a": row.matrix.a, "b": row.matrix.b, "c": row.matrix.c, "d": row.matrix.d,
                "pod": s.pod, "far_paper": s.far_paper, "far_conventional": s.far_conventional,
                "ets": s.ets, "hss": s.hss,
            })
        return pd.DataFrame.from_records(records, columns=REPORT_COLUMNS)


def _lead_counts(pairs: pd.DataFrame) -> Dict[int, ConfusionMatrix]:
    conn = duckdb.connect(':memory:')
    try:
        labels = pairs[["lead_hour", "forecast_label", "observed_label"]].astype(
            {"lead_hour": np.int64, "forecast_label": np.float64, "observed_label": np.float64})
        conn.register('pairs', labels)
        rows = conn.execute("""
            SELECT lead_hour,
                   SUM(CASE WHEN forecast_label = 1 AND observed_label = 1 THEN 1 ELSE 0 END) AS a,
                   SUM(CASE WHEN forecast_label = 1 AND observed_label = 0 THEN 1 ELSE 0 END) AS b,
                   SUM(CASE WHEN forecast_label = 0 AND observed_label = 1 THEN 1 ELSE 0 END) AS c,
                   SUM(CASE WHEN forecast_label = 0 AND observed_label = 0 THEN 1 ELSE 0 END) AS d
            FROM pairs
            WHERE forecast_label IS NOT NULL AND observed_label IS NOT NULL
              AND NOT isnan(forecast_label) AND NOT isnan(observed_label)
            GROUP BY lead_hour
            ORDER BY lead_hour
        """).fetchall()
    finally:
        conn.close()
    return {int(lead): ConfusionMatrix(a=int(a), b=int(b), c=int(c), d=int(d)) for lead, a, b, c, d in rows}


def _mean_scores(rows: Sequence[ScoreSet], far_definition: str) -> ScoreSet:
    def mean(key: str) -> Optional[float]:
        values = [getattr(s, key) for s in rows if getattr(s, key) is not None]
        return float(np.mean(values)) if values else None

    far_paper, far_conventional = mean("far_paper"), mean("far_conventional")
    return ScoreSet(pod=mean("pod"), far=far_paper if far_definition == "paper" else far_conventional,
                    far_paper=far_paper, far_conventional=far_conventional, ets=mean("ets"),
                    hss=mean("hss"), far_definition=far_definition)


def score_by_leadtime(pairs: pd.DataFrame, stride: int = 3, horizons: Sequence[int] = (24, 60),
                      averaging: str = "pooled", far_definition: str = "paper") -> LeadTimeReport:
    """
    Scores per lead hour plus aggregates at each horizon.

    Args:
        pairs: Frame with lead_hour, forecast_label and observed_label (NaN = missing)
        stride: Lead spacing of the per-lead rows
        horizons: Aggregate over leads ≤ each horizon
        averaging: ``pooled`` sums confusion counts; ``per_lead`` averages the defined
            per-lead scores (counts are still summed)
        far_definition: Which FAR fills ``ScoreSet.far``

    Returns:
        Report with one row per lead (empty leads have undefined scores) and one per horizon
    """
    leads = pairs["lead_hour"].to_numpy(dtype=np.int64)
    if len(leads) and leads.min() < 1:
        raise InputError(f"Lead hours must be at least 1, found {int(leads.min())}")
    _as_labels(pairs["forecast_label"], "Forecast")
    _as_labels(pairs["observed_label"], "Observed")
    counts = _lead_counts(pairs)
    last = max(max(horizons, default=0), max(counts, default=0))
    grid = sorted(set(range(stride, last + 1, stride)) | set(counts))

    per_lead = []
    for lead in grid:
        cm = counts.get(lead, ConfusionMatrix())
        per_lead.append(LeadScore(str(lead), cm, scores(cm, far_definition)))

    aggregates = []
    for horizon in horizons:
        rows = [row for lead, row in zip(grid, per_lead) if lead <= horizon]
        pooled = sum((row.matrix for row in rows), ConfusionMatrix())
        if averaging == "per_lead":
            defined = [row.scores for row in rows if row.matrix.n]
            aggregates.append(LeadScore(f"mean_{horizon}h", pooled, _mean_scores(defined, far_definition)))
        else:
            aggregates.append(LeadScore(f"pooled_{horizon}h", pooled, scores(pooled, far_definition)))
    return LeadTimeReport(per_lead, aggregates)


def write_report(report: LeadTimeReport, path: Union[str, Path]) -> None:
    """Write the report CSV; undefined scores print as NA."""
    with atomic_output(path, "w") as handle:
        handle.write(",".join(REPORT_COLUMNS) + "\n")
        for row in report.rows():
            s, m = row.scores, row.matrix
            values = [row.label, str(m.a), str(m.b), str(m.c), str(m.d)]
            values += [format_score(v) for v in (s.pod, s.far_paper, s.far_conventional, s.ets, s.hss)]
            handle.write(",".join(values) + "\n")


# --------------------------------------------------------------------- baseline

def fsl_visibility(T, Td, rh, cap_km: float = 100.0):
    """
    Fog-stability visibility in km: 1.609 · 6000 · (T − Td) / rh^1.75, capped.

    Dew-point depression below zero is clamped to zero. NaN inputs give NaN.

    Args:
        T: Air temperature, °C (or K)
        Td: Dew point in the same unit as T
        rh: Relative humidity, percent
        cap_km: Upper bound of the result

    Raises:
        InputError: rh ≤ 0
    """
    rh_array = np.asarray(rh, dtype=np.float64)
    if np.any(rh_array <= 0):
        raise InputError("Relative humidity must be positive for the FSL formula")
    depression = np.maximum(np.asarray(T, dtype=np.float64) - np.asarray(Td, dtype=np.float64), 0.0)
    vis = np.minimum(1.609 * 6000.0 * depression / rh_array ** 1.75, cap_km)
    return float(vis) if np.ndim(vis) == 0 else vis


def fsl_pairs(dataset: Dataset, threshold: float = 1.0, cap_km: float = 100.0) -> pd.DataFrame:
    """Pairing frame of FSL labels against observed labels at every labeled cell."""
    for name in (FSL_TEMPERATURE, FSL_DEW_POINT, FSL_HUMIDITY):
        if name not in dataset.catalog.names:
            raise InputError(f"FSL baseline needs the {name} channel")
    vis = fsl_visibility(dataset.channel(FSL_TEMPERATURE), dataset.channel(FSL_DEW_POINT),
                         dataset.channel(FSL_HUMIDITY), cap_km)
    sample, lead_index = np.nonzero(~np.isnan(dataset.Y))
    return pd.DataFrame({
        "station_id": [dataset.station_ids[i] for i in sample],
        "launch_utc": [format_utc(s) for s in dataset.launch[sample]],
        "lead_hour": (lead_index + 1).astype(np.int64),
        "forecast_label": fog_labels(vis[sample, lead_index], threshold),
        "observed_label": fog_labels(dataset.Y[sample, lead_index], threshold),
    })


# ------------------------------------------------------------------ external files

class ExternalScores(NamedTuple):
    report: LeadTimeReport
    matched: int
    unmatched_forecasts: int
    unmatched_observations: int


def read_pairing(source) -> pd.DataFrame:
    """Read a pairing CSV; empty or NA label cells become NaN."""
    frame = pd.read_csv(source, dtype={"station_id": str, "launch_utc": str})
    missing = [c for c in ("station_id", "launch_utc", "lead_hour") if c not in frame.columns]
    if missing:
        raise InputError(f"Pairing file is missing columns {missing}")
    for column in ("forecast_label", "observed_label"):
        if column in frame.columns:
            frame[column] = pd.to_numeric(frame[column], errors="coerce").astype(np.float64)
    frame["lead_hour"] = frame["lead_hour"].astype(np.int64)
    return frame


def join_pairs(forecasts: pd.DataFrame, observations: pd.DataFrame) -> Tuple[pd.DataFrame, int, int]:
    """
    Inner-join forecast and observation label frames on station, launch and lead.

    Returns:
        (joined pairs, forecast keys without an observation, observation keys without a forecast)
    """
    conn = duckdb.connect(':memory:')
    try:
        conn.register('f', forecasts[KEY_COLUMNS + ["forecast_label"]])
        conn.register('o', observations[KEY_COLUMNS + ["observed_label"]])
        joined = conn.execute("""
            SELECT f.station_id, f.launch_utc, f.lead_hour, f.forecast_label, o.observed_label
            FROM f JOIN o USING (station_id, launch_utc, lead_hour)
            ORDER BY f.launch_utc, f.station_id, f.lead_hour
        """).df()
        orphan_forecasts = conn.execute(
            "SELECT COUNT(*) FROM f WHERE NOT EXISTS (SELECT 1 FROM o WHERE o.station_id = f.station_id "
            "AND o.launch_utc = f.launch_utc AND o.lead_hour = f.lead_hour)").fetchone()[0]
        orphan_observations = conn.execute(
            "SELECT COUNT(*) FROM o WHERE NOT EXISTS (SELECT 1 FROM f WHERE f.station_id = o.station_id "
            "AND f.launch_utc = o.launch_utc AND f.lead_hour = o.lead_hour)").fetchone()[0]
    finally:
        conn.close()
    return joined, int(orphan_forecasts), int(orphan_observations)


def score_external(forecast_source, observation_source=None, stride: int = 3,
                   horizons: Sequence[int] = (24, 60), averaging: str = "pooled",
                   far_definition: str = "paper") -> ExternalScores:
    """
    Score an externally produced label file.

    With one file, it must carry both label columns. With two, forecast labels come from
    the first and observed labels from the second, matched on (station_id, launch_utc,
    lead_hour); unmatched keys are counted and logged.
    """
    forecasts = read_pairing(forecast_source)
    if observation_source is None:
        if "observed_label" not in forecasts.columns:
            raise InputError("Pairing file has no observed_label column and no observation file was given")
        pairs, orphan_f, orphan_o = forecasts, 0, 0
    else:
        pairs, orphan_f, orphan_o = join_pairs(forecasts, read_pairing(observation_source))
    if orphan_f or orphan_o:
        logger.warning(f"Unmatched keys: {orphan_f} forecasts without observation, "
                       f"{orphan_o} observations without forecast")
    report = score_by_leadtime(pairs, stride, horizons, averaging, far_definition)
    return ExternalScores(report, len(pairs), orphan_f, orphan_o)


def observed_labels(predictions: pd.DataFrame, observations: ObservationTable, threshold: float = 1.0,
                    mode: str = "visibility", fog_codes: Sequence[int] = tuple(range(40, 50))) -> pd.DataFrame:
    """Replace ``observed_label`` by labels looked up in an observation table at each valid time."""
    table = observations.frame[["station_id", "time"]].copy()
    table["observed_label"] = observations.fog_labels(threshold, mode, fog_codes)
    keyed = predictions.drop(columns=["observed_label"], errors="ignore").copy()
    keyed["time"] = [parse_utc(t) + int(lead) * HOUR
                     for t, lead in zip(keyed["launch_utc"], keyed["lead_hour"])]
    conn = duckdb.connect(':memory:')
    try:
        conn.register('p', keyed)
        conn.register('obs', table)
        merged = conn.execute("""
            SELECT p.*, obs.observed_label
            FROM p LEFT JOIN obs USING (station_id, time)
            ORDER BY p.launch_utc, p.station_id, p.lead_hour
        """).df()
    finally:
        conn.close()
    unmatched = int(merged["observed_label"].isna().sum())
    if unmatched:
        logger.warning(f"{unmatched} predictions have no matching observation")
    return merged.drop(columns=["time"])


class VerificationComponent(PipelineComponent):
    """Scores prediction or baseline pairs and writes the lead-time report."""

    def __init__(self, config: PipelineConfig):
        super().__init__(config)
        self.stats = {"pairs": 0, "leads": 0}

    def execute(self, pairs: pd.DataFrame) -> LeadTimeReport:
        try:
            cfg = self.config.verify
            self.logger.info(f"Scoring {len(pairs)} pairs ({cfg.averaging}, FAR {cfg.far_definition})")
            report = score_by_leadtime(pairs, cfg.stride_hours, cfg.horizons, cfg.averaging, cfg.far_definition)

            self.stats["pairs"] = len(pairs)
            self.stats["leads"] = sum(1 for row in report.per_lead if row.matrix.n)
            for row in report.aggregates:
                formatted = row.scores.formatted()
                self.stats[row.label] = (f"POD {formatted['pod']}, FAR {formatted['far']}, "
                                         f"ETS {formatted['ets']}, HSS {formatted['hss']}")
            self._log_summary("Verification")
            return report

        except FogPipelineError:
            raise
        except Exception as e:
            self.logger.error(f"Verification failed: {str(e)}")
            raise FogPipelineError(f"Verification failed: {str(e)}") from e

    def baseline(self, dataset: Dataset) -> LeadTimeReport:
        """Score the FSL baseline on a dataset."""
        pairs = fsl_pairs(dataset, self.config.ingest.label_threshold_km, self.config.verify.fsl_cap_km)
        return self.execute(pairs)

    def write(self, report: LeadTimeReport, path: Union[str, Path], inputs: Optional[Dict[str, str]] = None) -> None:
        write_report(report, path)
        write_run_sidecar(path, {"config": self.config.resolved(), "inputs": inputs or {}})
