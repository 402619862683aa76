"""
Tests for observation and grid ingestion.

Tests cover CSV parsing and its error reporting, inverse distance weighting, dataset
assembly and the ingestion component.
"""

import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.components.ingestion import (
    FogIngestionComponent,
    assemble_dataset,
    haversine_km,
    idw_interpolate,
    idw_interpolate_many,
    in_grid_hull,
    parse_grid,
    parse_observations,
)
from src.config import IdwConfig
from src.models import ChannelDescriptor, Station, VariableCatalog, parse_utc
from src.utils import EmptyDatasetError, IngestionError, InterpolationError

OBS_HEADER = "station_id,lat,lon,time_utc,visibility_km,present_weather\n"
GRID_HEADER = "launch_utc,lead_hour,lat,lon,variable,value\n"

WIND_CATALOG = VariableCatalog(channels=(
    ChannelDescriptor(name="U_GRD_GDS3_HTGL"),
    ChannelDescriptor(name="V_GRD_GDS3_HTGL"),
    ChannelDescriptor(name="wind_speed", kind="derived", formula="hypot(U_GRD_GDS3_HTGL,V_GRD_GDS3_HTGL)"),
))


def grid_text(horizon=3, launch="2018-03-01T00:00:00Z", skip=()):
    """A 2 × 2 lattice with U = 3 and V = 4 everywhere."""
    lines = [GRID_HEADER]
    for lead in range(1, horizon + 1):
        for lat in (30.0, 31.0):
            for lon in (122.0, 123.0):
                for variable, value in (("U_GRD_GDS3_HTGL", 3.0), ("V_GRD_GDS3_HTGL", 4.0)):
                    if (lead, lat, lon, variable) in skip:
                        continue
                    lines.append(f"{launch},{lead},{lat},{lon},{variable},{value}\n")
    return "".join(lines)


def obs_text(*rows):
    return OBS_HEADER + "".join(row + "\n" for row in rows)


class TestParseObservations:
    """Observation CSV parsing and validation."""

    def test_parse_valid(self):
        table = parse_observations(io.StringIO(obs_text(
            "B,30.5,122.5,2018-03-01T03:00:00Z,0.5,42",
            "A,30.2,122.1,2018-03-01T03:00:00+08:00,,",
        )))

        assert table.n_rows == 2
        assert list(table.frame["station_id"]) == ["A", "B"]
        assert table.frame["time"].iloc[0] == parse_utc("2018-02-28T19:00:00Z")
        assert np.isnan(table.frame["visibility_km"].iloc[0])
        assert table.frame["present_weather"].iloc[1] == 42

    def test_fog_labels_with_weather_codes(self):
        table = parse_observations(io.StringIO(obs_text(
            "A,30.5,122.5,2018-03-01T00:00:00Z,0.5,42",
            "A,30.5,122.5,2018-03-01T03:00:00Z,0.5,10",
            "A,30.5,122.5,2018-03-01T06:00:00Z,,45",
        )))

        assert list(table.fog_labels()[:2]) == [1.0, 1.0]
        combined = table.fog_labels(mode="visibility_and_weather")
        assert list(combined[:2]) == [1.0, 0.0]
        assert np.isnan(combined[2])

    def test_duplicate_reports_line(self):
        with pytest.raises(IngestionError, match="line 3"):
            parse_observations(io.StringIO(obs_text(
                "A,30.5,122.5,2018-03-01T03:00:00Z,0.5,",
                "A,30.5,122.5,2018-03-01T03:00:00Z,0.7,",
            )))

    def test_malformed_visibility_reports_line(self):
        with pytest.raises(IngestionError, match="line 3: invalid visibility_km"):
            parse_observations(io.StringIO(obs_text(
                "A,30.5,122.5,2018-03-01T03:00:00Z,0.5,",
                "A,30.5,122.5,2018-03-01T06:00:00Z,foggy,",
            )))

    def test_negative_visibility(self):
        with pytest.raises(IngestionError, match="negative visibility"):
            parse_observations(io.StringIO(obs_text("A,30.5,122.5,2018-03-01T03:00:00Z,-1,")))

    def test_bad_timestamp(self):
        with pytest.raises(IngestionError, match="line 2"):
            parse_observations(io.StringIO(obs_text("A,30.5,122.5,noon,0.5,")))

    def test_wrong_header(self):
        with pytest.raises(IngestionError, match="header"):
            parse_observations(io.StringIO("station,lat,lon,time,vis,ww\n"))

    def test_station_moves(self):
        with pytest.raises(IngestionError, match="inconsistent coordinates"):
            parse_observations(io.StringIO(obs_text(
                "A,30.5,122.5,2018-03-01T03:00:00Z,0.5,",
                "A,30.6,122.5,2018-03-01T06:00:00Z,0.5,",
            )))


class TestParseGrid:
    """Long-form grid parsing and validation."""

    def test_parse_valid(self):
        grids = parse_grid(io.StringIO(grid_text()), WIND_CATALOG, horizon=3)

        assert grids.values.shape == (1, 3, 2, 2, 2)
        assert grids.variables == ("U_GRD_GDS3_HTGL", "V_GRD_GDS3_HTGL")
        assert np.all(grids.field(0, 2, "V_GRD_GDS3_HTGL") == 4.0)

    def test_missing_node_is_nan(self):
        grids = parse_grid(io.StringIO(grid_text(skip={(1, 30.0, 122.0, "U_GRD_GDS3_HTGL")})), WIND_CATALOG, horizon=3)

        assert np.isnan(grids.field(0, 1, "U_GRD_GDS3_HTGL")[0, 0])
        assert grids.field(0, 1, "U_GRD_GDS3_HTGL")[1, 1] == 3.0

    def test_unknown_variable(self):
        text = grid_text() + "2018-03-01T00:00:00Z,1,30.0,122.0,VIS,5.0\n"

        with pytest.raises(IngestionError, match="not a raw catalog channel"):
            parse_grid(io.StringIO(text), WIND_CATALOG, horizon=3)

    def test_lead_outside_horizon(self):
        with pytest.raises(IngestionError, match="lead_hour"):
            parse_grid(io.StringIO(grid_text(horizon=4)), WIND_CATALOG, horizon=3)

    def test_launch_hour_not_allowed(self):
        with pytest.raises(IngestionError, match="allowed launch hour"):
            parse_grid(io.StringIO(grid_text(launch="2018-03-01T06:00:00Z")), WIND_CATALOG, horizon=3)

    def test_duplicate_value(self):
        text = grid_text() + "2018-03-01T00:00:00Z,1,30.0,122.0,U_GRD_GDS3_HTGL,3.5\n"

        with pytest.raises(IngestionError, match="duplicate grid value"):
            parse_grid(io.StringIO(text), WIND_CATALOG, horizon=3)

    def test_missing_raw_channel(self):
        text = GRID_HEADER + "2018-03-01T00:00:00Z,1,30.0,122.0,U_GRD_GDS3_HTGL,3.0\n"

        with pytest.raises(IngestionError, match="no values for raw channels"):
            parse_grid(io.StringIO(text), WIND_CATALOG, horizon=3)


class TestIdw:
    """Inverse distance weighting."""

    def test_node_at_target_is_exact(self):
        lats = np.array([30.0, 30.0, 31.0, 31.0])
        lons = np.array([122.0, 123.0, 122.0, 123.0])

        value = idw_interpolate(np.array([7.3, 1.0, 2.0, 3.0]), lats, lons, 30.0, 122.0, IdwConfig())

        assert value == pytest.approx(7.3, abs=1e-12)

    def test_equidistant_pair_averages(self):
        value = idw_interpolate_many(np.array([[10.0, 20.0]]), np.array([5.0, 5.0]), IdwConfig(neighbors=2))

        assert value[0] == pytest.approx(15.0)

    def test_inverse_square_weights(self):
        value = idw_interpolate_many(np.array([[1.0, 2.0, 3.0, 4.0]]), np.array([1.0, 1.0, 2.0, 2.0]),
                                     IdwConfig(power=2.0, neighbors=4))

        assert value[0] == pytest.approx(1.9)

    def test_missing_nodes_are_skipped(self):
        value = idw_interpolate_many(np.array([[np.nan, 2.0, 4.0, 100.0]]), np.array([0.1, 1.0, 1.0, 50.0]),
                                     IdwConfig(neighbors=2))

        assert value[0] == pytest.approx(3.0)

    def test_too_few_nodes(self):
        with pytest.raises(InterpolationError):
            idw_interpolate_many(np.array([[np.nan, 2.0, np.nan]]), np.array([1.0, 2.0, 3.0]), IdwConfig(neighbors=2))

    def test_too_few_nodes_left_missing_when_allowed(self):
        fields = np.array([[np.nan, 2.0, np.nan], [1.0, 2.0, 3.0]])

        values = idw_interpolate_many(fields, np.array([1.0, 1.0, 3.0]), IdwConfig(neighbors=2), allow_missing=True)

        assert np.isnan(values[0])
        assert values[1] == pytest.approx(1.5)

    @given(st.lists(st.tuples(st.integers(1, 500), st.integers(-100, 100)), min_size=4, max_size=12))
    def test_result_within_node_range(self, nodes):
        distances = np.array([d for d, _ in nodes], dtype=np.float64)
        values = np.array([v for _, v in nodes], dtype=np.float64)

        value = idw_interpolate_many(values[None, :], distances, IdwConfig())[0]

        assert values.min() - 1e-9 <= value <= values.max() + 1e-9

    def test_haversine_one_degree_of_latitude(self):
        assert haversine_km(30.0, 122.0, 31.0, 122.0) == pytest.approx(111.19, abs=0.01)

    def test_grid_hull(self):
        grids = parse_grid(io.StringIO(grid_text()), WIND_CATALOG, horizon=3)

        assert in_grid_hull(Station(id="A", lat=30.5, lon=122.5), grids)
        assert not in_grid_hull(Station(id="B", lat=35.0, lon=122.5), grids)


class TestAssembleDataset:
    """Matching forecasts and observations into the dataset."""

    def test_assemble(self):
        observations = parse_observations(io.StringIO(obs_text(
            "A,30.5,122.5,2018-03-01T00:00:00Z,6.0,",
            "A,30.5,122.5,2018-03-01T03:00:00Z,0.5,",
            "B,35.0,122.5,2018-03-01T03:00:00Z,0.5,",
        )))
        grids = parse_grid(io.StringIO(grid_text()), WIND_CATALOG, horizon=3)

        dataset = assemble_dataset(observations, grids, WIND_CATALOG, IdwConfig())

        assert dataset.station_ids == ("A",)
        assert dataset.X.shape == (1, 3, 3)
        assert np.allclose(dataset.channel("wind_speed"), 5.0)
        assert np.isnan(dataset.Y[0, :2]).all()
        assert dataset.Y[0, 2] == pytest.approx(0.5)
        assert dataset.prior_vis[0, 0] == pytest.approx(6.0)
        assert np.isnan(dataset.prior_vis[0, 1:]).all()

    def test_no_station_in_grid(self):
        observations = parse_observations(io.StringIO(obs_text("B,35.0,122.5,2018-03-01T03:00:00Z,0.5,")))
        grids = parse_grid(io.StringIO(grid_text()), WIND_CATALOG, horizon=3)

        with pytest.raises(EmptyDatasetError):
            assemble_dataset(observations, grids, WIND_CATALOG, IdwConfig())

    def test_no_observation_at_valid_times(self):
        observations = parse_observations(io.StringIO(obs_text("A,30.5,122.5,2018-03-02T03:00:00Z,0.5,")))
        grids = parse_grid(io.StringIO(grid_text()), WIND_CATALOG, horizon=3)

        with pytest.raises(EmptyDatasetError):
            assemble_dataset(observations, grids, WIND_CATALOG, IdwConfig())

    def test_threaded_assembly_matches_serial(self, synth_files, sample_config):
        catalog = VariableCatalog.from_yaml(synth_files.paths["catalog"])
        observations = parse_observations(synth_files.paths["observations"])
        grids = parse_grid(synth_files.paths["grid"], catalog, horizon=24)

        serial = assemble_dataset(observations, grids, catalog, sample_config.idw, workers=1)
        threaded = assemble_dataset(observations, grids, catalog, sample_config.idw, workers=4)

        assert np.array_equal(serial.X, threaded.X)
        assert np.array_equal(serial.Y, threaded.Y, equal_nan=True)


class TestFogIngestionComponent:
    """The ingestion pipeline stage."""

    def test_init(self, sample_config):
        component = FogIngestionComponent(sample_config)

        assert component.config == sample_config
        assert component.stats["samples"] == 0

    def test_execute(self, sample_config, synth_files):
        component = FogIngestionComponent(sample_config)
        catalog = VariableCatalog.from_yaml(synth_files.paths["catalog"])

        dataset = component.execute(synth_files.paths["observations"], synth_files.paths["grid"], catalog)

        assert dataset.n_samples == 16 * 3
        assert dataset.horizon == 24
        assert dataset.catalog == catalog
        assert component.stats["samples"] == dataset.n_samples
        assert component.stats["stations_dropped"] == 0

    def test_execute_missing_file(self, sample_config, temp_dir):
        component = FogIngestionComponent(sample_config)

        with pytest.raises((IngestionError, FileNotFoundError)):
            component.execute(temp_dir / "absent.csv", temp_dir / "grid.csv")

    def test_missing_lead_in_grid_is_left_missing(self, sample_config, synth_files, temp_dir):
        lines = synth_files.paths["grid"].read_text().splitlines(keepends=True)
        first_launch = min(line.split(",", 1)[0] for line in lines[1:])
        grid_path = temp_dir / "grid.csv"
        grid_path.write_text("".join(line for line in lines if not line.startswith(f"{first_launch},5,")))
        component = FogIngestionComponent(sample_config)

        dataset = component.execute(synth_files.paths["observations"], grid_path,
                                    VariableCatalog.from_yaml(synth_files.paths["catalog"]))

        first = dataset.launch == parse_utc(first_launch)
        assert first.sum() == 3
        assert np.isnan(dataset.X[first][:, :, 4]).all()
        assert np.isfinite(np.delete(dataset.X[first], 4, axis=2)).all()
        assert np.isfinite(dataset.X[~first]).all()
        assert component.stats["missing_values"] == 3 * len(dataset.catalog)
