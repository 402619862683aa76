"""
Pytest configuration and shared fixtures for testing.

Provides temporary paths, a small fast configuration, an in-memory dataset factory with a
planted humidity signal, and a session-wide synthetic file set.
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from src.components.synthesis import HUMIDITY, SynthesisComponent, synthetic_catalog
from src.config import PipelineConfig
from src.models import Dataset, parse_utc

PLANTED_LAG = 2

DATASET_LAUNCHES = (
    "2017-03-01T00:00:00Z",
    "2017-03-01T12:00:00Z",
    "2017-03-02T00:00:00Z",
    "2017-03-02T12:00:00Z",
    "2018-03-01T00:00:00Z",
    "2018-03-01T12:00:00Z",
    "2019-03-01T00:00:00Z",
    "2019-03-01T12:00:00Z",
)


def small_config_data(root: Path) -> dict:
    """Configuration document sized for unit tests."""
    return {
        "pipeline": {"name": "test_sea_fog_pipeline", "version": "1.0.0"},
        "project": {"seed": 11, "workers": 1, "log_level": "WARNING"},
        "paths": {
            "data_dir": str(root / "data"),
            "reports_dir": str(root / "reports"),
        },
        "catalog": synthetic_catalog().to_document(),
        "ingest": {"horizon_hours": 24},
        "tlca": {"max_lag": 5, "alpha": 0.05, "months": [3, 4, 5, 6, 7]},
        "gbdt": {
            "rounds": 15,
            "learning_rate": 0.3,
            "max_leaves": 8,
            "max_bins": 32,
            "min_samples_leaf": 5,
            "early_stopping_patience": 5,
        },
        "ensemble": {"members": 3, "strategy": "undersample", "target_ratio": 0.1},
        "synth": {
            "stations": 3,
            "periods": [
                {"start": "2017-03-01", "end": "2017-03-04"},
                {"start": "2018-03-01", "end": "2018-03-02"},
                {"start": "2019-03-01", "end": "2019-03-02"},
            ],
            "target_fog_frequency": 0.1,
            "seed": 5,
        },
    }


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmp_dir:
        yield Path(tmp_dir)


@pytest.fixture
def sample_config(temp_dir):
    """Create a test configuration with temporary paths."""
    return PipelineConfig(**small_config_data(temp_dir))


def make_dataset(n_stations: int = 6, launches=DATASET_LAUNCHES, horizon: int = 24, seed: int = 0,
                 planted_lag: int = PLANTED_LAG, fog_level: float = 1.0) -> Dataset:
    """
    Random forecasts whose humidity ``planted_lag`` hours before a valid time decides fog.

    Visibility is observed every third lead: 0.5 km when the lagged humidity exceeds
    ``fog_level``, 8 km otherwise.
    """
    catalog = synthetic_catalog()
    rng = np.random.default_rng(seed)
    launch = np.repeat([parse_utc(t) for t in launches], n_stations)
    n = len(launch)

    X = rng.standard_normal((n, len(catalog), horizon)).astype(np.float32)
    humidity = X[:, catalog.index(HUMIDITY), :]
    Y = np.full((n, horizon), np.nan, dtype=np.float32)
    for lead in range(3, horizon + 1, 3):
        source = lead - planted_lag
        if source >= 1:
            Y[:, lead - 1] = np.where(humidity[:, source - 1] > fog_level, 0.5, 8.0)

    station_ids = tuple(f"S{i:02d}" for i in range(n_stations)) * len(launches)
    lat = np.tile(np.linspace(30.0, 31.0, n_stations), len(launches))
    lon = np.tile(np.linspace(122.0, 123.0, n_stations), len(launches))
    prior_vis = rng.uniform(0.2, 10.0, (n, 3)).astype(np.float32)
    return Dataset(catalog=catalog, X=X, Y=Y, station_ids=station_ids, lat=lat, lon=lon,
                   launch=launch, prior_vis=prior_vis)


@pytest.fixture
def dataset_factory():
    """Factory for in-memory datasets with a planted humidity lag."""
    return make_dataset


@pytest.fixture
def small_dataset():
    return make_dataset()


@pytest.fixture(scope="session")
def synth_files(tmp_path_factory):
    """Synthetic observation, grid, catalog and truth files, generated once per session."""
    root = tmp_path_factory.mktemp("synth")
    config = PipelineConfig(**small_config_data(root))
    return SynthesisComponent(config).execute(root / "files")


@pytest.fixture(scope="session")
def config_data():
    """The small configuration document builder, for tests that write their own config files."""
    return small_config_data
