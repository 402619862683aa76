"""
Pydantic models for pipeline configuration.

These models provide type-safe parsing and validation of the YAML configuration file.
Every section has defaults, so an empty document is a valid configuration; the
values in config/default.yaml spell them out.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.data import ChannelDescriptor, VariableCatalog, default_catalog
from src.utils.exceptions import ConfigurationError


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class PipelineInfo(_Section):
    """Basic pipeline metadata."""
    name: str = Field("sea_fog_station_forecast", description="Pipeline name")
    version: str = Field("1.0.0", description="Pipeline version")


class ProjectSettings(_Section):
    """Project-level settings."""
    seed: int = Field(20140301, ge=0, description="Root seed for every random stream")
    workers: int = Field(1, ge=1, description="Worker count; 1 is the bit-exact reference mode")
    log_level: str = Field("INFO", description="Logging level")
    log_file: Optional[str] = Field(None, description="Optional log file")


class DataPaths(_Section):
    """File system paths for artifacts."""
    data_dir: str = Field("data", description="Directory for datasets and feature containers")
    reports_dir: str = Field("reports", description="Directory for verification reports")

    @field_validator('data_dir', 'reports_dir', mode='before')
    @classmethod
    def resolve_paths(cls, v):
        """Convert relative paths to absolute paths."""
        if isinstance(v, str):
            path = Path(v)
            if not path.is_absolute():
                # Paths in config are relative to where the command is run from
                path = (Path.cwd() / v).resolve()
            return str(path)
        return v


class CatalogSettings(_Section):
    """Ordered forecast channels; the order fixes the variable axis of the dataset."""
    channels: List[ChannelDescriptor] = Field(default_factory=lambda: list(default_catalog().channels))

    def to_catalog(self) -> VariableCatalog:
        return VariableCatalog(channels=tuple(self.channels))


class IdwConfig(_Section):
    """Inverse distance weighting parameters."""
    power: float = Field(2.0, gt=0, description="Distance exponent p")
    neighbors: int = Field(4, ge=1, description="Number of nearest non-missing nodes k")
    epsilon_m: float = Field(1e-6, gt=0, description="Zero-distance threshold in meters")
    earth_radius_km: float = Field(6371.0, gt=0, description="Spherical Earth radius")


class IngestSettings(_Section):
    """Observation/grid matching rules."""
    obs_cadence_hours: int = Field(3, ge=1, description="Observation clock cadence")
    horizon_hours: int = Field(60, ge=1, description="Lead horizon T")
    launch_hours: List[int] = Field(default_factory=lambda: [0, 12], description="Allowed launch hours (UTC)")
    label_threshold_km: float = Field(1.0, gt=0, description="Fog visibility threshold")
    label_mode: Literal["visibility", "visibility_and_weather"] = "visibility"
    fog_weather_codes: List[int] = Field(default_factory=lambda: list(range(40, 50)))
    prior_offsets_hours: List[int] = Field(default_factory=lambda: [0, 3, 6],
                                           description="Visibility offsets before launch kept per sample")
    study_area: Tuple[float, float, float, float] = Field(
        (26.5, 33.5, 117.0, 126.0), description="lat_min, lat_max, lon_min, lon_max (warning only)"
    )

    @field_validator('prior_offsets_hours')
    @classmethod
    def three_offsets(cls, v):
        if len(v) != 3:
            raise ValueError("exactly three prior visibility offsets are stored per sample")
        return v


class TlcaConfig(_Section):
    """Time-lagged correlation analysis parameters."""
    max_lag: int = Field(5, ge=0, description="Maximum lag tau in hours")
    alpha: float = Field(0.05, gt=0, lt=1, description="Significance level")
    months: List[int] = Field(default_factory=lambda: [3, 4, 5, 6, 7])
    target: Literal["visibility", "label"] = Field("visibility", description="Correlate raw visibility or binary fog")
    max_variables: Optional[int] = Field(None, ge=1, description="Keep only the strongest variables when set")

    @field_validator('months')
    @classmethod
    def valid_months(cls, v):
        if not v or any(m < 1 or m > 12 for m in v):
            raise ValueError("months must be a non-empty subset of 1..12")
        return sorted(set(v))


class FeatureSettings(_Section):
    """Feature categories to emit."""
    include_location: bool = True
    include_calendar: bool = True
    include_recent_visibility: bool = True
    include_lead_time: bool = True
    calendar_source: Literal["valid", "launch"] = "valid"


class SplitSettings(_Section):
    """Chronological split by launch year."""
    train_years: List[int] = Field(default_factory=lambda: [2014, 2015, 2016, 2017])
    val_years: List[int] = Field(default_factory=lambda: [2018])
    test_years: List[int] = Field(default_factory=lambda: [2019, 2020])


class ObjectiveSettings(_Section):
    """Boosting objective."""
    name: str = Field("focal:0.2:4", description="'ce' or 'focal:<alpha>:<gamma>[:printed]'")
    prob_clip: float = Field(1e-7, gt=0, lt=0.5)
    hess_floor: float = Field(1e-16, gt=0)


class GbdtConfig(_Section):
    """Histogram gradient-boosted tree hyperparameters."""
    rounds: int = Field(200, ge=1)
    learning_rate: float = Field(0.05, gt=0)
    max_leaves: int = Field(31, ge=2)
    max_bins: int = Field(255, ge=2, le=65535)
    min_samples_leaf: int = Field(20, ge=1)
    min_hessian_leaf: float = Field(1e-3, gt=0)
    l2_regularization: float = Field(1.0, gt=0)
    early_stopping_patience: int = Field(20, ge=1)
    bagging_fraction: float = Field(1.0, gt=0, le=1)
    feature_fraction: float = Field(1.0, gt=0, le=1)
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)


class EnsembleConfig(_Section):
    """Easy-ensemble meta-training."""
    members: int = Field(10, ge=1)
    strategy: Literal["none", "undersample", "oversample"] = "undersample"
    target_ratio: float = Field(0.1, gt=0, le=1)
    threshold: float = Field(0.5, ge=0, le=1)
    seed: int = Field(0, ge=0)


class VerifySettings(_Section):
    """Verification options."""
    far_definition: Literal["paper", "conventional"] = "paper"
    stride_hours: int = Field(3, ge=1)
    horizons: List[int] = Field(default_factory=lambda: [24, 60])
    averaging: Literal["pooled", "per_lead"] = "pooled"
    fsl_cap_km: float = Field(100.0, gt=0)


class SynthPeriod(_Section):
    """Inclusive range of launch dates."""
    start: str = Field(..., description="First launch date, YYYY-MM-DD")
    end: str = Field(..., description="Last launch date, YYYY-MM-DD")


class SynthConfig(_Section):
    """Synthetic oracle parameters."""
    stations: int = Field(4, ge=1)
    station_box: Tuple[float, float, float, float] = (29.5, 31.5, 121.0, 123.0)
    grid_shape: Tuple[int, int] = (3, 3)
    grid_margin_deg: float = Field(0.5, ge=0)
    periods: List[SynthPeriod] = Field(default_factory=lambda: [
        SynthPeriod(start="2017-03-01", end="2017-03-20"),
        SynthPeriod(start="2018-03-01", end="2018-03-10"),
        SynthPeriod(start="2019-03-01", end="2019-03-10"),
    ])
    rh_threshold: float = 90.0
    wind_threshold: float = 5.0
    planted_lag: int = Field(3, ge=0, le=5)
    noise_scale: float = Field(1.0, ge=0, description="Scale of AR(1) field noise")
    label_noise: float = Field(0.0, ge=0, lt=0.5, description="Probability of flipping an observed label")
    missing_fraction: float = Field(0.0, ge=0, lt=1, description="Fraction of observation rows with no visibility")
    target_fog_frequency: float = Field(0.05, gt=0, lt=1)
    seed: int = Field(7, ge=0)


class PipelineConfig(BaseModel):
    """Complete pipeline configuration model."""
    model_config = ConfigDict(populate_by_name=True, extra='forbid')

    pipeline: PipelineInfo = Field(default_factory=PipelineInfo)
    project: ProjectSettings = Field(default_factory=ProjectSettings)
    paths: DataPaths = Field(default_factory=DataPaths)
    catalog: CatalogSettings = Field(default_factory=CatalogSettings)
    idw: IdwConfig = Field(default_factory=IdwConfig)
    ingest: IngestSettings = Field(default_factory=IngestSettings)
    tlca: TlcaConfig = Field(default_factory=TlcaConfig)
    features: FeatureSettings = Field(default_factory=FeatureSettings)
    split: SplitSettings = Field(default_factory=SplitSettings)
    objective: ObjectiveSettings = Field(default_factory=ObjectiveSettings)
    gbdt: GbdtConfig = Field(default_factory=GbdtConfig)
    ensemble: EnsembleConfig = Field(default_factory=EnsembleConfig)
    verify: VerifySettings = Field(default_factory=VerifySettings)
    synth: SynthConfig = Field(default_factory=SynthConfig)

    @model_validator(mode='after')
    def check_consistency(self):
        if self.tlca.max_lag >= self.ingest.horizon_hours:
            raise ValueError("tlca.max_lag must be smaller than the lead horizon")
        return self

    @classmethod
    def from_yaml(cls, config_path: Union[str, Path]) -> "PipelineConfig":
        """Load configuration from YAML file."""
        config_path = Path(config_path)
        if not config_path.exists():
            raise FileNotFoundError(f"Configuration file not found: {config_path}")

        with open(config_path, 'r') as f:
            config_data = yaml.safe_load(f) or {}

        return cls(**config_data)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "PipelineConfig":
        """
        Return a revalidated copy with dotted-path overrides applied.

        Args:
            overrides: Mapping such as {"tlca.max_lag": 5}; None values are skipped

        Returns:
            New configuration; command-line values win over file values
        """
        data = self.model_dump()
        for dotted, value in overrides.items():
            if value is None:
                continue
            node = data
            parts = dotted.split(".")
            for part in parts[:-1]:
                if part not in node or not isinstance(node[part], dict):
                    raise ConfigurationError(f"Unknown configuration key: {dotted}")
                node = node[part]
            if parts[-1] not in node:
                raise ConfigurationError(f"Unknown configuration key: {dotted}")
            node[parts[-1]] = value
        try:
            return type(self)(**data)
        except ValueError as e:
            raise ConfigurationError(f"Invalid configuration override: {e}") from e

    def resolved(self) -> Dict[str, Any]:
        """Fully resolved configuration as plain data, for echoing into artifacts."""
        return self.model_dump(mode='json')

    def member_gbdt(self) -> GbdtConfig:
        """Boosting configuration carrying the project seed and worker count."""
        return self.gbdt.model_copy(update={"seed": self.project.seed, "workers": self.project.workers})

    def member_ensemble(self) -> EnsembleConfig:
        """Ensemble configuration carrying the project seed."""
        return self.ensemble.model_copy(update={"seed": self.project.seed})
