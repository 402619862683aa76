"""
Feature construction and the chronological split.

Every labeled (sample, lead) cell of the dataset becomes one row with five feature
categories: lagged predictor values, station location, calendar fields, visibility
observed before launch and the lead hour.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.components.base import PipelineComponent
from src.config import FeatureSettings, PipelineConfig
from src.models import Dataset, FeatureMatrix, PredictorSet, VariableCatalog, fog_labels
from src.models.data import calendar_parts
from src.utils import ConfigurationError, FogPipelineError, get_logger

logger = get_logger(__name__)


class FeatureSpec(BaseModel):
    """Which features to emit, and in which order."""
    model_config = ConfigDict(frozen=True)

    predictors: PredictorSet = Field(default_factory=PredictorSet)
    include_location: bool = True
    include_calendar: bool = True
    include_recent_visibility: bool = True
    include_lead_time: bool = True
    calendar_source: str = "valid"
    prior_offsets_hours: Tuple[int, ...] = (0, 3, 6)

    @classmethod
    def from_settings(cls, settings: FeatureSettings, predictors: PredictorSet,
                      prior_offsets_hours: Sequence[int] = (0, 3, 6)) -> "FeatureSpec":
        return cls(predictors=predictors, prior_offsets_hours=tuple(prior_offsets_hours),
                   **settings.model_dump())

    def resolved(self, catalog: VariableCatalog) -> "FeatureSpec":
        """Spec with an empty predictor set replaced by every catalog variable at lag 0."""
        if len(self.predictors):
            for variable, _ in self.predictors.entries:
                if variable not in catalog.names:
                    raise ConfigurationError(f"Predictor {variable!r} is not in the dataset catalog")
            return self
        logger.warning("Empty predictor set; falling back to every catalog variable at lag 0")
        fallback = PredictorSet(entries=[(name, 0) for name in catalog.names])
        return self.model_copy(update={"predictors": fallback})

    def manifest(self) -> List[str]:
        names = self.predictors.feature_names()
        if self.include_location:
            names += ["station_lat", "station_lon"]
        if self.include_calendar:
            names += ["hour", "day", "month"]
        if self.include_recent_visibility:
            names += [f"vis_prior_{offset}h" for offset in self.prior_offsets_hours]
        if self.include_lead_time:
            names.append("lead_hour")
        return names


def build_features(dataset: Dataset, spec: FeatureSpec, threshold: float = 1.0) -> FeatureMatrix:
    """
    One row per labeled (sample, lead), sample-major then lead.

    A predictor at lag k for lead L takes the forecast at lead L − k, NaN when L − k < 1.

    Raises:
        ConfigurationError: A predictor names a variable absent from the catalog
    """
    spec = spec.resolved(dataset.catalog)
    sample, lead_index = np.nonzero(~np.isnan(dataset.Y))
    lead = lead_index + 1
    columns: List[np.ndarray] = []

    for variable, lag in spec.predictors.entries:
        m = dataset.catalog.index(variable)
        source = lead_index - lag
        column = np.full(len(sample), np.nan, dtype=np.float32)
        ok = source >= 0
        column[ok] = dataset.X[sample[ok], m, source[ok]]
        columns.append(column)

    if spec.include_location:
        columns += [dataset.lat[sample], dataset.lon[sample]]
    if spec.include_calendar:
        when = dataset.launch[sample] if spec.calendar_source == "launch" else dataset.valid_times()[sample, lead_index]
        parts = calendar_parts(when)
        columns += [parts["hour"], parts["day"], parts["month"]]
    if spec.include_recent_visibility:
        columns += [dataset.prior_vis[sample, i] for i in range(dataset.prior_vis.shape[1])]
    if spec.include_lead_time:
        columns.append(lead)

    manifest = spec.manifest()
    values = (np.column_stack(columns).astype(np.float32) if columns
              else np.empty((len(sample), 0), dtype=np.float32))
    labels = fog_labels(dataset.Y[sample, lead_index], threshold).astype(np.uint8)
    return FeatureMatrix(
        manifest=tuple(manifest),
        values=values.reshape(len(sample), len(manifest)),
        labels=labels,
        weights=np.ones(len(sample), dtype=np.float32),
        station_ids=tuple(dataset.station_ids[i] for i in sample),
        launch=dataset.launch[sample],
        lead=lead.astype(np.uint16),
    )


def chronological_split(matrix: FeatureMatrix, train_years: Sequence[int], val_years: Sequence[int],
                        test_years: Sequence[int]) -> Tuple[FeatureMatrix, FeatureMatrix, FeatureMatrix]:
    """
    Partition rows by launch year so one forecast run never spans two splits.

    Raises:
        ConfigurationError: Year sets overlap
    """
    groups = [set(train_years), set(val_years), set(test_years)]
    for i in range(3):
        for j in range(i + 1, 3):
            shared = groups[i] & groups[j]
            if shared:
                raise ConfigurationError(f"Split year sets overlap on {sorted(shared)}")
    years = matrix.launch_years()
    parts = tuple(matrix.take(np.flatnonzero(np.isin(years, sorted(g)))) for g in groups)
    unassigned = matrix.n_rows - sum(p.n_rows for p in parts)
    if unassigned:
        logger.info(f"{unassigned} rows fall outside every split year set")
    return parts


class FeaturizationComponent(PipelineComponent):
    """Builds the feature matrix from a dataset and a predictor set."""

    def __init__(self, config: PipelineConfig):
        super().__init__(config)
        self.stats = {"rows": 0, "features": 0, "fog_rows": 0, "fog_frequency": 0.0}

    def execute(self, dataset: Dataset, predictors: Optional[PredictorSet] = None) -> FeatureMatrix:
        try:
            self.logger.info("Starting feature construction")
            spec = FeatureSpec.from_settings(self.config.features, predictors or PredictorSet(),
                                             self.config.ingest.prior_offsets_hours)
            matrix = build_features(dataset, spec, self.config.ingest.label_threshold_km)
            matrix = matrix.model_copy(update={"run_config": {
                "config": self.config.resolved(),
                "predictors": [list(p) for p in (predictors or PredictorSet()).entries],
            }})

            self.stats["rows"] = matrix.n_rows
            self.stats["features"] = matrix.n_features
            self.stats["fog_rows"] = int(matrix.labels.sum())
            self.stats["fog_frequency"] = round(matrix.fog_frequency(), 6)
            self._log_summary("Featurization")
            return matrix

        except FogPipelineError:
            raise
        except Exception as e:
            self.logger.error(f"Feature construction failed: {str(e)}")
            raise FogPipelineError(f"Feature construction failed: {str(e)}") from e

    def split(self, matrix: FeatureMatrix) -> Tuple[FeatureMatrix, FeatureMatrix, FeatureMatrix]:
        split = self.config.split
        train, val, test = chronological_split(matrix, split.train_years, split.val_years, split.test_years)
        self.logger.info(f"Split rows: train {train.n_rows}, validation {val.n_rows}, test {test.n_rows}")
        return train, val, test
