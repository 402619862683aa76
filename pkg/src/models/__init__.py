"""Domain data models for the sea-fog forecasting pipeline."""

from .data import (
    NWP_VARIABLES,
    UtcTime,
    Station,
    ChannelDescriptor,
    VariableCatalog,
    ObservationTable,
    ForecastGridSet,
    Dataset,
    LabeledSample,
    FeatureMatrix,
    CorrelationCell,
    LaggedCorrelationTable,
    PredictorSet,
    ConfusionMatrix,
    ScoreSet,
    PipelineResult,
    default_catalog,
    derive_channel,
    label_from_visibility,
    fog_labels,
    parse_utc,
    format_utc,
)

__all__ = [
    "NWP_VARIABLES",
    "UtcTime",
    "Station",
    "ChannelDescriptor",
    "VariableCatalog",
    "ObservationTable",
    "ForecastGridSet",
    "Dataset",
    "LabeledSample",
    "FeatureMatrix",
    "CorrelationCell",
    "LaggedCorrelationTable",
    "PredictorSet",
    "ConfusionMatrix",
    "ScoreSet",
    "PipelineResult",
    "default_catalog",
    "derive_channel",
    "label_from_visibility",
    "fog_labels",
    "parse_utc",
    "format_utc",
]
