"""Utility modules for the sea-fog forecasting pipeline."""

from .logging import setup_logging, get_logger
from .exceptions import (
    FogPipelineError,
    ConfigurationError,
    InputError,
    IngestionError,
    InterpolationError,
    EmptyDatasetError,
    InsufficientDataError,
    UndefinedCorrelationError,
    NumericError,
    TrainingError,
    EnsembleTrainingError,
    ManifestMismatchError,
    ContainerFormatError,
    ModelFormatError,
    SynthesisError,
)

__all__ = [
    "setup_logging",
    "get_logger",
    "FogPipelineError",
    "ConfigurationError",
    "InputError",
    "IngestionError",
    "InterpolationError",
    "EmptyDatasetError",
    "InsufficientDataError",
    "UndefinedCorrelationError",
    "NumericError",
    "TrainingError",
    "EnsembleTrainingError",
    "ManifestMismatchError",
    "ContainerFormatError",
    "ModelFormatError",
    "SynthesisError",
]
