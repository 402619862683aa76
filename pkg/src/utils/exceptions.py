"""
Custom exceptions for the sea-fog forecasting pipeline.

These provide specific error types that can be caught and handled appropriately
by different parts of the pipeline and reported by the command-line interface.
"""

from typing import Optional


class FogPipelineError(Exception):
    """Base exception for all pipeline-related errors."""
    pass


class ConfigurationError(FogPipelineError):
    """Raised when configuration is invalid, inconsistent, or references unknown names."""
    pass


class InputError(FogPipelineError):
    """Raised when an input value is outside its documented domain."""
    pass


class IngestionError(FogPipelineError):
    """Raised when observation or grid files cannot be parsed or validated."""
    pass


class InterpolationError(IngestionError):
    """Raised when a field has too few usable nodes for inverse distance weighting."""
    pass


class EmptyDatasetError(FogPipelineError):
    """Raised when an operation is left with no rows to work on."""
    pass


class InsufficientDataError(FogPipelineError):
    """Raised when a statistic needs more paired values than are available."""
    pass


class UndefinedCorrelationError(FogPipelineError):
    """Raised when a correlation is requested for a constant sequence."""
    pass


class NumericError(FogPipelineError):
    """Raised when a probability falls outside the open unit interval."""
    pass


class TrainingError(FogPipelineError):
    """Raised when model training cannot proceed."""
    pass


class EnsembleTrainingError(TrainingError):
    """Raised when one ensemble member fails to train."""

    def __init__(self, member_index: int, message: str):
        super().__init__(f"ensemble member {member_index} failed: {message}")
        self.member_index = member_index


class ManifestMismatchError(FogPipelineError):
    """Raised when incoming features do not match a model's feature manifest."""
    pass


class ContainerFormatError(FogPipelineError):
    """Raised when a binary dataset or feature container is malformed."""
    pass


class ModelFormatError(FogPipelineError):
    """Raised when a model or ensemble file is malformed or has an unknown version."""
    pass


class SynthesisError(FogPipelineError):
    """Raised when a synthetic-data configuration cannot be realized."""

    def __init__(self, message: str, achievable: Optional[tuple] = None):
        super().__init__(message)
        self.achievable = achievable
