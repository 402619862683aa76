"""Configuration management for the sea-fog forecasting pipeline."""

from .models import (
    PipelineConfig,
    IdwConfig,
    TlcaConfig,
    FeatureSettings,
    GbdtConfig,
    EnsembleConfig,
    SynthConfig,
    SynthPeriod,
)

__all__ = [
    "PipelineConfig",
    "IdwConfig",
    "TlcaConfig",
    "FeatureSettings",
    "GbdtConfig",
    "EnsembleConfig",
    "SynthConfig",
    "SynthPeriod",
]
