"""Pipeline components for sea-fog forecasting."""

from .base import PipelineComponent
from .ingestion import FogIngestionComponent
from .tlca import TlcaComponent
from .featurization import FeaturizationComponent
from .ensemble import EnsembleTrainingComponent
from .verification import VerificationComponent
from .synthesis import SynthesisComponent
from .ablation import AblationComponent

__all__ = [
    "PipelineComponent",
    "FogIngestionComponent",
    "TlcaComponent",
    "FeaturizationComponent",
    "EnsembleTrainingComponent",
    "VerificationComponent",
    "SynthesisComponent",
    "AblationComponent",
]
