"""
Abstract base class for pipeline components.

Every stage receives the resolved pipeline configuration, keeps a ``stats`` dict while it
runs, and logs a summary block when it finishes. Components are injected into the
orchestrator, which keeps them independently testable.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict

from src.config import PipelineConfig
from src.utils import get_logger


class PipelineComponent(ABC):
    """Base class for all pipeline components."""

    def __init__(self, config: PipelineConfig):
        """Initialize component with pipeline configuration."""
        self.config = config
        self.logger = get_logger(self.__class__.__module__)
        self.stats: Dict[str, Any] = {}

    @abstractmethod
    def execute(self, *args, **kwargs) -> Any:
        """Execute the component's main functionality."""
        pass

    def _log_summary(self, stage: str) -> None:
        """Log the component statistics under a stage heading."""
        self.logger.info(f"=== {stage} Summary ===")
        for key, value in self.stats.items():
            self.logger.info(f"{key.replace('_', ' ').title()}: {value}")
