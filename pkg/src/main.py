"""
Main pipeline orchestrator for sea-fog forecasting.

This module coordinates the execution of all pipeline components:
ingestion -> correlation analysis -> featurization -> training -> prediction -> verification
"""

import time
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np

from src.components import (
    EnsembleTrainingComponent,
    FeaturizationComponent,
    FogIngestionComponent,
    TlcaComponent,
    VerificationComponent,
)
from src.components.ensemble import save_ensemble
from src.components.storage import predictions_frame, save_dataset, save_features, write_predictions
from src.config import PipelineConfig
from src.models import Dataset, PipelineResult, VariableCatalog
from src.models.data import calendar_parts
from src.utils import FogPipelineError, get_logger, setup_logging
from src.utils.io import write_run_sidecar

logger = get_logger(__name__)

ARTIFACT_NAMES = {
    "dataset": "dataset.fogd",
    "correlations": "correlations.csv",
    "predictors": "predictors.csv",
    "features": "features.fogf",
    "model": "ensemble.txt",
    "predictions": "predictions.csv",
    "scores": "scores.csv",
    "baseline_scores": "fsl_scores.csv",
}


class FogForecastPipeline:
    """Main pipeline orchestrator that coordinates all components."""

    def __init__(self, config: PipelineConfig):
        """
        Initialize pipeline with configuration.

        Args:
            config: Pipeline configuration loaded from YAML
        """
        self.config = config

        # Components are injected
        self.ingestion: Optional[FogIngestionComponent] = None
        self.tlca: Optional[TlcaComponent] = None
        self.featurization: Optional[FeaturizationComponent] = None
        self.training: Optional[EnsembleTrainingComponent] = None
        self.verification: Optional[VerificationComponent] = None

    def set_components(
        self,
        ingestion: FogIngestionComponent,
        tlca: TlcaComponent,
        featurization: FeaturizationComponent,
        training: EnsembleTrainingComponent,
        verification: VerificationComponent,
    ):
        """Set pipeline components."""
        self.ingestion = ingestion
        self.tlca = tlca
        self.featurization = featurization
        self.training = training
        self.verification = verification

    @classmethod
    def with_default_components(cls, config: PipelineConfig) -> "FogForecastPipeline":
        pipeline = cls(config)
        pipeline.set_components(
            FogIngestionComponent(config),
            TlcaComponent(config),
            FeaturizationComponent(config),
            EnsembleTrainingComponent(config),
            VerificationComponent(config),
        )
        return pipeline

    def execute(self, obs_path: Union[str, Path], grid_path: Union[str, Path], out_dir: Union[str, Path],
                catalog: Optional[VariableCatalog] = None) -> PipelineResult:
        """
        Run every stage and write the artifacts into ``out_dir``.

        Args:
            obs_path: Observations CSV
            grid_path: Long-form grid CSV
            out_dir: Artifact directory
            catalog: Variable catalog, defaults to the configured one

        Returns:
            Pipeline execution results; failures are reported in ``errors``
        """
        start_time = time.time()
        out_dir = Path(out_dir)
        artifacts: Dict[str, Path] = {name: out_dir / file for name, file in ARTIFACT_NAMES.items()}
        split = self.config.split

        try:
            if not all([self.ingestion, self.tlca, self.featurization, self.training, self.verification]):
                raise ValueError("All pipeline components must be set before execution")

            logger.info(f"Starting pipeline: {self.config.pipeline.name}")

            logger.info("Step 1: Data Ingestion")
            dataset = self.ingestion.execute(Path(obs_path), Path(grid_path), catalog)
            save_dataset(dataset, artifacts["dataset"])

            logger.info("Step 2: Lagged Correlation Analysis")
            years_mask = _launch_years_in(dataset, split.train_years)
            table, predictors = self.tlca.execute(dataset.take(years_mask))
            self.tlca.write(table, predictors, artifacts["correlations"], artifacts["predictors"])

            logger.info("Step 3: Featurization")
            matrix = self.featurization.execute(dataset, predictors)
            save_features(matrix, artifacts["features"])
            train_matrix, val_matrix, test_matrix = self.featurization.split(matrix)

            logger.info("Step 4: Training")
            model = self.training.execute(train_matrix, val_matrix if val_matrix.n_rows else None)
            save_ensemble(model, artifacts["model"])

            logger.info("Step 5: Prediction and Verification")
            probabilities = model.predict_proba(test_matrix)
            predictions = predictions_frame(test_matrix, probabilities, model.config.threshold)
            write_predictions(predictions, artifacts["predictions"])
            write_run_sidecar(artifacts["predictions"], {"config": self.config.resolved()})
            report = self.verification.execute(predictions)
            self.verification.write(report, artifacts["scores"])

            test_dataset = dataset.take(_launch_years_in(dataset, split.test_years))
            baseline = self.verification.baseline(test_dataset)
            self.verification.write(baseline, artifacts["baseline_scores"])

            return PipelineResult(
                success=True,
                samples_assembled=dataset.n_samples,
                feature_rows=matrix.n_rows,
                predictors=predictors.entries,
                artifacts={name: str(path) for name, path in artifacts.items()},
                test_scores=report.aggregate(max(self.config.verify.horizons)).scores,
                execution_time_seconds=time.time() - start_time,
                train_years=split.train_years,
                val_years=split.val_years,
                test_years=split.test_years,
            )

        except (FogPipelineError, FileNotFoundError, ValueError) as e:
            error_msg = f"Pipeline execution failed: {str(e)}"
            logger.error(error_msg)
            return PipelineResult(
                success=False,
                execution_time_seconds=time.time() - start_time,
                errors=[error_msg],
            )


def _launch_years_in(dataset: Dataset, years: Sequence[int]) -> np.ndarray:
    return np.isin(calendar_parts(dataset.launch)["year"], list(years))


def main():
    """Run the pipeline on a synthetic data directory with the default configuration."""
    config = PipelineConfig.from_yaml(Path("config/default.yaml"))
    setup_logging(config.project.log_level, config.project.log_file)
    data_dir = Path(config.paths.data_dir)
    catalog_path = data_dir / "catalog.yaml"
    catalog = VariableCatalog.from_yaml(catalog_path) if catalog_path.exists() else None

    pipeline = FogForecastPipeline.with_default_components(config)
    result = pipeline.execute(data_dir / "observations.csv", data_dir / "grid.csv",
                              Path(config.paths.reports_dir), catalog)

    print("\nPipeline Execution Summary:")
    print(f"   Success: {result.success}")
    print(f"   Samples assembled: {result.samples_assembled}")
    print(f"   Feature rows: {result.feature_rows}")
    print(f"   Predictors: {len(result.predictors)}")
    print(f"   Execution time: {result.execution_time_seconds:.2f} seconds")
    if result.test_scores:
        for key, value in result.test_scores.formatted().items():
            print(f"   {key.upper()}: {value}")
    if result.errors:
        print(f"   Errors: {', '.join(result.errors)}")


if __name__ == "__main__":
    main()
