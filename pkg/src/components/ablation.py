"""
Ablation harness: predictor sets × objectives × learning strategies.

Every plan row trains on the training years (early-stopping on the validation years) and
is scored on the test years, with confusion counts pooled over the full lead horizon.
"""

from pathlib import Path
from typing import Dict, List, Literal, NamedTuple, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field

from src.components.base import PipelineComponent
from src.components.ensemble import partition_resample, train_ensemble
from src.components.featurization import FeatureSpec, build_features, chronological_split
from src.components.objectives import parse_objective
from src.components.tlca import lagged_correlations, select_predictors
from src.components.verification import confusion, scores
from src.config import EnsembleConfig, PipelineConfig
from src.models import ConfusionMatrix, Dataset, FeatureMatrix, PredictorSet, ScoreSet
from src.models.data import calendar_parts, format_score
from src.utils import ConfigurationError, EmptyDatasetError, FogPipelineError, get_logger
from src.utils.io import atomic_output, write_run_sidecar

logger = get_logger(__name__)

ABLATION_COLUMNS = ["group", "label", "pod", "far", "far_conventional", "ets", "hss", "a", "b", "c", "d"]

PredictorChoice = Literal["all_lag0", "all_lagged", "tlca"]
StrategyChoice = Literal["single", "ensemble_undersample", "ensemble_oversample", "undersample", "oversample"]


class AblationRow(BaseModel):
    """One experiment of the plan."""
    model_config = ConfigDict(extra='forbid', frozen=True)

    group: str
    label: str
    predictors: PredictorChoice = "tlca"
    objective: str = "focal:0.2:4"
    strategy: StrategyChoice = "ensemble_undersample"


class AblationPlan(BaseModel):
    model_config = ConfigDict(extra='forbid')

    rows: List[AblationRow] = Field(..., min_length=1)

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "AblationPlan":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Ablation plan not found: {path}")
        with open(path, 'r') as f:
            document = yaml.safe_load(f) or {}
        try:
            plan = cls(**document)
        except ValueError as e:
            raise ConfigurationError(f"Invalid ablation plan {path}: {e}") from e
        for row in plan.rows:
            parse_objective(row.objective)
        return plan


class AblationOutcome(NamedTuple):
    row: AblationRow
    matrix: ConfusionMatrix
    scores: ScoreSet


def strategy_config(strategy: str, base: EnsembleConfig) -> EnsembleConfig:
    """Ensemble settings for a plan strategy; the non-ensemble strategies train one member."""
    members = base.members if strategy.startswith("ensemble_") else 1
    resample = {"single": "none"}.get(strategy, strategy.replace("ensemble_", ""))
    return base.model_copy(update={"members": members, "strategy": resample})


def predictor_set(choice: str, dataset: Dataset, config: PipelineConfig) -> PredictorSet:
    """
    Resolve a predictor-set choice.

    ``tlca`` runs the correlation analysis on training-year samples only.
    """
    names = dataset.catalog.names
    if choice == "all_lag0":
        return PredictorSet(entries=[(name, 0) for name in names])
    if choice == "all_lagged":
        lags = range(config.tlca.max_lag + 1)
        return PredictorSet(entries=[(name, lag) for name in names for lag in lags])
    years = calendar_parts(dataset.launch)["year"]
    training = dataset.take(np.isin(years, config.split.train_years))
    if training.n_samples == 0:
        raise EmptyDatasetError(f"No samples in training years {config.split.train_years}")
    table = lagged_correlations(training, config.tlca, config.ingest.label_threshold_km, config.project.workers)
    return select_predictors(table, config.tlca)


def run_row(row: AblationRow, splits: Tuple[FeatureMatrix, FeatureMatrix, FeatureMatrix],
            config: PipelineConfig) -> AblationOutcome:
    train_matrix, val_matrix, test_matrix = splits
    if test_matrix.n_rows == 0:
        raise EmptyDatasetError(f"No test rows for ablation row {row.label!r}")
    objective = parse_objective(row.objective, config.objective.prob_clip, config.objective.hess_floor)
    ensemble_cfg = strategy_config(row.strategy, config.member_ensemble())
    subsets = partition_resample(train_matrix, ensemble_cfg)
    model = train_ensemble(train_matrix, subsets, objective, config.member_gbdt(), ensemble_cfg,
                           val_matrix if val_matrix.n_rows else None, config.project.workers)
    horizon = max(config.verify.horizons)
    scored = test_matrix.take(np.flatnonzero(test_matrix.lead <= horizon))
    forecast = model.classify(scored)
    cm = confusion(forecast, scored.labels)
    return AblationOutcome(row, cm, scores(cm, config.verify.far_definition))


def run_ablation(dataset: Dataset, plan: AblationPlan, config: PipelineConfig) -> List[AblationOutcome]:
    """Run every plan row; feature matrices are built once per predictor-set choice."""
    splits: Dict[str, Tuple[FeatureMatrix, FeatureMatrix, FeatureMatrix]] = {}
    outcomes = []
    for row in plan.rows:
        if row.predictors not in splits:
            predictors = predictor_set(row.predictors, dataset, config)
            spec = FeatureSpec.from_settings(config.features, predictors, config.ingest.prior_offsets_hours)
            matrix = build_features(dataset, spec, config.ingest.label_threshold_km)
            split = config.split
            splits[row.predictors] = chronological_split(matrix, split.train_years, split.val_years,
                                                         split.test_years)
        outcome = run_row(row, splits[row.predictors], config)
        formatted = outcome.scores.formatted()
        logger.info(f"[{row.group}] {row.label}: POD {formatted['pod']}, FAR {formatted['far']}, "
                    f"ETS {formatted['ets']}, HSS {formatted['hss']}")
        outcomes.append(outcome)
    return outcomes


def write_ablation(outcomes: List[AblationOutcome], path: Union[str, Path]) -> None:
    def quoted(text: str) -> str:
        return f'"{text}"' if "," in text or '"' in text else text

    with atomic_output(path, "w") as handle:
        handle.write(",".join(ABLATION_COLUMNS) + "\n")
        for outcome in outcomes:
            s, m = outcome.scores, outcome.matrix
            values = [quoted(outcome.row.group), quoted(outcome.row.label)]
            values += [format_score(v) for v in (s.pod, s.far, s.far_conventional, s.ets, s.hss)]
            values += [str(m.a), str(m.b), str(m.c), str(m.d)]
            handle.write(",".join(values) + "\n")


class AblationComponent(PipelineComponent):
    """Runs an ablation plan against one dataset."""

    def __init__(self, config: PipelineConfig):
        super().__init__(config)
        self.stats = {"rows": 0, "predictor_sets": 0}

    def execute(self, dataset: Dataset, plan: AblationPlan) -> List[AblationOutcome]:
        try:
            self.logger.info(f"Running {len(plan.rows)} ablation rows")
            outcomes = run_ablation(dataset, plan, self.config)
            self.stats["rows"] = len(outcomes)
            self.stats["predictor_sets"] = len({row.predictors for row in plan.rows})
            self._log_summary("Ablation")
            return outcomes

        except FogPipelineError:
            raise
        except Exception as e:
            self.logger.error(f"Ablation failed: {str(e)}")
            raise FogPipelineError(f"Ablation failed: {str(e)}") from e

    def write(self, outcomes: List[AblationOutcome], path: Union[str, Path], plan: AblationPlan) -> None:
        write_ablation(outcomes, path)
        write_run_sidecar(path, {"config": self.config.resolved(), "plan": plan.model_dump(mode='json')})
