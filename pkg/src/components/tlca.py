"""
Time-lagged correlation analysis for predictor selection.

Pairs the visibility observed at each labeled valid time with every variable's forecast
at the same lead and at each of the preceding ``max_lag`` lead hours, computes Pearson r
per (variable, lag) cell, tests it with a two-sided Student-t test and keeps the
significant cells as predictors.
"""

import math
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import special

from src.components.base import PipelineComponent
from src.config import PipelineConfig, TlcaConfig
from src.models import CorrelationCell, Dataset, LaggedCorrelationTable, PredictorSet, fog_labels
from src.models.data import calendar_parts, format_score
from src.utils import (
    EmptyDatasetError,
    FogPipelineError,
    InsufficientDataError,
    UndefinedCorrelationError,
    get_logger,
)
from src.utils.io import atomic_output, write_run_sidecar

logger = get_logger(__name__)


class Significance(NamedTuple):
    p_value: float
    significant: bool
    exact: bool


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Sample Pearson correlation with pairwise deletion of missing values.

    Raises:
        InsufficientDataError: Fewer than three complete pairs
        UndefinedCorrelationError: Either sequence is constant
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"Sequences differ in length: {x.shape} vs {y.shape}")
    keep = ~(np.isnan(x) | np.isnan(y))
    x, y = x[keep], y[keep]
    if len(x) < 3:
        raise InsufficientDataError(f"Pearson correlation needs at least 3 pairs, got {len(x)}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError("Pearson correlation is undefined for constant input")
    dx = x - x.mean()
    dy = y - y.mean()
    r = np.dot(dx, dy) / math.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    return float(min(1.0, max(-1.0, r)))


def significance(r: float, n: int, alpha: float = 0.05) -> Significance:
    """
    Two-sided Student-t test of a Pearson r.

    t = r·sqrt((n−2)/(1−r²)) with n−2 degrees of freedom; the p-value comes from the
    regularized incomplete beta function. |r| = 1 gives p = 0 flagged exact.
    """
    if n < 3:
        raise InsufficientDataError(f"Significance test needs n ≥ 3, got {n}")
    if abs(r) >= 1.0:
        return Significance(0.0, 0.0 < alpha, True)
    df = n - 2
    t_squared = r * r * df / (1.0 - r * r)
    p_value = float(special.betainc(df / 2.0, 0.5, df / (df + t_squared)))
    p_value = min(1.0, max(0.0, p_value))
    return Significance(p_value, p_value < alpha, False)


def _target(dataset: Dataset, cfg: TlcaConfig, threshold: float) -> np.ndarray:
    y = dataset.Y.astype(np.float64)
    if cfg.target == "label":
        y = fog_labels(y, threshold)
    months = calendar_parts(dataset.valid_times().ravel())["month"].reshape(y.shape)
    y[~np.isin(months, cfg.months)] = np.nan
    return y


def _variable_cells(values: np.ndarray, target: np.ndarray, variable: str,
                    cfg: TlcaConfig) -> List[CorrelationCell]:
    """Cells for one variable; values and target are (samples, leads)."""
    cells = []
    for lag in range(cfg.max_lag + 1):
        # lead L pairs with the forecast at lead L − lag; leads below lag + 1 have no partner
        x = values[:, : values.shape[1] - lag]
        y = target[:, lag:]
        keep = ~(np.isnan(x) | np.isnan(y))
        n = int(keep.sum())
        try:
            r = pearson(x[keep], y[keep])
            test = significance(r, n, cfg.alpha)
            cells.append(CorrelationCell(variable=variable, lag=lag, r=r, n=n, p_value=test.p_value,
                                         significant=test.significant, exact=test.exact))
        except (InsufficientDataError, UndefinedCorrelationError) as e:
            logger.debug(f"Cell ({variable}, lag {lag}) undefined: {e}")
            cells.append(CorrelationCell(variable=variable, lag=lag, r=math.nan, n=n, p_value=1.0,
                                         significant=False))
    return cells


def lagged_correlations(dataset: Dataset, cfg: TlcaConfig, threshold: float = 1.0,
                        workers: int = 1) -> LaggedCorrelationTable:
    """
    Correlate every catalog variable at lags 0..max_lag with the observed target.

    Args:
        dataset: Assembled dataset
        cfg: Lag, significance and month-filter settings
        threshold: Fog threshold, used when the target is the binary label
        workers: Threads computing variables concurrently

    Returns:
        Table in catalog order, lags ascending

    Raises:
        EmptyDatasetError: No labeled valid time falls in the month filter
    """
    if cfg.max_lag >= dataset.horizon:
        raise ValueError(f"max_lag {cfg.max_lag} must be below the horizon {dataset.horizon}")
    target = _target(dataset, cfg, threshold)
    if np.isnan(target).all():
        raise EmptyDatasetError(f"No labeled valid times in months {cfg.months}")

    names = dataset.catalog.names
    per_variable = Parallel(n_jobs=workers, prefer="threads")(
        delayed(_variable_cells)(dataset.X[:, m, :].astype(np.float64), target, name, cfg)
        for m, name in enumerate(names)
    )
    cells = [cell for group in per_variable for cell in group]
    return LaggedCorrelationTable(cells=cells, alpha=cfg.alpha, max_lag=cfg.max_lag)


def select_predictors(table: LaggedCorrelationTable, cfg: Optional[TlcaConfig] = None) -> PredictorSet:
    """
    Keep every significant (variable, lag) cell.

    Variables are ranked by their largest significant |r| (catalog order on ties); each
    variable's cells follow in ascending lag. ``cfg.max_variables`` caps the variable count.
    """
    order = {name: i for i, name in enumerate(table.variables())}
    strongest = {}
    for cell in table.cells:
        if cell.significant:
            strongest[cell.variable] = max(strongest.get(cell.variable, 0.0), abs(cell.r))
    ranked = sorted(strongest, key=lambda v: (-strongest[v], order[v]))
    if cfg is not None and cfg.max_variables is not None:
        ranked = ranked[: cfg.max_variables]

    entries: List[Tuple[str, int]] = []
    for variable in ranked:
        entries.extend((variable, c.lag) for c in table.cells if c.variable == variable and c.significant)
    if not entries:
        logger.warning("No (variable, lag) cell passed the significance test")
    return PredictorSet(entries=entries)


def write_correlation_table(table: LaggedCorrelationTable, path: Union[str, Path]) -> None:
    """Write ``variable,lag,r,n,p_value,significant``; undefined r prints as NA."""
    with atomic_output(path, "w") as handle:
        handle.write("variable,lag,r,n,p_value,significant\n")
        for c in table.cells:
            handle.write(f"{c.variable},{c.lag},{format_score(c.r)},{c.n},{c.p_value!r},"
                         f"{'true' if c.significant else 'false'}\n")


def write_predictors(predictors: PredictorSet, path: Union[str, Path]) -> None:
    with atomic_output(path, "w") as handle:
        handle.write("variable,lag\n")
        for variable, lag in predictors.entries:
            handle.write(f"{variable},{lag}\n")


class TlcaComponent(PipelineComponent):
    """Runs the correlation analysis and predictor selection."""

    def __init__(self, config: PipelineConfig):
        super().__init__(config)
        self.stats = {
            "cells": 0,
            "undefined_cells": 0,
            "significant_cells": 0,
            "variables_retained": 0,
        }

    def execute(self, dataset: Dataset) -> Tuple[LaggedCorrelationTable, PredictorSet]:
        """
        Execute the analysis on a dataset.

        Returns:
            The full correlation table and the selected predictors
        """
        try:
            cfg = self.config.tlca
            self.logger.info(f"Starting lagged correlation analysis (max lag {cfg.max_lag}, alpha {cfg.alpha})")
            table = lagged_correlations(dataset, cfg, self.config.ingest.label_threshold_km,
                                        self.config.project.workers)
            predictors = select_predictors(table, cfg)

            self.stats["cells"] = len(table.cells)
            self.stats["undefined_cells"] = sum(math.isnan(c.r) for c in table.cells)
            self.stats["significant_cells"] = sum(c.significant for c in table.cells)
            self.stats["variables_retained"] = len({v for v, _ in predictors.entries})
            self._log_summary("Correlation Analysis")
            for variable in list(dict.fromkeys(v for v, _ in predictors.entries))[:10]:
                self.logger.info(f"{variable}: strongest at lag {table.strongest_lag(variable)}")
            return table, predictors

        except FogPipelineError:
            raise
        except Exception as e:
            self.logger.error(f"Correlation analysis failed: {str(e)}")
            raise FogPipelineError(f"Correlation analysis failed: {str(e)}") from e

    def write(self, table: LaggedCorrelationTable, predictors: PredictorSet,
              table_path: Path, predictors_path: Path) -> None:
        """Write both CSVs with their run sidecars."""
        write_correlation_table(table, table_path)
        write_predictors(predictors, predictors_path)
        run = {"config": self.config.resolved()}
        write_run_sidecar(table_path, run)
        write_run_sidecar(predictors_path, run)
