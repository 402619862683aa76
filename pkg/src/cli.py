"""
Command-line interface for the sea-fog forecasting toolkit.

Every stage reads and writes files, so stages can be run and tested on their own:

    python -m src.cli synth --out-dir data/synth
    python -m src.cli ingest --obs data/synth/observations.csv --grid data/synth/grid.csv \\
        --catalog data/synth/catalog.yaml --out data/dataset.fogd
    python -m src.cli tlca --dataset data/dataset.fogd --out reports/correlations.csv
    python -m src.cli featurize --dataset data/dataset.fogd --predictors reports/correlations.predictors.csv \\
        --out data/features.fogf
    python -m src.cli train --features data/features.fogf --out models/ensemble.txt
    python -m src.cli predict --model models/ensemble.txt --features data/features.fogf --out reports/predictions.csv
    python -m src.cli evaluate --pred reports/predictions.csv --out reports/scores.csv

Failures print one JSON object on stderr and exit with 2 for usage errors, 1 otherwise.
"""

import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import pandas as pd

from src import __version__
from src.components import (
    AblationComponent,
    EnsembleTrainingComponent,
    FeaturizationComponent,
    FogIngestionComponent,
    SynthesisComponent,
    TlcaComponent,
    VerificationComponent,
)
from src.components.ablation import AblationPlan
from src.components.ensemble import ENSEMBLE_HEADER, load_predictor, save_ensemble
from src.components.gbdt import MODEL_HEADER
from src.components.ingestion import parse_observations
from src.components.storage import (
    FOGD_VERSION,
    FOGF_VERSION,
    export_csv,
    export_parquet,
    load_dataset,
    load_features,
    predictions_frame,
    save_dataset,
    save_features,
    write_predictions,
)
from src.components.verification import observed_labels, read_pairing, score_external
from src.config import PipelineConfig
from src.models import PredictorSet, VariableCatalog
from src.utils import FogPipelineError, get_logger, setup_logging
from src.utils.io import remove_quietly, write_run_sidecar

logger = get_logger(__name__)

DEFAULT_CONFIG = Path("config/default.yaml")
EXISTING_FILE = click.Path(exists=True, dir_okay=False)


class CliState:
    """Global options plus the outputs a command has started to write."""

    def __init__(self, config_path: Optional[str], overrides: Dict[str, Any]):
        self.config_path = config_path
        self.overrides = overrides
        self.command = "fogcast"
        self.outputs: List[Path] = []

    def load(self, overrides: Optional[Dict[str, Any]] = None, config_path: Optional[str] = None) -> PipelineConfig:
        """Resolve the run configuration; command flags win over global flags, which win over the file."""
        path = config_path or self.config_path
        if path:
            config = PipelineConfig.from_yaml(path)
        elif DEFAULT_CONFIG.exists():
            config = PipelineConfig.from_yaml(DEFAULT_CONFIG)
        else:
            config = PipelineConfig()
        config = config.with_overrides({**self.overrides, **(overrides or {})})
        setup_logging(config.project.log_level, config.project.log_file, stream=sys.stderr)
        return config

    def produces(self, *paths) -> List[Path]:
        resolved = [Path(p) for p in paths if p is not None]
        self.outputs.extend(resolved)
        for path in resolved:
            self.outputs.append(Path(f"{path}.run.json"))
        return resolved


_state: Optional[CliState] = None


def _begin(ctx: click.Context) -> CliState:
    state = ctx.find_object(CliState)
    state.command = ctx.command_path.split(" ", 1)[-1]
    return state


def parse_int_list(text: Optional[str]) -> Optional[List[int]]:
    """Parse ``"2018"``, ``"2018,2019"`` or a range such as ``"3-7"``."""
    if text is None:
        return None
    values: List[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                low, high = (int(p) for p in part.split("-", 1))
                if high < low:
                    raise ValueError(part)
                values.extend(range(low, high + 1))
            elif part:
                values.append(int(part))
    except ValueError as e:
        raise click.BadParameter(f"expected integers or a range like 3-7, got {text!r}") from e
    if not values:
        raise click.BadParameter("expected at least one value")
    return values


def _print_version(ctx: click.Context, _param, value: bool) -> None:
    if not value or ctx.resilient_parsing:
        return
    click.echo(f"fogcast {__version__}")
    click.echo(f"dataset container FOGD v{FOGD_VERSION}")
    click.echo(f"feature container FOGF v{FOGF_VERSION}")
    click.echo(f"model file {MODEL_HEADER}")
    click.echo(f"ensemble file {ENSEMBLE_HEADER}")
    ctx.exit(0)


@click.group()
@click.option("--config", "config_path", type=EXISTING_FILE, default=None,
              help="Pipeline configuration YAML (default: config/default.yaml when present)")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Worker count; 1 is bit-exact")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=None)
@click.option("--version", is_flag=True, expose_value=False, is_eager=True, callback=_print_version,
              help="Print the package version and every file format version")
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[str], workers: Optional[int], log_level: Optional[str]):
    """Sea-fog station forecasting: ingest, correlate, featurize, train, predict and verify."""
    global _state
    _state = CliState(config_path, {
        "project.workers": workers,
        "project.log_level": log_level.upper() if log_level else None,
    })
    ctx.obj = _state


@cli.command()
@click.option("--obs", "obs_path", type=EXISTING_FILE, required=True, help="Observations CSV")
@click.option("--grid", "grid_path", type=EXISTING_FILE, required=True, help="Long-form grid CSV")
@click.option("--catalog", "catalog_path", type=EXISTING_FILE, default=None,
              help="Variable catalog YAML (default: the configured catalog)")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Dataset container (.fogd)")
@click.pass_context
def ingest(ctx, obs_path, grid_path, catalog_path, out):
    """Interpolate grids to stations and assemble the labelled dataset."""
    state = _begin(ctx)
    config = state.load()
    state.produces(out)
    catalog = VariableCatalog.from_yaml(catalog_path) if catalog_path else None
    dataset = FogIngestionComponent(config).execute(Path(obs_path), Path(grid_path), catalog)
    save_dataset(dataset, out)
    click.echo(f"Wrote {dataset.n_samples} samples to {out}")


@cli.command()
@click.option("--dataset", "dataset_path", type=EXISTING_FILE, required=True)
@click.option("--max-lag", type=int, default=None, help="Maximum lag in hours")
@click.option("--alpha", type=float, default=None, help="Significance level")
@click.option("--months", default=None, help="Months to correlate, e.g. 3-7")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Correlation table CSV")
@click.option("--predictors-out", type=click.Path(dir_okay=False), default=None,
              help="Predictor set CSV (default: <out stem>.predictors.csv)")
@click.pass_context
def tlca(ctx, dataset_path, max_lag, alpha, months, out, predictors_out):
    """Run the lagged correlation analysis and select predictors."""
    state = _begin(ctx)
    config = state.load({"tlca.max_lag": max_lag, "tlca.alpha": alpha, "tlca.months": parse_int_list(months)})
    out = Path(out)
    predictors_out = Path(predictors_out) if predictors_out else out.with_name(f"{out.stem}.predictors.csv")
    state.produces(out, predictors_out)
    component = TlcaComponent(config)
    table, predictors = component.execute(load_dataset(dataset_path))
    component.write(table, predictors, out, predictors_out)
    click.echo(f"Selected {len(predictors)} predictors; wrote {out} and {predictors_out}")


@cli.command()
@click.option("--dataset", "dataset_path", type=EXISTING_FILE, required=True)
@click.option("--predictors", "predictors_path", type=EXISTING_FILE, default=None,
              help="Predictor set CSV from tlca (default: no NWP predictors)")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Feature container (.fogf)")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None, help="Also export as CSV")
@click.option("--parquet", "parquet_dir", type=click.Path(file_okay=False), default=None,
              help="Also export as parquet partitioned by launch year")
@click.pass_context
def featurize(ctx, dataset_path, predictors_path, out, csv_path, parquet_dir):
    """Build the feature matrix."""
    state = _begin(ctx)
    config = state.load()
    state.produces(out, csv_path)
    if parquet_dir and not Path(parquet_dir).exists():
        state.outputs.append(Path(parquet_dir))
    predictors = PredictorSet.from_csv(predictors_path) if predictors_path else None
    matrix = FeaturizationComponent(config).execute(load_dataset(dataset_path), predictors)
    save_features(matrix, out)
    if csv_path:
        export_csv(matrix, csv_path)
        write_run_sidecar(csv_path, matrix.run_config)
    if parquet_dir:
        export_parquet(matrix, parquet_dir)
    click.echo(f"Wrote {matrix.n_rows} rows × {matrix.n_features} features to {out}")


@cli.command()
@click.option("--features", "features_path", type=EXISTING_FILE, required=True)
@click.option("--val-years", default=None, help="Validation launch years, e.g. 2018")
@click.option("--objective", default=None, help="'ce' or 'focal:<alpha>:<gamma>[:printed]'")
@click.option("--ensemble", "members", type=click.IntRange(min=1), default=None, help="Ensemble size")
@click.option("--strategy", type=click.Choice(["none", "undersample", "oversample"]), default=None)
@click.option("--ratio", type=float, default=None, help="Target fog fraction per member")
@click.option("--seed", type=click.IntRange(min=0), default=None)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Ensemble file")
@click.pass_context
def train(ctx, features_path, val_years, objective, members, strategy, ratio, seed, out):
    """Train the boosted-tree ensemble on the training years."""
    state = _begin(ctx)
    config = state.load({
        "split.val_years": parse_int_list(val_years),
        "objective.name": objective,
        "ensemble.members": members,
        "ensemble.strategy": strategy,
        "ensemble.target_ratio": ratio,
        "project.seed": seed,
    })
    state.produces(out)
    train_matrix, val_matrix, _ = FeaturizationComponent(config).split(load_features(features_path))
    model = EnsembleTrainingComponent(config).execute(train_matrix, val_matrix if val_matrix.n_rows else None)
    save_ensemble(model, out)
    click.echo(f"Wrote {len(model.members)}-member ensemble to {out}")


@cli.command()
@click.option("--model", "model_path", type=EXISTING_FILE, required=True, help="Ensemble or single model file")
@click.option("--features", "features_path", type=EXISTING_FILE, required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Predictions CSV")
@click.pass_context
def predict(ctx, model_path, features_path, out):
    """Predict fog probabilities and labels for every feature row."""
    state = _begin(ctx)
    config = state.load()
    state.produces(out)
    model = load_predictor(model_path)
    matrix = load_features(features_path)
    probabilities = model.predict_proba(matrix)
    write_predictions(predictions_frame(matrix, probabilities, model.config.threshold), out)
    write_run_sidecar(out, {
        "config": config.resolved(),
        "inputs": {"model": Path(model_path).name, "features": Path(features_path).name},
    })
    click.echo(f"Wrote {matrix.n_rows} predictions to {out}")


def _is_observation_table(path: str) -> bool:
    return "visibility_km" in pd.read_csv(path, nrows=0).columns


@cli.command()
@click.option("--pred", "pred_path", type=EXISTING_FILE, required=True, help="Predictions or pairing CSV")
@click.option("--obs", "obs_path", type=EXISTING_FILE, default=None,
              help="Observations CSV or a pairing CSV with observed labels")
@click.option("--far", "far_definition", type=click.Choice(["paper", "conventional"]), default=None)
@click.option("--averaging", type=click.Choice(["pooled", "per_lead"]), default=None)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Lead-time score table CSV")
@click.pass_context
def evaluate(ctx, pred_path, obs_path, far_definition, averaging, out):
    """Score forecast labels against observed labels by lead time."""
    state = _begin(ctx)
    config = state.load({"verify.far_definition": far_definition, "verify.averaging": averaging})
    state.produces(out)
    verify = config.verify
    inputs = {"pred": Path(pred_path).name}
    if obs_path:
        inputs["obs"] = Path(obs_path).name

    component = VerificationComponent(config)
    if obs_path and _is_observation_table(obs_path):
        ingest_cfg = config.ingest
        observations = parse_observations(obs_path, ingest_cfg.obs_cadence_hours, ingest_cfg.study_area)
        pairs = observed_labels(read_pairing(pred_path), observations, ingest_cfg.label_threshold_km,
                                ingest_cfg.label_mode, ingest_cfg.fog_weather_codes)
        report = component.execute(pairs)
    elif obs_path:
        external = score_external(pred_path, obs_path, verify.stride_hours, verify.horizons,
                                  verify.averaging, verify.far_definition)
        inputs["matched"] = str(external.matched)
        report = external.report
    else:
        report = component.execute(read_pairing(pred_path))
    component.write(report, out, inputs)
    for row in report.aggregates:
        formatted = row.scores.formatted()
        click.echo(f"{row.label}: POD {formatted['pod']} FAR {formatted['far']} "
                   f"ETS {formatted['ets']} HSS {formatted['hss']}")


@cli.group()
def baseline():
    """Reference forecasts scored like the model."""


@baseline.command("fsl")
@click.option("--dataset", "dataset_path", type=EXISTING_FILE, required=True)
@click.option("--far", "far_definition", type=click.Choice(["paper", "conventional"]), default=None)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Lead-time score table CSV")
@click.pass_context
def baseline_fsl(ctx, dataset_path, far_definition, out):
    """Score the FSL visibility diagnostic from 2 m temperature, dew point and humidity."""
    state = _begin(ctx)
    config = state.load({"verify.far_definition": far_definition})
    state.produces(out)
    component = VerificationComponent(config)
    report = component.baseline(load_dataset(dataset_path))
    component.write(report, out, {"dataset": Path(dataset_path).name})
    click.echo(f"Wrote FSL scores to {out}")


@cli.command()
@click.option("--config", "synth_config", type=EXISTING_FILE, default=None,
              help="Configuration whose synth section drives the generator")
@click.option("--seed", type=click.IntRange(min=0), default=None)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def synth(ctx, synth_config, seed, out_dir):
    """Write a seeded synthetic observation and grid set with its truth manifest."""
    state = _begin(ctx)
    config = state.load({"synth.seed": seed}, config_path=synth_config)
    out_dir = Path(out_dir)
    for name in ("observations.csv", "grid.csv", "catalog.yaml", "truth.json"):
        state.outputs.append(out_dir / name)
    result = SynthesisComponent(config).execute(out_dir)
    click.echo(f"Wrote synthetic set to {out_dir} (rule fog frequency "
               f"{result.truth['rule_fog_frequency']:.4f})")


@cli.command()
@click.option("--plan", "plan_path", type=EXISTING_FILE, default="config/ablation_plan.yaml", show_default=True)
@click.option("--dataset", "dataset_path", type=EXISTING_FILE, required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Comparison table CSV")
@click.pass_context
def ablate(ctx, plan_path, dataset_path, out):
    """Run predictor-set, objective and strategy comparisons into one table."""
    state = _begin(ctx)
    config = state.load()
    state.produces(out)
    plan = AblationPlan.from_yaml(plan_path)
    component = AblationComponent(config)
    outcomes = component.execute(load_dataset(dataset_path), plan)
    component.write(outcomes, out, plan)
    click.echo(f"Wrote {len(outcomes)} ablation rows to {out}")


def _fail(error: BaseException, command: str, code: int) -> int:
    message = error.format_message() if isinstance(error, click.ClickException) else str(error)
    click.echo(json.dumps({"error": type(error).__name__, "message": message, "command": command}), err=True)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and map failures to exit codes; partial outputs are removed on failure."""
    global _state
    _state = None
    try:
        result = cli.main(args=argv, prog_name="fogcast", standalone_mode=False)
        return result if isinstance(result, int) else 0
    except click.UsageError as e:
        if e.ctx is not None:
            command = e.ctx.command_path.split(" ", 1)[-1]
        else:
            command = _state.command if _state else "fogcast"
        return _fail(e, command, 2)
    except (FogPipelineError, OSError, ValueError, click.ClickException, click.Abort) as e:
        command = _state.command if _state else "fogcast"
        if _state:
            remove_quietly(*_state.outputs)
        if isinstance(e, FogPipelineError):
            logger.error(f"{command} failed: {e}")
        return _fail(e, command, 1)


if __name__ == "__main__":
    sys.exit(main())
