"""
Tests for the command-line interface.

A module-scoped fixture runs synth → ingest → tlca → featurize → train → predict once on the
small test configuration; individual tests check the artifacts and the remaining commands.
"""

import json
from pathlib import Path

import click
import pandas as pd
import pytest
import yaml

from src.cli import main, parse_int_list
from src.components.ensemble import ENSEMBLE_HEADER, load_ensemble
from src.components.storage import PREDICTION_COLUMNS, load_dataset, load_features
from src.components.verification import REPORT_COLUMNS


def run(*args):
    code = main([str(a) for a in args])
    assert code == 0, f"fogcast {' '.join(map(str, args))} exited with {code}"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, config_data):
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.yaml"
    config.write_text(yaml.safe_dump(config_data(root)))
    paths = {
        "config": config,
        "synth": root / "synth",
        "dataset": root / "dataset.fogd",
        "correlations": root / "correlations.csv",
        "predictors": root / "correlations.predictors.csv",
        "features": root / "features.fogf",
        "features_csv": root / "features.csv",
        "model": root / "ensemble.txt",
        "predictions": root / "predictions.csv",
        "root": root,
    }
    run("--config", config, "synth", "--out-dir", paths["synth"])
    run("--config", config, "ingest", "--obs", paths["synth"] / "observations.csv",
        "--grid", paths["synth"] / "grid.csv", "--catalog", paths["synth"] / "catalog.yaml", "--out", paths["dataset"])
    run("--config", config, "tlca", "--dataset", paths["dataset"], "--out", paths["correlations"])
    run("--config", config, "featurize", "--dataset", paths["dataset"], "--predictors", paths["predictors"],
        "--out", paths["features"], "--csv", paths["features_csv"])
    run("--config", config, "train", "--features", paths["features"], "--out", paths["model"])
    run("--config", config, "predict", "--model", paths["model"], "--features", paths["features"],
        "--out", paths["predictions"])
    return paths


class TestParseIntList:
    def test_values_and_ranges(self):
        assert parse_int_list("2018") == [2018]
        assert parse_int_list("2018, 2019") == [2018, 2019]
        assert parse_int_list("3-5,9") == [3, 4, 5, 9]
        assert parse_int_list(None) is None

    @pytest.mark.parametrize("text", ["a", "7-3", ","])
    def test_invalid(self, text):
        with pytest.raises(click.BadParameter):
            parse_int_list(text)


class TestGlobalOptions:
    """Version and failure reporting."""

    def test_version(self, capsys):
        assert main(["--version"]) == 0

        out = capsys.readouterr().out
        assert out.startswith("fogcast 1.0.0")
        assert "FOGD v1" in out and "FOGF v1" in out
        assert ENSEMBLE_HEADER in out

    def test_missing_option_is_usage_error(self, capsys):
        assert main(["ingest"]) == 2

        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert error["command"] == "ingest"
        assert error["error"] == "MissingParameter"

    def test_unknown_command(self):
        assert main(["forecast"]) == 2

    def test_pipeline_error_removes_partial_output(self, temp_dir, workspace, capsys):
        obs = temp_dir / "obs.csv"
        obs.write_text("not,an,observation,table\n")
        out = temp_dir / "dataset.fogd"

        code = main(["--config", str(workspace["config"]), "ingest", "--obs", str(obs),
                     "--grid", str(workspace["synth"] / "grid.csv"), "--out", str(out)])

        assert code == 1
        assert not out.exists()
        assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["command"] == "ingest"

    def test_failed_parquet_export_removes_partial_tree(self, temp_dir, workspace, monkeypatch):
        def partial_export(matrix, output_dir):
            partition = Path(output_dir) / "launch_year=2017"
            partition.mkdir(parents=True)
            (partition / "part-0.parquet").write_bytes(b"PAR1")
            raise OSError("disk full")

        monkeypatch.setattr("src.cli.export_parquet", partial_export)
        out = temp_dir / "features.fogf"
        parquet_dir = temp_dir / "parquet"

        code = main(["--config", str(workspace["config"]), "featurize", "--dataset", str(workspace["dataset"]),
                     "--out", str(out), "--parquet", str(parquet_dir)])

        assert code == 1
        assert not parquet_dir.exists()
        assert not out.exists()


class TestStageCommands:
    """Artifacts of the chained stage commands."""

    def test_synth_outputs(self, workspace):
        for name in ("observations.csv", "grid.csv", "catalog.yaml", "truth.json"):
            assert (workspace["synth"] / name).exists()

    def test_dataset(self, workspace):
        dataset = load_dataset(workspace["dataset"])

        assert dataset.n_samples == 48
        assert dataset.horizon == 24
        assert dataset.run_config

    def test_tlca_outputs(self, workspace):
        table = pd.read_csv(workspace["correlations"])

        assert list(table.columns[:3]) == ["variable", "lag", "r"]
        assert len(table) == 10 * 6
        assert workspace["predictors"].exists()
        assert workspace["correlations"].with_name("correlations.csv.run.json").exists()

    def test_features(self, workspace):
        matrix = load_features(workspace["features"])
        exported = pd.read_csv(workspace["features_csv"])

        assert len(exported) == matrix.n_rows
        assert matrix.manifest[-1] == "lead_hour"

    def test_model_and_predictions(self, workspace):
        model = load_ensemble(workspace["model"])
        predictions = pd.read_csv(workspace["predictions"])

        assert len(model.members) == 3
        assert list(predictions.columns) == PREDICTION_COLUMNS
        assert predictions["probability"].between(0.0, 1.0).all()
        assert set(predictions["forecast_label"]) <= {0, 1}

    def test_evaluate_predictions(self, workspace, capsys):
        out = workspace["root"] / "scores.csv"

        run("--config", workspace["config"], "evaluate", "--pred", workspace["predictions"], "--out", out)

        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(REPORT_COLUMNS)
        assert lines[1].startswith("3,")
        assert "POD" in capsys.readouterr().out

    def test_evaluate_against_observations(self, workspace):
        out = workspace["root"] / "scores_obs.csv"

        run("--config", workspace["config"], "evaluate", "--pred", workspace["predictions"],
            "--obs", workspace["synth"] / "observations.csv", "--far", "conventional", "--out", out)

        sidecar = json.loads(out.with_name("scores_obs.csv.run.json").read_text())
        assert sidecar["inputs"]["obs"] == "observations.csv"
        assert sidecar["config"]["verify"]["far_definition"] == "conventional"

    def test_baseline_fsl(self, workspace):
        out = workspace["root"] / "fsl.csv"

        run("--config", workspace["config"], "baseline", "fsl", "--dataset", workspace["dataset"], "--out", out)

        assert out.read_text().startswith(",".join(REPORT_COLUMNS))

    def test_ablate(self, workspace):
        plan = workspace["root"] / "plan.yaml"
        plan.write_text("rows:\n  - {group: Predictor, label: lag0, predictors: all_lag0, objective: ce, "
                        "strategy: single}\n")
        out = workspace["root"] / "ablation.csv"

        run("--config", workspace["config"], "ablate", "--plan", plan, "--dataset", workspace["dataset"],
            "--out", out)

        assert out.read_text().splitlines()[1].startswith("Predictor,lag0,")

    def test_train_flags_override_config(self, workspace):
        out = workspace["root"] / "single.txt"

        run("--config", workspace["config"], "train", "--features", workspace["features"], "--ensemble", "1",
            "--objective", "ce", "--seed", "3", "--out", out)

        model = load_ensemble(out)
        assert len(model.members) == 1
        assert model.seed == 3
        assert model.members[0].objective == "ce"
