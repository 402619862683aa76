"""
Tests for easy-ensemble partitioning, training, averaging and persistence.
"""

import numpy as np
import pytest
from scipy import special

from src.components.ensemble import (
    ENSEMBLE_HEADER,
    EnsembleModel,
    EnsembleTrainingComponent,
    TrainingSubset,
    classify,
    dump_ensemble,
    load_ensemble,
    load_predictor,
    parse_ensemble,
    partition_resample,
    predict_ensemble,
    save_ensemble,
    train_ensemble,
)
from src.components.gbdt import MODEL_HEADER, parse_model, save_model
from src.config import EnsembleConfig, GbdtConfig
from src.models import FeatureMatrix
from src.utils import EnsembleTrainingError, ModelFormatError, TrainingError

FAST = GbdtConfig(rounds=10, learning_rate=0.3, max_leaves=8, max_bins=32, min_samples_leaf=3)


def labelled_matrix(fog, clear, seed=0):
    """Rows whose first feature separates fog (high) from fog-free (low) with some overlap."""
    rng = np.random.default_rng(seed)
    labels = np.r_[np.ones(fog), np.zeros(clear)].astype(np.uint8)
    values = np.column_stack([rng.normal(labels * 2.0, 1.0), rng.normal(size=fog + clear)])
    n = fog + clear
    return FeatureMatrix(manifest=("signal", "noise"), values=values, labels=labels, weights=np.ones(n),
                         station_ids=tuple("S" for _ in range(n)), launch=np.zeros(n, dtype=np.int64),
                         lead=np.ones(n))


def constant_member(probability):
    return parse_model(
        f"{MODEL_HEADER}\nmanifest\t[\"signal\", \"noise\"]\nobjective\tce\n"
        f"base_score\t{float(special.logit(probability))!r}\nseed\t0\nconfig\t{{}}\nbin_edges\t[]\n"
        "trees\t0\nend\n"
    )


class TestPartitionResample:
    """Member training subsets."""

    def test_undersample_counts(self):
        matrix = labelled_matrix(fog=10, clear=1000)

        subsets = partition_resample(matrix, EnsembleConfig(members=10, strategy="undersample", target_ratio=0.1))

        assert len(subsets) == 10
        for subset in subsets:
            assert int(matrix.labels[subset.rows].sum()) == 10
            assert int((matrix.labels[subset.rows] == 0).sum()) == 90

    def test_oversample_tops_up_fog_rows(self):
        matrix = labelled_matrix(fog=5, clear=95)

        (subset,) = partition_resample(matrix, EnsembleConfig(members=1, strategy="oversample", target_ratio=0.1))

        assert int(matrix.labels[subset.rows].sum()) == 11
        assert int((matrix.labels[subset.rows] == 0).sum()) == 95

    def test_shards_are_disjoint_and_cover_fog_free_rows(self):
        matrix = labelled_matrix(fog=7, clear=203)

        subsets = partition_resample(matrix, EnsembleConfig(members=4, strategy="none"))
        shards = [set(s.rows[matrix.labels[s.rows] == 0]) for s in subsets]

        assert sum(len(s) for s in shards) == 203
        assert set().union(*shards) == set(np.flatnonzero(matrix.labels == 0))
        for subset in subsets:
            assert set(np.flatnonzero(matrix.labels == 1)) <= set(subset.rows)

    def test_natural_ratio_above_target_keeps_whole_shard(self):
        matrix = labelled_matrix(fog=30, clear=100)

        (subset,) = partition_resample(matrix, EnsembleConfig(members=1, strategy="undersample", target_ratio=0.1))

        assert len(subset.rows) == 130

    def test_rows_sorted_and_fingerprinted(self):
        matrix = labelled_matrix(fog=10, clear=200)
        cfg = EnsembleConfig(members=3, seed=4)

        first = partition_resample(matrix, cfg)
        second = partition_resample(matrix, cfg)
        other = partition_resample(matrix, cfg.model_copy(update={"seed": 5}))

        assert all((np.diff(s.rows) >= 0).all() for s in first)
        assert [s.fingerprint for s in first] == [s.fingerprint for s in second]
        assert [s.fingerprint for s in first] != [s.fingerprint for s in other]

    def test_no_fog_rows(self):
        with pytest.raises(TrainingError, match="unreachable"):
            partition_resample(labelled_matrix(fog=0, clear=50), EnsembleConfig())

    def test_no_fog_free_rows(self):
        with pytest.raises(TrainingError):
            partition_resample(labelled_matrix(fog=5, clear=0), EnsembleConfig())


class TestEnsemblePrediction:
    """Averaging and thresholding."""

    def test_mean_of_members(self):
        ensemble = EnsembleModel(members=[constant_member(0.2), constant_member(0.4)],
                                 config=EnsembleConfig(members=2), seed=0, fingerprints=["a", "b"])

        assert predict_ensemble(ensemble, [0.0, 0.0]) == pytest.approx(0.3)

    def test_identical_members_give_member_probability(self):
        ensemble = EnsembleModel(members=[constant_member(0.37)] * 3, config=EnsembleConfig(members=3),
                                 seed=0, fingerprints=["a"] * 3)

        assert predict_ensemble(ensemble, [1.0, 2.0]) == pytest.approx(0.37, abs=1e-12)

    def test_probability_is_plain_member_mean(self):
        matrix = labelled_matrix(fog=20, clear=300, seed=4)
        cfg = EnsembleConfig(members=3, seed=4)
        model = train_ensemble(matrix, partition_resample(matrix, cfg), "focal:0.2:4", FAST, cfg)

        members = np.stack([m.predict_proba(matrix) for m in model.members])

        assert np.array_equal(model.predict_proba(matrix), members.mean(axis=0))

    def test_classify_threshold_is_inclusive(self):
        assert classify(0.5, 0.5) == 1
        assert classify(0.49, 0.5) == 0
        assert list(classify(np.array([0.1, 0.7]), 0.5)) == [0, 1]


class TestTrainEnsemble:
    """Member training."""

    def test_members_and_determinism(self):
        matrix = labelled_matrix(fog=20, clear=400)
        cfg = EnsembleConfig(members=3, seed=2)
        subsets = partition_resample(matrix, cfg)

        first = train_ensemble(matrix, subsets, "focal:0.2:4", FAST.model_copy(update={"seed": 2}), cfg)
        second = train_ensemble(matrix, subsets, "focal:0.2:4", FAST.model_copy(update={"seed": 2}), cfg, workers=3)

        assert len(first.members) == 3
        assert [m.seed for m in first.members] == [2 ^ 0, 2 ^ 1, 2 ^ 2]
        assert dump_ensemble(first) == dump_ensemble(second)
        probs = first.predict_proba(matrix)
        assert probs[matrix.labels == 1].mean() > probs[matrix.labels == 0].mean()

    def test_member_failure_carries_index(self):
        matrix = labelled_matrix(fog=10, clear=50)
        fog_only = np.flatnonzero(matrix.labels == 1)
        subsets = [TrainingSubset(0, np.arange(matrix.n_rows), "x"), TrainingSubset(1, fog_only, "y")]

        with pytest.raises(EnsembleTrainingError) as excinfo:
            train_ensemble(matrix, subsets, "ce", FAST, EnsembleConfig(members=2))

        assert excinfo.value.member_index == 1

    def test_no_subsets(self):
        with pytest.raises(TrainingError):
            train_ensemble(labelled_matrix(5, 50), [], "ce", FAST, EnsembleConfig())


class TestEnsembleFile:
    """Ensemble persistence."""

    def test_reload_reproduces_predictions(self, temp_dir):
        matrix = labelled_matrix(fog=20, clear=300)
        cfg = EnsembleConfig(members=2)
        model = train_ensemble(matrix, partition_resample(matrix, cfg), "ce", FAST, cfg)
        path = temp_dir / "ensemble.bin"

        save_ensemble(model, path)
        reloaded = load_ensemble(path)

        assert path.read_bytes().startswith(ENSEMBLE_HEADER.encode())
        assert reloaded.fingerprints == model.fingerprints
        assert np.array_equal(reloaded.predict_proba(matrix), model.predict_proba(matrix))

    def test_reload_is_bit_identical_on_random_rows(self, temp_dir):
        matrix = labelled_matrix(fog=30, clear=600, seed=7)
        cfg = EnsembleConfig(members=4, seed=7)
        model = train_ensemble(matrix, partition_resample(matrix, cfg), "focal:0.2:4", FAST, cfg)
        rng = np.random.default_rng(8)
        rows = rng.normal(1.0, 2.0, (1000, 2))
        rows[rng.uniform(size=(1000, 2)) < 0.05] = np.nan
        path = temp_dir / "ensemble.bin"

        save_ensemble(model, path)
        reloaded = load_ensemble(path)

        assert dump_ensemble(reloaded) == dump_ensemble(model)
        assert np.array_equal(reloaded.member_probabilities(rows), model.member_probabilities(rows))
        assert np.array_equal(reloaded.predict_proba(rows), model.predict_proba(rows))

    def test_truncated(self):
        ensemble = EnsembleModel(members=[constant_member(0.2)], config=EnsembleConfig(members=1), seed=0,
                                 fingerprints=["a"])
        data = dump_ensemble(ensemble)

        with pytest.raises(ModelFormatError):
            parse_ensemble(data[:-10])

    def test_unknown_version(self):
        with pytest.raises(ModelFormatError, match="version"):
            parse_ensemble(b"fogcast-ensemble v7\n")

    def test_load_predictor_accepts_single_model(self, temp_dir):
        path = temp_dir / "model.txt"
        save_model(constant_member(0.25), path)

        predictor = load_predictor(path)

        assert len(predictor.members) == 1
        assert predictor.predict_proba(np.zeros((2, 2))) == pytest.approx([0.25, 0.25])


class TestEnsembleTrainingComponent:
    """The training pipeline stage."""

    def test_execute(self, sample_config):
        matrix = labelled_matrix(fog=15, clear=450)
        component = EnsembleTrainingComponent(sample_config)

        model = component.execute(matrix)

        assert len(model.members) == sample_config.ensemble.members
        assert model.seed == sample_config.project.seed
        assert model.members[0].objective == "focal:0.2:4"
        assert component.stats["rows_per_member"] == [15 + 135] * 3
