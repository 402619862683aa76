"""
Easy-ensemble meta-training.

The fog-free rows of the training matrix are split into N disjoint shards; each member
trains on every fog row plus its shard, rebalanced to the target fog ratio by
undersampling the shard or oversampling the fog rows. The ensemble probability is the
mean of the member probabilities.
"""

import hashlib
import io
import json
import math
from pathlib import Path
from typing import IO, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict

from src.components.base import PipelineComponent
from src.components.gbdt import MODEL_HEADER, BoostedModel, dump_model, parse_model, train
from src.components.objectives import Objective, parse_objective
from src.config import EnsembleConfig, GbdtConfig, PipelineConfig
from src.models import FeatureMatrix
from src.utils import (
    ConfigurationError,
    EnsembleTrainingError,
    FogPipelineError,
    ModelFormatError,
    TrainingError,
    get_logger,
)
from src.utils.io import atomic_output, canonical_json

logger = get_logger(__name__)

ENSEMBLE_HEADER = "fogcast-ensemble v1"


class TrainingSubset(NamedTuple):
    index: int
    rows: np.ndarray
    fingerprint: str


def _fingerprint(rows: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(rows, dtype="<i8").tobytes()).hexdigest()


def partition_resample(matrix: FeatureMatrix, cfg: EnsembleConfig) -> List[TrainingSubset]:
    """
    Row indices of the N member training subsets.

    Fog-free rows are permuted with the ensemble seed and dealt round-robin into N
    disjoint shards. Member i draws from its own stream seeded with ``seed ^ i``:

    - undersample keeps every fog row and floor(f(1 − r)/r) shard rows, or the whole
      shard when the natural fog ratio already reaches r
    - oversample keeps the whole shard and tops fog rows up, with replacement, to
      ceil(r·s/(1 − r))
    - none keeps every fog row and the whole shard

    Indices within a subset are sorted.

    Raises:
        TrainingError: No fog rows or no fog-free rows
    """
    labels = matrix.labels
    fog = np.flatnonzero(labels == 1)
    clear = np.flatnonzero(labels == 0)
    if len(fog) == 0:
        raise TrainingError("Target fog ratio is unreachable: the training matrix has no fog rows")
    if len(clear) == 0:
        raise TrainingError("The training matrix has no fog-free rows")
    if cfg.strategy == "oversample" and cfg.target_ratio >= 1.0:
        raise ConfigurationError("Oversampling needs a target ratio below 1")

    permuted = np.random.default_rng(cfg.seed).permutation(clear)
    ratio = cfg.target_ratio
    subsets = []
    for i in range(cfg.members):
        shard = permuted[i::cfg.members]
        rng = np.random.default_rng(cfg.seed ^ i)
        fog_rows = fog
        if cfg.strategy == "undersample" and len(fog) / (len(fog) + len(shard)) < ratio:
            keep = int(math.floor(len(fog) * (1.0 - ratio) / ratio + 1e-9))
            shard = rng.choice(shard, size=min(keep, len(shard)), replace=False)
        elif cfg.strategy == "oversample":
            wanted = int(math.ceil(ratio * len(shard) / (1.0 - ratio) - 1e-9))
            if wanted > len(fog):
                fog_rows = np.concatenate([fog, rng.choice(fog, size=wanted - len(fog), replace=True)])
        rows = np.sort(np.concatenate([fog_rows, shard]))
        subsets.append(TrainingSubset(i, rows, _fingerprint(rows)))
    return subsets


class EnsembleModel(BaseModel):
    """Members sharing one feature manifest, plus how their subsets were drawn."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    members: List[BoostedModel]
    config: EnsembleConfig
    seed: int
    fingerprints: List[str]

    @property
    def manifest(self):
        return self.members[0].manifest

    def member_probabilities(self, features: Union[FeatureMatrix, np.ndarray],
                             manifest: Optional[Sequence[str]] = None) -> np.ndarray:
        return np.stack([m.predict_proba(features, manifest) for m in self.members])

    def predict_proba(self, features: Union[FeatureMatrix, np.ndarray],
                      manifest: Optional[Sequence[str]] = None) -> np.ndarray:
        """Mean of the member probabilities."""
        return self.member_probabilities(features, manifest).mean(axis=0)

    def classify(self, features: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
        return classify(self.predict_proba(features), self.config.threshold)


def predict_ensemble(ensemble: EnsembleModel, row: Sequence[float],
                     manifest: Optional[Sequence[str]] = None) -> float:
    return float(ensemble.predict_proba(np.asarray(row, dtype=np.float32)[None, :], manifest)[0])


def classify(p, threshold: float = 0.5):
    """1 where p ≥ threshold."""
    if np.ndim(p) == 0:
        return 1 if p >= threshold else 0
    return (np.asarray(p) >= threshold).astype(np.uint8)


def _train_member(subset: TrainingSubset, matrix: FeatureMatrix, objective: Objective, cfg: GbdtConfig,
                  validation: Optional[FeatureMatrix]) -> BoostedModel:
    try:
        member_cfg = cfg.model_copy(update={"seed": cfg.seed ^ subset.index})
        return train(matrix.take(subset.rows), objective, member_cfg, validation)
    except FogPipelineError as e:
        raise EnsembleTrainingError(subset.index, str(e)) from e


def train_ensemble(matrix: FeatureMatrix, subsets: Sequence[TrainingSubset], objective: Union[Objective, str],
                   gbdt: GbdtConfig, ensemble: EnsembleConfig, validation: Optional[FeatureMatrix] = None,
                   workers: int = 1) -> EnsembleModel:
    """
    Train one boosted model per subset, each seeded with ``gbdt.seed ^ index``.

    Raises:
        EnsembleTrainingError: A member failed; carries the member index
    """
    if not subsets:
        raise TrainingError("Ensemble training needs at least one subset")
    if isinstance(objective, str):
        objective = parse_objective(objective)
    members = Parallel(n_jobs=workers, prefer="threads")(
        delayed(_train_member)(s, matrix, objective, gbdt, validation) for s in subsets
    )
    return EnsembleModel(members=list(members), config=ensemble, seed=ensemble.seed,
                         fingerprints=[s.fingerprint for s in subsets])


# -------------------------------------------------------------------- persistence

def dump_ensemble(model: EnsembleModel) -> bytes:
    out = io.BytesIO()
    header = [
        ENSEMBLE_HEADER,
        f"members\t{len(model.members)}",
        f"seed\t{model.seed}",
        f"config\t{canonical_json(model.config.model_dump(mode='json'))}",
        f"fingerprints\t{json.dumps(model.fingerprints)}",
    ]
    out.write(("\n".join(header) + "\n").encode("utf-8"))
    for index, member in enumerate(model.members):
        block = dump_model(member).encode("utf-8")
        out.write(f"member\t{index}\t{len(block)}\n".encode("utf-8"))
        out.write(block)
    out.write(b"end\n")
    return out.getvalue()


def save_ensemble(model: EnsembleModel, path: Union[str, Path]) -> None:
    with atomic_output(path, "wb") as handle:
        handle.write(dump_ensemble(model))


def _header_line(stream: IO[bytes], key: str) -> str:
    line = stream.readline().decode("utf-8")
    if not line.endswith("\n"):
        raise ModelFormatError(f"Ensemble file truncated before '{key}'")
    name, _, payload = line.rstrip("\n").partition("\t")
    if name != key:
        raise ModelFormatError(f"Expected '{key}' in ensemble file, found '{name}'")
    return payload


def parse_ensemble(data: bytes) -> EnsembleModel:
    stream = io.BytesIO(data)
    tag = stream.readline().decode("utf-8").rstrip("\n")
    if tag != ENSEMBLE_HEADER:
        raise ModelFormatError(f"Unsupported ensemble version tag {tag!r}; expected {ENSEMBLE_HEADER!r}")
    try:
        count = int(_header_line(stream, "members"))
        seed = int(_header_line(stream, "seed"))
        config = EnsembleConfig(**json.loads(_header_line(stream, "config")))
        fingerprints = json.loads(_header_line(stream, "fingerprints"))
    except (ValueError, TypeError) as e:
        raise ModelFormatError(f"Malformed ensemble header: {e}") from e

    members = []
    for index in range(count):
        parts = _header_line(stream, "member").split("\t")
        if len(parts) != 2 or parts[0] != str(index):
            raise ModelFormatError(f"Malformed member header for member {index}")
        size = int(parts[1])
        block = stream.read(size)
        if len(block) != size:
            raise ModelFormatError(f"Ensemble file truncated inside member {index}")
        members.append(parse_model(block.decode("utf-8")))
    if stream.readline() != b"end\n":
        raise ModelFormatError("Ensemble file truncated: missing end marker")
    if len(fingerprints) != count:
        raise ModelFormatError("Fingerprint count does not match member count")
    manifests = {m.manifest for m in members}
    if len(manifests) > 1:
        raise ModelFormatError("Ensemble members disagree on the feature manifest")
    return EnsembleModel(members=members, config=config, seed=seed, fingerprints=fingerprints)


def load_ensemble(path: Union[str, Path]) -> EnsembleModel:
    with open(path, "rb") as f:
        return parse_ensemble(f.read())


def load_predictor(path: Union[str, Path]) -> EnsembleModel:
    """Load an ensemble file, or a single model file as a one-member ensemble."""
    with open(path, "rb") as f:
        data = f.read()
    if data.startswith(MODEL_HEADER.encode("utf-8")):
        model = parse_model(data.decode("utf-8"))
        return EnsembleModel(members=[model], config=EnsembleConfig(members=1, strategy="none", seed=model.seed),
                             seed=model.seed, fingerprints=[""])
    return parse_ensemble(data)


class EnsembleTrainingComponent(PipelineComponent):
    """Partitions the training matrix and trains the ensemble members."""

    def __init__(self, config: PipelineConfig):
        super().__init__(config)
        self.stats = {
            "training_rows": 0,
            "fog_rows": 0,
            "members": 0,
            "strategy": "",
            "rows_per_member": [],
            "trees_per_member": [],
        }

    def execute(self, train_matrix: FeatureMatrix, validation: Optional[FeatureMatrix] = None) -> EnsembleModel:
        try:
            ensemble_cfg = self.config.member_ensemble()
            gbdt_cfg = self.config.member_gbdt()
            objective = parse_objective(self.config.objective.name, self.config.objective.prob_clip,
                                        self.config.objective.hess_floor)
            self.logger.info(f"Training {ensemble_cfg.members} members with {objective.descriptor}, "
                             f"strategy {ensemble_cfg.strategy}, fog ratio {ensemble_cfg.target_ratio}")

            subsets = partition_resample(train_matrix, ensemble_cfg)
            model = train_ensemble(train_matrix, subsets, objective, gbdt_cfg, ensemble_cfg, validation,
                                   self.config.project.workers)

            self.stats["training_rows"] = train_matrix.n_rows
            self.stats["fog_rows"] = int(train_matrix.labels.sum())
            self.stats["members"] = len(model.members)
            self.stats["strategy"] = ensemble_cfg.strategy
            self.stats["rows_per_member"] = [len(s.rows) for s in subsets]
            self.stats["trees_per_member"] = [len(m.trees) for m in model.members]
            self._log_summary("Ensemble Training")
            return model

        except FogPipelineError:
            raise
        except Exception as e:
            self.logger.error(f"Ensemble training failed: {str(e)}")
            raise TrainingError(f"Ensemble training failed: {str(e)}") from e
