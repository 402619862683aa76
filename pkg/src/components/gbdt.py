"""
Histogram-based gradient-boosted decision trees for binary fog classification.

Newton boosting with a pluggable objective: every round computes (g, h) at the current
raw scores, grows one tree leaf-wise from per-feature gradient histograms and adds its
shrunken leaf values to the scores. Features are binned once on the training set; the
bin edges are stored with the model and a split "bin ≤ b" is the raw test "x ≤ edges[b]".
"""

import io
import json
from heapq import heappop, heappush
from pathlib import Path
from typing import IO, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field
from scipy import special

from src.components.objectives import Objective, parse_objective, sigmoid
from src.config import GbdtConfig
from src.models import FeatureMatrix
from src.utils import (
    ConfigurationError,
    InputError,
    ManifestMismatchError,
    ModelFormatError,
    TrainingError,
    get_logger,
)
from src.utils.io import atomic_output, canonical_json

logger = get_logger(__name__)

MODEL_HEADER = "fogcast-gbdt v1"


# ------------------------------------------------------------------------- binning

class HistogramBinner:
    """
    Per-feature bin edges from training data.

    A feature with at most ``max_bins`` distinct values gets one bin per value; otherwise
    edges are training quantiles. Bin b holds values in (edges[b − 1], edges[b]] and
    missing values take the reserved code ``max_bins``.
    """

    def __init__(self, max_bins: int = 255):
        self.max_bins = max_bins
        self.edges: List[np.ndarray] = []

    def fit(self, X: np.ndarray) -> "HistogramBinner":
        self.edges = []
        levels = np.linspace(0.0, 1.0, self.max_bins + 1)[1:]
        for j in range(X.shape[1]):
            column = X[:, j].astype(np.float64)
            column = column[~np.isnan(column)]
            distinct = np.unique(column)
            if len(distinct) <= self.max_bins:
                self.edges.append(distinct)
            else:
                self.edges.append(np.unique(np.quantile(column, levels, method="inverted_cdf")))
        return self

    @classmethod
    def from_edges(cls, edges: Sequence[np.ndarray], max_bins: int) -> "HistogramBinner":
        binner = cls(max_bins)
        binner.edges = [np.asarray(e, dtype=np.float64) for e in edges]
        return binner

    @property
    def missing_code(self) -> int:
        return self.max_bins

    def transform(self, X: np.ndarray) -> np.ndarray:
        codes = np.empty(X.shape, dtype=np.uint16)
        for j, edges in enumerate(self.edges):
            column = X[:, j].astype(np.float64)
            code = np.searchsorted(edges, column, side="left")
            codes[:, j] = np.where(np.isnan(column), self.missing_code, np.minimum(code, self.max_bins - 1))
        return codes

    def n_bins(self) -> np.ndarray:
        return np.array([len(e) for e in self.edges], dtype=np.int64)


def build_histograms(codes: np.ndarray, rows: np.ndarray, g: np.ndarray, h: np.ndarray,
                     width: int, workers: int = 1) -> np.ndarray:
    """
    Gradient, Hessian and count histograms for the given rows.

    Returns an array shaped (3, n_features, width). Features are split into blocks
    across worker threads; each bin is summed in row order, so the result does not
    depend on the worker count.
    """
    n_features = codes.shape[1]
    sub = codes[rows]
    g_rows, h_rows = g[rows], h[rows]

    def block(features: np.ndarray) -> np.ndarray:
        flat = (sub[:, features].astype(np.int64) + np.arange(len(features)) * width).ravel()
        size = len(features) * width
        stacked = np.stack([
            np.bincount(flat, weights=np.repeat(g_rows, len(features)), minlength=size),
            np.bincount(flat, weights=np.repeat(h_rows, len(features)), minlength=size),
            np.bincount(flat, minlength=size).astype(np.float64),
        ])
        return stacked.reshape(3, len(features), width)

    if workers <= 1 or n_features < 2:
        return block(np.arange(n_features))
    blocks = [b for b in np.array_split(np.arange(n_features), min(workers, n_features)) if len(b)]
    parts = Parallel(n_jobs=workers, prefer="threads")(delayed(block)(b) for b in blocks)
    return np.concatenate(parts, axis=1)


class SplitInfo(NamedTuple):
    gain: float
    feature: int
    bin: int
    missing_left: bool


def find_best_split(hist: np.ndarray, n_bins: np.ndarray, cfg: GbdtConfig,
                    feature_mask: Optional[np.ndarray] = None) -> Optional[SplitInfo]:
    """
    Best split of a node from its histograms.

    Gain = G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ), evaluated with missing rows sent left
    and sent right. Ties go to the lowest feature, then the lowest bin, then missing-left.
    Returns None when no candidate has positive gain.
    """
    lam = cfg.l2_regularization
    grad, hess, count = hist
    width = grad.shape[1]
    max_bins = width - 1
    g_miss, h_miss, c_miss = grad[:, max_bins], hess[:, max_bins], count[:, max_bins]
    g_cum = np.cumsum(grad[:, :max_bins], axis=1)
    h_cum = np.cumsum(hess[:, :max_bins], axis=1)
    c_cum = np.cumsum(count[:, :max_bins], axis=1)
    g_total = (g_cum[:, -1] + g_miss)[:, None]
    h_total = (h_cum[:, -1] + h_miss)[:, None]
    c_total = (c_cum[:, -1] + c_miss)[:, None]
    parent = g_total ** 2 / (h_total + lam)

    gains = np.full((grad.shape[0], max_bins, 2), -np.inf)
    in_range = np.arange(max_bins)[None, :] < n_bins[:, None]
    if feature_mask is not None:
        in_range &= feature_mask[:, None]
    for variant, (g_left, h_left, c_left) in enumerate((
        (g_cum + g_miss[:, None], h_cum + h_miss[:, None], c_cum + c_miss[:, None]),
        (g_cum, h_cum, c_cum),
    )):
        g_right, h_right, c_right = g_total - g_left, h_total - h_left, c_total - c_left
        valid = (
            in_range
            & (c_left >= cfg.min_samples_leaf) & (c_right >= cfg.min_samples_leaf)
            & (h_left >= cfg.min_hessian_leaf) & (h_right >= cfg.min_hessian_leaf)
        )
        gain = g_left ** 2 / (h_left + lam) + g_right ** 2 / (h_right + lam) - parent
        gains[:, :, variant] = np.where(valid, gain, -np.inf)

    best = int(np.argmax(gains))
    feature, bin_index, variant = np.unravel_index(best, gains.shape)
    gain = float(gains[feature, bin_index, variant])
    if not gain > 0.0:
        return None
    return SplitInfo(gain, int(feature), int(bin_index), variant == 0)


# --------------------------------------------------------------------------- trees

class TreeModel(BaseModel):
    """
    A binary tree stored as parallel node arrays in pre-order.

    Internal nodes have ``feature ≥ 0``; a row goes left when ``x ≤ threshold`` or when it
    is missing and ``missing_left`` is set. Leaves carry the logit increment in ``value``.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    feature: np.ndarray
    threshold: np.ndarray
    split_bin: np.ndarray
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf value reached by every row."""
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            at = node[rows]
            x = X[rows, self.feature[at]].astype(np.float64)
            go_left = np.where(np.isnan(x), self.missing_left[at], x <= self.threshold[at])
            node[rows] = np.where(go_left, self.left[at], self.right[at])
            active = self.feature[node] >= 0
        return self.value[node]

    @classmethod
    def leaf(cls, value: float) -> "TreeModel":
        return cls(feature=np.array([-1]), threshold=np.array([0.0]), split_bin=np.array([-1]),
                   missing_left=np.array([False]), left=np.array([-1]), right=np.array([-1]),
                   value=np.array([value], dtype=np.float64))


class _GrowingNode:
    """A node during leaf-wise growth; ordered for the heap by gain, then creation."""

    def __init__(self, order: int, rows: np.ndarray, hist: np.ndarray, split: Optional[SplitInfo]):
        self.order = order
        self.rows = rows
        self.hist = hist
        self.split = split
        self.children: Optional[Tuple["_GrowingNode", "_GrowingNode"]] = None
        self.value = 0.0

    def __lt__(self, other: "_GrowingNode") -> bool:
        return (-self.split.gain, self.order) < (-other.split.gain, other.order)


def grow_tree(codes: np.ndarray, rows: np.ndarray, g: np.ndarray, h: np.ndarray,
              binner: HistogramBinner, cfg: GbdtConfig, feature_mask: Optional[np.ndarray] = None) -> TreeModel:
    """
    Grow one tree leaf-wise: always split the leaf with the largest gain.

    Children reuse the parent histogram: the smaller child is built from its rows and
    its sibling is the parent minus that child.
    """
    width = binner.max_bins + 1
    n_bins = binner.n_bins()
    counter = 0

    def make(node_rows: np.ndarray, hist: np.ndarray) -> _GrowingNode:
        nonlocal counter
        node = _GrowingNode(counter, node_rows, hist, find_best_split(hist, n_bins, cfg, feature_mask))
        counter += 1
        return node

    root = make(rows, build_histograms(codes, rows, g, h, width, cfg.workers))
    heap: List[_GrowingNode] = []
    if root.split is not None:
        heappush(heap, root)
    leaves = 1
    while heap and leaves < cfg.max_leaves:
        node = heappop(heap)
        split = node.split
        edges = binner.edges[split.feature]
        column = codes[node.rows, split.feature]
        is_missing = column == binner.missing_code
        goes_left = np.where(is_missing, split.missing_left, column <= split.bin)
        left_rows, right_rows = node.rows[goes_left], node.rows[~goes_left]

        if len(left_rows) <= len(right_rows):
            left_hist = build_histograms(codes, left_rows, g, h, width, cfg.workers)
            right_hist = node.hist - left_hist
        else:
            right_hist = build_histograms(codes, right_rows, g, h, width, cfg.workers)
            left_hist = node.hist - right_hist
        left, right = make(left_rows, left_hist), make(right_rows, right_hist)
        node.children = (left, right)
        node.threshold = float(edges[split.bin])
        node.hist = None
        leaves += 1
        for child in (left, right):
            if child.split is not None:
                heappush(heap, child)

    # Flatten in pre-order
    feature, threshold, split_bin, missing_left, left_ix, right_ix, value = [], [], [], [], [], [], []

    def emit(node: _GrowingNode) -> int:
        index = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        split_bin.append(-1)
        missing_left.append(False)
        left_ix.append(-1)
        right_ix.append(-1)
        value.append(0.0)
        if node.children is None:
            grad_sum = float(np.sum(g[node.rows]))
            hess_sum = float(np.sum(h[node.rows]))
            value[index] = -grad_sum / (hess_sum + cfg.l2_regularization) * cfg.learning_rate
            return index
        feature[index] = node.split.feature
        threshold[index] = node.threshold
        split_bin[index] = node.split.bin
        missing_left[index] = node.split.missing_left
        left_ix[index] = emit(node.children[0])
        right_ix[index] = emit(node.children[1])
        return index

    emit(root)
    return TreeModel(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        split_bin=np.array(split_bin, dtype=np.int64),
        missing_left=np.array(missing_left, dtype=bool),
        left=np.array(left_ix, dtype=np.int64),
        right=np.array(right_ix, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
    )


# -------------------------------------------------------------------------- models

class BoostedModel(BaseModel):
    """Base score plus a sequence of trees over a fixed feature manifest."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    base_score: float
    trees: List[TreeModel] = Field(default_factory=list)
    manifest: Tuple[str, ...]
    objective: str
    config: GbdtConfig
    seed: int
    bin_edges: List[np.ndarray] = Field(default_factory=list)

    def check_manifest(self, manifest: Sequence[str]) -> None:
        if tuple(manifest) != self.manifest:
            missing = [m for m in self.manifest if m not in manifest]
            extra = [m for m in manifest if m not in self.manifest]
            raise ManifestMismatchError(
                f"Feature manifest differs from the model's (missing {missing}, unexpected {extra})"
            )

    def raw_score(self, X: np.ndarray) -> np.ndarray:
        score = np.full(len(X), self.base_score, dtype=np.float64)
        for tree in self.trees:
            score += tree.predict(X)
        return score

    def predict_proba(self, features: Union[FeatureMatrix, np.ndarray],
                      manifest: Optional[Sequence[str]] = None) -> np.ndarray:
        if isinstance(features, FeatureMatrix):
            manifest, X = features.manifest, features.values
        else:
            X = np.atleast_2d(features)
        if manifest is not None:
            self.check_manifest(manifest)
        elif X.shape[1] != len(self.manifest):
            raise ManifestMismatchError(f"Expected {len(self.manifest)} features, got {X.shape[1]}")
        return sigmoid(self.raw_score(X))


def predict_proba(model: BoostedModel, row: Sequence[float], manifest: Optional[Sequence[str]] = None) -> float:
    """Probability of fog for a single feature row."""
    return float(model.predict_proba(np.asarray(row, dtype=np.float32)[None, :], manifest)[0])


def _validate_training_input(matrix: FeatureMatrix) -> None:
    if matrix.n_rows == 0:
        raise TrainingError("Training matrix is empty")
    if np.isinf(matrix.values).any():
        raise InputError("Feature values must be finite or missing (NaN)")
    positives = int(matrix.labels.sum())
    if positives == 0 or positives == matrix.n_rows:
        raise TrainingError("Training set must contain both fog and fog-free rows")


def train(train_matrix: FeatureMatrix, objective: Union[Objective, str], cfg: GbdtConfig,
          validation: Optional[FeatureMatrix] = None) -> BoostedModel:
    """
    Train a boosted model by Newton boosting.

    Args:
        train_matrix: Training rows; both classes must be present
        objective: Objective or its descriptor string
        cfg: Hyperparameters; ``seed`` drives row and feature subsampling
        validation: Optional rows for early stopping on validation loss

    Returns:
        Model truncated to the round with the lowest validation loss when validation
        rows are given

    Raises:
        TrainingError: Empty or single-class training set
        InputError: Infinite feature values
        ManifestMismatchError: Validation manifest differs from training manifest
    """
    if isinstance(objective, str):
        objective = parse_objective(objective)
    _validate_training_input(train_matrix)
    if validation is not None and validation.n_rows:
        if validation.manifest != train_matrix.manifest:
            raise ManifestMismatchError("Validation manifest differs from training manifest")
        if np.isinf(validation.values).any():
            raise InputError("Validation feature values must be finite or missing (NaN)")
    else:
        validation = None

    X = train_matrix.values
    y = train_matrix.labels.astype(np.float64)
    weights = train_matrix.weights.astype(np.float64)
    rng = np.random.default_rng(cfg.seed)

    binner = HistogramBinner(cfg.max_bins).fit(X)
    codes = binner.transform(X)
    positive_rate = float(np.average(y, weights=weights))
    base = float(special.logit(positive_rate))

    scores = np.full(len(y), base)
    val_scores = np.full(validation.n_rows, base) if validation is not None else None
    best_loss = objective.mean_loss(validation.labels, val_scores) if validation is not None else None
    best_round, trees = 0, []
    n_rows, n_features = X.shape

    for round_index in range(1, cfg.rounds + 1):
        g, h = objective.grad_hess(y, scores)
        g, h = g * weights, h * weights
        rows = np.arange(n_rows)
        if cfg.bagging_fraction < 1.0:
            rows = np.sort(rng.choice(n_rows, size=max(1, int(round(cfg.bagging_fraction * n_rows))), replace=False))
        mask = None
        if cfg.feature_fraction < 1.0:
            chosen = rng.choice(n_features, size=max(1, int(round(cfg.feature_fraction * n_features))), replace=False)
            mask = np.zeros(n_features, dtype=bool)
            mask[chosen] = True

        tree = grow_tree(codes, rows, g, h, binner, cfg, mask)
        trees.append(tree)
        scores = scores + tree.predict(X)

        if validation is not None:
            val_scores = val_scores + tree.predict(validation.values)
            loss = objective.mean_loss(validation.labels, val_scores)
            if loss < best_loss:
                best_loss, best_round = loss, round_index
            elif round_index - best_round >= cfg.early_stopping_patience:
                logger.info(f"Early stopping at round {round_index}; best round {best_round} "
                            f"(validation loss {best_loss:.6f})")
                break
        else:
            best_round = round_index

    return BoostedModel(
        base_score=base,
        trees=trees[:best_round],
        manifest=train_matrix.manifest,
        objective=objective.descriptor,
        config=cfg,
        seed=cfg.seed,
        bin_edges=binner.edges,
    )


# -------------------------------------------------------------------- persistence

def dump_model(model: BoostedModel) -> str:
    """Self-describing text form; floats use repr so reloading is exact."""
    out = io.StringIO()
    out.write(f"{MODEL_HEADER}\n")
    out.write(f"manifest\t{json.dumps(list(model.manifest))}\n")
    out.write(f"objective\t{model.objective}\n")
    out.write(f"base_score\t{model.base_score!r}\n")
    out.write(f"seed\t{model.seed}\n")
    out.write(f"config\t{canonical_json(model.config.model_dump(mode='json'))}\n")
    out.write(f"bin_edges\t{json.dumps([e.tolist() for e in model.bin_edges])}\n")
    out.write(f"trees\t{len(model.trees)}\n")
    for index, tree in enumerate(model.trees):
        out.write(f"tree\t{index}\t{tree.n_nodes}\n")
        for node in range(tree.n_nodes):
            if tree.feature[node] < 0:
                out.write(f"leaf\t{float(tree.value[node])!r}\n")
            else:
                side = "L" if tree.missing_left[node] else "R"
                out.write(f"split\t{int(tree.feature[node])}\t{int(tree.split_bin[node])}\t"
                          f"{float(tree.threshold[node])!r}\t{side}\n")
    out.write("end\n")
    return out.getvalue()


def save_model(model: BoostedModel, sink: Union[str, Path, IO[str]]) -> None:
    text = dump_model(model)
    if isinstance(sink, (str, Path)):
        with atomic_output(sink, "w") as handle:
            handle.write(text)
    else:
        sink.write(text)


def _field(lines: List[str], position: int, key: str) -> str:
    if position >= len(lines):
        raise ModelFormatError(f"Model file truncated before '{key}'")
    name, _, payload = lines[position].partition("\t")
    if name != key:
        raise ModelFormatError(f"Expected '{key}' on model line {position + 1}, found '{name}'")
    return payload


def _parse_tree(lines: List[str], position: int, n_nodes: int) -> Tuple[TreeModel, int]:
    records = []
    for offset in range(n_nodes):
        if position + offset >= len(lines):
            raise ModelFormatError("Model file truncated inside a tree")
        records.append(lines[position + offset].split("\t"))
    feature = np.full(n_nodes, -1, dtype=np.int64)
    threshold = np.zeros(n_nodes)
    split_bin = np.full(n_nodes, -1, dtype=np.int64)
    missing_left = np.zeros(n_nodes, dtype=bool)
    left = np.full(n_nodes, -1, dtype=np.int64)
    right = np.full(n_nodes, -1, dtype=np.int64)
    value = np.zeros(n_nodes)

    cursor = 0

    def build() -> int:
        nonlocal cursor
        if cursor >= n_nodes:
            raise ModelFormatError("Tree node records end before the tree is complete")
        index = cursor
        record = records[index]
        cursor += 1
        try:
            if record[0] == "leaf" and len(record) == 2:
                value[index] = float(record[1])
                return index
            if record[0] == "split" and len(record) == 5 and record[4] in ("L", "R"):
                feature[index] = int(record[1])
                split_bin[index] = int(record[2])
                threshold[index] = float(record[3])
                missing_left[index] = record[4] == "L"
                left[index] = build()
                right[index] = build()
                return index
        except ValueError as e:
            raise ModelFormatError(f"Malformed tree node record {record}") from e
        raise ModelFormatError(f"Malformed tree node record {record}")

    build()
    if cursor != n_nodes:
        raise ModelFormatError(f"Tree declares {n_nodes} nodes but its structure uses {cursor}")
    tree = TreeModel(feature=feature, threshold=threshold, split_bin=split_bin, missing_left=missing_left,
                     left=left, right=right, value=value)
    return tree, position + n_nodes


def parse_model(text: str) -> BoostedModel:
    """Inverse of :func:`dump_model`."""
    lines = text.splitlines()
    if not lines or lines[0] != MODEL_HEADER:
        found = lines[0] if lines else "<empty>"
        raise ModelFormatError(f"Unsupported model version tag {found!r}; expected {MODEL_HEADER!r}")
    try:
        manifest = tuple(json.loads(_field(lines, 1, "manifest")))
        objective = _field(lines, 2, "objective")
        base_score = float(_field(lines, 3, "base_score"))
        seed = int(_field(lines, 4, "seed"))
        config = GbdtConfig(**json.loads(_field(lines, 5, "config")))
        edges = [np.asarray(e, dtype=np.float64) for e in json.loads(_field(lines, 6, "bin_edges"))]
        n_trees = int(_field(lines, 7, "trees"))
    except (ValueError, TypeError) as e:
        raise ModelFormatError(f"Malformed model header: {e}") from e

    try:
        parse_objective(objective)
    except ConfigurationError as e:
        raise ModelFormatError(f"Unknown objective in model file: {e}") from e
    trees, position = [], 8
    for index in range(n_trees):
        header = _field(lines, position, "tree").split("\t")
        if len(header) != 2 or header[0] != str(index):
            raise ModelFormatError(f"Malformed tree header on model line {position + 1}")
        tree, position = _parse_tree(lines, position + 1, int(header[1]))
        trees.append(tree)
    if position >= len(lines) or lines[position] != "end":
        raise ModelFormatError("Model file truncated: missing end marker")
    return BoostedModel(base_score=base_score, trees=trees, manifest=manifest, objective=objective,
                        config=config, seed=seed, bin_edges=edges)


def load_model(source: Union[str, Path, IO[str]]) -> BoostedModel:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as f:
            return parse_model(f.read())
    return parse_model(source.read())
