"""A self-contained bagged decision-tree ensemble over binary features.

This is the built-in black-box model whose feature-importance ranking seeds
rule extraction. Trees are CART-style with Gini impurity; every split is on a
0/1 feature so a node has exactly a value-0 and a value-1 child. The ensemble
only needs to provide: predictions, a Gini importance vector, and a
permutation importance vector. Randomness is derived per (seed, tree index),
so training is deterministic and independent of scheduling.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .dataset import BinaryDataset
from .errors import DataError
from .seeding import rng_for

FOREST_FORMAT = "branchrules.forest/1"
IMPORTANCES_FORMAT = "branchrules.importances/1"


class RankingSource(str, enum.Enum):
    GINI = "gini"
    PERMUTATION = "permutation"
    IMPORTED = "imported"


def gini_impurity(class_counts) -> float:
    """Gini impurity sum(p_j * (1 - p_j)) of a class-count vector.

    :raises ValueError: all counts zero.
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini_impurity needs at least one record")
    p = counts / total
    return float(np.sum(p * (1.0 - p)))


@dataclass
class TreeNode:
    """One node of a trained tree.

    Leaf iff split_feature is None. children is the (value-0, value-1) pair;
    both children's class_counts sum to this node's class_counts.
    """

    class_counts: np.ndarray
    impurity: float
    split_feature: int | None = None
    children: tuple["TreeNode", "TreeNode"] | None = None

    def is_leaf(self) -> bool:
        return self.split_feature is None


@dataclass(frozen=True)
class ForestModel:
    """A trained bagging ensemble plus its normalized Gini importances."""

    trees: tuple[TreeNode, ...]
    weights: tuple[float, ...]
    importances: np.ndarray
    n_estimators: int
    max_depth: int
    seed: int
    feature_names: tuple[str, ...]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


@dataclass(frozen=True)
class ImportanceRanking:
    """Features ordered by importance, descending; ties by ascending index.

    Values are normalized to sum to 1 when any are positive, so a min-importance
    threshold has the same scale regardless of the ranking source. An all-zero
    vector is kept as-is and ordered by feature index.
    """

    ordered: tuple[tuple[int, float], ...]
    source: RankingSource

    @classmethod
    def from_values(cls, values, source: RankingSource) -> "ImportanceRanking":
        vals = np.asarray(values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("importance values must be a nonempty vector")
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("importance values must be finite and nonnegative")
        total = vals.sum()
        if total > 0:
            vals = vals / total
        order = sorted(range(vals.size), key=lambda i: (-vals[i], i))
        return cls(tuple((i, float(vals[i])) for i in order), source)

    def surviving(self, min_imp: float) -> tuple[int, ...]:
        """Feature indices with importance >= min_imp, in ranking order."""
        return tuple(f for f, v in self.ordered if v >= min_imp)

    def values_by_feature(self) -> dict[int, float]:
        return {f: v for f, v in self.ordered}


def _best_split(X, y, idx, candidates, parent_impurity):
    """Gini decrease for each candidate feature; returns (feature, gain) or None."""
    n = idx.size
    sub = X[np.ix_(idx, candidates)]
    pos = y[idx] == 0
    n_pos = int(pos.sum())
    n_neg = n - n_pos
    c1p = sub[pos].sum(axis=0, dtype=np.int64)
    c1n = sub[~pos].sum(axis=0, dtype=np.int64)
    n1 = c1p + c1n
    n0 = n - n1
    c0p = n_pos - c1p
    c0n = n_neg - c1n
    with np.errstate(divide="ignore", invalid="ignore"):
        g1 = 1.0 - ((c1p / n1) ** 2 + (c1n / n1) ** 2)
        g0 = 1.0 - ((c0p / n0) ** 2 + (c0n / n0) ** 2)
    g1 = np.where(n1 > 0, g1, 0.0)
    g0 = np.where(n0 > 0, g0, 0.0)
    gain = parent_impurity - (n0 * g0 + n1 * g1) / n
    gain = np.where((n0 == 0) | (n1 == 0), 0.0, gain)
    j = int(np.argmax(gain))
    if gain[j] <= 0.0:
        return None
    return int(candidates[j]), float(gain[j])


def _grow_tree(X, y, idx, depth, max_depth, n_candidates, rng, importance_acc, n_root):
    counts = np.bincount(y[idx], minlength=2).astype(np.int64)
    impurity = gini_impurity(counts)
    node = TreeNode(class_counts=counts, impurity=impurity)
    if depth >= max_depth or impurity == 0.0 or idx.size < 2:
        return node
    candidates = np.sort(rng.choice(X.shape[1], size=n_candidates, replace=False))
    best = _best_split(X, y, idx, candidates, impurity)
    if best is None:
        return node
    feature, gain = best
    importance_acc[feature] += (idx.size / n_root) * gain
    column = X[idx, feature]
    child0 = _grow_tree(X, y, idx[column == 0], depth + 1, max_depth,
                        n_candidates, rng, importance_acc, n_root)
    child1 = _grow_tree(X, y, idx[column == 1], depth + 1, max_depth,
                        n_candidates, rng, importance_acc, n_root)
    node.split_feature = feature
    node.children = (child0, child1)
    return node


def train_forest(ds: BinaryDataset, n_estimators: int, max_depth: int, seed: int) -> ForestModel:
    """Train a bagging ensemble of depth-limited trees.

    Each tree draws a bootstrap sample of the full dataset size and considers
    ceil(sqrt(n_features)) random candidate features per split, keeping the
    split with the largest Gini decrease (ties to the lowest feature index).
    Importances are the mean over trees of each feature's total weighted
    impurity decrease, normalized to sum to 1 when any split occurred.
    """
    if n_estimators < 1:
        raise ValueError("n_estimators must be at least 1")
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    n = ds.n_records
    n_candidates = math.ceil(math.sqrt(ds.n_features))
    importance_sum = np.zeros(ds.n_features, dtype=np.float64)
    trees = []
    for t in range(n_estimators):
        rng = rng_for(seed, "tree", t)
        sample = rng.integers(0, n, size=n)
        X = ds.features[sample]
        y = ds.labels[sample]
        acc = np.zeros(ds.n_features, dtype=np.float64)
        root = _grow_tree(X, y, np.arange(n), 0, max_depth, n_candidates, rng, acc, n)
        importance_sum += acc
        trees.append(root)
    importances = importance_sum / n_estimators
    total = importances.sum()
    if total > 0:
        importances = importances / total
    importances.setflags(write=False)
    return ForestModel(
        trees=tuple(trees),
        weights=tuple(1.0 for _ in trees),
        importances=importances,
        n_estimators=n_estimators,
        max_depth=max_depth,
        seed=seed,
        feature_names=ds.feature_names,
    )


def gini_ranking(model: ForestModel) -> ImportanceRanking:
    """The model's Gini importance vector as a ranking."""
    return ImportanceRanking.from_values(model.importances, RankingSource.GINI)


def _tree_votes(root: TreeNode, X: np.ndarray) -> np.ndarray:
    """Per-record class vote of one tree (argmax of leaf counts, tie -> 0)."""
    votes = np.empty(X.shape[0], dtype=np.uint8)
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf():
            votes[idx] = int(np.argmax(node.class_counts))
            continue
        column = X[idx, node.split_feature]
        stack.append((node.children[0], idx[column == 0]))
        stack.append((node.children[1], idx[column == 1]))
    return votes


def predict_batch(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Majority-vote class ids for a feature matrix; vote ties go to class 0."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DataError(
            f"feature matrix width {X.shape[-1] if X.ndim == 2 else X.shape} "
            f"does not match the model's {model.n_features} features"
        )
    votes_for_1 = np.zeros(X.shape[0], dtype=np.int64)
    for tree in model.trees:
        votes_for_1 += _tree_votes(tree, X)
    n_trees = len(model.trees)
    # class 1 wins only on a strict majority; ties go to class 0
    return (votes_for_1 * 2 > n_trees).astype(np.uint8)


def predict(model: ForestModel, record) -> int:
    """Majority-vote class id for a single record."""
    rec = np.asarray(record)
    if rec.ndim != 1 or rec.shape[0] != model.n_features:
        raise DataError(
            f"record width does not match the model's {model.n_features} features"
        )
    return int(predict_batch(model, rec[np.newaxis, :])[0])


def accuracy(model: ForestModel, ds: BinaryDataset) -> float:
    return float(np.mean(predict_batch(model, ds.features) == ds.labels))


def permutation_importance(model: ForestModel, ds: BinaryDataset, n_rounds: int, seed: int) -> ImportanceRanking:
    """Mean accuracy drop when each feature column is shuffled.

    Per feature and round the column is permuted with randomness derived from
    (seed, feature, round); the importance is baseline accuracy minus the mean
    shuffled accuracy, clamped at 0. A feature no tree ever splits on scores
    exactly 0.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be at least 1")
    if len(ds.feature_names) != model.n_features:
        raise DataError("dataset width does not match the model")
    baseline = accuracy(model, ds)
    drops = np.zeros(ds.n_features, dtype=np.float64)
    X = ds.features
    for f in range(ds.n_features):
        acc_sum = 0.0
        for r in range(n_rounds):
            rng = rng_for(seed, "permutation", f, r)
            shuffled = X.copy()
            shuffled[:, f] = X[rng.permutation(ds.n_records), f]
            acc_sum += float(np.mean(predict_batch(model, shuffled) == ds.labels))
        drops[f] = baseline - acc_sum / n_rounds
    np.clip(drops, 0.0, None, out=drops)
    return ImportanceRanking.from_values(drops, RankingSource.PERMUTATION)


def import_importances(path, ds: BinaryDataset) -> ImportanceRanking:
    """Read a `feature_name<TAB>value` file into a ranking for this dataset.

    Every dataset feature must appear exactly once with a nonnegative value.

    :raises DataError: unknown or missing feature names, duplicates, malformed
        lines, or negative values.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        raise DataError(f"importance file not found: {path}") from None
    name_to_index = {name: i for i, name in enumerate(ds.feature_names)}
    values = np.full(ds.n_features, -1.0)
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(
                f"{path}: line {lineno} is not 'feature_name<TAB>value'"
            )
        name, raw = parts[0].strip(), parts[1].strip()
        if name not in name_to_index:
            raise DataError(
                f"{path}: line {lineno} names unknown feature {name!r}"
            )
        idx = name_to_index[name]
        if values[idx] >= 0:
            raise DataError(f"{path}: feature {name!r} listed twice")
        try:
            value = float(raw)
        except ValueError:
            raise DataError(
                f"{path}: line {lineno} has non-numeric value {raw!r}"
            ) from None
        if not math.isfinite(value) or value < 0:
            raise DataError(
                f"{path}: importance for {name!r} must be finite and nonnegative"
            )
        values[idx] = value
    missing = [name for name, i in name_to_index.items() if values[i] < 0]
    if missing:
        raise DataError(
            f"{path}: missing importance for features: {', '.join(sorted(missing))}"
        )
    return ImportanceRanking.from_values(values, RankingSource.IMPORTED)


def importances_text(model: ForestModel) -> str:
    """The model's importances in the importable `name<TAB>value` format."""
    lines = [
        f"{name}\t{float(value)!r}"
        for name, value in zip(model.feature_names, model.importances)
    ]
    return "\n".join(lines) + "\n"


def _node_to_dict(node: TreeNode) -> dict:
    payload = {
        "counts": [int(c) for c in node.class_counts],
        "impurity": node.impurity,
    }
    if not node.is_leaf():
        payload["feature"] = node.split_feature
        payload["children"] = [
            _node_to_dict(node.children[0]),
            _node_to_dict(node.children[1]),
        ]
    return payload


def _node_from_dict(payload: dict) -> TreeNode:
    node = TreeNode(
        class_counts=np.array(payload["counts"], dtype=np.int64),
        impurity=float(payload["impurity"]),
    )
    if "feature" in payload:
        node.split_feature = int(payload["feature"])
        node.children = (
            _node_from_dict(payload["children"][0]),
            _node_from_dict(payload["children"][1]),
        )
    return node


def forest_to_json(model: ForestModel) -> str:
    """Serialize the trained ensemble (topology, counts, importances) for audit."""
    payload = {
        "format": FOREST_FORMAT,
        "n_estimators": model.n_estimators,
        "max_depth": model.max_depth,
        "seed": model.seed,
        "feature_names": list(model.feature_names),
        "weights": list(model.weights),
        "importances": [float(v) for v in model.importances],
        "trees": [_node_to_dict(t) for t in model.trees],
    }
    return json.dumps(payload, indent=None, separators=(",", ":")) + "\n"


def forest_from_json(text: str) -> ForestModel:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(payload, dict) or payload.get("format") != FOREST_FORMAT:
        raise DataError(
            f"unrecognized model format tag {payload.get('format')!r} "
            f"(expected {FOREST_FORMAT!r})"
        )
    try:
        return ForestModel(
            trees=tuple(_node_from_dict(t) for t in payload["trees"]),
            weights=tuple(float(w) for w in payload["weights"]),
            importances=np.array(payload["importances"], dtype=np.float64),
            n_estimators=int(payload["n_estimators"]),
            max_depth=int(payload["max_depth"]),
            seed=int(payload["seed"]),
            feature_names=tuple(payload["feature_names"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model payload: {exc}") from None
