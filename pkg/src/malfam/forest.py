"""CART decision trees and a random forest, written against numpy only.

Determinism contract: every tree draws from its own PCG64 generator seeded by
mix_seed(seed, "tree", index), so refitting with the same seed reproduces the
forest node for node regardless of thread count.  Ties in the split search
resolve to the lowest dimension index, then the lowest threshold.
"""
from __future__ import annotations

import json
import math
import sys
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ModelError, TrainingError
from .families import family_name
from .util import mix_seed

MODEL_VERSION = 1

FEATURE_RULES = ("sqrt", "third")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | str = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if isinstance(self.features_per_split, str):
            if self.features_per_split not in FEATURE_RULES:
                raise ValueError(f"features_per_split rule must be one of {FEATURE_RULES}")
        elif self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")


def _candidate_count(rule: int | str, n_dims: int) -> int:
    if rule == "sqrt":
        return max(1, int(math.isqrt(n_dims)))
    if rule == "third":
        return max(1, n_dims // 3)
    return max(1, min(int(rule), n_dims))


@dataclass(eq=False)
class Leaf:
    counts: np.ndarray  # per-class training counts, int64


@dataclass(eq=False)
class Split:
    dim: int
    threshold: float
    left: "Leaf | Split | None" = None
    right: "Leaf | Split | None" = None


@dataclass(frozen=True)
class RandomForest:
    params: ForestParams
    classes: tuple[int, ...]
    n_features: int
    trees: tuple


def gini(counts) -> float:
    """Gini impurity 1 - sum(p^2) of a class-count vector."""
    arr = np.asarray(counts, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("counts must be 1-d")
    if (arr < 0).any():
        raise ValueError("counts must be non-negative")
    total = arr.sum()
    if total <= 0:
        raise ValueError("gini is undefined for an empty node")
    p = arr / total
    return float(1.0 - p @ p)


def _best_split(X, row_idx, y_codes, n_classes, dims, min_leaf):
    """Exact best (dim, threshold, gain) over candidate dims, or None.

    Thresholds are midpoints between consecutive distinct sorted values.  The
    winner takes the strictly largest gain; on a tie the dim iterated first
    (lowest index) wins, and within a dim argmax picks the lowest threshold.
    """
    n = row_idx.size
    sub_y = y_codes[row_idx]
    total = np.bincount(sub_y, minlength=n_classes).astype(np.float64)
    g_parent = 1.0 - total @ total / (n * n)
    positions = np.arange(n)
    best_gain = 0.0
    best: tuple[int, float] | None = None
    for dim in dims:
        col = X[row_idx, dim]
        order = np.argsort(col, kind="stable")
        sorted_vals = col[order]
        cuts = np.flatnonzero(sorted_vals[1:] != sorted_vals[:-1])
        if cuts.size == 0:
            continue
        n_left = cuts + 1
        n_right = n - n_left
        feasible = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not feasible.any():
            continue
        cuts = cuts[feasible]
        n_left = n_left[feasible]
        n_right = n_right[feasible]
        onehot = np.zeros((n, n_classes))
        onehot[positions, sub_y[order]] = 1.0
        left_counts = onehot.cumsum(axis=0)[cuts]
        right_counts = total - left_counts
        g_left = 1.0 - (left_counts * left_counts).sum(axis=1) / (n_left * n_left)
        g_right = 1.0 - (right_counts * right_counts).sum(axis=1) / (n_right * n_right)
        gain = g_parent - (n_left / n) * g_left - (n_right / n) * g_right
        pick = int(np.argmax(gain))  # first max = lowest threshold
        if gain[pick] > best_gain:
            best_gain = float(gain[pick])
            threshold = (sorted_vals[cuts[pick]] + sorted_vals[cuts[pick] + 1]) / 2.0
            best = (int(dim), float(threshold))
    if best is None:
        return None
    return (best[0], best[1], best_gain)


def best_split(values, labels, dims=None, min_samples_leaf: int = 1):
    """Public split search over arbitrary labels; see _best_split for rules."""
    X = np.asarray(values, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("values must be 2-d")
    y = np.asarray(labels)
    if y.shape[0] != X.shape[0]:
        raise ValueError("labels must align with rows")
    classes, y_codes = np.unique(y, return_inverse=True)
    if dims is None:
        dims = range(X.shape[1])
    return _best_split(
        X, np.arange(X.shape[0]), y_codes.astype(np.intp),
        classes.size, sorted(int(d) for d in dims), min_samples_leaf,
    )


def _fit_tree(X, y_codes, n_classes, params: ForestParams, rng) -> Leaf | Split:
    n, d = X.shape
    m = _candidate_count(params.features_per_split, d)
    if params.bootstrap:
        rows = rng.integers(0, n, size=n)
    else:
        rows = np.arange(n)
    depth_cap = params.max_depth if params.max_depth is not None else math.inf
    min_leaf = params.min_samples_leaf

    root: Leaf | Split | None = None
    # preorder with an explicit stack (left child first) so rng draws do not
    # depend on the recursion limit
    stack: list[tuple[np.ndarray, int, Split | None, int]] = [(rows, 0, None, 0)]
    while stack:
        idx, depth, parent, side = stack.pop()
        sub_y = y_codes[idx]
        counts = np.bincount(sub_y, minlength=n_classes)
        node: Leaf | Split
        pure = counts.max() == idx.size
        if pure or depth >= depth_cap or idx.size < 2 * min_leaf:
            node = Leaf(counts.astype(np.int64))
        else:
            dims = np.sort(rng.choice(d, size=m, replace=False))
            found = _best_split(X, idx, y_codes, n_classes, dims, min_leaf)
            if found is None:
                node = Leaf(counts.astype(np.int64))
            else:
                dim, threshold, _ = found
                node = Split(dim, threshold)
                left_mask = X[idx, dim] <= threshold
                # push right first so the left branch is grown next
                stack.append((idx[~left_mask], depth + 1, node, 1))
                stack.append((idx[left_mask], depth + 1, node, 0))
        if parent is None:
            root = node
        elif side == 0:
            parent.left = node
        else:
            parent.right = node
    assert root is not None
    return root


def fit_forest(values, labels, params: ForestParams = ForestParams(), threads: int = 1) -> RandomForest:
    X = np.ascontiguousarray(values, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2:
        raise ValueError("values must be 2-d")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must align with rows")
    if X.shape[0] == 0:
        raise TrainingError("cannot fit a forest on an empty training set")
    classes = np.unique(y)
    if classes.size < 2:
        raise TrainingError("training data holds a single class; nothing to separate")
    y_codes = np.searchsorted(classes, y).astype(np.intp)

    def build(index: int):
        rng = np.random.Generator(np.random.PCG64(mix_seed(params.seed, "tree", index)))
        return _fit_tree(X, y_codes, classes.size, params, rng)

    if threads > 1 and params.n_trees > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = tuple(pool.map(build, range(params.n_trees)))
    else:
        trees = tuple(build(t) for t in range(params.n_trees))
    return RandomForest(
        params=params,
        classes=tuple(int(c) for c in classes),
        n_features=X.shape[1],
        trees=trees,
    )


def _tree_proba(tree, row, n_classes) -> np.ndarray:
    node = tree
    while isinstance(node, Split):
        node = node.left if row[node.dim] <= node.threshold else node.right
    counts = node.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        return np.full(n_classes, 1.0 / n_classes)
    return counts / total


def predict_proba(forest: RandomForest, values) -> np.ndarray:
    """Average of per-tree leaf distributions; each row sums to 1."""
    X = np.asarray(values, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[np.newaxis, :]
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise ValueError(f"expected {forest.n_features} feature columns, got {X.shape}")
    k = len(forest.classes)
    out = np.zeros((X.shape[0], k))
    for i in range(X.shape[0]):
        acc = np.zeros(k)
        for tree in forest.trees:
            acc += _tree_proba(tree, X[i], k)
        out[i] = acc / len(forest.trees)
    return out[0] if single else out


def predict(forest: RandomForest, values) -> np.ndarray:
    probs = predict_proba(forest, values)
    if probs.ndim == 1:
        probs = probs[np.newaxis, :]
    picks = probs.argmax(axis=1)  # first max = lowest class id
    classes = np.asarray(forest.classes, dtype=np.int64)
    return classes[picks]


def _node_gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    return float(1.0 - counts @ counts / (total * total))


def feature_importance(forest: RandomForest) -> np.ndarray:
    """Mean decrease in impurity per dimension, normalized to sum to 1.

    Recomputable from a deserialized forest: per-node counts are rebuilt by
    summing leaf counts upward.
    """
    total = np.zeros(forest.n_features)
    for tree in forest.trees:
        tree_imp = np.zeros(forest.n_features)
        counts_of: dict[int, np.ndarray] = {}
        stack: list[tuple[object, bool]] = [(tree, False)]
        while stack:
            node, expanded = stack.pop()
            if isinstance(node, Leaf):
                counts_of[id(node)] = node.counts.astype(np.float64)
                continue
            if not expanded:
                stack.append((node, True))
                stack.append((node.left, False))
                stack.append((node.right, False))
                continue
            left = counts_of.pop(id(node.left))
            right = counts_of.pop(id(node.right))
            merged = left + right
            counts_of[id(node)] = merged
            n = merged.sum()
            n_l = left.sum()
            n_r = right.sum()
            if n == 0:
                continue
            drop = _node_gini(merged) - (n_l / n) * _node_gini(left) - (n_r / n) * _node_gini(right)
            tree_imp[node.dim] += n * drop
        n_root = counts_of[id(tree)].sum()
        if n_root > 0:
            total += tree_imp / n_root
    total /= len(forest.trees)
    s = total.sum()
    if s > 0:
        total = total / s
    return total


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    accuracy: float
    classes: tuple[int, ...]
    confusion: tuple[tuple[int, ...], ...]  # confusion[true][predicted]
    per_fold: tuple[float, ...] | None = None


def evaluate(forest: RandomForest, values, labels) -> Metrics:
    X = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels)
    if y.shape[0] == 0:
        raise TrainingError("cannot evaluate on an empty set")
    unknown = sorted(set(int(c) for c in np.unique(y)) - set(forest.classes))
    if unknown:
        raise TrainingError(f"evaluation labels absent from the model: {unknown}")
    preds = predict(forest, X)
    index = {c: i for i, c in enumerate(forest.classes)}
    k = len(forest.classes)
    conf = np.zeros((k, k), dtype=np.int64)
    for truth, pred in zip(y, preds):
        conf[index[int(truth)], index[int(pred)]] += 1
    return Metrics(
        accuracy=float(np.trace(conf)) / y.shape[0],
        classes=forest.classes,
        confusion=tuple(tuple(int(v) for v in row) for row in conf),
    )


def cross_validate(
    values,
    labels,
    params: ForestParams = ForestParams(),
    folds: int = 5,
    seed: int = 0,
    threads: int = 1,
) -> Metrics:
    """Stratified k-fold: shuffle within each class, deal round-robin to folds."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    X = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels)
    if y.shape[0] != X.shape[0]:
        raise ValueError("labels must align with rows")
    classes = np.unique(y)
    if classes.size < 2:
        raise TrainingError("cross-validation needs at least two classes")
    for cls in classes:
        have = int((y == cls).sum())
        if have < folds:
            raise TrainingError(
                f"family {family_name(int(cls))} has {have} samples; "
                f"{folds}-fold cross-validation needs at least {folds}"
            )
    fold_of = np.empty(y.shape[0], dtype=np.intp)
    for cls in classes:
        idx = np.flatnonzero(y == cls)
        rng = np.random.Generator(np.random.PCG64(mix_seed(seed, "cv", int(cls))))
        perm = rng.permutation(idx.size)
        for position, j in enumerate(perm):
            fold_of[idx[j]] = position % folds

    accuracies: list[float] = []
    k = classes.size
    conf_total = np.zeros((k, k), dtype=np.int64)
    for fold in range(folds):
        held = fold_of == fold
        fold_params = replace(params, seed=mix_seed(seed, "fold", fold))
        forest = fit_forest(X[~held], y[~held], fold_params, threads=threads)
        metrics = evaluate(forest, X[held], y[held])
        accuracies.append(metrics.accuracy)
        conf_total += np.asarray(metrics.confusion, dtype=np.int64)
    return Metrics(
        accuracy=float(np.mean(accuracies)),
        classes=tuple(int(c) for c in classes),
        confusion=tuple(tuple(int(v) for v in row) for row in conf_total),
        per_fold=tuple(accuracies),
    )


def grid_search(
    values,
    labels,
    base: ForestParams = ForestParams(),
    *,
    tree_counts: Sequence[int] = (100, 200, 400),
    feature_rules: Sequence[int | str] = FEATURE_RULES,
    folds: int = 5,
    seed: int = 0,
    threads: int = 1,
) -> tuple[ForestParams, list[tuple[ForestParams, float]]]:
    """Cross-validate every (n_trees, features_per_split) cell; best mean wins.

    Ties keep the earlier cell, so smaller forests are preferred.
    """
    results: list[tuple[ForestParams, float]] = []
    best: tuple[ForestParams, float] | None = None
    for n_trees in tree_counts:
        for rule in feature_rules:
            params = replace(base, n_trees=n_trees, features_per_split=rule)
            metrics = cross_validate(values, labels, params, folds=folds, seed=seed, threads=threads)
            results.append((params, metrics.accuracy))
            if best is None or metrics.accuracy > best[1]:
                best = (params, metrics.accuracy)
    assert best is not None
    return best[0], results


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

@contextmanager
def _deep_recursion(limit: int = 20000):
    # json's C scanner honors the interpreter recursion limit; deep trees need
    # headroom
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, limit))
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


def _node_to_doc(root) -> dict:
    docs: dict[int, dict] = {}
    stack: list[tuple[object, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if isinstance(node, Leaf):
            docs[id(node)] = {"counts": [int(v) for v in node.counts]}
            continue
        if not expanded:
            stack.append((node, True))
            stack.append((node.left, False))
            stack.append((node.right, False))
            continue
        docs[id(node)] = {
            "dim": int(node.dim),
            "thr": float(node.threshold),
            "l": docs.pop(id(node.left)),
            "r": docs.pop(id(node.right)),
        }
    return docs[id(root)]


def _node_from_doc(doc: dict, n_classes: int):
    root = None
    stack: list[tuple[dict, Split | None, int]] = [(doc, None, 0)]
    while stack:
        item, parent, side = stack.pop()
        if not isinstance(item, dict):
            raise ModelError("malformed tree node")
        if "counts" in item:
            counts = np.asarray(item["counts"], dtype=np.int64)
            if counts.shape != (n_classes,) or (counts < 0).any():
                raise ModelError("leaf counts disagree with the class list")
            node: Leaf | Split = Leaf(counts)
        else:
            try:
                node = Split(int(item["dim"]), float(item["thr"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ModelError(f"malformed split node: {exc}") from exc
            stack.append((item["l"], node, 0))
            stack.append((item["r"], node, 1))
        if parent is None:
            root = node
        elif side == 0:
            parent.left = node
        else:
            parent.right = node
    return root


def save_model(forest: RandomForest, schema, path: str | Path) -> None:
    """Serialize to JSON, binding the forest to the schema by digest."""
    doc = {
        "version": MODEL_VERSION,
        "params": {
            "n_trees": forest.params.n_trees,
            "max_depth": forest.params.max_depth,
            "min_samples_leaf": forest.params.min_samples_leaf,
            "features_per_split": forest.params.features_per_split,
            "bootstrap": forest.params.bootstrap,
            "seed": forest.params.seed,
        },
        "classes": list(forest.classes),
        "schema_digest": schema.digest(),
        "trees": [_node_to_doc(tree) for tree in forest.trees],
    }
    with _deep_recursion():
        text = json.dumps(doc, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path: str | Path, schema) -> RandomForest:
    """Load a model and refuse any schema whose digest disagrees."""
    try:
        with _deep_recursion():
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported model format in {path}")
    digest = doc.get("schema_digest")
    if digest != schema.digest():
        raise ModelError(
            f"model {path} was trained on a different feature schema "
            f"(digest {digest} != {schema.digest()})"
        )
    try:
        raw = doc["params"]
        params = ForestParams(
            n_trees=int(raw["n_trees"]),
            max_depth=None if raw["max_depth"] is None else int(raw["max_depth"]),
            min_samples_leaf=int(raw["min_samples_leaf"]),
            features_per_split=(
                raw["features_per_split"]
                if isinstance(raw["features_per_split"], str)
                else int(raw["features_per_split"])
            ),
            bootstrap=bool(raw["bootstrap"]),
            seed=int(raw["seed"]),
        )
        classes = tuple(int(c) for c in doc["classes"])
        tree_docs = doc["trees"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed model {path}: {exc}") from exc
    if len(classes) < 2 or len(classes) != len(set(classes)):
        raise ModelError("model class list must hold at least two distinct ids")
    if not isinstance(tree_docs, list) or len(tree_docs) != params.n_trees:
        raise ModelError("model tree count disagrees with its params")
    trees = tuple(_node_from_doc(t, len(classes)) for t in tree_docs)
    n_features = len(schema)
    for tree in trees:
        _check_dims(tree, n_features)
    return RandomForest(params=params, classes=classes, n_features=n_features, trees=trees)


def _check_dims(tree, n_features: int) -> None:
    stack = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Split):
            if not 0 <= node.dim < n_features:
                raise ModelError(
                    f"split dimension {node.dim} outside the schema's {n_features} columns"
                )
            stack.append(node.left)
            stack.append(node.right)
