from typing import Optional

import numpy as np

from .. import util


_LEAF = -1


class TreePredictor:
    """Axis-aligned regression tree stored as parallel node arrays."""

    _feature: np.ndarray
    _threshold: np.ndarray
    _left: np.ndarray
    _right: np.ndarray
    _value: np.ndarray
    _depth: int

    def __init__(self, feature, threshold, left, right, value, depth: int):
        self._feature = np.asarray(feature, dtype=np.int64)
        self._threshold = np.asarray(threshold, dtype=float)
        self._left = np.asarray(left, dtype=np.int64)
        self._right = np.asarray(right, dtype=np.int64)
        self._value = np.asarray(value, dtype=float)
        self._depth = depth

    @property
    def depth(self) -> int:
        return self._depth

    def predict(self, features: np.ndarray) -> np.ndarray:
        rows = np.arange(features.shape[0])
        node = np.zeros(features.shape[0], dtype=np.int64)
        for _ in range(self._depth):
            feature = self._feature[node]
            internal = feature != _LEAF
            if not np.any(internal):
                break
            lookup = np.where(internal, feature, 0)
            go_left = features[rows, lookup] <= self._threshold[node]
            child = np.where(go_left, self._left[node], self._right[node])
            node = np.where(internal, child, node)
        return self._value[node]


def _best_split(
        features: np.ndarray,
        target: np.ndarray,
        weights: np.ndarray,
        min_leaf: int
) -> Optional[tuple[int, float, float]]:
    """(feature, threshold, gain) of the largest weighted variance reduction.

    Scans features in index order and thresholds ascending, replacing the
    incumbent only on a strictly larger gain.
    """
    n = len(target)
    if n < 2 * min_leaf:
        return None
    total_w = float(np.sum(weights))
    total_s = float(weights @ target)
    if total_w <= 0:
        return None
    base = total_s * total_s / total_w
    best: Optional[tuple[int, float, float]] = None
    for f in range(features.shape[1]):
        order = np.argsort(features[:, f], kind="stable")
        values = features[order, f]
        cum_w = np.cumsum(weights[order])
        cum_s = np.cumsum(weights[order] * target[order])
        # split after position i keeps rows 0..i on the left
        positions = np.arange(min_leaf - 1, n - min_leaf)
        if positions.size == 0:
            continue
        distinct = values[positions] < values[positions + 1]
        positions = positions[distinct]
        if positions.size == 0:
            continue
        w_left = cum_w[positions]
        w_right = total_w - w_left
        valid = (w_left > 0) & (w_right > 0)
        positions, w_left, w_right = positions[valid], w_left[valid], w_right[valid]
        if positions.size == 0:
            continue
        s_left = cum_s[positions]
        s_right = total_s - s_left
        gain = s_left * s_left / w_left + s_right * s_right / w_right - base
        i = int(np.argmax(gain))
        if gain[i] > 1e-12 * (1.0 + abs(base)) and (best is None or gain[i] > best[2]):
            position = positions[i]
            threshold = 0.5 * (values[position] + values[position + 1])
            best = (f, float(threshold), float(gain[i]))
    return best


def fit_tree(
        features: np.ndarray,
        target: np.ndarray,
        weights: Optional[np.ndarray],
        max_depth: int,
        min_leaf: int
) -> TreePredictor:
    n = features.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def grow(rows: np.ndarray, depth: int) -> int:
        node = len(value)
        w_rows = w[rows]
        total = float(np.sum(w_rows))
        mean = float(w_rows @ target[rows] / total) if total > 0 else float(np.mean(target[rows]))
        feature.append(_LEAF)
        threshold.append(0.0)
        left.append(_LEAF)
        right.append(_LEAF)
        value.append(mean)
        if depth >= max_depth:
            return node
        split = _best_split(features[rows], target[rows], w_rows, min_leaf)
        if split is None:
            return node
        f, cut, _ = split
        goes_left = features[rows, f] <= cut
        feature[node] = f
        threshold[node] = cut
        left[node] = grow(rows[goes_left], depth + 1)
        right[node] = grow(rows[~goes_left], depth + 1)
        return node

    grow(np.arange(n), 0)
    return TreePredictor(feature, threshold, left, right, value, max_depth)


class BaggedTreesPredictor:

    _trees: tuple[TreePredictor, ...]

    def __init__(self, trees: list[TreePredictor]):
        self._trees = tuple(trees)

    @property
    def trees(self) -> tuple[TreePredictor, ...]:
        return self._trees

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.mean([tree.predict(features) for tree in self._trees], axis=0)


def fit_bagged_trees(
        features: np.ndarray,
        target: np.ndarray,
        weights: Optional[np.ndarray],
        max_depth: int,
        min_leaf: int,
        n_bags: int,
        seed: int
) -> BaggedTreesPredictor:
    n = features.shape[0]
    trees = []
    for bag in range(n_bags):
        rng = np.random.default_rng(util.derive_seed(seed, bag))
        rows = rng.integers(0, n, size=n)
        trees.append(fit_tree(
            features[rows], target[rows],
            None if weights is None else weights[rows],
            max_depth, min_leaf
        ))
    return BaggedTreesPredictor(trees)


__all__ = ["TreePredictor", "BaggedTreesPredictor", "fit_tree", "fit_bagged_trees"]
