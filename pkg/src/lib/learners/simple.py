from typing import Optional

import numpy as np


class ConstantPredictor:

    _value: float

    def __init__(self, value: float):
        self._value = float(value)

    @property
    def value(self) -> float:
        return self._value

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.full(features.shape[0], self._value)


def fit_mean(target: np.ndarray, weights: Optional[np.ndarray]) -> ConstantPredictor:
    if weights is None:
        return ConstantPredictor(float(np.mean(target)))
    return ConstantPredictor(float(np.average(target, weights=weights)))


class SaturatedPredictor:
    """Weighted mean of the target within each distinct feature row.

    Rows never seen in training predict the overall mean.
    """

    _table: dict[tuple[float, ...], float]
    _fallback: float

    def __init__(self, table: dict[tuple[float, ...], float], fallback: float):
        self._table = table
        self._fallback = fallback

    def unseen_rows(self, features: np.ndarray) -> int:
        return sum(1 for row in features if tuple(row) not in self._table)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.array(
            [self._table.get(tuple(row), self._fallback) for row in features],
            dtype=float
        )


def fit_saturated(
        features: np.ndarray,
        target: np.ndarray,
        weights: Optional[np.ndarray]
) -> SaturatedPredictor:
    w = np.ones(len(target)) if weights is None else np.asarray(weights, dtype=float)
    if features.shape[1] == 0:
        keys = np.zeros(len(target), dtype=np.int64)
        levels: list[tuple[float, ...]] = [()]
    else:
        unique, keys = np.unique(features, axis=0, return_inverse=True)
        keys = keys.reshape(-1)
        levels = [tuple(float(x) for x in row) for row in unique]
    totals = np.bincount(keys, weights=w, minlength=len(levels))
    sums = np.bincount(keys, weights=w * target, minlength=len(levels))
    table = {
        level: float(sums[s] / totals[s])
        for s, level in enumerate(levels)
        if totals[s] > 0
    }
    return SaturatedPredictor(table, float(np.average(target, weights=w)))


__all__ = ["ConstantPredictor", "SaturatedPredictor", "fit_mean", "fit_saturated"]
