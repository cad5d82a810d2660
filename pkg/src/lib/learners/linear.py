import logging

from collections.abc import Callable
from typing import Optional

import numpy as np

from .. import const, util
from ..errors import LearnerError


_logger = logging.getLogger(__name__)

CD_TOLERANCE = 1e-10
CD_MAX_SWEEPS = 100_000
# lambda_max divisor floor so the ridge end of the path stays finite
_MIN_MIXING_FOR_GRID = 1e-3


class LinearPredictor:

    _intercept: float
    _coef: np.ndarray

    def __init__(self, intercept: float, coef: np.ndarray):
        self._intercept = float(intercept)
        self._coef = np.asarray(coef, dtype=float)

    @property
    def intercept(self) -> float:
        return self._intercept

    @property
    def coef(self) -> np.ndarray:
        return self._coef

    def linear_predictor(self, features: np.ndarray) -> np.ndarray:
        return self._intercept + features @ self._coef

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.linear_predictor(features)


class Standardizer:
    """Weighted centering and scaling; constant columns keep scale 1."""

    _mean: np.ndarray
    _scale: np.ndarray

    def __init__(self, features: np.ndarray, weights: np.ndarray):
        self._mean = weights @ features
        variance = weights @ (features - self._mean) ** 2
        scale = np.sqrt(variance)
        self._constant = scale <= 1e-12 * (1.0 + np.abs(self._mean))
        self._scale = np.where(self._constant, 1.0, scale)

    @property
    def constant(self) -> np.ndarray:
        return self._constant

    def transform(self, features: np.ndarray) -> np.ndarray:
        standardized = (features - self._mean) / self._scale
        standardized[:, self._constant] = 0.0
        return standardized

    def to_original(self, intercept: float, coef: np.ndarray) -> LinearPredictor:
        original = coef / self._scale
        return LinearPredictor(intercept - float(original @ self._mean), original)


def normalized_weights(n: int, weights: Optional[np.ndarray]) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    total = float(np.sum(weights))
    if not total > 0:
        raise LearnerError("weights sum to zero")
    return np.asarray(weights, dtype=float) / total


def soft_threshold(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def coordinate_descent(
        gram: np.ndarray,
        cov: np.ndarray,
        penalty: float,
        mixing: float,
        start: Optional[np.ndarray] = None,
        tolerance: float = CD_TOLERANCE,
        max_sweeps: int = CD_MAX_SWEEPS
) -> tuple[np.ndarray, bool]:
    """Minimize 1/2 b'Gb - c'b + penalty*(mixing*|b|_1 + (1-mixing)*|b|^2/2).

    Covariance-update form: each coordinate step uses only the Gram matrix.
    Returns the coefficients and whether the max coefficient change fell
    below `tolerance`.
    """
    p = cov.shape[0]
    beta = np.zeros(p) if start is None else np.array(start, dtype=float)
    l1 = penalty * mixing
    l2 = penalty * (1.0 - mixing)
    active = np.flatnonzero(np.diag(gram) > 0)
    if active.size < p:
        beta[np.diag(gram) <= 0] = 0.0
    gradient_base = gram @ beta
    for _ in range(max_sweeps):
        max_change = 0.0
        for j in active:
            old = beta[j]
            partial = cov[j] - gradient_base[j] + gram[j, j] * old
            new = soft_threshold(partial, l1) / (gram[j, j] + l2)
            if new != old:
                gradient_base += gram[:, j] * (new - old)
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        if max_change < tolerance:
            return (beta, True)
    return (beta, False)


def lambda_max(cov: np.ndarray, mixing: float) -> float:
    top = float(np.max(np.abs(cov))) if cov.size else 0.0
    return max(top, 1e-12) / max(mixing, _MIN_MIXING_FOR_GRID)


def lambda_grid(cov: np.ndarray, mixing: float) -> np.ndarray:
    return lambda_max(cov, mixing) * np.logspace(0, -4, const.LAMBDA_GRID_SIZE)


def fit_ols(
        features: np.ndarray,
        target: np.ndarray,
        weights: Optional[np.ndarray]
) -> tuple[LinearPredictor, list[str]]:
    n = features.shape[0]
    w = normalized_weights(n, weights)
    design = np.column_stack([np.ones(n), features])
    root = np.sqrt(w)
    solution, _, rank, _ = np.linalg.lstsq(
        design * root[:, None], target * root, rcond=None
    )
    flags = []
    if rank < design.shape[1]:
        flags.append("rank_deficient")
        _logger.debug("rank-deficient linear fit (rank %d of %d)", rank, design.shape[1])
    return (LinearPredictor(solution[0], solution[1:]), flags)


def _gaussian_problem(features, target, w):
    standardizer = Standardizer(features, w)
    standardized = standardizer.transform(features)
    centre = float(w @ target)
    weighted = standardized * w[:, None]
    gram = standardized.T @ weighted
    cov = weighted.T @ (target - centre)
    return (standardizer, centre, gram, cov)


def _elastic_net_path(
        features: np.ndarray,
        target: np.ndarray,
        w: np.ndarray,
        mixing: float,
        penalties: np.ndarray
) -> list[tuple[LinearPredictor, bool]]:
    standardizer, centre, gram, cov = _gaussian_problem(features, target, w)
    beta = np.zeros(gram.shape[0])
    path = []
    for penalty in penalties:
        beta, converged = coordinate_descent(gram, cov, float(penalty), mixing, beta)
        path.append((standardizer.to_original(centre, beta), converged))
    return path


def _ridge(features, target, w, penalty) -> LinearPredictor:
    standardizer, centre, gram, cov = _gaussian_problem(features, target, w)
    system = gram + penalty * np.eye(gram.shape[0])
    beta = np.linalg.lstsq(system, cov, rcond=None)[0]
    beta[standardizer.constant] = 0.0
    return standardizer.to_original(centre, beta)


PathFitter = Callable[
    [np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    list[LinearPredictor]
]


def choose_penalty(
        features: np.ndarray,
        target: np.ndarray,
        w: np.ndarray,
        grid: np.ndarray,
        folds: int,
        seed: int,
        fit_path: PathFitter,
        link: Callable[[np.ndarray], np.ndarray]
) -> float:
    """V-fold CV over a descending penalty grid, weighted squared error."""
    n = features.shape[0]
    if n < folds:
        raise LearnerError(f"{folds}-fold penalty selection needs >= {folds} rows, got {n}")
    labels = util.balanced_fold_labels(n, folds, seed)
    risk = np.zeros(len(grid))
    for v in range(folds):
        train = labels != v
        held = ~train
        w_train = w[train] / np.sum(w[train])
        path = fit_path(features[train], target[train], w_train, grid)
        for g, predictor in enumerate(path):
            error = target[held] - link(predictor.linear_predictor(features[held]))
            risk[g] += float(w[held] @ (error * error))
    return float(grid[int(np.argmin(risk))])


def fit_ridge(
        features: np.ndarray,
        target: np.ndarray,
        weights: Optional[np.ndarray],
        penalty: Optional[float],
        folds: int,
        seed: int
) -> tuple[LinearPredictor, list[str]]:
    w = normalized_weights(features.shape[0], weights)
    if penalty is None:
        _, _, _, cov = _gaussian_problem(features, target, w)
        grid = lambda_grid(cov, 0.0)
        penalty = choose_penalty(
            features, target, w, grid, folds, seed,
            lambda x, y, ww, g: [_ridge(x, y, ww, lam) for lam in g],
            lambda eta: eta
        )
    return (_ridge(features, target, w, penalty), [f"lambda:{penalty:.6g}"])


def fit_elastic_net(
        features: np.ndarray,
        target: np.ndarray,
        weights: Optional[np.ndarray],
        penalty: Optional[float],
        mixing: float,
        folds: int,
        seed: int
) -> tuple[LinearPredictor, list[str]]:
    w = normalized_weights(features.shape[0], weights)
    if penalty is None:
        _, _, _, cov = _gaussian_problem(features, target, w)
        grid = lambda_grid(cov, mixing)
        penalty = choose_penalty(
            features, target, w, grid, folds, seed,
            lambda x, y, ww, g: [
                predictor for predictor, _ in _elastic_net_path(x, y, ww, mixing, g)
            ],
            lambda eta: eta
        )
        # refit along the path down to the chosen value for warm starts
        grid = grid[grid >= penalty]
    else:
        grid = np.array([penalty])
    predictor, converged = _elastic_net_path(features, target, w, mixing, grid)[-1]
    flags = [f"lambda:{penalty:.6g}"]
    if not converged:
        _logger.warning("coordinate descent did not converge at lambda=%.6g", penalty)
        flags.append("cd_not_converged")
    return (predictor, flags)


__all__ = [
    "LinearPredictor", "Standardizer", "coordinate_descent", "soft_threshold",
    "lambda_grid", "choose_penalty", "normalized_weights",
    "fit_ols", "fit_ridge", "fit_elastic_net",
]
