import logging

from typing import Optional

import numpy as np

from scipy.special import expit

from ..errors import LearnerError
from .linear import (
    LinearPredictor, Standardizer, choose_penalty, coordinate_descent,
    lambda_grid, normalized_weights
)


_logger = logging.getLogger(__name__)

SCORE_TOLERANCE = 1e-10
MAX_NEWTON_STEPS = 100
FALLBACK_RIDGE = 1e-6
# |eta| beyond this means fitted probabilities saturate: quasi-separation
SEPARATION_ETA = 35.0
_MIN_CURVATURE = 1e-5


class LogisticPredictor:

    _linear: LinearPredictor

    def __init__(self, linear: LinearPredictor):
        self._linear = linear

    @property
    def intercept(self) -> float:
        return self._linear.intercept

    @property
    def coef(self) -> np.ndarray:
        return self._linear.coef

    def linear_predictor(self, features: np.ndarray) -> np.ndarray:
        return self._linear.linear_predictor(features)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return expit(self.linear_predictor(features))


def _check_target(target: np.ndarray):
    if np.any(target < 0) or np.any(target > 1):
        raise LearnerError("logistic learners need targets in [0,1]")


def _objective(design, target, w, theta, ridge) -> float:
    eta = design @ theta
    # log(1 + e^eta) - y*eta, computed stably
    loss = np.logaddexp(0.0, eta) - target * eta
    return float(w @ loss) + 0.5 * ridge * float(theta[1:] @ theta[1:])


class _Diverged(Exception):
    pass


def _newton(
        design: np.ndarray,
        target: np.ndarray,
        w: np.ndarray,
        ridge: float,
        guard_separation: bool
) -> np.ndarray:
    """Damped Newton (IRLS) on the weighted mean log-likelihood.

    Column 0 of `design` is the unpenalized intercept.
    """
    p = design.shape[1]
    penalty = np.full(p, ridge)
    penalty[0] = 0.0
    theta = np.zeros(p)
    value = _objective(design, target, w, theta, ridge)
    for _ in range(MAX_NEWTON_STEPS):
        eta = design @ theta
        if guard_separation and (
                not np.all(np.isfinite(eta)) or np.max(np.abs(eta)) > SEPARATION_ETA
        ):
            raise _Diverged("fitted probabilities saturate")
        prob = expit(eta)
        score = design.T @ (w * (target - prob)) - penalty * theta
        if np.max(np.abs(score)) <= SCORE_TOLERANCE:
            return theta
        curvature = w * prob * (1.0 - prob)
        hessian = design.T @ (design * curvature[:, None]) + np.diag(penalty)
        try:
            step = np.linalg.solve(hessian, score)
        except np.linalg.LinAlgError:
            raise _Diverged("singular information matrix")
        if not np.all(np.isfinite(step)):
            raise _Diverged("non-finite Newton step")
        scale = 1.0
        while True:
            candidate = theta + scale * step
            candidate_value = _objective(design, target, w, candidate, ridge)
            # absolute slack: near the optimum decreases drop below rounding
            if candidate_value <= value + 1e-12 or scale < 1e-10:
                break
            scale *= 0.5
        theta, value = candidate, candidate_value
    eta = design @ theta
    score = design.T @ (w * (target - expit(eta))) - penalty * theta
    if np.max(np.abs(score)) <= SCORE_TOLERANCE * 100:
        return theta
    raise _Diverged(f"no convergence in {MAX_NEWTON_STEPS} Newton steps")


def fit_logistic(
        features: np.ndarray,
        target: np.ndarray,
        weights: Optional[np.ndarray]
) -> tuple[LogisticPredictor, list[str]]:
    """Maximum-likelihood logistic regression by IRLS.

    Divergence or separation falls back to a ridge-stabilized fit and flags
    it. Works on standardized features and maps coefficients back.
    """
    _check_target(target)
    n = features.shape[0]
    w = normalized_weights(n, weights)
    standardizer = Standardizer(features, w)
    standardized = standardizer.transform(features)
    keep = ~standardizer.constant
    design = np.column_stack([np.ones(n), standardized[:, keep]])
    flags = []
    try:
        theta = _newton(design, target, w, 0.0, guard_separation=True)
    except _Diverged as exc:
        _logger.warning("IRLS failed (%s); refitting with ridge %.0e", exc, FALLBACK_RIDGE)
        flags.append("irls_ridge_fallback")
        try:
            theta = _newton(design, target, w, FALLBACK_RIDGE, guard_separation=False)
        except _Diverged as again:
            raise LearnerError(f"ridge-stabilized logistic fit failed: {again}")
    beta = np.zeros(features.shape[1])
    beta[keep] = theta[1:]
    return (LogisticPredictor(standardizer.to_original(theta[0], beta)), flags)


def _proximal_newton_path(
        features: np.ndarray,
        target: np.ndarray,
        w: np.ndarray,
        mixing: float,
        penalties: np.ndarray
) -> list[tuple[LinearPredictor, bool]]:
    standardizer = Standardizer(features, w)
    standardized = standardizer.transform(features)
    p = features.shape[1]
    beta = np.zeros(p)
    mean = float(np.clip(w @ target, 1e-6, 1 - 1e-6))
    intercept = float(np.log(mean / (1.0 - mean)))
    path = []
    for penalty in penalties:
        converged = False
        for _ in range(MAX_NEWTON_STEPS):
            eta = intercept + standardized @ beta
            prob = expit(eta)
            curvature = np.maximum(prob * (1.0 - prob), _MIN_CURVATURE)
            working = eta + (target - prob) / curvature
            v = w * curvature
            total = float(np.sum(v))
            x_centre = (v @ standardized) / total
            z_centre = float(v @ working) / total
            centred = standardized - x_centre
            gram = centred.T @ (centred * v[:, None])
            cov = centred.T @ (v * (working - z_centre))
            new_beta, _ = coordinate_descent(gram, cov, float(penalty), mixing, beta)
            new_intercept = z_centre - float(x_centre @ new_beta)
            change = max(
                float(np.max(np.abs(new_beta - beta))) if p else 0.0,
                abs(new_intercept - intercept)
            )
            beta, intercept = new_beta, new_intercept
            if change < 1e-8:
                converged = True
                break
        path.append((standardizer.to_original(intercept, beta), converged))
    return path


def fit_logistic_elastic_net(
        features: np.ndarray,
        target: np.ndarray,
        weights: Optional[np.ndarray],
        penalty: Optional[float],
        mixing: float,
        folds: int,
        seed: int
) -> tuple[LogisticPredictor, list[str]]:
    _check_target(target)
    w = normalized_weights(features.shape[0], weights)
    if penalty is None:
        standardized = Standardizer(features, w).transform(features)
        cov = (standardized * w[:, None]).T @ (target - float(w @ target))
        grid = lambda_grid(cov, mixing)
        penalty = choose_penalty(
            features, target, w, grid, folds, seed,
            lambda x, y, ww, g: [
                predictor for predictor, _ in _proximal_newton_path(x, y, ww, mixing, g)
            ],
            expit
        )
        grid = grid[grid >= penalty]
    else:
        grid = np.array([penalty])
    linear, converged = _proximal_newton_path(features, target, w, mixing, grid)[-1]
    flags = [f"lambda:{penalty:.6g}"]
    if not converged:
        _logger.warning("proximal Newton did not converge at lambda=%.6g", penalty)
        flags.append("cd_not_converged")
    return (LogisticPredictor(linear), flags)


__all__ = ["LogisticPredictor", "fit_logistic", "fit_logistic_elastic_net"]
