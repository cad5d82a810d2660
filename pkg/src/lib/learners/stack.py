import logging

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from scipy.optimize import nnls

from .. import util
from ..const import PredictionMode
from ..errors import DidError, LearnerError
from ..result import Err, Ok, capture
from . import model
from .spec import LearnerSpec


_logger = logging.getLogger(__name__)

# weight of the appended sum-to-one row relative to the data block
_SIMPLEX_ROW_SCALE = 1e3


@dataclass(frozen=True)
class StackWeights:
    weights: np.ndarray
    cv_risk: np.ndarray
    stack_risk: float
    dropped: tuple[int, ...]


def _fold_seed(seed: int) -> int:
    return util.derive_seed(seed, 0)


def _member_seed(seed: int, member: int, fold: int = -1) -> int:
    return util.derive_seed(seed, 1, member, fold + 1)


def cv_predictions(
        members: Sequence[LearnerSpec],
        features: np.ndarray,
        target: np.ndarray,
        folds: int,
        seed: int,
        weights: Optional[np.ndarray] = None,
        mode: PredictionMode = PredictionMode.REAL,
        feature_names: Optional[Sequence[str]] = None
) -> tuple[np.ndarray, dict[int, str]]:
    """Out-of-fold predictions, one column per member.

    A member that fails on any fold is reported in the failure map and its
    column is left as NaN.
    """
    n = features.shape[0]
    if n < folds:
        raise LearnerError(f"{folds}-fold stacking needs >= {folds} rows, got {n}")
    labels = util.balanced_fold_labels(n, folds, _fold_seed(seed))
    predictions = np.full((n, len(members)), np.nan)
    failures: dict[int, str] = dict()
    for l, member in enumerate(members):
        for v in range(folds):
            train = labels != v
            held = ~train
            fitted = capture(
                lambda: model.fit(
                    member, features[train], target[train],
                    None if weights is None else weights[train],
                    _member_seed(seed, l, v), mode, feature_names
                ),
                DidError, ValueError, np.linalg.LinAlgError, FloatingPointError
            )
            match fitted:
                case Ok(ok=fitted_model):
                    predictions[held, l] = fitted_model.predict(features[held])
                case Err(err=message):
                    failures[l] = f"fold {v}: {message}"
                    break
    return (predictions, failures)


def _risk(predictions: np.ndarray, target: np.ndarray, w: np.ndarray) -> np.ndarray:
    residual = target[:, None] - predictions
    return w @ (residual * residual)


def simplex_weights(
        predictions: np.ndarray,
        target: np.ndarray,
        w: np.ndarray
) -> np.ndarray:
    """Convex weights minimizing weighted squared error of the combination.

    Active-set NNLS with an appended sum-to-one row, normalized, then checked
    against every vertex so the result is never worse than the best member.
    """
    n_members = predictions.shape[1]
    vertex_risk = _risk(predictions, target, w)
    best = int(np.argmin(vertex_risk))
    if n_members == 1:
        return np.ones(1)
    root = np.sqrt(w)
    design = predictions * root[:, None]
    response = target * root
    scale = _SIMPLEX_ROW_SCALE * max(1.0, float(np.linalg.norm(design)), float(np.linalg.norm(response)))
    coef, _ = nnls(
        np.vstack([design, np.full((1, n_members), scale)]),
        np.append(response, scale)
    )
    vertex = np.zeros(n_members)
    vertex[best] = 1.0
    total = float(np.sum(coef))
    if not total > 0:
        return vertex
    coef = coef / total
    stack_risk = float(_risk((predictions @ coef)[:, None], target, w)[0])
    if stack_risk > float(vertex_risk[best]) + 1e-12:
        return vertex
    return coef


def cv_stack_weights(
        members: Sequence[LearnerSpec],
        features: np.ndarray,
        target: np.ndarray,
        folds: int,
        seed: int,
        weights: Optional[np.ndarray] = None,
        mode: PredictionMode = PredictionMode.REAL,
        feature_names: Optional[Sequence[str]] = None
) -> StackWeights:
    if folds < 2:
        raise LearnerError(f"stacking needs V >= 2 folds, got {folds}")
    features = np.asarray(features, dtype=float)
    target = np.asarray(target, dtype=float)
    predictions, failures = cv_predictions(
        members, features, target, folds, seed, weights, mode, feature_names
    )
    for l, message in failures.items():
        _logger.warning("dropping stack member %d (%s): %s", l, members[l].kind, message)
    kept = [l for l in range(len(members)) if l not in failures]
    if not kept:
        raise LearnerError(
            "every stack member failed: "
            + "; ".join(f"{members[l].kind}: {m}" for l, m in failures.items())
        )
    w = np.full(len(target), 1.0 / len(target)) if weights is None else weights / np.sum(weights)
    kept_weights = simplex_weights(predictions[:, kept], target, w)
    result = np.zeros(len(members))
    result[kept] = kept_weights
    cv_risk = np.full(len(members), np.nan)
    cv_risk[kept] = _risk(predictions[:, kept], target, w)
    stack_risk = float(_risk((predictions[:, kept] @ kept_weights)[:, None], target, w)[0])
    return StackWeights(result, cv_risk, stack_risk, tuple(sorted(failures)))


class StackPredictor:

    _members: tuple[model.FittedModel, ...]
    _weights: np.ndarray
    _cv_risk: np.ndarray

    def __init__(
            self,
            members: Sequence[model.FittedModel],
            weights: np.ndarray,
            cv_risk: np.ndarray
    ):
        self._members = tuple(members)
        self._weights = np.asarray(weights, dtype=float)
        self._cv_risk = np.asarray(cv_risk, dtype=float)

    @property
    def members(self) -> tuple[model.FittedModel, ...]:
        return self._members

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def predict(self, features: np.ndarray) -> np.ndarray:
        result = np.zeros(features.shape[0])
        for member, weight in zip(self._members, self._weights):
            result += weight * member.predict(features)
        return result

    def describe(self) -> dict[str, Any]:
        return {
            "members": [member.spec.kind.value for member in self._members],
            "weights": [float(weight) for weight in self._weights],
        }


def fit_stack(
        spec: LearnerSpec,
        features: np.ndarray,
        target: np.ndarray,
        weights: Optional[np.ndarray],
        seed: int,
        mode: PredictionMode,
        feature_names: Sequence[str]
) -> tuple[StackPredictor, list[str]]:
    stacked = cv_stack_weights(
        spec.members, features, target, spec.folds, seed, weights, mode, feature_names
    )
    members = []
    member_weights = []
    member_risk = []
    for l, member in enumerate(spec.members):
        if stacked.weights[l] <= 0:
            continue
        members.append(model.fit(
            member, features, target, weights, _member_seed(seed, l), mode, feature_names
        ))
        member_weights.append(stacked.weights[l])
        member_risk.append(stacked.cv_risk[l])
    flags = [f"dropped:{spec.members[l].kind.value}" for l in stacked.dropped]
    return (StackPredictor(members, np.array(member_weights), np.array(member_risk)), flags)


__all__ = [
    "StackWeights", "StackPredictor", "cv_predictions", "simplex_weights",
    "cv_stack_weights", "fit_stack",
]
