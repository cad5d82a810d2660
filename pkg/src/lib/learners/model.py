import logging

from collections.abc import Sequence
from typing import Any, Optional, Protocol

import numpy as np

from ..const import LearnerKind, PredictionMode
from ..errors import DimensionMismatchError, LearnerError
from .linear import fit_elastic_net, fit_ols, fit_ridge
from .logistic import fit_logistic, fit_logistic_elastic_net
from .simple import SaturatedPredictor, fit_mean, fit_saturated
from .spec import LearnerSpec
from .tree import fit_bagged_trees, fit_tree


_logger = logging.getLogger(__name__)


class Predictor(Protocol):

    def predict(self, features: np.ndarray) -> np.ndarray:
        ...


class FittedModel:
    """A learner fitted to one design; immutable and safe to share."""

    _spec: LearnerSpec
    _mode: PredictionMode
    _predictor: Predictor
    _input_names: tuple[str, ...]
    _feature_names: tuple[str, ...]
    _flags: tuple[str, ...]
    _n_train: int

    def __init__(
            self,
            spec: LearnerSpec,
            mode: PredictionMode,
            predictor: Predictor,
            input_names: Sequence[str],
            feature_names: Sequence[str],
            flags: Sequence[str],
            n_train: int
    ):
        self._spec = spec
        self._mode = mode
        self._predictor = predictor
        self._input_names = tuple(input_names)
        self._feature_names = tuple(feature_names)
        self._flags = tuple(flags)
        self._n_train = n_train

    @property
    def spec(self) -> LearnerSpec:
        return self._spec

    @property
    def mode(self) -> PredictionMode:
        return self._mode

    @property
    def predictor(self) -> Predictor:
        return self._predictor

    @property
    def input_width(self) -> int:
        return len(self._input_names)

    @property
    def input_names(self) -> tuple[str, ...]:
        return self._input_names

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self._feature_names

    @property
    def flags(self) -> tuple[str, ...]:
        return self._flags

    @property
    def n_train(self) -> int:
        return self._n_train

    def _mapped(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim != 2:
            raise LearnerError(f"features must be a matrix, got shape {features.shape}")
        if features.shape[1] != self.input_width:
            raise DimensionMismatchError(self.input_width, features.shape[1])
        mapped, _ = self._spec.feature_map.apply(features, self._input_names)
        return mapped

    def predict(self, features: np.ndarray) -> np.ndarray:
        values = self._predictor.predict(self._mapped(features))
        if self._mode == PredictionMode.PROBABILITY:
            values = np.clip(values, 0.0, 1.0)
        return values

    def unseen_count(self, features: np.ndarray) -> int:
        if isinstance(self._predictor, SaturatedPredictor):
            return self._predictor.unseen_rows(self._mapped(features))
        return 0

    def provenance(self) -> dict[str, Any]:
        result: dict[str, Any] = {
            "kind": self._spec.kind.value,
            "mode": self._mode.value,
            "n_train": self._n_train,
            "n_features": len(self._feature_names),
            "flags": list(self._flags),
        }
        describe = getattr(self._predictor, "describe", None)
        if describe is not None:
            result.update(describe())
        return result

    def __str__(self) -> str:
        return f"FittedModel({self._spec.kind}, n={self._n_train}, mode={self._mode})"


def _validate(features, target, weights, mode) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    features = np.asarray(features, dtype=float)
    target = np.asarray(target, dtype=float).reshape(-1)
    if features.ndim != 2:
        raise LearnerError(f"features must be a matrix, got shape {features.shape}")
    if len(target) == 0:
        raise LearnerError("cannot fit a learner on empty data")
    if features.shape[0] != len(target):
        raise LearnerError(
            f"{features.shape[0]} feature rows but {len(target)} target values"
        )
    if not np.all(np.isfinite(features)) or not np.all(np.isfinite(target)):
        raise LearnerError("features and target must be finite")
    if mode == PredictionMode.PROBABILITY and (np.any(target < 0) or np.any(target > 1)):
        raise LearnerError("probability-mode targets must lie in [0,1]")
    if weights is not None:
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if len(weights) != len(target):
            raise LearnerError(f"{len(weights)} weights for {len(target)} rows")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise LearnerError("weights must be finite and non-negative")
        if not np.sum(weights) > 0:
            raise LearnerError("weights sum to zero")
    return (features, target, weights)


def _fit_backend(
        spec: LearnerSpec,
        features: np.ndarray,
        target: np.ndarray,
        weights: Optional[np.ndarray],
        seed: int,
        mode: PredictionMode,
        names: list[str]
) -> tuple[Predictor, list[str]]:
    match spec.kind:
        case LearnerKind.MEAN:
            return (fit_mean(target, weights), [])
        case LearnerKind.LINEAR:
            return fit_ols(features, target, weights)
        case LearnerKind.RIDGE:
            return fit_ridge(features, target, weights, spec.penalty, spec.folds, seed)
        case LearnerKind.ELASTIC_NET:
            return fit_elastic_net(
                features, target, weights, spec.penalty, spec.mixing, spec.folds, seed
            )
        case LearnerKind.LOGISTIC:
            return fit_logistic(features, target, weights)
        case LearnerKind.LOGISTIC_ELASTIC_NET:
            return fit_logistic_elastic_net(
                features, target, weights, spec.penalty, spec.mixing, spec.folds, seed
            )
        case LearnerKind.TREE:
            return (fit_tree(features, target, weights, spec.max_depth, spec.min_leaf), [])
        case LearnerKind.BAGGED_TREES:
            return (fit_bagged_trees(
                features, target, weights, spec.max_depth, spec.min_leaf,
                spec.n_bags, seed
            ), [])
        case LearnerKind.SATURATED:
            return (fit_saturated(features, target, weights), [])
        case LearnerKind.STACK:
            from .stack import fit_stack
            return fit_stack(spec, features, target, weights, seed, mode, names)
    raise LearnerError(f"unsupported learner kind {spec.kind}")


def fit(
        spec: LearnerSpec,
        features: np.ndarray,
        target: np.ndarray,
        weights: Optional[np.ndarray] = None,
        seed: int = 0,
        mode: PredictionMode = PredictionMode.REAL,
        feature_names: Optional[Sequence[str]] = None
) -> FittedModel:
    features, target, weights = _validate(features, target, weights, mode)
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(features.shape[1])]
    if len(feature_names) != features.shape[1]:
        raise DimensionMismatchError(features.shape[1], len(feature_names))
    mapped, mapped_names = spec.feature_map.apply(features, feature_names)
    predictor, flags = _fit_backend(
        spec, mapped, target, weights, seed, mode, mapped_names
    )
    model = FittedModel(
        spec, mode, predictor, feature_names, mapped_names, flags, len(target)
    )
    _logger.debug("fitted %s on %d features, flags=%s", model, len(mapped_names), flags)
    return model


__all__ = ["Predictor", "FittedModel", "fit"]
