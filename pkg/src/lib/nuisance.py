import logging

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from joblib import Parallel, delayed

from . import const, util
from .const import PredictionMode
from .data_view import MapView, frozen
from .errors import DidError, MissingNuisanceError, NuisanceFitError, PositivityError
from .id import ChainId, QIndex
from .learners import FittedModel, LearnerSpec, fit
from .multimap import MultiMap
from .panel import (
    AdjustmentSchedule, ComplianceProfile, PanelDataset, Regime, compliance,
    design_matrix
)
from .result import Err, Ok, Result


_logger = logging.getLogger(__name__)

FULL_SAMPLE = "full-sample"


@dataclass(frozen=True)
class Learners:
    outcome: LearnerSpec
    propensity: LearnerSpec


def training_mask(n: int, training: Optional[Sequence[int] | np.ndarray]) -> np.ndarray:
    if training is None:
        return np.ones(n, dtype=bool)
    training = np.asarray(training)
    if training.dtype == bool:
        if training.shape != (n,):
            raise ValueError(f"training mask must have length {n}")
        return training.copy()
    mask = np.zeros(n, dtype=bool)
    mask[training.astype(np.int64)] = True
    return mask


# Q chains ----------------------------------------------------------------

class QChain:
    """Fitted stages Q^{j,k,m}, m = k..1, with all-unit predictions."""

    _chain: ChainId
    _outcome: np.ndarray
    _models: dict[int, FittedModel]
    _predictions: dict[int, np.ndarray]
    _stratum_sizes: dict[int, int]
    _order: tuple[int, ...]
    _unseen: dict[int, int]

    def __init__(
            self,
            chain: ChainId,
            outcome: np.ndarray,
            models: Mapping[int, FittedModel],
            predictions: Mapping[int, np.ndarray],
            stratum_sizes: Mapping[int, int],
            order: Sequence[int],
            unseen: Optional[Mapping[int, int]] = None
    ):
        self._chain = chain
        self._outcome = frozen(outcome)
        self._models = dict(models)
        self._predictions = {m: frozen(values) for m, values in predictions.items()}
        self._stratum_sizes = dict(stratum_sizes)
        self._order = tuple(order)
        self._unseen = dict(unseen or {})

    @property
    def chain(self) -> ChainId:
        return self._chain

    @property
    def order(self) -> tuple[int, ...]:
        return self._order

    def models(self) -> MapView[int, FittedModel]:
        return MapView(self._models)

    def model(self, m: int) -> FittedModel:
        if m not in self._models:
            raise MissingNuisanceError(str(QIndex(self._chain.j, self._chain.k, m)))
        return self._models[m]

    def predictions(self, m: int) -> np.ndarray:
        """Q^{j,k,m} at every unit; m = k+1 is the raw outcome Y_j."""
        if m == self._chain.k + 1:
            return self._outcome
        if m not in self._predictions:
            raise MissingNuisanceError(str(QIndex(self._chain.j, self._chain.k, m)))
        return self._predictions[m]

    def stratum_size(self, m: int) -> int:
        return self._stratum_sizes[m]

    def summary(self) -> dict[str, Any]:
        return {
            str(QIndex(self._chain.j, self._chain.k, m)): {
                **self._models[m].provenance(),
                "stratum_size": self._stratum_sizes[m],
                **({"unseen_strata": self._unseen[m]} if self._unseen.get(m) else {}),
            }
            for m in self._order
        }


def fit_q_chain(
        data: PanelDataset,
        regime: Regime,
        schedule: AdjustmentSchedule,
        j: int,
        k: int,
        learner: LearnerSpec,
        training: Optional[Sequence[int] | np.ndarray] = None,
        seed: int = const.DEFAULT_SEED,
        profile: Optional[ComplianceProfile] = None
) -> QChain:
    chain = ChainId(j, k)
    if profile is None:
        profile = compliance(data, regime)
    train = training_mask(data.n_units, training)
    current = data.outcome[:, j]
    models: dict[int, FittedModel] = dict()
    predictions: dict[int, np.ndarray] = dict()
    sizes: dict[int, int] = dict()
    unseen: dict[int, int] = dict()
    order: list[int] = []
    for m in chain.stages():
        rows = train & profile.at(m)
        if not np.any(rows):
            raise PositivityError(m, f"no training unit follows the regime through m={m} in chain {chain}")
        design = design_matrix(data, schedule, m)
        try:
            model = fit(
                learner, design[rows], current[rows],
                seed=util.derive_seed(seed, 1, j, k, m),
                feature_names=schedule.column_names(data, m)
            )
        except DidError as exc:
            exc.add_note(f"at {QIndex(j, k, m)}")
            raise
        current = model.predict(design)
        models[m] = model
        predictions[m] = current
        sizes[m] = int(np.sum(rows))
        unseen[m] = model.unseen_count(design[~rows]) if np.any(~rows) else 0
        order.append(m)
        _logger.debug("fitted Q%s on %d units", QIndex(j, k, m), sizes[m])
    return QChain(chain, data.outcome[:, j], models, predictions, sizes, order, unseen)


# propensities -------------------------------------------------------------

class PropensityFit:
    """f(A_m = a*_m | W-bar_m, A-bar_{m-1} = a*-bar_{m-1}) for one time m.

    Degenerate strata carry a constant instead of a fitted model. Pooled fits
    share one model across times and are told which m to evaluate at.
    """

    _m: int
    _model: Optional[FittedModel]
    _constant: Optional[float]
    _stratum_size: int
    _pooled: Optional["PooledPropensity"]

    def __init__(
            self,
            m: int,
            stratum_size: int,
            model: Optional[FittedModel] = None,
            constant: Optional[float] = None,
            pooled: Optional["PooledPropensity"] = None
    ):
        if (model is None) + (constant is None) + (pooled is None) != 2:
            raise ValueError("propensity needs exactly one of model, constant or pooled fit")
        self._m = m
        self._model = model
        self._constant = constant
        self._stratum_size = stratum_size
        self._pooled = pooled

    @property
    def m(self) -> int:
        return self._m

    @property
    def degenerate(self) -> bool:
        return self._constant is not None

    @property
    def model(self) -> Optional[FittedModel]:
        return self._model if self._pooled is None else self._pooled.model

    @property
    def stratum_size(self) -> int:
        return self._stratum_size

    def evaluate(self, data: PanelDataset, schedule: AdjustmentSchedule) -> np.ndarray:
        if self._constant is not None:
            return np.full(data.n_units, self._constant)
        if self._pooled is not None:
            return self._pooled.evaluate(data, schedule, self._m)
        assert self._model is not None
        return self._model.predict(design_matrix(data, schedule, self._m))

    def summary(self) -> dict[str, Any]:
        result: dict[str, Any] = {"stratum_size": self._stratum_size}
        if self._constant is not None:
            result.update({"kind": "constant", "value": self._constant, "flags": ["degenerate"]})
        elif self._pooled is not None:
            result.update({"kind": "pooled"})
        else:
            assert self._model is not None
            result.update(self._model.provenance())
        return result


def _propensity_stratum(
        data: PanelDataset,
        regime: Regime,
        m: int,
        train: np.ndarray,
        profile: ComplianceProfile
) -> tuple[np.ndarray, np.ndarray]:
    if m < 1:
        raise ValueError(f"propensities are modelled for m >= 1, got {m}")
    rows = train & profile.at(m - 1)
    if not np.any(rows):
        raise PositivityError(m, f"no training unit follows the regime through m={m - 1}")
    target = (data.treatment[:, m] == regime[m]).astype(float)
    return (rows, target)


def fit_propensity(
        data: PanelDataset,
        regime: Regime,
        schedule: AdjustmentSchedule,
        m: int,
        learner: LearnerSpec,
        training: Optional[Sequence[int] | np.ndarray] = None,
        seed: int = const.DEFAULT_SEED,
        profile: Optional[ComplianceProfile] = None
) -> PropensityFit:
    if profile is None:
        profile = compliance(data, regime)
    rows, target = _propensity_stratum(
        data, regime, m, training_mask(data.n_units, training), profile
    )
    size = int(np.sum(rows))
    observed = target[rows]
    if np.all(observed == 1.0):
        _logger.debug("propensity stratum at m=%d is fully compliant", m)
        return PropensityFit(m, size, constant=1.0)
    if np.all(observed == 0.0):
        _logger.warning("no unit in the m=%d stratum follows the regime; propensity is 0", m)
        return PropensityFit(m, size, constant=0.0)
    design = design_matrix(data, schedule, m)
    model = fit(
        learner, design[rows], observed,
        seed=util.derive_seed(seed, 2, m),
        mode=PredictionMode.PROBABILITY,
        feature_names=schedule.column_names(data, m)
    )
    return PropensityFit(m, size, model=model)


class PooledPropensity:
    """One probability model over the union of compliant strata, m as a feature."""

    _model: FittedModel
    _up_to: int
    _window: Optional[int]

    def __init__(self, model: FittedModel, up_to: int, window: Optional[int]):
        self._model = model
        self._up_to = up_to
        self._window = window

    @property
    def model(self) -> FittedModel:
        return self._model

    @property
    def window(self) -> Optional[int]:
        return self._window

    def evaluate(self, data: PanelDataset, schedule: AdjustmentSchedule, m: int) -> np.ndarray:
        features, _ = pooled_design(data, schedule, m, self._up_to, self._window)
        return self._model.predict(features)


def pooled_design(
        data: PanelDataset,
        schedule: AdjustmentSchedule,
        m: int,
        up_to: int,
        window: Optional[int] = None
) -> tuple[np.ndarray, list[str]]:
    """Features of time m in the pooled propensity design, time first.

    Without a window the columns are those of W-bar_{up_to} with entries
    not yet selected at m set to 0. With window w the columns are all
    covariates at lags 0..w-1 from m, zero before time 0.
    """
    n = data.n_units
    if window is None:
        columns = schedule.columns(up_to)
        available = set(schedule.columns(m))
        full = design_matrix(data, schedule, up_to)
        for c, column in enumerate(columns):
            if column not in available:
                full[:, c] = 0.0
        names = schedule.column_names(data, up_to)
    else:
        blocks = []
        names = []
        for lag in range(window):
            s = m - lag
            if s >= 0:
                blocks.append(data.covariates_at(s))
            else:
                blocks.append(np.zeros((n, data.n_covariates)))
            names += [f"{name}@lag{lag}" for name in data.covariate_names]
        full = np.column_stack(blocks) if blocks else np.empty((n, 0))
    return (np.column_stack([np.full(n, float(m)), full]), ["time", *names])


def fit_pooled_propensity(
        data: PanelDataset,
        regime: Regime,
        schedule: AdjustmentSchedule,
        up_to: int,
        learner: LearnerSpec,
        training: Optional[Sequence[int] | np.ndarray] = None,
        seed: int = const.DEFAULT_SEED,
        window: Optional[int] = None,
        profile: Optional[ComplianceProfile] = None
) -> dict[int, PropensityFit]:
    if window is not None and window < 1:
        raise ValueError(f"propensity window must be >= 1, got {window}")
    if profile is None:
        profile = compliance(data, regime)
    train = training_mask(data.n_units, training)
    stacked_features = []
    stacked_target = []
    sizes: dict[int, int] = dict()
    degenerate: list[int] = []
    names: list[str] = []
    for m in range(1, up_to + 1):
        rows, target = _propensity_stratum(data, regime, m, train, profile)
        sizes[m] = int(np.sum(rows))
        if np.all(target[rows] == 1.0):
            degenerate.append(m)
            continue
        features, names = pooled_design(data, schedule, m, up_to, window)
        stacked_features.append(features[rows])
        stacked_target.append(target[rows])
    fits: dict[int, PropensityFit] = {
        m: PropensityFit(m, sizes[m], constant=1.0) for m in degenerate
    }
    if stacked_features:
        model = fit(
            learner, np.vstack(stacked_features), np.concatenate(stacked_target),
            seed=util.derive_seed(seed, 2, 0),
            mode=PredictionMode.PROBABILITY,
            feature_names=names
        )
        pooled = PooledPropensity(model, up_to, window)
        for m in range(1, up_to + 1):
            if m not in fits:
                fits[m] = PropensityFit(m, sizes[m], pooled=pooled)
    return {m: fits[m] for m in sorted(fits)}


# cumulative propensity -----------------------------------------------------

class CumulativePropensity:
    """g_m per unit for m = 0..up_to; g_0 = 1 because A_0 = a*_0 is assumed."""

    _values: np.ndarray
    _factors: np.ndarray
    _truncated: np.ndarray
    _epsilon: float

    def __init__(self, factors: np.ndarray, truncated: np.ndarray, epsilon: float):
        n = factors.shape[0]
        self._factors = frozen(factors)
        self._truncated = frozen(truncated)
        self._values = frozen(np.column_stack([np.ones(n), np.cumprod(factors, axis=1)]))
        self._epsilon = epsilon

    @classmethod
    def from_raw(cls, raw: np.ndarray, epsilon: float) -> "CumulativePropensity":
        """Truncate raw factors f_m below epsilon up to epsilon."""
        if not 0 < epsilon < 0.5:
            raise ValueError(f"truncation level must lie in (0, 0.5), got {epsilon}")
        raw = np.asarray(raw, dtype=float)
        return cls(np.maximum(raw, epsilon), raw < epsilon, epsilon)

    @property
    def up_to(self) -> int:
        return self._factors.shape[1]

    @property
    def epsilon(self) -> float:
        return self._epsilon

    @property
    def values(self) -> np.ndarray:
        return self._values

    def at(self, m: int) -> np.ndarray:
        return self._values[:, m]

    @property
    def factors(self) -> np.ndarray:
        return self._factors

    @property
    def truncation_matrix(self) -> np.ndarray:
        """Per unit and m = 1..up_to, whether the factor was raised to epsilon."""
        return self._truncated

    def truncation_counts(self) -> list[int]:
        """Truncated factors per m = 1..up_to."""
        return [int(count) for count in self._truncated.sum(axis=0)]

    @property
    def total_truncated(self) -> int:
        return int(self._truncated.sum())


def cumulative_g(
        propensities: Mapping[int, PropensityFit],
        data: PanelDataset,
        schedule: AdjustmentSchedule,
        up_to: int,
        epsilon: float = const.DEFAULT_EPSILON
) -> CumulativePropensity:
    missing = [m for m in range(1, up_to + 1) if m not in propensities]
    if missing:
        raise MissingNuisanceError(f"propensity at m={missing}")
    raw = np.empty((data.n_units, up_to))
    for m in range(1, up_to + 1):
        raw[:, m - 1] = propensities[m].evaluate(data, schedule)
    return CumulativePropensity.from_raw(raw, epsilon)


# nuisance set --------------------------------------------------------------

class NuisanceSet:
    """All fitted Q^{j,k,m} and g_m needed up to a horizon."""

    _horizon: int
    _chains: dict[ChainId, QChain]
    _propensities: dict[int, PropensityFit]
    _g: CumulativePropensity
    _pooled: bool
    _provenance: str
    _compliant_counts: tuple[int, ...]

    def __init__(
            self,
            horizon: int,
            chains: Mapping[ChainId, QChain],
            propensities: Mapping[int, PropensityFit],
            g: CumulativePropensity,
            pooled: bool,
            provenance: str,
            compliant_counts: Sequence[int]
    ):
        self._horizon = horizon
        self._chains = dict(chains)
        self._propensities = dict(propensities)
        self._g = g
        self._pooled = pooled
        self._provenance = provenance
        self._compliant_counts = tuple(compliant_counts)
        for k in range(1, horizon + 1):
            for j in (k, k - 1):
                if ChainId(j, k) not in self._chains:
                    raise MissingNuisanceError(str(ChainId(j, k)))

    @property
    def horizon(self) -> int:
        return self._horizon

    @property
    def epsilon(self) -> float:
        return self._g.epsilon

    @property
    def pooled(self) -> bool:
        return self._pooled

    @property
    def provenance(self) -> str:
        return self._provenance

    @property
    def g(self) -> CumulativePropensity:
        return self._g

    @property
    def compliant_counts(self) -> tuple[int, ...]:
        return self._compliant_counts

    def chains(self) -> MapView[ChainId, QChain]:
        return MapView(self._chains)

    def chain(self, j: int, k: int) -> QChain:
        chain = ChainId(j, k)
        if chain not in self._chains:
            raise MissingNuisanceError(str(chain))
        return self._chains[chain]

    def propensities(self) -> MapView[int, PropensityFit]:
        return MapView(self._propensities)

    def q_models(self) -> dict[QIndex, FittedModel]:
        return {
            QIndex(chain.j, chain.k, m): model
            for chain, fitted in self._chains.items()
            for m, model in fitted.models().items()
        }

    def summary(self) -> dict[str, Any]:
        q: dict[str, Any] = dict()
        for chain in sorted(self._chains, key=lambda c: (c.k, -c.j)):
            q.update(self._chains[chain].summary())
        return {
            "provenance": self._provenance,
            "horizon": self._horizon,
            "epsilon": self.epsilon,
            "pooled_propensity": self._pooled,
            "q_models": q,
            "propensity": {str(m): fit.summary() for m, fit in self._propensities.items()},
            "truncated_factors": {
                str(m): count for m, count in enumerate(self._g.truncation_counts(), start=1)
            },
            "compliant_counts": list(self._compliant_counts),
        }


def _failure(exc: BaseException) -> Err:
    notes = getattr(exc, "__notes__", [])
    return Err("; ".join([str(exc), *notes]), type(exc).__name__)


def _fit_chain_safely(*args, **kwargs) -> Result[QChain]:
    try:
        return Ok(fit_q_chain(*args, **kwargs))
    except (DidError, ValueError, np.linalg.LinAlgError) as exc:
        return _failure(exc)


def fit_propensities(
        data: PanelDataset,
        regime: Regime,
        schedule: AdjustmentSchedule,
        up_to: int,
        learner: LearnerSpec,
        training: Optional[Sequence[int] | np.ndarray] = None,
        pooled: bool = False,
        seed: int = const.DEFAULT_SEED,
        window: Optional[int] = None,
        profile: Optional[ComplianceProfile] = None,
        failures: Optional[MultiMap[str, Err]] = None
) -> dict[int, PropensityFit]:
    """Per-time (or pooled) propensity fits for m = 1..up_to.

    With a failure map, errors are recorded there and the failed times are
    left out; without one they propagate.
    """
    if profile is None:
        profile = compliance(data, regime)
    train = training_mask(data.n_units, training)
    propensities: dict[int, PropensityFit] = dict()
    try:
        if pooled and up_to >= 1:
            return fit_pooled_propensity(
                data, regime, schedule, up_to, learner, train, seed, window, profile
            )
        for m in range(1, up_to + 1):
            try:
                propensities[m] = fit_propensity(
                    data, regime, schedule, m, learner, train, seed, profile
                )
            except (DidError, ValueError, np.linalg.LinAlgError) as exc:
                if failures is None:
                    raise
                failures.add(f"(propensity m={m})", _failure(exc))
    except (DidError, ValueError, np.linalg.LinAlgError) as exc:
        if failures is None:
            raise
        failures.add("(pooled propensity)", _failure(exc))
    return propensities


def fit_nuisance_set(
        data: PanelDataset,
        regime: Regime,
        schedule: AdjustmentSchedule,
        t: int,
        learners: Learners,
        training: Optional[Sequence[int] | np.ndarray] = None,
        epsilon: float = const.DEFAULT_EPSILON,
        pooled: bool = False,
        seed: int = const.DEFAULT_SEED,
        window: Optional[int] = None,
        threads: int = 1,
        provenance: str = FULL_SAMPLE
) -> NuisanceSet:
    """Fit every chain (k,k), (k-1,k) for k <= t and every propensity m <= t.

    Failures are collected across all coordinates and raised together.
    """
    if not 0 <= t <= data.horizon:
        raise ValueError(f"horizon {t} outside 0..{data.horizon}")
    profile = compliance(data, regime)
    train = training_mask(data.n_units, training)
    chains = [ChainId(j, k) for k in range(1, t + 1) for j in (k, k - 1)]

    fitted = Parallel(n_jobs=threads, backend="threading")(
        delayed(_fit_chain_safely)(
            data, regime, schedule, chain.j, chain.k, learners.outcome,
            train, seed, profile
        )
        for chain in chains
    ) if threads > 1 else [
        _fit_chain_safely(
            data, regime, schedule, chain.j, chain.k, learners.outcome,
            train, seed, profile
        )
        for chain in chains
    ]

    failures: MultiMap[str, Err] = MultiMap()
    fitted_chains: dict[ChainId, QChain] = dict()
    for chain, result in zip(chains, fitted):
        match result:
            case Ok(ok=q_chain):
                fitted_chains[chain] = q_chain
            case Err() as failure:
                failures.add(str(chain), failure)

    propensities = fit_propensities(
        data, regime, schedule, t, learners.propensity, train, pooled, seed,
        window, profile, failures
    )

    if failures.key_count() > 0:
        raise NuisanceFitError([
            (coordinate, failure.err, failure.kind)
            for coordinate, failure in failures.flat_items()
        ])

    g = cumulative_g(propensities, data, schedule, t, epsilon)
    result = NuisanceSet(
        t, fitted_chains, propensities, g, pooled, provenance, profile.counts()
    )
    _logger.info(
        "fitted nuisance set (%s): %d chains, %d propensities, %d truncated factors",
        provenance, len(fitted_chains), len(propensities), g.total_truncated
    )
    return result


__all__ = [
    "Learners", "QChain", "PropensityFit", "PooledPropensity",
    "CumulativePropensity", "NuisanceSet", "FULL_SAMPLE",
    "fit_q_chain", "fit_propensity", "fit_propensities", "fit_pooled_propensity", "pooled_design",
    "cumulative_g", "fit_nuisance_set", "training_mask",
]
