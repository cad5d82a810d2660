import logging

from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

from joblib import Parallel, delayed
from scipy.special import expit

from . import util
from .errors import ConfigError
from .learners import FeatureMap
from .panel import PanelDataset, Regime


_logger = logging.getLogger(__name__)

N_TIMES = 3
NOISE_SD = 0.1
SHARD_SIZE = 100_000
MIN_ORACLE_DRAWS = 100_000
DEFAULT_COEFFICIENT_SEED = 1
COVARIATE_NAMES = ("W1", "W2", "W3")

# correctly specified feature maps for the structural model
OUTCOME_FEATURES = FeatureMap.custom(["sin(W1)", "W2*W3"])
TREATMENT_FEATURES = FeatureMap.custom(["cos(W2)", "square(W3)"])

# coefficient table widths per time, in draw order
_EQUATIONS = (("gamma1", 3), ("gamma2", 4), ("gamma3", 5), ("alpha", 5), ("beta", 4))


def _frozen_table(values: Any, width: int, name: str) -> np.ndarray:
    table = np.array(values, dtype=float)
    if table.ndim != 2 or table.shape[1] != width:
        raise ConfigError(f"{name} must have shape (T, {width}), got {table.shape}")
    table.setflags(write=False)
    return table


@dataclass(frozen=True)
class DGPConfig:
    """Coefficients and switches of the three-period structural model.

    gamma1[t] = (intercept, W1_{t-1}, A_{t-1})
    gamma2[t] = (intercept, W1_t, W2_{t-1}, A_{t-1})
    gamma3[t] = (intercept, W1_t, W2_t, W3_{t-1}, A_{t-1})
    alpha[t]  = (intercept, W1_t, cos W2_t, W3_t^2, U)
    beta[t]   = (intercept, sin W1_t, W2_t W3_t, A_t)
    """

    gamma1: np.ndarray
    gamma2: np.ndarray
    gamma3: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    noise_sd: float = NOISE_SD
    coefficient_seed: Optional[int] = DEFAULT_COEFFICIENT_SEED
    force_baseline_regime: bool = True
    n_units: int = 1000
    u_in_w: float = 0.0
    u_scale: float = 1.0

    def __post_init__(self):
        for name, width in _EQUATIONS:
            object.__setattr__(self, name, _frozen_table(getattr(self, name), width, name))
        lengths = {getattr(self, name).shape[0] for name, _ in _EQUATIONS}
        if len(lengths) != 1:
            raise ConfigError(f"coefficient tables disagree on the number of times: {lengths}")
        if not self.noise_sd > 0:
            raise ConfigError(f"noise SD must be positive, got {self.noise_sd}")
        if self.n_units < 1:
            raise ConfigError(f"n_units must be positive, got {self.n_units}")

    @property
    def n_times(self) -> int:
        return self.beta.shape[0]

    def with_time_constant_beta(self) -> "DGPConfig":
        return replace(self, beta=np.repeat(self.beta[:1], self.n_times, axis=0))

    def with_units(self, n_units: int) -> "DGPConfig":
        return replace(self, n_units=n_units)

    def to_json(self) -> dict[str, Any]:
        result: dict[str, Any] = {
            name: getattr(self, name).tolist() for name, _ in _EQUATIONS
        }
        result.update({
            "noise_sd": self.noise_sd,
            "coefficient_seed": self.coefficient_seed,
            "force_baseline_regime": self.force_baseline_regime,
            "n_units": self.n_units,
            "u_in_w": self.u_in_w,
            "u_scale": self.u_scale,
        })
        return result

    @classmethod
    def from_json(cls, value: Mapping[str, Any]) -> "DGPConfig":
        try:
            return cls(
                **{name: value[name] for name, _ in _EQUATIONS},
                noise_sd=float(value.get("noise_sd", NOISE_SD)),
                coefficient_seed=value.get("coefficient_seed"),
                force_baseline_regime=bool(value.get("force_baseline_regime", True)),
                n_units=int(value.get("n_units", 1000)),
                u_in_w=float(value.get("u_in_w", 0.0)),
                u_scale=float(value.get("u_scale", 1.0)),
            )
        except KeyError as exc:
            raise ConfigError(f"DGP config lacks {exc}")


def draw_coefficients(
        seed: int = DEFAULT_COEFFICIENT_SEED,
        n_units: int = 1000,
        force_baseline_regime: bool = True
) -> DGPConfig:
    """Every coefficient i.i.d. N(0,1) from one stream.

    Order: gamma1, gamma2, gamma3, alpha, beta; within each, t-ascending then
    subscript-ascending.
    """
    rng = np.random.default_rng(seed)
    tables = {
        name: rng.standard_normal((N_TIMES, width)) for name, width in _EQUATIONS
    }
    return DGPConfig(
        **tables, coefficient_seed=seed, n_units=n_units,
        force_baseline_regime=force_baseline_regime
    )


# noise streams ---------------------------------------------------------------

@dataclass(frozen=True)
class _Noise:
    u: np.ndarray
    w: np.ndarray        # (n, T, 3)
    uniform: np.ndarray  # (n, T)
    y: np.ndarray        # (n, T)


def _shard_noise(n: int, n_times: int, seed: int, shard: int) -> _Noise:
    rng = np.random.default_rng(util.derive_seed(seed, shard))
    u = rng.standard_normal(n)
    w = np.empty((n, n_times, 3))
    uniform = np.empty((n, n_times))
    y = np.empty((n, n_times))
    for t in range(n_times):
        w[:, t, :] = rng.standard_normal((3, n)).T
        uniform[:, t] = rng.random(n)
        y[:, t] = rng.standard_normal(n)
    return _Noise(u, w, uniform, y)


def _shards(n: int) -> Iterator[tuple[int, int]]:
    for shard, start in enumerate(range(0, n, SHARD_SIZE)):
        yield (shard, min(SHARD_SIZE, n - start))


@dataclass(frozen=True)
class _Trajectories:
    u: np.ndarray
    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray


def _simulate(
        config: DGPConfig,
        noise: _Noise,
        forced: Optional[Regime]
) -> _Trajectories:
    n = len(noise.u)
    n_times = config.n_times
    sd = config.noise_sd
    u = config.u_scale * noise.u
    covariates = np.empty((n, n_times, 3))
    treatment = np.zeros((n, n_times), dtype=np.int64)
    outcome = np.empty((n, n_times))
    w1_prev = np.zeros(n)
    w2_prev = np.zeros(n)
    w3_prev = np.zeros(n)
    a_prev = np.zeros(n)
    for t in range(n_times):
        g1, g2, g3 = config.gamma1[t], config.gamma2[t], config.gamma3[t]
        w1 = g1[0] + g1[1] * w1_prev + g1[2] * a_prev + config.u_in_w * u + sd * noise.w[:, t, 0]
        w2 = g2[0] + g2[1] * w1 + g2[2] * w2_prev + g2[3] * a_prev + sd * noise.w[:, t, 1]
        w3 = (
            g3[0] + g3[1] * w1 + g3[2] * w2 + g3[3] * w3_prev + g3[4] * a_prev
            + sd * noise.w[:, t, 2]
        )
        al = config.alpha[t]
        prob = (1.0 - a_prev) * expit(
            al[0] + al[1] * w1 + al[2] * np.cos(w2) + al[3] * w3 * w3 + al[4] * u
        )
        if forced is not None:
            a = np.full(n, float(forced[t]))
        elif t == 0 and config.force_baseline_regime:
            a = np.zeros(n)
        else:
            a = (noise.uniform[:, t] < prob).astype(float)
        be = config.beta[t]
        y = be[0] + be[1] * np.sin(w1) + be[2] * w2 * w3 + be[3] * a + u + sd * noise.y[:, t]
        covariates[:, t] = np.column_stack([w1, w2, w3])
        treatment[:, t] = a.astype(np.int64)
        outcome[:, t] = y
        w1_prev, w2_prev, w3_prev, a_prev = w1, w2, w3, a
    return _Trajectories(u, covariates, treatment, outcome)


def _check_forced(config: DGPConfig, forced: Optional[Regime]):
    if forced is not None:
        if len(forced) != config.n_times:
            raise ConfigError(f"forced regime needs {config.n_times} entries, got {len(forced)}")
        if set(forced.trajectory) - {0, 1}:
            raise ConfigError(f"forced regime must be binary, got {forced}")


def _simulate_units(
        config: DGPConfig,
        n: int,
        seed: int,
        forced: Optional[Regime]
) -> _Trajectories:
    _check_forced(config, forced)
    parts = [
        _simulate(config, _shard_noise(size, config.n_times, seed, shard), forced)
        for shard, size in _shards(n)
    ]
    return _Trajectories(
        np.concatenate([p.u for p in parts]),
        np.concatenate([p.covariates for p in parts]),
        np.concatenate([p.treatment for p in parts]),
        np.concatenate([p.outcome for p in parts]),
    )


def generate_panel(
        config: DGPConfig,
        seed: int,
        forced: Optional[Regime] = None
) -> PanelDataset:
    """Draw `config.n_units` units; U is not part of the returned panel."""
    trajectories = _simulate_units(config, config.n_units, seed, forced)
    return PanelDataset(
        trajectories.treatment, trajectories.covariates, trajectories.outcome,
        covariate_names=COVARIATE_NAMES, alphabet=(0, 1)
    )


def counterfactual_outcomes(
        config: DGPConfig,
        n: int,
        seed: int,
        regime: Optional[Regime] = None
) -> np.ndarray:
    if regime is None:
        regime = Regime.constant(0, config.n_times - 1)
    return _simulate_units(config, n, seed, regime).outcome


# oracle ----------------------------------------------------------------------

@dataclass(frozen=True)
class TruthTable:
    mu: tuple[float, ...]
    mc_se: tuple[float, ...]
    n_mc: int
    seed: int
    regime: tuple[int, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "mu": list(self.mu),
            "mc_se": list(self.mc_se),
            "n_mc": self.n_mc,
            "seed": self.seed,
            "regime": list(self.regime),
        }

    @classmethod
    def from_json(cls, value: Mapping[str, Any]) -> "TruthTable":
        return cls(
            tuple(float(x) for x in value["mu"]),
            tuple(float(x) for x in value["mc_se"]),
            int(value["n_mc"]), int(value["seed"]),
            tuple(int(a) for a in value["regime"]),
        )


@dataclass
class _Moments:
    """Running sums for the oracle, merged across shards in shard order."""

    n: int = 0
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    yy: np.ndarray = field(default_factory=lambda: np.zeros(0))
    d: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dd: np.ndarray = field(default_factory=lambda: np.zeros(0))
    du: np.ndarray = field(default_factory=lambda: np.zeros(0))
    u: float = 0.0
    uu: float = 0.0

    def merge(self, other: "_Moments") -> "_Moments":
        if self.n == 0:
            return other
        return _Moments(
            self.n + other.n, self.y + other.y, self.yy + other.yy,
            self.d + other.d, self.dd + other.dd, self.du + other.du,
            self.u + other.u, self.uu + other.uu
        )


def _shard_moments(config: DGPConfig, regime: Regime, seed: int, shard: int, size: int) -> _Moments:
    sim = _simulate(config, _shard_noise(size, config.n_times, seed, shard), regime)
    y = sim.outcome
    d = np.diff(y, axis=1)
    return _Moments(
        size, y.sum(axis=0), (y * y).sum(axis=0),
        d.sum(axis=0), (d * d).sum(axis=0), (d * sim.u[:, None]).sum(axis=0),
        float(sim.u.sum()), float(sim.u @ sim.u)
    )


def _oracle_moments(
        config: DGPConfig,
        n_mc: int,
        seed: int,
        regime: Regime,
        threads: int
) -> _Moments:
    if n_mc < MIN_ORACLE_DRAWS:
        raise ConfigError(f"oracle needs n_mc >= {MIN_ORACLE_DRAWS}, got {n_mc}")
    _check_forced(config, regime)
    parts = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_shard_moments)(config, regime, seed, shard, size)
        for shard, size in _shards(n_mc)
    )
    total = _Moments()
    for part in parts:
        total = total.merge(part)
    return total


def truth_oracle(
        config: DGPConfig,
        n_mc: int,
        seed: int,
        regime: Optional[Regime] = None,
        threads: int = 1
) -> TruthTable:
    """Monte-Carlo mu_t = E[Y_t(a*)] with treatment forced for everyone."""
    if regime is None:
        regime = Regime.constant(0, config.n_times - 1)
    moments = _oracle_moments(config, n_mc, seed, regime, threads)
    mean = moments.y / moments.n
    variance = np.maximum(moments.yy / moments.n - mean * mean, 0.0)
    _logger.info("oracle mu = %s from %d draws", np.round(mean, 6).tolist(), n_mc)
    return TruthTable(
        tuple(float(x) for x in mean),
        tuple(float(x) for x in np.sqrt(variance / moments.n)),
        n_mc, seed, regime.trajectory
    )


@dataclass(frozen=True)
class ParallelTrendsCheck:
    t: int
    correlation: float
    mc_se: float

    @property
    def z(self) -> float:
        return self.correlation / self.mc_se if self.mc_se > 0 else float("inf")

    def to_json(self) -> dict[str, Any]:
        return {"t": self.t, "correlation": self.correlation, "mc_se": self.mc_se, "z": self.z}


def check_parallel_trends(
        config: DGPConfig,
        n_mc: int,
        seed: int,
        threads: int = 1
) -> list[ParallelTrendsCheck]:
    """corr(Y_t(0) - Y_{t-1}(0), U) per t >= 1; reported, not asserted."""
    moments = _oracle_moments(
        config, n_mc, seed, Regime.constant(0, config.n_times - 1), threads
    )
    n = moments.n
    u_mean = moments.u / n
    u_var = moments.uu / n - u_mean * u_mean
    result = []
    for t in range(1, config.n_times):
        d_mean = moments.d[t - 1] / n
        d_var = moments.dd[t - 1] / n - d_mean * d_mean
        covariance = moments.du[t - 1] / n - d_mean * u_mean
        correlation = float(covariance / np.sqrt(d_var * u_var)) if d_var > 0 and u_var > 0 else 0.0
        result.append(ParallelTrendsCheck(
            t, correlation, float((1.0 - correlation ** 2) / np.sqrt(n))
        ))
    return result


# state-level example -----------------------------------------------------------

STATE_LABELS = (
    "AK", "AL", "AR", "AZ", "CA", "CO", "CT", "DC", "DE", "FL", "GA", "HI", "IA",
    "ID", "IL", "IN", "KS", "KY", "LA", "MA", "MD", "ME", "MI", "MN", "MO", "MS",
    "MT", "NC", "ND", "NE", "NH", "NJ", "NM", "NV", "NY", "OH", "OK", "OR", "PA",
    "RI", "SC", "SD", "TN", "TX", "UT", "VA", "VT", "WA", "WI", "WV", "WY",
)
STATE_YEARS = tuple(range(2013, 2020))
STATE_COVARIATES = (
    "tanf_max", "snap_max", "eitc", "unemployment", "income_pc", "prop_male",
    "prop_hs_grad", "prop_some_college", "prop_college_grad", "prop_white",
    "prop_black", "prop_over_64",
)

# (baseline mean, between-state SD, yearly drift, yearly noise SD)
_STATE_COVARIATE_LAW = (
    (450.0, 150.0, 5.0, 10.0),
    (650.0, 20.0, 5.0, 5.0),
    (0.08, 0.08, 0.002, 0.005),
    (6.5, 1.5, -0.5, 0.3),
    (47.0, 8.0, 1.5, 0.8),
    (0.48, 0.01, 0.0, 0.003),
    (0.28, 0.03, -0.002, 0.005),
    (0.31, 0.03, 0.002, 0.005),
    (0.28, 0.05, 0.004, 0.005),
    (0.68, 0.15, -0.004, 0.005),
    (0.11, 0.10, 0.0005, 0.003),
    (0.16, 0.02, 0.004, 0.003),
)


def state_panel_example(seed: int = DEFAULT_COEFFICIENT_SEED) -> tuple[PanelDataset, Regime]:
    """Synthetic 51-unit, 7-year state panel with a discontinuation regime.

    A_t = 1 while a state keeps its policy at least as generous as the
    reference state. Everyone starts compliant and discontinuation is
    absorbing, so the compliant stratum shrinks over time.
    """
    rng = np.random.default_rng(seed)
    n, n_times, p = len(STATE_LABELS), len(STATE_YEARS), len(STATE_COVARIATES)
    law = np.array(_STATE_COVARIATE_LAW)
    baseline = law[:, 0] + law[:, 1] * rng.standard_normal((n, p))
    covariates = np.empty((n, n_times, p))
    for t in range(n_times):
        covariates[:, t] = (
            baseline + t * law[:, 2] + law[:, 3] * rng.standard_normal((n, p))
        )
    covariates[:, :, 5:] = np.clip(covariates[:, :, 5:], 0.0, 1.0)
    covariates[:, :, 2] = np.maximum(covariates[:, :, 2], 0.0)

    unemployment = (covariates[:, :, 3] - 6.5) / 1.5
    income = (covariates[:, :, 4] - 47.0) / 8.0
    treatment = np.ones((n, n_times), dtype=np.int64)
    for t in range(1, n_times):
        hazard = expit(-1.1 + 0.6 * unemployment[:, t - 1] - 0.7 * income[:, t - 1])
        stays = rng.random(n) >= hazard
        treatment[:, t] = treatment[:, t - 1] * stays

    state_effect = 1.5 * rng.standard_normal(n)
    outcome = (
        16.0 + state_effect[:, None]
        + 0.4 * unemployment - 0.6 * income
        - 0.3 * np.arange(n_times)[None, :]
        - 0.5 * treatment
        + 0.3 * rng.standard_normal((n, n_times))
    )
    data = PanelDataset(
        treatment, covariates, outcome,
        covariate_names=STATE_COVARIATES, alphabet=(0, 1),
        unit_labels=STATE_LABELS, time_labels=STATE_YEARS
    )
    return (data, Regime.constant(1, n_times - 1))


__all__ = [
    "DGPConfig", "TruthTable", "ParallelTrendsCheck",
    "draw_coefficients", "generate_panel", "counterfactual_outcomes",
    "truth_oracle", "check_parallel_trends", "state_panel_example",
    "OUTCOME_FEATURES", "TREATMENT_FEATURES", "COVARIATE_NAMES",
    "DEFAULT_COEFFICIENT_SEED", "NOISE_SD", "MIN_ORACLE_DRAWS",
    "STATE_COVARIATES", "STATE_LABELS", "STATE_YEARS",
]
