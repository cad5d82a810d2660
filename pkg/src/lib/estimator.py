import logging

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import pandas as pd

from joblib import Parallel, delayed
from scipy.stats import norm

from . import const, util
from .data_view import MapView, frozen
from .errors import FoldTooSmallError, NuisanceFitError, PositivityError
from .id import ChainId
from .learners import LearnerSpec
from .nuisance import (
    FULL_SAMPLE, Learners, NuisanceSet, cumulative_g, fit_nuisance_set,
    fit_propensities
)
from .panel import (
    AdjustmentSchedule, BaselineReport, ComplianceProfile, PanelDataset, Regime,
    check_baseline_regime, compliance, design_matrix
)


_logger = logging.getLogger(__name__)

DEFAULT_LEVEL = 0.95
HISTOGRAM_EDGES = (0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0)


# influence-function contributions -----------------------------------------

def phi_terms(
        nuisances: NuisanceSet,
        profile: ComplianceProfile,
        data: PanelDataset,
        j: int,
        k: int
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Q^{j,k,1} and the k weighted residual terms whose sum corrects it.

    Term m is I(A-bar_m = a*-bar_m) / g_m * (Q^{j,k,m+1} - Q^{j,k,m}).
    """
    chain = nuisances.chain(j, k)
    if k > nuisances.g.up_to:
        raise PositivityError(k, f"cumulative propensity only reaches m={nuisances.g.up_to}")
    corrections = []
    for m in range(1, k + 1):
        residual = chain.predictions(m + 1) - chain.predictions(m)
        weight = np.where(profile.at(m), 1.0 / nuisances.g.at(m), 0.0)
        corrections.append(weight * residual)
    return (chain.predictions(1), corrections)


def phi_tilde(
        nuisances: NuisanceSet,
        profile: ComplianceProfile,
        data: PanelDataset,
        j: int,
        k: int
) -> np.ndarray:
    base, corrections = phi_terms(nuisances, profile, data, j, k)
    result = np.array(base, copy=True)
    for term in corrections:
        result += term
    return result


@dataclass(frozen=True)
class IFContribution:
    """Per-unit Y_0 + sum_k (phi_{k,k} - phi_{k-1,k}) for one horizon."""

    t: int
    values: np.ndarray
    components: Mapping[ChainId, np.ndarray] = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))


def one_step(
        data: PanelDataset,
        regime: Regime,
        schedule: AdjustmentSchedule,
        nuisances: Optional[NuisanceSet],
        t: int,
        profile: Optional[ComplianceProfile] = None
) -> tuple[float, IFContribution]:
    if not 0 <= t <= data.horizon:
        raise ValueError(f"horizon {t} outside 0..{data.horizon}")
    values = np.array(data.outcome[:, 0], dtype=float)
    components: dict[ChainId, np.ndarray] = dict()
    if t > 0:
        if nuisances is None or nuisances.horizon < t:
            raise ValueError(f"nuisances do not cover horizon {t}")
        if profile is None:
            profile = compliance(data, regime)
        for k in range(1, t + 1):
            same = phi_tilde(nuisances, profile, data, k, k)
            lagged = phi_tilde(nuisances, profile, data, k - 1, k)
            components[ChainId(k, k)] = frozen(same)
            components[ChainId(k - 1, k)] = frozen(lagged)
            values += same - lagged
    contribution = IFContribution(t, frozen(values), MapView(components))
    return (contribution.mean, contribution)


def eif_variance(contributions: IFContribution | np.ndarray, psi: float) -> float:
    values = contributions.values if isinstance(contributions, IFContribution) else contributions
    centred = np.asarray(values) - psi
    return float(np.mean(centred * centred))


# plug-in oracle ------------------------------------------------------------

def _stratum_key(row: np.ndarray) -> tuple[float, ...]:
    return tuple(float(x) for x in row)


def _iterated_mean(
        data: PanelDataset,
        schedule: AdjustmentSchedule,
        profile: ComplianceProfile,
        j: int,
        k: int
) -> float:
    current = np.array(data.outcome[:, j], dtype=float)
    for m in range(k, 0, -1):
        design = design_matrix(data, schedule, m)
        compliant = profile.at(m)
        needed = profile.at(m - 1) if m >= 2 else np.ones(data.n_units, dtype=bool)
        sums: dict[tuple[float, ...], float] = dict()
        counts: dict[tuple[float, ...], int] = dict()
        for i in np.flatnonzero(compliant):
            key = _stratum_key(design[i])
            sums[key] = sums.get(key, 0.0) + current[i]
            counts[key] = counts.get(key, 0) + 1
        following = np.full(data.n_units, np.nan)
        for i in np.flatnonzero(needed):
            key = _stratum_key(design[i])
            if key not in counts:
                raise PositivityError(
                    m, f"stratum {dict(zip(schedule.column_names(data, m), key))} "
                    f"has no unit following the regime"
                )
            following[i] = sums[key] / counts[key]
        current = following
    return float(np.mean(current))


def plug_in_psi(
        data: PanelDataset,
        regime: Regime,
        schedule: AdjustmentSchedule,
        t: int
) -> float:
    """Exhaustive-stratification g-formula; needs discrete adjustment sets."""
    if not 0 <= t <= data.horizon:
        raise ValueError(f"horizon {t} outside 0..{data.horizon}")
    profile = compliance(data, regime)
    psi = float(np.mean(data.outcome[:, 0]))
    for k in range(1, t + 1):
        psi += (
            _iterated_mean(data, schedule, profile, k, k)
            - _iterated_mean(data, schedule, profile, k - 1, k)
        )
    return psi


# diagnostics ---------------------------------------------------------------

@dataclass(frozen=True)
class PositivityReport:
    min_g: Mapping[int, Optional[float]]
    histogram: Mapping[int, tuple[int, ...]]
    truncated: Mapping[int, int]
    compliant_counts: tuple[int, ...]
    small_strata: tuple[int, ...]
    min_stratum: int
    epsilon: float

    def to_json(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "min_stratum": self.min_stratum,
            "compliant_counts": list(self.compliant_counts),
            "small_strata": list(self.small_strata),
            "min_g": {str(m): value for m, value in self.min_g.items()},
            "histogram_edges": list(HISTOGRAM_EDGES),
            "histogram": {str(m): list(counts) for m, counts in self.histogram.items()},
            "truncated_factors": {str(m): count for m, count in self.truncated.items()},
        }


def _positivity_report(
        g_values: np.ndarray,
        truncated: np.ndarray,
        profile: ComplianceProfile,
        epsilon: float,
        min_stratum: int
) -> PositivityReport:
    up_to = truncated.shape[1]
    min_g: dict[int, Optional[float]] = dict()
    histogram: dict[int, tuple[int, ...]] = dict()
    for m in range(1, up_to + 1):
        followers = profile.at(m)
        values = g_values[followers, m]
        min_g[m] = float(np.min(values)) if values.size else None
        binned, _ = np.histogram(values, bins=HISTOGRAM_EDGES)
        histogram[m] = tuple(int(c) for c in binned)
    counts = profile.counts()
    small = tuple(m for m, count in enumerate(counts) if count < min_stratum)
    if small:
        _logger.warning(
            "compliant strata smaller than %d at m=%s (sizes %s)",
            min_stratum, list(small), [counts[m] for m in small]
        )
    return PositivityReport(
        MapView(min_g), MapView(histogram),
        MapView({m: int(truncated[:, m - 1].sum()) for m in range(1, up_to + 1)}),
        tuple(counts), small, min_stratum, epsilon
    )


def positivity_diagnostics(
        nuisances: NuisanceSet,
        profile: ComplianceProfile,
        min_stratum: int = const.DEFAULT_MIN_STRATUM
) -> PositivityReport:
    g = nuisances.g
    return _positivity_report(
        g.values, g.truncation_matrix, profile, g.epsilon, min_stratum
    )


# reports -------------------------------------------------------------------

@dataclass(frozen=True)
class HorizonEstimate:
    t: int
    psi: float
    variance: float
    se: float
    ci_low: float
    ci_high: float
    observed_mean: float
    difference: float
    difference_variance: float
    difference_se: float
    difference_ci_low: float
    difference_ci_high: float
    repetitions: tuple[float, ...] = ()
    median_repetition: Optional[int] = None

    def to_json(self) -> dict[str, Any]:
        result: dict[str, Any] = {
            "t": self.t,
            "psi": self.psi,
            "variance": self.variance,
            "se": self.se,
            "ci": [self.ci_low, self.ci_high],
            "observed_mean": self.observed_mean,
            "difference": self.difference,
            "difference_variance": self.difference_variance,
            "difference_se": self.difference_se,
            "difference_ci": [self.difference_ci_low, self.difference_ci_high],
        }
        if self.repetitions:
            result["repetition_estimates"] = list(self.repetitions)
            result["median_repetition"] = self.median_repetition
        return result


def _z(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError(f"confidence level must lie in (0,1), got {level}")
    return float(norm.ppf(0.5 + level / 2))


def _horizon_estimate(
        t: int,
        n: int,
        psi: float,
        variance: float,
        observed: float,
        difference: float,
        difference_variance: float,
        level: float,
        repetitions: Sequence[float] = (),
        median_repetition: Optional[int] = None
) -> HorizonEstimate:
    z = _z(level)
    se = float(np.sqrt(variance / n))
    difference_se = float(np.sqrt(difference_variance / n))
    if se == 0.0:
        _logger.warning("zero estimated variance at t=%d; the interval has zero width", t)
    return HorizonEstimate(
        t, psi, variance, se, psi - z * se, psi + z * se,
        observed, difference, difference_variance, difference_se,
        difference - z * difference_se, difference + z * difference_se,
        tuple(repetitions), median_repetition
    )


class EstimateReport:

    _estimates: dict[int, HorizonEstimate]
    _contributions: dict[int, np.ndarray]
    _diagnostics: PositivityReport
    _baseline: BaselineReport
    _method: str
    _n_units: int
    _level: float
    _unit_labels: tuple
    _nuisance_summary: Optional[dict[str, Any]]

    def __init__(
            self,
            estimates: Mapping[int, HorizonEstimate],
            contributions: Mapping[int, np.ndarray],
            diagnostics: PositivityReport,
            baseline: BaselineReport,
            method: str,
            n_units: int,
            level: float,
            unit_labels: Sequence,
            nuisance_summary: Optional[dict[str, Any]] = None
    ):
        self._estimates = dict(sorted(estimates.items()))
        self._contributions = {t: frozen(values) for t, values in contributions.items()}
        self._diagnostics = diagnostics
        self._baseline = baseline
        self._method = method
        self._n_units = n_units
        self._level = level
        self._unit_labels = tuple(unit_labels)
        self._nuisance_summary = nuisance_summary

    @property
    def horizons(self) -> list[int]:
        return list(self._estimates)

    def estimate(self, t: int) -> HorizonEstimate:
        return self._estimates[t]

    def estimates(self) -> MapView[int, HorizonEstimate]:
        return MapView(self._estimates)

    def contributions(self, t: int) -> np.ndarray:
        return self._contributions[t]

    @property
    def diagnostics(self) -> PositivityReport:
        return self._diagnostics

    @property
    def baseline(self) -> BaselineReport:
        return self._baseline

    @property
    def method(self) -> str:
        return self._method

    @property
    def n_units(self) -> int:
        return self._n_units

    @property
    def level(self) -> float:
        return self._level

    @property
    def unit_labels(self) -> tuple:
        return self._unit_labels

    def to_json(self) -> dict[str, Any]:
        result: dict[str, Any] = {
            "method": self._method,
            "n_units": self._n_units,
            "level": self._level,
            "estimates": [estimate.to_json() for estimate in self._estimates.values()],
            "diagnostics": self._diagnostics.to_json(),
            "baseline": self._baseline.to_json(),
        }
        if self._nuisance_summary is not None:
            result["nuisance"] = self._nuisance_summary
        return result


def render_report(report: EstimateReport) -> str:
    percent = f"{100 * report.level:g}%"
    header = ["t", "psi", "se", f"{percent} CI", "observed", "obs - psi", f"{percent} CI"]
    rows = [header]
    for estimate in report.estimates().values():
        rows.append([
            str(estimate.t),
            f"{estimate.psi:.4f}",
            f"{estimate.se:.4f}",
            f"[{estimate.ci_low:.4f}, {estimate.ci_high:.4f}]",
            f"{estimate.observed_mean:.4f}",
            f"{estimate.difference:.4f}",
            f"[{estimate.difference_ci_low:.4f}, {estimate.difference_ci_high:.4f}]",
        ])
    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    lines = [
        f"method: {report.method}  n={report.n_units}",
        *("  ".join(cell.rjust(width) for cell, width in zip(row, widths)) for row in rows),
        "",
        "compliant units per m: " + ", ".join(map(str, report.diagnostics.compliant_counts)),
        "truncated factors per m: " + ", ".join(
            f"{m}:{count}" for m, count in report.diagnostics.truncated.items()
        ),
    ]
    if report.diagnostics.small_strata:
        lines.append(
            f"small strata (< {report.diagnostics.min_stratum}) at m = "
            + ", ".join(map(str, report.diagnostics.small_strata))
        )
    if not report.baseline.satisfied:
        lines.append(
            f"warning: {len(report.baseline.violating_units)} units deviate from the "
            "regime at t=0"
        )
    return "\n".join(lines) + "\n"


def contributions_frame(report: EstimateReport) -> pd.DataFrame:
    columns: dict[str, Any] = {const.UNIT: list(report.unit_labels)}
    for t in report.horizons:
        columns[f"if_t{t}"] = report.contributions(t)
    return pd.DataFrame(columns)


# full-sample estimation ----------------------------------------------------

def _horizons(data: PanelDataset, horizons: Optional[Iterable[int]]) -> list[int]:
    chosen = sorted(set(range(data.n_times) if horizons is None else horizons))
    if not chosen:
        raise ValueError("no horizons requested")
    for t in chosen:
        if not 0 <= t <= data.horizon:
            raise ValueError(f"horizon {t} outside 0..{data.horizon}")
    return chosen


def _difference(data: PanelDataset, t: int, values: np.ndarray) -> tuple[float, float, float]:
    observed = data.outcome[:, t]
    contrast = observed - values
    difference = float(np.mean(contrast))
    return (float(np.mean(observed)), difference, eif_variance(contrast, difference))


def estimate(
        data: PanelDataset,
        regime: Regime,
        schedule: AdjustmentSchedule,
        learners: Learners,
        horizons: Optional[Iterable[int]] = None,
        epsilon: float = const.DEFAULT_EPSILON,
        seed: int = const.DEFAULT_SEED,
        pooled: bool = False,
        window: Optional[int] = None,
        threads: int = 1,
        level: float = DEFAULT_LEVEL,
        min_stratum: int = const.DEFAULT_MIN_STRATUM
) -> EstimateReport:
    """Full-sample one-step estimates for every requested horizon.

    A single nuisance set is fitted up to the largest horizon and shared.
    """
    chosen = _horizons(data, horizons)
    schedule.check_against(data)
    baseline = check_baseline_regime(data, regime)
    profile = compliance(data, regime)
    nuisances = fit_nuisance_set(
        data, regime, schedule, max(chosen), learners, None, epsilon, pooled,
        seed, window, threads, FULL_SAMPLE
    )
    estimates: dict[int, HorizonEstimate] = dict()
    contributions: dict[int, np.ndarray] = dict()
    for t in chosen:
        psi, contribution = one_step(data, regime, schedule, nuisances, t, profile)
        observed, difference, difference_variance = _difference(data, t, contribution.values)
        estimates[t] = _horizon_estimate(
            t, data.n_units, psi, eif_variance(contribution, psi),
            observed, difference, difference_variance, level
        )
        contributions[t] = contribution.values
    return EstimateReport(
        estimates, contributions,
        positivity_diagnostics(nuisances, profile, min_stratum),
        baseline, FULL_SAMPLE, data.n_units, level, data.unit_labels,
        nuisances.summary()
    )


# cross-fitting -------------------------------------------------------------

class FoldPlan:
    """K independent partitions of the units into M folds."""

    _labels: np.ndarray
    _folds: int
    _seed: int

    def __init__(self, labels: np.ndarray, folds: int, seed: int):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 2:
            raise ValueError("fold labels must be a (K, n) matrix")
        for r in range(labels.shape[0]):
            sizes = np.bincount(labels[r], minlength=folds)
            if len(sizes) != folds or sizes.max() - sizes.min() > 1:
                raise ValueError(f"repetition {r} is not a balanced {folds}-fold partition")
        self._labels = frozen(labels)
        self._folds = folds
        self._seed = seed

    @property
    def folds(self) -> int:
        return self._folds

    @property
    def repeats(self) -> int:
        return self._labels.shape[0]

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    def held_out(self, repetition: int, fold: int) -> np.ndarray:
        return self._labels[repetition] == fold


def make_fold_plan(n: int, folds: int, repeats: int, seed: int) -> FoldPlan:
    if folds < 2:
        raise ValueError(f"cross-fitting needs M >= 2 folds, got {folds}")
    if repeats < 1:
        raise ValueError(f"cross-fitting needs K >= 1 repetitions, got {repeats}")
    if n < folds:
        raise FoldTooSmallError(folds, 0, 0, f"only {n} units")
    labels = np.vstack([
        util.balanced_fold_labels(n, folds, util.derive_seed(seed, 3, r))
        for r in range(repeats)
    ])
    return FoldPlan(labels, folds, seed)


def _fit_fold(
        data, regime, schedule, learners, horizon, plan: FoldPlan, r, v,
        epsilon, pooled, seed, window
) -> NuisanceSet:
    training = ~plan.held_out(r, v)
    try:
        return fit_nuisance_set(
            data, regime, schedule, horizon, learners, training, epsilon, pooled,
            util.derive_seed(seed, 4, r, v), window, 1,
            f"fold {v} of repetition {r}"
        )
    except PositivityError as exc:
        raise FoldTooSmallError(plan.folds, r, v, str(exc)) from exc
    except NuisanceFitError as exc:
        # only empty strata depend on the fold size
        if not exc.only(PositivityError):
            raise
        raise FoldTooSmallError(plan.folds, r, v, " ".join(str(exc).split())) from exc


@dataclass(frozen=True)
class _Repetition:
    values: dict[int, np.ndarray]
    g_values: np.ndarray
    truncated: np.ndarray


def _assemble_repetition(
        data, regime, schedule, plan: FoldPlan, r: int, fits: Sequence[NuisanceSet],
        chosen: Sequence[int], profile: ComplianceProfile
) -> _Repetition:
    values = {t: np.empty(data.n_units) for t in chosen}
    up_to = max(chosen)
    g_values = np.ones((data.n_units, up_to + 1))
    truncated = np.zeros((data.n_units, up_to), dtype=bool)
    for v, nuisances in enumerate(fits):
        held = plan.held_out(r, v)
        for t in chosen:
            _, contribution = one_step(data, regime, schedule, nuisances, t, profile)
            values[t][held] = contribution.values[held]
        g_values[held] = nuisances.g.values[held]
        truncated[held] = nuisances.g.truncation_matrix[held]
    return _Repetition(values, g_values, truncated)


def aggregate_repetitions(
        estimates: Sequence[float], variances: Sequence[float]
) -> tuple[float, float]:
    """Lower median of the estimates, and the lower median of V_r + (psi_r - psi)^2."""
    if len(estimates) == 0 or len(estimates) != len(variances):
        raise ValueError("need one variance per repetition estimate")
    psi = util.lower_median(estimates)
    variance = util.lower_median([
        v + (p - psi) ** 2 for p, v in zip(estimates, variances)
    ])
    return psi, variance


def cross_fit(
        data: PanelDataset,
        regime: Regime,
        schedule: AdjustmentSchedule,
        learners: Learners,
        horizons: Optional[Iterable[int] | int] = None,
        folds: int = 2,
        repeats: int = 1,
        epsilon: float = const.DEFAULT_EPSILON,
        seed: int = const.DEFAULT_SEED,
        pooled: bool = False,
        window: Optional[int] = None,
        threads: int = 1,
        level: float = DEFAULT_LEVEL,
        min_stratum: int = const.DEFAULT_MIN_STRATUM
) -> EstimateReport:
    """Sample-split estimates over K repeated M-fold partitions.

    Each unit's contribution uses nuisances fitted without its fold. The
    repetition estimates are combined by their lower median; the variance
    adds each repetition's squared distance from that median before taking
    the median.
    """
    chosen = _horizons(data, [horizons] if isinstance(horizons, int) else horizons)
    schedule.check_against(data)
    baseline = check_baseline_regime(data, regime)
    profile = compliance(data, regime)
    plan = make_fold_plan(data.n_units, folds, repeats, seed)
    up_to = max(chosen)
    tasks = [(r, v) for r in range(repeats) for v in range(folds)]
    fitted = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_fit_fold)(
            data, regime, schedule, learners, up_to, plan, r, v,
            epsilon, pooled, seed, window
        )
        for r, v in tasks
    )
    by_repetition: dict[int, list[NuisanceSet]] = {r: [] for r in range(repeats)}
    for (r, _), nuisances in zip(tasks, fitted):
        by_repetition[r].append(nuisances)

    repetitions = [
        _assemble_repetition(
            data, regime, schedule, plan, r, by_repetition[r], chosen, profile
        )
        for r in range(repeats)
    ]
    _logger.info("cross-fit finished %d repetitions of %d folds", repeats, folds)

    estimates: dict[int, HorizonEstimate] = dict()
    contributions: dict[int, np.ndarray] = dict()
    for t in chosen:
        psis = [float(np.mean(rep.values[t])) for rep in repetitions]
        variances = [eif_variance(rep.values[t], psi) for rep, psi in zip(repetitions, psis)]
        psi, variance = aggregate_repetitions(psis, variances)
        differences = [_difference(data, t, rep.values[t]) for rep in repetitions]
        difference, difference_variance = aggregate_repetitions(
            [d for _, d, _ in differences], [dv for _, _, dv in differences]
        )
        median_repetition = psis.index(psi)
        estimates[t] = _horizon_estimate(
            t, data.n_units, psi, variance,
            float(np.mean(data.outcome[:, t])), difference, difference_variance,
            level, psis, median_repetition
        )
        contributions[t] = repetitions[median_repetition].values[t]

    # positivity is reported for the median repetition of the last horizon
    last = estimates[max(chosen)].median_repetition
    chosen_rep = repetitions[0 if last is None else last]
    diagnostics = _positivity_report(
        chosen_rep.g_values, chosen_rep.truncated, profile, epsilon, min_stratum
    )
    return EstimateReport(
        estimates, contributions, diagnostics, baseline,
        f"cross-fit(M={folds},K={repeats})", data.n_units, level, data.unit_labels
    )


# diagnose ------------------------------------------------------------------

@dataclass(frozen=True)
class DiagnosticsReport:
    n_units: int
    baseline: BaselineReport
    positivity: PositivityReport
    propensities: Mapping[str, Any]

    def to_json(self) -> dict[str, Any]:
        return {
            "n_units": self.n_units,
            "baseline": self.baseline.to_json(),
            "positivity": self.positivity.to_json(),
            "propensity": dict(self.propensities),
        }


def diagnose(
        data: PanelDataset,
        regime: Regime,
        schedule: AdjustmentSchedule,
        learner: LearnerSpec,
        up_to: Optional[int] = None,
        epsilon: float = const.DEFAULT_EPSILON,
        seed: int = const.DEFAULT_SEED,
        pooled: bool = False,
        window: Optional[int] = None,
        min_stratum: int = const.DEFAULT_MIN_STRATUM
) -> DiagnosticsReport:
    """Baseline check, compliance counts and positivity without outcome fits."""
    up_to = data.horizon if up_to is None else up_to
    schedule.check_against(data)
    baseline = check_baseline_regime(data, regime)
    profile = compliance(data, regime)
    propensities = fit_propensities(
        data, regime, schedule, up_to, learner, None, pooled, seed, window, profile
    )
    g = cumulative_g(propensities, data, schedule, up_to, epsilon)
    return DiagnosticsReport(
        data.n_units, baseline,
        _positivity_report(g.values, g.truncation_matrix, profile, epsilon, min_stratum),
        {f"g{m}": fit.summary() for m, fit in sorted(propensities.items())}
    )


def render_diagnostics(report: DiagnosticsReport) -> str:
    positivity = report.positivity
    lines = [
        f"units: {report.n_units}",
        f"baseline compliance: {report.baseline.fraction_compliant:.4f}",
        "compliant units per m: " + ", ".join(map(str, positivity.compliant_counts)),
    ]
    for m, value in positivity.min_g.items():
        shown = "n/a" if value is None else f"{value:.4f}"
        lines.append(
            f"m={m}: min g = {shown}, truncated = {positivity.truncated[m]}, "
            f"histogram = {list(positivity.histogram[m])}"
        )
    if positivity.small_strata:
        lines.append(
            f"small strata (< {positivity.min_stratum}) at m = "
            + ", ".join(map(str, positivity.small_strata))
        )
    if not report.baseline.satisfied:
        lines.append(
            "deviating at t=0: " + ", ".join(map(str, report.baseline.violating_labels))
        )
    return "\n".join(lines) + "\n"


__all__ = [
    "IFContribution", "HorizonEstimate", "PositivityReport", "EstimateReport",
    "FoldPlan", "phi_terms", "phi_tilde", "one_step", "eif_variance",
    "plug_in_psi", "positivity_diagnostics", "estimate", "aggregate_repetitions",
    "cross_fit",
    "make_fold_plan", "render_report", "contributions_frame",
    "DiagnosticsReport", "diagnose", "render_diagnostics",
    "DEFAULT_LEVEL", "HISTOGRAM_EDGES",
]
