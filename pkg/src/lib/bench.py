import io
import logging
import time

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import pandas as pd

from joblib import Parallel, delayed

from . import const, util
from .const import EstimatorLabel, FeatureMapKind, LearnerKind
from .errors import ConfigError, DidError
from .estimator import DEFAULT_LEVEL, EstimateReport, cross_fit, estimate
from .learners import FeatureMap, LearnerSpec
from .nuisance import Learners
from .panel import AdjustmentSchedule, Regime
from .result import Err, Ok, Result, capture
from .simulate import (
    OUTCOME_FEATURES, TREATMENT_FEATURES, DGPConfig, TruthTable, generate_panel
)


_logger = logging.getLogger(__name__)

DEFAULT_REPS = 300
DEFAULT_SIZES = (1000,)
DEFAULT_FOLDS = 2
DEFAULT_REPEATS = 10
STACK_FOLDS = 5
TABLE_SCALE = 100.0
TABLE_FLOOR = 1e-4


@dataclass(frozen=True)
class EstimatorConfig:
    """One row family of the results table: learners plus the sample-split plan.

    `folds` of None means full-sample nuisances.
    """

    label: EstimatorLabel
    learners: Learners
    folds: Optional[int] = None
    repeats: int = 1

    @property
    def cross_fitted(self) -> bool:
        return self.folds is not None

    def to_json(self) -> dict[str, Any]:
        return {
            "label": self.label.value,
            "outcome_learner": self.learners.outcome.to_json(),
            "propensity_learner": self.learners.propensity.to_json(),
            "folds": self.folds,
            "repeats": self.repeats,
        }


def misspecify(feature_map: FeatureMap) -> FeatureMap:
    """Raw linear terms of `feature_map`: drops every power, transform and product."""
    match feature_map.kind:
        case FeatureMapKind.CUSTOM if not feature_map.keep_raw:
            raise ConfigError("feature map keeps no raw terms to fall back on")
        case FeatureMapKind.IDENTITY:
            return feature_map
        case _:
            return FeatureMap.identity()


def _stack(members: Sequence[LearnerSpec], folds: int) -> LearnerSpec:
    return LearnerSpec(LearnerKind.STACK, folds=folds, members=tuple(members))


def standard_configs(
        folds: int = DEFAULT_FOLDS,
        repeats: int = DEFAULT_REPEATS,
        stack_folds: int = STACK_FOLDS
) -> dict[EstimatorLabel, EstimatorConfig]:
    outcome = LearnerSpec(LearnerKind.LINEAR, feature_map=OUTCOME_FEATURES)
    propensity = LearnerSpec(LearnerKind.LOGISTIC, feature_map=TREATMENT_FEATURES)
    bad_outcome = outcome.with_feature_map(misspecify(OUTCOME_FEATURES))
    bad_propensity = propensity.with_feature_map(misspecify(TREATMENT_FEATURES))

    quadratic = FeatureMap.polynomial(2)
    outcome_stack = _stack([
        LearnerSpec(LearnerKind.MEAN),
        LearnerSpec(LearnerKind.LINEAR),
        LearnerSpec(LearnerKind.ELASTIC_NET, feature_map=quadratic),
        LearnerSpec(LearnerKind.BAGGED_TREES, max_depth=4, min_leaf=10),
    ], stack_folds)
    propensity_stack = _stack([
        LearnerSpec(LearnerKind.MEAN),
        LearnerSpec(LearnerKind.LOGISTIC),
        LearnerSpec(LearnerKind.LOGISTIC_ELASTIC_NET, feature_map=quadratic),
        LearnerSpec(LearnerKind.BAGGED_TREES, max_depth=4, min_leaf=10),
    ], stack_folds)

    return {
        EstimatorLabel.TRUE: EstimatorConfig(EstimatorLabel.TRUE, Learners(outcome, propensity)),
        EstimatorLabel.GFAL: EstimatorConfig(EstimatorLabel.GFAL, Learners(outcome, bad_propensity)),
        EstimatorLabel.QFAL: EstimatorConfig(EstimatorLabel.QFAL, Learners(bad_outcome, propensity)),
        EstimatorLabel.BFAL: EstimatorConfig(EstimatorLabel.BFAL, Learners(bad_outcome, bad_propensity)),
        EstimatorLabel.SUPER: EstimatorConfig(
            EstimatorLabel.SUPER, Learners(outcome_stack, propensity_stack), folds, repeats
        ),
    }


def select_configs(
        labels: Iterable[str | EstimatorLabel],
        folds: int = DEFAULT_FOLDS,
        repeats: int = DEFAULT_REPEATS
) -> list[EstimatorConfig]:
    available = standard_configs(folds, repeats)
    chosen = []
    for label in labels:
        try:
            chosen.append(available[EstimatorLabel.from_string(str(label))])
        except KeyError:
            raise ConfigError(
                f"unknown estimator config {label!r}; expected one of "
                + ", ".join(EstimatorLabel.values())
            )
    return chosen


# replicates ----------------------------------------------------------------

@dataclass(frozen=True)
class ReplicateRecord:
    n: int
    replicate: int
    label: EstimatorLabel
    t: int
    psi: float
    variance: float
    se: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class ReplicateFailure:
    n: int
    replicate: int
    label: EstimatorLabel
    message: str


def _run_config(
        config: EstimatorConfig,
        data,
        regime: Regime,
        schedule: AdjustmentSchedule,
        seed: int,
        level: float
) -> EstimateReport:
    if config.cross_fitted:
        assert config.folds is not None
        return cross_fit(
            data, regime, schedule, config.learners, folds=config.folds,
            repeats=config.repeats, seed=seed, level=level
        )
    return estimate(data, regime, schedule, config.learners, seed=seed, level=level)


def _replicate(
        dgp: DGPConfig,
        configs: Sequence[EstimatorConfig],
        regime: Regime,
        n: int,
        r: int,
        seed: int,
        level: float
) -> tuple[list[ReplicateRecord], list[ReplicateFailure]]:
    data = generate_panel(dgp.with_units(n), util.derive_seed(seed, 5, n, r))
    schedule = AdjustmentSchedule.covariates_only(data)
    records: list[ReplicateRecord] = []
    failures: list[ReplicateFailure] = []
    for c, config in enumerate(configs):
        outcome: Result[EstimateReport] = capture(
            lambda: _run_config(
                config, data, regime, schedule, util.derive_seed(seed, 6, n, r, c), level
            ),
            DidError, ValueError, np.linalg.LinAlgError, FloatingPointError
        )
        match outcome:
            case Ok(ok=report):
                for t in report.horizons:
                    e = report.estimate(t)
                    records.append(ReplicateRecord(
                        n, r, config.label, t, e.psi, e.variance, e.se, e.ci_low, e.ci_high
                    ))
            case Err(err=message):
                failures.append(ReplicateFailure(n, r, config.label, message))
    return (records, failures)


# aggregation ---------------------------------------------------------------

@dataclass(frozen=True)
class BenchMetrics:
    """Monte-Carlo summary of one (n, config, t) cell, unscaled."""

    n: int
    label: EstimatorLabel
    t: int
    reps: int
    failures: int
    truth: float
    mean_psi: float
    bias: float
    bias_sq: float
    v_sim: Optional[float]
    v_eif: float
    mc_se: Optional[float]
    coverage: float

    @property
    def bias_in_mc_se(self) -> Optional[float]:
        if self.mc_se is None or self.mc_se == 0:
            return None
        return abs(self.bias) / self.mc_se

    def to_json(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "method": self.label.value,
            "t": self.t,
            "reps": self.reps,
            "failures": self.failures,
            "truth": self.truth,
            "mean_psi": self.mean_psi,
            "bias": self.bias,
            "bias_sq": self.bias_sq,
            "v_sim": self.v_sim,
            "v_eif": self.v_eif,
            "mc_se": self.mc_se,
            "coverage": self.coverage,
        }


def _metrics(
        n: int,
        label: EstimatorLabel,
        t: int,
        records: Sequence[ReplicateRecord],
        failures: int,
        truth: float
) -> BenchMetrics:
    psi = np.array([record.psi for record in records])
    reps = len(psi)
    if reps == 0:
        nan = float("nan")
        return BenchMetrics(n, label, t, 0, failures, truth, nan, nan, nan, None, nan, None, nan)
    mean_psi = float(np.mean(psi))
    bias = mean_psi - truth
    v_sim = float(np.var(psi, ddof=1)) if reps >= 2 else None
    covered = [record.ci_low <= truth <= record.ci_high for record in records]
    return BenchMetrics(
        n, label, t, reps, failures, truth, mean_psi, bias, bias * bias, v_sim,
        float(np.mean([record.se ** 2 for record in records])),
        None if v_sim is None else float(np.sqrt(v_sim / reps)),
        float(np.mean(covered))
    )


@dataclass
class BenchResult:

    sizes: tuple[int, ...]
    labels: tuple[EstimatorLabel, ...]
    horizons: tuple[int, ...]
    truth: TruthTable
    seed: int
    n_reps: int
    records: list[ReplicateRecord] = field(default_factory=list)
    failures: list[ReplicateFailure] = field(default_factory=list)
    # kept in memory only
    wall_clock: dict[int, float] = field(default_factory=dict)

    def rows(self, n: int, label: EstimatorLabel, t: int) -> list[ReplicateRecord]:
        return [
            record for record in self.records
            if record.n == n and record.label == label and record.t == t
        ]

    def failure_count(self, n: Optional[int] = None, label: Optional[EstimatorLabel] = None) -> int:
        return sum(
            1 for failure in self.failures
            if (n is None or failure.n == n) and (label is None or failure.label == label)
        )

    def metric(self, n: int, label: EstimatorLabel, t: int) -> BenchMetrics:
        return _metrics(
            n, label, t, self.rows(n, label, t),
            self.failure_count(n, label), self.truth.mu[t]
        )

    def metrics(self) -> list[BenchMetrics]:
        return [
            self.metric(n, label, t)
            for n in self.sizes for label in self.labels for t in self.horizons
        ]

    def to_json(self) -> dict[str, Any]:
        return {
            "sizes": list(self.sizes),
            "methods": [label.value for label in self.labels],
            "horizons": list(self.horizons),
            "seed": self.seed,
            "n_reps": self.n_reps,
            "truth": self.truth.to_json(),
            "failures": [
                {"n": f.n, "replicate": f.replicate, "method": f.label.value, "message": f.message}
                for f in self.failures
            ],
            "metrics": [metric.to_json() for metric in self.metrics()],
        }


def run_replications(
        dgp: DGPConfig,
        configs: Sequence[EstimatorConfig],
        sizes: Sequence[int],
        n_reps: int,
        truth: TruthTable,
        seed: int = const.DEFAULT_SEED,
        threads: int = 1,
        level: float = DEFAULT_LEVEL
) -> BenchResult:
    """Fresh panel per (n, replicate), every config estimated on it.

    Replicate seeds are derived from `seed`, n and the replicate index only,
    so results do not depend on `threads` or scheduling order.
    """
    if n_reps < 1:
        raise ConfigError(f"need at least one replicate, got {n_reps}")
    if len(truth.mu) != dgp.n_times:
        raise ConfigError(
            f"truth table has {len(truth.mu)} horizons, DGP has {dgp.n_times}"
        )
    regime = Regime(truth.regime)
    result = BenchResult(
        tuple(sizes), tuple(config.label for config in configs),
        tuple(range(dgp.n_times)), truth, seed, n_reps
    )
    for n in sizes:
        started = time.monotonic()
        batches = Parallel(n_jobs=threads)(
            delayed(_replicate)(dgp, configs, regime, n, r, seed, level)
            for r in range(n_reps)
        )
        for records, failures in batches:
            result.records.extend(records)
            result.failures.extend(failures)
        result.wall_clock[n] = time.monotonic() - started
        _logger.info(
            "n=%d: %d replicates in %.1fs", n, n_reps, result.wall_clock[n]
        )
    for failure in result.failures:
        _logger.warning(
            "replicate %d at n=%d failed for %s: %s",
            failure.replicate, failure.n, failure.label, failure.message
        )
    return result


# presentation --------------------------------------------------------------

def format_scaled(value: Optional[float]) -> str:
    if value is None or not np.isfinite(value):
        return "NA"
    scaled = value * TABLE_SCALE
    if abs(scaled) < TABLE_FLOOR:
        return "<0.0001"
    return f"{scaled:.4f}"


def _table_columns(horizons: Sequence[int]) -> list[str]:
    columns = ["n", "method"]
    for t in horizons:
        columns.extend([f"bias2_t{t}", f"vsim_t{t}", f"veif_t{t}"])
    return columns


def _table_rows(result: BenchResult) -> list[list[str]]:
    rows = []
    for n in result.sizes:
        for label in result.labels:
            attempted = result.failure_count(n, label) > 0 or any(
                record.n == n and record.label == label for record in result.records
            )
            if not attempted:
                continue
            row = [str(n), label.value]
            for t in result.horizons:
                metric = result.metric(n, label, t)
                row.extend([
                    format_scaled(metric.bias_sq),
                    format_scaled(metric.v_sim),
                    format_scaled(metric.v_eif),
                ])
            rows.append(row)
    return rows


def render_table(result: BenchResult) -> tuple[str, str]:
    """Text and CSV forms of the results table; values are shown x100."""
    columns = _table_columns(result.horizons)
    rows = _table_rows(result)
    frame = pd.DataFrame(rows, columns=columns, dtype=str)
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator="\n")

    widths = [
        max([len(column)] + [len(row[i]) for row in rows])
        for i, column in enumerate(columns)
    ]
    lines = ["  ".join(column.rjust(w) for column, w in zip(columns, widths))]
    for row in rows:
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
    return ("\n".join(lines) + "\n", buffer.getvalue())


def replicates_frame(result: BenchResult) -> pd.DataFrame:
    """Per-replicate estimates with the root-n scaled error."""
    columns = [
        "n", "replicate", "method", "t", "psi", "variance", "se",
        "ci_low", "ci_high", "covered", "scaled_error",
    ]
    rows = []
    for record in sorted(
            result.records,
            key=lambda r: (r.n, r.replicate, result.labels.index(r.label), r.t)
    ):
        truth = result.truth.mu[record.t]
        rows.append([
            record.n, record.replicate, record.label.value, record.t, record.psi,
            record.variance, record.se, record.ci_low, record.ci_high,
            int(record.ci_low <= truth <= record.ci_high),
            float(np.sqrt(record.n) * (record.psi - truth)),
        ])
    return pd.DataFrame(rows, columns=columns)


def bench_meta(result: BenchResult, configs: Sequence[EstimatorConfig], extra: Mapping[str, Any]) -> dict[str, Any]:
    meta = result.to_json()
    meta["configs"] = [config.to_json() for config in configs]
    meta.update(extra)
    return meta


__all__ = [
    "EstimatorConfig", "ReplicateRecord", "ReplicateFailure", "BenchMetrics",
    "BenchResult", "misspecify", "standard_configs", "select_configs",
    "run_replications", "render_table", "replicates_frame", "format_scaled",
    "bench_meta", "DEFAULT_REPS", "DEFAULT_SIZES", "DEFAULT_FOLDS",
    "DEFAULT_REPEATS",
]
