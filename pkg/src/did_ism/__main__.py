import io
import logging
import sys

from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

from .get_args import RunConfig, get_args
from ..lib import const, util
from ..lib.bench import (
    bench_meta, render_table, replicates_frame, run_replications, select_configs
)
from ..lib.const import Subcommand
from ..lib.errors import (
    EXIT_ESTIMATION, EXIT_OK, EXIT_VALIDATION, ConfigError, DidError
)
from ..lib.estimator import (
    contributions_frame, cross_fit, diagnose, estimate, render_diagnostics,
    render_report
)
from ..lib.learners import LearnerSpec
from ..lib.nuisance import Learners
from ..lib.panel import (
    AdjustmentSchedule, PanelSchema, Regime, load_panel, panel_csv_text
)
from ..lib.simulate import (
    OUTCOME_FEATURES, STATE_COVARIATES, TREATMENT_FEATURES, check_parallel_trends,
    draw_coefficients, generate_panel, state_panel_example, truth_oracle
)


_logger = logging.getLogger(__name__)

# sub-stream of the master seed feeding the Monte-Carlo truth
_ORACLE_STREAM = 7


def _configure_logging(verbosity: int):
    if verbosity < 0:
        level = logging.WARNING
    elif verbosity == 0:
        level = logging.INFO
    else:
        level = logging.DEBUG
    logging.basicConfig(
        level=level, stream=sys.stderr, force=True,
        format="%(levelname)s %(name)s: %(message)s"
    )


def _csv_text(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format="%.17g", lineterminator="\n")
    return buffer.getvalue()


# simulate -----------------------------------------------------------------

def _simulated_estimate_config(covariates: Sequence[str], horizon: int) -> dict[str, Any]:
    return {
        "covariate_cols": list(covariates),
        "regime": [0] * (horizon + 1),
        "adjustment": "covariates",
        "outcome_learner": LearnerSpec(
            const.LearnerKind.LINEAR, feature_map=OUTCOME_FEATURES
        ).to_json(),
        "propensity_learner": LearnerSpec(
            const.LearnerKind.LOGISTIC, feature_map=TREATMENT_FEATURES
        ).to_json(),
    }


def _state_estimate_config(schema: PanelSchema, horizon: int) -> dict[str, Any]:
    return {
        **schema.to_mapping(),
        "regime": [1] * (horizon + 1),
        "adjustment": "covariates",
        "pooled_propensity": True,
        "propensity_window": 2,
        "outcome_learner": {"kind": "ridge"},
        "propensity_learner": {"kind": "logistic_elastic_net"},
    }


def run_simulate(config: RunConfig) -> int:
    seed = config["seed"]
    out = config.out_dir
    if config["design"] == "state-panel":
        data, regime = state_panel_example(seed)
        schema = PanelSchema(
            unit_col="state", time_col="year", covariate_cols=STATE_COVARIATES
        )
        estimate_config = _state_estimate_config(schema, data.horizon)
        util.atomic_write_all({
            out / "panel.csv": panel_csv_text(data, schema),
            out / "cfg.json": util.dump_json(estimate_config),
        })
        _logger.info("wrote state-level example with %d units to %s", data.n_units, out)
        return EXIT_OK

    dgp = draw_coefficients(config["coefficient_seed"], n_units=config["n"])
    if config["u_in_w"]:
        dgp = replace(dgp, u_in_w=float(config["u_in_w"]))
    data = generate_panel(dgp, seed)
    oracle_seed = util.derive_seed(seed, _ORACLE_STREAM)
    truth = truth_oracle(dgp, config["n_mc"], oracle_seed, threads=config["threads"])
    trends = check_parallel_trends(dgp, config["n_mc"], oracle_seed, threads=config["threads"])
    for check in trends:
        if abs(check.z) > 4:
            _logger.warning(
                "parallel trends fail at t=%d: corr=%.4f (z=%.1f)",
                check.t, check.correlation, check.z
            )

    truth_json = {
        "dgp": dgp.to_json(),
        "truth": truth.to_json(),
        "parallel_trends": [check.to_json() for check in trends],
        "seed": seed,
    }
    util.atomic_write_all({
        out / "panel.csv": panel_csv_text(data),
        out / "truth.json": util.dump_json(truth_json),
        out / "cfg.json": util.dump_json(
            _simulated_estimate_config(data.covariate_names, data.horizon)
        ),
    })
    _logger.info("wrote simulated panel of %d units to %s", data.n_units, out)
    return EXIT_OK


# estimate / diagnose --------------------------------------------------------

def _schema(config: RunConfig, path: Path) -> PanelSchema:
    mapping = {
        name: config[name]
        for name in ("unit_col", "time_col", "treatment_col", "outcome_col", "alphabet")
    }
    covariates = config["covariate_cols"]
    if covariates is None:
        header = pd.read_csv(path, nrows=0, dtype=str).columns
        reserved = {mapping["unit_col"], mapping["time_col"], mapping["treatment_col"], mapping["outcome_col"]}
        covariates = [column for column in header if column not in reserved]
        _logger.info("covariate columns taken from the header: %s", covariates)
    mapping["covariate_cols"] = covariates
    return PanelSchema.from_mapping(mapping)


def _load(config: RunConfig):
    assert config.input is not None
    data = load_panel(config.input, _schema(config, config.input))
    if config["regime"] is None:
        raise ConfigError("a regime is required (config key 'regime' or --regime)")
    regime = Regime(config["regime"])
    schedule = AdjustmentSchedule.from_json(data, config["adjustment"])
    return (data, regime, schedule)


def run_estimate(config: RunConfig) -> int:
    data, regime, schedule = _load(config)
    learners = Learners(
        LearnerSpec.from_json(config["outcome_learner"]),
        LearnerSpec.from_json(config["propensity_learner"]),
    )
    common: dict[str, Any] = dict(
        horizons=config["horizons"],
        epsilon=config["epsilon"],
        seed=config["seed"],
        pooled=config["pooled_propensity"],
        window=config["propensity_window"],
        threads=config["threads"],
        level=config["level"],
        min_stratum=config["min_stratum"],
    )
    if config["folds"] is None:
        report = estimate(data, regime, schedule, learners, **common)
    else:
        report = cross_fit(
            data, regime, schedule, learners,
            folds=config["folds"], repeats=config["repeats"], **common
        )
    text = render_report(report)
    files = {
        config.out_dir / "report.json": util.dump_json(
            {**report.to_json(), "run": config.to_json()}
        ),
        config.out_dir / "report.txt": text,
    }
    if config.dump_if is not None:
        files[config.dump_if] = _csv_text(contributions_frame(report))
    util.atomic_write_all(files)
    sys.stdout.write(text)
    return EXIT_OK


def run_diagnose(config: RunConfig) -> int:
    data, regime, schedule = _load(config)
    report = diagnose(
        data, regime, schedule, LearnerSpec.from_json(config["propensity_learner"]),
        epsilon=config["epsilon"], seed=config["seed"],
        pooled=config["pooled_propensity"], window=config["propensity_window"],
        min_stratum=config["min_stratum"]
    )
    text = render_diagnostics(report)
    util.atomic_write_all({
        config.out_dir / "diagnostics.json": util.dump_json(
            {**report.to_json(), "run": config.to_json()}
        ),
    })
    sys.stdout.write(text)
    return EXIT_OK


# bench ---------------------------------------------------------------------

def run_bench(config: RunConfig) -> int:
    seed = config["seed"]
    configs = select_configs(config["configs"], config["folds"], config["repeats"])
    dgp = draw_coefficients(config["coefficient_seed"])
    truth = truth_oracle(
        dgp, config["n_mc"], util.derive_seed(seed, _ORACLE_STREAM),
        threads=config["threads"]
    )
    result = run_replications(
        dgp, configs, config["sizes"], config["reps"], truth, seed,
        config["threads"], config["level"]
    )
    text, csv = render_table(result)
    out = config.out_dir
    meta = bench_meta(result, configs, {"run": config.to_json(), "dgp": dgp.to_json()})
    util.atomic_write_all({
        out / "table.txt": text,
        out / "table.csv": csv,
        out / "replicates.csv": _csv_text(replicates_frame(result)),
        out / "meta.json": util.dump_json(meta),
    })
    sys.stdout.write(text)
    if result.failures:
        _logger.warning("%d replicate fits failed", len(result.failures))
    return EXIT_OK


_COMMANDS = {
    Subcommand.SIMULATE: run_simulate,
    Subcommand.ESTIMATE: run_estimate,
    Subcommand.DIAGNOSE: run_diagnose,
    Subcommand.BENCH: run_bench,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config = get_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    except DidError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code

    _configure_logging(config.verbosity)
    try:
        return _COMMANDS[config.subcommand](config)
    except DidError as exc:
        _logger.error("%s", "; ".join([str(exc), *getattr(exc, "__notes__", [])]))
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        _logger.error("numeric failure: %s", exc)
        return EXIT_ESTIMATION
    except (ValueError, OSError) as exc:
        _logger.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
