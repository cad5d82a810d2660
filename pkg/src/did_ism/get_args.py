import json
import sys

from argparse import ArgumentParser, Namespace
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, NoReturn, Optional

from ..lib import const, util
from ..lib.bench import DEFAULT_FOLDS, DEFAULT_REPEATS, DEFAULT_REPS, DEFAULT_SIZES
from ..lib.const import EstimatorLabel, Subcommand
from ..lib.errors import EXIT_VALIDATION, ConfigError
from ..lib.estimator import DEFAULT_LEVEL
from ..lib.settings import SettingsStack
from ..lib.simulate import DEFAULT_COEFFICIENT_SEED


PROG = "did-ism"
DESIGNS = ("structural", "state-panel")
DEFAULT_N_MC = 1_000_000

# keys accepted in a JSON config file
CONFIG_KEYS = (
    "unit_col", "time_col", "treatment_col", "outcome_col", "covariate_cols",
    "alphabet", "regime", "adjustment", "outcome_learner", "propensity_learner",
    "epsilon", "folds", "repeats", "seed", "horizons", "pooled_propensity",
    "propensity_window", "min_stratum", "threads", "level",
    "design", "n", "n_mc", "coefficient_seed", "u_in_w",
    "sizes", "reps", "configs",
)

_COMMON_DEFAULTS: dict[str, Any] = {
    "unit_col": const.UNIT,
    "time_col": const.TIME,
    "treatment_col": const.TREATMENT,
    "outcome_col": const.OUTCOME,
    "adjustment": "default",
    "outcome_learner": {"kind": "linear"},
    "propensity_learner": {"kind": "logistic"},
    "epsilon": const.DEFAULT_EPSILON,
    "repeats": 1,
    "seed": const.DEFAULT_SEED,
    "pooled_propensity": False,
    "min_stratum": const.DEFAULT_MIN_STRATUM,
    "threads": 1,
    "level": DEFAULT_LEVEL,
}

_SUBCOMMAND_DEFAULTS: dict[Subcommand, dict[str, Any]] = {
    Subcommand.SIMULATE: {
        "design": "structural",
        "n": 1000,
        "n_mc": DEFAULT_N_MC,
        "coefficient_seed": DEFAULT_COEFFICIENT_SEED,
        "u_in_w": 0.0,
    },
    Subcommand.ESTIMATE: {},
    Subcommand.DIAGNOSE: {},
    Subcommand.BENCH: {
        "n_mc": DEFAULT_N_MC,
        "coefficient_seed": DEFAULT_COEFFICIENT_SEED,
        "sizes": list(DEFAULT_SIZES),
        "reps": DEFAULT_REPS,
        "configs": EstimatorLabel.values(),
        "folds": DEFAULT_FOLDS,
        "repeats": DEFAULT_REPEATS,
    },
}


@dataclass
class RunConfig:
    subcommand: Subcommand
    settings: SettingsStack[str]
    out_dir: Path
    input: Optional[Path] = None
    config_path: Optional[Path] = None
    dump_if: Optional[Path] = None
    verbosity: int = 0

    def __getitem__(self, name: str) -> Any:
        return self.settings.get(name)

    def to_json(self) -> dict[str, Any]:
        return {
            "subcommand": self.subcommand.value,
            "input": None if self.input is None else str(self.input),
            "config": None if self.config_path is None else str(self.config_path),
            "settings": self.settings.resolved(),
            "sources": self.settings.sources(),
        }


class _ArgumentParser(ArgumentParser):
    """Usage errors exit with the validation code."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}")


def _learner(text: str) -> Any:
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"learner spec is not valid JSON: {exc}")
    return text


def _common_parser() -> ArgumentParser:
    parser = ArgumentParser(add_help=False)
    parser.add_argument(
        "-v", "--verbose", dest="verbose", action="count", default=0,
        help="log more (repeatable)"
    )
    parser.add_argument(
        "-q", "--quiet", dest="quiet", action="store_true",
        help="log warnings and errors only"
    )
    parser.add_argument(
        "--threads", dest="threads", type=int,
        help="upper bound on parallel workers (default 1)"
    )
    parser.add_argument(
        "--seed", dest="seed", type=int,
        help=f"master seed (default {const.DEFAULT_SEED})"
    )
    parser.add_argument(
        "-c", "--config", dest="config",
        help="JSON config file; flags override its values"
    )
    parser.add_argument(
        "-o", "--out", "--out-dir", dest="out", default=".",
        help="directory receiving the output artifacts (default: current directory)"
    )
    return parser


def _estimation_flags(parser: ArgumentParser):
    parser.add_argument(
        "-i", "--input", dest="input", required=True,
        help="long-format panel CSV"
    )
    parser.add_argument(
        "--regime", dest="regime", type=_int_list,
        help="counterfactual treatment trajectory, e.g. 0,0,0"
    )
    parser.add_argument(
        "--adjustment", dest="adjustment",
        help="'default', 'covariates', or a JSON list of adjustment columns"
    )
    parser.add_argument(
        "--epsilon", dest="epsilon", type=float,
        help=f"truncation level for cumulative propensities (default {const.DEFAULT_EPSILON})"
    )
    parser.add_argument(
        "--propensity-learner", dest="propensity_learner", type=_learner,
        help="learner kind or JSON learner spec for propensities"
    )
    parser.add_argument(
        "--pooled-propensity", dest="pooled_propensity", action="store_const", const=True,
        help="fit one propensity model across times"
    )
    parser.add_argument(
        "--propensity-window", dest="propensity_window", type=int,
        help="lag window of the pooled propensity design"
    )
    parser.add_argument(
        "--min-stratum", dest="min_stratum", type=int,
        help=f"compliant stratum size below which a warning is raised (default {const.DEFAULT_MIN_STRATUM})"
    )


def _build_parser() -> ArgumentParser:
    common = _common_parser()
    parser = _ArgumentParser(
        prog=PROG,
        description="Intervention-specific means under conditional parallel trends."
    )
    subparsers = parser.add_subparsers(dest="subcommand", required=True, parser_class=_ArgumentParser)

    simulate = subparsers.add_parser(
        Subcommand.SIMULATE.value, parents=[common],
        help="draw a synthetic panel with its Monte-Carlo truth"
    )
    simulate.add_argument(
        "--design", dest="design", choices=DESIGNS,
        help="structural simulation or state-level example (default structural)"
    )
    simulate.add_argument("--n", dest="n", type=int, help="number of units (default 1000)")
    simulate.add_argument(
        "--n-mc", dest="n_mc", type=int,
        help=f"Monte-Carlo draws for the truth (default {DEFAULT_N_MC})"
    )
    simulate.add_argument(
        "--coefficient-seed", dest="coefficient_seed", type=int,
        help=f"seed of the coefficient draw (default {DEFAULT_COEFFICIENT_SEED})"
    )
    simulate.add_argument(
        "--u-in-w", dest="u_in_w", type=float,
        help="coefficient of U in the first covariate; nonzero breaks parallel trends"
    )

    estimate = subparsers.add_parser(
        Subcommand.ESTIMATE.value, parents=[common],
        help="one-step or cross-fitted estimates for a panel"
    )
    _estimation_flags(estimate)
    estimate.add_argument(
        "--outcome-learner", dest="outcome_learner", type=_learner,
        help="learner kind or JSON learner spec for outcome regressions"
    )
    estimate.add_argument(
        "--horizons", dest="horizons", type=_int_list,
        help="comma-separated times to estimate (default all)"
    )
    estimate.add_argument(
        "--folds", dest="folds", type=int,
        help="cross-fit with this many folds (default: full sample)"
    )
    estimate.add_argument(
        "--repeats", dest="repeats", type=int,
        help="number of repeated cross-fit partitions (default 1)"
    )
    estimate.add_argument(
        "--level", dest="level", type=float,
        help=f"confidence level (default {DEFAULT_LEVEL})"
    )
    estimate.add_argument(
        "--dump-if", dest="dump_if",
        help="write per-unit influence-function contributions to this CSV"
    )

    diagnose = subparsers.add_parser(
        Subcommand.DIAGNOSE.value, parents=[common],
        help="baseline, compliance and positivity report"
    )
    _estimation_flags(diagnose)

    bench = subparsers.add_parser(
        Subcommand.BENCH.value, parents=[common],
        help="replication study over estimator configurations"
    )
    bench.add_argument(
        "--n", dest="sizes", type=_int_list,
        help="comma-separated sample sizes (default 1000)"
    )
    bench.add_argument(
        "--reps", dest="reps", type=int,
        help=f"replicates per sample size (default {DEFAULT_REPS})"
    )
    bench.add_argument(
        "--configs", dest="configs", type=lambda text: text.split(","),
        help="comma-separated subset of " + ",".join(EstimatorLabel.values())
    )
    bench.add_argument(
        "--folds", dest="folds", type=int,
        help=f"cross-fit folds of the stacked config (default {DEFAULT_FOLDS})"
    )
    bench.add_argument(
        "--repeats", dest="repeats", type=int,
        help=f"cross-fit partitions of the stacked config (default {DEFAULT_REPEATS})"
    )
    bench.add_argument(
        "--n-mc", dest="n_mc", type=int,
        help=f"Monte-Carlo draws for the truth (default {DEFAULT_N_MC})"
    )
    bench.add_argument(
        "--coefficient-seed", dest="coefficient_seed", type=int,
        help=f"seed of the coefficient draw (default {DEFAULT_COEFFICIENT_SEED})"
    )
    return parser


def load_config_file(path: Path) -> dict[str, Any]:
    if not path.is_file():
        raise ConfigError("no such config file", str(path))
    try:
        value = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"invalid JSON ({exc})", str(path))
    if not isinstance(value, dict):
        raise ConfigError("config must be a JSON object", str(path))
    unknown = sorted(set(value) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}", str(path))
    return value


def _flag_layer(args: Namespace) -> dict[str, Any]:
    layer = {
        name: getattr(args, name) for name in CONFIG_KEYS if hasattr(args, name)
    }
    adjustment = layer.get("adjustment")
    if isinstance(adjustment, str) and adjustment.lstrip().startswith("["):
        try:
            layer["adjustment"] = json.loads(adjustment)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--adjustment is not valid JSON: {exc}")
    return layer


def resolve_settings(
        subcommand: Subcommand,
        config: Optional[Mapping[str, Any]],
        flags: Mapping[str, Any],
        config_label: str = "config"
) -> SettingsStack[str]:
    """defaults < config file < flags"""
    settings: SettingsStack[str] = SettingsStack(
        {**_COMMON_DEFAULTS, **_SUBCOMMAND_DEFAULTS[subcommand]}
    )
    if config is not None:
        settings.push(config_label, config)
    settings.push("flags", flags)
    return settings


def get_args(argv: Optional[Sequence[str]] = None) -> RunConfig:
    args = _build_parser().parse_args(argv)
    subcommand = Subcommand.from_string(args.subcommand)

    config_path = None
    config = None
    if args.config is not None:
        config_path = util.normalize_windows_path(args.config)
        config = load_config_file(config_path)

    input_path = None
    if getattr(args, "input", None) is not None:
        input_path = util.normalize_windows_path(args.input)
        if not input_path.is_file():
            raise ConfigError("no such input file", str(input_path))

    settings = resolve_settings(
        subcommand, config, _flag_layer(args),
        "default" if config_path is None else f"config:{config_path}"
    )
    threads = settings["threads"]
    if not isinstance(threads, int) or threads < 1:
        raise ConfigError(f"threads must be a positive integer, got {threads!r}")

    dump_if = getattr(args, "dump_if", None)
    return RunConfig(
        subcommand=subcommand,
        settings=settings,
        out_dir=util.normalize_windows_path(args.out),
        input=input_path,
        config_path=config_path,
        dump_if=None if dump_if is None else util.normalize_windows_path(dump_if),
        verbosity=-1 if args.quiet else args.verbose,
    )


__all__ = ["RunConfig", "get_args", "resolve_settings", "load_config_file", "CONFIG_KEYS"]
