import io
import logging

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

from .. import const, util
from ..errors import (
    ConfigError, DuplicateRecordError, PanelError, PanelParseError,
    UnbalancedPanelError
)
from .dataset import PanelDataset


_logger = logging.getLogger(__name__)

# header row is line 1 of the file
_FIRST_DATA_LINE = 2


@dataclass(frozen=True)
class PanelSchema:
    unit_col: str = const.UNIT
    time_col: str = const.TIME
    treatment_col: str = const.TREATMENT
    outcome_col: str = const.OUTCOME
    covariate_cols: tuple[str, ...] = field(default_factory=tuple)
    alphabet: Optional[tuple[int, ...]] = None

    def numeric_columns(self) -> list[str]:
        return [
            self.time_col, self.treatment_col, self.outcome_col,
            *self.covariate_cols
        ]

    def required_columns(self) -> list[str]:
        return [self.unit_col, *self.numeric_columns()]

    @classmethod
    def from_mapping(cls, config: Mapping[str, Any]) -> "PanelSchema":
        covariates = config.get("covariate_cols", [])
        if isinstance(covariates, str) or not isinstance(covariates, Sequence):
            raise ConfigError("covariate_cols must be an ordered list of column names")
        alphabet = config.get("alphabet")
        try:
            return cls(
                unit_col=str(config.get("unit_col", const.UNIT)),
                time_col=str(config.get("time_col", const.TIME)),
                treatment_col=str(config.get("treatment_col", const.TREATMENT)),
                outcome_col=str(config.get("outcome_col", const.OUTCOME)),
                covariate_cols=tuple(str(name) for name in covariates),
                alphabet=None if alphabet is None else tuple(int(a) for a in alphabet),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid panel schema: {exc}")

    def to_mapping(self) -> dict[str, Any]:
        return {
            "unit_col": self.unit_col,
            "time_col": self.time_col,
            "treatment_col": self.treatment_col,
            "outcome_col": self.outcome_col,
            "covariate_cols": list(self.covariate_cols),
            "alphabet": None if self.alphabet is None else list(self.alphabet),
        }


def _parse_numeric(frame: pd.DataFrame, column: str, path: str) -> pd.Series:
    raw = frame[column]
    values = pd.to_numeric(raw.str.strip(), errors="coerce")
    bad = values.isna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise PanelParseError(path, row + _FIRST_DATA_LINE, column, raw.iloc[row])
    return values.astype(float)


def _as_label(value: float) -> int | float:
    return int(value) if float(value).is_integer() else float(value)


def _unit_labels(raw: pd.Series) -> pd.Series:
    stripped = raw.str.strip()
    numeric = pd.to_numeric(stripped, errors="coerce")
    if not numeric.isna().any() and (numeric == numeric.round()).all():
        return numeric.astype(np.int64)
    if (stripped == "").any():
        row = int(np.flatnonzero((stripped == "").to_numpy())[0])
        raise PanelError(f"row {row + _FIRST_DATA_LINE}: empty unit identifier")
    return stripped


def load_panel(path: str | Path, schema: PanelSchema) -> PanelDataset:
    """Read a long-format CSV (one row per unit-time) into a PanelDataset."""
    path = Path(path)
    if not path.exists():
        raise PanelError(f"no such file: {path}")
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, encoding="utf-8"
        )
    except (UnicodeDecodeError, pd.errors.ParserError) as exc:
        raise PanelError(f"{path}: unreadable CSV ({exc})")

    missing_columns = [
        column for column in schema.required_columns()
        if column not in frame.columns
    ]
    if missing_columns:
        raise PanelError(f"{path}: missing required columns {missing_columns}")
    if len(frame) == 0:
        raise PanelError(f"{path}: no data rows")

    units = _unit_labels(frame[schema.unit_col])
    numeric = {
        column: _parse_numeric(frame, column, str(path))
        for column in schema.numeric_columns()
    }
    times = numeric[schema.time_col]

    treatment = numeric[schema.treatment_col]
    fractional = treatment != treatment.round()
    if fractional.any():
        row = int(np.flatnonzero(fractional.to_numpy())[0])
        raise PanelParseError(
            str(path), row + _FIRST_DATA_LINE, schema.treatment_col,
            frame[schema.treatment_col].iloc[row]
        )

    keys = pd.DataFrame({"unit": units, "time": times})
    duplicated = keys.duplicated(keep="first")
    if duplicated.any():
        pairs = keys[duplicated].drop_duplicates()
        raise DuplicateRecordError(
            (unit, _as_label(time)) for unit, time in pairs.itertuples(index=False)
        )

    unit_levels = sorted(units.unique())
    time_levels = sorted(times.unique())
    n, n_times = len(unit_levels), len(time_levels)
    if len(frame) != n * n_times:
        present = set(zip(units, times))
        missing = [
            (unit, _as_label(time))
            for unit in unit_levels for time in time_levels
            if (unit, time) not in present
        ]
        raise UnbalancedPanelError(missing)

    unit_index = units.map({label: i for i, label in enumerate(unit_levels)}).to_numpy()
    time_index = times.map({label: t for t, label in enumerate(time_levels)}).to_numpy()

    treatment_array = np.zeros((n, n_times), dtype=np.int64)
    outcome_array = np.zeros((n, n_times))
    covariate_array = np.zeros((n, n_times, len(schema.covariate_cols)))
    treatment_array[unit_index, time_index] = treatment.to_numpy().astype(np.int64)
    outcome_array[unit_index, time_index] = numeric[schema.outcome_col].to_numpy()
    for c, column in enumerate(schema.covariate_cols):
        covariate_array[unit_index, time_index, c] = numeric[column].to_numpy()

    data = PanelDataset(
        treatment_array, covariate_array, outcome_array,
        covariate_names=schema.covariate_cols,
        alphabet=schema.alphabet,
        unit_labels=[
            label.item() if isinstance(label, np.generic) else label
            for label in unit_levels
        ],
        time_labels=[_as_label(label) for label in time_levels],
    )
    _logger.info("loaded %s from %s", data, path)
    return data


def panel_frame(data: PanelDataset, schema: Optional[PanelSchema] = None) -> pd.DataFrame:
    if schema is None:
        schema = PanelSchema(covariate_cols=data.covariate_names)
    if len(schema.covariate_cols) != data.n_covariates:
        raise ConfigError("schema covariate columns do not match the panel")
    n, n_times = data.n_units, data.n_times
    columns: dict[str, Any] = {
        schema.unit_col: np.repeat(np.array(data.unit_labels, dtype=object), n_times),
        schema.time_col: np.tile(np.array(data.time_labels, dtype=object), n),
        schema.treatment_col: data.treatment.reshape(-1),
        schema.outcome_col: data.outcome.reshape(-1),
    }
    for c, column in enumerate(schema.covariate_cols):
        columns[column] = data.covariates[:, :, c].reshape(-1)
    return pd.DataFrame(columns)


def panel_csv_text(data: PanelDataset, schema: Optional[PanelSchema] = None) -> str:
    buffer = io.StringIO()
    panel_frame(data, schema).to_csv(
        buffer, index=False, float_format="%.17g", lineterminator="\n"
    )
    return buffer.getvalue()


def save_panel(
        data: PanelDataset,
        path: str | Path,
        schema: Optional[PanelSchema] = None
):
    util.atomic_write_text(path, panel_csv_text(data, schema))


__all__ = ["PanelSchema", "load_panel", "save_panel", "panel_frame", "panel_csv_text"]
