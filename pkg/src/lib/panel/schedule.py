from collections.abc import Mapping, Sequence
from typing import Any, Optional

import numpy as np

from ..const import VariableKind
from ..data_view import MapView
from ..errors import ConfigError, ScheduleError
from ..id import ColumnId
from .dataset import PanelDataset


def _admissible(column: ColumnId, k: int) -> Optional[str]:
    """Why `column` may not enter W-bar_k, or None when it may."""
    if column.is_outcome:
        if column.time >= k - 1:
            return f"Y_{column.time} is not in Y-bar_{k - 2}"
    elif column.time > k:
        return f"X_{column.time} lies in the future of k={k}"
    return None


def _first_admissible_k(column: ColumnId) -> int:
    if column.is_outcome:
        return column.time + 2
    return max(1, column.time)


class AdjustmentSchedule:
    """Nested conditioning sets W-bar_1 ⊆ ... ⊆ W-bar_tau.

    Each W-bar_k is an ordered selection of columns from (X-bar_k, Y-bar_{k-2}).
    """

    _horizon: int
    _selections: dict[int, tuple[ColumnId, ...]]

    def __init__(self, horizon: int, selections: Mapping[int, Sequence[ColumnId]]):
        if horizon < 0:
            raise ScheduleError(f"negative horizon {horizon}")
        expected = set(range(1, horizon + 1))
        if set(selections) != expected:
            raise ScheduleError(
                f"schedule must define k = 1..{horizon}, got {sorted(selections)}"
            )
        self._horizon = horizon
        self._selections = dict()
        for k in range(1, horizon + 1):
            columns = tuple(selections[k])
            if len(set(columns)) != len(columns):
                raise ScheduleError(f"duplicate columns in W-bar_{k}")
            for column in columns:
                reason = _admissible(column, k)
                if reason is not None:
                    raise ScheduleError(f"W-bar_{k} cannot select {column}: {reason}")
            if k > 1:
                dropped = set(self._selections[k - 1]) - set(columns)
                if dropped:
                    raise ScheduleError(
                        f"W-bar_{k - 1} is not a subset of W-bar_{k}; missing "
                        + ", ".join(map(str, sorted(dropped, key=ColumnId.sort_key)))
                    )
            self._selections[k] = columns

    @classmethod
    def default(cls, data: PanelDataset) -> "AdjustmentSchedule":
        """All of X-bar_k plus all of Y-bar_{k-2}: the maximal admissible set."""
        return cls._cumulative(data, with_outcomes=True)

    @classmethod
    def covariates_only(cls, data: PanelDataset) -> "AdjustmentSchedule":
        return cls._cumulative(data, with_outcomes=False)

    @classmethod
    def _cumulative(cls, data: PanelDataset, with_outcomes: bool) -> "AdjustmentSchedule":
        selections: dict[int, list[ColumnId]] = dict()
        for k in range(1, data.horizon + 1):
            columns = [
                ColumnId(s, VariableKind.COVARIATE, i)
                for s in range(k + 1) for i in range(data.n_covariates)
            ]
            if with_outcomes:
                columns += [
                    ColumnId(s, VariableKind.OUTCOME, 0) for s in range(k - 1)
                ]
            selections[k] = columns
        return cls(data.horizon, selections)

    @classmethod
    def from_columns(
            cls,
            horizon: int,
            columns: Sequence[ColumnId]
    ) -> "AdjustmentSchedule":
        """Each column enters at its first admissible k and stays thereafter."""
        selections = {
            k: [column for column in columns if _first_admissible_k(column) <= k]
            for k in range(1, horizon + 1)
        }
        return cls(horizon, selections)

    @classmethod
    def from_json(cls, data: PanelDataset, spec: Any) -> "AdjustmentSchedule":
        """Parse the `adjustment` config entry.

        Accepts "default", "covariates", or a list of entries
        {"time": t, "kind": "covariate"|"outcome", "index": i | "name": str,
         "k": optional}. Entries without "k" join at their first admissible k.
        """
        if spec is None or spec == "default":
            return cls.default(data)
        if spec == "covariates":
            return cls.covariates_only(data)
        if not isinstance(spec, list):
            raise ConfigError(f"adjustment must be 'default', 'covariates' or a list, got {spec!r}")

        pinned: dict[int, list[ColumnId]] = {k: [] for k in range(1, data.horizon + 1)}
        floating: list[ColumnId] = []
        for entry in spec:
            column = _column_from_json(data, entry)
            if "k" in entry:
                k = int(entry["k"])
                if k not in pinned:
                    raise ConfigError(f"adjustment entry for k={k} outside 1..{data.horizon}")
                pinned[k].append(column)
            else:
                floating.append(column)
        if floating and any(pinned.values()):
            raise ConfigError("adjustment entries must either all carry 'k' or none")
        if floating:
            schedule = cls.from_columns(data.horizon, floating)
        else:
            schedule = cls(data.horizon, pinned)
        schedule.check_against(data)
        return schedule

    @property
    def horizon(self) -> int:
        return self._horizon

    def columns(self, k: int) -> tuple[ColumnId, ...]:
        if k not in self._selections:
            raise ScheduleError(f"no adjustment set for k={k} (valid: 1..{self._horizon})")
        return self._selections[k]

    def selections(self) -> MapView[int, tuple[ColumnId, ...]]:
        return MapView(self._selections)

    def column_names(self, data: PanelDataset, k: int) -> list[str]:
        return [column.name(data.covariate_names) for column in self.columns(k)]

    def outcome_free(self, k: int) -> bool:
        return not any(column.is_outcome for column in self.columns(k))

    def check_against(self, data: PanelDataset):
        if self._horizon != data.horizon:
            raise ScheduleError(
                f"schedule horizon {self._horizon} does not match panel tau={data.horizon}"
            )
        for k, columns in self._selections.items():
            for column in columns:
                if not column.is_outcome and column.index >= data.n_covariates:
                    raise ScheduleError(
                        f"W-bar_{k} selects covariate {column.index}, panel has "
                        f"{data.n_covariates}"
                    )

    def to_json(self, data: PanelDataset) -> dict[str, list[str]]:
        return {str(k): self.column_names(data, k) for k in self._selections}


def _column_from_json(data: PanelDataset, entry: Any) -> ColumnId:
    if not isinstance(entry, Mapping):
        raise ConfigError(f"adjustment entry must be an object, got {entry!r}")
    try:
        kind = VariableKind.from_string(str(entry.get("kind", "covariate")))
        time = int(entry["time"])
        if kind == VariableKind.OUTCOME:
            index = 0
        elif "name" in entry:
            index = data.covariate_names.index(str(entry["name"]))
        else:
            index = int(entry["index"])
    except KeyError as exc:
        raise ConfigError(f"adjustment entry {dict(entry)} lacks {exc}")
    except ValueError as exc:
        raise ConfigError(f"adjustment entry {dict(entry)}: {exc}")
    return ColumnId(time, kind, index)


def design_matrix(
        data: PanelDataset,
        schedule: AdjustmentSchedule,
        k: int
) -> np.ndarray:
    """Feature matrix of W-bar_k, one row per unit, columns in declared order."""
    if not 1 <= k <= data.horizon:
        raise ScheduleError(f"design matrix needs 1 <= k <= tau={data.horizon}, got {k}")
    columns = schedule.columns(k)
    matrix = np.empty((data.n_units, len(columns)))
    for c, column in enumerate(columns):
        reason = _admissible(column, k)
        if reason is not None:
            raise ScheduleError(f"W-bar_{k} cannot select {column}: {reason}")
        if column.is_outcome:
            matrix[:, c] = data.outcome[:, column.time]
        else:
            matrix[:, c] = data.covariates[:, column.time, column.index]
    return matrix


__all__ = ["AdjustmentSchedule", "design_matrix"]
