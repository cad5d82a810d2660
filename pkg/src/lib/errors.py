from collections.abc import Iterable, Sequence
from typing import Optional


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ESTIMATION = 2


class DidError(Exception):

    exit_code: int = EXIT_ESTIMATION


# validation family -------------------------------------------------------

class ValidationError(DidError):

    exit_code = EXIT_VALIDATION


class ConfigError(ValidationError):

    def __init__(self, message: str, source: Optional[str] = None):
        self._source = source
        super().__init__(message if source is None else f"{source}: {message}")

    @property
    def source(self) -> Optional[str]:
        return self._source


class SpecError(ValidationError):
    pass


class ScheduleError(ValidationError):
    pass


class PanelError(ValidationError):
    pass


class PanelParseError(PanelError):

    def __init__(self, path: str, row: int, column: str, value: object):
        self._row = row
        self._column = column
        super().__init__(
            f"{path}:{row}: column '{column}' holds non-numeric value {value!r}"
        )

    @property
    def row(self) -> int:
        return self._row

    @property
    def column(self) -> str:
        return self._column


def _pairs_text(pairs: Sequence[tuple[object, object]], limit: int = 20) -> str:
    shown = ", ".join(f"({unit},{time})" for unit, time in pairs[:limit])
    if len(pairs) > limit:
        shown += f", ... ({len(pairs) - limit} more)"
    return shown


class UnbalancedPanelError(PanelError):

    def __init__(self, missing: Iterable[tuple[object, object]]):
        self._missing = list(missing)
        super().__init__(
            "unbalanced panel, missing (unit,time) records: "
            + _pairs_text(self._missing)
        )

    @property
    def missing(self) -> list[tuple[object, object]]:
        return list(self._missing)


class DuplicateRecordError(PanelError):

    def __init__(self, duplicates: Iterable[tuple[object, object]]):
        self._duplicates = list(duplicates)
        super().__init__(
            "duplicate (unit,time) records: " + _pairs_text(self._duplicates)
        )

    @property
    def duplicates(self) -> list[tuple[object, object]]:
        return list(self._duplicates)


# estimation family -------------------------------------------------------

class LearnerError(DidError):
    pass


class DimensionMismatchError(LearnerError):

    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"feature width mismatch: expected {expected} columns, got {actual}"
        )


class PositivityError(DidError):

    def __init__(self, m: int, detail: str = ""):
        self.m = m
        message = f"empty compliant stratum at m={m}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class NuisanceFitError(DidError):

    def __init__(self, failures: Sequence[tuple[str, str, str]]):
        # (coordinate, message, exception name); coordinates look like "(j=1,k=2)"
        self.failures = [(coord, message) for coord, message, _ in failures]
        self.kinds = tuple(kind for _, _, kind in failures)
        lines = [f"  {coord}: {message}" for coord, message in self.failures]
        super().__init__("\n".join(["nuisance fitting failed:", *lines]))

    def only(self, *kinds: type[Exception]) -> bool:
        names = {kind.__name__ for kind in kinds}
        return all(kind in names for kind in self.kinds)


class FoldTooSmallError(DidError):

    def __init__(self, folds: int, repetition: int, fold: int, cause: str):
        self.folds = folds
        super().__init__(
            f"cross-fit fold {fold} of repetition {repetition} cannot be fit "
            f"({cause}); try fewer folds than M={folds}"
        )


class MissingNuisanceError(DidError):

    def __init__(self, coordinate: str):
        self.coordinate = coordinate
        super().__init__(f"no fitted nuisance for {coordinate}")
