from typing import Optional

from .const import VariableKind


class ColumnId:
    """One selectable column of the history (X_t or Y_t)."""

    def __init__(self, time: int, kind: VariableKind, index: int):
        if time < 0 or index < 0:
            raise ValueError(f"negative column coordinate ({time}, {index})")
        self._time = time
        self._kind = kind
        self._index = index

    @property
    def time(self) -> int:
        return self._time

    @property
    def kind(self) -> VariableKind:
        return self._kind

    @property
    def index(self) -> int:
        return self._index

    @property
    def is_outcome(self) -> bool:
        return self._kind == VariableKind.OUTCOME

    def name(self, covariate_names: Optional[tuple[str, ...]] = None) -> str:
        if self.is_outcome:
            return f"Y@{self._time}"
        if covariate_names is None:
            return f"X{self._index}@{self._time}"
        return f"{covariate_names[self._index]}@{self._time}"

    def sort_key(self) -> tuple[int, int, int]:
        # covariates before outcomes, then time-ascending, then index
        return (int(self.is_outcome), self._time, self._index)

    def _structural_eq(self, other) -> bool:
        return (
            self._time == other._time and
            self._kind == other._kind and
            self._index == other._index
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, ColumnId) and self._structural_eq(other)

    def __hash__(self) -> int:
        return hash((self._time, self._kind, self._index))

    def __str__(self) -> str:
        return f"ColumnId({self._kind}, t={self._time}, i={self._index})"

    __repr__ = __str__


class ChainId:
    """A sequential-regression chain Q^{j,k,.}."""

    def __init__(self, j: int, k: int):
        if k < 1 or j not in (k, k - 1):
            raise ValueError(f"invalid chain (j={j}, k={k})")
        self._j = j
        self._k = k

    @property
    def j(self) -> int:
        return self._j

    @property
    def k(self) -> int:
        return self._k

    def stages(self) -> range:
        # fitting order m = k..1
        return range(self._k, 0, -1)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ChainId) and
            self._j == other._j and
            self._k == other._k
        )

    def __hash__(self) -> int:
        return hash((self._j, self._k))

    def __str__(self) -> str:
        return f"(j={self._j},k={self._k})"

    __repr__ = __str__


class QIndex:

    def __init__(self, j: int, k: int, m: int):
        if not (1 <= m <= k + 1) or j not in (k, k - 1) or j < 0:
            raise ValueError(f"invalid Q index (j={j}, k={k}, m={m})")
        self._j = j
        self._k = k
        self._m = m

    @property
    def j(self) -> int:
        return self._j

    @property
    def k(self) -> int:
        return self._k

    @property
    def m(self) -> int:
        return self._m

    @property
    def chain(self) -> ChainId:
        return ChainId(self._j, self._k)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, QIndex) and
            (self._j, self._k, self._m) == (other._j, other._k, other._m)
        )

    def __hash__(self) -> int:
        return hash((self._j, self._k, self._m))

    def __str__(self) -> str:
        return f"(j={self._j},k={self._k},m={self._m})"

    __repr__ = __str__
