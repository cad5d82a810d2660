from collections.abc import Hashable, Iterable, Iterator, KeysView
from typing import Generic, Optional, TypeVar

from .data_view import SequenceView


_MM_K = TypeVar("_MM_K", bound=Hashable)
_MM_V = TypeVar("_MM_V")


class MultiMap(Generic[_MM_K, _MM_V]):
    """Key to ordered values; keys and values keep insertion order."""

    _data: dict[_MM_K, list[_MM_V]]

    def __init__(self, items: Optional[Iterable[tuple[_MM_K, _MM_V]]] = None):
        self._data = dict()
        if items is not None:
            for (key, value) in items:
                self.add(key, value)

    def key_count(self) -> int:
        return len(self._data)

    def __len__(self) -> int:
        return self.key_count()

    def __contains__(self, key: object) -> bool:
        return key in self._data

    def __getitem__(self, key: _MM_K) -> SequenceView[_MM_V]:
        return SequenceView(self._data[key])

    def add(self, key: _MM_K, value: _MM_V):
        if key in self._data:
            values = self._data[key]
        else:
            values = []
            self._data[key] = values
        values.append(value)

    def extend(self, other: "MultiMap[_MM_K, _MM_V]"):
        for key, values in other.items():
            for value in values:
                self.add(key, value)

    def __iter__(self) -> Iterator[_MM_K]:
        return iter(self._data)

    def keys(self) -> KeysView[_MM_K]:
        return self._data.keys()

    def items(self) -> Iterator[tuple[_MM_K, SequenceView[_MM_V]]]:
        for key, values in self._data.items():
            yield (key, SequenceView(values))

    def flat_items(self) -> Iterator[tuple[_MM_K, _MM_V]]:
        for key, values in self._data.items():
            for value in values:
                yield (key, value)


__all__ = ["MultiMap"]
