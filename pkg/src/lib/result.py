from dataclasses import dataclass
from collections.abc import Callable
from typing import Generic, TypeVar, Union


_PO_A = TypeVar("_PO_A")


@dataclass
class Ok(Generic[_PO_A]):
    ok: _PO_A


@dataclass
class Err:
    err: str
    kind: str = "error"


_PR_A = TypeVar("_PR_A")


Result = Union[Ok[_PR_A], Err]


_C_A = TypeVar("_C_A")


def capture(action: Callable[[], _C_A], *catch: type[Exception]) -> Result[_C_A]:
    """Run `action`, turning the listed exception types into an Err."""
    try:
        return Ok(action())
    except catch as exc:  # type: ignore[misc]
        return Err(str(exc), type(exc).__name__)


__all__ = ["Ok", "Err", "Result", "capture"]
