import json
import math
import os
import tempfile

from collections.abc import Mapping, Sequence
from pathlib import Path, PureWindowsPath
from typing import Any

import numpy as np


def normalize_windows_path(path: str | Path) -> Path:
    return Path(os.path.normpath(Path(*PureWindowsPath(path).parts)))


def derive_seed(seed: int, *keys: int) -> int:
    """Independent, reproducible sub-stream seed for the given key path."""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=tuple(keys))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def lower_median(values: Sequence[float]) -> float:
    # order statistic ceil(K/2), so the result is always an attained value
    ordered = sorted(values)
    if len(ordered) == 0:
        raise ValueError("median of an empty sequence")
    return float(ordered[math.ceil(len(ordered) / 2) - 1])


def atomic_write_text(path: str | Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as stream:
            stream.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def atomic_write_all(files: Mapping[Path, str]):
    """Write every file or none: all texts are staged before any is moved in place."""
    staged: list[tuple[str, Path]] = []
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
            staged.append((tmp, path))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as stream:
                stream.write(text)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)


def dump_json(value: Any) -> str:
    return json.dumps(value, indent=2, sort_keys=True, allow_nan=True) + "\n"


def balanced_fold_labels(n: int, folds: int, seed: int) -> np.ndarray:
    """Random fold label per row; fold sizes differ by at most one."""
    if folds < 2 or n < folds:
        raise ValueError(f"cannot split {n} rows into {folds} folds")
    rng = np.random.default_rng(seed)
    return rng.permutation(np.arange(n) % folds)


__all__ = [
    "normalize_windows_path", "derive_seed", "lower_median", "atomic_write_text",
    "atomic_write_all", "dump_json", "balanced_fold_labels",
]
