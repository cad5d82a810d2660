from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Any, Optional

import numpy as np

from .. import const
from ..const import FeatureMapKind, LearnerKind, TransformKind
from ..errors import SpecError
from .transform_parse import parse_transform, render_transform


@dataclass(frozen=True)
class Transform:
    kind: TransformKind
    columns: tuple[str, ...]

    def __post_init__(self):
        arity = 2 if self.kind == TransformKind.PRODUCT else 1
        if len(self.columns) != arity:
            raise SpecError(f"{self.kind} takes {arity} column(s), got {self.columns}")

    @classmethod
    def parse(cls, text: str) -> "Transform":
        parsed = parse_transform(text)
        if parsed is None:
            raise SpecError(f"cannot parse feature transform {text!r}")
        kind, columns = parsed
        return cls(kind, columns)

    def __str__(self) -> str:
        return render_transform(self.kind, self.columns)


def _split_name(name: str) -> tuple[str, Optional[str]]:
    variable, _, time = name.partition("@")
    return (variable, time if time else None)


def _matches(pattern: str, name: str) -> bool:
    # "W1" matches W1 at any time, "W1@2" only that column
    if "@" in pattern:
        return pattern == name
    return _split_name(name)[0] == pattern


def _unary(kind: TransformKind, column: np.ndarray) -> np.ndarray:
    match kind:
        case TransformKind.SIN:
            return np.sin(column)
        case TransformKind.COS:
            return np.cos(column)
        case TransformKind.SQUARE:
            return column * column
        case _:
            raise SpecError(f"{kind} is not a unary transform")


@dataclass(frozen=True)
class FeatureMap:
    kind: FeatureMapKind = FeatureMapKind.IDENTITY
    degree: int = 2
    interactions: bool = True
    transforms: tuple[Transform, ...] = ()
    keep_raw: bool = True

    def __post_init__(self):
        if self.kind == FeatureMapKind.POLYNOMIAL and self.degree < 1:
            raise SpecError(f"polynomial degree must be >= 1, got {self.degree}")

    @classmethod
    def identity(cls) -> "FeatureMap":
        return cls()

    @classmethod
    def polynomial(cls, degree: int = 2, interactions: bool = True) -> "FeatureMap":
        return cls(FeatureMapKind.POLYNOMIAL, degree=degree, interactions=interactions)

    @classmethod
    def custom(cls, transforms: Sequence[str | Transform], keep_raw: bool = True) -> "FeatureMap":
        parsed = tuple(
            item if isinstance(item, Transform) else Transform.parse(item)
            for item in transforms
        )
        return cls(FeatureMapKind.CUSTOM, transforms=parsed, keep_raw=keep_raw)

    def apply(
            self,
            features: np.ndarray,
            names: Sequence[str]
    ) -> tuple[np.ndarray, list[str]]:
        match self.kind:
            case FeatureMapKind.IDENTITY:
                return (features, list(names))
            case FeatureMapKind.POLYNOMIAL:
                return self._apply_polynomial(features, names)
            case FeatureMapKind.CUSTOM:
                return self._apply_custom(features, names)
        raise SpecError(f"unknown feature map {self.kind}")

    def _apply_polynomial(self, features, names):
        blocks = [features]
        out_names = list(names)
        for power in range(2, self.degree + 1):
            blocks.append(features ** power)
            out_names += [f"{name}^{power}" for name in names]
        if self.interactions:
            for a, b in combinations(range(features.shape[1]), 2):
                blocks.append(features[:, [a]] * features[:, [b]])
                out_names.append(f"{names[a]}*{names[b]}")
        return (np.column_stack(blocks) if blocks else features, out_names)

    def _apply_custom(self, features, names):
        blocks: list[np.ndarray] = [features] if self.keep_raw else []
        out_names = list(names) if self.keep_raw else []
        for transform in self.transforms:
            if transform.kind == TransformKind.PRODUCT:
                lhs, rhs = transform.columns
                for a, name_a in enumerate(names):
                    if not _matches(lhs, name_a):
                        continue
                    time_a = _split_name(name_a)[1]
                    for b, name_b in enumerate(names):
                        if _matches(rhs, name_b) and _split_name(name_b)[1] == time_a:
                            blocks.append(features[:, [a]] * features[:, [b]])
                            out_names.append(f"{name_a}*{name_b}")
            else:
                for a, name in enumerate(names):
                    if _matches(transform.columns[0], name):
                        blocks.append(_unary(transform.kind, features[:, [a]]))
                        out_names.append(f"{transform.kind.value}({name})")
        if not blocks:
            return (np.empty((features.shape[0], 0)), out_names)
        return (np.column_stack(blocks), out_names)

    def to_json(self) -> dict[str, Any]:
        match self.kind:
            case FeatureMapKind.POLYNOMIAL:
                return {
                    "kind": self.kind.value, "degree": self.degree,
                    "interactions": self.interactions
                }
            case FeatureMapKind.CUSTOM:
                return {
                    "kind": self.kind.value, "keep_raw": self.keep_raw,
                    "transforms": [str(t) for t in self.transforms]
                }
            case _:
                return {"kind": self.kind.value}

    @classmethod
    def from_json(cls, value: Any) -> "FeatureMap":
        if value is None:
            return cls.identity()
        if isinstance(value, str):
            value = {"kind": value}
        if not isinstance(value, Mapping):
            raise SpecError(f"feature_map must be an object, got {value!r}")
        try:
            kind = FeatureMapKind.from_string(str(value.get("kind", "identity")))
        except KeyError as exc:
            raise SpecError(f"unknown feature map kind {exc}")
        match kind:
            case FeatureMapKind.POLYNOMIAL:
                return cls.polynomial(
                    int(value.get("degree", 2)), bool(value.get("interactions", True))
                )
            case FeatureMapKind.CUSTOM:
                return cls.custom(
                    list(value.get("transforms", [])), bool(value.get("keep_raw", True))
                )
            case _:
                return cls.identity()


@dataclass(frozen=True)
class LearnerSpec:
    """Declarative learner configuration.

    penalty None means lambda is chosen by V-fold CV over a log grid.
    """

    kind: LearnerKind
    penalty: Optional[float] = None
    mixing: float = 0.5
    max_depth: int = 3
    min_leaf: int = 5
    n_bags: int = 25
    folds: int = const.DEFAULT_CV_FOLDS
    members: tuple["LearnerSpec", ...] = ()
    feature_map: FeatureMap = field(default_factory=FeatureMap)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.penalty is not None and not self.penalty >= 0:
            raise SpecError(f"penalty must be >= 0, got {self.penalty}")
        if not 0.0 <= self.mixing <= 1.0:
            raise SpecError(f"mixing must lie in [0,1], got {self.mixing}")
        if self.folds < 2:
            raise SpecError(f"CV fold count must be >= 2, got {self.folds}")
        if self.max_depth < 0 or self.min_leaf < 1 or self.n_bags < 1:
            raise SpecError("tree settings need max_depth >= 0, min_leaf >= 1, n_bags >= 1")
        if self.kind == LearnerKind.STACK:
            if len(self.members) == 0:
                raise SpecError("stack needs at least one member")
            for member in self.members:
                if member.kind == LearnerKind.STACK:
                    raise SpecError("stack members must not be stacks")
        elif self.members:
            raise SpecError(f"only stacks take members, not {self.kind}")

    def with_feature_map(self, feature_map: FeatureMap) -> "LearnerSpec":
        return replace(self, feature_map=feature_map)

    def to_json(self) -> dict[str, Any]:
        result: dict[str, Any] = {"kind": self.kind.value}
        if self.kind.is_penalized():
            result["penalty"] = self.penalty
            result["mixing"] = self.mixing
        if self.kind in (LearnerKind.TREE, LearnerKind.BAGGED_TREES):
            result["max_depth"] = self.max_depth
            result["min_leaf"] = self.min_leaf
        if self.kind == LearnerKind.BAGGED_TREES:
            result["n_bags"] = self.n_bags
        if self.kind == LearnerKind.STACK or (
                self.kind.is_penalized() and self.penalty is None
        ):
            result["folds"] = self.folds
        if self.kind == LearnerKind.STACK:
            result["members"] = [member.to_json() for member in self.members]
        result["feature_map"] = self.feature_map.to_json()
        return result

    @classmethod
    def from_json(cls, value: Any) -> "LearnerSpec":
        if isinstance(value, str):
            value = {"kind": value}
        if not isinstance(value, Mapping):
            raise SpecError(f"learner spec must be an object, got {value!r}")
        try:
            kind = LearnerKind.from_string(str(value["kind"]))
        except KeyError as exc:
            raise SpecError(f"unknown or missing learner kind {exc}")
        penalty = value.get("penalty")
        try:
            return cls(
                kind=kind,
                penalty=None if penalty is None else float(penalty),
                mixing=float(value.get("mixing", 0.5)),
                max_depth=int(value.get("max_depth", 3)),
                min_leaf=int(value.get("min_leaf", 5)),
                n_bags=int(value.get("n_bags", 25)),
                folds=int(value.get("folds", const.DEFAULT_CV_FOLDS)),
                members=tuple(cls.from_json(m) for m in value.get("members", [])),
                feature_map=FeatureMap.from_json(value.get("feature_map")),
            )
        except (TypeError, ValueError) as exc:
            raise SpecError(f"invalid learner spec {dict(value)}: {exc}")


__all__ = ["Transform", "FeatureMap", "LearnerSpec"]
