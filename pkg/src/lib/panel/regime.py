import logging

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from ..data_view import frozen
from ..errors import ConfigError
from .dataset import PanelDataset


_logger = logging.getLogger(__name__)


class Regime:
    """The shared counterfactual treatment trajectory a*_0..a*_tau."""

    _trajectory: tuple[int, ...]

    def __init__(self, trajectory: Iterable[int]):
        values = list(trajectory)
        if len(values) == 0:
            raise ConfigError("regime trajectory is empty")
        try:
            self._trajectory = tuple(int(value) for value in values)
        except (TypeError, ValueError):
            raise ConfigError(f"regime entries must be integers: {values}")
        if any(int(value) != value for value in values):
            raise ConfigError(f"regime entries must be integers: {values}")

    @classmethod
    def constant(cls, code: int, horizon: int) -> "Regime":
        return cls([code] * (horizon + 1))

    @property
    def trajectory(self) -> tuple[int, ...]:
        return self._trajectory

    def __len__(self) -> int:
        return len(self._trajectory)

    def __getitem__(self, t: int) -> int:
        return self._trajectory[t]

    def check_against(self, data: PanelDataset):
        if len(self._trajectory) != data.n_times:
            raise ConfigError(
                f"regime has length {len(self._trajectory)}, panel needs "
                f"tau+1 = {data.n_times}"
            )
        outside = sorted(set(self._trajectory) - data.alphabet)
        if outside:
            raise ConfigError(
                f"regime codes {outside} outside the treatment alphabet "
                f"{sorted(data.alphabet)}"
            )

    def __eq__(self, other) -> bool:
        return isinstance(other, Regime) and self._trajectory == other._trajectory

    def __hash__(self) -> int:
        return hash(self._trajectory)

    def __str__(self) -> str:
        return "Regime(" + ",".join(map(str, self._trajectory)) + ")"


class ComplianceProfile:
    """Prefix-match indicators I(A-bar_m = a*-bar_m) per unit and time."""

    _indicators: np.ndarray

    def __init__(self, indicators: np.ndarray):
        indicators = np.asarray(indicators, dtype=bool)
        if indicators.ndim != 2:
            raise ValueError("compliance indicators must be an (n, T) matrix")
        if np.any(indicators[:, 1:] & ~indicators[:, :-1]):
            raise ValueError("compliance must be non-increasing in m")
        self._indicators = frozen(indicators)

    @property
    def indicators(self) -> np.ndarray:
        return self._indicators

    @property
    def n_units(self) -> int:
        return self._indicators.shape[0]

    def at(self, m: int) -> np.ndarray:
        return self._indicators[:, m]

    def counts(self) -> list[int]:
        return [int(count) for count in self._indicators.sum(axis=0)]


def compliance(data: PanelDataset, regime: Regime) -> ComplianceProfile:
    regime.check_against(data)
    matches = data.treatment == np.asarray(regime.trajectory)[None, :]
    return ComplianceProfile(np.logical_and.accumulate(matches, axis=1))


def compliance_counts(profile: ComplianceProfile) -> list[int]:
    return profile.counts()


@dataclass(frozen=True)
class BaselineReport:
    fraction_compliant: float
    violating_units: tuple[int, ...]
    violating_labels: tuple

    @property
    def satisfied(self) -> bool:
        return len(self.violating_units) == 0

    def to_json(self) -> dict:
        return {
            "fraction_compliant": self.fraction_compliant,
            "violating_units": [str(label) for label in self.violating_labels],
        }


def check_baseline_regime(data: PanelDataset, regime: Regime) -> BaselineReport:
    regime.check_against(data)
    at_baseline = data.treatment[:, 0] == regime[0]
    violating = tuple(int(i) for i in np.flatnonzero(~at_baseline))
    report = BaselineReport(
        fraction_compliant=float(np.mean(at_baseline)),
        violating_units=violating,
        violating_labels=tuple(data.unit_labels[i] for i in violating),
    )
    if not report.satisfied:
        _logger.warning(
            "%d of %d units deviate from the regime at t=0",
            len(violating), data.n_units
        )
    return report


__all__ = [
    "Regime", "ComplianceProfile", "BaselineReport",
    "compliance", "compliance_counts", "check_baseline_regime",
]
