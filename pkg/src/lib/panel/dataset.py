from collections.abc import Iterable, Sequence
from typing import Optional

import numpy as np

from ..data_view import frozen
from ..errors import PanelError


class PanelDataset:
    """Balanced unit x time panel of treatment codes, covariates and outcome.

    Arrays are indexed by dense unit index i in 0..n-1 and time t in 0..tau.
    Covariates have shape (n, tau+1, p). Original unit and time labels are
    kept as metadata only. Instances are immutable.
    """

    _treatment: np.ndarray
    _covariates: np.ndarray
    _outcome: np.ndarray
    _covariate_names: tuple[str, ...]
    _alphabet: frozenset[int]
    _unit_labels: tuple
    _time_labels: tuple

    def __init__(
            self,
            treatment: np.ndarray,
            covariates: np.ndarray,
            outcome: np.ndarray,
            covariate_names: Optional[Sequence[str]] = None,
            alphabet: Optional[Iterable[int]] = None,
            unit_labels: Optional[Sequence] = None,
            time_labels: Optional[Sequence] = None,
    ):
        treatment = np.asarray(treatment)
        outcome = np.asarray(outcome, dtype=float)
        covariates = np.asarray(covariates, dtype=float)

        if outcome.ndim != 2 or outcome.shape[0] < 1 or outcome.shape[1] < 1:
            raise PanelError(f"outcome must be a non-empty (n, T) array, got {outcome.shape}")
        n, n_times = outcome.shape
        if treatment.shape != (n, n_times):
            raise PanelError(
                f"treatment shape {treatment.shape} does not match outcome {outcome.shape}"
            )
        if covariates.ndim == 2 and covariates.shape == (n, n_times) and covariates.size == 0:
            covariates = covariates.reshape(n, n_times, 0)
        if covariates.ndim != 3 or covariates.shape[:2] != (n, n_times):
            raise PanelError(
                f"covariates must have shape (n, T, p) = ({n}, {n_times}, p), "
                f"got {covariates.shape}"
            )
        if not np.all(np.isfinite(outcome)):
            raise PanelError("outcome contains missing or non-finite values")
        if not np.all(np.isfinite(covariates)):
            raise PanelError("covariates contain missing or non-finite values")

        codes = np.asarray(treatment, dtype=float)
        if not np.all(np.isfinite(codes)) or np.any(codes != np.round(codes)):
            raise PanelError("treatment codes must be integers")
        treatment = codes.astype(np.int64)

        observed = frozenset(int(code) for code in np.unique(treatment))
        declared = observed if alphabet is None else frozenset(int(a) for a in alphabet)
        undeclared = observed - declared
        if undeclared:
            raise PanelError(
                f"treatment codes {sorted(undeclared)} outside the declared alphabet "
                f"{sorted(declared)}"
            )

        p = covariates.shape[2]
        if covariate_names is None:
            covariate_names = [f"X{i}" for i in range(p)]
        if len(covariate_names) != p or len(set(covariate_names)) != p:
            raise PanelError(f"need {p} distinct covariate names, got {list(covariate_names)}")

        unit_labels = tuple(range(n)) if unit_labels is None else tuple(unit_labels)
        time_labels = tuple(range(n_times)) if time_labels is None else tuple(time_labels)
        if len(unit_labels) != n or len(time_labels) != n_times:
            raise PanelError("label metadata does not match the panel dimensions")

        self._treatment = frozen(treatment)
        self._covariates = frozen(covariates)
        self._outcome = frozen(outcome)
        self._covariate_names = tuple(str(name) for name in covariate_names)
        self._alphabet = declared
        self._unit_labels = unit_labels
        self._time_labels = time_labels

    @property
    def n_units(self) -> int:
        return self._outcome.shape[0]

    @property
    def horizon(self) -> int:
        return self._outcome.shape[1] - 1

    @property
    def n_times(self) -> int:
        return self._outcome.shape[1]

    @property
    def n_covariates(self) -> int:
        return self._covariates.shape[2]

    @property
    def treatment(self) -> np.ndarray:
        return self._treatment

    @property
    def outcome(self) -> np.ndarray:
        return self._outcome

    @property
    def covariates(self) -> np.ndarray:
        return self._covariates

    def covariates_at(self, t: int) -> np.ndarray:
        return self._covariates[:, t, :]

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return self._covariate_names

    @property
    def alphabet(self) -> frozenset[int]:
        return self._alphabet

    @property
    def unit_labels(self) -> tuple:
        return self._unit_labels

    @property
    def time_labels(self) -> tuple:
        return self._time_labels

    def with_outcome(self, outcome: np.ndarray) -> "PanelDataset":
        return PanelDataset(
            self._treatment, self._covariates, outcome,
            self._covariate_names, self._alphabet,
            self._unit_labels, self._time_labels
        )

    def __str__(self) -> str:
        return (
            f"PanelDataset(n={self.n_units}, tau={self.horizon}, "
            f"p={self.n_covariates}, alphabet={sorted(self._alphabet)})"
        )


__all__ = ["PanelDataset"]
