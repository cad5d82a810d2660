from typing import Optional

import numpy as np
import pytest

from src.lib.const import LearnerKind
from src.lib.learners import LearnerSpec
from src.lib.nuisance import Learners
from src.lib.panel import PanelDataset, Regime


def random_panel(
        n: int = 200,
        n_times: int = 3,
        p: int = 2,
        seed: int = 0,
        deviate: float = 0.2,
        regime: Optional[Regime] = None
) -> PanelDataset:
    """Continuous covariates; units leave the regime with a covariate-driven hazard."""
    rng = np.random.default_rng(seed)
    regime = Regime.constant(0, n_times - 1) if regime is None else regime
    covariates = rng.normal(size=(n, n_times, p))
    treatment = np.empty((n, n_times), dtype=np.int64)
    treatment[:, 0] = regime[0]
    following = np.ones(n, dtype=bool)
    for t in range(1, n_times):
        hazard = deviate / (1.0 + np.exp(-covariates[:, t, 0]))
        following &= rng.random(n) >= hazard
        treatment[:, t] = np.where(following, regime[t], 1 - regime[t])
    u = rng.normal(size=n)
    outcome = (
        u[:, None] + covariates.sum(axis=2) + 0.5 * treatment
        + 0.1 * rng.normal(size=(n, n_times))
    )
    return PanelDataset(treatment, covariates, outcome, alphabet=(0, 1))


def binary_panel(n: int = 500, seed: int = 3, deviate: float = 0.25) -> PanelDataset:
    """One binary covariate over three times, so W-bar_2 has eight strata."""
    rng = np.random.default_rng(seed)
    covariates = (rng.random((n, 3, 1)) < 0.5).astype(float)
    treatment = np.zeros((n, 3), dtype=np.int64)
    for t in (1, 2):
        hazard = deviate * (0.5 + covariates[:, t, 0])
        treatment[:, t] = np.maximum(treatment[:, t - 1], rng.random(n) < hazard)
    outcome = (
        rng.normal(size=(n, 1)) + covariates[:, :, 0] * np.array([1.0, 2.0, -1.0])
        + treatment + 0.2 * rng.normal(size=(n, 3))
    )
    return PanelDataset(treatment, covariates, outcome, alphabet=(0, 1))


def compliant_panel(n: int = 100, n_times: int = 4, seed: int = 5) -> PanelDataset:
    rng = np.random.default_rng(seed)
    return PanelDataset(
        np.zeros((n, n_times), dtype=np.int64),
        rng.normal(size=(n, n_times, 2)),
        rng.normal(size=(n, n_times)),
        alphabet=(0, 1)
    )


@pytest.fixture
def linear_learners() -> Learners:
    return Learners(LearnerSpec(LearnerKind.LINEAR), LearnerSpec(LearnerKind.LOGISTIC))


@pytest.fixture
def saturated_learners() -> Learners:
    return Learners(LearnerSpec(LearnerKind.SATURATED), LearnerSpec(LearnerKind.SATURATED))
