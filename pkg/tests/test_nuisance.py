import logging

import numpy as np
import pytest

from src.lib.const import LearnerKind
from src.lib.errors import MissingNuisanceError, NuisanceFitError, PositivityError
from src.lib.learners import LearnerSpec
from src.lib.multimap import MultiMap
from src.lib.nuisance import (
    Learners, PropensityFit, cumulative_g, fit_nuisance_set, fit_pooled_propensity,
    fit_propensities, fit_propensity, fit_q_chain, pooled_design, training_mask
)
from src.lib.panel import AdjustmentSchedule, PanelDataset, Regime, compliance
from src.lib.result import Err

from .conftest import compliant_panel, random_panel


MEAN = LearnerSpec(LearnerKind.MEAN)
LINEAR = LearnerSpec(LearnerKind.LINEAR)
LOGISTIC = LearnerSpec(LearnerKind.LOGISTIC)


def _panel(treatment, seed=0):
    treatment = np.asarray(treatment, dtype=np.int64)
    n, n_times = treatment.shape
    rng = np.random.default_rng(seed)
    return PanelDataset(
        treatment, rng.normal(size=(n, n_times, 1)), rng.normal(size=(n, n_times)),
        alphabet=(0, 1)
    )


def test_training_mask():
    np.testing.assert_array_equal(training_mask(5, [0, 2]), [True, False, True, False, False])
    assert training_mask(3, None).all()
    with pytest.raises(ValueError):
        training_mask(3, np.ones(4, dtype=bool))


def test_q_chain_fits_from_k_down_to_one():
    data = random_panel(n=200)
    regime = Regime.constant(0, 2)
    schedule = AdjustmentSchedule.covariates_only(data)
    chain = fit_q_chain(data, regime, schedule, 2, 2, LINEAR)
    profile = compliance(data, regime)
    assert chain.order == (2, 1)
    np.testing.assert_array_equal(chain.predictions(3), data.outcome[:, 2])
    assert chain.stratum_size(2) == int(profile.at(2).sum())
    assert chain.stratum_size(1) == int(profile.at(1).sum())
    assert len(chain.summary()) == 2


def test_q_stage_averages_over_compliant_units_only():
    data = random_panel(n=150, seed=2, deviate=0.5)
    regime = Regime.constant(0, 2)
    schedule = AdjustmentSchedule.covariates_only(data)
    profile = compliance(data, regime)
    chain = fit_q_chain(data, regime, schedule, 1, 2, MEAN)
    stage_two = np.mean(data.outcome[profile.at(2), 1])
    np.testing.assert_allclose(chain.predictions(2), stage_two)
    # the next stage regresses a constant, so it stays constant
    np.testing.assert_allclose(chain.predictions(1), stage_two)


def test_q_chain_respects_training_units():
    data = random_panel(n=100, seed=4)
    regime = Regime.constant(0, 2)
    schedule = AdjustmentSchedule.covariates_only(data)
    training = np.arange(50)
    chain = fit_q_chain(data, regime, schedule, 1, 1, MEAN, training=training)
    rows = compliance(data, regime).at(1)[:50]
    np.testing.assert_allclose(chain.predictions(1), np.mean(data.outcome[:50, 1][rows]))
    assert chain.stratum_size(1) == int(rows.sum())


def test_empty_stratum_raises_positivity_error():
    data = _panel([[0, 1, 1]] * 6)
    schedule = AdjustmentSchedule.covariates_only(data)
    with pytest.raises(PositivityError) as info:
        fit_q_chain(data, Regime([0, 0, 0]), schedule, 1, 1, LINEAR)
    assert info.value.m == 1


def test_fully_compliant_stratum_gives_constant_propensity():
    data = compliant_panel(n=40)
    schedule = AdjustmentSchedule.covariates_only(data)
    fit = fit_propensity(data, Regime.constant(0, 3), schedule, 2, LOGISTIC)
    assert fit.degenerate
    assert fit.summary()["flags"] == ["degenerate"]
    np.testing.assert_array_equal(fit.evaluate(data, schedule), np.ones(40))


def test_nobody_following_gives_zero_propensity(caplog):
    data = _panel([[0, 1, 1]] * 5)
    schedule = AdjustmentSchedule.covariates_only(data)
    regime = Regime([0, 0, 0])
    with caplog.at_level(logging.WARNING):
        fit = fit_propensity(data, regime, schedule, 1, LOGISTIC)
    assert fit.degenerate
    assert "propensity is 0" in caplog.text
    g = cumulative_g({1: fit}, data, schedule, 1, epsilon=0.05)
    np.testing.assert_allclose(g.at(1), 0.05)
    assert g.truncation_counts() == [5]


def test_propensity_is_not_modelled_at_time_zero():
    data = compliant_panel(n=10)
    with pytest.raises(ValueError):
        fit_propensity(
            data, Regime.constant(0, 3), AdjustmentSchedule.covariates_only(data), 0, LOGISTIC
        )


def test_cumulative_g_multiplies_and_truncates_factors():
    data = compliant_panel(n=8, n_times=3)
    schedule = AdjustmentSchedule.covariates_only(data)
    fits = {1: PropensityFit(1, 8, constant=0.5), 2: PropensityFit(2, 8, constant=0.001)}
    g = cumulative_g(fits, data, schedule, 2, epsilon=0.01)
    np.testing.assert_allclose(g.at(0), 1.0)
    np.testing.assert_allclose(g.at(1), 0.5)
    np.testing.assert_allclose(g.at(2), 0.005)
    assert g.truncation_counts() == [0, 8]
    assert g.total_truncated == 8


def test_cumulative_g_checks_inputs():
    data = compliant_panel(n=8, n_times=3)
    schedule = AdjustmentSchedule.covariates_only(data)
    fits = {1: PropensityFit(1, 8, constant=0.5)}
    with pytest.raises(ValueError):
        cumulative_g(fits, data, schedule, 1, epsilon=0.5)
    with pytest.raises(MissingNuisanceError):
        cumulative_g(fits, data, schedule, 2)


def test_propensity_fit_needs_exactly_one_source():
    with pytest.raises(ValueError):
        PropensityFit(1, 3)
    with pytest.raises(ValueError):
        PropensityFit(1, 3, constant=1.0, pooled=object())


def test_pooled_design_zeroes_columns_not_yet_selected():
    data = random_panel(n=10, n_times=3, p=1)
    schedule = AdjustmentSchedule.covariates_only(data)
    features, names = pooled_design(data, schedule, 1, 2)
    assert names == ["time", "X0@0", "X0@1", "X0@2"]
    np.testing.assert_array_equal(features[:, 0], 1.0)
    np.testing.assert_array_equal(features[:, 2], data.covariates[:, 1, 0])
    np.testing.assert_array_equal(features[:, 3], 0.0)


def test_pooled_design_window_uses_lags():
    data = random_panel(n=10, n_times=3, p=1)
    schedule = AdjustmentSchedule.covariates_only(data)
    features, names = pooled_design(data, schedule, 1, 2, window=3)
    assert names == ["time", "X0@lag0", "X0@lag1", "X0@lag2"]
    np.testing.assert_array_equal(features[:, 1], data.covariates[:, 1, 0])
    np.testing.assert_array_equal(features[:, 2], data.covariates[:, 0, 0])
    np.testing.assert_array_equal(features[:, 3], 0.0)


def test_pooled_propensity_shares_one_model():
    data = random_panel(n=300, n_times=3, seed=8, deviate=0.4)
    regime = Regime.constant(0, 2)
    schedule = AdjustmentSchedule.covariates_only(data)
    fits = fit_pooled_propensity(data, regime, schedule, 2, LOGISTIC, window=1)
    assert sorted(fits) == [1, 2]
    assert fits[1].model is fits[2].model
    assert fits[1].summary()["kind"] == "pooled"
    for m in (1, 2):
        values = fits[m].evaluate(data, schedule)
        assert np.all((values > 0) & (values < 1))
    with pytest.raises(ValueError):
        fit_pooled_propensity(data, regime, schedule, 2, LOGISTIC, window=0)


def test_fit_propensities_records_failures_when_asked():
    # nobody follows the regime through t=1, so the m=2 stratum is empty
    data = _panel([[0, 1, 1], [0, 1, 0], [0, 1, 1]])
    regime = Regime([0, 0, 0])
    schedule = AdjustmentSchedule.covariates_only(data)
    with pytest.raises(PositivityError):
        fit_propensities(data, regime, schedule, 2, LOGISTIC)
    failures: MultiMap[str, Err] = MultiMap()
    fits = fit_propensities(data, regime, schedule, 2, LOGISTIC, failures=failures)
    assert sorted(fits) == [1]
    assert list(failures.keys()) == ["(propensity m=2)"]
    assert failures["(propensity m=2)"][0].kind == "PositivityError"


def test_nuisance_set_reports_every_failed_chain():
    treatment = [[0, 0, 1]] * 10 + [[0, 1, 1]] * 10
    data = _panel(treatment, seed=1)
    schedule = AdjustmentSchedule.covariates_only(data)
    with pytest.raises(NuisanceFitError) as info:
        fit_nuisance_set(data, Regime([0, 0, 0]), schedule, 2, Learners(LINEAR, LOGISTIC))
    coordinates = sorted(coordinate for coordinate, _ in info.value.failures)
    assert coordinates == ["(j=1,k=2)", "(j=2,k=2)"]
    assert all("empty compliant stratum" in message for _, message in info.value.failures)
    assert info.value.only(PositivityError)


def test_nuisance_set_covers_every_chain(linear_learners):
    data = random_panel(n=250, seed=6)
    regime = Regime.constant(0, 2)
    schedule = AdjustmentSchedule.covariates_only(data)
    nuisances = fit_nuisance_set(data, regime, schedule, 2, linear_learners)
    assert nuisances.horizon == 2
    assert sorted((c.j, c.k) for c in nuisances.chains()) == [(0, 1), (1, 1), (1, 2), (2, 2)]
    assert sorted(nuisances.propensities()) == [1, 2]
    assert len(nuisances.q_models()) == 6
    summary = nuisances.summary()
    assert summary["provenance"] == "full-sample"
    assert summary["compliant_counts"] == compliance(data, regime).counts()
    with pytest.raises(MissingNuisanceError):
        nuisances.chain(3, 3)


def test_nuisance_set_is_thread_count_invariant(linear_learners):
    data = random_panel(n=200, seed=7)
    regime = Regime.constant(0, 2)
    schedule = AdjustmentSchedule.covariates_only(data)
    serial = fit_nuisance_set(data, regime, schedule, 2, linear_learners, threads=1)
    threaded = fit_nuisance_set(data, regime, schedule, 2, linear_learners, threads=2)
    for j, k in [(0, 1), (1, 1), (1, 2), (2, 2)]:
        np.testing.assert_array_equal(
            serial.chain(j, k).predictions(1), threaded.chain(j, k).predictions(1)
        )
    np.testing.assert_array_equal(serial.g.values, threaded.g.values)


def test_nuisance_set_rejects_horizon_past_panel(linear_learners):
    data = random_panel(n=50)
    with pytest.raises(ValueError):
        fit_nuisance_set(
            data, Regime.constant(0, 2), AdjustmentSchedule.covariates_only(data), 3,
            linear_learners
        )
