from dataclasses import replace

import numpy as np
import pytest

from src.lib.errors import ConfigError
from src.lib.panel import Regime, check_baseline_regime, compliance
from src.lib.simulate import (
    COVARIATE_NAMES, MIN_ORACLE_DRAWS, NOISE_SD, STATE_COVARIATES, STATE_LABELS,
    DGPConfig, check_parallel_trends, counterfactual_outcomes, draw_coefficients,
    generate_panel, state_panel_example, truth_oracle
)


TABLES = ("gamma1", "gamma2", "gamma3", "alpha", "beta")


def _same_tables(first: DGPConfig, second: DGPConfig) -> bool:
    return all(np.array_equal(getattr(first, name), getattr(second, name)) for name in TABLES)


def test_coefficients_follow_documented_draw_order():
    config = draw_coefficients(1)
    rng = np.random.default_rng(1)
    for name, width in zip(TABLES, (3, 4, 5, 5, 4)):
        np.testing.assert_array_equal(getattr(config, name), rng.standard_normal((3, width)))
    assert _same_tables(config, draw_coefficients(1))
    assert not _same_tables(config, draw_coefficients(2))


def test_config_validation():
    config = draw_coefficients(1)
    with pytest.raises(ConfigError, match="gamma2"):
        replace(config, gamma2=np.zeros((3, 3)))
    with pytest.raises(ConfigError, match="number of times"):
        replace(config, beta=np.zeros((2, 4)))
    with pytest.raises(ConfigError):
        replace(config, noise_sd=0.0)


def test_config_json_keeps_tables():
    config = replace(draw_coefficients(3), u_in_w=0.5)
    restored = DGPConfig.from_json(config.to_json())
    assert _same_tables(config, restored)
    assert restored.u_in_w == 0.5
    with pytest.raises(ConfigError, match="alpha"):
        DGPConfig.from_json({name: [] for name in TABLES if name != "alpha"})


def test_time_constant_beta():
    config = draw_coefficients(4).with_time_constant_beta()
    for t in range(3):
        np.testing.assert_array_equal(config.beta[t], config.beta[0])


def test_generated_panel_shape_and_treatment_rules():
    config = draw_coefficients(1, n_units=3000)
    data = generate_panel(config, seed=5)
    assert data.covariates.shape == (3000, 3, 3)
    assert data.covariate_names == COVARIATE_NAMES
    np.testing.assert_array_equal(data.treatment[:, 0], 0)
    treated_before = data.treatment[:, :-1] == 1
    assert np.all(data.treatment[:, 1:][treated_before] == 0)
    assert check_baseline_regime(data, Regime.constant(0, 2)).fraction_compliant == 1.0


def test_generation_is_deterministic():
    config = draw_coefficients(2, n_units=500)
    first = generate_panel(config, seed=9)
    second = generate_panel(config, seed=9)
    np.testing.assert_array_equal(first.outcome, second.outcome)
    np.testing.assert_array_equal(first.treatment, second.treatment)
    assert not np.array_equal(first.outcome, generate_panel(config, seed=10).outcome)


def test_baseline_treatment_is_random_without_forcing():
    config = draw_coefficients(1, n_units=2000, force_baseline_regime=False)
    data = generate_panel(config, seed=1)
    assert data.treatment[:, 0].sum() > 0


def test_first_covariate_mean_matches_its_equation():
    config = draw_coefficients(6, n_units=200_000)
    data = generate_panel(config, seed=2)
    mc_se = NOISE_SD / np.sqrt(config.n_units)
    assert abs(np.mean(data.covariates[:, 0, 0]) - config.gamma1[0, 0]) < 4 * mc_se


def test_counterfactual_draw_shares_noise_with_forced_panel():
    config = draw_coefficients(1, n_units=400)
    forced = generate_panel(config, seed=3, forced=Regime.constant(0, 2))
    np.testing.assert_array_equal(
        counterfactual_outcomes(config, 400, seed=3), forced.outcome
    )
    factual = generate_panel(config, seed=3)
    # untreated histories coincide with their counterfactual path
    never = np.all(factual.treatment == 0, axis=1)
    assert np.any(never)
    np.testing.assert_array_equal(factual.outcome[never], forced.outcome[never])


def test_oracle_averages_counterfactual_outcomes():
    config = draw_coefficients(1)
    truth = truth_oracle(config, MIN_ORACLE_DRAWS, seed=4)
    outcomes = counterfactual_outcomes(config, MIN_ORACLE_DRAWS, seed=4)
    np.testing.assert_allclose(truth.mu, outcomes.mean(axis=0), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(
        truth.mc_se, outcomes.std(axis=0) / np.sqrt(MIN_ORACLE_DRAWS), rtol=1e-6
    )
    assert truth.regime == (0, 0, 0)


def test_oracle_requires_enough_draws():
    with pytest.raises(ConfigError, match="n_mc"):
        truth_oracle(draw_coefficients(1), MIN_ORACLE_DRAWS - 1, seed=0)


def test_oracle_is_thread_count_invariant():
    config = draw_coefficients(1)
    serial = truth_oracle(config, 2 * MIN_ORACLE_DRAWS, seed=8, threads=1)
    threaded = truth_oracle(config, 2 * MIN_ORACLE_DRAWS, seed=8, threads=2)
    assert serial == threaded


def test_oracle_is_zero_without_outcome_signal():
    config = replace(draw_coefficients(1), beta=np.zeros((3, 4)))
    truth = truth_oracle(config, MIN_ORACLE_DRAWS, seed=2)
    for mu, se in zip(truth.mu, truth.mc_se):
        assert abs(mu) < 4 * se


def test_parallel_trends_report_covers_later_times():
    checks = check_parallel_trends(draw_coefficients(1), MIN_ORACLE_DRAWS, seed=3)
    assert [check.t for check in checks] == [1, 2]
    assert all(check.mc_se > 0 for check in checks)


@pytest.mark.bench
def test_oracle_agrees_across_seeds():
    config = draw_coefficients(1)
    first = truth_oracle(config, 1_000_000, seed=1, threads=4)
    second = truth_oracle(config, 1_000_000, seed=2, threads=4)
    for t in range(3):
        combined = np.hypot(first.mc_se[t], second.mc_se[t])
        assert abs(first.mu[t] - second.mu[t]) < 4 * combined


@pytest.mark.bench
def test_parallel_trends_hold_under_default_model():
    for check in check_parallel_trends(draw_coefficients(1), 1_000_000, seed=5, threads=4):
        assert abs(check.z) < 4


@pytest.mark.bench
def test_parallel_trends_break_when_confounder_enters_covariates():
    config = replace(draw_coefficients(1), u_in_w=1.0)
    checks = check_parallel_trends(config, 1_000_000, seed=5, threads=4)
    assert max(abs(check.z) for check in checks) > 10


@pytest.mark.bench
def test_parallel_trends_survive_larger_confounder():
    config = replace(draw_coefficients(1).with_time_constant_beta(), u_scale=5.0)
    for check in check_parallel_trends(config, 1_000_000, seed=6, threads=4):
        assert abs(check.z) < 4


def test_state_panel_example():
    data, regime = state_panel_example()
    assert (data.n_units, data.n_times, data.n_covariates) == (51, 7, 12)
    assert data.unit_labels == STATE_LABELS
    assert data.covariate_names == STATE_COVARIATES
    assert data.time_labels[0] == 2013
    counts = compliance(data, regime).counts()
    assert counts[0] == 51
    assert all(later <= earlier for earlier, later in zip(counts, counts[1:]))
    assert counts[-1] < 51
    again, _ = state_panel_example()
    np.testing.assert_array_equal(data.outcome, again.outcome)
