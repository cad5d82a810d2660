import numpy as np
import pytest

from scipy.special import expit

from src.lib.const import LearnerKind, PredictionMode
from src.lib.errors import DimensionMismatchError, LearnerError, SpecError
from src.lib.learners import (
    FeatureMap, LearnerSpec, cv_stack_weights, fit, simplex_weights
)
from src.lib.learners.linear import coordinate_descent, fit_elastic_net, fit_ols
from src.lib.learners.logistic import fit_logistic
from src.lib.learners.tree import fit_tree


def _regression(n=300, p=4, seed=0):
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n, p))
    target = 1.5 + features @ np.arange(1.0, p + 1) + 0.3 * rng.normal(size=n)
    return (features, target)


def _normal_equations(features, target):
    design = np.column_stack([np.ones(len(target)), features])
    return np.linalg.solve(design.T @ design, design.T @ target)


def test_ols_matches_normal_equations():
    features, target = _regression()
    predictor, flags = fit_ols(features, target, None)
    expected = _normal_equations(features, target)
    assert flags == []
    assert predictor.intercept == pytest.approx(expected[0], abs=1e-8)
    np.testing.assert_allclose(predictor.coef, expected[1:], atol=1e-8)


def test_ols_flags_collinear_design():
    features, target = _regression(p=2)
    features = np.column_stack([features, features[:, 0]])
    _, flags = fit_ols(features, target, None)
    assert "rank_deficient" in flags


def test_elastic_net_at_zero_penalty_is_ols():
    features, target = _regression(seed=1)
    predictor, flags = fit_elastic_net(features, target, None, 0.0, 0.5, 10, 0)
    expected = _normal_equations(features, target)
    assert "cd_not_converged" not in flags
    assert predictor.intercept == pytest.approx(expected[0], abs=1e-6)
    np.testing.assert_allclose(predictor.coef, expected[1:], atol=1e-6)


def test_lasso_penalty_zeroes_coefficients():
    gram = np.eye(3)
    cov = np.array([0.5, -0.05, 0.2])
    beta, converged = coordinate_descent(gram, cov, 0.1, 1.0, np.zeros(3))
    assert converged
    np.testing.assert_allclose(beta, [0.4, 0.0, 0.1], atol=1e-12)


@pytest.mark.parametrize("penalty, mixing", [(0.05, 0.5), (5.0, 0.5), (0.3, 1.0)])
def test_elastic_net_satisfies_subgradient_conditions(penalty, mixing):
    features, target = _regression(n=200, p=5, seed=3)
    predictor, flags = fit_elastic_net(features, target, None, penalty, mixing, 10, 0)
    assert "cd_not_converged" not in flags
    w = np.full(len(target), 1.0 / len(target))
    mean = w @ features
    scale = np.sqrt(w @ (features - mean) ** 2)
    standardized = (features - mean) / scale
    beta = predictor.coef * scale
    residual = target - predictor.predict(features)
    gradient = standardized.T @ (w * residual) - penalty * (1.0 - mixing) * beta
    active = beta != 0.0
    np.testing.assert_allclose(
        gradient[active], penalty * mixing * np.sign(beta[active]), atol=1e-6
    )
    assert np.all(np.abs(gradient[~active]) <= penalty * mixing + 1e-6)
    assert abs(float(w @ residual)) <= 1e-6
    if penalty == 5.0:
        assert np.any(~active)


def test_cv_penalty_is_recorded():
    features, target = _regression(n=120, seed=2)
    model = fit(LearnerSpec(LearnerKind.ELASTIC_NET, folds=5), features, target, seed=4)
    assert any(flag.startswith("lambda:") for flag in model.flags)


def _grid_logistic(features, target, centre, radius, steps):
    # exhaustive log-likelihood search over (intercept, slope)
    best, best_value = None, -np.inf
    for a in np.linspace(centre[0] - radius, centre[0] + radius, steps):
        for b in np.linspace(centre[1] - radius, centre[1] + radius, steps):
            eta = a + b * features[:, 0]
            value = float(np.sum(target * eta - np.logaddexp(0.0, eta)))
            if value > best_value:
                best, best_value = (a, b), value
    return np.array(best)


def test_irls_matches_grid_search():
    rng = np.random.default_rng(7)
    features = rng.normal(size=(400, 1))
    target = (rng.random(400) < expit(-0.3 + 1.2 * features[:, 0])).astype(float)
    predictor, flags = fit_logistic(features, target, None)
    assert flags == []
    fitted = np.array([predictor.intercept, predictor.coef[0]])
    coarse = _grid_logistic(features, target, fitted, 0.5, 101)
    fine = _grid_logistic(features, target, coarse, 0.005, 101)
    np.testing.assert_allclose(fitted, fine, atol=1e-3)


def test_irls_score_vanishes_at_fitted_coefficients():
    rng = np.random.default_rng(11)
    features = rng.normal(size=(500, 3))
    eta = 0.4 + features @ np.array([0.8, -0.5, 0.3])
    target = (rng.random(500) < expit(eta)).astype(float)
    predictor, flags = fit_logistic(features, target, None)
    assert flags == []
    design = np.column_stack([np.ones(500), features])
    score = design.T @ (target - predictor.predict(features)) / 500
    assert np.max(np.abs(score)) <= 1e-8


def test_separated_logistic_falls_back_to_ridge():
    features = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    target = np.array([0.0, 0.0, 1.0, 1.0])
    predictor, flags = fit_logistic(features, target, None)
    assert flags == ["irls_ridge_fallback"]
    assert np.all(np.isfinite(predictor.coef))
    predictions = predictor.predict(features)
    assert predictions[0] < 0.5 < predictions[-1]


def test_probability_mode_clips_linear_predictions():
    features = np.linspace(-3, 3, 50)[:, None]
    target = (features[:, 0] > 0).astype(float)
    model = fit(LearnerSpec(LearnerKind.LINEAR), features, target, mode=PredictionMode.PROBABILITY)
    predictions = model.predict(np.array([[-100.0], [100.0]]))
    np.testing.assert_array_equal(predictions, [0.0, 1.0])


def test_probability_targets_must_be_in_unit_interval():
    with pytest.raises(LearnerError):
        fit(LearnerSpec(LearnerKind.LOGISTIC), np.zeros((3, 1)), np.array([0.0, 2.0, 1.0]),
            mode=PredictionMode.PROBABILITY)


def test_predict_checks_width():
    features, target = _regression(p=3)
    model = fit(LearnerSpec(LearnerKind.LINEAR), features, target)
    with pytest.raises(DimensionMismatchError) as info:
        model.predict(features[:, :2])
    assert (info.value.expected, info.value.actual) == (3, 2)


def test_tree_splits_on_step():
    features = np.linspace(0, 1, 40)[:, None]
    target = np.where(features[:, 0] > 0.5, 3.0, -1.0)
    tree = fit_tree(features, target, None, max_depth=1, min_leaf=5)
    np.testing.assert_allclose(tree.predict(np.array([[0.1], [0.9]])), [-1.0, 3.0])


def test_saturated_learner_uses_stratum_means_and_counts_unseen():
    features = np.array([[0.0], [0.0], [1.0], [1.0]])
    target = np.array([1.0, 3.0, 10.0, 20.0])
    model = fit(LearnerSpec(LearnerKind.SATURATED), features, target)
    np.testing.assert_allclose(model.predict(features), [2.0, 2.0, 15.0, 15.0])
    unseen = np.array([[2.0], [0.0]])
    assert model.unseen_count(unseen) == 1
    assert model.predict(unseen)[0] == pytest.approx(8.5)


def test_custom_feature_map_pairs_same_time_columns():
    names = ["W1@0", "W2@0", "W3@0", "W1@1", "W2@1", "W3@1"]
    features = np.arange(12.0).reshape(2, 6)
    mapped, mapped_names = FeatureMap.custom(["sin(W1)", "W2*W3"]).apply(features, names)
    assert mapped_names == names + ["sin(W1@0)", "sin(W1@1)", "W2@0*W3@0", "W2@1*W3@1"]
    np.testing.assert_allclose(mapped[:, 6], np.sin(features[:, 0]))
    np.testing.assert_allclose(mapped[:, 9], features[:, 4] * features[:, 5])


def test_polynomial_feature_map_names():
    _, names = FeatureMap.polynomial(2).apply(np.ones((1, 2)), ["a", "b"])
    assert names == ["a", "b", "a^2", "b^2", "a*b"]


def test_spec_json_accepts_bare_kind():
    spec = LearnerSpec.from_json("ridge")
    assert spec.kind == LearnerKind.RIDGE
    restored = LearnerSpec.from_json({
        "kind": "stack", "folds": 3,
        "members": ["mean", {"kind": "linear", "feature_map": {"kind": "custom", "transforms": ["cos(W2)"]}}],
    })
    assert restored.members[1].feature_map.transforms[0].columns == ("W2",)
    assert LearnerSpec.from_json(restored.to_json()) == restored


def test_spec_validation():
    with pytest.raises(SpecError):
        LearnerSpec(LearnerKind.RIDGE, penalty=-1.0)
    with pytest.raises(SpecError):
        LearnerSpec(LearnerKind.STACK)
    with pytest.raises(SpecError):
        LearnerSpec.from_json({"kind": "boosting"})


def test_simplex_weights_sum_to_one():
    rng = np.random.default_rng(3)
    target = rng.normal(size=200)
    predictions = np.column_stack([
        target + 0.5 * rng.normal(size=200),
        target + 0.5 * rng.normal(size=200),
        np.zeros(200),
    ])
    weights = simplex_weights(predictions, target, np.full(200, 1 / 200))
    assert np.all(weights >= 0)
    assert abs(weights.sum() - 1.0) <= 1e-12
    assert weights[0] > 0.2 and weights[1] > 0.2


def test_stack_risk_not_above_best_member():
    features, target = _regression(n=200, p=2, seed=9)
    members = [
        LearnerSpec(LearnerKind.MEAN),
        LearnerSpec(LearnerKind.LINEAR),
        LearnerSpec(LearnerKind.TREE, max_depth=2),
    ]
    stacked = cv_stack_weights(members, features, target, 5, seed=1)
    assert abs(stacked.weights.sum() - 1.0) <= 1e-12
    assert stacked.stack_risk <= np.nanmin(stacked.cv_risk) + 1e-12
    assert stacked.dropped == ()


def test_stack_drops_failing_member(caplog):
    features, target = _regression(n=90, p=2, seed=6)
    # logistic members reject real-valued targets on every fold
    members = (LearnerSpec(LearnerKind.LOGISTIC), LearnerSpec(LearnerKind.LINEAR))
    model = fit(LearnerSpec(LearnerKind.STACK, folds=3, members=members), features, target, seed=2)
    provenance = model.provenance()
    assert provenance["members"] == ["linear"]
    assert provenance["weights"] == [1.0]
    assert "dropped:logistic" in model.flags
    assert "dropping stack member 0" in caplog.text


def test_stack_fails_when_every_member_fails():
    features, target = _regression(n=30, p=2)
    spec = LearnerSpec(LearnerKind.STACK, folds=3, members=(LearnerSpec(LearnerKind.LOGISTIC),))
    with pytest.raises(LearnerError, match="every stack member failed"):
        fit(spec, features, target)


def test_stack_in_probability_mode_stays_in_unit_interval():
    rng = np.random.default_rng(4)
    features = rng.normal(size=(60, 2))
    target = (features[:, 0] + 0.5 * rng.normal(size=60) > 0).astype(float)
    members = (LearnerSpec(LearnerKind.MEAN), LearnerSpec(LearnerKind.LINEAR))
    model = fit(
        LearnerSpec(LearnerKind.STACK, folds=3, members=members),
        features, target, seed=2, mode=PredictionMode.PROBABILITY
    )
    assert abs(sum(model.provenance()["weights"]) - 1.0) <= 1e-12
    predictions = model.predict(features)
    assert np.all((predictions >= 0) & (predictions <= 1))


def test_fit_is_deterministic_given_seed():
    features, target = _regression(n=100, seed=5)
    spec = LearnerSpec(LearnerKind.BAGGED_TREES, n_bags=5)
    first = fit(spec, features, target, seed=3).predict(features)
    second = fit(spec, features, target, seed=3).predict(features)
    np.testing.assert_array_equal(first, second)
