import numpy as np
import pytest

from src.lib.const import VariableKind
from src.lib.errors import (
    ConfigError, DuplicateRecordError, PanelError, PanelParseError, ScheduleError,
    UnbalancedPanelError
)
from src.lib.id import ColumnId
from src.lib.panel import (
    AdjustmentSchedule, PanelDataset, PanelSchema, Regime, check_baseline_regime,
    compliance, compliance_counts, design_matrix, load_panel, save_panel
)

from .conftest import random_panel


HEADER = "unit,time,treatment,outcome,x\n"


def _write(tmp_path, text: str):
    path = tmp_path / "panel.csv"
    path.write_text(text, encoding="utf-8")
    return path


SCHEMA = PanelSchema(covariate_cols=("x",))


def test_load_orders_units_and_times(tmp_path):
    path = _write(tmp_path, HEADER + "\n".join([
        "b,2,0,5.0,0.5",
        "a,1,0,1.0,0.1",
        "b,1,0,4.0,0.4",
        "a,2,1,2.0,0.2",
    ]) + "\n")
    data = load_panel(path, SCHEMA)
    assert data.unit_labels == ("a", "b")
    assert data.time_labels == (1, 2)
    assert data.n_units == 2 and data.horizon == 1
    np.testing.assert_array_equal(data.treatment, [[0, 1], [0, 0]])
    np.testing.assert_array_equal(data.outcome, [[1.0, 2.0], [4.0, 5.0]])
    assert data.covariates[1, 1, 0] == 0.5


def test_load_reports_row_and_column_of_bad_value(tmp_path):
    path = _write(tmp_path, HEADER + "1,0,0,1.0,0.1\n1,1,0,oops,0.2\n")
    with pytest.raises(PanelParseError) as info:
        load_panel(path, SCHEMA)
    assert info.value.row == 3
    assert info.value.column == "outcome"
    assert info.value.exit_code == 1


def test_load_rejects_unbalanced_panel(tmp_path):
    path = _write(tmp_path, HEADER + "1,0,0,1,0\n1,1,0,1,0\n2,0,0,1,0\n")
    with pytest.raises(UnbalancedPanelError) as info:
        load_panel(path, SCHEMA)
    assert info.value.missing == [(2, 1)]


def test_load_rejects_duplicates(tmp_path):
    path = _write(tmp_path, HEADER + "1,0,0,1,0\n1,0,0,2,0\n")
    with pytest.raises(DuplicateRecordError) as info:
        load_panel(path, SCHEMA)
    assert info.value.duplicates == [(1, 0)]


def test_load_rejects_missing_column(tmp_path):
    path = _write(tmp_path, "unit,time,treatment,outcome\n1,0,0,1\n")
    with pytest.raises(PanelError, match="missing required columns"):
        load_panel(path, SCHEMA)


def test_undeclared_treatment_code():
    with pytest.raises(PanelError, match="outside the declared alphabet"):
        PanelDataset(
            np.array([[0, 2]]), np.zeros((1, 2, 0)), np.zeros((1, 2)), alphabet=(0, 1)
        )


def test_save_then_load_keeps_labels(tmp_path):
    data = random_panel(n=7, seed=11)
    path = tmp_path / "out.csv"
    save_panel(data, path)
    loaded = load_panel(path, PanelSchema(covariate_cols=data.covariate_names))
    assert loaded.unit_labels == data.unit_labels
    np.testing.assert_array_equal(loaded.outcome, data.outcome)
    np.testing.assert_array_equal(loaded.covariates, data.covariates)


def test_schema_from_mapping_rejects_string_covariates():
    with pytest.raises(ConfigError):
        PanelSchema.from_mapping({"covariate_cols": "x"})


def test_compliance_is_prefix_match():
    treatment = np.array([[0, 0, 0], [0, 1, 0], [1, 0, 0], [0, 0, 1]])
    data = PanelDataset(treatment, np.zeros((4, 3, 0)), np.zeros((4, 3)), alphabet=(0, 1))
    profile = compliance(data, Regime([0, 0, 0]))
    # unit 1 returns to 0 at t=2 but stays non-compliant
    np.testing.assert_array_equal(profile.indicators[1], [True, False, False])
    assert compliance_counts(profile) == [3, 2, 1]


def test_baseline_violations_are_reported():
    treatment = np.array([[0, 0], [1, 1]])
    data = PanelDataset(treatment, np.zeros((2, 2, 0)), np.zeros((2, 2)), unit_labels=["a", "b"])
    report = check_baseline_regime(data, Regime([0, 0]))
    assert not report.satisfied
    assert report.violating_labels == ("b",)
    assert report.fraction_compliant == 0.5


def test_regime_length_must_match():
    data = random_panel(n=5)
    with pytest.raises(ConfigError, match="length"):
        compliance(data, Regime([0, 0]))


def test_default_schedule_adds_lagged_outcomes():
    data = random_panel(n=5, n_times=4, p=1)
    schedule = AdjustmentSchedule.default(data)
    assert schedule.column_names(data, 1) == ["X0@0", "X0@1"]
    assert schedule.column_names(data, 3) == ["X0@0", "X0@1", "X0@2", "X0@3", "Y@0", "Y@1"]
    assert schedule.outcome_free(1)
    assert not schedule.outcome_free(2)


def test_schedule_rejects_recent_outcome():
    with pytest.raises(ScheduleError, match="Y-bar"):
        AdjustmentSchedule(2, {1: [], 2: [ColumnId(1, VariableKind.OUTCOME, 0)]})


def test_schedule_must_be_nested():
    x0 = ColumnId(0, VariableKind.COVARIATE, 0)
    with pytest.raises(ScheduleError, match="not a subset"):
        AdjustmentSchedule(2, {1: [x0], 2: []})


def test_schedule_from_json_places_columns_at_first_admissible_k():
    data = random_panel(n=5, n_times=4, p=2)
    schedule = AdjustmentSchedule.from_json(data, [
        {"time": 0, "name": "X1"},
        {"time": 0, "kind": "outcome"},
    ])
    assert schedule.column_names(data, 1) == ["X1@0"]
    assert schedule.column_names(data, 2) == ["X1@0", "Y@0"]


def test_design_matrix_follows_declared_order():
    data = random_panel(n=6, n_times=3, p=2)
    schedule = AdjustmentSchedule.covariates_only(data)
    design = design_matrix(data, schedule, 1)
    np.testing.assert_array_equal(design[:, 0], data.covariates[:, 0, 0])
    np.testing.assert_array_equal(design[:, 3], data.covariates[:, 1, 1])
    with pytest.raises(ScheduleError):
        design_matrix(data, schedule, 0)
