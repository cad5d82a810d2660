import json

import numpy as np
import pandas as pd
import pytest

from src.did_ism.__main__ import main
from src.did_ism.get_args import get_args
from src.lib.errors import ConfigError


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("simulated")
    code = main(["simulate", "--n", "400", "--n-mc", "100000", "--seed", "3", "-q", "-o", str(out)])
    assert code == 0
    return out


def _write_panel(path, rows):
    lines = ["unit,time,treatment,outcome,x"] + [",".join(map(str, row)) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_simulate_writes_panel_truth_and_config(simulated):
    panel = pd.read_csv(simulated / "panel.csv")
    assert list(panel.columns) == ["unit", "time", "treatment", "outcome", "W1", "W2", "W3"]
    assert len(panel) == 400 * 3
    truth = json.loads((simulated / "truth.json").read_text())
    assert truth["truth"]["n_mc"] == 100000
    assert len(truth["truth"]["mu"]) == 3
    assert [check["t"] for check in truth["parallel_trends"]] == [1, 2]
    config = json.loads((simulated / "cfg.json").read_text())
    assert config["regime"] == [0, 0, 0]
    assert config["covariate_cols"] == ["W1", "W2", "W3"]


def test_simulate_is_reproducible(simulated, tmp_path):
    assert main(["simulate", "--n", "400", "--n-mc", "100000", "--seed", "3", "-q", "-o", str(tmp_path)]) == 0
    assert (tmp_path / "panel.csv").read_bytes() == (simulated / "panel.csv").read_bytes()
    assert (tmp_path / "truth.json").read_bytes() == (simulated / "truth.json").read_bytes()


def test_estimate_on_simulated_panel(simulated, tmp_path, capsys):
    code = main([
        "estimate", "-i", str(simulated / "panel.csv"), "-c", str(simulated / "cfg.json"),
        "-q", "-o", str(tmp_path), "--dump-if", str(tmp_path / "if.csv")
    ])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    panel = pd.read_csv(simulated / "panel.csv")
    baseline = panel.loc[panel["time"] == 0, "outcome"].mean()
    assert report["estimates"][0]["psi"] == pytest.approx(baseline, abs=1e-12)
    assert [row["t"] for row in report["estimates"]] == [0, 1, 2]
    assert report["run"]["sources"]["regime"].startswith("config:")
    assert "method: full-sample" in capsys.readouterr().out
    contributions = pd.read_csv(tmp_path / "if.csv")
    assert list(contributions.columns) == ["unit", "if_t0", "if_t1", "if_t2"]
    assert np.mean(contributions["if_t2"]) == pytest.approx(report["estimates"][2]["psi"])


def test_estimate_reruns_are_byte_identical(simulated, tmp_path):
    args = [
        "estimate", "-i", str(simulated / "panel.csv"), "-c", str(simulated / "cfg.json"),
        "--folds", "2", "--repeats", "3", "--horizons", "2", "-q",
    ]
    assert main(args + ["-o", str(tmp_path / "a")]) == 0
    assert main(args + ["-o", str(tmp_path / "b"), "--threads", "2"]) == 0
    first = (tmp_path / "a" / "report.json").read_text()
    second = json.loads((tmp_path / "b" / "report.json").read_text())
    second["run"] = json.loads(first)["run"]
    assert json.loads(first) == second
    assert (tmp_path / "a" / "report.txt").read_bytes() == (tmp_path / "b" / "report.txt").read_bytes()


def test_diagnose_writes_report(simulated, tmp_path):
    code = main([
        "diagnose", "-i", str(simulated / "panel.csv"), "-c", str(simulated / "cfg.json"),
        "-q", "-o", str(tmp_path)
    ])
    assert code == 0
    report = json.loads((tmp_path / "diagnostics.json").read_text())
    assert report["n_units"] == 400
    assert report["baseline"]["fraction_compliant"] == 1.0
    assert sorted(report["propensity"]) == ["g1", "g2"]


def test_flags_override_config_file(tmp_path):
    panel = _write_panel(tmp_path / "panel.csv", [(1, 0, 0, 1.0, 0.5), (1, 1, 0, 2.0, 0.1)])
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"epsilon": 0.02, "seed": 5, "regime": [0, 0]}))
    run = get_args(["estimate", "-i", str(panel), "-c", str(config), "--epsilon", "0.05"])
    assert run["epsilon"] == 0.05
    assert run.settings.source("epsilon") == "flags"
    assert run["seed"] == 5
    assert run["level"] == 0.95
    assert run["folds"] is None


def test_unknown_config_key_is_rejected(tmp_path):
    panel = _write_panel(tmp_path / "panel.csv", [(1, 0, 0, 1.0, 0.5)])
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"epsilon": 0.02, "colour": "red"}))
    with pytest.raises(ConfigError, match="colour"):
        get_args(["estimate", "-i", str(panel), "-c", str(config)])
    assert main(["estimate", "-i", str(panel), "-c", str(config)]) == 1


def test_usage_errors_exit_with_validation_code(tmp_path, capsys):
    assert main(["estimate", "--bogus"]) == 1
    assert main(["estimate", "-i", str(tmp_path / "missing.csv"), "--regime", "0,0"]) == 1
    assert main(["frobnicate"]) == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_regime_is_a_validation_error(tmp_path):
    panel = _write_panel(tmp_path / "panel.csv", [(1, 0, 0, 1.0, 0.5), (1, 1, 0, 2.0, 0.1)])
    assert main(["estimate", "-i", str(panel), "-q", "-o", str(tmp_path)]) == 1


def test_estimation_failure_exits_with_estimation_code(tmp_path):
    # nobody keeps A=0 at t=1, so no outcome regression can be fit
    rows = []
    for unit in range(6):
        rows += [(unit, 0, 0, 1.0 + unit, 0.1 * unit), (unit, 1, 1, 2.0, 0.2 * unit)]
    panel = _write_panel(tmp_path / "panel.csv", rows)
    assert main(["estimate", "-i", str(panel), "--regime", "0,0", "-q", "-o", str(tmp_path)]) == 2
    assert not (tmp_path / "report.json").exists()


def test_help_lists_flags(capsys):
    assert main(["estimate", "--help"]) == 0
    text = capsys.readouterr().out
    for flag in ("--input", "--regime", "--folds", "--repeats", "--epsilon", "--dump-if", "--config"):
        assert flag in text


def test_state_panel_example_artifacts(tmp_path):
    assert main(["simulate", "--design", "state-panel", "-q", "-o", str(tmp_path)]) == 0
    panel = pd.read_csv(tmp_path / "panel.csv")
    assert list(panel.columns[:4]) == ["state", "year", "treatment", "outcome"]
    assert len(panel) == 51 * 7
    config = json.loads((tmp_path / "cfg.json").read_text())
    assert config["pooled_propensity"] is True
    assert config["regime"] == [1] * 7
    assert not (tmp_path / "truth.json").exists()


def test_bench_writes_table_and_replicates(tmp_path):
    args = [
        "bench", "--n", "300", "--reps", "2", "--configs", "true,bfal",
        "--n-mc", "100000", "--seed", "7", "-q",
    ]
    assert main(args + ["-o", str(tmp_path)]) == 0
    assert main(args + ["-o", str(tmp_path / "again")]) == 0
    for name in ("table.csv", "replicates.csv", "meta.json"):
        assert (tmp_path / name).read_bytes() == (tmp_path / "again" / name).read_bytes()
    header = (tmp_path / "table.csv").read_text().splitlines()[0]
    assert header.startswith("n,method,bias2_t0,vsim_t0,veif_t0")
    replicates = pd.read_csv(tmp_path / "replicates.csv")
    assert set(replicates["method"]) <= {"true", "bfal"}
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["n_reps"] == 2
    assert [config["label"] for config in meta["configs"]] == ["true", "bfal"]


def test_bench_rejects_unknown_config(tmp_path):
    assert main([
        "bench", "--n", "100", "--reps", "1", "--configs", "tmle",
        "--n-mc", "100000", "-q", "-o", str(tmp_path)
    ]) == 1


def test_numeric_failure_exits_with_estimation_code(simulated, tmp_path, monkeypatch):
    def singular(*args, **kwargs):
        raise np.linalg.LinAlgError("Singular matrix")

    monkeypatch.setattr("src.did_ism.__main__.estimate", singular)
    out = tmp_path / "out"
    code = main([
        "estimate", "-i", str(simulated / "panel.csv"), "-c", str(simulated / "cfg.json"),
        "-q", "-o", str(out)
    ])
    assert code == 2
    assert not out.exists()


def test_failed_write_leaves_no_partial_artifacts(simulated, tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("", encoding="utf-8")
    out = tmp_path / "out"
    code = main([
        "estimate", "-i", str(simulated / "panel.csv"), "-c", str(simulated / "cfg.json"),
        "-q", "-o", str(out), "--dump-if", str(blocker / "if.csv")
    ])
    assert code == 1
    assert list(out.iterdir()) == []
