import json
import subprocess
import sys

import pytest

from secure_game.cli import EXIT_BUDGET, EXIT_INVALID, EXIT_OK, main


@pytest.fixture
def config_path(quick_scenario, tmp_path):
    """Reduced scenario with a cached kernel so commands skip the estimation."""
    quick_scenario.game.kernel.to_csv(tmp_path / "kernel.csv")
    raw = dict(quick_scenario.config.raw, K=3, kernel_file="kernel.csv", output_dir=str(tmp_path / "out"))
    raw["mc"] = {"kernel_trials": 200, "rollouts": 100, "burn_in": 20}
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(raw))
    return path


def test_compare(config_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["compare", "--config", str(config_path), "--out", str(out), "--alg", "both"]) == EXIT_OK
    for name in ("cost_series.csv", "mode_prob.csv", "strategy_series.csv", "kernel.csv", "summary.json"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["policies"]) == {"moving_horizon", "suboptimal", "always_sub1", "always_sub2"}
    assert "moving_horizon" in capsys.readouterr().out


def test_compare_budget_overrun(config_path, tmp_path):
    code = main(["compare", "--config", str(config_path), "--out", str(tmp_path / "o"), "--alg", "subopt", "--budget", "5"])
    assert code == EXIT_BUDGET


def test_compare_both_skips_over_budget(config_path, tmp_path):
    code = main(["compare", "--config", str(config_path), "--out", str(tmp_path / "o"), "--budget", "5"])
    assert code == EXIT_OK


def test_invalid_config(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"name": "x"}))
    assert main(["compare", "--config", str(path)]) == EXIT_INVALID
    assert "Ts" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert main(["kernel", "--config", str(tmp_path / "none.json")]) == EXIT_INVALID


def test_bench(config_path, tmp_path):
    out = tmp_path / "bench"
    args = ["bench", "--config", str(config_path), "--out", str(out), "--k-list", "5,10", "--k-list-subopt", "1,2"]
    assert main(args + ["--repeats", "1"]) == EXIT_OK
    lines = (out / "scaling.csv").read_text().splitlines()
    assert lines[0] == "algorithm,K,wall_time_s,solve_count" and len(lines) == 5


def test_kernel(config_path, tmp_path):
    out = tmp_path / "k"
    assert main(["kernel", "--config", str(config_path), "--out", str(out), "--trials", "100"]) == EXIT_OK
    assert (out / "kernel.csv").read_text().startswith("i,j,source_mode,")


def test_solve(tmp_path, capsys):
    path = tmp_path / "Q.csv"
    path.write_text("3,1\n1,2\n")
    assert main(["solve", str(path)]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert float(out[0].split()[1]) == pytest.approx(5 / 3)
    assert [float(x) for x in out[1].split()[1].split(",")] == pytest.approx([1 / 3, 2 / 3])


def test_solve_bad_matrix(tmp_path):
    path = tmp_path / "Q.csv"
    path.write_text("1,x\n")
    assert main(["solve", str(path)]) == EXIT_INVALID


def test_module_entry_point(tmp_path):
    path = tmp_path / "Q.csv"
    path.write_text("1,-1\n-1,1\n")
    res = subprocess.run([sys.executable, "-m", "secure_game.cli", "solve", str(path)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("value")
