import json
import subprocess
import sys

import numpy as np
import pytest

from lob_lab import cli
from lob_lab.equilibrium import ModelParams, solve_full
from lob_lab.sweep import SweepTable, read_path_csv


def run(args, capsys):
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_zero_drift(tmp_path, capsys):
    target = tmp_path / "path.csv"
    code, out, err = run(["solve", "--alpha", "0", "--sigma", "1", "--T", "1", "--N", "100",
                          "--output", str(target)], capsys)
    assert code == 0 and err == ""
    assert out.count("\n") == 1 and "non-degenerate" in out
    path = read_path_csv(target.read_text())
    assert path.degenerate_from is None and path.steps == 100


def test_solve_reports_degeneracy_as_result(tmp_path, capsys):
    code, out, _ = run(["solve", "--alpha", "0.1", "--N", "100", "--output", str(tmp_path / "p.csv")], capsys)
    assert code == 0
    assert "degenerate from step 41" in out


def test_solve_stdout_has_only_data(capsys):
    code, out, err = run(["solve", "--N", "10"], capsys)
    assert code == 0 and err == ""
    assert out.splitlines()[1].startswith("schema=1,n,t,pa")


def test_round_trip_is_lossless_at_12_digits(tmp_path, capsys):
    target = tmp_path / "p.csv"
    run(["solve", "--alpha", "0.02", "--N", "60", "--output", str(target)], capsys)
    back = read_path_csv(target.read_text())
    fresh = solve_full(ModelParams(0.02, 1.0, 1.0, 60))
    for name in ("pa", "pb", "la", "lb"):
        np.testing.assert_allclose(getattr(back, name), getattr(fresh, name), rtol=5e-12, equal_nan=True)
    # re-serializing the parsed path reproduces the file byte for byte
    from lob_lab.sweep import PathReport
    assert PathReport(back).to_csv() == target.read_text()


def test_critical_alpha_json(tmp_path, capsys):
    target = tmp_path / "c.json"
    code, out, _ = run(["critical-alpha", "--N", "200", "--tol", "1e-5", "--output", str(target)], capsys)
    assert code == 0
    data = json.loads(target.read_text())
    assert data["alpha_star"] == pytest.approx(0.034409, abs=1e-5)
    lo, hi = data["bracket"]
    assert hi - lo <= 1e-5 and lo < data["alpha_star"] < hi


def test_sweep_threads_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LOB_LAB_THREADS", "2")
    args = cli.parse_args(["sweep-spread", "--N", "20,50"])
    assert args.threads == 2
    target = tmp_path / "s.csv"
    code, _, _ = run(["sweep-spread", "--N", "20,50,100", "--output", str(target)], capsys)
    assert code == 0
    table = SweepTable.from_csv(target.read_text())
    assert [r.n for r in table.rows] == [20, 50, 100]


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# drift study\nalpha = 0.1\nN=100\nsigma=1\n")
    args = cli.parse_args(["solve", "--config", str(cfg)])
    assert (args.alpha, args.N) == (0.1, 100)
    args = cli.parse_args(["solve", "--config", str(cfg), "--N", "30"])
    assert (args.alpha, args.N) == (0.1, 30)
    cfg.write_text("bogus=1\n")
    assert run(["solve", "--config", str(cfg)], capsys)[0] == 2


@pytest.mark.parametrize("argv", [
    ["solve", "--N", "abc"],
    ["solve", "--sigma", "-1"],
    ["solve", "--format", "json"],
    ["frobnicate"],
    ["solve", "--output", "/nonexistent-dir/x.csv"],
])
def test_validation_errors_exit_2(argv, capsys):
    code, out, _ = run(argv, capsys)
    assert code == 2 and out == ""


def test_non_convergence_exit_3(monkeypatch, capsys):
    from lob_lab.equilibrium import ConvergenceError

    def boom(params):
        raise ConvergenceError("stalled", (0.0, 0.0), 1.0)

    monkeypatch.setattr(cli, "path_report", boom)
    assert run(["solve"], capsys)[0] == 3


def test_verify_round_trip(tmp_path, capsys):
    path_file = tmp_path / "p.csv"
    run(["solve", "--N", "20", "--output", str(path_file)], capsys)
    report = tmp_path / "v.json"
    code, out, _ = run(["verify", "--path", str(path_file), "--paths", "20000", "--batch", "10000",
                        "--output", str(report)], capsys)
    data = json.loads(report.read_text())
    assert code == (0 if data["pass"] else 4)
    assert data["params"]["steps"] == 20
    assert "max deviation gain" in out


def test_verify_failed_check_exit_4(monkeypatch, tmp_path, capsys):
    import lob_lab.exchange as ex

    real = ex.verification_report

    def failing(*a, **k):
        rep = real(*a, **k)
        rep["pass"] = False
        return rep

    monkeypatch.setattr(ex, "verification_report", failing)
    code, _, _ = run(["verify", "--N", "10", "--paths", "2000", "--batch", "2000",
                      "--output", str(tmp_path / "v.json")], capsys)
    assert code == 4


def test_verify_degenerate_path_exit_2(capsys):
    assert run(["verify", "--alpha", "0.1", "--N", "100", "--paths", "100"], capsys)[0] == 2


def test_tails_and_proximity_small(tmp_path, capsys):
    t = tmp_path / "t.json"
    code, out, _ = run(["tails", "--spec", "brownian", "--paths", "20000", "--output", str(t)], capsys)
    data = json.loads(t.read_text())
    assert code == (0 if data["pass"] else 4)
    assert {"spec", "grid", "estimates", "ci", "fitted_constants", "pass"} <= set(data)
    m = tmp_path / "m.json"
    code, _, _ = run(["tails", "--check", "mean-gap", "--paths", "20000", "--output", str(m)], capsys)
    assert code == 0 and json.loads(m.read_text())["pass"]
    p = tmp_path / "p.json"
    code, _, _ = run(["proximity", "--model", "constant", "--alpha", "0", "--paths", "50000",
                      "--output", str(p)], capsys)
    assert json.loads(p.read_text())["spec"]["name"].startswith("constant")


def test_atomic_write_leaves_no_temp(tmp_path):
    target = tmp_path / "out.txt"
    cli.write_atomic(str(target), "abc")
    cli.write_atomic(str(target), "def")
    assert target.read_text() == "def"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "lob_lab", "solve", "--N", "5"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stderr == ""
    assert res.stdout.startswith("# alpha=0.0")
