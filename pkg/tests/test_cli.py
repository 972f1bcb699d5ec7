import json
import subprocess
import sys

import numpy as np
import pytest

from drawdown_tax.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# drawdown-tax v0.1.0")
    header = lines[1].split(",")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    return header, rows


def violating_table(tmp_path):
    x = np.linspace(0.0, 6.0, 13)
    slopes = np.where(np.arange(13) % 2 == 0, -2.0, 0.9)
    path = tmp_path / "xi.csv"
    path.write_text("x,xi,xi_prime\n" + "".join(f"{a},-1.0,{s}\n" for a, s in zip(x, slopes)))
    return path


def test_scale_table(capsys, tmp_path):
    out = tmp_path / "w.csv"
    code, _, _ = run(capsys, "scale", "--x-max", "5", "--points", "11", "-o", str(out))
    assert code == 0
    header, rows = read_csv(out)
    assert header == ["x", "W", "W1", "W2", "W1_over_W"]
    assert rows[0, 1] == 0.0
    assert np.all(np.diff(rows[:, 1]) > 0)


def test_solve_json_is_stable(capsys, tmp_path):
    out = tmp_path / "f.csv"
    code, first, _ = run(capsys, "solve", "--k", "-1", "--d", "1", "-o", str(out))
    assert code == 0
    data = json.loads(first)
    assert data["case"] == "V"
    assert 0 < data["switch_point"] <= 1.444
    assert data["hjb_residual_fd"] < 1e-5
    csv_first = out.read_bytes()
    code, second, _ = run(capsys, "solve", "--k", "-1", "--d", "1", "-o", str(out))
    assert second == first
    assert out.read_bytes() == csv_first


def test_config_file_and_overrides(capsys, tmp_path):
    table = tmp_path / "tables" / "lin.csv"
    table.parent.mkdir()
    # solve looks far past x0 (tail horizons and the limit estimate), so the table is wide
    table.write_text("x,xi,xi_prime\n0,-1,0.1\n3000,299,0.1\n")
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        '[model]\nfamily = "brownian"\nmu = 0.03\nsigma = 0.4\nq = 0.01\n'
        '[xi]\nkind = "table"\npath = "tables/lin.csv"\n'
        "[control]\ngamma1 = 0.2\ngamma2 = 0.6\n"
    )
    code, out, _ = run(capsys, "solve", "--config", str(cfg), "-o", str(tmp_path / "a.csv"))
    assert code == 0
    assert json.loads(out)["case"] == "II"
    code, out, _ = run(capsys, "solve", "--config", str(cfg), "--gamma1", "0.6",
                       "-o", str(tmp_path / "b.csv"))
    assert code == 0
    assert "gamma1 == gamma2" in json.loads(out)["note"]


def test_bad_config_lists_every_problem(capsys, tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[model]\nsigma = -1.0\nq = 0.0\n[control]\ngamma1 = 0.7\ngamma2 = 1.2\n")
    code, _, err = run(capsys, "solve", "--config", str(cfg))
    assert code == 1
    assert "sigma" in err and "model.q" in err and "gamma2" in err
    code, _, _ = run(capsys, "nonsense")
    assert code == 1


def test_assumption_violation_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "solve", "--xi-table", str(violating_table(tmp_path)))
    assert code == 2
    assert "VIOLATED" in err or "sign" in err


def test_verify_gate_failure(capsys):
    # with a single path the Monte-Carlo gates have no error bar and cannot pass
    code, out, _ = run(capsys, "verify", "--paths", "1")
    assert code == 3
    assert "FAIL" in out or "false" in out


def test_curve_and_simulate(capsys, tmp_path):
    out = tmp_path / "c.csv"
    code, _, _ = run(capsys, "curve", "--barrier", "3", "--x-max", "3", "--points", "5",
                     "-o", str(out))
    assert code == 0
    _, rows = read_csv(out)
    # x = 0 is skipped: W(0) = 0 for Brownian motion
    assert rows.shape[0] == 4
    assert np.all(np.diff(rows[:, 1]) > 0)
    code, text, _ = run(capsys, "simulate", "--quantity", "exit", "--barrier", "3",
                        "--paths", "2000", "--seed", "1")
    assert code == 0
    assert 0 < json.loads(text)["mean"] <= 1


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "drawdown_tax", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "0.1.0" in proc.stdout


@pytest.mark.slow
def test_verify_passes(capsys):
    code, out, _ = run(capsys, "verify", "--paths", "20000")
    assert code == 0, out
