import io
import subprocess
import sys
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import pytest

from knntwosample.cli import SEED_ENV, main

GOLDEN = Path(__file__).parent / "golden"
COMMANDS = ["main", "test", "sample", "theory", "power", "curve", "heatmap", "selftest"]


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def pairs(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


@pytest.fixture
def points(tmp_path):
    path = tmp_path / "pts.csv"
    code, _, _ = run("sample", "--d", "2", "--n1", "60", "--n2", "40", "--theta", "1",
                     "--h", "1", "--b", "-0.3", "--output", str(path), "--seed", "5")
    assert code == 0
    return path


@pytest.mark.parametrize("name", COMMANDS)
def test_help_matches_golden(name):
    argv = ["--help"] if name == "main" else [name, "--help"]
    code, out, _ = run(*argv)
    assert code == 0
    assert out == (GOLDEN / f"help_{name}.txt").read_text()


def test_help_lists_every_flag():
    code, out, _ = run("heatmap", "--help")
    for flag in ("--config", "--d", "--theta", "--h", "--n1", "--n2", "--b", "--delta",
                 "--alpha", "--sides", "--reps", "--seed", "--threads", "--progress",
                 "--output"):
        assert flag in out


def test_test_subcommand_record(points):
    code, out, err = run("test", "--input", str(points), "--k", "10", "--alpha", "0.1",
                         "--side", "two")
    assert code == 0
    rec = pairs(out)
    assert list(rec)[:7] == ["T", "R", "p_value", "decision", "k", "alpha", "side"]
    assert rec["side"] == "two" and rec["k"] == "10"
    assert int(rec["T"]) >= 0
    assert err.startswith("# test:")


def test_missing_k_is_usage_error(points):
    code, out, err = run("test", "--input", str(points))
    assert code == 2
    assert out == ""
    assert "--k" in err


@pytest.mark.parametrize("argv", [
    ["test", "--input", "/nonexistent/file.csv", "--k", "3"],
    ["test", "--k", "3", "--bogus"],
    ["theory", "--theta", "1", "--h", "1", "--d", "3", "--p", "1.5"],
    ["theory", "--theta", "-1", "--h", "1", "--d", "3", "--p", "0.5"],
    ["power", "--d", "2", "--n1", "10", "--n2", "10", "--b", "0.5", "--k", "2"],
    ["curve", "--d", "2", "--n1", "10", "--n2", "10", "--b", "-0.5"],
    ["nosuchcommand"],
])
def test_validation_errors_exit_2(argv):
    code, out, err = run(*argv)
    assert code == 2
    assert out == ""
    assert err


def test_numerical_failure_exits_3():
    code, _, err = run("theory", "--theta", "1", "--h", "1", "--d", "2", "--p", "0.5",
                       "--method", "numeric")
    assert code == 3
    assert "numerical" in err


def test_theory_example_lines():
    code, out, _ = run("theory", "--family", "sph-normal", "--theta", "20", "--h", "19",
                       "--d", "6", "--gamma", "0.1", "--p", "0.6")
    assert code == 0
    rec = pairs(out)
    for key in ("a", "b", "d_t", "regime", "sigma0_sq"):
        assert key in rec
    assert rec["d_t"] == "7"
    assert float(rec["a"]) > 0 > float(rec["b"])


def test_theory_with_b_reports_power():
    code, out, _ = run("theory", "--theta", "20", "--h", "19", "--d", "6", "--p", "0.6",
                       "--gamma", "0.1", "--b", "-0.2")
    rec = pairs(out)
    assert code == 0
    assert rec["regime"] == "above-upper"
    assert float(rec["power_one"]) == 1.0 and rec["power_two_formula"] == "1"


def _power(*extra):
    return run("power", "--d", "2", "--n1", "40", "--n2", "30", "--theta", "1", "--h", "1",
               "--b", "-0.3", "--k", "3", "--reps", "4", "--threads", "1", *extra)


def test_seed_flag_is_reproducible():
    assert _power("--seed", "9")[1] == _power("--seed", "9")[1]


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV, "9")
    _, out_env, err = _power()
    assert "seed=9" in err
    monkeypatch.delenv(SEED_ENV)
    assert out_env == _power("--seed", "9")[1]


def test_bad_seed_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV, "nine")
    assert _power()[0] == 2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "plan.txt"
    cfg.write_text("d = 2\nn1 = 40\nn2 = 30\ntheta = 1\nh = 1\nb = -0.3\nk = 3\n"
                   "reps = 4\nseed = 1\n")
    code, out, err = run("power", "--config", str(cfg), "--reps", "2", "--threads", "1")
    assert code == 0
    assert "replicates=2" in err and "seed=1" in err
    assert pairs(out)["one.reps"] == "2"


def test_heatmap_csv_to_stdout():
    code, out, _ = run("heatmap", "--d", "2", "--n1", "40", "--n2", "30", "--theta", "1",
                       "--h", "1", "--b=-0.5,-0.2", "--delta", "0.2,0.4", "--reps", "3",
                       "--threads", "1", "--seed", "2")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("side,d,N1,N2,k,delta")
    assert len(lines) == 1 + 2 * 2 * 2


def test_bracketed_negative_list():
    # a bare "-0.5,-0.2" looks like a flag to the parser; "=" or brackets avoid that
    code, out, _ = run("curve", "--d", "2", "--n1", "40", "--n2", "30", "--theta", "1",
                       "--h", "1", "--b", "[-0.5,-0.2]", "--k", "2", "--reps", "2",
                       "--threads", "1", "--sides", "one")
    assert code == 0
    assert len(out.splitlines()) == 3


def test_selftest_passes():
    code, out, _ = run("selftest")
    assert code == 0
    assert "fail" not in out


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "knntwosample", "--version"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0
    assert proc.stdout.startswith("knntwosample ")
