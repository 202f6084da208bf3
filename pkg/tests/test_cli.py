from __future__ import annotations

import csv
import io

import pytest

from kernmatch.cli import Table, build_parser, emit, main, render


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_help_lists_flags(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--help")
    assert code == 0
    for flag in ("--scenario", "--n", "--reps", "--boot", "--seed", "--config", "--out",
                 "--format", "--threads", "--bandwidth", "--kernel", "--estimand"):
        assert flag in out
    code, out, _ = run_cli(capsys, "--help")
    assert code == 0
    for sub in ("simulate", "sweep", "analyze", "misspec", "overlap", "kernel-check"):
        assert sub in out


def test_usage_errors_exit_1(capsys):
    assert run_cli(capsys)[0] == 1
    assert run_cli(capsys, "simulate", "--bogus")[0] == 1
    assert run_cli(capsys, "simulate", "--scenario", "s9", "--n", "100", "--seed", "1")[0] == 1
    code, _, err = run_cli(capsys, "simulate", "--scenario", "s1", "--n", "200", "--reps", "2")
    assert code == 1 and "--seed" in err
    assert run_cli(capsys, "misspec", "--reps", "2")[0] == 1
    assert run_cli(capsys, "kernel-check", "--kernel", "triangular")[0] == 1


def test_data_errors_exit_2(capsys, tmp_path):
    code, _, err = run_cli(capsys, "analyze", "--data", str(tmp_path / "missing.csv"), "--boot", "0")
    assert code == 2 and "cannot read" in err
    bad = tmp_path / "bad.csv"
    bad.write_text("treat,age\n1,x\n")
    assert run_cli(capsys, "analyze", "--data", str(bad), "--boot", "0")[0] == 2


def test_kernel_check(capsys):
    code, out, _ = run_cli(capsys, "kernel-check", "--kernel", "epanechnikov")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1 and abs(float(rows[0]["m0"]) - 1) < 1e-6
    assert abs(float(rows[0]["m2"]) - 0.2) < 1e-6


def test_simulate_six_rows_and_determinism(capsys, tmp_path):
    args = ["simulate", "--scenario", "s1", "--n", "200", "--reps", "3", "--boot", "10", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.csv"), "--threads", "2"]) == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.DictReader(io.StringIO(a.decode())))
    assert [r["method"] for r in rows] == ["Covariate", "True PS", "Estimated PS", "Proposed", "IPW", "DR"]


def test_outdir_override(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("KERNMATCH_OUTDIR", str(tmp_path))
    assert main(["kernel-check", "--out", "k.csv"]) == 0
    assert (tmp_path / "k.csv").read_text().startswith("kernel,m0,m2,k2,m3abs\n")


def test_config_file_and_flag_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("scenario = s2\nn = 200\nreps = 2\nboot = 0\nseed = 5\n"
                   "method.1.name = K\nmethod.1.kind = kernel\nmethod.1.bandwidth = 0.05\n"
                   "method.2.name = W\nmethod.2.kind = ipw\n")
    code, out, _ = run_cli(capsys, "simulate", "--config", str(cfg), "--reps", "3")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["method"] for r in rows] == ["K", "W"]
    assert rows[0]["n_ok"] == "3"
    sectioned = tmp_path / "s.ini"
    sectioned.write_text("[simulate]\nscenario = s2\nn = 200\nreps = 2\nboot = 0\nseed = 5\n")
    assert run_cli(capsys, "simulate", "--config", str(sectioned))[0] == 0
    bad = tmp_path / "bad.ini"
    bad.write_text("scenario = s2\nwidgets = 3\n")
    assert run_cli(capsys, "simulate", "--config", str(bad))[0] == 1
    bad.write_text("n = many\n")
    assert run_cli(capsys, "simulate", "--config", str(bad))[0] == 1


def test_analyze_points_and_beta(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "analyze", "--data", "experimental", "--boot", "0",
                           "--beta-out", str(tmp_path / "beta.csv"))
    assert code == 0
    rows = {r["method"]: r for r in csv.DictReader(io.StringIO(out))}
    assert abs(float(rows["IPW"]["point"]) - 1754.6) < 0.5
    header = (tmp_path / "beta.csv").read_text().splitlines()[0]
    assert header == ",".join(f"beta{i}" for i in range(11))


def test_analyze_balance(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--data", "experimental", "--balance",
                           "--comparison", "cps3")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 10 and rows[0]["comparison_mean"] != ""


def test_emit_deterministic_and_round_trip(tmp_path):
    t = Table(["method", "bias", "n_ok", "cp"], [["A", 0.123456789, 10, None], ["B", -1e-7, 3, 0.95]])
    emit(t, "csv", tmp_path / "x.csv")
    emit(t, "csv", tmp_path / "y.csv")
    assert (tmp_path / "x.csv").read_bytes() == (tmp_path / "y.csv").read_bytes()
    rows = list(csv.reader(io.StringIO((tmp_path / "x.csv").read_text())))
    assert rows == [["method", "bias", "n_ok", "cp"], ["A", "0.123457", "10", ""], ["B", "-1e-07", "3", "0.95"]]
    assert render(Table(["method", "bias"]), "csv") == "method,bias\n"
    assert "A" in render(t, "text")
    with pytest.raises(ValueError):
        emit(t, "json")


def test_parser_builds():
    p = build_parser()
    ns = p.parse_args(["sweep", "--ns", "200,500", "--hs", "0.01,0.02", "--seed", "1"])
    assert ns.ns == [200, 500] and ns.hs == [0.01, 0.02]


def test_analyze_propensity_columns(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--data", "experimental", "--boot", "0", "--ps-columns", "age,educ")
    assert code == 0
    full = run_cli(capsys, "analyze", "--data", "experimental", "--boot", "0")[1]
    assert out != full
    assert run_cli(capsys, "analyze", "--data", "experimental", "--boot", "0", "--ps-columns", "shoe_size")[0] == 1
