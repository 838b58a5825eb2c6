import json
import math
import os
import subprocess

import numpy as np
import pytest

from eigenrate import spectra
from eigenrate.rates import eoc
from eigenrate.studio import (
    ConfigError,
    EmitError,
    StudyReport,
    emit,
    load_config,
    parse_config,
    read_report,
    run_study,
)
from eigenrate.studio import cli
from eigenrate.studio.emit import to_csv, to_dat, write_atomic
from eigenrate.studio.runner import StudyError, thread_count

SMALL = """
[run]
out = {out}
formats = json, csv, dat

[study:p1]
kind = laplace-1d
family = P1
levels = 16, 32, 64, 128, 256
modes = 1
gates = certify, eigen-eoc, upper

[study:squares]
kind = spectrum
domain = square
count = 20
gates = table

[study:aniso]
kind = approx
family = Q2
target = x**3
levels = 4, 8, 16, 32
annihilation = false
gates = anisotropic, theorem-bound, annihilation
"""


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL.format(out=tmp_path / "out"))
    return path


# -- config -------------------------------------------------------------------

def test_parse_and_defaults(small):
    run = load_config(str(small))
    assert run.names() == ["p1", "squares", "aniso"]
    p1 = run.study("p1")
    assert p1.levels == (16, 32, 64, 128, 256)
    assert p1.p == 2.0 and p1.max_dofs == 4096
    assert run.formats == ("json", "csv", "dat")
    assert run.study("squares").active_gates == ("table",)


def test_level_ranges():
    run = parse_config("[study:a]\nkind = reliability\nfamily = P1\nlevels = 3..5, 8\n")
    assert run.study("a").levels == (3, 4, 5, 8)


@pytest.mark.parametrize("text", [
    "[study:a]\nkind = laplace-1d\nfamily = P1\nlevels = 4, 8\ncolour = red\n",
    "[study:a]\nkind = wave\nfamily = P1\nlevels = 4\n",
    "[study:a]\nfamily = P1\nlevels = 4\n",
    "[study:a]\nkind = laplace-1d\nfamily = P1\nlevels = 8, 4\n",
    "[study:a]\nkind = laplace-1d\nfamily = P1\nlevels = 4\ngates = weyl\n",
    "[study:a]\nkind = laplace-1d\nfamily = P1\nlevels = 4\np = 1.5\n",
    "[study:a]\nkind = laplace-1d\nfamily = P1\nlevels = four\n",
    "[study:a]\nkind = laplace-2d\nfamily = P1\nlevels = 4\nmesh = hex\n",
    "[study:a]\nkind = approx\nfamily = Q2\nlevels = 4\n",
    "[study:a]\nkind = spectrum\ndomain = disk\n",
    "[other]\nx = 1\n",
    "[run]\nout = x\n",
    "[run]\nformats = xml\n[study:a]\nkind = spectrum\n",
    "[run]\ncolour = 1\n[study:a]\nkind = spectrum\n",
])
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_unknown_study_and_missing_file(small):
    with pytest.raises(ConfigError):
        load_config(str(small)).study("nope")
    with pytest.raises(ConfigError):
        load_config("/nonexistent/eigenrate.ini")


def test_builtin_acceptance_config_loads():
    run = load_config("acceptance")
    assert "interval-p1" in run.names() and "spectrum-square" in run.names()


def test_replace_revalidates(small):
    p1 = load_config(str(small)).study("p1")
    assert p1.replace(family="P2").family == "P2"
    with pytest.raises(ConfigError):
        p1.replace(levels="0, 4")


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("EIGENRATE_THREADS", "0")
    assert thread_count() == 0
    monkeypatch.setenv("EIGENRATE_THREADS", "3")
    assert thread_count() == 3


# -- studies --------------------------------------------------------------------

def test_p1_eigenvalue_eoc(small):
    rep = run_study(load_config(str(small)).study("p1"), threads=0)
    assert rep.passed, rep.gates
    assert abs(rep.fits["mode1/lambda"].slope - 2.0) <= 0.1
    # the fit over the whole sequence h = 1/16 .. 1/256 holds the same rate
    errs = [r.lam_h - r.lam for r in rep.records]
    assert abs(eoc(errs, [r.h for r in rep.records]).slope - 2.0) <= 0.1
    # independent oracle: the dispersion formula fixes every lambda_h
    for lv in rep.levels:
        h = lv["h"]
        want = 6 / h**2 * (1 - math.cos(math.pi * h)) / (2 + math.cos(math.pi * h))
        assert abs(lv["lams"][0] - want) <= 1e-10 * want


def test_spectrum_table_matches_laplace_square(small):
    rep = run_study(load_config(str(small)).study("squares"), threads=0)
    assert rep.gates["table"].passed
    ex = spectra.laplace_square(20)
    assert [r["lam"] for r in rep.table] == [p.lam for p in ex]
    assert [r["multiplicity"] for r in rep.table] == [p.multiplicity for p in ex]


def test_anisotropic_q2_flat_in_y(small):
    rep = run_study(load_config(str(small)).study("aniso"), threads=0)
    assert rep.passed, rep.gates
    ey = np.array([r.errors["y/L2"] for r in rep.records])
    assert np.max(np.abs(ey / ey[0] - 1)) < 0.01
    assert abs(rep.fits["x/L2"].slope - 3.0) <= 0.1


def test_threaded_matches_sequential(small):
    cfg = load_config(str(small)).study("p1")
    assert run_study(cfg, threads=0).to_json() == run_study(cfg, threads=3).to_json()


def test_too_many_dofs_is_a_study_error():
    cfg = parse_config("[study:a]\nkind = laplace-1d\nfamily = P1\nlevels = 8, 16, 64\nmax_dofs = 20\n").study("a")
    with pytest.raises(StudyError) as info:
        run_study(cfg, threads=0)
    assert "n=64" in str(info.value)


# -- reports and emit -----------------------------------------------------------

def test_report_round_trip_is_byte_identical(small):
    rep = run_study(load_config(str(small)).study("p1"), threads=0)
    text = rep.to_json()
    assert json.loads(text)["schema"] == "eigenrate/v1"
    assert StudyReport.from_json(text).to_json() == text


def test_empty_report_has_headers_only(tmp_path):
    rep = StudyReport("empty", "laplace-1d", {"name": "empty"})
    paths = emit(rep, str(tmp_path), ("json", "csv", "dat"))
    assert {os.path.basename(p) for p in paths} >= {"empty.json", "empty.csv", "empty.dat", "empty.gp"}
    csv_lines = (tmp_path / "empty.csv").read_text().splitlines()
    assert csv_lines[0].startswith("#")
    assert csv_lines[1] == "level,h,N,index,lam,lam_h,hx,hy"
    assert len(csv_lines) == 2
    assert all(ln.startswith("#") for ln in (tmp_path / "empty.dat").read_text().splitlines())
    assert read_report(str(tmp_path / "empty.json")).to_json() == rep.to_json()


def test_csv_has_17_significant_digits(small):
    rep = run_study(load_config(str(small)).study("p1"), threads=0)
    lines = to_csv(rep).splitlines()
    cols = lines[1].split(",")
    row = dict(zip(cols, lines[2].split(",")))
    lam_h = float(row["lam_h"])
    assert lam_h == rep.records[0].lam_h
    assert row["lam_h"] == f"{lam_h:.17g}"
    mantissa = row["lam_h"].split("e")[0].replace(".", "").replace("-", "").lstrip("0")
    assert len(mantissa) == 17
    assert row["lam"] == f"{math.pi**2:.17g}"
    dat = to_dat(rep).splitlines()
    assert len(dat[2].split()) == len(cols)


def test_write_atomic(tmp_path):
    p = tmp_path / "sub" / "a.txt"
    write_atomic(str(p), "one\n")
    write_atomic(str(p), "two\n")
    assert p.read_text() == "two\n"
    assert [f for f in os.listdir(p.parent) if f.startswith(".tmp-")] == []


def test_emit_failure_has_path_context(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(EmitError) as info:
        write_atomic(str(blocker / "a.json"), "{}")
    assert str(blocker) in str(info.value)


# -- CLI -------------------------------------------------------------------------

def test_cli_pass_exit_code(small, tmp_path, capsys):
    out = tmp_path / "cli"
    assert cli.main(["squares", "--config", str(small), "--out", str(out), "--seq"]) == 0
    assert (out / "squares.json").exists()
    assert "[PASS] squares/table" in capsys.readouterr().out


def test_cli_failing_gate_exit_code(tmp_path, capsys):
    cfg = tmp_path / "f.ini"
    cfg.write_text("[study:w]\nkind = spectrum\ndomain = square\ngates = weyl\n")
    assert cli.main(["w", "--config", str(cfg), "--out", str(tmp_path), "--seq"]) == 1
    assert "[FAIL] w/weyl" in capsys.readouterr().out


def test_cli_config_and_study_errors(small, tmp_path):
    assert cli.main(["nope", "--config", str(small), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[study:a]\nkind = laplace-1d\nfamily = P1\nlevels = 4, 8, 16\nmax_dofs = 5\n")
    assert cli.main(["a", "--config", str(bad), "--out", str(tmp_path), "--seq"]) == 3
    assert cli.main(["p1", "--config", str(small), "--levels", "0"]) == 2


def test_cli_levels_and_family(small, tmp_path):
    out = tmp_path / "lv"
    code = cli.main(["p1", "--config", str(small), "--out", str(out), "--levels", "3",
                     "--family", "P2", "--seq", "--quiet"])
    rep = read_report(str(out / "p1.json"))
    assert [lv["cells"] for lv in rep.levels] == [16, 32, 64]
    assert rep.config["family"] == "P2"
    # P2 eigenvalues converge at order 4, so the default target 2(r - m) = 4 holds
    assert code == 0, rep.gates


def test_console_script(small, tmp_path):
    out = tmp_path / "sc"
    res = subprocess.run(["eigenrate", "squares", "--config", str(small), "--out", str(out), "--seq"],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "1 studies, 0 failing gates" in res.stdout
