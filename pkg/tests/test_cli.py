import json
import shutil

import pytest

from loopcse.cli import main

from conftest import BENCH


@pytest.fixture
def workdir(tmp_path):
    for name in ("pop", "psinv"):
        shutil.copy(BENCH / f"{name}.loop", tmp_path / f"{name}.loop")
    return tmp_path


def test_pop_binary_run_artifacts(workdir, capsys):
    src = workdir / "pop.loop"
    rc = main([str(src), "--reassoc=0", "--check=40,0", "--size", "nx=9", "--size", "ny=9"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "auxiliary arrays: 9" in out
    assert "equivalence check: pass" in out
    race = workdir / "pop.race.loop"
    assert race.exists()
    report = json.loads((workdir / "pop.report.json").read_text())
    assert report["iterations"] == 3
    assert len(report["aux"]) == 9
    assert report["staticOps"]["sincos"] == [16, 4]
    assert report["profit"] > 0
    assert (workdir / "pop.report.txt").exists()


def test_deterministic_outputs(workdir):
    src = workdir / "pop.loop"
    assert main([str(src), "--reassoc=3"]) == 0
    first = (workdir / "pop.race.loop").read_bytes(), (workdir / "pop.report.json").read_bytes()
    assert main([str(src), "--reassoc=3"]) == 0
    second = (workdir / "pop.race.loop").read_bytes(), (workdir / "pop.report.json").read_bytes()
    assert first == second


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.loop"
    bad.write_text("REAL B(n)\nDO i=1,n\n  B(i) = A(i)\nENDDO\n")
    rc = main([str(bad)])
    assert rc == 1
    assert "undeclared array" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path, capsys):
    rc = main([str(tmp_path / "absent.loop")])
    assert rc == 1


def test_failed_equivalence_exit_code(workdir):
    # bit-exact demanded from a reassociated pipeline cannot pass
    rc = main([str(workdir / "psinv.loop"), "--reassoc=3", "--check=10,0"])
    assert rc == 2


def test_budget_exhaustion_with_exact_strategy(workdir, capsys):
    rc = main([str(workdir / "psinv.loop"), "--reassoc=2", "--strategy=exact", "--mis-budget=20"])
    assert rc == 1
    assert "budget" in capsys.readouterr().err


def test_no_contract_emits_straightforward(workdir):
    src = workdir / "pop.loop"
    assert main([str(src), "--reassoc=0", "--no-contract"]) == 0
    text = (workdir / "pop.race.loop").read_text()
    assert "REAL aa_0_0(nx,ny)" in text  # full-size auxiliaries
    assert "j0" not in text


def test_json_report_format(workdir, capsys):
    assert main([str(workdir / "pop.loop"), "--reassoc=0", "--report=json"]) == 0
    out = capsys.readouterr().out
    data = json.loads(out)
    assert set(data) >= {"aux", "ori", "aft", "profit", "staticOps", "iterations"}
