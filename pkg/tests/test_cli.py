import json

import pytest
from click.testing import CliRunner

from conftest import DATA, read
from htnrefine.cli import BUDGET, INPUT_ERROR, NO_TIHTN, OK, UNSOLVABLE, main
from htnrefine.parser import parse_domain, parse_methods


@pytest.fixture
def files(tmp_path):
    out = {}
    for name in ("logistics.htn", "example2.inst", "example3.inst"):
        p = tmp_path / name
        p.write_text(read(name))
        out[name] = str(p)
    return out


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def test_plan_example2(files):
    r = run("plan", files["logistics.htn"], files["example2.inst"])
    assert r.exit_code == OK
    assert r.stdout.splitlines()[4] == "fly(plane1,airpB)"


def test_plan_example3_unsolvable(files):
    r = run("plan", files["logistics.htn"], files["example3.inst"])
    assert r.exit_code == UNSOLVABLE


def test_tiplan_marks_insertion(files):
    r = run("tiplan", files["logistics.htn"], files["example3.inst"])
    assert r.exit_code == OK
    assert [line for line in r.stdout.splitlines() if line.startswith("+")] == ["+fly(plane1,airpA)"]
    r = run("tiplan", files["logistics.htn"], files["example3.inst"], "--max-insertions", 0)
    assert r.exit_code == UNSOLVABLE


def test_budget_exit(files):
    r = run("tiplan", files["logistics.htn"], files["example3.inst"], "--node-budget", 2)
    assert r.exit_code == BUDGET


def test_parse_error_exit(tmp_path, files):
    bad = tmp_path / "bad.htn"
    bad.write_text("(domain d (predicates (p ?x))")
    r = run("plan", bad, files["example2.inst"])
    assert r.exit_code == INPUT_ERROR
    assert "bad.htn:1:1" in r.stderr
    assert run("plan", tmp_path / "missing.htn", files["example2.inst"]).exit_code == INPUT_ERROR


def test_refine_and_replan(tmp_path, files):
    out, audit = tmp_path / "learned.methods", tmp_path / "audit.json"
    r = run("refine", files["logistics.htn"], files["example3.inst"], "--out", out, "--audit", audit)
    assert r.exit_code == OK
    (m,) = parse_methods(out.read_text(), parse_domain(read("logistics.htn")))
    assert m.origin == "m-airShip"
    assert json.loads(audit.read_text())["methods"] == [m.id]
    r = run("plan", files["logistics.htn"], files["example3.inst"], "-m", out)
    assert r.exit_code == OK


def test_refine_without_any_plan(files):
    r = run("refine", files["logistics.htn"], files["example3.inst"], "--max-insertions", 0)
    assert r.exit_code == NO_TIHTN


def test_validate(tmp_path, files):
    r = run("plan", files["logistics.htn"], files["example2.inst"], "--format", "json")
    tree = tmp_path / "tree.json"
    tree.write_text(r.stdout)
    r = run("validate", files["logistics.htn"], files["example2.inst"], tree)
    assert r.exit_code == OK and r.stdout.strip() == "valid"
    r = run("validate", files["logistics.htn"], files["example3.inst"], tree)
    assert r.exit_code == UNSOLVABLE and "[exec]" in r.stdout
    tree.write_text("{not json")
    assert run("validate", files["logistics.htn"], files["example2.inst"], tree).exit_code == INPUT_ERROR


def test_fmt_round_trip(tmp_path, files):
    r = run("fmt", files["logistics.htn"])
    assert r.exit_code == OK
    again = tmp_path / "again.htn"
    again.write_text(r.stdout)
    assert run("fmt", again).stdout == r.stdout
    assert run("fmt", files["example3.inst"]).exit_code == INPUT_ERROR
    assert run("fmt", files["example3.inst"], "--domain", files["logistics.htn"]).exit_code == OK


def test_eval_csv():
    r = run("eval", "--train", 2, "--test", 3, "--seed", 1, "--sizes", "0,2")
    assert r.exit_code == OK
    lines = r.stdout.splitlines()
    assert lines[0] == "train_size,solved,total,rate,methods_learned,wall_ms"
    assert [line.split(",")[0] for line in lines[1:]] == ["0", "2"]
    assert run("eval", "--sizes", "a,b", "--train", 1, "--test", 1).exit_code == INPUT_ERROR


def test_bundled_data_present():
    assert (DATA / "logistics-full.htn").is_file()
