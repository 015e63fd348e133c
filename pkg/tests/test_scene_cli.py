import json
import math
from pathlib import Path

import numpy as np
import pytest

from parallel_refractor.cli import FAILED, INVALID, OK, main
from parallel_refractor.scene import SceneError, dumps, load_schema, parse_scene

ROOT = Path(__file__).resolve().parents[1]
SCENES = ROOT / "docs" / "scenes"


def run(*argv):
    return main([str(a) for a in argv])


def test_schema_doc_matches_package():
    assert json.loads((ROOT / "docs" / "scene.schema.json").read_text()) == load_schema()


@pytest.mark.parametrize("name", sorted(p.name for p in SCENES.glob("*.json")))
def test_shipped_scenes_parse(name):
    s = parse_scene((SCENES / name).read_text())
    assert len(s.sha256) == 64


def test_dumps_floats_and_nonfinite():
    text = dumps({"a": 0.1, "b": [float("nan"), math.inf], "c": np.float64(1 / 3), "d": True})
    assert '"a": 0.10000000000000001' in text
    assert "NaN" in text and "Infinity" in text and "0.33333333333333331" in text


@pytest.mark.parametrize("text,where", [
    ('{"optics": ', "line 1"),
    ('{"optics": {"kappa": 0.5}}', "schema violation"),
    ('{"optics": {"kappa": 2.0}, "cylinder": {"lower": [-1], "upper": [1], "height": 1},'
     ' "target": {"type": "atoms", "points": [[0, 5]], "weights": [1]}}', "optics/kappa"),
    ('{"optics": {"kappa": 0.5}, "cylinder": {"lower": [1], "upper": [-1], "height": 1},'
     ' "target": {"type": "atoms", "points": [[0, 5]], "weights": [1]}}', "nonempty"),
])
def test_bad_scenes(text, where):
    with pytest.raises(SceneError, match=where):
        parse_scene(text)


def test_solve(tmp_path):
    assert run("solve", "--scene", SCENES / "symmetric_two_atom.json", "--out", tmp_path) == OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["converged"] and len(rep["scene_sha256"]) == 64
    b = rep["b"]
    assert abs(b[0] - b[1]) <= 1e-6
    lines = (tmp_path / "assignment.csv").read_text().splitlines()
    assert lines[0] == "x1,u,active_index,near_tie" and len(lines) == 2001
    surf = json.loads((tmp_path / "surface.json").read_text())
    assert surf["mode"] == "RefractorAbove"


def test_solve_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("solve", "--scene", SCENES / "symmetric_two_atom.json", "--out", d) == OK
    for f in ("report.json", "assignment.csv", "surface.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_trace(tmp_path):
    assert run("trace", "--scene", SCENES / "five_atom_trace.json", "--out", tmp_path) == OK
    summ = json.loads((tmp_path / "summary.json").read_text())
    assert summ["max_distance"] <= 1e-8 and summ["passed"]
    assert sum(summ["mass_fractions"]) == pytest.approx(1.0)


@pytest.mark.parametrize("scene,verdict", [("regular_graph_check.json", "regular"),
                                           ("plane_check.json", "not_regular")])
def test_check_target(tmp_path, scene, verdict):
    assert run("check-target", "--scene", SCENES / scene, "--out", tmp_path) == OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["criterion"]["verdict"] == verdict and rep["consistent"]
    assert rep["min_condition"]["verdict"] == verdict


def test_check_target_needs_graph(tmp_path):
    assert run("check-target", "--scene", SCENES / "symmetric_two_atom.json",
               "--out", tmp_path) == INVALID


@pytest.mark.parametrize("which", ["fig3", "remark71"])
def test_counterexample(tmp_path, which):
    assert run("counterexample", which, "--out", tmp_path) == OK
    assert json.loads((tmp_path / "report.json").read_text())["passed"]


def test_remark71_bad_b(tmp_path):
    assert run("counterexample", "remark71", "--b", "0.5", "--out", tmp_path) == INVALID


def test_derivatives_check(tmp_path):
    assert run("derivatives-check", "--out", tmp_path) == OK
    rows = (tmp_path / "table.csv").read_text().splitlines()
    assert rows[0] == "kind,n,sample,quantity,rel_err" and len(rows) == 1 + 1600


def test_alpha(capsys):
    assert run("alpha", "--n", 2, "--q", 1) == OK
    assert capsys.readouterr().out.strip() == "0.142857142857"
    assert run("alpha", "--n", 2, "--q", "6/5") == OK
    assert run("alpha", "--n", 2, "--q", 2) == INVALID
    assert run("alpha", "--n", 2, "--q", "abc") == INVALID


def test_experiment_from_scene(tmp_path):
    assert run("experiment", "inclusion", "--scene", SCENES / "experiments.json",
               "--out", tmp_path) == OK
    rep = json.loads((tmp_path / "inclusion.json").read_text())
    assert rep["passed"] and not rep["negative_control"]["holds"]


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        run("nonsense")
    assert e.value.code == INVALID
    assert run("solve", "--scene", tmp_path / "missing.json", "--out", tmp_path) == INVALID
    bad = tmp_path / "bad.json"
    bad.write_text('{"optics": {"kappa": 0.5},\n  oops}')
    assert run("solve", "--scene", bad, "--out", tmp_path) == INVALID
    assert "line 2" in capsys.readouterr().err


def test_infeasible_is_invalid(tmp_path):
    scene = json.loads((SCENES / "symmetric_two_atom.json").read_text())
    scene["target"]["points"] = [[-1.0, 5.0], [40.0, 1.2]]
    p = tmp_path / "far.json"
    p.write_text(json.dumps(scene))
    assert run("solve", "--scene", p, "--out", tmp_path) in (INVALID, FAILED)
