import json

import numpy as np
import pytest

from gibbs_tess import cli
from gibbs_tess.marks import Kernel, MarkSet
from gibbs_tess.tessellation import PLCFunction


@pytest.fixture
def workdir(tmp_path):
    ms = MarkSet([(0, 0), (1, 0), (2, 1)])
    k = Kernel.constant(ms, 2.0, -0.5, 0.05, 41, [0.0], 1.0, 2.0, box=(0.0, 1.0))
    (tmp_path / "h.json").write_text(json.dumps(k.to_json()))
    (tmp_path / "ell0.json").write_text(json.dumps([1 / 3] * 3))
    return tmp_path


def test_pipeline(workdir):
    d = workdir
    assert cli.kinetic_solve(["--input", str(d / "h.json"), "--T", "0.005", "--steps", "50", "--out", str(d / "f.json")]) == 0
    assert cli.kinetic_residual_cmd(["--input", str(d / "f.json"), "--tol", "1e-3"]) == 0
    assert cli.forward_solve(["--kernel", str(d / "f.json"), "--ell0", str(d / "ell0.json"), "--box", "0", "1", "0", "0.005",
                              "--out", str(d / "ell.json")]) == 0
    assert cli.sample(["--kernel", str(d / "f.json"), "--ell", str(d / "ell.json"), "--box", "0", "1", "0", "0.005",
                       "--replicas", "3", "--seed", "4", "--out", str(d / "runs")]) == 0
    runs = sorted((d / "runs").glob("*.jsonl"))
    assert len(runs) == 3
    assert cli.render(["--in", str(runs[0]), "--out", str(d / "t.svg"), "--legend"]) == 0
    assert (d / "t.svg").read_text().startswith("<svg")


def test_residual_tolerance_exit_code(workdir):
    d = workdir
    ms = MarkSet([(0, 0), (1, 0), (2, 1)])
    vals = np.random.default_rng(0).uniform(1, 3, (3, 41, 3, 3)) * ms.upper
    k = Kernel(ms, -0.5, 0.05, 41, [0.0, 0.001, 0.002], vals, 1.0, 2.0, box=(0.0, 1.0))
    (d / "bad.json").write_text(json.dumps(k.to_json()))
    assert cli.kinetic_residual_cmd(["--input", str(d / "bad.json"), "--tol", "1e-3"]) == 1


def test_hj_evolve(tmp_path):
    g = PLCFunction(MarkSet([(0, 0), (1, 0)]).atoms, [0.0, 0.0])
    (tmp_path / "g.json").write_text(json.dumps(g.to_json()))
    (tmp_path / "H.json").write_text(json.dumps({"expression": "rho1**2"}))
    assert cli.hj_evolve(["--g", str(tmp_path / "g.json"), "--H", str(tmp_path / "H.json"), "--t", "0.3",
                          "--out", str(tmp_path / "u.json")]) == 0
    u = PLCFunction.from_json(json.loads((tmp_path / "u.json").read_text()))
    assert u.intercepts.tolist() == pytest.approx([0.0, -0.3])


def test_gibbs_tess_convergence(tmp_path):
    out = tmp_path / "rep.json"
    assert cli.gibbs_tess(["test", "--experiment", "convergence", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["passed"]
