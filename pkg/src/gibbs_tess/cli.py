"""Command-line entry points."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _load(path):
    return json.loads(Path(path).read_text())


def _dump(doc, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, default=float))


def kinetic_solve(argv=None) -> int:
    from .kinetic import solve_kinetic
    from .marks import Kernel

    p = argparse.ArgumentParser(prog="kinetic-solve", description="Evolve a kernel by the kinetic equation.")
    p.add_argument("--input", required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--scheme", default="polygonal", choices=["polygonal", "rk4", "homogeneous-rk4", "homogeneous-euler"])
    p.add_argument("--out", required=True)
    a = p.parse_args(argv)
    sol = solve_kinetic(Kernel.from_json(_load(a.input)), a.T, a.steps, a.scheme)
    _dump(sol.to_json(), a.out)
    return 0


def kinetic_residual_cmd(argv=None) -> int:
    from .kinetic import kinetic_residual
    from .marks import Kernel

    p = argparse.ArgumentParser(prog="kinetic-residual", description="Residual of a stored kernel in the kinetic equation.")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", default="planar", choices=["planar", "system"])
    p.add_argument("--tol", type=float, default=np.inf)
    a = p.parse_args(argv)
    r = kinetic_residual(Kernel.from_json(_load(a.input)), a.mode)
    print(json.dumps({"residual": r, "mode": a.mode}))
    return 0 if r <= a.tol else 1


def forward_solve(argv=None) -> int:
    from .forward import build_ell_box
    from .marks import Kernel

    p = argparse.ArgumentParser(prog="forward-solve", description="Build the one-point marginal on a box.")
    p.add_argument("--kernel", required=True)
    p.add_argument("--ell0", required=True, help="JSON list: density of the boundary mark against the weights")
    p.add_argument("--box", nargs=4, type=float, required=True, metavar=("A_MINUS", "A_PLUS", "T0", "T"))
    p.add_argument("--out", required=True)
    a = p.parse_args(argv)
    f = Kernel.from_json(_load(a.kernel))
    ell0 = _load(a.ell0)
    if isinstance(ell0, dict):
        ell0 = ell0["ell0"]
    am, ap, t0, T = a.box
    if t0 != 0.0:
        raise SystemExit("the box must start at t = 0")
    _dump(build_ell_box(f, ell0, (am, ap, T)).to_json(), a.out)
    return 0


def sample(argv=None) -> int:
    from .forward import MarginalField
    from .marks import Kernel
    from .sampler import run_replicas

    p = argparse.ArgumentParser(prog="sample", description="Simulate independent replicas and write JSON-Lines event logs.")
    p.add_argument("--kernel", required=True)
    p.add_argument("--ell", required=True)
    p.add_argument("--box", nargs=4, type=float, required=True, metavar=("A_MINUS", "A_PLUS", "T0", "T1"))
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", default="thinning", choices=["thinning", "inversion"])
    p.add_argument("--out", required=True)
    a = p.parse_args(argv)
    f = Kernel.from_json(_load(a.kernel))
    ell = MarginalField.from_json(_load(a.ell))
    am, ap, t0, t1 = a.box
    ell0 = ell.at(am, t0)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, tr in enumerate(run_replicas(f, ell, ell0, (am, ap, t0, t1), a.replicas, a.seed, a.method)):
        (out / f"run_{k:06d}.jsonl").write_text("\n".join(json.dumps(r, default=float) for r in tr.to_jsonl()) + "\n")
    return 0


def render(argv=None) -> int:
    from .sampler import trajectory_from_jsonl
    from .tessellation import Tessellation, build_tessellation, render_svg

    p = argparse.ArgumentParser(prog="render", description="Render a tessellation (or a JSON-Lines run) as SVG.")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--legend", action="store_true")
    a = p.parse_args(argv)
    text = Path(a.inp).read_text()
    if a.inp.endswith(".jsonl"):
        tess = build_tessellation(trajectory_from_jsonl([json.loads(x) for x in text.splitlines() if x.strip()]))
    else:
        tess = Tessellation.from_json(json.loads(text))
    Path(a.out).write_text(render_svg(tess, legend=a.legend))
    return 0


def hj_evolve(argv=None) -> int:
    from .kinetic import HamiltonianSpec
    from .tessellation import PLCFunction, hopf_evolve

    p = argparse.ArgumentParser(prog="hj-evolve", description="Hopf evolution of a piecewise-linear convex function.")
    p.add_argument("--g", required=True)
    p.add_argument("--H", required=True, help='JSON {"expression": "rho1**2 + rho2"}')
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--out", required=True)
    a = p.parse_args(argv)
    spec = _load(a.H)
    H = HamiltonianSpec.from_expression(spec["expression"], spec.get("variant", "vH"))
    _dump(hopf_evolve(PLCFunction.from_json(_load(a.g)), H, a.t).to_json(), a.out)
    return 0


def gibbs_tess(argv=None) -> int:
    from .harness import ExperimentConfig, default_config, run_experiment, write_report

    p = argparse.ArgumentParser(prog="gibbs-tess", description="Consistency experiments.")
    sub = p.add_subparsers(dest="cmd", required=True)
    t = sub.add_parser("test")
    t.add_argument("--experiment", required=True, choices=["horizontal", "vertical", "hj", "convergence"])
    t.add_argument("--config")
    t.add_argument("--out")
    al = sub.add_parser("all")
    al.add_argument("--config")
    al.add_argument("--out")
    a = p.parse_args(argv)
    overrides = _load(a.config) if a.config else {}
    names = [a.experiment] if a.cmd == "test" else ["convergence", "horizontal", "vertical", "hj"]
    ok = True
    reports = {}
    for name in names:
        base = default_config(name).to_json()
        keyed = any(k in overrides for k in ("horizontal", "vertical", "hj", "convergence"))
        base.update(overrides.get(name, {}) if keyed else overrides)
        rep = run_experiment(name, ExperimentConfig.from_json(base))
        ok &= rep.passed
        reports[name] = rep
        print(f"{name}: {'PASS' if rep.passed else 'FAIL'} ({len(rep.results)} tests, {rep.runtime:.1f} s)")
    if a.out:
        if len(reports) == 1:
            write_report(next(iter(reports.values())), a.out)
        else:
            _dump({k: r.to_json() for k, r in reports.items()}, a.out)
    return 0 if ok else 1


def _entry(fn):
    def run():
        sys.exit(fn())

    return run


kinetic_solve_main = _entry(kinetic_solve)
kinetic_residual_main = _entry(kinetic_residual_cmd)
forward_solve_main = _entry(forward_solve)
sample_main = _entry(sample)
render_main = _entry(render)
hj_evolve_main = _entry(hj_evolve)
gibbs_tess_main = _entry(gibbs_tess)
