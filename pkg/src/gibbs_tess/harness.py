"""Fixtures, experiment drivers and statistical tests for the particle system."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .forward import MarginalField, build_ell_box, xi_residual
from .kinetic import (
    HamiltonianSpec,
    conservation_defect,
    kinetic_residual,
    shear_pushforward,
    solve_kinetic,
    solve_kinetic_1d,
    tstar,
)
from .marks import Kernel, MarkSet, padded_grid
from .rng import replica_rng
from .sampler import run_replicas, sample_boundary, simulate
from .tessellation import PLCFunction, StepFunction, hopf_evolve, reconstruct_g, slice

# ------------------------------------------------------------ fixtures


@dataclass(frozen=True)
class Fixture:
    """A mark set with a constant initial kernel and a uniform boundary marginal."""

    name: str
    marks: MarkSet
    V_inf: float
    delta0: float
    f0: float
    M0: float

    @property
    def ell0(self) -> np.ndarray:
        return np.full(self.marks.n, 1.0 / self.marks.total_mass)

    @property
    def horizon(self) -> float:
        return tstar(self.V_inf, self.M0, self.delta0)


def fix_a() -> Fixture:
    """Atoms (0,0), (1,0), (2,1): one coagulating triple (sigma = +1)."""
    return Fixture("FIX-A", MarkSet([(0, 0), (1, 0), (2, 1)]), 1.0, 2.0, 2.0, 2.0)


def fix_b() -> Fixture:
    """Atoms (0,0), (1,1), (2,1): one fragmenting triple (sigma = -1)."""
    return Fixture("FIX-B", MarkSet([(0, 0), (1, 1), (2, 1)]), 1.0, 2.0, 2.0, 2.0)


def fix_r0() -> Fixture:
    """Three atoms with every bracket positive and increasing second coordinate."""
    return Fixture("R0", MarkSet([(0, 0), (1, 0.5), (2, 2)]), 2.0, 2.0, 2.0, 2.0)


def fix_convex() -> Fixture:
    """Atoms on the convex increasing graph ``K(m) = m^2``: no fragmentation channel."""
    ms = MarkSet.from_graph(lambda m: m * m, [0.0, 0.5, 1.0, 1.5])
    return Fixture("CONVEX", ms, 3.0, 1.0, 1.0, 1.0)


def fix_geometry() -> Fixture:
    """Five atoms mixing coagulating and fragmenting triples, for geometry checks."""
    ms = MarkSet([(0, 0), (0.5, 0.6), (1, 0.3), (1.5, 1.4), (2, 1)])
    return Fixture("GEOMETRY", ms, 5.0, 1.0, 3.0, 3.0)


def fix_setting12() -> Fixture:
    """Three atoms on the graph of ``K(m) = m``."""
    return Fixture("SETTING12", MarkSet.from_graph(lambda m: m, [0.0, 0.5, 1.0]), 1.0, 2.0, 2.0, 2.0)


FIXTURES = {
    "FIX-A": fix_a,
    "FIX-B": fix_b,
    "R0": fix_r0,
    "CONVEX": fix_convex,
    "GEOMETRY": fix_geometry,
    "SETTING12": fix_setting12,
}


def constant_fields(fx: Fixture, box, value: float | None = None, pad: float = 1.0):
    """Time-independent constant kernel and uniform marginal covering ``box`` plus ``pad``."""
    a_minus, a_plus, t0, t1 = box
    x0, dx, nx = padded_grid(a_minus, a_plus, pad, 8)
    c = fx.f0 if value is None else value
    f = Kernel.constant(fx.marks, c, x0, dx, nx, [t0, t1], fx.V_inf, fx.delta0, box=(a_minus, a_plus))
    ell = MarginalField(fx.marks, x0, dx, nx, [t0, t1], np.broadcast_to(fx.ell0, (2, nx, fx.marks.n)).copy(), box=(a_minus, a_plus))
    return f, ell


# ------------------------------------------------------------ configuration and reports


@dataclass
class ExperimentConfig:
    fixture: str = "FIX-A"
    box: tuple[float, float] = (0.0, 1.0)
    height: float | None = None  # default: half the fixture horizon
    replicas: int = 20_000
    seed: int = 1
    z_limit: float = 4.0
    p_floor: float = 1e-3
    steps: int = 400
    cells: int = 40
    bins: int = 5
    slices: tuple[float, ...] = (0.25, 0.5, 0.75)
    margin: float = 0.1
    shear: float = 0.0
    frozen: bool = False
    method: str = "thinning"
    hj_time: float | None = None
    min_samples: int = 1000
    output: str | None = None

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        for k in ("box", "slices"):
            if k in doc:
                doc[k] = tuple(doc[k])
        return cls(**doc)


@dataclass
class TestResult:
    __test__ = False  # not a pytest class

    name: str
    statistic: float
    threshold: float
    passed: bool
    n: int = 0
    detail: dict = field(default_factory=dict)
    bound: str = "max"  # "max": statistic <= threshold passes; "min": statistic >= threshold

    @property
    def severity(self) -> float:
        if self.bound == "min":
            return self.threshold / self.statistic if self.statistic > 0 else math.inf
        return self.statistic / self.threshold if self.threshold else self.statistic


@dataclass
class TestReport:
    __test__ = False

    experiment: str
    results: list[TestResult] = field(default_factory=list)
    sizes: dict = field(default_factory=dict)
    runtime: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def worst(self, prefix: str) -> TestResult | None:
        rs = [r for r in self.results if r.name.startswith(prefix)]
        return max(rs, key=lambda r: r.severity, default=None)

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "passed": self.passed,
            "runtime": self.runtime,
            "sizes": self.sizes,
            "notes": self.notes,
            "results": [asdict(r) for r in self.results],
        }

    def extend(self, other: "TestReport") -> None:
        self.results.extend(other.results)
        self.notes.extend(other.notes)


class InsufficientSamplesError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


# ------------------------------------------------------------ jump-rate fitting


@dataclass
class LineModel:
    """Predicted rates and marginal along one slice line.

    ``rate(pos)`` returns the ``(N, N)`` matrix of jump rates (already
    multiplied by the weight of the target mark) and ``marginal(pos)`` the
    probability vector of the current mark.
    """

    rate: object
    marginal: object
    lo: float
    hi: float
    marks: MarkSet


def horizontal_model(f: Kernel, ell: MarginalField | None, t: float, span) -> LineModel:
    w = f.marks.weights
    return LineModel(
        lambda x: f.at(x, t) * w[None, :],
        (lambda x: ell.at(x, t) * w) if ell is not None else None,
        span[0], span[1], f.marks,
    )


def vertical_model(f: Kernel, ell: MarginalField | None, x: float, span, speed: np.ndarray | None = None) -> LineModel:
    w = f.marks.weights
    a = f.marks.alpha_matrix if speed is None else speed
    return LineModel(
        lambda t: a * f.at(x, t) * w[None, :],
        (lambda t: ell.at(x, t) * w) if ell is not None else None,
        span[0], span[1], f.marks,
    )


def _cumulative(model: LineModel, n: int = 2001):
    s = np.linspace(model.lo, model.hi, n)
    R = np.array([model.rate(p) for p in s])
    C = np.concatenate([np.zeros((1,) + R.shape[1:]), np.cumsum(0.5 * (R[1:] + R[:-1]) * np.diff(s)[:, None, None], axis=0)])
    return s, C


def _interp_c(s, C, p):
    k = int(np.clip(np.searchsorted(s, p) - 1, 0, len(s) - 2))
    lam = (p - s[k]) / (s[k + 1] - s[k])
    return C[k] + lam * (C[k + 1] - C[k])


def fit_jump_rates(
    slices: list[StepFunction],
    model: LineModel,
    bins: int = 5,
    z_limit: float = 4.0,
    p_floor: float = 1e-3,
    min_expected: float = 25.0,
    min_samples: int = 1000,
    label: str = "",
) -> TestReport:
    """Marginal, intensity and lag-correlation tests for step functions along one line.

    Bins split ``[model.lo, model.hi]`` evenly.  The marginal test compares the
    mark at each bin centre with ``model.marginal`` (chi-square, categories with
    expected count below 5 pooled).  The intensity test compares the number of
    ``i -> j`` jumps in each bin with its compensator: the occupation time of
    ``i`` integrated against the predicted rate (normal z, cells with expected
    count below ``min_expected`` pooled within the bin, then across bins).  The
    lag test correlates compensated counts of adjacent bins across replicas.
    """
    n_rep = len(slices)
    if n_rep < min_samples:
        raise InsufficientSamplesError(f"{n_rep} slices < {min_samples}")
    rep = TestReport("fit" + (f":{label}" if label else ""))
    N = model.marks.n
    edges = np.linspace(model.lo, model.hi, bins + 1)
    s, C = _cumulative(model)
    obs = np.zeros((bins, N, N))
    comp = np.zeros((bins, N, N))
    per_rep = np.zeros((n_rep, bins))
    centers = 0.5 * (edges[1:] + edges[:-1])
    counts = np.zeros((bins, N))
    for r, sf in enumerate(slices):
        bps = np.array(sf.breakpoints)
        labs = sf.labels
        for b, c in enumerate(centers):
            counts[b, labs[int(np.searchsorted(bps, c, side="right"))]] += 1
        for pos, i, j in sf.jumps():
            if model.lo <= pos < model.hi:
                b = min(int(np.searchsorted(edges, pos, side="right")) - 1, bins - 1)
                obs[b, i, j] += 1
                per_rep[r, b] += 1
        pieces = np.concatenate([[-np.inf], bps, [np.inf]])
        for k, lab in enumerate(labs):
            lo = max(pieces[k], model.lo)
            hi = min(pieces[k + 1], model.hi)
            if hi <= lo:
                continue
            for b in range(bins):
                u, v = max(lo, edges[b]), min(hi, edges[b + 1])
                if v > u:
                    d = _interp_c(s, C, v)[lab] - _interp_c(s, C, u)[lab]
                    comp[b, lab] += d
                    per_rep[r, b] -= d.sum()
    # marginal chi-square per bin
    if model.marginal is not None:
        for b, c in enumerate(centers):
            p = np.clip(model.marginal(c), 0, None)
            p = p / p.sum()
            exp = p * n_rep
            o = counts[b]
            big = exp >= 5
            ob = list(o[big]) + ([o[~big].sum()] if (~big).any() else [])
            eb = list(exp[big]) + ([exp[~big].sum()] if (~big).any() else [])
            if len(ob) < 2:
                pval = 1.0
            else:
                eb = np.array(eb) * (sum(ob) / sum(eb))
                pval = float(stats.chisquare(ob, eb).pvalue)
            rep.results.append(TestResult(f"marginal[{label}b{b}]", pval, p_floor, pval >= p_floor, n_rep,
                                          {"observed": o.tolist(), "expected": exp.tolist()}, "min"))
    # intensity z per pooled cell
    leftover_o = leftover_e = 0.0
    for b in range(bins):
        pool_o = pool_e = 0.0
        for i in range(N):
            for j in range(i + 1, N):
                e = comp[b, i, j]
                o = obs[b, i, j]
                if e <= 0 and o == 0:
                    continue
                if e >= min_expected:
                    z = (o - e) / math.sqrt(e)
                    rep.results.append(TestResult(f"intensity[{label}b{b}:{i}->{j}]", abs(z), z_limit, abs(z) <= z_limit, int(o),
                                                  {"observed": o, "expected": e, "z": z}))
                else:
                    pool_o += o
                    pool_e += e
        if pool_e >= min_expected:
            z = (pool_o - pool_e) / math.sqrt(pool_e)
            rep.results.append(TestResult(f"intensity[{label}b{b}:pooled]", abs(z), z_limit, abs(z) <= z_limit, int(pool_o),
                                          {"observed": pool_o, "expected": pool_e, "z": z}))
        else:
            leftover_o += pool_o
            leftover_e += pool_e
    if leftover_e >= 5:
        z = (leftover_o - leftover_e) / math.sqrt(leftover_e)
        rep.results.append(TestResult(f"intensity[{label}pooled]", abs(z), z_limit, abs(z) <= z_limit, int(leftover_o),
                                      {"observed": leftover_o, "expected": leftover_e, "z": z}))
    elif leftover_o > 0 and leftover_e < 1e-12:
        rep.results.append(TestResult(f"intensity[{label}pooled]", math.inf, z_limit, False, int(leftover_o),
                                      {"observed": leftover_o, "expected": leftover_e}))
    # lag test on compensated counts of adjacent bins
    for b in range(bins - 1):
        if min(comp[b].sum(), comp[b + 1].sum()) < min_expected:
            rep.notes.append(f"lag[{label}b{b}] skipped: fewer than {min_expected:g} expected jumps per bin")
            continue
        prod = per_rep[:, b] * per_rep[:, b + 1]
        den = math.sqrt(float((prod * prod).sum()))
        if den > 0:
            # self-normalized sum of products of martingale increments
            z = float(prod.sum()) / den
            rep.results.append(TestResult(f"lag[{label}b{b}]", abs(z), z_limit, abs(z) <= z_limit, n_rep, {"z": z}))
    rep.sizes = {"replicas": n_rep, "jumps": int(obs.sum()), "compensator": float(comp.sum())}
    return rep


# ------------------------------------------------------------ experiment plumbing


@dataclass
class Prepared:
    fixture: Fixture
    f: Kernel
    ell: MarginalField
    box: tuple[float, float, float, float]


def prepare(cfg: ExperimentConfig) -> Prepared:
    """Solve the kinetic equation over the box and build the matching marginal."""
    fx = FIXTURES[cfg.fixture]()
    a_minus, a_plus = cfg.box
    T = cfg.height if cfg.height is not None else fx.horizon / 2
    c = cfg.shear
    if cfg.frozen:
        x0, dx, nx = padded_grid(a_minus, a_plus, fx.V_inf * T, cfg.cells)
        f = Kernel.constant(fx.marks, fx.f0, x0, dx, nx, np.linspace(0, T, cfg.steps + 1), fx.V_inf, fx.delta0, box=(a_minus, a_plus))
    else:
        x0, dx, nx = padded_grid(a_minus, a_plus, (fx.V_inf + abs(c)) * T, cfg.cells)
        h = Kernel.constant(fx.marks, fx.f0, x0, dx, nx, [0.0], fx.V_inf, fx.delta0, box=(a_minus, a_plus))
        f = solve_kinetic(h, T, cfg.steps)
        if c:
            f = shear_pushforward(f, c)
    ell = build_ell_box(f, fx.ell0, (a_minus, a_plus, T))
    return Prepared(fx, f, ell, (a_minus, a_plus, 0.0, T))


def simulate_replicas(prep: Prepared, n: int, seed: int, method: str = "thinning"):
    return list(run_replicas(prep.f, prep.ell, prep.fixture.ell0, prep.box, n, seed, method))


def _interior(lo: float, hi: float, margin: float) -> tuple[float, float]:
    d = hi - lo
    return lo + margin * d, hi - margin * d


def run_consistency_horizontal(cfg: ExperimentConfig, trajectories=None, prep: Prepared | None = None) -> TestReport:
    """Horizontal slices at interior times against the kinetic and forward solutions."""
    t_start = time.perf_counter()
    prep = prep or prepare(cfg)
    trajs = trajectories if trajectories is not None else simulate_replicas(prep, cfg.replicas, cfg.seed, cfg.method)
    a_minus, a_plus, t0, t1 = prep.box
    span = _interior(a_minus, a_plus, cfg.margin)
    rep = TestReport("horizontal")
    for frac in cfg.slices:
        t = t0 + frac * (t1 - t0)
        sl = [slice(tr, "horizontal", t) for tr in trajs]
        rep.extend(fit_jump_rates(sl, horizontal_model(prep.f, prep.ell, t, span), cfg.bins, cfg.z_limit, cfg.p_floor,
                                  min_samples=cfg.min_samples, label=f"t={t:.5g}:"))
    rep.sizes = {"replicas": len(trajs), "events": int(sum(len(tr.events) for tr in trajs))}
    rep.runtime = time.perf_counter() - t_start
    return rep


def _check_plus_support(f: Kernel) -> None:
    m = f.marks
    supp = (f.values > 0).any(axis=(0, 1))
    d2 = m.rho[None, :, 1] - m.rho[:, None, 1]
    if np.any(m.alpha_matrix[supp] <= 0) or np.any(d2[supp] < 0):
        raise ConfigurationError("kernel is not supported in the plus cone")


def run_consistency_vertical(cfg: ExperimentConfig, trajectories=None, prep: Prepared | None = None) -> TestReport:
    """Vertical slices at interior positions against ``alpha f`` and the marginal."""
    t_start = time.perf_counter()
    prep = prep or prepare(cfg)
    _check_plus_support(prep.f)
    trajs = trajectories if trajectories is not None else simulate_replicas(prep, cfg.replicas, cfg.seed, cfg.method)
    a_minus, a_plus, t0, t1 = prep.box
    span = _interior(t0, t1, cfg.margin)
    rep = TestReport("vertical")
    for frac in cfg.slices:
        x = a_minus + frac * (a_plus - a_minus)
        sl = [slice(tr, "vertical", x) for tr in trajs]
        rep.extend(fit_jump_rates(sl, vertical_model(prep.f, prep.ell, x, span), cfg.bins, cfg.z_limit, cfg.p_floor,
                                  min_samples=cfg.min_samples, label=f"x={x:.3g}:"))
    rep.sizes = {"replicas": len(trajs), "events": int(sum(len(tr.events) for tr in trajs))}
    rep.runtime = time.perf_counter() - t_start
    return rep


# ------------------------------------------------------------ Hamilton-Jacobi experiment


def envelope_slice(slopes: np.ndarray, offsets: np.ndarray, lo: float, hi: float) -> tuple[list[float], list[int]]:
    """Right-continuous argmax of the lines ``slopes * s + offsets`` on ``[lo, hi)``."""
    vals = slopes * lo + offsets
    top = vals.max()
    cands = np.flatnonzero(vals >= top - 1e-12 * max(1.0, abs(top)))
    cur = int(cands[np.argmax(slopes[cands])])
    bps, labs = [], [cur]
    pos = lo
    while True:
        best_s, best_k = math.inf, None
        for k in range(len(slopes)):
            if slopes[k] > slopes[cur]:
                s = (offsets[cur] - offsets[k]) / (slopes[k] - slopes[cur])
                if s > pos - 1e-15 and (s < best_s - 1e-15 or (abs(s - best_s) <= 1e-15 and slopes[k] > slopes[best_k])):
                    best_s, best_k = s, k
        if best_k is None or best_s >= hi:
            return bps, labs
        bps.append(float(best_s))
        labs.append(best_k)
        cur, pos = best_k, best_s


def _plc_index(g: PLCFunction, marks: MarkSet) -> np.ndarray:
    return np.array([marks.index(m) for m in g.marks])


def hj_slice_x(g: PLCFunction, marks: MarkSet, x2: float, lo: float, hi: float) -> StepFunction:
    S = g.slopes
    bps, labs = envelope_slice(S[:, 0], x2 * S[:, 1] - g.intercepts, lo, hi)
    idx = _plc_index(g, marks)
    return StepFunction("horizontal", x2, tuple(bps), tuple(int(idx[k]) for k in labs))


def hj_slice_t(g0: PLCFunction, H: HamiltonianSpec, marks: MarkSet, x, lo: float, hi: float) -> StepFunction:
    S = g0.slopes
    hv = np.array([H(m) for m in g0.marks])
    bps, labs = envelope_slice(hv, S @ np.asarray(x, dtype=float) - g0.intercepts, lo, hi)
    idx = _plc_index(g0, marks)
    return StepFunction("vertical", float(x[0]), tuple(bps), tuple(int(idx[k]) for k in labs))


def run_hj_invariance(cfg: ExperimentConfig, H: HamiltonianSpec | None = None) -> TestReport:
    """Hopf-evolved Gibbs fields against the one-dimensional kinetic flow.

    The planar field is sampled on an enlarged window so the Hopf solution on
    the test lines only depends on sampled cells.  x1-slices at the final time
    are tested against the evolved kernel, t-slices at fixed points against
    ``v^H`` times the evolved kernel.
    """
    t_start = time.perf_counter()
    fx = FIXTURES[cfg.fixture]()
    K = fx.marks.K
    if K is None:
        raise ConfigurationError("fixture marks must lie on the graph of an increasing function")
    r1 = fx.marks.rho[:, 0]
    if np.any(np.diff([K(v) for v in r1]) <= 0):
        raise ConfigurationError("K must be strictly increasing")
    H = H or HamiltonianSpec.from_expression("rho1**2 + rho2")
    a_minus, a_plus = cfg.box
    pad = 0.5 * (a_plus - a_minus)
    x2_test = 0.5
    win = (a_minus - pad, a_plus + pad, 0.0, 2 * x2_test)
    hv = H.values(fx.marks)
    speed = H.velocity_matrix(fx.marks)
    vmax = float(np.abs(speed[fx.marks.upper]).max())
    horizon_1d = tstar(vmax, fx.M0, fx.delta0)
    t_end = cfg.hj_time if cfg.hj_time is not None else 0.5 * horizon_1d
    f, ell = constant_fields(fx, win, pad=1.0)
    # predicted one-dimensional kernel along x1, then along t
    x0, dx, nx = padded_grid(a_minus, a_plus, vmax * t_end, 8)
    h = Kernel.constant(fx.marks, fx.f0, x0, dx, nx, [0.0], fx.V_inf, fx.delta0, box=(a_minus, a_plus))
    fhat = solve_kinetic_1d(h, H, t_end, cfg.steps) if t_end > 0 else h
    w = fx.marks.weights
    span_x = _interior(a_minus, a_plus, cfg.margin)
    slices_x, slices_t = [], {frac: [] for frac in cfg.slices}
    for r in range(cfg.replicas):
        rng = replica_rng(cfg.seed, r)
        q0 = sample_boundary(f, fx.ell0, win[2], win[:2], rng)
        tr = simulate(q0, f, ell, win[2:], rng, box=win[:2], method=cfg.method)
        g0, _ = reconstruct_g(tr)
        gt = hopf_evolve(g0, H, t_end)
        slices_x.append(hj_slice_x(gt, fx.marks, x2_test, a_minus, a_plus))
        for frac in cfg.slices:
            x1 = a_minus + frac * (a_plus - a_minus)
            slices_t[frac].append(hj_slice_t(g0, H, fx.marks, (x1, x2_test), 0.0, t_end))
    rep = TestReport("hj")
    model_x = LineModel(lambda x: fhat.at(x, t_end) * w[None, :], None, span_x[0], span_x[1], fx.marks)
    rep.extend(fit_jump_rates(slices_x, model_x, cfg.bins, cfg.z_limit, cfg.p_floor, min_samples=cfg.min_samples, label="x1:"))
    if t_end > 0:
        span_t = _interior(0.0, t_end, cfg.margin)
        for frac, sl in slices_t.items():
            x1 = a_minus + frac * (a_plus - a_minus)
            model_t = LineModel(lambda t, x1=x1: speed * fhat.at(x1, t) * w[None, :], None, span_t[0], span_t[1], fx.marks)
            rep.extend(fit_jump_rates(sl, model_t, cfg.bins, cfg.z_limit, cfg.p_floor, min_samples=cfg.min_samples,
                                      label=f"t@x1={x1:.3g}:"))
    rep.notes.append(
        "right boundary: the planar sampler's right-wall creations on an enlarged window, evolved by the Hopf formula"
    )
    rep.sizes = {"replicas": cfg.replicas, "t": t_end, "horizon_1d": horizon_1d, "H": hv.tolist()}
    rep.runtime = time.perf_counter() - t_start
    return rep


# ------------------------------------------------------------ solver convergence


def run_appendix_convergence(cfg: ExperimentConfig, ns=(100, 200, 400, 800)) -> TestReport:
    """Refinement study of the polygonal scheme plus bounds of the staged marginal."""
    t_start = time.perf_counter()
    fx = FIXTURES[cfg.fixture]()
    a_minus, a_plus = cfg.box
    T = cfg.height if cfg.height is not None else fx.horizon
    x0, dx, nx = padded_grid(a_minus, a_plus, fx.V_inf * T, cfg.cells)
    h = Kernel.constant(fx.marks, fx.f0, x0, dx, nx, [0.0], fx.V_inf, fx.delta0, box=(a_minus, a_plus))
    sols = {n: solve_kinetic(h, T, n) for n in ns}
    rep = TestReport("convergence")
    diffs = [float(np.abs(sols[a].values[-1] - sols[b].values[-1]).max()) for a, b in zip(ns, ns[1:])]
    for k in range(len(diffs) - 1):
        r = diffs[k] / diffs[k + 1] if diffs[k + 1] > 0 else math.inf
        rep.results.append(TestResult(f"ratio[{ns[k]}:{ns[k + 1]}:{ns[k + 2]}]", r, 2.4, 1.6 <= r <= 2.4, 0, {"diffs": diffs}))
    cone = fx.marks.cone_mask(fx.V_inf)
    fine = sols[ns[-1]]
    lo = float(fine.values[..., cone].min())
    hi = float(fine.values.max())
    rep.results.append(TestResult("floor", lo, fx.delta0 / 2, lo >= fx.delta0 / 2, bound="min"))
    rep.results.append(TestResult("ceiling", hi, 2 * fx.M0, hi <= 2 * fx.M0))
    off = float(np.abs(fine.values[..., ~cone]).max()) if (~cone).any() else 0.0
    rep.results.append(TestResult("support", off, 0.0, off == 0.0))
    cons = max(conservation_defect(F, fx.marks.weights, fx.marks.alpha_matrix) for F in fine.values.reshape(-1, fx.marks.n, fx.marks.n))
    rep.results.append(TestResult("conservation", cons, 1e-12, cons <= 1e-12))
    res = [kinetic_residual(sols[n]) for n in ns]
    rep.results.append(TestResult("residual_decay", res[-1], res[0], res[-1] <= res[0] + 1e-14, 0, {"residuals": res}))
    ell = build_ell_box(fine, fx.ell0, (a_minus, a_plus, T))
    rep.results.append(TestResult("ell_mass", ell.mass_defect(), 1e-8, ell.mass_defect() <= 1e-8))
    flo = ell.declared_floor if ell.declared_floor is not None else 0.0
    rep.results.append(TestResult("ell_floor", ell.floor, flo, ell.floor >= flo and ell.floor > 0, bound="min"))
    rep.results.append(TestResult("xi", xi_residual(fine, ell), math.inf, True))
    rep.sizes = {"ns": list(ns), "T": T}
    rep.runtime = time.perf_counter() - t_start
    return rep


def write_report(rep: TestReport, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(rep.to_json(), indent=2, default=float))


def default_config(experiment: str) -> ExperimentConfig:
    if experiment == "vertical":
        return ExperimentConfig(fixture="R0")
    if experiment == "hj":
        return ExperimentConfig(fixture="SETTING12", replicas=10_000)
    if experiment == "convergence":
        return ExperimentConfig(fixture="FIX-A", cells=40)
    return ExperimentConfig()


def run_experiment(name: str, cfg: ExperimentConfig) -> TestReport:
    runners = {
        "horizontal": run_consistency_horizontal,
        "vertical": run_consistency_vertical,
        "hj": run_hj_invariance,
        "convergence": run_appendix_convergence,
    }
    if name not in runners:
        raise ValueError(f"unknown experiment {name!r}")
    return runners[name](cfg)
