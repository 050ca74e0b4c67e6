"""Space-time geometry of trajectories: cells, edges, vertices and height functions.

Points are ``(x1, x2) = (x, t)``.  A cell is the region where the mark is
constant; on a cell the height function is ``g(x) = x . rho - g*(rho)``.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .kinetic import HamiltonianSpec
from .marks import GEOM_TOL, Mark, MarkSet
from .sampler import Trajectory

MERGE_TOL = 1e-9
EVENT_TIE = 1e-12
TIE_SHIFT = 1e-10


class CorruptionError(ValueError):
    pass


class NonGradientError(ValueError):
    pass


class InconclusiveDomainWarning(UserWarning):
    pass


# ------------------------------------------------------------ polygon helpers


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_halfplane(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Keep the part of a convex polygon where ``p . normal >= offset``."""
    if len(poly) == 0:
        return poly
    out = []
    s = poly @ normal - offset
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        sp, sq = s[k], s[(k + 1) % n]
        if sp >= 0:
            out.append(p)
        if (sp >= 0) != (sq >= 0):
            lam = sp / (sp - sq)
            out.append(p + lam * (q - p))
    return np.array(out) if out else np.zeros((0, 2))


def _rect(window) -> np.ndarray:
    x0, x1, t0, t1 = window
    return np.array([[x0, t0], [x1, t0], [x1, t1], [x0, t1]], dtype=float)


def _point_polygon_distance(p: np.ndarray, poly: np.ndarray) -> float:
    """Distance from ``p`` to a counter-clockwise convex polygon (0 inside)."""
    n = len(poly)
    inside = True
    best = math.inf
    for k in range(n):
        a, b = poly[k], poly[(k + 1) % n]
        e = b - a
        if e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0]) < -1e-15:
            inside = False
        ee = float(e @ e)
        lam = 0.0 if ee == 0 else min(max(float((p - a) @ e) / ee, 0.0), 1.0)
        best = min(best, float(np.linalg.norm(p - (a + lam * e))))
    return 0.0 if inside else best


def polygon_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Hausdorff distance between convex polygons (attained at vertices)."""
    if len(a) == 0 or len(b) == 0:
        return 0.0 if len(a) == len(b) else math.inf
    return max(
        max(_point_polygon_distance(p, b) for p in a),
        max(_point_polygon_distance(p, a) for p in b),
    )


def _ccw(poly: np.ndarray) -> np.ndarray:
    return poly[::-1] if polygon_area(poly) < 0 else poly


# ------------------------------------------------------------ data types


@dataclass(frozen=True)
class Edge:
    pair: tuple[Mark, Mark]  # (left/lower mark, right/upper mark) in the order of rho1
    p: tuple[float, float]
    q: tuple[float, float]

    @property
    def length(self) -> float:
        return math.dist(self.p, self.q)

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (np.array(self.p) + np.array(self.q))


@dataclass(frozen=True)
class Vertex:
    point: tuple[float, float]
    marks: tuple[Mark, ...]
    degree: int
    boundary: bool
    kind: str = "vertex"  # coag | frag | vertex


@dataclass
class Tessellation:
    cells: list[tuple[Mark, np.ndarray]]
    edges: list[Edge]
    vertices: list[Vertex]
    window: tuple[float, float, float, float]

    @property
    def interior_vertices(self) -> list[Vertex]:
        return [v for v in self.vertices if not v.boundary]

    @property
    def euler_characteristic(self) -> int:
        """``V - E + F`` over interior vertices, interior edges and cells (1 for a tiling)."""
        return len(self.interior_vertices) - len(self.edges) + len(self.cells)

    def cell(self, mark) -> np.ndarray | None:
        for m, poly in self.cells:
            if m == mark:
                return poly
        return None

    def to_json(self) -> dict:
        return {
            "window": list(self.window),
            "cells": [{"mark": list(m), "polygon": poly.tolist()} for m, poly in self.cells],
            "edges": [{"pair": [list(e.pair[0]), list(e.pair[1])], "p": list(e.p), "q": list(e.q)} for e in self.edges],
            "vertices": [
                {"point": list(v.point), "marks": [list(m) for m in v.marks], "degree": v.degree,
                 "boundary": v.boundary, "kind": v.kind}
                for v in self.vertices
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Tessellation":
        cells = [(Mark(*c["mark"]), np.array(c["polygon"], dtype=float).reshape(-1, 2)) for c in doc["cells"]]
        edges = [Edge((Mark(*e["pair"][0]), Mark(*e["pair"][1])), tuple(e["p"]), tuple(e["q"])) for e in doc["edges"]]
        verts = [
            Vertex(tuple(v["point"]), tuple(Mark(*m) for m in v["marks"]), v["degree"], v["boundary"], v.get("kind", "vertex"))
            for v in doc["vertices"]
        ]
        return cls(cells, edges, verts, tuple(doc["window"]))


def _on_boundary(p, window, tol=MERGE_TOL) -> bool:
    x0, x1, t0, t1 = window
    return abs(p[0] - x0) <= tol or abs(p[0] - x1) <= tol or abs(p[1] - t0) <= tol or abs(p[1] - t1) <= tol


def _assemble_vertices(edges: list[Edge], window, kinds: dict | None = None) -> list[Vertex]:
    """Cluster edge endpoints at ``MERGE_TOL`` and record incident marks and degree."""
    reps: list[np.ndarray] = []
    inc: list[list[Edge]] = []
    for e in edges:
        for p in (e.p, e.q):
            pa = np.array(p)
            for k, r in enumerate(reps):
                if np.max(np.abs(r - pa)) <= MERGE_TOL:
                    inc[k].append(e)
                    break
            else:
                reps.append(pa)
                inc.append([e])
    out = []
    for r, es in zip(reps, inc):
        ms = sorted({m for e in es for m in e.pair}, key=lambda m: (m.rho1, m.rho2))
        kind = "vertex"
        if kinds:
            for (px, pt), kd in kinds.items():
                if abs(px - r[0]) <= 1e-7 and abs(pt - r[1]) <= 1e-7:
                    kind = kd
                    break
        out.append(Vertex((float(r[0]), float(r[1])), tuple(ms), len(es), _on_boundary(r, window), kind))
    return out


# ------------------------------------------------------------ from a trajectory


def _paths(traj: Trajectory):
    """Yield ``(t_a, t_b, z_a, z_b, labels)`` for every inter-event interval of positive length."""
    snaps = traj.snapshots
    t_end = traj.box[3]
    for k, s in enumerate(snaps):
        tb = snaps[k + 1].t if k + 1 < len(snaps) else t_end
        if tb - s.t <= 0:
            continue
        v = s.velocities(traj.marks)
        za = np.array(s.z)
        zb = za + v * (tb - s.t)
        yield s.t, tb, za, zb, s.labels


def build_tessellation(traj: Trajectory, window=None) -> Tessellation:
    """Cells, edges and vertices swept by the particle paths of ``traj``.

    Each cell is assembled from the trapezoids its label occupies between
    consecutive events; the union must be convex, which is checked by area.
    """
    a_minus, a_plus, t0, t1 = traj.box
    window = tuple(window) if window is not None else (a_minus, a_plus, t0, t1)
    marks = traj.marks
    pts: dict[int, list] = {}
    area: dict[int, float] = {}
    segs: dict[tuple[int, int], list] = {}
    for ta, tb, za, zb, lab in _paths(traj):
        left_a = np.concatenate([[a_minus], za])
        right_a = np.concatenate([za, [a_plus]])
        left_b = np.concatenate([[a_minus], zb])
        right_b = np.concatenate([zb, [a_plus]])
        for k, r in enumerate(lab):
            quad = [(left_a[k], ta), (right_a[k], ta), (right_b[k], tb), (left_b[k], tb)]
            pts.setdefault(r, []).extend(quad)
            area[r] = area.get(r, 0.0) + 0.5 * ((right_a[k] - left_a[k]) + (right_b[k] - left_b[k])) * (tb - ta)
        for i in range(len(za)):
            segs.setdefault((lab[i], lab[i + 1]), []).append(((za[i], ta), (zb[i], tb)))
    cells = []
    for r in sorted(pts):
        if area[r] <= 1e-14:
            continue
        P = np.unique(np.array(pts[r]), axis=0)
        try:
            hull = ConvexHull(P)
        except Exception as exc:  # degenerate sliver
            raise CorruptionError(f"cell of atom {r} is degenerate") from exc
        poly = P[hull.vertices]
        if abs(hull.volume - area[r]) > 1e-6 * max(1.0, area[r]) + 1e-9:
            raise CorruptionError(f"cell of atom {r} is not convex (area {area[r]} vs hull {hull.volume})")
        cells.append((marks.atoms[r], _ccw(poly)))
    edges = []
    for (i, j), ss in sorted(segs.items()):
        ends = [p for s in ss for p in s]
        lo = min(ends, key=lambda p: p[1])
        hi = max(ends, key=lambda p: p[1])
        if hi[1] - lo[1] <= 0:
            continue
        edges.append(Edge((marks.atoms[i], marks.atoms[j]), (float(lo[0]), float(lo[1])), (float(hi[0]), float(hi[1]))))
    kinds = {(e.z, e.t): e.kind for e in traj.events if e.kind in ("coag", "frag")}
    return Tessellation(cells, edges, _assemble_vertices(edges, window, kinds), window)


# ------------------------------------------------------------ validation


@dataclass
class GenericReport:
    checks: dict[str, tuple[bool, float]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(p for p, _ in self.checks.values())

    def to_json(self) -> dict:
        return {k: {"pass": p, "slack": s} for k, (p, s) in self.checks.items()}


def validate_generic(tess: Tessellation, tol: float = MERGE_TOL) -> GenericReport:
    """Tiling, convex cells, edge orthogonality and orientation, degree-3 vertices."""
    rep = GenericReport()
    x0, x1, t0, t1 = tess.window
    wa = (x1 - x0) * (t1 - t0)
    tot = sum(abs(polygon_area(p)) for _, p in tess.cells)
    rep.checks["tiling"] = (abs(tot - wa) <= 1e-6 * wa, abs(tot - wa) / wa)
    worst = 0.0
    for _, p in tess.cells:
        n = len(p)
        for k in range(n):
            a, b, c = p[k], p[(k + 1) % n], p[(k + 2) % n]
            cr = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            worst = max(worst, -cr)
    rep.checks["convex_cells"] = (worst <= tol, worst)
    orth = 0.0
    orient = 0.0
    vert = 1.0
    centroids = {m: p.mean(axis=0) for m, p in tess.cells}
    for e in tess.edges:
        d = np.array(e.q) - np.array(e.p)
        L = np.linalg.norm(d)
        if L == 0:
            continue
        diff = e.pair[1] - e.pair[0]
        orth = max(orth, abs(float(d @ diff)) / float(L * np.linalg.norm(diff)))
        vert = min(vert, abs(d[1]) / L)
        m = e.midpoint
        for mk, sgn in ((e.pair[0], -1.0), (e.pair[1], 1.0)):
            if mk in centroids:
                s = sgn * float((centroids[mk] - m) @ diff)
                orient = max(orient, -s)
    rep.checks["orthogonality"] = (orth <= tol, orth)
    rep.checks["orientation"] = (orient <= tol, orient)
    rep.checks["not_horizontal"] = (vert > tol, vert)
    bad = [v for v in tess.interior_vertices if v.degree != 3 or len(v.marks) != 3]
    rep.checks["degree3"] = (not bad, float(len(bad)))
    rep.checks["euler"] = (tess.euler_characteristic == 1, float(tess.euler_characteristic - 1))
    return rep


# ------------------------------------------------------------ slices


@dataclass(frozen=True)
class StepFunction:
    axis: str
    coordinate: float
    breakpoints: tuple[float, ...]
    labels: tuple[int, ...]  # atom indices, one more than breakpoints

    def jumps(self) -> list[tuple[float, int, int]]:
        return [(b, self.labels[k], self.labels[k + 1]) for k, b in enumerate(self.breakpoints)]


def _tie_break(c: float, times) -> float:
    for t in times:
        if abs(c - t) <= EVENT_TIE:
            return c + TIE_SHIFT
    return c


def slice(traj: Trajectory, axis: str, coordinate: float) -> StepFunction:
    """Right-continuous restriction of the mark field to a horizontal or vertical line."""
    a_minus, a_plus, t0, t1 = traj.box
    if axis == "horizontal":
        if not t0 - EVENT_TIE <= coordinate <= t1 + EVENT_TIE:
            raise ValueError("t outside the box")
        t = _tie_break(coordinate, [s.t for s in traj.snapshots[1:]])
        c = traj.config_at(t)
        return StepFunction(axis, coordinate, tuple(c.z), tuple(c.labels))
    if axis != "vertical":
        raise ValueError("axis must be horizontal or vertical")
    x = coordinate
    if not a_minus - EVENT_TIE <= x <= a_plus + EVENT_TIE:
        raise ValueError("x outside the box")
    cand = []
    for ta, tb, za, zb, _ in _paths(traj):
        cand.append(ta)
        for a, b in zip(za, zb):
            if (a - x) * (b - x) < 0:
                cand.append(ta + (x - a) / (b - a) * (tb - ta))
    cand = sorted(set(c for c in cand if t0 < c < t1))
    grid = [t0] + cand + [t1]
    labels = []
    for lo, hi in zip(grid, grid[1:]):
        labels.append(traj.label_at(x, 0.5 * (lo + hi)))
    bps, labs = [], [labels[0]]
    for k, lb in enumerate(labels[1:], start=1):
        if lb != labs[-1]:
            bps.append(grid[k])
            labs.append(lb)
    return StepFunction(axis, coordinate, tuple(bps), tuple(labs))


# ------------------------------------------------------------ height functions


@dataclass
class PLCFunction:
    """``g(x) = max_k (x . rho_k - c_k)`` for marks ``rho_k`` and intercepts ``c_k``."""

    marks: list[Mark]
    intercepts: np.ndarray

    def __post_init__(self):
        self.marks = list(self.marks)
        self.intercepts = np.asarray(self.intercepts, dtype=float)
        if len(self.marks) == 0 or len(self.marks) != len(self.intercepts):
            raise ValueError("need one intercept per mark")

    @property
    def slopes(self) -> np.ndarray:
        return np.array([m.array() for m in self.marks])

    def planes(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ self.slopes.T - self.intercepts

    def __call__(self, x):
        v = self.planes(x).max(axis=-1)
        return float(v[0]) if np.ndim(x) == 1 else v

    def argmax(self, x) -> int:
        return int(np.argmax(self.planes(x)[0]))

    def intercept(self, mark) -> float:
        return float(self.intercepts[self.marks.index(mark)])

    def prune(self, window) -> "PLCFunction":
        """Drop marks whose cell has empty interior inside ``window``."""
        keep = [k for k, (_, poly) in enumerate(_laguerre_polys(self, window)) if abs(polygon_area(poly)) > 1e-14]
        return PLCFunction([self.marks[k] for k in keep], self.intercepts[keep])

    def to_json(self) -> dict:
        return {"marks": [list(m) for m in self.marks], "intercepts": self.intercepts.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "PLCFunction":
        return cls([Mark(*m) for m in doc["marks"]], doc["intercepts"])


@dataclass
class CurlReport:
    max_discrepancy: float
    edges_checked: int


def reconstruct_g(traj_or_tess, base_value: float = 0.0, tol: float = 1e-6) -> tuple[PLCFunction, CurlReport]:
    """Recover intercepts from continuity of ``g`` across every edge.

    Intercepts propagate breadth-first over cell adjacency from the cell at the
    lower-left window corner, where ``g`` is set to ``base_value``.  Every edge
    endpoint is then re-checked; the worst mismatch is the discrete curl.
    """
    tess = build_tessellation(traj_or_tess) if isinstance(traj_or_tess, Trajectory) else traj_or_tess
    cells = [m for m, _ in tess.cells]
    if not cells:
        raise ValueError("empty tessellation")
    corner = np.array([tess.window[0], tess.window[2]])
    start = min(tess.cells, key=lambda c: _point_polygon_distance(corner, c[1]))[0]
    nbr: dict[Mark, list] = {m: [] for m in cells}
    for e in tess.edges:
        a, b = e.pair
        if a in nbr and b in nbr:
            nbr[a].append((b, e))
            nbr[b].append((a, e))
    c = {start: float(corner @ start.array()) - base_value}
    dq = deque([start])
    while dq:
        m = dq.popleft()
        for o, e in nbr[m]:
            if o not in c:
                p = np.array(e.p)
                c[o] = c[m] + float(p @ (o.array() - m.array()))
                dq.append(o)
    missing = [m for m in cells if m not in c]
    if missing:
        raise CorruptionError("cell adjacency graph is disconnected")
    worst = 0.0
    for e in tess.edges:
        a, b = e.pair
        for p in (e.p, e.q):
            pa = np.array(p)
            worst = max(worst, abs((pa @ a.array() - c[a]) - (pa @ b.array() - c[b])))
    if worst > tol:
        raise NonGradientError(f"loop discrepancy {worst:.3e}")
    g = PLCFunction(cells, [c[m] for m in cells])
    return g, CurlReport(worst, len(tess.edges))


def legendre_transform(g: PLCFunction, at=None) -> dict[Mark, float]:
    """Convex conjugate ``g*(rho) = sup_x (x . rho - g(x))`` at the given marks.

    On the convex hull of the slopes the conjugate is the lower convex envelope
    of the points ``(rho_k, c_k)``, computed by linear programming; outside it
    the value is ``+inf``.  ``at`` defaults to the stored marks.
    """
    S = g.slopes
    targets = g.marks if at is None else [m if isinstance(m, Mark) else Mark(*m) for m in at]
    out = {}
    n = len(S)
    A_eq = np.vstack([S.T, np.ones((1, n))])
    for m in targets:
        b_eq = np.array([m.rho1, m.rho2, 1.0])
        res = linprog(g.intercepts, A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * n, method="highs")
        out[m] = float(res.fun) if res.status == 0 else math.inf
    return out


def legendre_inverse(table: dict) -> PLCFunction:
    """``g(x) = sup_rho (x . rho - g*(rho))`` over a finite table."""
    ms = [m if isinstance(m, Mark) else Mark(*m) for m in table]
    return PLCFunction(ms, [float(v) for v in table.values()])


def hopf_evolve(g: PLCFunction, H: HamiltonianSpec, t: float, window=None) -> PLCFunction:
    """Hopf solution at time ``t``: intercepts ``c(rho) - t H(rho)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    out = PLCFunction(g.marks, g.intercepts - t * np.array([H(m) for m in g.marks]))
    return out.prune(window) if window is not None else out


@lru_cache(maxsize=16)
def _conjugate_table(H: HamiltonianSpec, P: tuple[float, float], n_v: int, n_p: int):
    """Discrete Legendre transform ``L(v) = max_p (p . v - H(p))`` on a v-grid, ``p`` in ``P^2``."""
    ps = np.linspace(P[0], P[1], n_p)
    p1, p2 = np.meshgrid(ps, ps, indexing="ij")
    pp = np.stack([p1.ravel(), p2.ravel()], axis=1)
    hp = np.array([H(Mark(*p)) for p in pp])
    # range of gradients of H over the slope box, for the v-grid extent
    hh = hp.reshape(n_p, n_p)
    g1 = np.gradient(hh, ps, axis=0)
    g2 = np.gradient(hh, ps, axis=1)
    lo = np.array([g1.min(), g2.min()])
    hi = np.array([g1.max(), g2.max()])
    pad = 0.05 * np.maximum(hi - lo, 1.0)
    v1 = np.linspace(lo[0] - pad[0], hi[0] + pad[0], n_v)
    v2 = np.linspace(lo[1] - pad[1], hi[1] + pad[1], n_v)
    # the max over p splits as max_p1 [p1 v1 + max_p2 (p2 v2 - H(p1, p2))]
    inner = (v2[None, :, None] * ps[None, None, :] - hh[:, None, :]).max(axis=2)  # (p1, v2)
    L = (v1[:, None, None] * ps[None, None, :] + inner.T[None, :, :]).max(axis=2)  # (v1, v2)
    return v1, v2, L


def hopf_lax_value(g: PLCFunction, H: HamiltonianSpec, x, t: float, y_grid: int = 401, slope_grid: int = 101, P=None) -> float:
    """``sup_y g(y) - t L((y - x)/t)`` by grid search, ``L`` a discrete conjugate of ``H``.

    The search grid is ``y = x + t v`` with ``v`` spanning the gradient range of
    ``H`` over the slope box ``P^2`` (default: the bounding box of the marks).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if P is None:
        S = g.slopes
        P = (float(S.min()), float(S.max()))
    v1, v2, L = _conjugate_table(H, (float(P[0]), float(P[1])), int(y_grid), int(slope_grid))
    x = np.asarray(x, dtype=float)
    Y1 = x[0] + t * v1[:, None]
    Y2 = x[1] + t * v2[None, :]
    pts = np.stack(np.broadcast_arrays(Y1, Y2), axis=-1).reshape(-1, 2)
    vals = g(pts).reshape(L.shape) - t * L
    best = float(vals.max())
    # ties with an interior node are harmless; only a strictly larger rim value is
    if best > float(vals[1:-1, 1:-1].max()) + 1e-12 * max(1.0, abs(best)):
        warnings.warn("supremum attained on the grid boundary", InconclusiveDomainWarning)
    return best


def hopf_lax_spacing(g: PLCFunction, H: HamiltonianSpec, t: float, y_grid: int = 401, slope_grid: int = 101, P=None) -> float:
    """Largest y-grid spacing used by :func:`hopf_lax_value` at time ``t``."""
    if P is None:
        S = g.slopes
        P = (float(S.min()), float(S.max()))
    v1, v2, _ = _conjugate_table(H, (float(P[0]), float(P[1])), int(y_grid), int(slope_grid))
    return float(t * max(v1[1] - v1[0], v2[1] - v2[0]))


# ------------------------------------------------------------ Laguerre cells


def _laguerre_polys(g: PLCFunction, window) -> list[tuple[Mark, np.ndarray]]:
    x0, x1, t0, t1 = window
    if not (x1 > x0 and t1 > t0):
        raise ValueError("empty window")
    S = g.slopes
    c = g.intercepts
    out = []
    for k, m in enumerate(g.marks):
        poly = _rect(window)
        for j in range(len(S)):
            if j == k:
                continue
            poly = clip_halfplane(poly, S[k] - S[j], c[k] - c[j])
            if len(poly) == 0:
                break
        out.append((m, poly))
    return out


def _dedupe(poly: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    if len(poly) == 0:
        return poly
    keep = [poly[0]]
    for p in poly[1:]:
        if np.max(np.abs(p - keep[-1])) > tol:
            keep.append(p)
    if len(keep) > 1 and np.max(np.abs(keep[0] - keep[-1])) <= tol:
        keep.pop()
    return np.array(keep)


def laguerre_cells(g: PLCFunction, window) -> Tessellation:
    """Cells ``{x : x . rho - c(rho) maximal}`` by half-plane clipping of the window."""
    polys = [(m, _ccw(_dedupe(p))) for m, p in _laguerre_polys(g, window)]
    polys = [(m, p) for m, p in polys if len(p) >= 3 and abs(polygon_area(p)) > 1e-14]
    idx = {m: k for k, m in enumerate(g.marks)}
    edges = []
    for a in range(len(polys)):
        for b in range(a + 1, len(polys)):
            ma, pa = polys[a]
            mb, pb = polys[b]
            normal = ma.array() - mb.array()
            off = g.intercepts[idx[ma]] - g.intercepts[idx[mb]]
            scale = max(1.0, float(np.linalg.norm(normal)))
            on = [p for p in pa if abs(float(p @ normal) - off) <= 1e-9 * scale]
            on += [p for p in pb if abs(float(p @ normal) - off) <= 1e-9 * scale]
            if len(on) < 2:
                continue
            on = np.array(on)
            d = np.array([-normal[1], normal[0]])
            # the shared segment is the overlap of the two cells' boundary pieces
            sa = np.array([p for p in pa if abs(float(p @ normal) - off) <= 1e-9 * scale])
            sb = np.array([p for p in pb if abs(float(p @ normal) - off) <= 1e-9 * scale])
            if len(sa) < 2 or len(sb) < 2:
                continue
            lo_p = max((sa @ d).min(), (sb @ d).min())
            hi_p = min((sa @ d).max(), (sb @ d).max())
            if hi_p - lo_p <= 1e-12:
                continue
            ends = sorted([p for p in on if lo_p - 1e-12 <= p @ d <= hi_p + 1e-12], key=lambda p: p[1])
            lo, hi = ends[0], ends[-1]
            pair = (ma, mb) if ma.rho1 < mb.rho1 else (mb, ma)
            edges.append(Edge(pair, (float(lo[0]), float(lo[1])), (float(hi[0]), float(hi[1]))))
    return Tessellation(polys, edges, _assemble_vertices(edges, tuple(window)), tuple(window))


def hausdorff(a: Tessellation, b: Tessellation) -> float:
    """Worst cell-by-cell Hausdorff distance (``inf`` when the mark sets differ)."""
    ca = dict((m, p) for m, p in a.cells)
    cb = dict((m, p) for m, p in b.cells)
    if set(ca) != set(cb):
        return math.inf
    return max((polygon_hausdorff(ca[m], cb[m]) for m in ca), default=0.0)


# ------------------------------------------------------------ SVG


def _color(m: Mark) -> str:
    h = hashlib.sha256(f"{m.rho1!r},{m.rho2!r}".encode()).hexdigest()
    r, g, b = (int(h[k:k + 2], 16) for k in (0, 2, 4))
    return f"#{(r // 2 + 100):02x}{(g // 2 + 100):02x}{(b // 2 + 100):02x}"


def render_svg(tess: Tessellation, width: int = 600, legend: bool = False) -> str:
    """Deterministic SVG of a tessellation with time pointing up."""
    x0, x1, t0, t1 = tess.window
    sx = width / (x1 - x0)
    height = max(1, int(round((t1 - t0) * sx))) if t1 > t0 else width
    sy = height / (t1 - t0) if t1 > t0 else 1.0

    def tr(p):
        return f"{(p[0] - x0) * sx:.6f},{(t1 - p[1]) * sy:.6f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    ]
    for m, poly in tess.cells:
        pts = " ".join(tr(p) for p in poly)
        out.append(f'<polygon class="cell" data-mark="{m.rho1!r},{m.rho2!r}" points="{pts}" fill="{_color(m)}"/>')
    for e in tess.edges:
        a, b = tr(e.p).split(","), tr(e.q).split(",")
        out.append(f'<line class="edge" x1="{a[0]}" y1="{a[1]}" x2="{b[0]}" y2="{b[1]}" stroke="#000" stroke-width="1"/>')
    fill = {"coag": "#1f4fd8", "frag": "#d81f2a", "vertex": "#000"}
    for v in tess.vertices:
        if v.boundary:
            continue
        c = tr(v.point).split(",")
        out.append(f'<circle class="{v.kind}" cx="{c[0]}" cy="{c[1]}" r="3" fill="{fill[v.kind]}"/>')
    if legend:
        for k, (m, _) in enumerate(tess.cells):
            out.append(f'<text class="legend" x="4" y="{14 * (k + 1)}" font-size="11">({m.rho1:g}, {m.rho2:g})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def tessellation_to_json(tess: Tessellation) -> str:
    return json.dumps(tess.to_json(), sort_keys=True)


def marks_of(tess: Tessellation) -> MarkSet:
    return MarkSet([m for m, _ in tess.cells])
