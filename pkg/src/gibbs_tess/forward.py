"""One-point marginals: forward equations in x and t and the staged box construction.

Both forward equations are explicit Euler schemes for a jump-process master
equation, ``l' = l * F - lam * l`` with ``(l * F)_j = sum_i l_i F[i, j] w_i``.
The weighted sum of the update telescopes, so the mass ``sum_i l_i w_i`` is
preserved by every step up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .marks import GEOM_TOL, Kernel, MarkSet, _Grid


class StabilityError(ValueError):
    pass


class RateSignError(ValueError):
    pass


class HypothesisError(ValueError):
    pass


class PositivityLoss(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MarginalField(_Grid):
    """``l(x, t, rho)`` on a uniform x-grid and a list of t-slices.

    ``values`` has shape ``(n_t, nx, N)``.  ``floor`` is the smallest stored
    value and ``declared_floor`` the a-priori lower bound, when one applies.
    """

    marks: MarkSet
    x0: float
    dx: float
    nx: int
    times: np.ndarray
    values: np.ndarray
    box: tuple[float, float] | None = None
    declared_floor: float | None = None
    floor: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        t = np.asarray(self.times, dtype=float)
        if v.shape != (len(t), self.nx, self.marks.n):
            raise ValueError(f"values shape {v.shape} != {(len(t), self.nx, self.marks.n)}")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "floor", float(v.min()))

    def at(self, x: float, t: float) -> np.ndarray:
        return self._interp(self.values, x, t)

    def at_many(self, xs, t: float) -> np.ndarray:
        return self._interp_many(self.values, xs, t)

    def mass_defect(self) -> float:
        return float(np.abs(self.values @ self.marks.weights - 1.0).max())

    def to_json(self) -> dict:
        doc = self.marks.to_json()
        doc.update(
            grid={"x0": self.x0, "dx": self.dx, "n": self.nx},
            floor=self.floor,
            slices=[{"t": float(t), "values": v.ravel().tolist()} for t, v in zip(self.times, self.values)],
        )
        if self.box is not None:
            doc["box"] = list(self.box)
        if self.declared_floor is not None:
            doc["declared_floor"] = self.declared_floor
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "MarginalField":
        marks = MarkSet.from_json(doc)
        g = doc["grid"]
        nx = int(g["n"])
        vals = np.array([np.asarray(s["values"], dtype=float).reshape(nx, marks.n) for s in doc["slices"]])
        return cls(marks, float(g["x0"]), float(g["dx"]), nx, [s["t"] for s in doc["slices"]], vals,
                   tuple(doc["box"]) if doc.get("box") else None, doc.get("declared_floor"))


def _step(l: np.ndarray, F: np.ndarray, rates: np.ndarray, w: np.ndarray, h: float) -> np.ndarray:
    """One Euler step ``l + h (l * R - (R w) l)`` for batched ``l`` (..., N)."""
    R = rates * F
    gain = np.einsum("...i,...ij->...j", l * w, R)
    loss = (R * w).sum(-1) * l
    return l + h * (gain - loss)


def _unstep(l: np.ndarray, F: np.ndarray, w: np.ndarray, h: float) -> np.ndarray:
    """Invert one forward Euler step of size ``h`` taken with rates ``F``."""
    M = np.eye(len(l)) + h * (w[:, None] * F - np.diag((F * w).sum(-1)))
    return np.linalg.solve(M.T, l)


def _as_vector(marks: MarkSet, ell0) -> np.ndarray:
    if callable(ell0):
        v = np.array([ell0(a) for a in marks.atoms], dtype=float)
    else:
        v = np.asarray(ell0, dtype=float)
    if v.shape != (marks.n,):
        raise ValueError("ell0 must give one value per atom")
    if np.any(v < 0):
        raise ValueError("ell0 must be nonnegative")
    if abs(float(v @ marks.weights) - 1.0) > 1e-9:
        raise ValueError("ell0 must have mass 1")
    return v


def solve_ell_x(f: Kernel, ell0, t: float, span, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Sweep ``l_x = l * f - lam l`` at fixed ``t`` from ``span[0]`` to ``span[1]``.

    ``span[1] < span[0]`` sweeps backwards.  Returns ``(xs, l)`` with
    ``l.shape == (n + 1, N)``.
    """
    a, b = map(float, span)
    l = _as_vector(f.marks, ell0)
    h = (b - a) / n
    if f.M0 > 0 and abs(h) > 1.0 / f.M0 + 1e-15:
        raise StabilityError(f"step {abs(h):.4g} exceeds 1/M0 = {1.0 / f.M0:.4g}")
    w = f.marks.weights
    ones = np.ones((f.marks.n, f.marks.n))
    xs = a + h * np.arange(n + 1)
    out = np.empty((n + 1, f.marks.n))
    out[0] = l
    for k in range(n):
        l = _step(l, f.at(xs[k], t), ones, w, h)
        out[k + 1] = l
    return xs, out


def solve_ell_t(f: Kernel, ell0, x: float, span, n: int, shift: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Evolve ``l_t = l * ((alpha + shift) g) - ((A + shift lam) l)`` at fixed ``x``.

    ``g(t) = f(x + shift t, t)`` is the tilted kernel; ``shift = 0`` gives the
    plain forward equation in t.  Returns ``(ts, l)``.
    """
    t0, t1 = map(float, span)
    l = _as_vector(f.marks, ell0)
    h = (t1 - t0) / n
    if f.M0 > 0 and abs(h) > 1.0 / f.M0 + 1e-15:
        raise StabilityError(f"step {abs(h):.4g} exceeds 1/M0 = {1.0 / f.M0:.4g}")
    rates = np.where(f.marks.upper, f.marks.alpha_matrix + shift, 0.0)
    w = f.marks.weights
    ts = t0 + h * np.arange(n + 1)
    out = np.empty((n + 1, f.marks.n))
    out[0] = l
    for k in range(n):
        F = f.at(x + shift * ts[k], ts[k])
        if np.any(rates * F < -GEOM_TOL):
            raise RateSignError(f"negative effective rate at t={ts[k]:.6g}; increase the shift")
        l = _step(l, F, rates, w, h)
        out[k + 1] = l
    return ts, out


def _slices_at(f: Kernel, xs: np.ndarray) -> np.ndarray:
    """``f(xs[a], times[a])`` for every stored slice ``a``; shape ``(n_t, N, N)``."""
    s = (xs - f.x0) / f.dx
    if np.any(s < -1e-9) or np.any(s > f.nx - 1 + 1e-9):
        raise ValueError("tilted evaluation left the kernel grid")
    i = np.clip(np.floor(s).astype(int), 0, max(f.nx - 2, 0))
    th = np.clip(s - i, 0.0, 1.0)[:, None, None]
    rows = np.arange(len(xs))
    if f.nx == 1:
        return f.values[rows, 0]
    return f.values[rows, i] * (1 - th) + f.values[rows, i + 1] * th


def _box_nodes(f: Kernel, a_minus: float, a_plus: float) -> tuple[float, int]:
    s0 = (a_minus - f.x0) / f.dx
    s1 = (a_plus - f.x0) / f.dx
    i0, i1 = int(round(s0)), int(round(s1))
    if abs(s0 - i0) > 1e-6 or abs(s1 - i1) > 1e-6:
        raise ValueError("box edges must be kernel x-nodes")
    return f.x0 + i0 * f.dx, i1 - i0 + 1


def _lam_max(f: Kernel) -> float:
    return f.M0 * f.marks.total_mass


def build_ell_box(
    f: Kernel,
    ell0,
    box,
    substeps: int | None = None,
    order: str = "t-edge",
    check_hypothesis: bool = True,
    tilt: float | None = None,
) -> MarginalField:
    """Staged construction of ``l`` on ``[a-, a+] x [0, T]`` from ``l(a-, 0) = ell0``.

    ``order="t-edge"`` follows the staged construction: an x-sweep at ``t = 0``
    down to ``a- - V T``, a tilted t-evolution of that left edge, one tilted
    x-sweep per stored slice, and finally the untilt ``l(x, t) = l~(x - V t, t)``.
    ``order="x-first"`` instead evolves the tilted field in t at every x.
    Output nodes are the kernel's x-nodes in the box and its slices in ``[0, T]``.

    ``tilt`` is the drift ``V`` of the tilted frame.  It only has to make the
    t-rates ``(alpha + V) f`` nonnegative, so the default is the smallest such
    value on the support of ``f``; pass ``tilt=f.V_inf`` for the full-cone tilt.
    """
    a_minus, a_plus, T = map(float, box)
    marks = f.marks
    w = marks.weights
    l0 = _as_vector(marks, ell0)
    up = marks.upper
    supp = (f.values > 0).any(axis=(0, 1)) & up
    if tilt is None:
        tilt = max(0.0, -float(marks.alpha_matrix[supp].min())) if supp.any() else 0.0
    V = float(tilt)
    plus_supported = bool(np.all(marks.alpha_matrix[supp] >= -GEOM_TOL)) and bool(
        np.all((marks.rho[None, :, 1] - marks.rho[:, None, 1])[supp] >= -GEOM_TOL)
    )
    c = float(l0.min())
    if check_hypothesis and c < 1.0 / 6.0 - 1e-12 and not plus_supported:
        raise HypothesisError("need inf ell0 >= 1/6 or a kernel supported in the plus cone")
    xb0, nxb = _box_nodes(f, a_minus, a_plus)
    tsel = f.times <= T + 1e-12 * max(1.0, T)
    times = f.times[tsel]
    if times[0] > 1e-12 or times[-1] < T - 1e-9 * max(1.0, T):
        raise ValueError("kernel slices must cover [0, T]")
    xs_out = xb0 + f.dx * np.arange(nxb)
    lam_max = _lam_max(f)

    # fine steps: a fraction of the storage spacing, and well inside the Euler stability limit
    if substeps is None:
        substeps = 32
    sub = substeps
    if lam_max > 0:
        sub = max(sub, int(math.ceil(4.0 * lam_max * f.dx)))
    hx_target = f.dx / sub
    # fine grid: box nodes are fine nodes; the left extension is a whole number of fine steps
    nb = int(math.ceil(V * T / hx_target - 1e-9))
    k0 = nb
    nfine = nb + (nxb - 1) * sub
    yL = a_minus - nb * hx_target
    ys = a_minus + hx_target * (np.arange(nfine + 1) - nb)
    base = np.empty((nfine + 1, marks.n))
    base[k0] = l0
    ones = np.ones((marks.n, marks.n))
    l = l0
    for k in range(k0, nfine):
        l = _step(l, f.at(ys[k], 0.0), ones, w, ys[k + 1] - ys[k])
        base[k + 1] = l
    l = l0
    for k in range(k0, 0, -1):
        # exact inverse of the forward step from ys[k-1], so that re-sweeping
        # forward from the left edge reproduces this slice to rounding
        l = _unstep(l, f.at(ys[k - 1], 0.0), w, ys[k] - ys[k - 1])
        base[k - 1] = l

    rates = np.where(up, marks.alpha_matrix + V, 0.0)
    if np.any(rates[supp] < -GEOM_TOL):
        raise RateSignError("tilted rates are negative on the support")
    nt = len(times)
    tilde = np.empty((nt, nfine + 1, marks.n))

    if order == "t-edge":
        # stage 2: the left edge in t, recorded at the stored slices
        edge = np.empty((nt, marks.n))
        edge[0] = base[0]
        l = base[0]
        for a in range(nt - 1):
            dt = times[a + 1] - times[a]
            m = max(1, int(math.ceil(dt / (hx_target / max(1.0, 2 * V)))))
            h = dt / m
            for s in range(m):
                t = times[a] + s * h
                l = _step(l, f.at(yL + V * t, t), rates, w, h)
            edge[a + 1] = l
        # stage 3: tilted x-sweeps, all slices at once
        tilde[:, 0] = edge
        l = edge
        ones_b = np.ones((nt, marks.n, marks.n))
        for k in range(nfine):
            F = _slices_at(f, ys[k] + V * times)
            l = _step(l, F, ones_b, w, ys[k + 1] - ys[k])
            tilde[:, k + 1] = l
    elif order == "x-first":
        tilde[0] = base
        l = base
        for a in range(nt - 1):
            dt = times[a + 1] - times[a]
            m = max(1, int(math.ceil(dt / (hx_target / max(1.0, 2 * V)))))
            h = dt / m
            for s in range(m):
                t = times[a] + s * h
                F = f.at_many(ys + V * t, t)
                l = _step(l, F, rates, w, h)
            tilde[a + 1] = l
    else:
        raise ValueError(f"unknown order {order!r}")

    # stage 4: untilt by linear interpolation in y (a convex combination, mass-preserving)
    vals = np.empty((nt, nxb, marks.n))
    for a, t in enumerate(times):
        yq = xs_out - V * t
        for r in range(marks.n):
            vals[a, :, r] = np.interp(yq, ys, tilde[a, :, r])
    if vals.min() <= 0:
        raise PositivityLoss(f"marginal lost positivity (min {vals.min():.3g})")
    declared = min(1.0 / 12.0, c * math.exp(-lam_max * (a_plus - a_minus))) if c >= 1.0 / 6.0 - 1e-12 else None
    return MarginalField(marks, xb0, f.dx, nxb, times, vals, (a_minus, a_plus), declared)


def xi_residual(f: Kernel, ell: MarginalField) -> float:
    """Max-norm of ``l_t - l * (alpha f) + A l`` by central t-differences on interior slices."""
    if ell.marks.n != f.marks.n:
        raise ValueError("marks of kernel and marginal differ")
    ts = ell.times
    if len(ts) < 3:
        raise ValueError("need at least 3 t-slices")
    v = ell.values
    lt = (v[2:] - v[:-2]) / (ts[2:] - ts[:-2])[:, None, None]
    a = np.where(f.marks.upper, f.marks.alpha_matrix, 0.0)
    w = f.marks.weights
    xs = ell.x_nodes
    F = np.stack([f.at_many(xs, t) for t in ts[1:-1]])
    R = a * F
    gain = np.einsum("...i,...ij->...j", v[1:-1] * w, R)
    loss = (R * w).sum(-1) * v[1:-1]
    return float(np.abs(lt - gain + loss).max())


def marginal_from_kernel_grid(f: Kernel, ell: MarginalField) -> bool:
    """True when ``ell`` is co-gridded with ``f`` (same spacing, nodes aligned, slices shared)."""
    if abs(ell.dx - f.dx) > 1e-12:
        return False
    s = (ell.x0 - f.x0) / f.dx
    if abs(s - round(s)) > 1e-9:
        return False
    return all(np.any(np.abs(f.times - t) < 1e-12) for t in ell.times)
