"""Collision operator, kinetic-equation solvers, residual checks and kernel transforms.

Throughout, a kernel slice at a point is an ``(N, N)`` strictly upper
triangular matrix ``F`` with ``F[i, j] = f(rho_i, rho_j)``; the reference
weights ``w`` act as the diagonal matrix ``W``.  With ``G = alpha * F`` the
gain term of the collision operator is ``F W G - G W F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .marks import GEOM_TOL, Kernel, Mark, MarkSet


class DomainError(ValueError):
    pass


class HorizonError(ValueError):
    pass


class PositivityLossError(RuntimeError):
    def __init__(self, t: float, value: float, floor: float):
        super().__init__(f"solution fell to {value:.6g} < {floor:.6g} at t={t:.6g}")
        self.t = t
        self.value = value
        self.floor = floor


class SupportConditionError(ValueError):
    pass


class DivisionGuardError(ValueError):
    pass


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Moments:
    """Total and bracket-weighted jump intensities per mark."""

    lam: np.ndarray
    A: np.ndarray


def _moments(F: np.ndarray, w: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Fw = F * w
    return Fw.sum(-1), (a * Fw).sum(-1)


def q_matrix(F: np.ndarray, w: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Collision operator ``Q(F) = Q+(F) - Q-(F)``; leading axes of ``F`` are batched."""
    G = a * F
    qplus = (F * w) @ G - (G * w) @ F
    lam, A = _moments(F, w, a)
    dA = A[..., None, :] - A[..., :, None]
    dlam = lam[..., None, :] - lam[..., :, None]
    return qplus - (dA - dlam * a) * F


def q_bilinear(F1: np.ndarray, F2: np.ndarray, w: np.ndarray) -> np.ndarray:
    """The quadratic form whose antisymmetrization gives the system operator.

    ``B(F1, F2)[i, j] = (F1 W F2)[i, j] - lam(F1)[i] F2[i, j] - lam(F2)[j] F1[i, j]``
    where ``lam(F)`` is the weighted row sum.  ``Q(F) = B(F, aF) - B(aF, F)``.
    """
    l1 = (F1 * w).sum(-1)
    l2 = (F2 * w).sum(-1)
    return (F1 * w) @ F2 - l1[..., :, None] * F2 - l2[..., None, :] * F1


def q_system(F1: np.ndarray, F2: np.ndarray, w: np.ndarray) -> np.ndarray:
    return q_bilinear(F1, F2, w) - q_bilinear(F2, F1, w)


def moments(f: Kernel, x: float, t: float) -> Moments:
    lam, A = _moments(f.at(x, t), f.marks.weights, f.marks.alpha_matrix)
    return Moments(lam, A)


def q_apply(f: Kernel, x: float, t: float) -> np.ndarray:
    """``Q(f)`` at ``(x, t)`` as an ``(N, N)`` table over ordered pairs."""
    return q_matrix(f.at(x, t), f.marks.weights, f.marks.alpha_matrix)


def conservation_defect(F: np.ndarray, w: np.ndarray, a: np.ndarray) -> float:
    """Largest ``|sum_j Q[i, j] w_j|`` over all rows and batch entries."""
    return float(np.abs((q_matrix(F, w, a) * w).sum(-1)).max())


def tstar(V_inf: float, M0: float, delta0: float) -> float:
    """Validity horizon ``min(1/(12 V M0), delta0/(48 V M0^2))`` of the polygonal scheme."""
    if V_inf <= 0 or M0 <= 0 or delta0 <= 0:
        raise DomainError("tstar needs positive V_inf, M0 and delta0")
    return min(1.0 / (12.0 * V_inf * M0), delta0 / (48.0 * V_inf * M0 * M0))


# ---------------------------------------------------------------- residuals


def _box_columns(f: Kernel) -> np.ndarray:
    xs = f.x_nodes
    keep = np.zeros(f.nx, dtype=bool)
    keep[1:-1] = True
    if f.box is not None:
        lo, hi = f.box
        tol = 1e-9 * max(1.0, abs(lo), abs(hi))
        keep &= (xs >= lo - tol) & (xs <= hi + tol)
    return keep


def kinetic_residual(
    f: Kernel,
    mode: str = "planar",
    *,
    alpha: np.ndarray | None = None,
    reverse: bool = False,
    region: str = "box",
) -> float:
    """Max-norm residual of ``f_t - alpha f_x - Q(f)`` by central differences.

    ``alpha`` overrides the bracket matrix (e.g. with ``v^H`` for the 1-D flow).
    ``reverse=True`` checks the reversed equation ``f_t - alpha f_x = -Q(f)``.
    ``region="box"`` restricts to x-nodes inside ``f.box`` when it is set.
    ``mode="system"`` checks the same equation written as the two-field system
    ``(f, alpha f)`` with the antisymmetrized bilinear operator.
    """
    if f.nx < 3 or len(f.times) < 2:
        raise ShapeError("need at least 3 x-nodes and 2 t-slices")
    a = f.marks.alpha_matrix if alpha is None else np.asarray(alpha, dtype=float)
    w = f.marks.weights
    if mode == "system":
        if reverse:
            raise ValueError("reverse is only supported in planar mode")
        dt = np.diff(f.times)
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
            raise ShapeError("system mode needs uniform t-slices")
        v = f.values
        up = f.marks.upper
        fields = [v, np.where(up, a, 0.0) * v]
        # axis order of each field is (t, x); the first field is the
        # coefficient of dx_2 = dt, so the pair (i=1, j=2) reads f_t - (af)_x
        res = system_residual([fields[1], fields[0]], [dt[0], f.dx], w, per_node=True)
        cols = _box_columns(f) if region == "box" else np.r_[False, np.ones(f.nx - 2, bool), False]
        return float(np.abs(res[(0, 1)])[:, cols[1:-1]].max()) if cols.any() else 0.0
    if len(f.times) < 3:
        raise ShapeError("planar mode needs at least 3 t-slices")
    v = f.values
    ts = f.times
    ft = (v[2:] - v[:-2]) / (ts[2:] - ts[:-2])[:, None, None, None]
    fx = (v[:, 2:] - v[:, :-2]) / (2.0 * f.dx)
    lhs = ft[:, 1:-1] - a * fx[1:-1]
    q = q_matrix(v[1:-1, 1:-1], w, a)
    r = lhs + q if reverse else lhs - q
    r = np.where(f.marks.upper, r, 0.0)
    cols = _box_columns(f)[1:-1] if region == "box" else np.ones(f.nx - 2, bool)
    if not cols.any():
        return 0.0
    return float(np.abs(r[:, cols]).max())


def system_residual(
    fields: Sequence[np.ndarray],
    spacings: Sequence[float],
    weights: np.ndarray,
    per_node: bool = False,
):
    """Residual of ``f^i_{x_j} - f^j_{x_i} = B(f^i, f^j) - B(f^j, f^i)`` for all ``i < j``.

    Each field has shape ``grid + (N, N)`` on a common uniform d-dimensional
    grid (``d = len(fields)``).  Derivatives are central on interior nodes.
    Returns the max-norm, or with ``per_node`` a dict ``(i, j) -> array`` over
    the interior grid.
    """
    d = len(fields)
    if len(spacings) != d:
        raise ShapeError("one spacing per coordinate is required")
    shape = fields[0].shape
    if any(fl.shape != shape for fl in fields) or len(shape) != d + 2:
        raise ShapeError("fields must share a grid of dimension len(fields)")
    if any(s < 3 for s in shape[:d]):
        raise ShapeError("need at least 3 nodes per axis")
    inner = tuple(slice(1, -1) for _ in range(d))

    def deriv(fl, axis):
        hi = [slice(1, -1)] * d
        lo = [slice(1, -1)] * d
        hi[axis] = slice(2, None)
        lo[axis] = slice(None, -2)
        return (fl[tuple(hi)] - fl[tuple(lo)]) / (2.0 * spacings[axis])

    out = {}
    for i in range(d):
        for j in range(i + 1, d):
            fi, fj = fields[i][inner], fields[j][inner]
            out[(i, j)] = deriv(fields[i], j) - deriv(fields[j], i) - q_system(fi, fj, weights)
    if per_node:
        return out
    return max((float(np.abs(r).max()) for r in out.values()), default=0.0)


# ---------------------------------------------------------------- solvers


def _check_horizon(T: float, horizon: float) -> None:
    if T < 0:
        raise DomainError("T must be nonnegative")
    if T > horizon * (1.0 + 1e-12):
        raise HorizonError(f"T={T:.6g} exceeds the validity horizon {horizon:.6g}")


def _floor_check(vals: np.ndarray, support: np.ndarray, floor: float, t: float) -> None:
    if not support.any():
        return
    m = float(vals[..., support].min())
    if m < floor - 1e-12:
        raise PositivityLossError(t, m, floor)


def _extend(h0: np.ndarray, p: int) -> np.ndarray:
    """Pad ``h0`` by ``p`` nodes per side with linear extrapolation, clipped to its range."""
    nx = h0.shape[0]
    k = np.arange(1, p + 1)[:, None, None]
    if nx >= 2:
        left = h0[0] - k[::-1] * (h0[1] - h0[0])
        right = h0[-1] + k * (h0[-1] - h0[-2])
    else:
        left = np.repeat(h0[:1], p, axis=0)
        right = np.repeat(h0[-1:], p, axis=0)
    g = np.concatenate([left, h0, right])
    return np.clip(g, h0.min(axis=0), h0.max(axis=0))


def _polygonal(h0, x_nodes, dx, a, w, T, n, support, floor, speed):
    """Polygonal scheme on pair-wise characteristics.

    ``g(x, t, i, j) = f(x - a_ij t, t, i, j)`` is advanced by explicit Euler
    steps of the shifted-argument functional; the working grid is padded by
    ``2 * speed * T`` with clipped linear extrapolation.
    """
    N = h0.shape[-1]
    nx = len(x_nodes)
    p = int(math.ceil(2.0 * speed * T / dx)) + 1
    xw = x_nodes[0] + dx * (np.arange(nx + 2 * p) - p)
    g = _extend(h0, p)
    dt = T / n if n > 0 else 0.0
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    out = np.zeros((n + 1, nx, N, N))
    out[0] = h0

    def shifted(col, s):
        return np.interp(xw - s, xw, col)

    for m in range(n):
        t = m * dt
        gn = g.copy()
        for i, j in pairs:
            aij = a[i, j]
            gain = np.zeros(len(xw))
            for k in range(i + 1, j):
                sig = a[k, j] - a[i, k]
                if sig == 0.0:
                    continue
                gain += sig * w[k] * shifted(g[:, i, k], (aij - a[i, k]) * t) * shifted(g[:, k, j], (aij - a[k, j]) * t)
            loss = np.zeros(len(xw))
            for k in range(j + 1, N):
                c = a[j, k] - aij
                if c != 0.0:
                    loss += c * w[k] * shifted(g[:, j, k], (aij - a[j, k]) * t)
            for k in range(i + 1, N):
                c = a[i, k] - aij
                if c != 0.0:
                    loss -= c * w[k] * shifted(g[:, i, k], (aij - a[i, k]) * t)
            gn[:, i, j] = g[:, i, j] + dt * (gain - loss * g[:, i, j])
        g = gn
        tn = (m + 1) * dt
        for i, j in pairs:
            out[m + 1, :, i, j] = np.interp(x_nodes + a[i, j] * tn, xw, g[:, i, j])
        _floor_check(out[m + 1], support, floor, tn)
    return out


def _homogeneous(F0, w, a, T, n, support, floor, method):
    dt = T / n if n > 0 else 0.0
    out = np.zeros((n + 1,) + F0.shape)
    out[0] = F0
    F = F0.copy()
    up = np.triu(np.ones(F0.shape, dtype=bool), k=1)

    def rhs(X):
        return np.where(up, q_matrix(X, w, a), 0.0)

    for m in range(n):
        if method == "rk4":
            k1 = rhs(F)
            k2 = rhs(F + 0.5 * dt * k1)
            k3 = rhs(F + 0.5 * dt * k2)
            k4 = rhs(F + dt * k3)
            F = F + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            F = F + dt * rhs(F)
        out[m + 1] = F
        _floor_check(F, support, floor, (m + 1) * dt)
    return out


_SCHEMES = ("polygonal", "homogeneous-rk4", "rk4", "homogeneous-euler")


def _run(h: Kernel, a, support, T, n, scheme, speed, floor):
    if n < 1:
        raise DomainError("need at least one step")
    if scheme not in _SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    w = h.marks.weights
    h0 = h.values[0]
    times = np.linspace(0.0, T, n + 1)
    if scheme == "polygonal":
        vals = _polygonal(h0, h.x_nodes, h.dx, a, w, T, n, support, floor, speed)
    else:
        if not h.is_x_independent(tol=1e-14):
            raise ValueError("homogeneous schemes need an x-independent initial kernel")
        method = "euler" if scheme == "homogeneous-euler" else "rk4"
        traj = _homogeneous(h0[0], w, a, T, n, support, floor, method)
        vals = np.broadcast_to(traj[:, None], (n + 1, h.nx) + h0.shape[1:]).copy()
    vals = np.where(h.marks.upper, np.maximum(vals, 0.0), 0.0)
    return h.with_values(vals, times=times)


def solve_kinetic(h: Kernel, T: float, n: int, scheme: str = "polygonal") -> Kernel:
    """Solve the kinetic equation from the first slice of ``h`` over ``[0, T]`` in ``n`` steps.

    The output has ``n + 1`` uniform t-slices on the x-grid of ``h``.  The
    horizon ``tstar(V_inf, M0, delta0)`` is enforced strictly and the floor
    ``delta0 / 2`` is checked on the cone after every step.
    """
    M0 = float(h.values[0].max())
    _check_horizon(T, tstar(h.V_inf, M0, h.delta0))
    support = h.pairs.in_cone
    return _run(h, h.marks.alpha_matrix, support, T, n, scheme, h.V_inf, 0.5 * h.delta0)


@dataclass(frozen=True)
class HamiltonianSpec:
    """A Hamiltonian on marks together with the bracket it induces.

    ``variant="vH"`` uses ``v^H(a, b) = (H(a) - H(b)) / (a1 - b1)`` as the
    pair velocity; ``variant="planar"`` keeps the geometric bracket.
    """

    H: Callable[[Mark], float]
    variant: str = "vH"
    expression: str | None = None

    def __post_init__(self):
        if self.variant not in ("vH", "planar"):
            raise ValueError("variant must be 'vH' or 'planar'")

    @classmethod
    def from_expression(cls, expr: str, variant: str = "vH") -> "HamiltonianSpec":
        """Parse ``expr`` in the symbols ``rho1``, ``rho2`` with sympy."""
        import sympy

        r1, r2 = sympy.symbols("rho1 rho2")
        fn = sympy.lambdify((r1, r2), sympy.sympify(expr), "math")
        return cls(lambda m: float(fn(m.rho1, m.rho2)), variant, expr)

    def __call__(self, m) -> float:
        m = m if isinstance(m, Mark) else Mark(*m)
        return float(self.H(m))

    def values(self, marks: MarkSet) -> np.ndarray:
        return np.array([self(a) for a in marks.atoms])

    def velocity_matrix(self, marks: MarkSet) -> np.ndarray:
        if self.variant == "planar":
            return np.asarray(marks.alpha_matrix)
        hv = self.values(marks)
        r1 = marks.rho[:, 0]
        d = r1[None, :] - r1[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(d != 0, (hv[None, :] - hv[:, None]) / np.where(d == 0, 1.0, d), 0.0)
        if not np.all(np.isfinite(v)):
            raise DomainError("v^H is not finite on all pairs")
        return v


def solve_kinetic_1d(h: Kernel, H: HamiltonianSpec, T: float, n: int, scheme: str = "polygonal") -> Kernel:
    """The flow ``theta^H_t`` of the kinetic equation with ``alpha`` replaced by ``v^H``.

    The x-axis of ``h`` is the spatial coordinate and the output t-slices are
    the Hamilton-Jacobi times.  The horizon uses ``max |v^H|`` on the support
    in place of ``V_inf``.
    """
    a = H.velocity_matrix(h.marks)
    support = (h.values[0] > 0).any(axis=0) & h.marks.upper
    speed = float(np.abs(a[support]).max()) if support.any() else 0.0
    M0 = float(h.values[0].max())
    if speed > 0 and M0 > 0:
        _check_horizon(T, tstar(speed, M0, h.delta0))
    return _run(h, a, support, T, n, scheme, speed, 0.5 * h.delta0)


# ---------------------------------------------------------------- transforms


def _negated(marks: MarkSet) -> MarkSet:
    lo, hi = marks.P
    return MarkSet([(-a.rho1, -a.rho2) for a in marks.atoms], marks.weights, (-hi, -lo))


def _ell_on(ell, x: float, t: float) -> np.ndarray:
    v = ell.at(x, t)
    if np.any(v <= 0):
        raise DivisionGuardError(f"marginal not positive at (x={x}, t={t})")
    return v


def reverse_kernel(f: Kernel, ell, reflect: bool = False) -> Kernel:
    """Kernel of the reversed horizontal process on the negated marks ``-rho``.

    For ``i < j`` the reversed jump ``rho_j -> rho_i`` has density
    ``ell_i / ell_j * f_ij``; on the negated marks this is the ordered pair
    ``(-rho_j, -rho_i)``, which keeps every bracket.  The result lives on the
    grid of ``ell``.  Without reflection it satisfies the reversed equation
    (``kinetic_residual(..., reverse=True)``); with ``reflect=True`` the point
    ``(x, t)`` is mapped to ``(-x, -t)`` and the standard equation holds.
    """
    N = f.marks.n
    new = _negated(f.marks)
    perm = np.arange(N)[::-1]  # new index of old atom i is N-1-i
    xs, ts = ell.x_nodes, ell.times
    vals = np.zeros((len(ts), len(xs), N, N))
    for a, t in enumerate(ts):
        for b, x in enumerate(xs):
            F = f.at(x, t)
            e = _ell_on(ell, x, t)
            R = (e[:, None] / e[None, :]) * F  # R[i, j] for old i < j
            vals[a, b][np.ix_(perm, perm)] = R.T
    box = ell.box if getattr(ell, "box", None) is not None else None
    if reflect:
        vals = vals[::-1, ::-1]
        xr = -(xs[-1])
        tr = -ts[::-1]
        box = None if box is None else (-box[1], -box[0])
        return Kernel(new, xr, ell.dx, len(xs), tr, vals, f.V_inf, f.delta0, box)
    return Kernel(new, xs[0], ell.dx, len(xs), ts, vals, f.V_inf, f.delta0, box)


def _swapped_marks(marks: MarkSet) -> MarkSet:
    lo, hi = marks.P
    return MarkSet([(-a.rho2, -a.rho1) for a in marks.atoms], marks.weights, (-hi, -lo))


def swap_kernel(f: Kernel, ell, alpha_min: float = 1e-3) -> Kernel:
    """Coordinate-swapped kernel for the map ``(x1, x2) -> (-x2, -x1)``.

    New marks are ``(-rho2, -rho1)``; their brackets are the reciprocals of the
    old ones.  For old ``i < j`` the new ordered pair is ``(hat rho_j, hat rho_i)``
    with density ``alpha_ij * ell_i / ell_j * f_ij`` evaluated at the preimage
    point.  The t-slices of ``ell`` must be uniform; they become the new x-grid.
    """
    a = f.marks.alpha_matrix
    up = f.marks.upper
    supp = (f.values > 0).any(axis=(0, 1)) & up
    if np.any(a[supp] <= alpha_min) or np.any(a[up] == 0):
        raise SupportConditionError(f"bracket must exceed alpha_min={alpha_min} on the support")
    N = f.marks.n
    new = _swapped_marks(f.marks)
    # new atoms are sorted by -rho2; map old index -> new index
    order = {new.index((-m.rho2, -m.rho1)): i for i, m in enumerate(f.marks.atoms)}
    perm = np.empty(N, dtype=int)
    for k, i in order.items():
        perm[i] = k
    xs, ts = ell.x_nodes, np.asarray(ell.times)
    dts = np.diff(ts)
    if len(ts) < 2 or not np.allclose(dts, dts[0], rtol=1e-9, atol=0):
        raise ShapeError("swap_kernel needs uniform t-slices in the marginal")
    # new coordinates: y1 = -x2 (ascending), y2 = -x1 (slices ascending)
    ny1, ny2 = len(ts), len(xs)
    vals = np.zeros((ny2, ny1, N, N))
    for b, x in enumerate(xs):
        for c, t in enumerate(ts):
            F = f.at(x, t)
            e = _ell_on(ell, x, t)
            R = a * (e[:, None] / e[None, :]) * F
            S = np.zeros((N, N))
            S[np.ix_(perm, perm)] = R.T
            vals[ny2 - 1 - b, ny1 - 1 - c] = np.where(new.upper, S, 0.0)
    box = None
    return Kernel(new, -ts[-1], dts[0], ny1, -xs[::-1], vals, _max_bracket(new, vals), f.delta0, box)


def _max_bracket(marks: MarkSet, vals: np.ndarray) -> float:
    supp = (vals > 0).any(axis=(0, 1)) & marks.upper
    if not supp.any():
        return 1.0
    return float(np.abs(marks.alpha_matrix[supp]).max())


def shear_pushforward(f: Kernel, c: float) -> Kernel:
    """Push ``f`` forward under ``rho -> (rho1, rho2 + c rho1)``, ``x1 -> x1 - c x2``.

    The sheared kernel is ``f'(x, t) = f(x + c t, t)``; brackets shift by ``c``.
    The output x-grid keeps the spacing of ``f`` and covers every ``x`` whose
    preimage stays inside the stored grid for all slices.
    """
    if c < 0:
        raise DomainError("shear parameter must be nonnegative")
    if c == 0:
        return f
    lo, hi = f.marks.P
    sh = [(a.rho1, a.rho2 + c * a.rho1) for a in f.marks.atoms]
    coords = [v for m in sh for v in m]
    new = MarkSet(sh, f.marks.weights, (min(lo, min(coords)), max(hi, max(coords))))
    X0, X1 = f.x_range
    ts = f.times
    x0 = X0 - c * ts[0]
    span = (X1 - c * ts[-1]) - x0
    nx = int(math.floor(span / f.dx + 1e-9)) + 1
    if nx < 1:
        raise DomainError("shear leaves no admissible x-range")
    xs = x0 + f.dx * np.arange(nx)
    vals = np.stack([np.stack([f.at(x + c * t, t) for x in xs]) for t in ts])
    V = max(abs(float(f.V_inf) + c), float(np.abs(new.alpha_matrix[new.upper]).max()) if new.n > 1 else 0.0)
    box = None
    if f.box is not None:
        b0, b1 = f.box[0] - c * ts[0], f.box[1] - c * ts[-1]
        box = (b0, b1) if b1 > b0 else None
    return Kernel(new, x0, f.dx, nx, ts, vals, V, f.delta0, box)


def swap_marginal(ell):
    """Marginal of the swapped system: ``l_bar(y, hat rho) = l((-y2, -y1), rho)``.

    Lives on the grid produced by :func:`swap_kernel` for the same ``ell``.
    """
    from .forward import MarginalField

    new = _swapped_marks(ell.marks)
    N = ell.marks.n
    perm = np.array([new.index((-m.rho2, -m.rho1)) for m in ell.marks.atoms])
    ts = np.asarray(ell.times)
    dts = np.diff(ts)
    if len(ts) < 2 or not np.allclose(dts, dts[0], rtol=1e-9, atol=0):
        raise ShapeError("swap_marginal needs uniform t-slices")
    v = np.asarray(ell.values)[::-1, ::-1]  # (old t reversed, old x reversed)
    vals = np.zeros((ell.nx, len(ts), N))
    vals[..., perm] = v.transpose(1, 0, 2)
    return MarginalField(new, -ts[-1], dts[0], len(ts), -ell.x_nodes[::-1], vals)


def reflect_marginal(ell):
    """Marginal of the reflected system on negated marks: ``l(-x, -t)`` reindexed."""
    from .forward import MarginalField

    new = _negated(ell.marks)
    vals = np.asarray(ell.values)[::-1, ::-1, ::-1]
    box = None if ell.box is None else (-ell.box[1], -ell.box[0])
    return MarginalField(new, -ell.x_nodes[-1], ell.dx, ell.nx, -np.asarray(ell.times)[::-1], vals, box)
