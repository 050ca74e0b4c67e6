"""Marks, brackets, atomic reference measures and gridded jump kernels.

A mark is a slope vector ``(rho1, rho2)``.  Marks are ordered by their first
coordinate: ``a < b`` (written ``precedes(a, b)``) iff ``b.rho1 > a.rho1``.
All reference measures are finite atomic, so every integral over marks is an
exact weighted sum and the atoms of a :class:`MarkSet` are kept sorted by
``rho1``; atom index order therefore *is* the order ``precedes``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

GEOM_TOL = 1e-9
_GRID_TOL = 1e-12


class DegeneratePairError(ValueError):
    """Two marks share their first coordinate, so the bracket is undefined."""


class OrderError(ValueError):
    """Marks were passed out of order."""


class GridRangeError(ValueError):
    """A kernel or marginal was queried outside its stored grid."""


@dataclass(frozen=True)
class Mark:
    rho1: float
    rho2: float

    def __iter__(self):
        yield self.rho1
        yield self.rho2

    def __sub__(self, other: "Mark") -> np.ndarray:
        return np.array([self.rho1 - other.rho1, self.rho2 - other.rho2])

    def array(self) -> np.ndarray:
        return np.array([self.rho1, self.rho2], dtype=float)


def _as_mark(m) -> Mark:
    return m if isinstance(m, Mark) else Mark(float(m[0]), float(m[1]))


def precedes(a, b) -> bool:
    """True iff ``b`` lies in ``R(a)``, i.e. ``b.rho1 > a.rho1``."""
    a, b = _as_mark(a), _as_mark(b)
    return b.rho1 > a.rho1


def alpha(a, b) -> float:
    """The bracket ``[a, b]``: slope of the chord from ``a`` to ``b``."""
    a, b = _as_mark(a), _as_mark(b)
    d1 = b.rho1 - a.rho1
    if d1 == 0.0:
        raise DegeneratePairError(f"marks {a} and {b} share rho1")
    return (b.rho2 - a.rho2) / d1


def tau(a, b) -> np.ndarray:
    """Edge orientation ``(-[a, b], 1)``; never horizontal, always upward."""
    if not precedes(a, b):
        raise OrderError(f"{a} does not precede {b}")
    return np.array([-alpha(a, b), 1.0])


def sigma_triple(a, m, b) -> float:
    """Triple bracket ``[m, b] - [a, m]``; negative means fragmentation is possible."""
    if not (precedes(a, m) and precedes(m, b)):
        raise OrderError("sigma_triple needs a < m < b")
    return alpha(m, b) - alpha(a, m)


@dataclass(frozen=True)
class MarkSet:
    """Finite atomic reference measure on marks.

    Atoms are sorted by ``rho1`` on construction and must have pairwise
    distinct ``rho1``.  ``K`` is the optional monotone graph function the atoms
    were sampled from (``rho2 = K(rho1)``).
    """

    atoms: tuple[Mark, ...]
    weights: np.ndarray
    P: tuple[float, float]
    K: Callable[[float], float] | None = field(default=None, compare=False)

    def __init__(self, atoms, weights=None, P=None, K=None):
        atoms = [_as_mark(a) for a in atoms]
        if not atoms:
            raise ValueError("a mark set needs at least one atom")
        w = np.ones(len(atoms)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(atoms),):
            raise ValueError("one weight per atom is required")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        order = sorted(range(len(atoms)), key=lambda i: atoms[i].rho1)
        atoms = [atoms[i] for i in order]
        w = w[order]
        r1 = [a.rho1 for a in atoms]
        if len(set(r1)) != len(r1):
            raise DegeneratePairError("atoms must have pairwise distinct rho1")
        coords = [c for a in atoms for c in a]
        if P is None:
            P = (min(coords), max(coords))
        P = (float(P[0]), float(P[1]))
        if not P[0] < P[1]:
            raise ValueError("need P- < P+")
        if min(coords) < P[0] - GEOM_TOL or max(coords) > P[1] + GEOM_TOL:
            raise ValueError("atoms must lie in the box [P-, P+]^2")
        if K is not None:
            for a in atoms:
                if abs(K(a.rho1) - a.rho2) > GEOM_TOL:
                    raise ValueError("atoms are not on the graph of K")
        w.setflags(write=False)
        object.__setattr__(self, "atoms", tuple(atoms))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "K", K)

    @classmethod
    def from_graph(cls, K, rho1_values, weights=None, P=None) -> "MarkSet":
        """Discretize the graph of ``K`` at the given first coordinates."""
        atoms = [Mark(float(r), float(K(r))) for r in rho1_values]
        return cls(atoms, weights, P, K)

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def n(self) -> int:
        return len(self.atoms)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @cached_property
    def rho(self) -> np.ndarray:
        r = np.array([[a.rho1, a.rho2] for a in self.atoms])
        r.setflags(write=False)
        return r

    @cached_property
    def upper(self) -> np.ndarray:
        """Boolean ``(N, N)`` mask of ordered pairs ``i < j``."""
        m = np.triu(np.ones((self.n, self.n), dtype=bool), k=1)
        m.setflags(write=False)
        return m

    @cached_property
    def alpha_matrix(self) -> np.ndarray:
        """``alpha[i, j] = [atom_i, atom_j]`` for ``i != j``; zero on the diagonal."""
        r = self.rho
        d1 = r[None, :, 0] - r[:, None, 0]
        d2 = r[None, :, 1] - r[:, None, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(d1 != 0, d2 / np.where(d1 == 0, 1.0, d1), 0.0)
        a.setflags(write=False)
        return a

    @cached_property
    def sigma_tensor(self) -> np.ndarray:
        """``sigma[i, k, j] = alpha[k, j] - alpha[i, k]`` for ``i < k < j``, else 0."""
        a = self.alpha_matrix
        s = a[None, :, :] - a[:, :, None]
        n = self.n
        idx = np.arange(n)
        mask = (idx[:, None, None] < idx[None, :, None]) & (idx[None, :, None] < idx[None, None, :])
        s = np.where(mask, s, 0.0)
        s.setflags(write=False)
        return s

    def index(self, mark) -> int:
        m = _as_mark(mark)
        for i, a in enumerate(self.atoms):
            if abs(a.rho1 - m.rho1) <= GEOM_TOL and abs(a.rho2 - m.rho2) <= GEOM_TOL:
                return i
        raise KeyError(f"{m} is not an atom")

    def region_mask(self, region: tuple) -> np.ndarray:
        """Atoms inside ``("R", rho)``, ``("L", rho)`` or ``("D", rho_minus, rho_plus)``."""
        kind = region[0]
        r1 = self.rho[:, 0]
        if kind == "R":
            return r1 > _as_mark(region[1]).rho1
        if kind == "L":
            return r1 < _as_mark(region[1]).rho1
        if kind == "D":
            lo, hi = _as_mark(region[1]), _as_mark(region[2])
            if not precedes(lo, hi):
                raise OrderError("D(a, b) needs a < b")
            return (r1 > lo.rho1) & (r1 < hi.rho1)
        raise ValueError(f"unknown region {kind!r}")

    def beta_integrate(self, fn: Callable[[Mark], float], region: tuple) -> float:
        mask = self.region_mask(region)
        return float(sum(fn(a) * w for a, w, m in zip(self.atoms, self.weights, mask) if m))

    def pair_table(self, V_inf: float) -> "PairTable":
        return PairTable.build(self, V_inf)

    def cone_mask(self, V_inf: float) -> np.ndarray:
        return self.pair_table(V_inf).in_cone

    def to_json(self) -> dict:
        return {
            "P": list(self.P),
            "atoms": [[a.rho1, a.rho2, float(w)] for a, w in zip(self.atoms, self.weights)],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MarkSet":
        atoms = [Mark(a[0], a[1]) for a in doc["atoms"]]
        weights = [a[2] if len(a) > 2 else 1.0 for a in doc["atoms"]]
        return cls(atoms, weights, doc.get("P"))


@dataclass(frozen=True)
class PairTable:
    """Brackets and cone memberships for every ordered pair of atoms."""

    alpha: np.ndarray
    in_cone: np.ndarray
    in_plus_cone: np.ndarray
    V_inf: float

    @classmethod
    def build(cls, marks: MarkSet, V_inf: float) -> "PairTable":
        a = marks.alpha_matrix
        up = marks.upper
        lo, hi = marks.P
        r = marks.rho
        inside = np.all((r >= lo - GEOM_TOL) & (r <= hi + GEOM_TOL), axis=1)
        box = inside[:, None] & inside[None, :]
        in_cone = up & box & (np.abs(a) <= V_inf + GEOM_TOL)
        d2 = r[None, :, 1] - r[:, None, 1]
        in_plus = in_cone & (d2 >= -GEOM_TOL)
        return cls(np.where(up, a, 0.0), in_cone, in_plus, float(V_inf))


def padded_grid(a_minus: float, a_plus: float, pad: float, cells: int) -> tuple[float, float, int]:
    """Uniform grid with nodes on ``a_minus`` and ``a_plus``, covering ``pad`` on both sides.

    Returns ``(x0, dx, nx)``.
    """
    if cells < 1:
        raise ValueError("need at least one cell")
    dx = (a_plus - a_minus) / cells
    p = int(math.ceil(pad / dx - 1e-12)) if pad > 0 else 0
    return a_minus - p * dx, dx, cells + 1 + 2 * p


class _Grid:
    """Shared (x, t) grid bookkeeping for kernels and marginal fields."""

    x0: float
    dx: float
    nx: int
    times: np.ndarray

    @property
    def x_nodes(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def x_range(self) -> tuple[float, float]:
        return self.x0, self.x0 + self.dx * (self.nx - 1)

    def _x_weights(self, x: float) -> tuple[int, float]:
        s = (x - self.x0) / self.dx
        if s < -_GRID_TOL * max(1.0, abs(s)) or s > (self.nx - 1) * (1 + _GRID_TOL) + _GRID_TOL:
            raise GridRangeError(f"x={x} outside grid {self.x_range}")
        if self.nx == 1:
            return 0, 0.0
        i = min(max(int(math.floor(s)), 0), self.nx - 2)
        return i, min(max(s - i, 0.0), 1.0)

    def _t_weights(self, t: float) -> tuple[int, float]:
        ts = self.times
        if t < ts[0] - _GRID_TOL * max(1.0, abs(ts[0])) or t > ts[-1] + _GRID_TOL * max(1.0, abs(ts[-1])):
            raise GridRangeError(f"t={t} outside slices [{ts[0]}, {ts[-1]}]")
        if len(ts) == 1:
            return 0, 0.0
        j = int(np.searchsorted(ts, t, side="right")) - 1
        j = min(max(j, 0), len(ts) - 2)
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return j, min(max(w, 0.0), 1.0)

    def _interp_many(self, values: np.ndarray, xs: np.ndarray, t: float) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        s = (xs - self.x0) / self.dx
        tol = _GRID_TOL * np.maximum(1.0, np.abs(s))
        if np.any(s < -tol) or np.any(s > (self.nx - 1) * (1 + _GRID_TOL) + _GRID_TOL):
            raise GridRangeError(f"x outside grid {self.x_range}")
        j, wt = self._t_weights(t)
        row = values[j] if wt == 0 else values[j] + wt * (values[j + 1] - values[j])
        if self.nx == 1:
            return np.repeat(row[:1], len(xs), axis=0)
        i = np.clip(np.floor(s).astype(int), 0, self.nx - 2)
        th = np.clip(s - i, 0.0, 1.0).reshape((-1,) + (1,) * (row.ndim - 1))
        return row[i] + th * (row[i + 1] - row[i])

    def _interp(self, values: np.ndarray, x: float, t: float) -> np.ndarray:
        i, wx = self._x_weights(x)
        j, wt = self._t_weights(t)
        v = values
        if self.nx == 1:
            a0, a1 = v[j, 0], (v[j + 1, 0] if wt > 0 else v[j, 0])
        else:
            a0 = v[j, i] + wx * (v[j, i + 1] - v[j, i]) if wx > 0 else v[j, i]
            if wt > 0:
                a1 = v[j + 1, i] + wx * (v[j + 1, i + 1] - v[j + 1, i]) if wx > 0 else v[j + 1, i]
            else:
                return a0.copy()
        return a0 + wt * (a1 - a0)


@dataclass(frozen=True, eq=False)
class Kernel(_Grid):
    """Jump-rate density ``f(x, t, rho-, rho+)`` on a uniform x-grid and a list of t-slices.

    ``values`` has shape ``(n_t, nx, N, N)`` and is nonzero only on ordered pairs
    ``i < j``.  Queries between nodes interpolate linearly in ``x`` and ``t``.
    ``box`` records the unpadded spatial interval the kernel was built for.
    """

    marks: MarkSet
    x0: float
    dx: float
    nx: int
    times: np.ndarray
    values: np.ndarray
    V_inf: float
    delta0: float
    box: tuple[float, float] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        t = np.asarray(self.times, dtype=float)
        n = self.marks.n
        if v.shape != (len(t), self.nx, n, n):
            raise ValueError(f"values shape {v.shape} != {(len(t), self.nx, n, n)}")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("t-slices must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("kernel values must be nonnegative")
        if np.any(v[..., ~self.marks.upper] != 0):
            raise ValueError("kernel must vanish off ordered pairs")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "times", t)

    @property
    def M0(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    @cached_property
    def pairs(self) -> PairTable:
        return self.marks.pair_table(self.V_inf)

    @classmethod
    def from_function(cls, marks, fn, x0, dx, nx, times, V_inf, delta0, box=None) -> "Kernel":
        """Tabulate ``fn(x, t) -> (N, N)`` and zero it outside the cone of ``V_inf``."""
        times = np.asarray(times, dtype=float)
        xs = x0 + dx * np.arange(nx)
        cone = marks.pair_table(V_inf).in_cone
        vals = np.empty((len(times), nx, marks.n, marks.n))
        for a, t in enumerate(times):
            for b, x in enumerate(xs):
                vals[a, b] = np.where(cone, np.asarray(fn(x, t), dtype=float), 0.0)
        return cls(marks, x0, dx, nx, times, vals, V_inf, delta0, box)

    @classmethod
    def constant(cls, marks, c, x0, dx, nx, times, V_inf, delta0=None, box=None) -> "Kernel":
        return cls.from_function(
            marks, lambda x, t: np.full((marks.n, marks.n), float(c)), x0, dx, nx, times,
            V_inf, c if delta0 is None else delta0, box,
        )

    def at(self, x: float, t: float) -> np.ndarray:
        """Interpolated ``(N, N)`` rate matrix at ``(x, t)``."""
        return self._interp(self.values, x, t)

    def at_many(self, xs, t: float) -> np.ndarray:
        """Rate matrices at several x for one t; shape ``(len(xs), N, N)``."""
        return self._interp_many(self.values, xs, t)

    def eval(self, x: float, t: float, i: int, j: int) -> float:
        if not self.pairs.in_cone[i, j]:
            return 0.0
        return float(self.at(x, t)[i, j])

    def with_values(self, values, times=None, **changes) -> "Kernel":
        kw = dict(
            marks=self.marks, x0=self.x0, dx=self.dx, nx=self.nx,
            times=self.times if times is None else times, values=values,
            V_inf=self.V_inf, delta0=self.delta0, box=self.box,
        )
        kw.update(changes)
        return Kernel(**kw)

    def is_x_independent(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.values - self.values[:, :1]) <= tol))

    def to_json(self) -> dict:
        up = self.marks.upper
        doc = self.marks.to_json()
        doc.update(
            V_inf=self.V_inf,
            delta0=self.delta0,
            M0=self.M0,
            grid={"x0": self.x0, "dx": self.dx, "n": self.nx},
            slices=[{"t": float(t), "values": v[:, up].ravel().tolist()} for t, v in zip(self.times, self.values)],
        )
        if self.box is not None:
            doc["box"] = list(self.box)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Kernel":
        marks = MarkSet.from_json(doc)
        g = doc["grid"]
        n, nx = marks.n, int(g["n"])
        up = marks.upper
        npairs = int(up.sum())
        vals = np.zeros((len(doc["slices"]), nx, n, n))
        for a, s in enumerate(doc["slices"]):
            flat = np.asarray(s["values"], dtype=float).reshape(nx, npairs)
            vals[a][:, up] = flat
        box = tuple(doc["box"]) if doc.get("box") else None
        return cls(marks, float(g["x0"]), float(g["dx"]), nx, [s["t"] for s in doc["slices"]],
                   vals, float(doc["V_inf"]), float(doc["delta0"]), box)


def kernel_eval(k: Kernel, x: float, t: float, pair) -> float:
    """Bilinear kernel value for a pair given as atom indices or marks."""
    a, b = pair
    i = a if isinstance(a, (int, np.integer)) else k.marks.index(a)
    j = b if isinstance(b, (int, np.integer)) else k.marks.index(b)
    return k.eval(x, t, int(i), int(j))


def check_class(k: Kernel, floor: float | None = None) -> None:
    """Raise unless ``k`` vanishes off the cone and stays above ``floor`` on it."""
    cone = k.pairs.in_cone
    if np.any(k.values[..., ~cone] != 0):
        raise ValueError("kernel charges pairs outside the cone")
    fl = k.delta0 if floor is None else floor
    if cone.any() and k.values[..., cone].min() < fl - GEOM_TOL:
        raise ValueError(f"kernel drops below floor {fl} on the cone")


def marks_from_pairs(seq: Iterable[Sequence[float]]) -> list[Mark]:
    return [Mark(float(a), float(b)) for a, b in seq]
