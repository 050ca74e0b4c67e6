"""Piecewise-deterministic particle dynamics on a box ``[a-, a+] x [t0, t1]``.

A configuration is a sorted list of particle positions ``z_1 <= ... <= z_n``
and a strictly increasing chain of atom indices ``rho^0 < ... < rho^n``;
particle ``i`` separates ``rho^{i-1}`` (left) from ``rho^i`` (right) and moves
with velocity ``-alpha(rho^{i-1}, rho^i)``.  Random events are creations at
either wall and fragmentations; collisions merge particles and walls absorb them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import integrate, optimize

from .marks import Kernel, MarkSet

POS_TOL = 1e-12


class DegenerateRateError(ValueError):
    pass


class RunawayError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParticleConfig:
    t: float
    z: tuple[float, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.z) + 1:
            raise ValueError("need one more label than particles")
        if any(b <= a for a, b in zip(self.labels, self.labels[1:])):
            raise ValueError("labels must be strictly increasing")
        if any(b < a - POS_TOL for a, b in zip(self.z, self.z[1:])):
            raise ValueError("positions must be sorted")

    @property
    def n(self) -> int:
        return len(self.z)

    def velocities(self, marks: MarkSet) -> np.ndarray:
        a = marks.alpha_matrix
        lab = self.labels
        return np.array([-a[lab[i], lab[i + 1]] for i in range(self.n)])

    def check(self, marks: MarkSet, tol: float = 1e-9) -> None:
        """Raise unless the sticky condition holds for every co-located pair."""
        s = marks.sigma_tensor
        lab = self.labels
        for i in range(self.n - 1):
            if abs(self.z[i + 1] - self.z[i]) <= tol and s[lab[i], lab[i + 1], lab[i + 2]] > 0:
                raise ValueError(f"co-located particles {i}, {i + 1} should have merged")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str  # create- | create+ | frag | coag | exit
    z: float
    marks: tuple[int, ...]
    index: int
    rho_star: int | None = None
    side: int = 0

    def to_json(self, marks: MarkSet) -> dict:
        doc = {
            "t": self.t,
            "kind": self.kind,
            "z": self.z,
            "marks": [list(marks.atoms[i]) for i in self.marks],
            "index": self.index,
        }
        if self.rho_star is not None:
            doc["rho_star"] = list(marks.atoms[self.rho_star])
        if self.side:
            doc["side"] = self.side
        return doc


EventLog = list


@dataclass
class Trajectory:
    """Initial configuration, event log and the configuration after each event.

    Between ``snapshots[k].t`` and ``snapshots[k + 1].t`` every particle moves
    on a straight line with the velocity of its flanking labels.
    """

    marks: MarkSet
    box: tuple[float, float, float, float]
    snapshots: list[ParticleConfig]
    events: list[Event] = field(default_factory=list)
    triple_collisions: list[float] = field(default_factory=list)

    @property
    def initial(self) -> ParticleConfig:
        return self.snapshots[0]

    @property
    def t_end(self) -> float:
        return self.box[3]

    def _interval(self, t: float, right: bool = True) -> int:
        ts = [s.t for s in self.snapshots]
        if right:
            k = int(np.searchsorted(ts, t, side="right")) - 1
        else:
            k = int(np.searchsorted(ts, t, side="left")) - 1
        return min(max(k, 0), len(ts) - 1)

    def config_at(self, t: float, right: bool = True) -> ParticleConfig:
        """Configuration at ``t`` (just after events at ``t`` when ``right``)."""
        s = self.snapshots[self._interval(t, right)]
        v = s.velocities(self.marks)
        z = tuple(float(zi + vi * (t - s.t)) for zi, vi in zip(s.z, v))
        return ParticleConfig(t, z, s.labels)

    def label_at(self, x: float, t: float, right: bool = True) -> int:
        """Right-continuous label of the region containing ``x`` at ``t``."""
        c = self.config_at(t, right)
        k = sum(1 for zi in c.z if zi <= x + POS_TOL)
        return c.labels[k]

    def to_jsonl(self) -> list[dict]:
        s = self.initial
        head = {
            "header": True,
            "box": list(self.box),
            "t": s.t,
            "z": list(s.z),
            "labels": [list(self.marks.atoms[i]) for i in s.labels],
            "atoms": self.marks.to_json()["atoms"],
            "P": list(self.marks.P),
        }
        return [head] + [e.to_json(self.marks) for e in self.events]


def trajectory_from_jsonl(records: list[dict]) -> Trajectory:
    """Rebuild a trajectory by replaying the event records of :meth:`Trajectory.to_jsonl`."""
    head = records[0]
    if "atoms" not in head:
        raise ValueError("header record lacks the atom table")
    marks = MarkSet.from_json({"atoms": head["atoms"], "P": head.get("P")})
    idx = {tuple(a): k for k, a in enumerate(m.array().tolist() for m in marks.atoms)}

    def lab(m):
        return idx[tuple(float(c) for c in m)]

    a_minus, a_plus, t0, t1 = head["box"]
    cur = ParticleConfig(head["t"], tuple(head["z"]), tuple(lab(m) for m in head["labels"]))
    snaps = [cur]
    events = []
    for r in records[1:]:
        v = cur.velocities(marks)
        z = [zi + vi * (r["t"] - cur.t) for zi, vi in zip(cur.z, v)]
        labels = list(cur.labels)
        ms = tuple(lab(m) for m in r["marks"])
        i = r["index"]
        star = lab(r["rho_star"]) if "rho_star" in r else None
        kind = r["kind"]
        if kind == "create-":
            z.insert(0, a_minus)
            labels.insert(0, star)
        elif kind == "create+":
            z.append(a_plus)
            labels.append(star)
        elif kind == "frag":
            z.insert(i, r["z"])
            labels.insert(i + 1, star)
        elif kind == "coag":
            z[i] = r["z"]
            z.pop(i + 1)
            labels.pop(i + 1)
        elif kind == "exit":
            if r.get("side", 0) < 0:
                z.pop(0)
                labels.pop(0)
            else:
                z.pop()
                labels.pop()
        else:
            raise ValueError(f"unknown event kind {kind!r}")
        z = [min(max(zi, a_minus), a_plus) for zi in z]
        cur = ParticleConfig(r["t"], tuple(z), tuple(labels))
        snaps.append(cur)
        events.append(Event(r["t"], kind, r["z"], ms, i, star, r.get("side", 0)))
    return Trajectory(marks, (a_minus, a_plus, t0, t1), snaps, events)


# ------------------------------------------------------------ boundary sampler


def _row_intensity_nodes(f: Kernel, t: float, r: int) -> np.ndarray:
    """``lam(x, t, r)`` at every x-node (exactly linear in x between nodes)."""
    j, wt = f._t_weights(t)
    row = f.values[j] if wt == 0 else f.values[j] + wt * (f.values[j + 1] - f.values[j])
    return (row[:, r, :] * f.marks.weights).sum(-1)


def _invert_piecewise_linear(xs: np.ndarray, lam: np.ndarray, x: float, target: float, x_end: float):
    """Smallest ``y`` in ``(x, x_end]`` with ``int_x^y lam = target`` for piecewise-linear ``lam``."""
    dx = xs[1] - xs[0] if len(xs) > 1 else 1.0
    k = int(np.clip(math.floor((x - xs[0]) / dx), 0, max(len(xs) - 2, 0)))
    acc = 0.0
    cur = x
    while cur < x_end:
        hi = min(xs[k + 1], x_end) if len(xs) > 1 else x_end
        if hi <= cur:
            k += 1
            if k >= len(xs) - 1:
                break
            continue
        if len(xs) > 1:
            slope = (lam[k + 1] - lam[k]) / dx
            l0 = lam[k] + slope * (cur - xs[k])
        else:
            slope, l0 = 0.0, lam[0]
        h = hi - cur
        seg = l0 * h + 0.5 * slope * h * h
        if acc + seg >= target:
            need = target - acc
            if abs(slope) < 1e-14:
                d = need / l0
            else:
                # solve 0.5 s d^2 + l0 d - need = 0 for the root in [0, h]
                disc = max(l0 * l0 + 2.0 * slope * need, 0.0)
                d = 2.0 * need / (l0 + math.sqrt(disc))
            return cur + min(max(d, 0.0), h)
        acc += seg
        cur = hi
        k += 1
        if len(xs) > 1 and k >= len(xs) - 1 and cur < x_end:
            k = len(xs) - 2
    return None


def sample_boundary(f: Kernel, ell0, t0: float, span, rng: np.random.Generator) -> ParticleConfig:
    """Draw the bottom boundary: a jump process in x with intensity ``lam(x, t0, .)``.

    ``rho^0 ~ ell0`` (a probability vector against the weights), then jump
    positions are found by inverting the integrated intensity exactly (it is
    piecewise quadratic) and the new label is drawn from ``f(x, t0, rho, .) w``.
    """
    a_minus, a_plus = map(float, span)
    marks = f.marks
    w = marks.weights
    p0 = np.asarray(ell0, dtype=float) * w
    r = int(rng.choice(marks.n, p=p0 / p0.sum()))
    xs = f.x_nodes
    z, labels = [], [r]
    x = a_minus
    lam_cache: dict[int, np.ndarray] = {}
    while True:
        if r not in lam_cache:
            lam_cache[r] = _row_intensity_nodes(f, t0, r)
        lam = lam_cache[r]
        if not np.any(lam > 0):
            break
        E = rng.exponential()
        y = _invert_piecewise_linear(xs, lam, x, E, a_plus)
        if y is None:
            break
        probs = f.at(y, t0)[r] * w
        tot = probs.sum()
        if tot <= 0:
            break
        k = int(rng.choice(marks.n, p=probs / tot))
        z.append(y)
        labels.append(k)
        r = k
        x = y
    return ParticleConfig(t0, tuple(z), tuple(labels))


# ------------------------------------------------------------ rates


@dataclass(frozen=True)
class Rates:
    """Decomposed jump rates of a configuration at one time."""

    left: float
    frag: np.ndarray
    right: float
    left_parts: np.ndarray
    frag_parts: list
    right_parts: np.ndarray

    @property
    def total(self) -> float:
        return float(self.left + self.frag.sum() + self.right)


class _Channels:
    """Per-label candidate tables for the three jump channels."""

    def __init__(self, marks: MarkSet):
        a = marks.alpha_matrix
        s = marks.sigma_tensor
        w = marks.weights
        n = marks.n
        self.left = {}
        self.right = {}
        self.frag = {}
        for j in range(n):
            ks = [k for k in range(j) if a[k, j] < 0]
            self.left[j] = (np.array(ks, dtype=int), np.array([-a[k, j] * w[k] for k in ks]))
            ks = [k for k in range(j + 1, n) if a[j, k] > 0]
            self.right[j] = (np.array(ks, dtype=int), np.array([a[j, k] * w[k] for k in ks]))
        for i in range(n):
            for j in range(i + 1, n):
                ks = [k for k in range(i + 1, j) if s[i, k, j] < 0]
                self.frag[(i, j)] = (np.array(ks, dtype=int), np.array([-s[i, k, j] * w[k] for k in ks]))


def _frag_parts(F: np.ndarray, i: int, j: int, ks: np.ndarray, coef: np.ndarray) -> np.ndarray:
    num = coef * F[i, ks] * F[ks, j]
    if F[i, j] <= 0:
        if np.any(num > 0):
            raise DegenerateRateError(f"kernel vanishes on the existing pair ({i}, {j})")
        return np.zeros(len(ks))
    return num / F[i, j]


def total_rate(q: ParticleConfig, f: Kernel, ell, t: float, box=None, channels: _Channels | None = None) -> Rates:
    """Creation, fragmentation and total rates of ``q`` at time ``t``.

    ``box`` defaults to ``f.box``; positions are taken from ``q`` as given.
    """
    a_minus, a_plus = (box or f.box)[:2]
    ch = channels or _Channels(f.marks)
    lab = q.labels
    ks, coef = ch.left[lab[0]]
    if len(ks):
        e = ell.at(a_minus, t)
        if np.any(e <= 0):
            raise DegenerateRateError("marginal not positive at a-")
        F = f.at(a_minus, t)
        lp = coef * e[ks] * F[ks, lab[0]] / e[lab[0]]
    else:
        lp = np.zeros(0)
    ks, coef = ch.right[lab[-1]]
    rp = coef * f.at(a_plus, t)[lab[-1], ks] if len(ks) else np.zeros(0)
    fparts = []
    ftot = np.zeros(q.n)
    for i in range(q.n):
        ks, coef = ch.frag[(lab[i], lab[i + 1])]
        if len(ks):
            p = _frag_parts(f.at(q.z[i], t), lab[i], lab[i + 1], ks, coef)
            ftot[i] = p.sum()
        else:
            p = np.zeros(0)
        fparts.append(p)
    return Rates(float(lp.sum()), ftot, float(rp.sum()), lp, fparts, rp)


# ------------------------------------------------------------ deterministic flow


class _State:
    def __init__(self, q: ParticleConfig, marks: MarkSet, a_minus: float, a_plus: float):
        self.t = q.t
        self.z = list(q.z)
        self.lab = list(q.labels)
        self.marks = marks
        self.am, self.ap = a_minus, a_plus
        self.alpha = marks.alpha_matrix
        self.sigma = marks.sigma_tensor

    def v(self, i: int) -> float:
        return -self.alpha[self.lab[i], self.lab[i + 1]]

    def config(self) -> ParticleConfig:
        return ParticleConfig(self.t, tuple(self.z), tuple(self.lab))

    def advance(self, dt: float) -> None:
        if dt <= 0:
            return
        for i in range(len(self.z)):
            self.z[i] = min(max(self.z[i] + self.v(i) * dt, self.am), self.ap)
        for i in range(len(self.z) - 1):
            if self.z[i + 1] < self.z[i]:
                m = 0.5 * (self.z[i] + self.z[i + 1])
                self.z[i] = self.z[i + 1] = m
        self.t += dt

    def next_deterministic(self) -> float:
        """Time until the next wall exit or collision (inf if none)."""
        best = math.inf
        n = len(self.z)
        if n == 0:
            return best
        v0 = self.v(0)
        if v0 < 0:
            best = min(best, (self.z[0] - self.am) / -v0)
        vn = self.v(n - 1)
        if vn > 0:
            best = min(best, (self.ap - self.z[-1]) / vn)
        for i in range(n - 1):
            dv = self.v(i) - self.v(i + 1)
            gap = self.z[i + 1] - self.z[i]
            if gap <= POS_TOL and dv >= 0:
                return 0.0
            if dv > 0:
                best = min(best, gap / dv)
        return max(best, 0.0)

    def resolve(self, log: list, triples: list) -> bool:
        """Apply every wall exit and collision due now; True if anything happened."""
        changed = False
        while True:
            did = False
            n = len(self.z)
            if n and self.z[0] <= self.am + POS_TOL and self.v(0) < 0:
                log.append(Event(self.t, "exit", self.am, (self.lab[0], self.lab[1]), 0, side=-1))
                self.z.pop(0)
                self.lab.pop(0)
                changed = True
                continue
            if n and self.z[-1] >= self.ap - POS_TOL and self.v(n - 1) > 0:
                log.append(Event(self.t, "exit", self.ap, (self.lab[-2], self.lab[-1]), n - 1, side=1))
                self.z.pop()
                self.lab.pop()
                changed = True
                continue
            for i in range(n - 1):
                gap = self.z[i + 1] - self.z[i]
                if gap <= POS_TOL and self.v(i) >= self.v(i + 1):
                    if i + 2 < n and self.z[i + 2] - self.z[i + 1] <= POS_TOL and self.v(i + 1) >= self.v(i + 2):
                        triples.append(self.t)
                    zc = 0.5 * (self.z[i] + self.z[i + 1])
                    trio = (self.lab[i], self.lab[i + 1], self.lab[i + 2])
                    log.append(Event(self.t, "coag", zc, trio, i))
                    self.z[i] = zc
                    self.z.pop(i + 1)
                    self.lab.pop(i + 1)
                    did = True
                    break
            if not did:
                return changed
            changed = True


def flow_deterministic(q: ParticleConfig, dt: float, marks: MarkSet, box) -> tuple[ParticleConfig, list[Event]]:
    """Advance ``q`` by ``dt`` with exits and sticky collisions, no random jumps."""
    a_minus, a_plus = box[:2]
    st = _State(q, marks, a_minus, a_plus)
    log: list[Event] = []
    st.resolve(log, [])
    remaining = dt
    while remaining > 0:
        h = st.next_deterministic()
        if h >= remaining:
            st.advance(remaining)
            remaining = 0.0
        else:
            st.advance(h)
            remaining -= h
        st.resolve(log, [])
    return st.config(), log


# ------------------------------------------------------------ simulation


class _RateBound:
    """Constant upper bounds of each channel over the whole box, for thinning."""

    def __init__(self, f: Kernel, ell, a_minus: float, a_plus: float, ch: _Channels):
        self.ch = ch
        v = f.values
        xs = f.x_nodes
        i_m = int(np.argmin(np.abs(xs - a_minus)))
        i_p = int(np.argmin(np.abs(xs - a_plus)))
        lo = max(0, min(i_m, i_p) - 1)
        hi = min(f.nx, max(i_m, i_p) + 2)
        self.fmax = v[:, lo:hi].max(axis=(0, 1))
        self.fmin = v[:, lo:hi].min(axis=(0, 1))
        self.fmax_p = v[:, max(i_p - 1, 0):i_p + 2].max(axis=(0, 1))
        self.fmax_m = v[:, max(i_m - 1, 0):i_m + 2].max(axis=(0, 1))
        self.emax = self.emin = None
        if ell is not None:
            xe = ell.x_nodes
            k = int(np.argmin(np.abs(xe - a_minus)))
            ev = np.asarray(ell.values)[:, max(k - 1, 0):k + 2]
            self.emax = ev.max(axis=(0, 1))
            self.emin = ev.min(axis=(0, 1))

    def bound(self, lab) -> float:
        tot = 0.0
        ks, coef = self.ch.left[lab[0]]
        if len(ks):
            tot += float((coef * self.emax[ks] * self.fmax_m[ks, lab[0]] / self.emin[lab[0]]).sum())
        ks, coef = self.ch.right[lab[-1]]
        if len(ks):
            tot += float((coef * self.fmax_p[lab[-1], ks]).sum())
        for i in range(len(lab) - 1):
            ks, coef = self.ch.frag[(lab[i], lab[i + 1])]
            if len(ks):
                den = self.fmin[lab[i], lab[i + 1]]
                if den <= 0:
                    raise DegenerateRateError("kernel vanishes on an existing pair")
                tot += float((coef * self.fmax[lab[i], ks] * self.fmax[ks, lab[i + 1]]).sum() / den)
        return tot * (1.0 + 1e-9) + 1e-300


def _rate_along(st: _State, f, ell, box, ch, theta: float) -> float:
    dt = theta - st.t
    z = tuple(min(max(st.z[i] + st.v(i) * dt, st.am), st.ap) for i in range(len(st.z)))
    return total_rate(ParticleConfig(theta, z, tuple(st.lab)), f, ell, theta, box, ch).total


def _apply_jump(st: _State, f, ell, box, ch, rng, log: list) -> None:
    q = st.config()
    R = total_rate(q, f, ell, st.t, box, ch)
    parts = np.concatenate([[R.left], R.frag, [R.right]])
    tot = parts.sum()
    c = int(rng.choice(len(parts), p=parts / tot))
    lab = st.lab
    if c == 0:
        ks, _ = ch.left[lab[0]]
        k = int(ks[rng.choice(len(ks), p=R.left_parts / R.left_parts.sum())])
        log.append(Event(st.t, "create-", st.am, (k, lab[0]), 0, rho_star=k))
        st.z.insert(0, st.am)
        st.lab.insert(0, k)
    elif c == len(parts) - 1:
        ks, _ = ch.right[lab[-1]]
        k = int(ks[rng.choice(len(ks), p=R.right_parts / R.right_parts.sum())])
        log.append(Event(st.t, "create+", st.ap, (lab[-1], k), len(st.z), rho_star=k))
        st.z.append(st.ap)
        st.lab.append(k)
    else:
        i = c - 1
        ks, _ = ch.frag[(lab[i], lab[i + 1])]
        p = R.frag_parts[i]
        k = int(ks[rng.choice(len(ks), p=p / p.sum())])
        zi = st.z[i]
        log.append(Event(st.t, "frag", zi, (lab[i], k, lab[i + 1]), i, rho_star=k))
        st.z.insert(i, zi)
        st.lab.insert(i + 1, k)


def simulate(
    q0: ParticleConfig,
    f: Kernel,
    ell,
    horizon,
    rng: np.random.Generator,
    box=None,
    method: str = "inversion",
    max_events: int = 1_000_000,
) -> Trajectory:
    """Run the particle system from ``q0`` over ``horizon = (t0, t1)``.

    ``method="inversion"`` solves ``int r = Exp(1)`` by adaptive quadrature and
    bracketing root search (xtol 1e-10); ``method="thinning"`` draws candidate
    times from a dominating constant rate and accepts with probability
    ``r / r_bar``.  Both give the same law.
    """
    t0, t1 = map(float, horizon)
    a_minus, a_plus = map(float, (box or f.box))
    bx = (a_minus, a_plus)
    marks = f.marks
    if min(q0.labels) < 0 or max(q0.labels) >= marks.n:
        raise ValueError("labels must index the kernel's marks")
    ch = _Channels(marks)
    st = _State(ParticleConfig(t0, q0.z, q0.labels), marks, a_minus, a_plus)
    events: list[Event] = []
    snaps = [st.config()]
    triples: list[float] = []
    if st.resolve(events, triples):
        snaps.append(st.config())
    bound = _RateBound(f, ell, a_minus, a_plus, ch) if method == "thinning" else None
    E = rng.exponential()
    n_jumps = 0
    while st.t < t1:
        h = st.next_deterministic()
        seg_end = min(st.t + h, t1)
        jumped = False
        if method == "thinning":
            rb = bound.bound(st.lab)
            while rb > 0:
                cand = st.t + E / rb
                if cand > seg_end:
                    E -= (seg_end - st.t) * rb
                    break
                st.advance(cand - st.t)
                E = rng.exponential()
                r = _rate_along(st, f, ell, bx, ch, st.t)
                if r > rb * (1 + 1e-12):
                    raise RuntimeError("thinning bound violated")
                if rng.random() * rb < r:
                    jumped = True
                    break
        elif method == "inversion":
            fn = lambda th: _rate_along(st, f, ell, bx, ch, th)  # noqa: E731
            I = _integral(fn, st.t, seg_end, f.times) if seg_end > st.t else 0.0
            if I >= E:
                target = E
                t_start = st.t
                tau = optimize.brentq(
                    lambda s: _integral(fn, t_start, s, f.times) - target, t_start, seg_end, xtol=1e-10, rtol=4 * np.finfo(float).eps
                )
                st.advance(tau - st.t)
                E = rng.exponential()
                jumped = True
            else:
                E -= I
        else:
            raise ValueError(f"unknown method {method!r}")
        if jumped:
            _apply_jump(st, f, ell, bx, ch, rng, events)
            n_jumps += 1
            if n_jumps > max_events:
                raise RunawayError(f"more than {max_events} jumps")
            snaps.append(st.config())
            continue
        st.advance(seg_end - st.t)
        if seg_end == t1:
            st.t = t1
            break
        if st.resolve(events, triples):
            snaps.append(st.config())
    return Trajectory(marks, (a_minus, a_plus, t0, t1), snaps, events, triples)


def _integral(fn, a: float, b: float, times: np.ndarray) -> float:
    if b <= a:
        return 0.0
    pts = [t for t in times if a < t < b]
    if len(pts) > 40:
        # integrate piece by piece between interpolation knots
        edges = [a] + pts + [b]
        return float(sum(integrate.quad(fn, lo, hi, epsabs=1e-12, epsrel=1e-10)[0] for lo, hi in zip(edges, edges[1:])))
    return float(integrate.quad(fn, a, b, points=pts or None, epsabs=1e-12, epsrel=1e-10, limit=200)[0])


def events_to_jsonl(traj: Trajectory) -> str:
    return "\n".join(json.dumps(r) for r in traj.to_jsonl()) + "\n"


def run_replicas(f, ell, ell0, box, n: int, seed: int, method: str = "thinning", first: int = 0) -> Iterable[Trajectory]:
    """Independent runs with streams keyed by ``(seed, replica)``."""
    from .rng import replica_rng

    a_minus, a_plus, t0, t1 = box
    for r in range(first, first + n):
        rng = replica_rng(seed, r)
        q0 = sample_boundary(f, ell0, t0, (a_minus, a_plus), rng)
        yield simulate(q0, f, ell, (t0, t1), rng, box=(a_minus, a_plus), method=method)
