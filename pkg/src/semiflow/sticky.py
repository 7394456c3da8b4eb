"""Sticky particle dynamics on the line and the induced flow map.

Particles follow ``x_i'' = -sum_j m_j W'(x_i - x_j)`` until two clusters
meet; they then stick, moving on with the mass-weighted average velocity.
The run is stored as a ``FlowMap`` sampled on the output grid plus a row
at every merge, from which the pressureless Euler solution
``rho_t = X(t)# rho_0`` and its velocity field are read off.

Collisions are detected as a sign change of an adjacent cluster gap within
a step and located by bisection on the step length (each trial re-runs the
step from its start), so the located time is within ``event_tol`` of the
discrete crossing.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .integrators import SCHEMES, NumericalError, mean_field
from .measures import EmpiricalMeasure, format_float
from .report import CheckReport
from .vlasov import MASS_SUM_TOL, InteractionPotential

CHECK_TOL = 1e-8


class AffineProfile:
    """``v0(x) = slope * x + intercept``."""

    def __init__(self, slope: float, intercept: float = 0.0):
        self.slope = float(slope)
        self.intercept = float(intercept)

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def total_variation(self, a: float, b: float) -> float:
        return abs(self.slope) * abs(b - a)

    def describe(self) -> dict:
        return {"kind": "affine", "slope": self.slope, "intercept": self.intercept}


class PiecewiseLinearProfile:
    """Linear interpolation between knots, constant outside them."""

    def __init__(self, knots: Sequence[float], values: Sequence[float]):
        k = np.asarray(knots, dtype=float)
        v = np.asarray(values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape or k.shape[0] < 2 or np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing with matching values (at least two)")
        self.knots, self.values = k, v
        self._slopes = np.abs(np.diff(v) / np.diff(k))

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.knots, self.values)

    def total_variation(self, a: float, b: float) -> float:
        lo, hi = min(a, b), max(a, b)
        left = np.clip(self.knots[:-1], lo, hi)
        right = np.clip(self.knots[1:], lo, hi)
        return float(np.sum(self._slopes * (right - left)))

    def describe(self) -> dict:
        return {"kind": "piecewise_linear", "knots": self.knots.tolist(), "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class StickyInitialData:
    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray
    potential: InteractionPotential
    profile: AffineProfile | PiecewiseLinearProfile | None = None

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float).reshape(-1)
        v = np.asarray(self.velocities, dtype=float).reshape(-1)
        m = np.asarray(self.masses, dtype=float).reshape(-1)
        if x.shape[0] == 0 or x.shape != v.shape or x.shape != m.shape:
            raise ValueError("positions, velocities and masses need equal nonzero length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("initial positions must be strictly increasing")
        if np.any(m <= 0) or abs(m.sum() - 1.0) > MASS_SUM_TOL:
            raise ValueError("masses must be positive and sum to 1")
        if self.potential.dim != 1:
            raise ValueError("sticky dynamics is one-dimensional")
        for name, arr in (("positions", x), ("velocities", v), ("masses", m)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_profile(cls, positions, masses, profile, potential: InteractionPotential) -> "StickyInitialData":
        x = np.asarray(positions, dtype=float)
        return cls(x, profile(x), masses, potential, profile)

    @property
    def n(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class StickyConfig:
    dt: float = 1e-3
    scheme: str = "rk4"
    max_steps: int = 10_000_000
    output_stride: int = 1
    event_tol: float = 1e-10
    merge_tol: float = 1e-9

    def __post_init__(self):
        if not self.dt > 0 or self.event_tol <= 0 or self.merge_tol <= 0:
            raise ValueError("dt and tolerances must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.output_stride < 1 or self.max_steps < 1:
            raise ValueError("output_stride and max_steps must be >= 1")


@dataclass(frozen=True)
class MergeEvent:
    time: float
    merged_indices: list[int]
    cluster_masses: list[float]
    pre_velocities: list[float]
    post_velocity: float
    position: float

    @property
    def momentum_defect(self) -> float:
        pre = math.fsum(m * v for m, v in zip(self.cluster_masses, self.pre_velocities))
        return abs(pre - math.fsum(self.cluster_masses) * self.post_velocity)

    def as_dict(self) -> dict:
        return {
            "time": self.time,
            "merged_indices": self.merged_indices,
            "cluster_masses": self.cluster_masses,
            "pre_velocities": self.pre_velocities,
            "post_velocity": self.post_velocity,
            "position": self.position,
        }


class _UnionFind:
    """Union-find over initial indices; the representative is the smallest index."""

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        lo, hi = min(ra, rb), max(ra, rb)
        self.parent[hi] = lo
        return lo


@dataclass(frozen=True, eq=False)
class FlowMap:
    """Sampled sticky trajectories of every initial particle.

    Row ``k`` holds time ``times[k]``; at merge rows ``vel_left`` and
    ``vel_right`` differ.  ``force_integral[k, i]`` is
    ``int_0^t sum_j m_j W'(x_i - x_j) dtau``, accumulated with the same
    Runge-Kutta/Verlet weights as the velocity.
    """

    data: StickyInitialData
    config: StickyConfig
    T: float
    times: np.ndarray
    is_event: np.ndarray
    positions: np.ndarray
    vel_left: np.ndarray
    vel_right: np.ndarray
    labels: np.ndarray
    force_integral: np.ndarray
    events: list[MergeEvent] = field(default_factory=list)

    @property
    def masses(self) -> np.ndarray:
        return self.data.masses

    @property
    def L(self) -> float:
        return self.data.potential.modulus

    def event_times(self) -> np.ndarray:
        return np.array([e.time for e in self.events])

    def clusters_at(self, k: int) -> list[list[int]]:
        """Member lists of the clusters in row ``k`` in spatial order."""
        groups: dict[int, list[int]] = {}
        for i, lab in enumerate(self.labels[k]):
            groups.setdefault(int(lab), []).append(i)
        return sorted(groups.values(), key=lambda g: self.positions[k, g[0]])

    def to_csv(self) -> str:
        """One row per cluster and stored time.

        At a merge row ``velocity_left`` is the merged cluster's incoming
        momentum divided by its mass; the velocities of the colliding
        subclusters are in the events JSON.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "cluster_id", "position", "velocity_left", "velocity_right", "mass"])
        m = self.masses
        for k, t in enumerate(self.times):
            for members in self.clusters_at(k):
                i = members[0]
                w.writerow(
                    [
                        format_float(t),
                        int(self.labels[k, i]),
                        format_float(self.positions[k, i]),
                        format_float(math.fsum(m[members] * self.vel_left[k, members]) / math.fsum(m[members])),
                        format_float(self.vel_right[k, i]),
                        format_float(math.fsum(m[members])),
                    ]
                )
        return buf.getvalue()

    def events_json(self) -> str:
        return json.dumps([e.as_dict() for e in self.events], indent=2)


def _cluster_force(y: np.ndarray, M: np.ndarray, pot: InteractionPotential) -> np.ndarray:
    return mean_field(y[:, None], M, pot.dw)[:, 0]


def _step(y, u, M, pot, h, scheme):
    """Advance clusters by ``h``; also return the force integral over the step."""
    if scheme == "rk4":

        def rhs(s):
            f = _cluster_force(s[0], M, pot)
            return [s[1], -f, f]

        from .integrators import rk4_step

        y1, u1, J = rk4_step(rhs, [y, u, np.zeros_like(y)], h)
        return y1, u1, J
    f0 = _cluster_force(y, M, pot)
    u_half = u - 0.5 * h * f0
    y1 = y + h * u_half
    f1 = _cluster_force(y1, M, pot)
    return y1, u_half - 0.5 * h * f1, 0.5 * h * (f0 + f1)


def _min_gap(y: np.ndarray) -> float:
    return float(np.min(np.diff(y))) if y.shape[0] > 1 else math.inf


class _Evolution:
    def __init__(self, data: StickyInitialData, config: StickyConfig):
        self.data, self.config = data, config
        self.pot = data.potential
        n = data.n
        self.uf = _UnionFind(n)
        self.members: list[list[int]] = [[i] for i in range(n)]
        self.y = np.array(data.positions)
        self.u = np.array(data.velocities)
        self.M = np.array(data.masses)
        self.I = np.zeros(n)
        self.rows: list[tuple] = []
        self.events: list[MergeEvent] = []
        self.steps = 0

    def particle_view(self, values: np.ndarray) -> np.ndarray:
        out = np.empty(self.data.n)
        for c, mem in enumerate(self.members):
            out[mem] = values[c]
        return out

    def record(self, t: float, event: bool, u_left: np.ndarray | None = None):
        pos = self.particle_view(self.y)
        right = self.particle_view(self.u)
        left = right if u_left is None else u_left
        labels = np.array([self.uf.find(i) for i in range(self.data.n)])
        self.rows.append((t, event, pos, left, right, labels, self.I.copy()))

    def advance(self, h: float):
        self.steps += 1
        if self.steps > self.config.max_steps:
            raise NumericalError(f"step budget max_steps={self.config.max_steps} exhausted", step=self.steps)
        y, u, J = _step(self.y, self.u, self.M, self.pot, h, self.config.scheme)
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(u))):
            raise NumericalError("non-finite state encountered", step=self.steps)
        return y, u, J

    def accept(self, y, u, J):
        self.y, self.u = y, u
        for c, mem in enumerate(self.members):
            self.I[mem] += J[c]

    def merge(self, t: float) -> bool:
        """Merge every chain of adjacent clusters closer than ``merge_tol``."""
        gaps = np.diff(self.y)
        close = gaps <= self.config.merge_tol
        if not np.any(close):
            return False
        u_left = self.particle_view(self.u)
        groups: list[list[int]] = [[0]]
        for c in range(1, len(self.members)):
            if close[c - 1]:
                groups[-1].append(c)
            else:
                groups.append([c])
        new_y, new_u, new_M, new_members = [], [], [], []
        for g in groups:
            if len(g) == 1:
                c = g[0]
                new_y.append(self.y[c])
                new_u.append(self.u[c])
                new_M.append(self.M[c])
                new_members.append(self.members[c])
                continue
            Ms = self.M[g]
            Mtot = math.fsum(Ms)
            u_post = math.fsum(Ms * self.u[g]) / Mtot
            y_post = math.fsum(Ms * self.y[g]) / Mtot
            mem = sorted(i for c in g for i in self.members[c])
            for i in mem[1:]:
                self.uf.union(mem[0], i)
            self.events.append(
                MergeEvent(
                    time=t,
                    merged_indices=mem,
                    cluster_masses=[float(x) for x in Ms],
                    pre_velocities=[float(x) for x in self.u[g]],
                    post_velocity=u_post,
                    position=y_post,
                )
            )
            new_y.append(y_post)
            new_u.append(u_post)
            new_M.append(Mtot)
            new_members.append(mem)
        if len(self.events) > self.data.n - 1:
            raise RuntimeError("internal invariant violated: more merges than N - 1")
        self.y, self.u, self.M = np.array(new_y), np.array(new_u), np.array(new_M)
        self.members = new_members
        self.record(t, True, u_left)
        return True

    def run(self, T: float) -> FlowMap:
        cfg = self.config
        if not T > 0:
            raise ValueError("T must be positive")
        if _min_gap(self.y) <= cfg.merge_tol:
            raise ValueError("initial particles closer than merge_tol")
        nsteps = max(1, int(round(T / cfg.dt)))
        if nsteps > cfg.max_steps:
            raise NumericalError(f"T/dt needs {nsteps} steps, above max_steps={cfg.max_steps}")
        h = T / nsteps
        t = 0.0
        self.record(0.0, False)
        for k in range(1, nsteps + 1):
            t_target = T if k == nsteps else k * h
            while t < t_target:
                span = t_target - t
                y1, u1, J1 = self.advance(span)
                if len(self.members) > 1 and _min_gap(y1) <= 0.0:
                    lo, hi = 0.0, span
                    while hi - lo > cfg.event_tol:
                        mid = 0.5 * (lo + hi)
                        ym, _, _ = self.advance(mid)
                        if _min_gap(ym) <= 0.0:
                            hi = mid
                        else:
                            lo = mid
                    if hi < span:
                        y1, u1, J1 = self.advance(hi)
                        t = min(t + hi, t_target)
                    else:
                        t = t_target
                    self.accept(y1, u1, J1)
                    if not self.merge(t):
                        raise RuntimeError("internal invariant violated: located crossing but nothing to merge")
                else:
                    self.accept(y1, u1, J1)
                    t = t_target
                    if len(self.members) > 1:
                        self.merge(t)
            last_t = self.rows[-1][0]
            if (k % cfg.output_stride == 0 or k == nsteps) and last_t != t_target:
                self.record(t_target, False)
        cols = list(zip(*self.rows))
        return FlowMap(
            data=self.data,
            config=cfg,
            T=float(T),
            times=np.array(cols[0], dtype=float),
            is_event=np.array(cols[1], dtype=bool),
            positions=np.array(cols[2]),
            vel_left=np.array(cols[3]),
            vel_right=np.array(cols[4]),
            labels=np.array(cols[5], dtype=int),
            force_integral=np.array(cols[6]),
            events=self.events,
        )


def evolve(data: StickyInitialData, T: float, config: StickyConfig | None = None) -> FlowMap:
    return _Evolution(data, config or StickyConfig()).run(T)


@dataclass(frozen=True)
class FlowState:
    """All particles at one instant: positions, one-sided velocities, force integrals."""

    time: float
    positions: np.ndarray
    vel_left: np.ndarray
    vel_right: np.ndarray
    force_integral: np.ndarray
    labels: np.ndarray


def state_at(fm: FlowMap, t: float) -> FlowState:
    """Exact row lookup, or re-integration from the preceding row.

    No merge happens strictly between two stored rows, so stepping the
    clusters of the earlier row forward reproduces the run.
    """
    if t < 0 or t > fm.T * (1 + 1e-14):
        raise ValueError(f"t={t} outside [0, {fm.T}]")
    k = int(np.searchsorted(fm.times, t, side="right")) - 1
    k = max(k, 0)
    if fm.times[k] == t or k == len(fm.times) - 1 and abs(fm.times[k] - t) <= 1e-14 * max(1.0, fm.T):
        return FlowState(t, fm.positions[k], fm.vel_left[k], fm.vel_right[k], fm.force_integral[k], fm.labels[k])
    groups = fm.clusters_at(k)
    m = fm.masses
    y = np.array([fm.positions[k, g[0]] for g in groups])
    u = np.array([fm.vel_right[k, g[0]] for g in groups])
    M = np.array([math.fsum(m[g]) for g in groups])
    I = np.array(fm.force_integral[k])
    span = t - fm.times[k]
    nsub = max(1, int(math.ceil(span / fm.config.dt - 1e-12)))
    h = span / nsub
    for _ in range(nsub):
        y, u, J = _step(y, u, M, fm.data.potential, h, fm.config.scheme)
        for c, g in enumerate(groups):
            I[g] += J[c]
    pos = np.empty(fm.data.n)
    vel = np.empty(fm.data.n)
    for c, g in enumerate(groups):
        pos[g] = y[c]
        vel[g] = u[c]
    return FlowState(t, pos, vel, vel.copy(), I, fm.labels[k])


def _resolve_index(fm: FlowMap, who) -> int:
    if isinstance(who, (int, np.integer)):
        if not 0 <= int(who) < fm.data.n:
            raise ValueError(f"unknown initial index {who}")
        return int(who)
    y = float(who)
    hits = np.nonzero(np.abs(fm.data.positions - y) <= 1e-12 * max(1.0, abs(y)))[0]
    if hits.size == 0:
        raise ValueError(f"{y} is not an initial support point")
    return int(hits[0])


def flow_map_eval(fm: FlowMap, who, t: float) -> tuple[float, float, float]:
    """``(X(y, t), v_left, v_right)`` for an initial index or initial position ``y``."""
    i = _resolve_index(fm, who)
    s = state_at(fm, t)
    return float(s.positions[i]), float(s.vel_left[i]), float(s.vel_right[i])


def velocity_field(fm: FlowMap, x: float, t: float, tol: float = 1e-9) -> float:
    """Borel velocity field: right velocity of the cluster at ``x``, zero off the support."""
    s = state_at(fm, t)
    hit = np.nonzero(np.abs(s.positions - x) <= tol)[0]
    return float(s.vel_right[hit[0]]) if hit.size else 0.0


def spatial_measure(fm: FlowMap, t: float) -> EmpiricalMeasure:
    """``rho_t = X(t)# rho_0`` as a weighted point cloud (one point per initial particle)."""
    s = state_at(fm, t)
    return EmpiricalMeasure(s.positions, fm.masses)


def _require_regular_time(fm: FlowMap, t: float, what: str) -> None:
    ev = fm.event_times()
    if ev.size and np.min(np.abs(ev - t)) <= fm.config.event_tol:
        raise ValueError(f"{what}={t} coincides with a merge; one-sided limits are ambiguous there")


def averaging_check(fm: FlowMap, g: Callable[[np.ndarray], np.ndarray], s: float, t: float) -> float:
    """Residual of the averaging identity between times ``s < t``.

    Compares ``sum m_i g(x_i(t)) x_i'(t+)`` with
    ``sum m_i g(x_i(t)) [x_i'(s+) - int_s^t sum_j m_j W'(x_i - x_j)]``.
    """
    if not 0 <= s < t <= fm.T:
        raise ValueError("need 0 <= s < t <= T")
    _require_regular_time(fm, s, "s")
    _require_regular_time(fm, t, "t")
    a, b = state_at(fm, s), state_at(fm, t)
    gt = np.asarray(g(b.positions), dtype=float)
    m = fm.masses
    lhs = math.fsum(m * gt * b.vel_right)
    rhs = math.fsum(m * gt * (a.vel_right - (b.force_integral - a.force_integral)))
    return abs(lhs - rhs)


def conditional_velocity_check(fm: FlowMap, t: float) -> float:
    """Max over clusters of ``|u_C(t) - avg_{i in C} (v_i - int_0^t force_i)|``."""
    _require_regular_time(fm, t, "t")
    s = state_at(fm, t)
    m, v0 = fm.masses, fm.data.velocities
    worst = 0.0
    for lab in np.unique(s.labels):
        mem = np.nonzero(s.labels == lab)[0]
        target = math.fsum(m[mem] * (v0[mem] - s.force_integral[mem])) / math.fsum(m[mem])
        worst = max(worst, float(np.max(np.abs(s.vel_right[mem] - target))))
    return worst


def _clipped(name: str, raw: float, tol: float, details: dict) -> CheckReport:
    """Violations are reported as nonnegative; the signed margin stays in ``details``."""
    return CheckReport(name, max(0.0, raw), tol, {**details, "signed_margin": raw})


def _need_positive_modulus(fm: FlowMap, what: str) -> float:
    L = fm.L
    if L <= 0:
        raise ValueError(f"{what} needs a semiconvexity modulus L > 0")
    return L


def entropy_check(fm: FlowMap, t: float, tol: float = CHECK_TOL) -> CheckReport:
    """One-sided velocity bound ``(v(x)-v(y))(x-y) <= sqrt(L)/tanh(sqrt(L) t) (x-y)^2``.

    Violation per pair is normalized by ``1 + (x-y)^2``.
    """
    if t <= 0:
        raise ValueError("entropy bound needs t > 0")
    L = _need_positive_modulus(fm, "entropy_check")
    s = state_at(fm, t)
    x, v = s.positions, s.vel_right
    iu = np.triu_indices(x.shape[0], k=1)
    if iu[0].size == 0:
        return CheckReport("entropy", 0.0, tol, {"t": t, "pairs": 0})
    dx = x[iu[0]] - x[iu[1]]
    dv = v[iu[0]] - v[iu[1]]
    rL = math.sqrt(L)
    viol = (dv * dx - rL / math.tanh(rL * t) * dx * dx) / (1.0 + dx * dx)
    return _clipped("entropy", float(np.max(viol)), tol, {"t": t, "pairs": int(dx.size)})


def qspp_check(fm: FlowMap, s: float, t: float, tol: float = CHECK_TOL) -> CheckReport:
    """``|x_i(t)-x_j(t)|/sinh(sqrt(L) t) - |x_i(s)-x_j(s)|/sinh(sqrt(L) s)`` maximized over pairs."""
    if not 0 < s <= t:
        raise ValueError("need 0 < s <= t")
    L = _need_positive_modulus(fm, "qspp_check")
    rL = math.sqrt(L)
    a, b = state_at(fm, s), state_at(fm, t)
    iu = np.triu_indices(fm.data.n, k=1)
    if iu[0].size == 0:
        return CheckReport("qspp", 0.0, tol, {"s": s, "t": t})
    ds = np.abs(a.positions[iu[0]] - a.positions[iu[1]])
    dt_ = np.abs(b.positions[iu[0]] - b.positions[iu[1]])
    viol = dt_ / math.sinh(rL * t) - ds / math.sinh(rL * s)
    return _clipped("qspp", float(np.max(viol)), tol, {"s": s, "t": t})


def time_zero_bound_check(fm: FlowMap, t: float, tol: float = CHECK_TOL) -> CheckReport:
    """``x_i(t)-x_j(t) <= cosh(sqrt(L)t)(x_i-x_j) + sinh(sqrt(L)t)/sqrt(L) int_{x_j}^{x_i} |v0'|``."""
    prof = fm.data.profile
    if prof is None:
        raise ValueError("time_zero_bound_check needs the initial velocity profile (for int |v0'|)")
    if t < 0:
        raise ValueError("t must be nonnegative")
    L = fm.L
    rL = math.sqrt(L)
    growth = math.cosh(rL * t)
    spread = math.sinh(rL * t) / rL if L > 0 else t
    s = state_at(fm, t)
    x0 = fm.data.positions
    iu = np.triu_indices(fm.data.n, k=1)
    if iu[0].size == 0:
        return CheckReport("time_zero_bound", 0.0, tol, {"t": t})
    hi, lo = iu[1], iu[0]  # x0 sorted, so x0[hi] > x0[lo]
    tv = np.array([prof.total_variation(x0[j], x0[i]) for i, j in zip(hi, lo)])
    lhs = s.positions[hi] - s.positions[lo]
    rhs = growth * (x0[hi] - x0[lo]) + spread * tv
    return _clipped("time_zero_bound", float(np.max(lhs - rhs)), tol, {"t": t})


def monotonicity_check(fm: FlowMap, t: float) -> CheckReport:
    """``X(y, t) <= X(z, t)`` for ordered initial points ``y <= z``."""
    s = state_at(fm, t)
    worst = float(np.max(-np.diff(s.positions))) if fm.data.n > 1 else 0.0
    return _clipped("monotone_flow", worst, 0.0, {"t": t})


def _energy(x: np.ndarray, v: np.ndarray, m: np.ndarray, pot: InteractionPotential) -> float:
    diff = (x[:, None] - x[None, :])[..., None]
    return 0.5 * float(m @ (v * v)) + 0.5 * float(m @ pot.w(diff) @ m)


def energy_series(fm: FlowMap) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(times, E(t+), E(t-))`` at every stored row."""
    m, pot = fm.masses, fm.data.potential
    right = np.array([_energy(fm.positions[k], fm.vel_right[k], m, pot) for k in range(len(fm.times))])
    left = np.array([_energy(fm.positions[k], fm.vel_left[k], m, pot) for k in range(len(fm.times))])
    return fm.times.copy(), right, left


def energy_monotonicity_check(fm: FlowMap, slack: float = CHECK_TOL) -> CheckReport:
    """Energy never rises between rows and drops strictly at merges of unequal velocities."""
    _, right, left = energy_series(fm)
    rise = float(np.max(left[1:] - right[:-1])) if len(right) > 1 else 0.0
    drops, strict_fail = [], 0
    for k in np.nonzero(fm.is_event)[0]:
        drops.append(float(left[k] - right[k]))
        if np.any(fm.vel_left[k] != fm.vel_right[k]) and not right[k] < left[k]:
            strict_fail += 1
    return CheckReport(
        "energy_monotone",
        max(0.0, rise) if strict_fail == 0 else math.inf,
        slack,
        {"max_rise_between_rows": rise, "event_drops": drops, "non_strict_event_drops": strict_fail},
    )


def momentum_check(fm: FlowMap, tol: float = 1e-12) -> CheckReport:
    """Momentum balance of every merge: ``sum M_c u_c(t-) = (sum M_c) u(t+)``."""
    worst = max((e.momentum_defect for e in fm.events), default=0.0)
    return CheckReport("merge_momentum", worst, tol, {"events": len(fm.events)})


def separation_check(fm: FlowMap) -> CheckReport:
    """Once two particles share a cluster they share positions at every later row."""
    bad = 0
    for k in range(len(fm.times)):
        labels = fm.labels[k]
        for lab in np.unique(labels):
            mem = labels == lab
            if np.ptp(fm.positions[k, mem]) != 0.0 or np.ptp(fm.vel_right[k, mem]) != 0.0:
                bad += 1
        if k and np.any(fm.labels[k] > fm.labels[k - 1]):
            bad += 1
    return CheckReport("merged_never_separate", float(bad), 0.0, {})


@dataclass(frozen=True)
class EulerTestFunction:
    """``phi(x, t)`` with partials; callables take an array ``x`` and scalar ``t``."""

    phi: Callable[[np.ndarray, float], np.ndarray]
    phi_t: Callable[[np.ndarray, float], np.ndarray]
    phi_x: Callable[[np.ndarray, float], np.ndarray]


def separable_test_function(
    space: Callable[[np.ndarray], np.ndarray],
    space_dx: Callable[[np.ndarray], np.ndarray],
    T: float,
) -> EulerTestFunction:
    """``phi(x, t) = space(x) (1 - t/T)^2``, which vanishes with its time derivative at ``T``."""

    def cut(t):
        return (1.0 - t / T) ** 2

    def cut_t(t):
        return -2.0 * (1.0 - t / T) / T

    return EulerTestFunction(
        phi=lambda x, t: space(x) * cut(t),
        phi_t=lambda x, t: space(x) * cut_t(t),
        phi_x=lambda x, t: space_dx(x) * cut(t),
    )


_GAUSS3 = (np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)]), np.array([5.0, 8.0, 5.0]) / 9.0)


def euler_weak_residual(fm: FlowMap, test: EulerTestFunction, quadrature: str = "trapezoid") -> tuple[float, float]:
    """Defects of the mass and momentum weak forms on ``[0, T]``.

    ``test`` should vanish at ``T``.  Each stored segment is integrated
    separately, with right limits at its start and left limits at its end,
    so velocity jumps at merges are handled exactly.  ``quadrature`` is
    ``"trapezoid"`` (on stored rows) or ``"gauss"`` (3-point Gauss-Legendre
    per segment, interior points by re-integration).
    """
    if quadrature not in ("trapezoid", "gauss"):
        raise ValueError("quadrature must be 'trapezoid' or 'gauss'")
    m, pot = fm.masses, fm.data.potential

    def integrands(x, v, t):
        field_ = mean_field(x[:, None], m, pot.dw)[:, 0]
        pt, px, p = test.phi_t(x, t), test.phi_x(x, t), test.phi(x, t)
        mass = float(m @ (pt + v * px))
        mom = float(m @ (v * pt + v * v * px)) - float(m @ (p * field_))
        return np.array([mass, mom])

    total = np.zeros(2)
    for k in range(len(fm.times) - 1):
        t0, t1 = fm.times[k], fm.times[k + 1]
        h = t1 - t0
        if h <= 0:
            continue
        if quadrature == "trapezoid":
            a = integrands(fm.positions[k], fm.vel_right[k], t0)
            b = integrands(fm.positions[k + 1], fm.vel_left[k + 1], t1)
            total += 0.5 * h * (a + b)
        else:
            nodes, weights = _GAUSS3
            for z, wq in zip(nodes, weights):
                tq = t0 + 0.5 * h * (z + 1.0)
                s = state_at(fm, tq)
                total += 0.5 * h * wq * integrands(s.positions, s.vel_right, tq)
    x0, v0 = fm.data.positions, fm.data.velocities
    p0 = test.phi(x0, 0.0)
    mass_res = abs(total[0] + float(m @ p0))
    mom_res = abs(total[1] + float(m @ (p0 * v0)))
    return mass_res, mom_res


@dataclass
class StickyRunReport:
    checks: list[CheckReport]
    energy_times: np.ndarray
    energy: np.ndarray

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
            "energy": {"t": self.energy_times.tolist(), "E": self.energy.tolist()},
        }


def _regular_times(fm: FlowMap, requested: Sequence[float]) -> list[float]:
    ev = fm.event_times()
    out = []
    for t in requested:
        if 0 < t <= fm.T and not (ev.size and np.min(np.abs(ev - t)) <= fm.config.event_tol):
            out.append(float(t))
    return out


def run_checks(fm: FlowMap, times: Sequence[float] = (0.1, 0.5, 1.0, 2.0)) -> StickyRunReport:
    """Every flow-map invariant at the requested sample times."""
    ts = _regular_times(fm, times)
    checks = [momentum_check(fm), separation_check(fm), energy_monotonicity_check(fm)]
    checks += [monotonicity_check(fm, t) for t in ts]
    if fm.L > 0:
        checks += [entropy_check(fm, t) for t in ts]
        checks += [qspp_check(fm, s, t) for s in ts for t in ts if s <= t]
    if fm.data.profile is not None:
        checks += [time_zero_bound_check(fm, t) for t in [0.0] + ts]
    for t in ts:
        checks.append(CheckReport("conditional_velocity", conditional_velocity_check(fm, t), 1e-6, {"t": t}))
    times_, energy, _ = energy_series(fm)
    return StickyRunReport(checks, times_, energy)
