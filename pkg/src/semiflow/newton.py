"""Newton systems ``m_i x_i'' = -D_{x_i} V(x)`` with semiconvex ``V``.

Besides the integrator this module carries the a-priori kinetic-energy
bound that semiconvexity buys: with ``L`` a modulus for which
``V(y) + L/2 sum_i m_i |y_i|^2`` is convex,

    sum_i m_i |x_i'(t)|^2 <= K0 * chi'(t),
    int_0^t sum_i m_i |x_i'(s)|^2 ds <= K0 * chi(t),

where ``K0 = sum_i m_i |v_i|^2 + sum_i |D_{x_i} V(x)|^2 / m_i`` and
``chi(t) = exp((L+1) t^2 / 2) int_0^t exp(-(L+1) s^2 / 2) ds``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate as sp_integrate

from .integrators import (
    IntegratorConfig,
    NumericalError,
    check_finite,
    rk4_step,
    verlet_step,
)
from .measures import format_float
from .report import CheckReport

SEMICONVEXITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SemiconvexPotential:
    """``V: (R^d)^N -> R`` with its full gradient and a semiconvexity modulus.

    ``energy`` and ``gradient`` take an ``(N, d)`` array.  If
    ``mass_weighted`` is set, ``modulus`` makes ``V + L/2 sum m_i |y_i|^2``
    convex for the stored ``masses``; otherwise ``V + L/2 |y|^2`` is convex.
    """

    energy: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    modulus: float
    mass_weighted: bool = False
    masses: np.ndarray | None = None
    translation_invariant: bool = False
    name: str = "custom"

    def __post_init__(self):
        if self.modulus < 0:
            raise ValueError("semiconvexity modulus must be >= 0")
        if self.mass_weighted and self.masses is None:
            raise ValueError("a mass-weighted modulus needs the masses it refers to")

    def weighted_modulus(self, masses: np.ndarray) -> float:
        """Modulus valid for the mass-weighted quadratic.

        An unweighted modulus ``L`` converts to ``L / min_i m_i``, which is
        conservative but always valid.
        """
        if self.mass_weighted:
            return float(self.modulus)
        return float(self.modulus) / float(np.min(masses))


def zero_potential() -> SemiconvexPotential:
    return SemiconvexPotential(
        energy=lambda x: 0.0,
        gradient=lambda x: np.zeros_like(x),
        modulus=0.0,
        translation_invariant=True,
        name="zero",
    )


def harmonic_potential(stiffness: float = 1.0) -> SemiconvexPotential:
    """``V(x) = stiffness/2 |x|^2``; modulus ``max(0, -stiffness)``."""
    k = float(stiffness)
    return SemiconvexPotential(
        energy=lambda x: 0.5 * k * float(np.sum(x * x)),
        gradient=lambda x: k * x,
        modulus=max(0.0, -k),
        name=f"harmonic({k:g})",
    )


@dataclass(frozen=True, eq=False)
class ParticleSystemState:
    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray
    time: float = 0.0

    def __init__(self, positions, velocities, masses, time: float = 0.0):
        x = np.array(positions, dtype=float)
        v = np.array(velocities, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        m = np.array(masses, dtype=float).reshape(-1)
        if x.shape[0] == 0:
            raise ValueError("a particle system needs at least one particle")
        if x.shape != v.shape or m.shape[0] != x.shape[0]:
            raise ValueError(f"shape mismatch: positions {x.shape}, velocities {v.shape}, masses {m.shape}")
        if not np.all(m > 0):
            raise ValueError("masses must be strictly positive")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v)) and np.all(np.isfinite(m))):
            raise ValueError("state must be finite")
        if time < 0:
            raise ValueError("time must be nonnegative")
        for name, arr in (("positions", x), ("velocities", v), ("masses", m)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "time", float(time))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def momentum(self) -> np.ndarray:
        return self.masses @ self.velocities

    def kinetic_weighted(self) -> float:
        """``sum_i m_i |v_i|^2`` (twice the kinetic energy)."""
        return float(np.sum(self.masses * np.sum(self.velocities**2, axis=1)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray

    def __len__(self) -> int:
        return self.times.shape[0]

    def state(self, k: int) -> ParticleSystemState:
        return ParticleSystemState(self.positions[k], self.velocities[k], self.masses, self.times[k])

    @property
    def final(self) -> ParticleSystemState:
        return self.state(len(self) - 1)

    def kinetic_weighted(self) -> np.ndarray:
        return np.sum(self.masses[None, :] * np.sum(self.velocities**2, axis=2), axis=1)

    def momentum(self) -> np.ndarray:
        return np.einsum("i,kid->kd", self.masses, self.velocities)

    def to_csv(self) -> str:
        d = self.positions.shape[2]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "i"] + [f"x{k + 1}" for k in range(d)] + [f"v{k + 1}" for k in range(d)])
        for k, t in enumerate(self.times):
            for i in range(self.positions.shape[1]):
                w.writerow(
                    [format_float(t), i]
                    + [format_float(c) for c in self.positions[k, i]]
                    + [format_float(c) for c in self.velocities[k, i]]
                )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, masses) -> "Trajectory":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty trajectory CSV")
        header = rows[0]
        d = (len(header) - 2) // 2
        expected = ["t", "i"] + [f"x{k + 1}" for k in range(d)] + [f"v{k + 1}" for k in range(d)]
        if d < 1 or header != expected:
            raise ValueError(f"bad trajectory CSV header {header!r}")
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
        m = np.asarray(masses, dtype=float)
        n = m.shape[0]
        if data.shape[0] == 0 or data.shape[0] % n:
            raise ValueError("row count is not a multiple of the particle count")
        data = data.reshape(-1, n, 2 + 2 * d)
        if not np.array_equal(data[:, :, 1], np.broadcast_to(np.arange(n), data[:, :, 1].shape)):
            raise ValueError("particle indices out of order")
        return cls(data[:, 0, 0].copy(), data[:, :, 2 : 2 + d].copy(), data[:, :, 2 + d :].copy(), m)


def _chi_integral(t: float, L: float) -> float:
    a = 0.5 * (L + 1.0)
    if t == 0.0:
        return 0.0
    # exp(a (t^2 - s^2)) = exp(a t^2) exp(-a s^2), written to avoid overflow of the product
    val, _ = sp_integrate.quad(lambda s: math.exp(a * (t * t - s * s)), 0.0, t, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


@lru_cache(maxsize=65536)
def _chi_cached(t: float, L: float) -> float:
    try:
        return _chi_integral(t, L)
    except OverflowError:
        return math.inf


def chi(t: float, L: float) -> float:
    """``exp((L+1)t^2/2) int_0^t exp(-(L+1)s^2/2) ds`` by adaptive quadrature."""
    if t < 0 or L < 0:
        raise ValueError("chi needs t >= 0 and L >= 0")
    return _chi_cached(float(t), float(L))


def chi_prime(t: float, L: float) -> float:
    if t < 0 or L < 0:
        raise ValueError("chi_prime needs t >= 0 and L >= 0")
    return 1.0 + (L + 1.0) * t * chi(t, L)


def total_energy(state: ParticleSystemState, potential: SemiconvexPotential) -> float:
    return 0.5 * state.kinetic_weighted() + float(potential.energy(np.asarray(state.positions)))


def _initial_bound_constant(state0: ParticleSystemState, potential: SemiconvexPotential) -> float:
    g = np.asarray(potential.gradient(np.array(state0.positions)), dtype=float).reshape(state0.positions.shape)
    return state0.kinetic_weighted() + float(np.sum(np.sum(g * g, axis=1) / state0.masses))


def apriori_velocity_bound(state0: ParticleSystemState, potential: SemiconvexPotential, t: float) -> float:
    """Upper bound for ``sum_i m_i |v_i(t)|^2`` along any solution from ``state0``."""
    L = potential.weighted_modulus(state0.masses)
    return _initial_bound_constant(state0, potential) * chi_prime(t, L)


def apriori_integral_bound(state0: ParticleSystemState, potential: SemiconvexPotential, t: float) -> float:
    """Upper bound for ``int_0^t sum_i m_i |v_i(s)|^2 ds``."""
    L = potential.weighted_modulus(state0.masses)
    return _initial_bound_constant(state0, potential) * chi(t, L)


def integrate(
    potential: SemiconvexPotential,
    state0: ParticleSystemState,
    T: float,
    config: IntegratorConfig | None = None,
) -> Trajectory:
    """Fixed-step solution on a uniform grid ``t_k = k T / n`` with ``n = round(T/dt)``."""
    config = config or IntegratorConfig()
    nsteps, h = config.grid(T)
    m = np.asarray(state0.masses)
    shape = state0.positions.shape

    def accel(x: np.ndarray) -> np.ndarray:
        return -np.asarray(potential.gradient(x), dtype=float).reshape(shape) / m[:, None]

    x = np.array(state0.positions)
    v = np.array(state0.velocities)
    stride = config.output_stride
    nout = nsteps // stride + 1 + (1 if nsteps % stride else 0)
    times = np.empty(nout)
    xs = np.empty((nout,) + shape)
    vs = np.empty((nout,) + shape)
    times[0], xs[0], vs[0] = state0.time, x, v
    t0 = state0.time
    out = 1
    a = accel(x) if config.scheme == "velocity-verlet" else None
    for step in range(1, nsteps + 1):
        if config.scheme == "velocity-verlet":
            x, v, a = verlet_step(accel, x, v, a, h)
        else:
            x, v = rk4_step(lambda y: [y[1], accel(y[0])], [x, v], h)
        check_finite(step, x, v)
        if step % stride == 0 or step == nsteps:
            times[out], xs[out], vs[out] = t0 + step * h, x, v
            out += 1
    return Trajectory(times, xs, vs, m.copy())


def velocity_bound_report(
    traj: Trajectory, potential: SemiconvexPotential, rel_tol: float = 1e-8
) -> CheckReport:
    """Check the a-priori kinetic bound at every stored time (relative slack)."""
    s0 = traj.state(0)
    lhs = traj.kinetic_weighted()
    rhs = np.array([apriori_velocity_bound(s0, potential, t - traj.times[0]) for t in traj.times])
    viol = (lhs - rhs) / np.maximum(np.abs(rhs), np.finfo(float).tiny)
    k = int(np.argmax(viol))
    return CheckReport(
        "apriori_velocity_bound",
        float(viol[k]),
        rel_tol,
        {"worst_time": float(traj.times[k]), "lhs": float(lhs[k]), "rhs": float(rhs[k])},
    )


def check_semiconvexity(
    potential: SemiconvexPotential,
    shape: tuple[int, int],
    sample_count: int = 1000,
    seed: int = 0,
    scale: float = 2.0,
    tol: float = SEMICONVEXITY_TOL,
) -> CheckReport:
    """Largest sampled violation of ``(DV(x)-DV(y)).(x-y) >= -L |x-y|^2``.

    Half the pairs are independent Gaussian draws, half are close pairs to
    probe local curvature.  Mass-weighted potentials use
    ``L sum_i m_i |x_i - y_i|^2`` on the right.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    if potential.mass_weighted:
        weights = np.asarray(potential.masses, dtype=float)
    else:
        weights = np.ones(shape[0])
    worst = -math.inf
    for k in range(sample_count):
        x = rng.normal(scale=scale, size=shape)
        if k % 2:
            y = x + rng.normal(scale=0.05 * scale, size=shape)
        else:
            y = rng.normal(scale=scale, size=shape)
        dx = x - y
        lhs = float(np.sum((np.asarray(potential.gradient(x)) - np.asarray(potential.gradient(y))) * dx))
        quad = float(np.sum(weights * np.sum(dx * dx, axis=1)))
        worst = max(worst, -(lhs + potential.modulus * quad))
    return CheckReport("semiconvexity", worst, tol, {"samples": sample_count, "seed": seed})


def assert_time_reversible(
    potential: SemiconvexPotential, state0: ParticleSystemState, T: float, config: IntegratorConfig
) -> float:
    """Run forward, flip velocities, run back; return the max deviation from ``state0``."""
    fwd = integrate(potential, state0, T, config).final
    back_start = ParticleSystemState(fwd.positions, -fwd.velocities, fwd.masses)
    back = integrate(potential, back_start, T, config).final
    return float(
        max(
            np.max(np.abs(back.positions - state0.positions)),
            np.max(np.abs(-back.velocities - state0.velocities)),
        )
    )


__all__ = [
    "IntegratorConfig",
    "NumericalError",
    "ParticleSystemState",
    "SemiconvexPotential",
    "Trajectory",
    "apriori_integral_bound",
    "apriori_velocity_bound",
    "assert_time_reversible",
    "check_semiconvexity",
    "chi",
    "chi_prime",
    "harmonic_potential",
    "integrate",
    "total_energy",
    "velocity_bound_report",
    "zero_potential",
]
