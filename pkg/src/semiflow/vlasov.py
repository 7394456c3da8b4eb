"""Discrete weak solutions of the Jeans-Vlasov equation.

N point masses interacting through an even, semiconvex potential ``W``
give the phase-space measure ``f_t = sum_i m_i delta_(x_i(t), v_i(t))``.
This module builds those runs, evaluates the weak form residual against
test functions, and checks the two moment bounds that come from the
a-priori kinetic-energy estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.special import ndtri

from .integrators import IntegratorConfig, mean_field
from .measures import EmpiricalMeasure
from .newton import (
    ParticleSystemState,
    SemiconvexPotential,
    chi,
    chi_prime,
    integrate,
)
from .report import CheckReport

MASS_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class InteractionPotential:
    """Even pair potential ``W: R^d -> R`` with gradient ``dw``.

    ``w`` and ``dw`` act on the trailing axis of ``(..., d)`` arrays.
    ``modulus`` makes ``W(z) + modulus/2 |z|^2`` convex and
    ``growth`` bounds ``|DW(z)| <= growth (1 + |z|)``.
    """

    w: Callable[[np.ndarray], np.ndarray]
    dw: Callable[[np.ndarray], np.ndarray]
    modulus: float
    growth: float
    dim: int = 1
    name: str = "custom"
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.modulus < 0 or self.growth < 0:
            raise ValueError("modulus and growth constant must be nonnegative")

    def describe(self) -> dict[str, Any]:
        return {"name": self.name, "dim": self.dim, "L": self.modulus, "C": self.growth, **self.params}


def quadratic_interaction(kappa: float, dim: int = 1, modulus: float | None = None) -> InteractionPotential:
    """``W(z) = kappa/2 |z|^2``; semiconvex with ``L = max(0, -kappa)``.

    A larger ``modulus`` may be requested (any ``L >= -kappa`` is valid),
    e.g. to run the sticky checkers, which need ``L > 0``, on attractive W.
    """
    k = float(kappa)
    L = max(0.0, -k)
    if modulus is not None:
        if modulus < L:
            raise ValueError(f"modulus {modulus} is below the true modulus {L} of kappa={k}")
        L = float(modulus)
    return InteractionPotential(
        w=lambda z: 0.5 * k * np.sum(z * z, axis=-1),
        dw=lambda z: k * z,
        modulus=L,
        growth=abs(k),
        dim=dim,
        name="quadratic",
        params={"kappa": k, "modulus": L},
    )


def soft_attractive_interaction(dim: int = 1) -> InteractionPotential:
    """``W(z) = sqrt(1 + |z|^2) - 1``: convex, with ``|DW| < 1``."""
    return InteractionPotential(
        w=lambda z: np.sqrt(1.0 + np.sum(z * z, axis=-1)) - 1.0,
        dw=lambda z: z / np.sqrt(1.0 + np.sum(z * z, axis=-1, keepdims=True)),
        modulus=0.0,
        growth=1.0,
        dim=dim,
        name="soft_attractive",
    )


def gaussian_repulsive_interaction(dim: int = 1) -> InteractionPotential:
    """``W(z) = exp(-|z|^2/2)``; Hessian eigenvalues are >= -1, so ``L = 1``."""
    return InteractionPotential(
        w=lambda z: np.exp(-0.5 * np.sum(z * z, axis=-1)),
        dw=lambda z: -z * np.exp(-0.5 * np.sum(z * z, axis=-1, keepdims=True)),
        modulus=1.0,
        growth=math.exp(-0.5),
        dim=dim,
        name="gaussian_repulsive",
    )


def zero_interaction(dim: int = 1) -> InteractionPotential:
    return InteractionPotential(
        w=lambda z: np.zeros(z.shape[:-1]),
        dw=lambda z: np.zeros_like(z),
        modulus=0.0,
        growth=0.0,
        dim=dim,
        name="zero",
    )


INTERACTIONS: dict[str, Callable[..., InteractionPotential]] = {
    "quadratic": quadratic_interaction,
    "soft_attractive": soft_attractive_interaction,
    "gaussian_repulsive": gaussian_repulsive_interaction,
    "zero": zero_interaction,
}


def make_interaction(name: str, dim: int = 1, **params) -> InteractionPotential:
    try:
        factory = INTERACTIONS[name]
    except KeyError:
        raise ValueError(f"unknown interaction potential {name!r}; known: {sorted(INTERACTIONS)}") from None
    if name == "quadratic":
        extra = set(params) - {"kappa", "modulus"}
        if extra:
            raise ValueError(f"quadratic interaction got unknown parameters {sorted(extra)}")
        return factory(params.get("kappa", 1.0), dim, params.get("modulus"))
    if params:
        raise ValueError(f"interaction {name!r} takes no parameters, got {sorted(params)}")
    return factory(dim)


def check_interaction(pot: InteractionPotential, samples: int = 500, seed: int = 0, scale: float = 3.0) -> CheckReport:
    """Sampled evenness, ``DW(0) = 0``, linear growth and semiconvexity of ``W``."""
    rng = np.random.default_rng(seed)
    z = rng.normal(scale=scale, size=(samples, pot.dim))
    y = z + rng.normal(scale=0.1 * scale, size=z.shape)
    even = float(np.max(np.abs(pot.w(-z) - pot.w(z))))
    origin = float(np.linalg.norm(pot.dw(np.zeros((1, pot.dim)))))
    grow = float(np.max(np.linalg.norm(pot.dw(z), axis=1) - pot.growth * (1.0 + np.linalg.norm(z, axis=1))))
    dz = z - y
    mono = float(np.max(-(np.sum((pot.dw(z) - pot.dw(y)) * dz, axis=1) + pot.modulus * np.sum(dz * dz, axis=1))))
    parts = {"evenness": even - 1e-10, "dw_origin": origin - 1e-10, "growth": grow - 1e-8, "semiconvexity": mono - 1e-8}
    return CheckReport("interaction_assumptions", max(parts.values()), 0.0, parts)


def lift_potential(pot: InteractionPotential, masses) -> SemiconvexPotential:
    """``V(x) = 1/2 sum_ij m_i m_j W(x_i - x_j)`` with its mass-weighted modulus.

    ``V + L/2 sum m_i |x_i|^2`` equals a sum of convex pair terms plus
    ``L/2 |sum m_i x_i|^2``, so the modulus of ``W`` carries over unchanged.
    """
    m = np.asarray(masses, dtype=float).reshape(-1)
    if np.any(m <= 0):
        raise ValueError("masses must be positive")
    if abs(m.sum() - 1.0) > MASS_SUM_TOL:
        raise ValueError(f"masses sum to {m.sum()!r}, expected 1")
    mm = np.outer(m, m)

    def energy(x: np.ndarray) -> float:
        diff = x[:, None, :] - x[None, :, :]
        return 0.5 * float(np.sum(mm * pot.w(diff)))

    def gradient(x: np.ndarray) -> np.ndarray:
        return m[:, None] * mean_field(x, m, pot.dw)

    return SemiconvexPotential(
        energy=energy,
        gradient=gradient,
        modulus=pot.modulus,
        mass_weighted=True,
        masses=m,
        translation_invariant=True,
        name=f"lifted[{pot.name}]",
    )


@dataclass(frozen=True, eq=False)
class PhaseMeasure:
    """Empirical measure on ``R^d x R^d`` at a given time."""

    measure: EmpiricalMeasure
    dim: int
    time: float = 0.0

    @classmethod
    def from_arrays(cls, x, v, weights=None, time: float = 0.0) -> "PhaseMeasure":
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if x.ndim == 1:
            x, v = x[:, None], v[:, None]
        if x.shape != v.shape:
            raise ValueError("positions and velocities must have the same shape")
        return cls(EmpiricalMeasure(np.hstack([x, v]), weights), x.shape[1], time)

    @property
    def x(self) -> np.ndarray:
        return self.measure.points[:, : self.dim]

    @property
    def v(self) -> np.ndarray:
        return self.measure.points[:, self.dim :]

    @property
    def weights(self) -> np.ndarray:
        return self.measure.weights

    def spatial(self) -> EmpiricalMeasure:
        """Position marginal ``rho_t``."""
        return EmpiricalMeasure(self.x, self.weights)

    def velocity_marginal(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.v, self.weights)

    def second_moments(self) -> tuple[float, float]:
        """``(int |x|^2 df, int |v|^2 df)``."""
        return (
            float(self.weights @ np.sum(self.x**2, axis=1)),
            float(self.weights @ np.sum(self.v**2, axis=1)),
        )


@dataclass(frozen=True, eq=False)
class PhaseSeries:
    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    masses: np.ndarray

    def __len__(self) -> int:
        return self.times.shape[0]

    def snapshot(self, k: int) -> PhaseMeasure:
        return PhaseMeasure.from_arrays(self.x[k], self.v[k], self.masses, float(self.times[k]))

    def index_of(self, t: float) -> int:
        """Index of the stored snapshot at time ``t``."""
        lo, hi = self.times[0], self.times[-1]
        slack = 1e-9 * max(1.0, abs(hi))
        if t < lo - slack or t > hi + slack:
            raise ValueError(f"t={t} outside the stored range [{lo}, {hi}]")
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > slack:
            raise ValueError(f"t={t} is not a stored snapshot time")
        return k


def simulate(f0: PhaseMeasure, pot: InteractionPotential, T: float, config: IntegratorConfig | None = None) -> PhaseSeries:
    """Evolve the particles of ``f0`` under ``x_i'' = -(DW * rho_t)(x_i)``."""
    if f0.dim != pot.dim:
        raise ValueError(f"phase measure is {f0.dim}-d but the potential is {pot.dim}-d")
    lifted = lift_potential(pot, f0.weights)
    state = ParticleSystemState(f0.x, f0.v, f0.weights, f0.time)
    traj = integrate(lifted, state, T, config)
    return PhaseSeries(traj.times, traj.positions, traj.velocities, traj.masses)


@dataclass(frozen=True)
class TestFunction:
    """C^1 phase-space test function; all callables take ``(x, v)`` stacks of shape ``(N, d)``."""

    __test__ = False  # keep pytest from collecting this class

    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_v: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "custom"


def _ones(x, v):
    return np.ones(x.shape[0])


def _zeros(x, v):
    return np.zeros_like(x)


def _first(arr):
    out = np.zeros_like(arr)
    out[:, 0] = 1.0
    return out


TEST_FUNCTIONS: dict[str, TestFunction] = {
    "1": TestFunction(_ones, _zeros, _zeros, "1"),
    "x": TestFunction(lambda x, v: x[:, 0], lambda x, v: _first(x), _zeros, "x"),
    "v": TestFunction(lambda x, v: v[:, 0], _zeros, lambda x, v: _first(v), "v"),
    "xv": TestFunction(lambda x, v: np.sum(x * v, axis=1), lambda x, v: v.copy(), lambda x, v: x.copy(), "xv"),
    "x2": TestFunction(lambda x, v: np.sum(x * x, axis=1), lambda x, v: 2.0 * x, _zeros, "x2"),
    "v2": TestFunction(lambda x, v: np.sum(v * v, axis=1), _zeros, lambda x, v: 2.0 * v, "v2"),
}


def weak_residual(series: PhaseSeries, pot: InteractionPotential, psi: TestFunction | str, t: float) -> float:
    """Defect of the integrated weak form at snapshot time ``t``.

    ``|int psi df_t - int psi df_0 - int_0^t int (v.D_x psi - (DW*rho_s).D_v psi) df_s ds|``
    with the time integral taken by the trapezoid rule on the stored snapshots.
    """
    if isinstance(psi, str):
        psi = TEST_FUNCTIONS[psi]
    k_end = series.index_of(t)
    m = series.masses
    integrand = np.empty(k_end + 1)
    for k in range(k_end + 1):
        x, v = series.x[k], series.v[k]
        field_ = mean_field(x, m, pot.dw)
        term = np.sum(v * psi.grad_x(x, v), axis=1) - np.sum(field_ * psi.grad_v(x, v), axis=1)
        integrand[k] = float(m @ term)
    if k_end == 0:
        time_integral = 0.0
    else:
        dt = np.diff(series.times[: k_end + 1])
        time_integral = float(np.sum(0.5 * dt * (integrand[1:] + integrand[:-1])))
    start = float(m @ psi.value(series.x[0], series.v[0]))
    end = float(m @ psi.value(series.x[k_end], series.v[k_end]))
    return abs(end - start - time_integral)


def initial_moment_constant(f0: PhaseMeasure, pot: InteractionPotential) -> float:
    """``int |v|^2 df_0 + int int |DW(x-y)|^2 drho_0 drho_0``."""
    m = f0.weights
    diff = f0.x[:, None, :] - f0.x[None, :, :]
    dw2 = np.sum(pot.dw(diff) ** 2, axis=-1)
    return f0.second_moments()[1] + float(m @ dw2 @ m)


def moment_bounds_check(series: PhaseSeries, pot: InteractionPotential, f0: PhaseMeasure | None = None, rel_tol: float = 1e-8) -> CheckReport:
    """Kinetic and position-moment bounds at every stored time.

    The reported violation is ``(lhs - rhs) / |rhs|``, maximized over
    both bounds and all times.
    """
    f0 = f0 or series.snapshot(0)
    K0 = initial_moment_constant(f0, pot)
    x2_0 = f0.second_moments()[0]
    L = pot.modulus
    tiny = np.finfo(float).tiny
    worst_v = worst_x = -math.inf
    where = {}
    for k, t in enumerate(series.times):
        s = float(t - f0.time)
        v2 = float(series.masses @ np.sum(series.v[k] ** 2, axis=1))
        x2 = 0.5 * float(series.masses @ np.sum(series.x[k] ** 2, axis=1))
        rhs_v = K0 * chi_prime(s, L)
        rhs_x = x2_0 + K0 * s * chi(s, L)
        rv = (v2 - rhs_v) / max(abs(rhs_v), tiny)
        rx = (x2 - rhs_x) / max(abs(rhs_x), tiny)
        if rv > worst_v:
            worst_v, where["velocity_time"] = rv, float(t)
        if rx > worst_x:
            worst_x, where["position_time"] = rx, float(t)
    return CheckReport(
        "moment_bounds",
        max(worst_v, worst_x),
        rel_tol,
        {"velocity_bound": worst_v, "position_bound": worst_x, **where},
    )


def energy_series(series: PhaseSeries, pot: InteractionPotential) -> np.ndarray:
    """``1/2 sum m |v|^2 + 1/2 sum_ij m_i m_j W(x_i - x_j)`` per snapshot."""
    m = series.masses
    mm = np.outer(m, m)
    out = np.empty(len(series))
    for k in range(len(series)):
        diff = series.x[k][:, None, :] - series.x[k][None, :, :]
        out[k] = 0.5 * float(m @ np.sum(series.v[k] ** 2, axis=1)) + 0.5 * float(np.sum(mm * pot.w(diff)))
    return out


def _stratified_normal(rng: np.random.Generator, N: int, d: int) -> np.ndarray:
    """One normal draw per probability stratum ``[i/N, (i+1)/N)``, strata shuffled per coordinate."""
    out = np.empty((N, d))
    for c in range(d):
        u = (rng.permutation(N) + rng.uniform(size=N)) / N
        out[:, c] = ndtri(u)
    return out


def sample_initial(spec: dict[str, Any], N: int, seed: int = 0) -> PhaseMeasure:
    """Equal-weight (or explicit) initial phase measure.

    Supported ``spec["kind"]``:

    ``gaussian``
        independent normals; keys ``dim``, ``mean_x``, ``std_x``, ``mean_v``, ``std_v``
        and ``sampling`` (``iid`` or ``stratified``: one draw per probability
        stratum in each coordinate, which makes N-ladders converge smoothly).
    ``uniform``
        uniform box; keys ``dim``, ``low_x``, ``high_x``, ``low_v``, ``high_v``.
    ``points``
        explicit ``x``, ``v`` and optional ``weights``.  If ``N`` equals the
        number of points the list is returned as is; otherwise ``N`` points
        are drawn i.i.d. from it according to the weights.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    kind = spec.get("kind")
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        d = int(spec.get("dim", 1))
        sampling = spec.get("sampling", "iid")
        if sampling == "iid":
            zx, zv = rng.normal(size=(N, d)), rng.normal(size=(N, d))
        elif sampling == "stratified":
            zx, zv = _stratified_normal(rng, N, d), _stratified_normal(rng, N, d)
        else:
            raise ValueError(f"unknown sampling {sampling!r}; expected 'iid' or 'stratified'")
        x = zx * float(spec.get("std_x", 1.0)) + np.asarray(spec.get("mean_x", 0.0), dtype=float)
        v = zv * float(spec.get("std_v", 1.0)) + np.asarray(spec.get("mean_v", 0.0), dtype=float)
        return PhaseMeasure.from_arrays(x, v)
    if kind == "uniform":
        d = int(spec.get("dim", 1))
        x = rng.uniform(spec.get("low_x", -1.0), spec.get("high_x", 1.0), size=(N, d))
        v = rng.uniform(spec.get("low_v", -1.0), spec.get("high_v", 1.0), size=(N, d))
        return PhaseMeasure.from_arrays(x, v)
    if kind == "points":
        x = np.asarray(spec["x"], dtype=float)
        v = np.asarray(spec["v"], dtype=float)
        if x.ndim == 1:
            x, v = x[:, None], v[:, None]
        w = spec.get("weights")
        if N == x.shape[0]:
            return PhaseMeasure.from_arrays(x, v, w)
        p = None if w is None else np.asarray(w, dtype=float) / np.sum(w)
        idx = rng.choice(x.shape[0], size=N, replace=True, p=p)
        return PhaseMeasure.from_arrays(x[idx], v[idx])
    raise ValueError(f"unknown initial distribution kind {kind!r}")


def gaussian_population_moments(spec: dict[str, Any]) -> tuple[float, float]:
    """Exact ``(E|x|^2, E|v|^2)`` for a ``gaussian`` spec."""
    d = int(spec.get("dim", 1))

    def second(mean, std):
        mean = np.broadcast_to(np.asarray(mean, dtype=float), (d,))
        return float(np.sum(mean**2) + d * float(std) ** 2)

    return second(spec.get("mean_x", 0.0), spec.get("std_x", 1.0)), second(spec.get("mean_v", 0.0), spec.get("std_v", 1.0))
