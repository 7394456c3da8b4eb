"""Named invariant suites run by ``semiflow verify <suite>``.

Each suite builds its own seeded scenarios, so a suite name alone is a
complete, reproducible experiment.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import elasto, sticky
from .integrators import IntegratorConfig
from .newton import ParticleSystemState, integrate, total_energy, velocity_bound_report
from .oracles import QuadraticFlowSpec, linear_wave_modes, quadratic_flow
from .report import CheckReport
from .vlasov import (
    gaussian_repulsive_interaction,
    lift_potential,
    moment_bounds_check,
    quadratic_interaction,
    sample_initial,
    simulate,
    soft_attractive_interaction,
)

DEFAULT_SEEDS = 8
STICKY_TIMES = (0.1, 0.5, 1.0, 2.0)


def seeded_sticky_data(seed: int, N: int = 16, kappa: float = 1.0, modulus: float = 1.0) -> sticky.StickyInitialData:
    """Random positions in ``(-2, 2)``, random masses, piecewise-linear ``v0``."""
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-2.0, 2.0, N))
    while N > 1 and np.min(np.diff(x)) < 1e-6:
        x = np.sort(rng.uniform(-2.0, 2.0, N))
    m = rng.uniform(0.5, 1.0, N)
    m /= m.sum()
    prof = sticky.PiecewiseLinearProfile(np.linspace(-2.5, 2.5, 6), rng.normal(size=6))
    return sticky.StickyInitialData.from_profile(x, m, prof, quadratic_interaction(kappa, 1, modulus))


def seeded_sticky_run(seed: int, N: int = 16, T: float = 2.0, dt: float = 1e-3) -> sticky.FlowMap:
    return sticky.evolve(seeded_sticky_data(seed, N), T, sticky.StickyConfig(dt=dt))


def dyadic_times(T: float, levels: int = 5) -> list[float]:
    return sorted(T / 2**k for k in range(levels + 1))


VLASOV_POTENTIALS = {
    "gaussian_repulsive": gaussian_repulsive_interaction,
    "quadratic_repulsive": lambda dim=1: quadratic_interaction(-1.0, dim),
    "soft_attractive": soft_attractive_interaction,
}


def _sticky_runs(seeds: int) -> list[sticky.FlowMap]:
    return [seeded_sticky_run(s) for s in range(seeds)]


def suite_entropy(seeds: int = DEFAULT_SEEDS) -> list[CheckReport]:
    out = []
    for seed, fm in enumerate(_sticky_runs(seeds)):
        for t in STICKY_TIMES:
            r = sticky.entropy_check(fm, t)
            out.append(CheckReport(f"entropy[seed={seed},t={t:g}]", r.max_violation, r.tolerance, r.details))
    return out


def suite_qspp(seeds: int = DEFAULT_SEEDS) -> list[CheckReport]:
    out = []
    grid = dyadic_times(2.0)
    for seed, fm in enumerate(_sticky_runs(seeds)):
        worst_q = max(sticky.qspp_check(fm, s, t).max_violation for s in grid for t in grid if s <= t)
        worst_z = max(sticky.time_zero_bound_check(fm, t).max_violation for t in [0.0] + grid)
        out.append(CheckReport(f"qspp[seed={seed}]", worst_q, sticky.CHECK_TOL, {"grid": grid}))
        out.append(CheckReport(f"time_zero_bound[seed={seed}]", worst_z, sticky.CHECK_TOL, {"grid": grid}))
    return out


def suite_moments(seeds: int = DEFAULT_SEEDS) -> list[CheckReport]:
    out = []
    for seed in range(seeds):
        for name, factory in VLASOV_POTENTIALS.items():
            pot = factory()
            f0 = sample_initial({"kind": "gaussian"}, 32, seed)
            series = simulate(f0, pot, 2.0)
            r = moment_bounds_check(series, pot)
            out.append(CheckReport(f"moments[{name},seed={seed}]", r.max_violation, r.tolerance, r.details))
            lifted = lift_potential(pot, f0.weights)
            traj = integrate(lifted, ParticleSystemState(f0.x, f0.v, f0.weights), 2.0)
            r = velocity_bound_report(traj, lifted)
            out.append(CheckReport(f"apriori[{name},seed={seed}]", r.max_violation, r.tolerance, r.details))
    return out


def galerkin_reference_run(mu: float, modes: int = 8, T: float = 2.0, dt: float = 1e-3, alpha: float = 0.4, B: float = 2.0, amplitude: float = 1.0, field: str = "bump", seed: int = 0):
    """Nonconvex cosine energy with bump data on the unit interval (rk4)."""
    basis = elasto.build_basis(1.0, modes)
    F = elasto.cosine_energy(alpha, B)
    gf, hf = elasto.reference_fields(field, [1.0], seed)
    proj = elasto.project_initial(gf, hf, basis)
    cfg = IntegratorConfig(dt=dt, scheme="rk4")
    return elasto.evolve_galerkin(amplitude * proj.g, amplitude * proj.h, F, basis, T, cfg, mu)


def suite_energy(seeds: int = DEFAULT_SEEDS) -> list[CheckReport]:
    out = []
    for seed, fm in enumerate(_sticky_runs(seeds)):
        r = sticky.energy_monotonicity_check(fm)
        out.append(CheckReport(f"sticky_energy[seed={seed}]", r.max_violation, r.tolerance, r.details))
    for seed in range(min(seeds, 4)):
        pot = gaussian_repulsive_interaction()
        f0 = sample_initial({"kind": "gaussian"}, 32, seed)
        lifted = lift_potential(pot, f0.weights)
        traj = integrate(lifted, ParticleSystemState(f0.x, f0.v, f0.weights), 2.0, IntegratorConfig(scheme="rk4"))
        E = np.array([total_energy(traj.state(k), lifted) for k in range(len(traj))])
        out.append(CheckReport(f"newton_energy[seed={seed}]", float(np.max(np.abs(E - E[0])) / abs(E[0])), 1e-8, {"scheme": "rk4"}))
    for seed in range(min(seeds, 2)):
        rep0 = elasto.energy_report(galerkin_reference_run(0.0, field="random", seed=seed))
        rep1 = elasto.energy_report(galerkin_reference_run(0.1, field="random", seed=seed))
        out.append(CheckReport(f"galerkin_conservation[seed={seed}]", rep0.relative_drift, 1e-6, {}))
        out.append(CheckReport(f"galerkin_damped_identity[seed={seed}]", rep1.max_residual, 1e-6, {}))
        dis = rep1.dissipation
        out.append(CheckReport(f"galerkin_dissipation_monotone[seed={seed}]", max(0.0, float(-np.min(np.diff(dis)))), 0.0, {}))
    return out


def _regular(fm: sticky.FlowMap, t: float) -> float:
    """Nudge ``t`` off any merge time."""
    ev = fm.event_times()
    while ev.size and np.min(np.abs(ev - t)) <= 1e-6:
        t += 1e-5
    return t


def suite_averaging(seeds: int = DEFAULT_SEEDS) -> list[CheckReport]:
    out = []
    for seed, fm in enumerate(_sticky_runs(seeds)):
        s, t = _regular(fm, 0.5), _regular(fm, 1.5)
        r1 = sticky.averaging_check(fm, lambda y: np.ones_like(y), s, t)
        out.append(CheckReport(f"averaging[g=1,seed={seed}]", r1, 1e-9, {"s": s, "t": t}))
        at_t = sticky.state_at(fm, t)
        target = at_t.positions[0]
        r2 = sticky.averaging_check(fm, lambda y: (np.abs(y - target) <= 1e-12).astype(float), s, t)
        out.append(CheckReport(f"averaging[g=cluster,seed={seed}]", r2, 1e-8, {"s": s, "t": t}))
        worst = max(sticky.conditional_velocity_check(fm, _regular(fm, u)) for u in STICKY_TIMES)
        out.append(CheckReport(f"conditional_velocity[seed={seed}]", worst, 1e-6, {}))
    return out


def suite_oracle_match(seeds: int = DEFAULT_SEEDS) -> list[CheckReport]:
    out = []
    for kappa in (1.0, -1.0, 0.0):
        worst = 0.0
        for seed in range(min(seeds, 2)):
            pot = quadratic_interaction(kappa)
            f0 = sample_initial({"kind": "gaussian"}, 64, seed)
            series = simulate(f0, pot, 2.0, IntegratorConfig(dt=1e-3, scheme="rk4"))
            spec = QuadraticFlowSpec.from_particles(kappa, f0.x, f0.v, f0.weights)
            for k in range(0, len(series.times), 50):
                X, V = quadratic_flow(f0.x, f0.v, float(series.times[k]), spec)
                worst = max(worst, float(np.max(np.abs(X - series.x[k]))), float(np.max(np.abs(V - series.v[k]))))
        out.append(CheckReport(f"quadratic_flow[kappa={kappa:g}]", worst, 1e-6, {}))
    basis = elasto.build_basis(1.0, 8)
    F = elasto.quadratic_energy()
    rng = np.random.default_rng(0)
    g = rng.normal(size=(8, 1))
    h = rng.normal(size=(8, 1))
    for mu in (0.0, 0.1):
        series = elasto.evolve_galerkin(g, h, F, basis, 2.0, IntegratorConfig(dt=1e-4, scheme="rk4", output_stride=1000), mu)
        a, ad = linear_wave_modes(g, h, basis.lambdas, 2.0, mu)
        err = max(float(np.max(np.abs(series.a[-1] - a))), float(np.max(np.abs(series.adot[-1] - ad))))
        out.append(CheckReport(f"linear_wave[mu={mu:g}]", err, 1e-8, {}))
    out.append(sticky_matches_newton())
    return out


def sticky_matches_newton(T: float = 0.2) -> CheckReport:
    """Three particles before their first collision follow the lifted Newton system."""
    x = np.array([-1.0, 0.0, 1.0])
    v = np.array([0.3, 0.0, -0.3])
    m = np.array([0.2, 0.5, 0.3])
    pot = quadratic_interaction(1.0, 1, 1.0)
    fm = sticky.evolve(sticky.StickyInitialData(x, v, m, pot), T, sticky.StickyConfig(dt=1e-3))
    traj = integrate(lift_potential(pot, m), ParticleSystemState(x, v, m), T, IntegratorConfig(dt=1e-3, scheme="rk4"))
    err = max(
        float(np.max(np.abs(fm.positions[-1] - traj.positions[-1, :, 0]))),
        float(np.max(np.abs(fm.vel_right[-1] - traj.velocities[-1, :, 0]))),
    )
    return CheckReport("sticky_vs_newton_precollision", err, 1e-8, {"events": len(fm.events)})


def ladder_distances(modes=(4, 8, 16, 32), mu: float = 0.1) -> list[float]:
    runs = {N: galerkin_reference_run(mu, modes=N) for N in modes}
    return [elasto.cauchy_gradient_check(runs[a], runs[b])[0] for a, b in zip(modes[:-1], modes[1:])]


def strict_decrease_report(name: str, values: list[float]) -> CheckReport:
    diffs = np.diff(values)
    worst = float(np.max(diffs)) if diffs.size else -math.inf
    if worst >= 0:
        worst = max(worst, np.finfo(float).tiny)
    return CheckReport(name, worst, 0.0, {"values": list(values)})


def suite_galerkin_identities(seeds: int = DEFAULT_SEEDS) -> list[CheckReport]:
    out = []
    for dim, n in ((1, 8), (2, 8), (1, 32)):
        b = elasto.build_basis([1.0] * dim, n)
        e0, e1 = elasto.orthonormality_errors(b)
        out.append(CheckReport(f"orthonormality[d={dim},N={n}]", e0, 1e-10, {}))
        out.append(CheckReport(f"gradient_orthogonality[d={dim},N={n}]", e1 / float(b.lambdas.max()), 1e-10, {"absolute": e1}))
    b = elasto.build_basis(1.0, 8)
    c = np.random.default_rng(0).normal(size=3)
    proj = elasto.project_initial(lambda x: (b.evaluate(x)[0][:, :3] @ c)[:, None], lambda x: np.zeros((x.shape[0], 1)), b)
    out.append(CheckReport("projection_roundtrip", float(np.max(np.abs(proj.g[:3, 0] - c)) + np.max(np.abs(proj.g[3:]))), 1e-10, {}))
    F = elasto.cosine_energy(0.5, 2.0)
    worst = 0.0
    for seed in range(20):
        y = np.random.default_rng(seed).normal(scale=0.3, size=(b.size, 1))
        _, grad = elasto.discrete_potential(y, b, F)
        worst = max(worst, finite_difference_error(y, b, F, grad))
    out.append(CheckReport("discrete_gradient_fd", worst, 1e-5, {"points": 20}))
    for mu in (0.0, 0.1):
        series = galerkin_reference_run(mu)
        rep = elasto.energy_report(series)
        val = rep.relative_drift if mu == 0 else rep.max_residual
        out.append(CheckReport(f"energy_identity[mu={mu:g}]", val, 1e-6, {}))
        hist = elasto.young_histogram(series)
        out.append(elasto.young_mean_check(series, hist))
        out.append(elasto.young_second_moment_check(series, hist))
    out.append(strict_decrease_report("cauchy_ladder[4,8,16,32]", ladder_distances()))
    return out


def finite_difference_error(y: np.ndarray, basis, F, grad: np.ndarray, step: float = 1e-6) -> float:
    """Max relative error of ``grad`` against central differences of ``V``."""
    fd = np.empty_like(y)
    for idx in np.ndindex(y.shape):
        yp, ym = y.copy(), y.copy()
        yp[idx] += step
        ym[idx] -= step
        fd[idx] = (elasto.discrete_potential(yp, basis, F)[0] - elasto.discrete_potential(ym, basis, F)[0]) / (2 * step)
    return float(np.max(np.abs(fd - grad)) / max(float(np.max(np.abs(grad))), np.finfo(float).tiny))


SUITES: dict[str, Callable[[int], list[CheckReport]]] = {
    "entropy": suite_entropy,
    "qspp": suite_qspp,
    "moments": suite_moments,
    "energy": suite_energy,
    "averaging": suite_averaging,
    "oracle-match": suite_oracle_match,
    "galerkin-identities": suite_galerkin_identities,
}


def run_suite(name: str, seeds: int = DEFAULT_SEEDS) -> list[CheckReport]:
    if name == "all":
        return [c for key in SUITES for c in SUITES[key](seeds)]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; known: {sorted(SUITES) + ['all']}")
    return SUITES[name](seeds)
