import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from semiflow.integrators import IntegratorConfig, NumericalError
from semiflow.newton import (
    ParticleSystemState,
    SemiconvexPotential,
    Trajectory,
    apriori_integral_bound,
    apriori_velocity_bound,
    assert_time_reversible,
    check_semiconvexity,
    chi,
    chi_prime,
    harmonic_potential,
    integrate,
    total_energy,
    velocity_bound_report,
    zero_potential,
)
from semiflow.oracles import QuadraticFlowSpec, quadratic_flow
from semiflow.vlasov import lift_potential, quadratic_interaction

RK4 = IntegratorConfig(dt=1e-3, scheme="rk4")


def single(x, v, m=1.0):
    return ParticleSystemState([x], [v], [m])


@pytest.mark.parametrize("L", [0.0, 1.0, 7.5])
def test_chi_at_zero(L):
    assert chi(0.0, L) == 0.0
    assert chi_prime(0.0, L) == 1.0


def test_chi_midpoint_oracle():
    n = 10**6
    s = (np.arange(n) + 0.5) / n
    ref = math.exp(0.5) * float(np.sum(np.exp(-0.5 * s * s))) / n
    assert abs(chi(1.0, 0.0) - ref) <= 1e-9


def test_chi_prime_matches_derivative():
    t, L, h = 0.7, 2.0, 1e-5
    fd = (chi(t + h, L) - chi(t - h, L)) / (2 * h)
    assert fd == pytest.approx(chi_prime(t, L), rel=1e-8)


def test_chi_rejects_negative():
    with pytest.raises(ValueError):
        chi(-1.0, 0.0)
    with pytest.raises(ValueError):
        chi_prime(1.0, -0.1)


def test_state_validation():
    with pytest.raises(ValueError):
        ParticleSystemState([0.0], [1.0], [0.0])
    with pytest.raises(ValueError):
        ParticleSystemState([np.nan], [1.0], [1.0])
    with pytest.raises(ValueError):
        ParticleSystemState([0.0, 1.0], [1.0], [1.0, 1.0])


@pytest.mark.parametrize("scheme", ["velocity-verlet", "rk4"])
def test_free_motion(scheme):
    tr = integrate(zero_potential(), single(0.0, 1.0), 1.0, IntegratorConfig(scheme=scheme))
    assert tr.final.positions[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert tr.final.velocities[0, 0] == 1.0


def test_harmonic_period_rk4():
    tr = integrate(harmonic_potential(), single(1.0, 0.0), 2 * math.pi, RK4)
    assert abs(tr.final.positions[0, 0] - 1.0) <= 1e-8
    assert np.max(np.abs(tr.positions[:, 0, 0] - np.cos(tr.times))) <= 1e-8


@pytest.mark.parametrize("scheme,tol", [("rk4", 1e-8), ("velocity-verlet", 1e-4)])
def test_harmonic_energy_drift(scheme, tol):
    pot = harmonic_potential()
    tr = integrate(pot, single(1.0, 0.0), 2 * math.pi, IntegratorConfig(scheme=scheme))
    E = np.array([total_energy(tr.state(k), pot) for k in range(len(tr))])
    assert np.max(np.abs(E - 0.5)) <= tol


def test_total_energy_examples():
    assert total_energy(single(0.0, 3.0, 2.0), zero_potential()) == 9.0
    assert total_energy(single(1.0, 0.0), harmonic_potential()) == 0.5


def test_two_particles_match_quadratic_flow():
    x, v, m = np.array([-0.4, 0.9]), np.array([0.3, -0.1]), np.array([0.3, 0.7])
    pot = lift_potential(quadratic_interaction(1.0), m)
    tr = integrate(pot, ParticleSystemState(x, v, m), 2.0, RK4)
    X, Xd = quadratic_flow(x[:, None], v[:, None], 2.0, QuadraticFlowSpec.from_particles(1.0, x, v, m))
    assert np.max(np.abs(tr.final.positions - X)) <= 1e-6
    assert np.max(np.abs(tr.final.velocities - Xd)) <= 1e-6


def test_output_stride_keeps_endpoint():
    tr = integrate(zero_potential(), single(0.0, 1.0), 1.0, IntegratorConfig(dt=0.1, output_stride=3))
    assert tr.times[-1] == pytest.approx(1.0)
    assert tr.times.tolist()[:4] == pytest.approx([0.0, 0.3, 0.6, 0.9])


def test_nonfinite_state_reports_step():
    blowup = SemiconvexPotential(energy=lambda x: 0.0, gradient=lambda x: -np.exp(np.exp(x)), modulus=0.0)
    with np.errstate(over="ignore"), pytest.raises(NumericalError) as err:
        integrate(blowup, single(3.0, 0.0), 10.0, IntegratorConfig(dt=0.1))
    assert err.value.step >= 1


def test_apriori_bound_at_zero():
    x, v, m = np.array([[0.2], [1.5]]), np.array([[1.0], [-2.0]]), np.array([0.25, 0.75])
    pot = lift_potential(quadratic_interaction(-1.0), m)
    g = pot.gradient(x)
    expected = float(np.sum(m * v[:, 0] ** 2) + np.sum(g[:, 0] ** 2 / m))
    assert apriori_velocity_bound(ParticleSystemState(x, v, m), pot, 0.0) == pytest.approx(expected, rel=1e-14)


def test_apriori_bound_free_motion():
    s0 = ParticleSystemState([0.0, 1.0], [2.0, -1.0], [0.5, 0.5])
    tr = integrate(zero_potential(), s0, 2.0, IntegratorConfig(dt=0.01))
    for t in (0.0, 0.5, 2.0):
        assert apriori_velocity_bound(s0, zero_potential(), t) == pytest.approx(2.5 * chi_prime(t, 0.0))
    assert velocity_bound_report(tr, zero_potential()).passed


def test_apriori_integral_bound_dominates():
    m = np.full(4, 0.25)
    s0 = ParticleSystemState([-1.0, -0.2, 0.4, 1.3], [0.5, 0.0, -0.3, 0.1], m)
    pot = lift_potential(quadratic_interaction(-1.0), m)
    tr = integrate(pot, s0, 1.0, RK4)
    integral = trapezoid(tr.kinetic_weighted(), tr.times)
    assert integral <= apriori_integral_bound(s0, pot, 1.0)


def test_semiconvexity_examples():
    assert check_semiconvexity(harmonic_potential(1.0), (1, 1)).max_violation <= 0
    assert check_semiconvexity(harmonic_potential(-1.0), (1, 1)).max_violation <= 1e-12
    bad = SemiconvexPotential(energy=lambda x: -float(np.sum(x * x)), gradient=lambda x: -2 * x, modulus=1.0)
    rep = check_semiconvexity(bad, (1, 1))
    assert not rep.passed and rep.max_violation > 0


def test_lifted_potential_modulus_holds():
    m = np.array([0.1, 0.2, 0.3, 0.4])
    for kappa in (1.0, -1.0):
        assert check_semiconvexity(lift_potential(quadratic_interaction(kappa), m), (4, 1), 400).passed


def test_verlet_time_reversible():
    pot = harmonic_potential(2.0)
    err = assert_time_reversible(pot, ParticleSystemState([0.3, -1.0], [0.5, 0.2], [1.0, 2.0]), 1.0, IntegratorConfig(dt=1e-2))
    assert err <= 1e-12


def test_trajectory_csv_roundtrip():
    tr = integrate(harmonic_potential(), ParticleSystemState([[0.1, 0.2], [0.3, 0.4]], [[0, 1], [1, 0]], [1, 2]), 0.05, RK4)
    back = Trajectory.from_csv(tr.to_csv(), tr.masses)
    assert np.array_equal(back.positions, tr.positions)
    assert np.array_equal(back.velocities, tr.velocities)
    with pytest.raises(ValueError):
        Trajectory.from_csv("a,b\n1,2\n", tr.masses)
