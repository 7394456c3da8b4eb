import numpy as np
import pytest

from semiflow.integrators import IntegratorConfig, NumericalError
from semiflow.oracles import QuadraticFlowSpec, quadratic_flow
from semiflow.vlasov import (
    PhaseMeasure,
    check_interaction,
    energy_series,
    gaussian_population_moments,
    gaussian_repulsive_interaction,
    lift_potential,
    make_interaction,
    moment_bounds_check,
    quadratic_interaction,
    sample_initial,
    simulate,
    soft_attractive_interaction,
    weak_residual,
    zero_interaction,
)

ALL = [quadratic_interaction(1.0), quadratic_interaction(-1.0, 2), soft_attractive_interaction(2), gaussian_repulsive_interaction(), zero_interaction()]


@pytest.mark.parametrize("pot", ALL, ids=lambda p: f"{p.name}-{p.dim}d")
def test_interaction_assumptions(pot):
    assert check_interaction(pot).passed


def test_make_interaction_errors():
    with pytest.raises(ValueError):
        make_interaction("nope")
    with pytest.raises(ValueError):
        make_interaction("quadratic", kappa=1.0, stiffness=2.0)
    with pytest.raises(ValueError):
        make_interaction("gaussian_repulsive", kappa=1.0)
    with pytest.raises(ValueError):
        quadratic_interaction(-1.0, modulus=0.5)
    assert quadratic_interaction(1.0, modulus=1.0).modulus == 1.0


def test_lift_single_particle():
    pot = lift_potential(gaussian_repulsive_interaction(), [1.0])
    x = np.array([[0.7]])
    assert pot.energy(x) == pytest.approx(0.5)
    assert np.all(pot.gradient(x) == 0)


def test_lift_two_equal_masses():
    pot = lift_potential(quadratic_interaction(1.0), [0.5, 0.5])
    x = np.array([[0.3], [-1.1]])
    assert pot.energy(x) == pytest.approx((0.3 + 1.1) ** 2 / 8, rel=1e-14)
    assert pot.gradient(x)[0, 0] == pytest.approx((0.3 + 1.1) / 4, rel=1e-14)


def test_lift_gradient_finite_differences(rng):
    m = rng.uniform(0.2, 1, 5)
    m /= m.sum()
    pot = lift_potential(gaussian_repulsive_interaction(2), m)
    x = rng.normal(size=(5, 2))
    g = pot.gradient(x)
    h = 1e-6
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        assert (pot.energy(xp) - pot.energy(xm)) / (2 * h) == pytest.approx(g[idx], abs=1e-6)


def test_lift_rejects_bad_masses():
    with pytest.raises(ValueError):
        lift_potential(zero_interaction(), [0.5, 0.6])


def test_single_particle_moves_straight():
    f0 = PhaseMeasure.from_arrays([0.5], [-2.0])
    s = simulate(f0, gaussian_repulsive_interaction(), 1.0)
    assert np.allclose(s.x[:, 0, 0], 0.5 - 2.0 * s.times, atol=1e-12)
    assert np.all(s.v == -2.0)


def test_quadratic_matches_oracle():
    f0 = sample_initial({"kind": "gaussian"}, 64, 3)
    s = simulate(f0, quadratic_interaction(1.0), 2.0, IntegratorConfig(scheme="rk4"))
    X, V = quadratic_flow(f0.x, f0.v, 2.0, QuadraticFlowSpec.from_particles(1.0, f0.x, f0.v, f0.weights))
    assert np.max(np.abs(s.x[-1] - X)) <= 1e-6 and np.max(np.abs(s.v[-1] - V)) <= 1e-6


def test_momentum_conserved(rng):
    f0 = sample_initial({"kind": "uniform", "dim": 2}, 20, 1)
    s = simulate(f0, gaussian_repulsive_interaction(2), 1.0)
    p = np.einsum("i,kid->kd", s.masses, s.v)
    assert np.max(np.abs(p - p[0])) <= 1e-10


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        simulate(sample_initial({"kind": "gaussian", "dim": 2}, 4), zero_interaction(1), 1.0)


def test_weak_residual_conserved_quantities():
    f0 = sample_initial({"kind": "gaussian"}, 32, 0)
    pot = gaussian_repulsive_interaction()
    s = simulate(f0, pot, 1.0)
    assert weak_residual(s, pot, "1", 1.0) == 0.0
    assert weak_residual(s, pot, "v", 1.0) <= 1e-10
    with pytest.raises(ValueError):
        weak_residual(s, pot, "1", 1.5)


def test_weak_residual_second_order():
    f0 = sample_initial({"kind": "gaussian"}, 16, 2)
    pot = quadratic_interaction(1.0)
    res = [weak_residual(simulate(f0, pot, 1.0, IntegratorConfig(dt=dt)), pot, "xv", 1.0) for dt in (4e-3, 2e-3, 1e-3)]
    slope = np.polyfit(np.log([4e-3, 2e-3, 1e-3]), np.log(res), 1)[0]
    assert 1.8 <= slope <= 2.2


def test_moment_bounds_free_rest():
    f0 = PhaseMeasure.from_arrays([0.0], [0.0])
    rep = moment_bounds_check(simulate(f0, zero_interaction(), 1.0, IntegratorConfig(dt=0.1)), zero_interaction())
    assert rep.passed


@pytest.mark.parametrize("pot", [quadratic_interaction(-1.0), soft_attractive_interaction(), gaussian_repulsive_interaction()], ids=lambda p: p.name)
def test_moment_bounds_hold(pot):
    for seed in range(3):
        f0 = sample_initial({"kind": "gaussian"}, 32, seed)
        assert moment_bounds_check(simulate(f0, pot, 2.0), pot).passed


def test_energy_conserved_rk4():
    f0 = sample_initial({"kind": "gaussian"}, 16, 5)
    pot = soft_attractive_interaction()
    E = energy_series(simulate(f0, pot, 1.0, IntegratorConfig(scheme="rk4")), pot)
    assert np.max(np.abs(E - E[0])) <= 1e-10


def test_sample_points_identity():
    spec = {"kind": "points", "x": [0.0, 1.0, 2.0], "v": [1.0, 0.0, -1.0], "weights": [0.2, 0.3, 0.5]}
    f = sample_initial(spec, 3)
    assert f.x[:, 0].tolist() == [0.0, 1.0, 2.0]
    assert f.weights.tolist() == pytest.approx([0.2, 0.3, 0.5])


def test_sample_dirac_copies():
    f = sample_initial({"kind": "points", "x": [0.0], "v": [0.0]}, 5, 9)
    assert len(f.measure) == 5 and np.all(f.measure.points == 0)


@pytest.mark.parametrize("sampling", ["iid", "stratified"])
def test_gaussian_second_moment(sampling):
    spec = {"kind": "gaussian", "mean_v": 1.0, "std_v": 0.5, "sampling": sampling}
    N = 10**4
    f = sample_initial(spec, N, 11)
    ex, ev = gaussian_population_moments(spec)
    sx, sv = f.second_moments()
    assert abs(sx - ex) <= 5 / np.sqrt(N) and abs(sv - ev) <= 5 / np.sqrt(N)


def test_sample_unknown():
    with pytest.raises(ValueError):
        sample_initial({"kind": "cauchy"}, 4)
    with pytest.raises(ValueError):
        sample_initial({"kind": "gaussian", "sampling": "sobol"}, 4)


def test_integrate_errors_propagate():
    f0 = PhaseMeasure.from_arrays([0.0, 1.0], [0.0, 0.0])
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericalError):
        simulate(f0, quadratic_interaction(-1e6), 10.0, IntegratorConfig(dt=0.1))
