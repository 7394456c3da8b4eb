import numpy as np
import pytest

from semiflow.integrators import IntegratorConfig, rk4_step
from semiflow.oracles import QuadraticFlowSpec, linear_wave_modes, quadratic_flow


def test_single_particle_rests_at_mean():
    spec = QuadraticFlowSpec.from_particles(1.0, [1.0], [0.0], [1.0])
    for t in (0.0, 0.7, 3.0):
        X, V = quadratic_flow([1.0], [0.0], t, spec)
        assert X[0] == 1.0 and V[0] == 0.0


def test_free_flow():
    spec = QuadraticFlowSpec(0.0, [0.0], [0.0])
    X, V = quadratic_flow([2.0], [3.0], 4.0, spec)
    assert X[0] == 14.0 and V[0] == 3.0


def test_two_masses_cosine():
    spec = QuadraticFlowSpec.from_particles(1.0, [-1.0, 1.0], [0.0, 0.0], [0.5, 0.5])
    for t in np.linspace(0, 3, 7):
        X, V = quadratic_flow(np.array([-1.0, 1.0]), np.zeros(2), t, spec)
        assert np.allclose(X, [-np.cos(t), np.cos(t)], atol=1e-15)
        assert np.allclose(V, [np.sin(t), -np.sin(t)], atol=1e-15)


@pytest.mark.parametrize("kappa", [1.0, -1.0, 2.5, -0.3])
def test_flow_solves_equation(kappa):
    spec = QuadraticFlowSpec(kappa, [0.2], [0.1])
    t, h = 0.8, 1e-4
    Xp, _ = quadratic_flow([1.0], [0.5], t + h, spec)
    X0, _ = quadratic_flow([1.0], [0.5], t, spec)
    Xm, _ = quadratic_flow([1.0], [0.5], t - h, spec)
    acc = (Xp - 2 * X0 + Xm) / h**2
    assert acc[0] == pytest.approx(-kappa * (X0[0] - 0.2 - 0.1 * t), abs=1e-5)


def test_linear_wave_pure_cosine():
    a, ad = linear_wave_modes([1.0], [0.0], [1.0], np.pi)
    assert a[0] == pytest.approx(-1.0, abs=1e-15) and abs(ad[0]) <= 1e-15


def test_linear_wave_zero_data():
    a, ad = linear_wave_modes(np.zeros(3), np.zeros(3), [1.0, 4.0, 9.0], 1.3)
    assert np.all(a == 0) and np.all(ad == 0)


def test_linear_wave_rejects_nonpositive():
    with pytest.raises(ValueError):
        linear_wave_modes([1.0], [0.0], [0.0], 1.0)


def _rk4_reference(g, h, lam, mu, T, dt=1e-5):
    y = [np.array(g, float), np.array(h, float)]
    n = round(T / dt)
    for _ in range(n):
        y = rk4_step(lambda z: [z[1], -lam * z[0] - mu * lam * z[1]], y, T / n)
    return y


@pytest.mark.parametrize("mu,lam", [(0.1, np.pi**2), (0.5, 30.0), (2.0 / np.sqrt(3.0), 3.0), (1.5, 4.0)])
def test_damped_mode_matches_rk4(mu, lam):
    # covers the underdamped, critically damped and overdamped branches
    ref = _rk4_reference(1.0, 0.3, lam, mu, 1.0)
    a, ad = linear_wave_modes([1.0], [0.3], [lam], 1.0, mu)
    assert a[0] == pytest.approx(float(ref[0]), abs=1e-8)
    assert ad[0] == pytest.approx(float(ref[1]), abs=1e-8)


def test_integrator_config_grid():
    n, h = IntegratorConfig(dt=0.3).grid(1.0)
    assert n * h == pytest.approx(1.0)
