"""Invariants as property tests."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from semiflow import sticky
from semiflow.measures import EmpiricalMeasure, LipschitzDictionary, bl_distance, moment, push_forward, wasserstein1_1d
from semiflow.newton import chi, chi_prime
from semiflow.oracles import QuadraticFlowSpec, linear_wave_modes, quadratic_flow
from semiflow.vlasov import gaussian_repulsive_interaction, lift_potential, quadratic_interaction, zero_interaction

coord = st.floats(-10, 10, allow_nan=False, width=64)
points = st.lists(coord, min_size=1, max_size=12)


def measure(pts, seed):
    w = np.random.default_rng(seed).uniform(0.1, 1.0, len(pts))
    return EmpiricalMeasure(pts, w / w.sum())


@given(points, points, points, st.integers(0, 100))
def test_w1_is_a_metric(a, b, c, seed):
    mu, nu, la = measure(a, seed), measure(b, seed + 1), measure(c, seed + 2)
    ab = wasserstein1_1d(mu, nu)
    assert ab >= 0
    assert math.isclose(ab, wasserstein1_1d(nu, mu), rel_tol=1e-12, abs_tol=1e-12)
    assert ab <= wasserstein1_1d(mu, la) + wasserstein1_1d(la, nu) + 1e-9


@given(points, coord, st.integers(0, 100))
def test_w1_of_translation(a, shift, seed):
    mu = measure(a, seed)
    moved = push_forward(mu, lambda x: x + shift)
    assert math.isclose(wasserstein1_1d(mu, moved), abs(shift), rel_tol=1e-9, abs_tol=1e-9)


@given(points, points, st.integers(0, 100))
def test_bl_bounded_by_w1(a, b, seed):
    # every dictionary function is 1-Lipschitz and the weights 2^-j sum below 1
    mu, nu = measure(a, seed), measure(b, seed + 1)
    d = LipschitzDictionary.random(1, seed=seed)
    bl = bl_distance(mu, nu, d)
    assert 0 <= bl <= min(2.0, wasserstein1_1d(mu, nu) + 1e-12)
    assert math.isclose(bl, bl_distance(nu, mu, d), rel_tol=1e-12, abs_tol=1e-15)


@given(points, st.integers(0, 100), st.floats(-3, 3), st.floats(-3, 3))
def test_push_forward_moment_identity(a, seed, s, c):
    mu = measure(a, seed)
    nu = push_forward(mu, lambda x: s * x + c)
    assert math.isclose(moment(nu, lambda y: y[0] ** 2), moment(mu, lambda x: (s * x[0] + c) ** 2), rel_tol=1e-9, abs_tol=1e-9)
    assert np.array_equal(nu.weights, mu.weights)


@given(st.floats(0, 3), st.floats(0, 3), st.floats(0, 5))
def test_chi_monotone(t1, t2, L):
    lo, hi = sorted((t1, t2))
    assert chi(lo, L) <= chi(hi, L) * (1 + 1e-12)
    assert chi_prime(hi, L) >= 1.0
    assert chi(hi, L) >= hi * (1 - 1e-12)


@given(st.floats(0.1, 3), st.floats(0, 4), st.floats(0, 4))
def test_chi_increases_with_modulus(t, L1, L2):
    lo, hi = sorted((L1, L2))
    assert chi(t, lo) <= chi(t, hi) * (1 + 1e-12)


@given(st.lists(st.tuples(coord, coord), min_size=1, max_size=8), st.sampled_from([1.0, -1.0, 0.0, 0.5]), st.floats(0, 3))
def test_quadratic_flow_keeps_center_of_mass(pairs, kappa, t):
    x = np.array([p[0] for p in pairs])[:, None]
    v = np.array([p[1] for p in pairs])[:, None]
    m = np.full(len(pairs), 1.0 / len(pairs))
    spec = QuadraticFlowSpec.from_particles(kappa, x, v, m)
    X, V = quadratic_flow(x, v, t, spec)
    scale = 1 + np.max(np.abs(X))
    assert np.allclose(m @ X, spec.mean_x + t * spec.mean_v, atol=1e-9 * scale)
    assert np.allclose(m @ V, spec.mean_v, atol=1e-9 * scale)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 200), st.floats(0, 5))
def test_undamped_mode_energy(g, h, lam, t):
    a, ad = linear_wave_modes([g], [h], [lam], t)
    E0 = 0.5 * (h * h + lam * g * g)
    assert math.isclose(0.5 * (ad[0] ** 2 + lam * a[0] ** 2), E0, rel_tol=1e-9, abs_tol=1e-12)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 200), st.floats(0.01, 2), st.floats(0, 3), st.floats(0, 3))
def test_damped_mode_energy_decays(g, h, lam, mu, t1, t2):
    lo, hi = sorted((t1, t2))
    E = []
    for t in (lo, hi):
        a, ad = linear_wave_modes([g], [h], [lam], t, mu)
        E.append(0.5 * (ad[0] ** 2 + lam * a[0] ** 2))
    assert E[1] <= E[0] * (1 + 1e-9) + 1e-12


@given(st.lists(coord, min_size=2, max_size=6, unique=True), st.integers(0, 1000), coord)
def test_lifted_potential_translation_invariant(xs, seed, shift):
    m = np.random.default_rng(seed).uniform(0.1, 1, len(xs))
    m /= m.sum()
    pot = lift_potential(gaussian_repulsive_interaction(), m)
    x = np.array(xs)[:, None]
    assert math.isclose(pot.energy(x), pot.energy(x + shift), rel_tol=1e-9, abs_tol=1e-12)
    assert abs(float(np.sum(pot.gradient(x)))) <= 1e-12


@st.composite
def sticky_data(draw):
    n = draw(st.integers(1, 10))
    gaps = draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n))
    x = np.cumsum(gaps) - 2.0
    v = np.array(draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n)))
    m = np.array(draw(st.lists(st.floats(0.1, 1), min_size=n, max_size=n)))
    pot = draw(st.sampled_from([zero_interaction(), quadratic_interaction(1.0, modulus=1.0), quadratic_interaction(-0.5)]))
    return sticky.StickyInitialData(x, v, m / m.sum(), pot)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(sticky_data())
def test_sticky_invariants(data):
    fm = sticky.evolve(data, 1.0, sticky.StickyConfig(dt=1e-2))
    assert sticky.momentum_check(fm).passed
    assert sticky.separation_check(fm).passed
    assert sticky.monotonicity_check(fm, 1.0).passed
    assert sticky.energy_monotonicity_check(fm).passed
    # cluster count only decreases and total mass is kept
    counts = [len(set(row)) for row in fm.labels.tolist()]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert math.isclose(math.fsum(fm.masses), 1.0, abs_tol=1e-12)
    # even pair forces cancel, so total momentum is constant
    assert abs(fm.masses @ fm.vel_right[-1] - fm.masses @ data.velocities) <= 1e-10
