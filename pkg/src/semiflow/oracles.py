"""Closed-form reference solutions.

* Quadratic interactions ``W(z) = kappa/2 |z|^2``: every particle obeys
  ``X'' = -kappa (X - xbar - t vbar)``, where ``xbar, vbar`` are the initial
  mean position and velocity, so the flow is explicit.
* Quadratic stored energy ``F(A) = |A|^2/2``: the Galerkin modes decouple into
  ``a'' = -lam a - mu lam a'``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadraticFlowSpec:
    kappa: float
    mean_x: np.ndarray
    mean_v: np.ndarray

    def __post_init__(self):
        mx = np.atleast_1d(np.asarray(self.mean_x, dtype=float))
        mv = np.atleast_1d(np.asarray(self.mean_v, dtype=float))
        if mx.shape != mv.shape or not (np.all(np.isfinite(mx)) and np.all(np.isfinite(mv))):
            raise ValueError("means must be finite vectors of equal length")
        object.__setattr__(self, "mean_x", mx)
        object.__setattr__(self, "mean_v", mv)

    @classmethod
    def from_particles(cls, kappa: float, x, v, masses) -> "QuadraticFlowSpec":
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if x.ndim == 1:
            x, v = x[:, None], v[:, None]
        m = np.asarray(masses, dtype=float)
        return cls(float(kappa), m @ x, m @ v)


def quadratic_flow(x, v, t: float, spec: QuadraticFlowSpec) -> tuple[np.ndarray, np.ndarray]:
    """Position and velocity at time ``t`` of the particle started at ``(x, v)``.

    ``x`` and ``v`` may be single points or ``(N, d)`` stacks.  For
    ``kappa < 0`` the sinh term is divided by ``sqrt(-kappa)``, which is
    what the equation of motion requires.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    k = float(spec.kappa)
    cx, cv = x - spec.mean_x, v - spec.mean_v
    drift = spec.mean_x + t * spec.mean_v
    if k > 0:
        w = np.sqrt(k)
        c, s = np.cos(w * t), np.sin(w * t)
        X = cx * c + cv * s / w + drift
        Xdot = -cx * w * s + cv * c + spec.mean_v
    elif k < 0:
        w = np.sqrt(-k)
        c, s = np.cosh(w * t), np.sinh(w * t)
        X = cx * c + cv * s / w + drift
        Xdot = cx * w * s + cv * c + spec.mean_v
    else:
        X = x + t * v
        Xdot = v.copy()
    return X, Xdot


def linear_wave_modes(gj, hj, lambdas, t: float, mu: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(a_j(t), a_j'(t))`` for ``a'' = -lam a - mu lam a'``, ``a(0)=g``, ``a'(0)=h``.

    ``gj``/``hj`` are ``(M,)`` or ``(M, d)``; ``lambdas`` is ``(M,)``.
    """
    lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    if mu < 0:
        raise ValueError("damping must be nonnegative")
    g = np.asarray(gj, dtype=float)
    h = np.asarray(hj, dtype=float)
    a = np.empty(np.broadcast(g, h).shape)
    ad = np.empty_like(a)
    for j, lj in enumerate(lam):
        a[j], ad[j] = _damped_mode(g[j], h[j], lj, t, mu)
    return a, ad


def _damped_mode(g, h, lam: float, t: float, mu: float):
    sigma = 0.5 * mu * lam
    disc = (mu * lam) ** 2 - 4.0 * lam
    if mu == 0.0:
        w = np.sqrt(lam)
        c, s = np.cos(w * t), np.sin(w * t)
        return g * c + h * s / w, -g * w * s + h * c
    if abs(disc) <= 1e-12 * ((mu * lam) ** 2 + 4.0 * lam):
        e = np.exp(-sigma * t)
        b = h + sigma * g
        return e * (g + b * t), e * (b - sigma * (g + b * t))
    if disc < 0:
        w = 0.5 * np.sqrt(-disc)
        e = np.exp(-sigma * t)
        c, s = np.cos(w * t), np.sin(w * t)
        b = (h + sigma * g) / w
        a = e * (g * c + b * s)
        ad = e * ((-sigma * g + b * w) * c + (-sigma * b - g * w) * s)
        return a, ad
    root = 0.5 * np.sqrt(disc)
    r1, r2 = -sigma + root, -sigma - root
    c1 = (h - r2 * g) / (r1 - r2)
    c2 = g - c1
    e1, e2 = np.exp(r1 * t), np.exp(r2 * t)
    return c1 * e1 + c2 * e2, c1 * r1 * e1 + c2 * r2 * e2
