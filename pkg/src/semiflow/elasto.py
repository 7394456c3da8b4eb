"""Spectral Galerkin elastodynamics on boxes with homogeneous Dirichlet data.

The displacement is ``u^N = sum_j a_j(t) phi_j(x)`` with ``phi_j`` the
Dirichlet Laplacian eigenfunctions of the box, and the coefficients solve
``a_j'' = -D_{y_j} V(a) - mu lam_j a_j'`` where
``V(y) = int_U F(sum_j y_j (x) D phi_j) dx``.  Only boxes are supported, so
eigenpairs are explicit sine products; general domains would need a
numerical eigensolver.

Integrals over ``U`` use tensor Gauss-Legendre quadrature.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .integrators import IntegratorConfig, check_finite, rk4_step
from .measures import format_float
from .report import CheckReport

ORTHO_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StoredEnergy:
    """Stored energy density ``F`` on ``d x d`` matrices.

    ``f`` maps ``(..., d, d)`` to ``(...)`` and ``df`` to ``(..., d, d)``.
    ``modulus`` is the Andrews-Ball constant ``L`` (``F + L/2 |A|^2``
    convex), ``coercivity`` the ``c`` in ``c(|A|^2-1) <= F <= (|A|^2+1)/c``
    and ``growth`` the ``C`` in ``|DF(A)| <= C(|A|+1)``.
    """

    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    modulus: float
    coercivity: float
    growth: float
    dim: int = 1
    name: str = "custom"
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.modulus < 0 or self.growth < 0:
            raise ValueError("modulus and growth constant must be nonnegative")
        if not 0 < self.coercivity <= 1:
            raise ValueError("coercivity constant must lie in (0, 1]")

    def describe(self) -> dict[str, Any]:
        return {"name": self.name, "dim": self.dim, "L": self.modulus, "c": self.coercivity, "C": self.growth, **self.params}


def _frob2(A: np.ndarray) -> np.ndarray:
    return np.sum(A * A, axis=(-2, -1))


def quadratic_energy(dim: int = 1) -> StoredEnergy:
    """``F(A) = |A|^2/2``: convex, so every ``L >= 0`` works; ``L = 0`` is stored."""
    return StoredEnergy(
        f=lambda A: 0.5 * _frob2(A),
        df=lambda A: np.array(A, dtype=float),
        modulus=0.0,
        coercivity=0.5,
        growth=1.0,
        dim=dim,
        name="quadratic",
    )


def cosine_energy(alpha: float, B, dim: int = 1) -> StoredEnergy:
    """``F(A) = |A|^2/2 + alpha cos(B:A)``, nonconvex once ``alpha |B|^2 > 1``.

    ``D^2F = I - alpha cos(B:A) B (x) B`` gives ``L = max(0, alpha|B|^2 - 1)``.
    Coercivity with ``c = 1/2`` needs ``|alpha| <= 1/2``.
    """
    a = float(alpha)
    Bm = np.asarray(B, dtype=float)
    if Bm.ndim == 0:
        Bm = Bm * np.eye(dim)
    if Bm.shape != (dim, dim):
        raise ValueError(f"B must be a {dim}x{dim} matrix")
    if abs(a) > 0.5:
        raise ValueError("|alpha| must be <= 1/2 for coercivity with c = 1/2")
    b2 = float(np.sum(Bm * Bm))

    def inner(A):
        return np.sum(A * Bm, axis=(-2, -1))

    return StoredEnergy(
        f=lambda A: 0.5 * _frob2(A) + a * np.cos(inner(A)),
        df=lambda A: A - a * np.sin(inner(A))[..., None, None] * Bm,
        modulus=max(0.0, abs(a) * b2 - 1.0),
        coercivity=0.5,
        growth=max(1.0, abs(a) * math.sqrt(b2)),
        dim=dim,
        name="cosine",
        params={"alpha": a, "B": Bm.tolist()},
    )


def make_energy(name: str, dim: int = 1, **params) -> StoredEnergy:
    if name == "quadratic":
        if params:
            raise ValueError(f"quadratic energy takes no parameters, got {sorted(params)}")
        return quadratic_energy(dim)
    if name == "cosine":
        extra = set(params) - {"alpha", "B"}
        if extra:
            raise ValueError(f"cosine energy got unknown parameters {sorted(extra)}")
        return cosine_energy(params.get("alpha", 0.4), params.get("B", 2.0), dim)
    raise ValueError(f"unknown stored energy {name!r}; known: ['cosine', 'quadratic']")


def check_stored_energy(F: StoredEnergy, samples: int = 1000, seed: int = 0, scale: float = 3.0) -> CheckReport:
    """Sampled coercivity, Andrews-Ball monotonicity and linear growth of ``DF``."""
    rng = np.random.default_rng(seed)
    d = F.dim
    A = rng.normal(scale=scale, size=(samples, d, d))
    Bn = A + rng.normal(scale=0.2 * scale, size=A.shape)
    n2 = _frob2(A)
    fa = F.f(A)
    c = F.coercivity
    lower = float(np.max(c * (n2 - 1.0) - fa))
    upper = float(np.max(fa - (n2 + 1.0) / c))
    dA = A - Bn
    mono = float(np.max(-(np.sum((F.df(A) - F.df(Bn)) * dA, axis=(-2, -1)) + F.modulus * _frob2(dA))))
    grow = float(np.max(np.sqrt(_frob2(F.df(A))) - F.growth * (np.sqrt(n2) + 1.0)))
    parts = {"coercive_lower": lower, "coercive_upper": upper, "andrews_ball": mono, "growth": grow}
    return CheckReport("stored_energy_assumptions", max(parts.values()), 1e-8, parts)


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Dirichlet eigenfunctions of ``(0, l_1) x ... x (0, l_d)`` tabulated on a Gauss grid.

    ``phi`` is ``(Q, M)``, ``grad`` is ``(Q, M, d)``; modes are sorted by
    eigenvalue, ties broken lexicographically.
    """

    lengths: np.ndarray
    modes: np.ndarray
    lambdas: np.ndarray
    quad_order: int
    nodes: np.ndarray
    weights: np.ndarray
    phi: np.ndarray
    grad: np.ndarray

    @property
    def dim(self) -> int:
        return self.lengths.shape[0]

    @property
    def size(self) -> int:
        return self.modes.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def evaluate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``phi`` and ``D phi`` at arbitrary points ``x`` of shape ``(P, d)``."""
        return _tabulate(np.atleast_2d(np.asarray(x, dtype=float)), self.lengths, self.modes)

    def gradient_field(self, coeffs: np.ndarray, x: np.ndarray | None = None) -> np.ndarray:
        """``Du = sum_j y_j (x) D phi_j`` as ``(P, d, d)``; on the grid when ``x`` is None."""
        G = self.grad if x is None else self.evaluate(x)[1]
        return np.einsum("ja,qjb->qab", coeffs, G)

    def field(self, coeffs: np.ndarray, x: np.ndarray | None = None) -> np.ndarray:
        P = self.phi if x is None else self.evaluate(x)[0]
        return P @ coeffs


def _tabulate(x: np.ndarray, lengths: np.ndarray, modes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = lengths.shape[0]
    freq = modes * (np.pi / lengths)[None, :]  # (M, d)
    arg = x[:, None, :] * freq[None, :, :]  # (P, M, d)
    amp = np.sqrt(2.0 / lengths)
    s = amp * np.sin(arg)
    c = amp * freq[None, :, :] * np.cos(arg)
    phi = np.prod(s, axis=2)
    grad = np.empty(s.shape)
    for b in range(d):
        others = [i for i in range(d) if i != b]
        rest = np.prod(s[:, :, others], axis=2) if others else 1.0
        grad[:, :, b] = c[:, :, b] * rest
    return phi, grad


def default_quad_order(max_index: int) -> int:
    return 2 * max_index + 12


def _select_modes(lengths: np.ndarray, count: int) -> np.ndarray:
    d = lengths.shape[0]
    cands = np.array(list(itertools.product(range(1, count + 1), repeat=d)), dtype=int)
    lam = np.pi**2 * np.sum((cands / lengths[None, :]) ** 2, axis=1)
    order = np.lexsort(tuple(cands[:, i] for i in reversed(range(d))) + (lam,))
    return cands[order[:count]]


def build_basis(lengths: Sequence[float] | float, mode_cutoff: int, quad_order: int | None = None) -> EigenBasis:
    """The first ``mode_cutoff`` eigenfunctions (by eigenvalue) of the box.

    ``quad_order`` is the number of Gauss points per axis; the default
    ``2 K + 12`` (``K`` the largest per-axis index) keeps the discrete
    orthonormality error near roundoff.
    """
    ell = np.atleast_1d(np.asarray(lengths, dtype=float))
    if ell.ndim != 1 or not np.all(np.isfinite(ell)) or np.any(ell <= 0):
        raise ValueError("box side lengths must be positive and finite")
    if mode_cutoff < 1:
        raise ValueError("mode_cutoff must be >= 1")
    modes = _select_modes(ell, int(mode_cutoff))
    kmax = int(modes.max())
    q = default_quad_order(kmax) if quad_order is None else int(quad_order)
    if q < kmax + 2:
        raise ValueError(f"quad_order {q} below the largest mode index + 2 = {kmax + 2}")
    z, w = np.polynomial.legendre.leggauss(q)
    axes = [0.5 * L * (z + 1.0) for L in ell]
    wax = [0.5 * L * w for L in ell]
    nodes = np.array(list(itertools.product(*axes)))
    weights = np.array([np.prod(c) for c in itertools.product(*wax)])
    phi, grad = _tabulate(nodes, ell, modes)
    lam = np.pi**2 * np.sum((modes / ell[None, :]) ** 2, axis=1)
    arrays = dict(lengths=ell, modes=modes, lambdas=lam, nodes=nodes, weights=weights, phi=phi, grad=grad)
    for a in arrays.values():
        a.flags.writeable = False
    return EigenBasis(quad_order=q, **arrays)


def orthonormality_errors(basis: EigenBasis) -> tuple[float, float]:
    """Max deviations of the Gram matrices of ``phi`` and ``D phi`` from ``I`` and ``diag(lam)``."""
    w = basis.weights
    gram = basis.phi.T @ (w[:, None] * basis.phi)
    dgram = np.einsum("q,qjb,qkb->jk", w, basis.grad, basis.grad)
    e0 = float(np.max(np.abs(gram - np.eye(basis.size))))
    e1 = float(np.max(np.abs(dgram - np.diag(basis.lambdas))))
    return e0, e1


@dataclass(frozen=True)
class ProjectedData:
    g: np.ndarray
    h: np.ndarray
    g_error: float
    h_error: float


def _sample_field(fn, basis: EigenBasis) -> np.ndarray:
    vals = np.asarray(fn(basis.nodes), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape != (basis.nodes.shape[0], basis.dim):
        raise ValueError(f"vector field must return shape (Q, {basis.dim})")
    return vals


def project_initial(g, h, basis: EigenBasis) -> ProjectedData:
    """``g_j = int g phi_j`` and ``h_j = int h phi_j``; errors are L2 reconstruction residuals."""
    out = []
    for fn in (g, h):
        vals = _sample_field(fn, basis)
        coef = basis.phi.T @ (basis.weights[:, None] * vals)
        resid = vals - basis.phi @ coef
        err = math.sqrt(float(np.sum(basis.weights[:, None] * resid * resid)))
        out.append((coef, err))
    return ProjectedData(out[0][0], out[1][0], out[0][1], out[1][1])


def discrete_potential(coeffs, basis: EigenBasis, F: StoredEnergy) -> tuple[float, np.ndarray]:
    """``V(y) = int F(sum_j y_j (x) D phi_j)`` and its gradient, ``(M, d)``."""
    y = np.asarray(coeffs, dtype=float).reshape(basis.size, basis.dim)
    Du = np.einsum("ja,qjb->qab", y, basis.grad)
    V = float(basis.weights @ F.f(Du))
    grad = np.einsum("q,qab,qjb->ja", basis.weights, F.df(Du), basis.grad)
    return V, grad


def discrete_modulus(basis: EigenBasis, F: StoredEnergy) -> float:
    """Semiconvexity modulus ``L lam_N`` of the discrete potential."""
    return F.modulus * float(basis.lambdas.max())


@dataclass(frozen=True, eq=False)
class GalerkinSeries:
    times: np.ndarray
    a: np.ndarray  # (K, M, d)
    adot: np.ndarray
    dissipation: np.ndarray  # mu int_0^t sum lam_j |a_j'|^2
    mu: float
    basis: EigenBasis
    energy: StoredEnergy

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mode", "component", "a", "adot"])
        K, M, d = self.a.shape
        for k in range(K):
            t = format_float(self.times[k])
            for j in range(M):
                for c in range(d):
                    w.writerow([t, j + 1, c + 1, format_float(self.a[k, j, c]), format_float(self.adot[k, j, c])])
        return buf.getvalue()


def read_modes_csv(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of ``GalerkinSeries.to_csv``: ``(times, a, adot)``."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["t", "mode", "component", "a", "adot"]:
        raise ValueError("not a mode-coefficient CSV")
    body = rows[1:]
    times = sorted({float(r[0]) for r in body})
    M = max(int(r[1]) for r in body)
    d = max(int(r[2]) for r in body)
    if len(body) != len(times) * M * d:
        raise ValueError("mode-coefficient CSV is missing rows")
    index = {t: k for k, t in enumerate(times)}
    a = np.full((len(times), M, d), np.nan)
    ad = np.full_like(a, np.nan)
    for r in body:
        k, j, c = index[float(r[0])], int(r[1]) - 1, int(r[2]) - 1
        a[k, j, c], ad[k, j, c] = float(r[3]), float(r[4])
    if np.isnan(a).any() or np.isnan(ad).any():
        raise ValueError("mode-coefficient CSV has duplicate or missing entries")
    return np.array(times), a, ad


def evolve_galerkin(
    g,
    h,
    F: StoredEnergy,
    basis: EigenBasis,
    T: float,
    config: IntegratorConfig | None = None,
    mu: float = 0.0,
) -> GalerkinSeries:
    """Integrate the mode system from coefficients ``g, h`` (each ``(M, d)``).

    ``mu = 0`` uses ``config.scheme``; ``mu > 0`` always uses rk4, with the
    dissipation integral carried as an extra state component.
    """
    cfg = config or IntegratorConfig()
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if F.dim != basis.dim:
        raise ValueError("stored energy and basis dimensions differ")
    shape = (basis.size, basis.dim)
    a = np.array(g, dtype=float).reshape(shape)
    ad = np.array(h, dtype=float).reshape(shape)
    lam = basis.lambdas[:, None]
    n, dt = cfg.grid(T)

    def accel(y, yd):
        return -discrete_potential(y, basis, F)[1] - mu * lam * yd

    def rhs(s):
        return [s[1], accel(s[0], s[1]), np.array(mu * float(np.sum(lam * s[1] * s[1])))]

    times, A, AD, D = [0.0], [a.copy()], [ad.copy()], [0.0]
    diss = np.array(0.0)
    use_rk4 = mu > 0 or cfg.scheme == "rk4"
    acc = None if use_rk4 else accel(a, ad)
    for k in range(1, n + 1):
        if use_rk4:
            a, ad, diss = rk4_step(rhs, [a, ad, diss], dt)
        else:
            ad_half = ad + 0.5 * dt * acc
            a = a + dt * ad_half
            acc = accel(a, ad_half)
            ad = ad_half + 0.5 * dt * acc
        check_finite(k, a, ad)
        if k % cfg.output_stride == 0 or k == n:
            times.append(k * dt if k < n else float(T))
            A.append(a.copy())
            AD.append(ad.copy())
            D.append(float(diss))
    return GalerkinSeries(np.array(times), np.array(A), np.array(AD), np.array(D), float(mu), basis, F)


@dataclass(frozen=True)
class EnergyReport:
    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    residual: np.ndarray  # |E(t) + D(t) - E(0)|

    @property
    def relative_drift(self) -> float:
        return float(np.max(self.residual)) / max(abs(float(self.energy[0])), np.finfo(float).tiny)

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))


def series_energy(series: GalerkinSeries) -> np.ndarray:
    return np.array(
        [
            0.5 * float(np.sum(series.adot[k] ** 2)) + discrete_potential(series.a[k], series.basis, series.energy)[0]
            for k in range(len(series.times))
        ]
    )


def energy_report(series: GalerkinSeries) -> EnergyReport:
    """Energy ``sum |a_j'|^2/2 + V(a)`` per output time plus the dissipation ledger."""
    E = series_energy(series)
    res = np.abs(E + series.dissipation - E[0])
    return EnergyReport(series.times.copy(), E, series.dissipation.copy(), res)


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros_like(times)
    dt = np.diff(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


@dataclass(frozen=True)
class YoungCell:
    bounds: list[list[float]]  # per space axis then time: [lo, hi]
    counts: np.ndarray  # histogram weights, sum 1
    mean: np.ndarray  # (d, d) weighted sample mean of Du

    def histogram_mean(self, edges: list[np.ndarray], d: int) -> np.ndarray:
        centers = [0.5 * (e[:-1] + e[1:]) for e in edges]
        out = np.empty(d * d)
        for i, c in enumerate(centers):
            axes = tuple(a for a in range(d * d) if a != i)
            out[i] = float(np.sum(self.counts, axis=axes) @ c) if axes else float(self.counts @ c)
        return out.reshape(d, d)

    def second_moment(self, edges: list[np.ndarray]) -> float:
        """``int |A|^2`` against the histogram, evaluated at bin centers."""
        centers = [0.5 * (e[:-1] + e[1:]) for e in edges]
        grids = np.meshgrid(*centers, indexing="ij")
        sq = sum(g * g for g in grids)
        return float(np.sum(self.counts * sq))


@dataclass(frozen=True)
class YoungMeasureHistogram:
    """Histograms of ``Du^N`` over space-time cells, a proxy for the Young measure."""

    dim: int
    edges: list[np.ndarray]
    cells: list[YoungCell]
    sample_second_moment: float  # (1/(T|U|)) int int |Du|^2 from the raw samples

    @property
    def bin_widths(self) -> np.ndarray:
        return np.array([e[1] - e[0] for e in self.edges]).reshape(self.dim, self.dim)

    def to_json(self) -> str:
        return json.dumps(
            {
                "dim": self.dim,
                "edges": [e.tolist() for e in self.edges],
                "cells": [
                    {
                        "bounds": c.bounds,
                        "bins": [len(e) - 1 for e in self.edges],
                        "counts": c.counts.tolist(),
                        "mean": c.mean.tolist(),
                    }
                    for c in self.cells
                ],
            },
            indent=1,
        )


def _cell_gradient_average(basis: EigenBasis, box: list[tuple[float, float]]) -> np.ndarray:
    """Exact ``(1/|cell|) int_cell D phi_j`` for every mode, ``(M, d)``."""
    ell, modes = basis.lengths, basis.modes
    amp = np.sqrt(2.0 / ell)
    freq = modes * (np.pi / ell)[None, :]
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    sin_int = amp * (np.cos(freq * lo) - np.cos(freq * hi)) / freq  # int sin
    cos_int = amp * (np.sin(freq * hi) - np.sin(freq * lo))  # int of the derivative (freq cancels)
    d = basis.dim
    out = np.empty((basis.size, d))
    for b in range(d):
        others = [i for i in range(d) if i != b]
        rest = np.prod(sin_int[:, others], axis=1) if others else 1.0
        out[:, b] = cos_int[:, b] * rest
    return out / float(np.prod(hi - lo))


def young_histogram(
    series: GalerkinSeries,
    space_cells: int | Sequence[int] = 4,
    time_cells: int = 4,
    bins: int | None = None,
    cell_quad: int = 8,
) -> YoungMeasureHistogram:
    """Weighted histograms of ``Du^N(x, t)`` per space-time cell.

    Samples are Gauss nodes inside each space cell at every stored time,
    weighted by Gauss and trapezoid weights.  Bins are uniform over the
    bounding box of all samples, ``bins`` per matrix entry (32 for d=1,
    8 for d=2 by default).
    """
    basis = series.basis
    d = basis.dim
    if len(series.times) < 2:
        raise ValueError("series needs at least two stored times")
    nb = bins or (32 if d == 1 else 8)
    per_axis = [int(space_cells)] * d if np.isscalar(space_cells) else [int(c) for c in space_cells]
    if len(per_axis) != d or min(per_axis) < 1 or time_cells < 1:
        raise ValueError("need at least one cell per axis and in time")
    K = len(series.times)
    if time_cells > K - 1:
        raise ValueError(f"time_cells={time_cells} exceeds the {K - 1} stored time intervals")
    z, w = np.polynomial.legendre.leggauss(cell_quad)
    cuts = np.linspace(0, K - 1, time_cells + 1).round().astype(int)
    space_boxes = []
    for idx in itertools.product(*[range(c) for c in per_axis]):
        box = [(basis.lengths[i] * idx[i] / per_axis[i], basis.lengths[i] * (idx[i] + 1) / per_axis[i]) for i in range(d)]
        pts = [0.5 * (hi - lo) * (z + 1.0) + lo for lo, hi in box]
        wts = [0.5 * (hi - lo) * w for lo, hi in box]
        x = np.array(list(itertools.product(*pts)))
        wx = np.array([np.prod(c) for c in itertools.product(*wts)])
        space_boxes.append((box, x, wx, basis.evaluate(x)[1]))
    samples = []
    total_sq = 0.0
    for box, x, wx, G in space_boxes:
        Du_all = np.einsum("kja,qjb->kqab", series.a, G)  # (K, P, d, d)
        total_sq += float(np.einsum("k,q,kq->", _trapezoid_weights(series.times), wx, _frob2(Du_all)))
        for c in range(time_cells):
            k0, k1 = cuts[c], cuts[c + 1]
            if k1 <= k0:
                raise ValueError(f"time cell {c} is empty")
            wt = _trapezoid_weights(series.times[k0 : k1 + 1])
            weights = (wt[:, None] * wx[None, :]).reshape(-1)
            vals = Du_all[k0 : k1 + 1].reshape(-1, d * d)
            if weights.sum() <= 0:
                raise ValueError(f"cell {box} x [{series.times[k0]}, {series.times[k1]}] has no samples")
            bounds = [list(map(float, b)) for b in box] + [[float(series.times[k0]), float(series.times[k1])]]
            samples.append((bounds, vals, weights / weights.sum()))
    allv = np.concatenate([s[1] for s in samples])
    lo, hi = allv.min(axis=0), allv.max(axis=0)
    span = hi - lo
    pad = np.where(span > 0, 1e-9 * span, 0.5)
    lo, hi = lo - pad, hi + pad
    edges = [np.linspace(lo[i], hi[i], nb + 1) for i in range(d * d)]
    cells = []
    for bounds, vals, wts in samples:
        counts, _ = np.histogramdd(vals, bins=edges, weights=wts)
        cells.append(YoungCell(bounds, counts, (wts @ vals).reshape(d, d)))
    T = float(series.times[-1] - series.times[0])
    return YoungMeasureHistogram(d, edges, cells, total_sq / (T * basis.volume))


def independent_cell_means(series: GalerkinSeries, hist: YoungMeasureHistogram) -> list[np.ndarray]:
    """Cell averages of ``Du^N`` from closed-form cell integrals of ``D phi_j``.

    The time average uses the trapezoid rule on the stored coefficients, so
    this path shares only ``a_j(t)`` with the histogram.
    """
    out = []
    for cell in hist.cells:
        space, (t0, t1) = cell.bounds[:-1], cell.bounds[-1]
        k0 = int(np.searchsorted(series.times, t0 - 1e-12))
        k1 = int(np.searchsorted(series.times, t1 + 1e-12, side="right")) - 1
        wt = _trapezoid_weights(series.times[k0 : k1 + 1])
        abar = np.tensordot(wt, series.a[k0 : k1 + 1], axes=1) / wt.sum()
        Gbar = _cell_gradient_average(series.basis, [tuple(b) for b in space])
        out.append(abar.T @ Gbar)
    return out


def young_mean_check(series: GalerkinSeries, hist: YoungMeasureHistogram) -> CheckReport:
    """Histogram mean versus the independent cell average, in units of bin width."""
    widths = hist.bin_widths
    worst = 0.0
    for cell, ref in zip(hist.cells, independent_cell_means(series, hist)):
        hm = cell.histogram_mean(hist.edges, hist.dim)
        worst = max(worst, float(np.max(np.abs(hm - ref) / widths)))
    return CheckReport("young_mean", worst, 1.0, {"cells": len(hist.cells)})


def young_second_moment_bound(series: GalerkinSeries) -> float:
    """``1 + E(0)/(c |U|)``, the uniform bound on ``int |A|^2 d eta^N``."""
    E0 = float(series_energy(series)[0])
    return 1.0 + E0 / (series.energy.coercivity * series.basis.volume)


def young_second_moment_check(series: GalerkinSeries, hist: YoungMeasureHistogram) -> CheckReport:
    bound = young_second_moment_bound(series)
    return CheckReport(
        "young_second_moment",
        hist.sample_second_moment - bound,
        0.0,
        {"second_moment": hist.sample_second_moment, "bound": bound},
    )


def _same_setup(small: GalerkinSeries, large: GalerkinSeries) -> None:
    if small.basis.size > large.basis.size:
        raise ValueError("the first run must have the smaller mode cutoff")
    if not np.array_equal(small.basis.lengths, large.basis.lengths):
        raise ValueError("runs live on different boxes")
    if not np.array_equal(small.basis.modes, large.basis.modes[: small.basis.size]):
        raise ValueError("mode sets are not nested")
    if small.times.shape != large.times.shape or not np.allclose(small.times, large.times, rtol=0, atol=1e-12):
        raise ValueError("runs are sampled at different times")
    if small.mu != large.mu or small.energy.describe() != large.energy.describe():
        raise ValueError("runs use different damping or stored energy")


def cauchy_gradient_check(small: GalerkinSeries, large: GalerkinSeries) -> tuple[float, float]:
    """``||Du^N - Du^N'||`` in ``L2(U x (0,T))``: on the quadrature grid, and spectrally.

    The spectral value ``sum_j lam_j |a_j^N - a_j^N'|^2`` (time-integrated)
    serves as an independent cross-check of the grid value.
    """
    _same_setup(small, large)
    M = small.basis.size
    diff = large.a.copy()
    diff[:, :M, :] -= small.a
    wt = _trapezoid_weights(large.times)
    G = large.basis.grad
    Du = np.einsum("kja,qjb->kqab", diff, G)
    grid = float(np.einsum("k,q,kq->", wt, large.basis.weights, _frob2(Du)))
    spectral = float(wt @ np.einsum("j,kja->k", large.basis.lambdas, diff * diff))
    return math.sqrt(max(grid, 0.0)), math.sqrt(max(spectral, 0.0))


def reference_fields(kind: str, lengths: Sequence[float], seed: int = 0) -> tuple[Callable, Callable]:
    """Built-in smooth initial data vanishing on the boundary of the box.

    ``bump``: ``g = prod x_i(l_i - x_i)/l_i^2`` in every component, ``h = 0``.
    ``random``: seeded combinations of bump times polynomials, for ``g`` and ``h``.
    ``zero``: ``g = h = 0``.
    """
    ell = np.atleast_1d(np.asarray(lengths, dtype=float))
    dim = ell.shape[0]
    rng = np.random.default_rng(seed)
    if kind == "zero":
        return (lambda x: np.zeros((x.shape[0], dim))), (lambda x: np.zeros((x.shape[0], dim)))
    if kind == "bump":

        def g(x):
            base = np.prod(x * (ell - x) / ell**2, axis=1)
            return np.repeat(base[:, None], dim, axis=1)

        return g, (lambda x: np.zeros((x.shape[0], dim)))
    if kind == "random":
        cg = rng.normal(size=(dim, 3))
        ch = rng.normal(size=(dim, 3))

        def make(c):
            def fn(x):
                b = np.prod(x * (ell - x) / ell**2, axis=1)
                m = np.mean(x / ell, axis=1)
                basis_vals = np.stack([b, b * m, b * m * m], axis=1)
                return basis_vals @ c.T

            return fn

        return make(cg), make(ch)
    raise ValueError(f"unknown initial field {kind!r}; known: bump, random, zero")
