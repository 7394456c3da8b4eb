"""Finitely supported probability measures and the diagnostics built on them."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

WEIGHT_SUM_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted point cloud ``sum_i w_i delta_{p_i}`` in R^n.

    Points are stored as a ``(k, n)`` array; 1-D input is read as ``k``
    points on the line.  Weights must be positive and sum to one within
    ``1e-9``; they are then renormalized so the sum is exact to rounding.
    """

    points: np.ndarray
    weights: np.ndarray

    def __init__(self, points, weights=None):
        p = np.array(points, dtype=float)
        if p.ndim == 0:
            p = p.reshape(1, 1)
        elif p.ndim == 1:
            p = p.reshape(-1, 1)
        if p.ndim != 2 or p.shape[0] == 0:
            raise ValueError("points must be a non-empty (k, n) array")
        if weights is None:
            w = np.full(p.shape[0], 1.0 / p.shape[0])
        else:
            w = np.array(weights, dtype=float).reshape(-1)
        if w.shape[0] != p.shape[0]:
            raise ValueError(f"{p.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(p)):
            raise ValueError("points must be finite")
        if not np.all(w > 0):
            raise ValueError("weights must be strictly positive")
        total = w.sum()
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        w = w / total
        object.__setattr__(self, "points", _readonly(p))
        object.__setattr__(self, "weights", _readonly(w))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def integrate(self, h: Callable[[np.ndarray], float]) -> float:
        """``sum_i w_i h(p_i)`` with ``h`` applied point by point."""
        return float(sum(wi * float(h(pi)) for wi, pi in zip(self.weights, self.points)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["w"] + [f"p{k + 1}" for k in range(self.dim)])
        for wi, pi in zip(self.weights, self.points):
            writer.writerow([format_float(wi)] + [format_float(x) for x in pi])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EmpiricalMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty measure CSV")
        header = rows[0]
        n = len(header) - 1
        if header[0] != "w" or header[1:] != [f"p{k + 1}" for k in range(n)] or n < 1:
            raise ValueError(f"bad measure CSV header {header!r}")
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        if data.size == 0:
            raise ValueError("measure CSV has no rows")
        return cls(data[:, 1:], data[:, 0])


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def dirac(point, dim: int | None = None) -> EmpiricalMeasure:
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if dim is not None and p.shape[0] != dim:
        raise ValueError("dimension mismatch")
    return EmpiricalMeasure(p.reshape(1, -1), [1.0])


def push_forward(mu: EmpiricalMeasure, fmap: Callable[[np.ndarray], np.ndarray]) -> EmpiricalMeasure:
    """Image measure of ``mu`` under ``fmap``; weights are carried over unchanged."""
    images = []
    for i, p in enumerate(mu.points):
        try:
            q = np.atleast_1d(np.asarray(fmap(p.copy()), dtype=float))
        except Exception as exc:  # noqa: BLE001 - re-raised with the point index
            raise ValueError(f"map failed on support point {i} ({p.tolist()}): {exc}") from exc
        if not np.all(np.isfinite(q)):
            raise ValueError(f"map returned a non-finite value on support point {i} ({p.tolist()})")
        images.append(q)
    dims = {q.shape for q in images}
    if len(dims) != 1:
        raise ValueError(f"map returned points of differing shapes {sorted(dims)}")
    # bypass renormalization so weights stay bit-identical
    out = object.__new__(EmpiricalMeasure)
    object.__setattr__(out, "points", _readonly(np.array(images)))
    object.__setattr__(out, "weights", mu.weights)
    return out


@dataclass(frozen=True, eq=False)
class LipschitzDictionary:
    """Seeded finite family ``h_j(x) = clip(tanh(a_j . x + b_j), -1, 1)``.

    Each slope vector has Euclidean norm at most one, so every ``h_j`` is
    bounded by one and 1-Lipschitz.  ``bl_distance`` against this family is
    a truncated version of the narrow-convergence metric and is therefore a
    lower bound for it.
    """

    dim: int
    slopes: np.ndarray
    offsets: np.ndarray
    seed: int

    @classmethod
    def random(cls, dim: int, size: int = 32, seed: int = 0, offset_scale: float = 2.0) -> "LipschitzDictionary":
        if dim < 1 or size < 1:
            raise ValueError("dim and size must be positive")
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(size, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        slopes = dirs * rng.uniform(0.25, 1.0, size=(size, 1))
        offsets = rng.normal(scale=offset_scale, size=size)
        return cls(dim, _readonly(slopes), _readonly(offsets), seed)

    def __len__(self) -> int:
        return self.slopes.shape[0]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values ``h_j(p_i)`` as a ``(size, k)`` array."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return np.clip(np.tanh(self.slopes @ pts.T + self.offsets[:, None]), -1.0, 1.0)


def bl_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure, dictionary: LipschitzDictionary) -> float:
    """``sum_j 2^-j |int h_j dmu - int h_j dnu|`` over the dictionary."""
    if mu.dim != nu.dim or mu.dim != dictionary.dim:
        raise ValueError(f"dimension mismatch: {mu.dim}, {nu.dim}, dictionary {dictionary.dim}")
    diff = dictionary.evaluate(mu.points) @ mu.weights - dictionary.evaluate(nu.points) @ nu.weights
    scale = 0.5 ** np.arange(1, len(dictionary) + 1)
    return float(np.sum(scale * np.abs(diff)))


def wasserstein1_1d(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Exact W1 on the line as ``int |F_mu - F_nu| dx`` over the merged support."""
    if mu.dim != 1 or nu.dim != 1:
        raise ValueError("wasserstein1_1d needs measures on R (n = 1)")
    x = np.concatenate([mu.points[:, 0], nu.points[:, 0]])
    signed = np.concatenate([mu.weights, -nu.weights])
    order = np.argsort(x, kind="stable")
    x, signed = x[order], signed[order]
    cdf_gap = np.cumsum(signed)[:-1]
    return float(np.sum(np.abs(cdf_gap) * np.diff(x)))


def moment(mu: EmpiricalMeasure, g: Callable[[np.ndarray], float]) -> float:
    return mu.integrate(g)


def tail_mass(mu: EmpiricalMeasure, g: Callable[[np.ndarray], float], R: float) -> float:
    """``int_{g >= R} g dmu``."""
    if R < 0:
        raise ValueError("R must be nonnegative")
    vals = np.array([float(g(p)) for p in mu.points])
    if np.any(vals < 0):
        raise ValueError("g must be nonnegative on the support")
    mask = vals >= R
    return float(np.sum(mu.weights[mask] * vals[mask]))
