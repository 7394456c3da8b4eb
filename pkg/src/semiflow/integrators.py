"""Fixed-step integrators and the pairwise mean-field force loop.

The force loop may fan out over threads (``SEMIFLOW_THREADS``).  Work is
split by rows only; each row is reduced over all partners in index order,
so the result does not depend on how many threads were used.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

SCHEMES = ("velocity-verlet", "rk4")
THREADS_ENV = "SEMIFLOW_THREADS"
# below this many pair evaluations the thread pool costs more than it saves
PARALLEL_MIN_PAIRS = 4096


class NumericalError(ArithmeticError):
    """Raised when an integration produces non-finite values or runs too long."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    scheme: str = "velocity-verlet"
    max_steps: int = 10_000_000
    output_stride: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.max_steps < 1 or self.output_stride < 1:
            raise ValueError("max_steps and output_stride must be >= 1")

    def grid(self, T: float) -> tuple[int, float]:
        """Number of steps and the uniform step that lands exactly on ``T``."""
        if not T > 0:
            raise ValueError("T must be positive")
        n = max(1, int(round(T / self.dt)))
        if n > self.max_steps:
            raise NumericalError(f"T/dt needs {n} steps, above max_steps={self.max_steps}")
        return n, T / n


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def mean_field(
    x: np.ndarray,
    masses: np.ndarray,
    dw: Callable[[np.ndarray], np.ndarray],
    threads: int | None = None,
) -> np.ndarray:
    """``(DW * rho)(x_i) = sum_j m_j DW(x_i - x_j)`` for every particle.

    ``x`` has shape ``(N, d)``; ``dw`` maps ``(..., d)`` arrays to ``(..., d)``.
    """
    n = x.shape[0]

    def rows(lo: int, hi: int) -> np.ndarray:
        diff = x[lo:hi, None, :] - x[None, :, :]
        return np.sum(dw(diff) * masses[None, :, None], axis=1)

    nthreads = thread_count(threads)
    if nthreads == 1 or n * n < PARALLEL_MIN_PAIRS:
        return rows(0, n)
    bounds = np.linspace(0, n, min(nthreads, n) + 1).astype(int)
    with ThreadPoolExecutor(max_workers=nthreads) as pool:
        parts = list(pool.map(lambda ab: rows(*ab), zip(bounds[:-1], bounds[1:])))
    return np.concatenate(parts, axis=0)


def rk4_step(rhs: Callable[[Sequence[np.ndarray]], Sequence[np.ndarray]], y: Sequence[np.ndarray], h: float):
    """One classical Runge-Kutta step for a tuple-of-arrays state."""
    k1 = rhs(y)
    k2 = rhs([a + 0.5 * h * b for a, b in zip(y, k1)])
    k3 = rhs([a + 0.5 * h * b for a, b in zip(y, k2)])
    k4 = rhs([a + h * b for a, b in zip(y, k3)])
    return [a + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]


def verlet_step(accel: Callable[[np.ndarray], np.ndarray], x: np.ndarray, v: np.ndarray, a: np.ndarray, h: float):
    """Kick-drift-kick velocity Verlet; returns ``(x, v, a)`` at the new time."""
    v_half = v + 0.5 * h * a
    x_new = x + h * v_half
    a_new = accel(x_new)
    return x_new, v_half + 0.5 * h * a_new, a_new


def check_finite(step: int, *arrays: np.ndarray) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericalError("non-finite state encountered", step=step)
