"""Deterministic functionals of configurations and exact linear-dynamics oracles.

The mean height field evolves by one half of the discrete Laplacian for any
convex potential, so the sine eigenbasis of the pinned segment gives closed
forms for mean profiles and decay rates. Everything here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Interface

__all__ = [
    "SpectralProfile",
    "spectral_gap",
    "fourier_stat",
    "heat_mean_solution",
    "area_between",
    "sup_height",
    "sup_gradient",
    "detilt",
]


@dataclass(frozen=True)
class SpectralProfile:
    """Eigenvalues and orthonormal sine basis of the pinned linear dynamics."""

    N: int
    eigenvalues: np.ndarray    # lambda_j = 1 - cos(j pi / N), j = 0..N-1
    basis: np.ndarray          # basis[j-1, k-1] = sqrt(2/N) sin(j k pi / N)

    @classmethod
    def build(cls, N: int) -> "SpectralProfile":
        if N < 2:
            raise ValueError("N must be at least 2")
        j = np.arange(N)
        lam = 1.0 - np.cos(j * np.pi / N)
        jj, kk = np.meshgrid(np.arange(1, N), np.arange(1, N), indexing="ij")
        basis = np.sqrt(2.0 / N) * np.sin(jj * kk * np.pi / N)
        return cls(N, lam, basis)


def spectral_gap(N: int) -> float:
    """Relaxation rate of the slowest mode: 1 - cos(pi/N)."""
    if N < 2:
        raise ValueError("N must be at least 2")
    return float(1.0 - np.cos(np.pi / N))


def fourier_stat(x: Interface | np.ndarray, j: int = 1) -> float:
    """Sine statistic sum_k sin(j pi k / N) x_k over interior sites."""
    h = x.heights if isinstance(x, Interface) else np.asarray(x, dtype=float)
    N = h.size - 1
    if not 1 <= j <= N - 1:
        raise ValueError(f"mode index must lie in [1, {N - 1}], got {j}")
    k = np.arange(1, N)
    return float(np.sin(j * np.pi * k / N) @ h[1:N])


def fourier_stat_rows(heights: np.ndarray, j: int = 1) -> np.ndarray:
    """Vectorized fourier_stat over a block of height rows."""
    N = heights.shape[-1] - 1
    k = np.arange(1, N)
    return heights[..., 1:N] @ np.sin(j * np.pi * k / N)


def detilt(x: Interface | np.ndarray, tilt: float | None = None) -> np.ndarray:
    """Remove the linear profile k*tilt, mapping tilted data to zero boundary."""
    if isinstance(x, Interface):
        h, t = x.heights, x.tilt if tilt is None else tilt
    else:
        h, t = np.asarray(x, dtype=float), 0.0 if tilt is None else tilt
    k = np.arange(h.shape[-1], dtype=float)
    return h - t * k


def heat_mean_solution(x0: Interface, t: float) -> np.ndarray:
    """Exact mean profile at time t: eigen-expansion of the half-Laplacian flow.

    The linear tilt profile is the stationary mean; the remainder relaxes
    mode by mode at rates 1 - cos(j pi / N).
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    N = x0.N
    prof = SpectralProfile.build(N)
    lin = x0.tilt * np.arange(N + 1, dtype=float)
    resid = x0.heights[1:N] - lin[1:N]
    coeff = prof.basis @ resid
    decayed = coeff * np.exp(-prof.eigenvalues[1:] * t)
    out = lin.copy()
    out[1:N] += prof.basis.T @ decayed
    return out


def area_between(x: Interface, y: Interface) -> float:
    """Signed interior area sum_k (x_k - y_k)."""
    if x.N != y.N:
        raise ValueError("interfaces must share N")
    n = x.N
    return float(np.sum(x.heights[1:n] - y.heights[1:n]))


def sup_height(x: Interface) -> float:
    """Largest absolute interior height."""
    n = x.N
    return float(np.max(np.abs(x.heights[1:n]))) if n > 1 else 0.0


def sup_gradient(x: Interface) -> float:
    """Largest absolute increment, boundary steps included."""
    return float(np.max(np.abs(x.increments())))
