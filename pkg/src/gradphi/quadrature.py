"""Quadrature helpers shared by the potential and resampler modules.

Everything here integrates functions of the form exp(-phi(u)) where phi is
convex, so windows can always be chosen from the exponential tail rate and
composite rules converge fast once segment endpoints sit on the kinks.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

# 7-point Gauss-Legendre rule on [-1, 1]; exact through degree 13.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(7)

MAX_SIMPSON_POINTS = 1 << 18


class WindowError(RuntimeError):
    """Integration window failed to close; the integrand decays too slowly."""


def gl_cell_integrals(f: Callable[[np.ndarray], np.ndarray], knots: np.ndarray) -> np.ndarray:
    """Per-cell integrals of ``f`` between consecutive knots (vectorized).

    ``knots`` may be any strictly increasing 1-d array. Returns an array of
    length ``len(knots) - 1``.
    """
    lo = knots[:-1]
    h = np.diff(knots)
    pts = lo[:, None] + (h[:, None] * 0.5) * (_GL_NODES[None, :] + 1.0)
    vals = f(pts.ravel()).reshape(pts.shape)
    return (h * 0.5) * (vals @ _GL_WEIGHTS)


def simpson_doubling(f, lo: float, hi: float, rtol: float, n0: int = 129) -> float:
    """Composite Simpson on [lo, hi], doubling the grid until stable.

    Returns the Richardson-extrapolated value of the last two refinements.
    """
    if hi <= lo:
        return 0.0
    n = n0 if n0 % 2 == 1 else n0 + 1
    prev = None
    while True:
        x = np.linspace(lo, hi, n)
        y = f(x)
        h = (hi - lo) / (n - 1)
        cur = (h / 3.0) * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())
        if prev is not None:
            if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
                return (16.0 * cur - prev) / 15.0
        if n >= MAX_SIMPSON_POINTS:
            return cur
        prev = cur
        n = 2 * n - 1


def simpson_segments(f, knots, rtol: float) -> float:
    """Adaptive (doubling) Simpson over consecutive segments of ``knots``."""
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        if b > a:
            total += simpson_doubling(f, float(a), float(b), rtol)
    return total


def grow_exp_window(phi, start: float, tail_tol: float, max_width: float = 4096.0,
                    what: str = "integrand") -> float:
    """Half-width H such that the tail mass of exp(-phi) beyond H is negligible.

    ``phi`` is a convex, even-ish exponent with phi >= 0 and phi(0) small.
    The window grows geometrically until the edge value and an exponential
    tail estimate (from the local finite-difference slope of phi) both fall
    below ``tail_tol`` relative to a crude bulk estimate. Raises WindowError
    when no decay is detected inside ``max_width``: that signals a (near-)
    affine potential, for which the measure is not normalizable.
    """
    # crude lower bound on the bulk integral: exp(-phi) >= 1/2 on |u| <= z
    # where phi(z) = log 2, and phi convex with phi(0) ~ 0.
    h = max(2.0 * start, 4.0)
    budget = -np.log(tail_tol) + 6.0
    while h <= max_width + start:
        edge = float(phi(np.array([h]))[0])
        slope = edge - float(phi(np.array([h - 1.0]))[0])
        if edge >= budget and slope > 1e-12:
            # residual tail mass ~ exp(-edge)/slope
            if edge + np.log(slope) >= budget:
                return h
        h *= 1.6
    raise WindowError(
        f"no exponential tail detected for {what} within half-width "
        f"{max_width + start:.3g}; potential is affine or nearly affine")
