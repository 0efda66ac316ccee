"""Conditional resampling densities: tabulation, inverse-CDF sampling, overlap.

The density for resampling a height with neighbors (b, c) is proportional to
exp(-V(u-b) - V(c-u)). In coordinates centered at (b+c)/2 this is the
symmetric weight exp(-W_a) with half-gap a = (c-b)/2, which is what gets
tabulated. Cell masses come from a fixed-order Gauss-Legendre rule per grid
cell, so the tabulated CDF is exact up to the window truncation; quantiles
refine inside the bracketing cell with a root solve against locally
integrated exact density values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .potential import DEFAULT_TAIL_TOL, Potential, PotentialError, resampling_potential
from .quadrature import gl_cell_integrals, grow_exp_window

__all__ = [
    "TabulatedDensity",
    "OverlapDecomposition",
    "PartSampler",
    "build_conditional",
    "quantile",
    "sample",
    "cdf_at",
    "density_at",
    "overlap_decompose",
    "gaussian_oracle",
]

GAUSSIAN_COND_SD = math.sqrt(0.5)
BASE_GRID_POINTS = 513
MAX_GRID_POINTS = 32769
QUANTILE_SELF_TOL = 1e-9


@dataclass(frozen=True)
class TabulatedDensity:
    """Truncated grid representation of one conditional resampling density.

    ``grid`` holds centered abscissae (symmetric about 0), ``log_density``
    the values of -W_a there, ``cdf`` the normalized distribution function
    at the grid points and ``norm`` the window integral of exp(-W_a).
    Instances are immutable and safe to share across replicas.
    """

    pot: Potential
    b: float
    c: float
    center: float
    half_gap: float
    tail_tol: float
    grid: np.ndarray
    log_density: np.ndarray
    cdf: np.ndarray
    norm: float
    cell_mass: np.ndarray = field(repr=False)

    def weight(self, u_centered) -> np.ndarray:
        """Unnormalized symmetric weight exp(-W_a) at centered coordinates."""
        w = resampling_potential(self.pot, self.half_gap, np.asarray(u_centered, dtype=float))
        return np.exp(-np.asarray(w))

    @property
    def support(self) -> tuple[float, float]:
        return self.center + self.grid[0], self.center + self.grid[-1]


def _sinh_grid(half_width: float, half_gap: float, n_points: int) -> np.ndarray:
    # symmetric, denser near the mode; bulk edges +-|a| become knots
    s = np.linspace(-1.0, 1.0, n_points if n_points % 2 == 1 else n_points + 1)
    beta = 2.2
    g = half_width * np.sinh(beta * s) / math.sinh(beta)
    a = abs(half_gap)
    if 0.0 < a < half_width:
        g = np.unique(np.concatenate([g, [-a, a]]))
    return g


def _build_once(pot: Potential, b: float, c: float, tail_tol: float,
                n_points: int, half_width: float) -> TabulatedDensity:
    center = 0.5 * (b + c)
    a = 0.5 * (c - b)
    grid = _sinh_grid(half_width, a, n_points)

    def f(u: np.ndarray) -> np.ndarray:
        return np.exp(-np.asarray(resampling_potential(pot, a, u)))

    mass = gl_cell_integrals(f, grid)
    mass = 0.5 * (mass + mass[::-1])          # W_a is even in u; enforce exactly
    mass = np.maximum(mass, 0.0)
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    norm = float(cdf[-1])
    if not (norm > 0.0 and np.isfinite(norm)):
        raise PotentialError(f"degenerate conditional density for (b, c) = ({b:g}, {c:g})")
    cdf = cdf / norm
    cdf[-1] = 1.0
    logd = -np.asarray(resampling_potential(pot, a, grid))
    return TabulatedDensity(pot, float(b), float(c), float(center), float(a),
                            float(tail_tol), grid, logd, cdf, norm, mass)


def build_conditional(pot: Potential, b: float, c: float,
                      tail_tol: float = DEFAULT_TAIL_TOL) -> TabulatedDensity:
    """Tabulate the conditional density for neighbor heights (b, c).

    The window is chosen so the truncated tail mass is below ``tail_tol``
    and the grid is doubled until quantiles are self-consistent to 1e-9.
    """
    if not (0.0 < tail_tol <= 1e-6):
        raise ValueError("tail_tol must lie in (0, 1e-6]")
    a = 0.5 * (c - b)

    def w(u: np.ndarray) -> np.ndarray:
        return np.asarray(resampling_potential(pot, a, u))

    half_width = grow_exp_window(w, abs(a), tail_tol, what=f"rho({b:g},{c:g})")

    scale = max(1.0, abs(a))
    probs = np.arange(1, 100) / 100.0
    n = BASE_GRID_POINTS
    dens = _build_once(pot, b, c, tail_tol, n, half_width)
    q_prev = np.array([quantile(dens, p) for p in probs])
    while n < MAX_GRID_POINTS:
        n = 2 * n - 1
        dens2 = _build_once(pot, b, c, tail_tol, n, half_width)
        q_new = np.array([quantile(dens2, p) for p in probs])
        if np.max(np.abs(q_new - q_prev)) <= QUANTILE_SELF_TOL * scale:
            return dens2
        dens, q_prev = dens2, q_new
    return dens


def _local_mass(dens: TabulatedDensity, lo: float, x) -> np.ndarray:
    """Integral of the unnormalized weight from ``lo`` to ``x`` (centered)."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x_arr)
    for i, xi in enumerate(x_arr):
        if xi <= lo:
            out[i] = 0.0
        else:
            out[i] = float(gl_cell_integrals(dens.weight, np.array([lo, xi]))[0])
    return out


def quantile(dens: TabulatedDensity, p: float) -> float:
    """Inverse CDF by table bracketing plus a local root solve.

    Strictly increasing in p, and monotone in the neighbor pair (b, c):
    raising either neighbor raises every quantile.
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"quantile probability must lie in (0, 1), got {p}")
    cdf, grid = dens.cdf, dens.grid
    i = int(np.searchsorted(cdf, p, side="left"))
    i = min(max(i, 1), grid.size - 1)
    lo, hi = float(grid[i - 1]), float(grid[i])
    target = (p - cdf[i - 1]) * dens.norm
    cell = float(_local_mass(dens, lo, hi)[0])
    target = min(max(target, 0.0), cell)
    if target <= 0.0:
        return dens.center + lo
    if target >= cell:
        return dens.center + hi

    root = brentq(lambda x: float(_local_mass(dens, lo, x)[0]) - target,
                  lo, hi, xtol=1e-15 * max(1.0, abs(hi - lo)), rtol=8.9e-16)
    return dens.center + float(root)


def sample(dens: TabulatedDensity, u: float) -> float:
    """Deterministic inverse-CDF draw; equal uniforms give equal outputs."""
    return quantile(dens, u)


def cdf_at(dens: TabulatedDensity, x) -> np.ndarray | float:
    """CDF of the tabulated density at absolute coordinates ``x``."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float)) - dens.center
    grid, cdf = dens.grid, dens.cdf
    out = np.empty_like(x_arr)
    for i, xi in enumerate(x_arr):
        if xi <= grid[0]:
            out[i] = 0.0
        elif xi >= grid[-1]:
            out[i] = 1.0
        else:
            j = int(np.searchsorted(grid, xi, side="right"))
            out[i] = cdf[j - 1] + float(_local_mass(dens, float(grid[j - 1]), xi)[0]) / dens.norm
    return float(out[0]) if np.isscalar(x) or np.asarray(x).ndim == 0 else out


def density_at(dens: TabulatedDensity, x) -> np.ndarray | float:
    """Normalized density at absolute coordinates; zero outside the window."""
    x_arr = np.asarray(x, dtype=float) - dens.center
    vals = dens.weight(x_arr) / dens.norm
    inside = (x_arr >= dens.grid[0]) & (x_arr <= dens.grid[-1])
    vals = np.where(inside, vals, 0.0)
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(vals)
    return vals


def mean(dens: TabulatedDensity) -> float:
    """Quadrature mean; equals the center exactly by symmetry of W_a."""
    first = gl_cell_integrals(lambda u: u * dens.weight(u), dens.grid).sum()
    return dens.center + float(first) / dens.norm


def gaussian_oracle(pot: Potential, b: float, c: float) -> tuple[float, float]:
    """Exact conditional law for the gaussian preset: Normal((b+c)/2, 1/sqrt 2)."""
    if pot.closed_form != "gaussian":
        raise PotentialError("gaussian_oracle requires a potential with the gaussian tag")
    return 0.5 * (b + c), GAUSSIAN_COND_SD


# ---------------------------------------------------------------------------
# overlap decomposition for the sticky coupling


@dataclass(frozen=True)
class PartSampler:
    """Inverse-CDF sampler for one signed part of an overlap decomposition.

    ``kind`` selects the integrand per cell: 0 -> density A, 1 -> density B,
    2 -> A - B, 3 -> B - A, 4 -> min(A, B). A degenerate part is the Dirac
    mass at zero.
    """

    dA: TabulatedDensity
    dB: Optional[TabulatedDensity]
    knots: np.ndarray
    cum: np.ndarray            # cumulative mass at knots, cum[0] = 0
    kinds: np.ndarray
    mass: float
    degenerate: bool = False

    def density_at(self, x) -> np.ndarray:
        if self.degenerate:
            raise ValueError("degenerate part has no density")
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        fa = np.atleast_1d(density_at(self.dA, x_arr))
        fb = np.atleast_1d(density_at(self.dB, x_arr)) if self.dB is not None else 0.0
        j = np.clip(np.searchsorted(self.knots, x_arr, side="right") - 1, 0, self.kinds.size - 1)
        kind = self.kinds[j]
        raw = np.select(
            [kind == 0, kind == 1, kind == 2, kind == 3, kind == 4],
            [fa, fb, fa - fb, fb - fa, np.minimum(fa, fb)])
        inside = (x_arr >= self.knots[0]) & (x_arr <= self.knots[-1])
        return np.where(inside, np.maximum(raw, 0.0), 0.0) / self.mass

    def _integrand(self, kind: int) -> Callable[[np.ndarray], np.ndarray]:
        if kind == 0:
            return lambda x: np.atleast_1d(density_at(self.dA, x))
        if kind == 1:
            return lambda x: np.atleast_1d(density_at(self.dB, x))
        if kind == 2:
            return lambda x: np.maximum(np.atleast_1d(density_at(self.dA, x))
                                        - np.atleast_1d(density_at(self.dB, x)), 0.0)
        if kind == 3:
            return lambda x: np.maximum(np.atleast_1d(density_at(self.dB, x))
                                        - np.atleast_1d(density_at(self.dA, x)), 0.0)
        return lambda x: np.minimum(np.atleast_1d(density_at(self.dA, x)),
                                    np.atleast_1d(density_at(self.dB, x)))

    def quantile(self, u: float) -> float:
        if self.degenerate:
            return 0.0
        if not (0.0 < u < 1.0):
            raise ValueError(f"uniform must lie in (0, 1), got {u}")
        target = u * self.mass
        j = int(np.searchsorted(self.cum, target, side="left"))
        j = min(max(j, 1), self.knots.size - 1)
        lo, hi = float(self.knots[j - 1]), float(self.knots[j])
        f = self._integrand(int(self.kinds[j - 1]))
        local_target = min(max(target - self.cum[j - 1], 0.0),
                           float(gl_cell_integrals(f, np.array([lo, hi]))[0]))

        def g(x: float) -> float:
            return float(gl_cell_integrals(f, np.array([lo, x]))[0]) - local_target if x > lo \
                else -local_target

        glo, ghi = g(lo), g(hi)
        if glo >= 0.0:
            return lo
        if ghi <= 0.0:
            return hi
        return float(brentq(g, lo, hi, xtol=1e-14 * max(1.0, hi - lo), rtol=8.9e-16))

    def sample(self, u: float) -> float:
        return self.quantile(u)

    @property
    def support(self) -> tuple[float, float]:
        if self.degenerate:
            return 0.0, 0.0
        live = np.where(np.diff(self.cum) > 0)[0]
        if live.size == 0:
            return float(self.knots[0]), float(self.knots[-1])
        return float(self.knots[live[0]]), float(self.knots[live[-1] + 1])


@dataclass(frozen=True)
class OverlapDecomposition:
    """Maximal-coupling split of two conditional densities.

    p is the overlap mass; nu2 normalizes min(A, B) while nu1 and nu3
    normalize the signed remainders of A and B respectively.
    """

    p: float
    nu1: PartSampler
    nu2: PartSampler
    nu3: PartSampler


def _dirac_part() -> PartSampler:
    z = np.array([0.0, 0.0])
    return PartSampler(None, None, z, np.array([0.0, 0.0]),
                       np.array([0]), 0.0, degenerate=True)


def _self_part(dA: TabulatedDensity, dB: TabulatedDensity, kind: int) -> PartSampler:
    # whole density A (kind 0) or B (kind 1), used when supports are disjoint
    dens = dA if kind == 0 else dB
    knots = dens.grid + dens.center
    return PartSampler(dA, dB, knots, dens.cdf.copy(),
                       np.full(knots.size - 1, kind, dtype=np.int64), 1.0)


def overlap_decompose(dA: TabulatedDensity, dB: TabulatedDensity,
                      degenerate_tol: float = 1e-12) -> OverlapDecomposition:
    """Split two conditional densities into overlap and signed remainders.

    Works on the union of the two grids; crossings of the densities are
    located per cell and inserted as knots so each cell integrand is smooth.
    """
    loA, hiA = dA.support
    loB, hiB = dB.support
    lo, hi = max(loA, loB), min(hiA, hiB)

    if hi <= lo:
        return OverlapDecomposition(0.0, _self_part(dA, dB, 0), _dirac_part(),
                                    _self_part(dA, dB, 1))

    knots = np.unique(np.concatenate([
        dA.grid + dA.center, dB.grid + dB.center, [lo, hi]]))
    knots = knots[(knots >= lo) & (knots <= hi)]

    fa = np.asarray(density_at(dA, knots))
    fb = np.asarray(density_at(dB, knots))
    diff = fa - fb

    crossings = []
    for i in np.where(diff[:-1] * diff[1:] < 0.0)[0]:
        root = brentq(lambda x: float(density_at(dA, x)) - float(density_at(dB, x)),
                      float(knots[i]), float(knots[i + 1]),
                      xtol=1e-14 * max(1.0, hi - lo), rtol=8.9e-16)
        crossings.append(root)
    if crossings:
        knots = np.unique(np.concatenate([knots, crossings]))

    mids = 0.5 * (knots[:-1] + knots[1:])
    fa_m = np.asarray(density_at(dA, mids))
    fb_m = np.asarray(density_at(dB, mids))
    a_smaller = fa_m <= fb_m

    mass_a = gl_cell_integrals(lambda x: np.asarray(density_at(dA, x)), knots)
    mass_b = gl_cell_integrals(lambda x: np.asarray(density_at(dB, x)), knots)
    mass_min = np.where(a_smaller, mass_a, mass_b)
    mass_min = np.minimum(mass_min, np.minimum(mass_a, mass_b))

    p = float(np.clip(mass_min.sum(), 0.0, 1.0))

    # assemble per-cell part masses over the union of both windows; outside
    # the intersection only one density is alive, so the signed remainders
    # reduce to that density and the overlap is zero there
    all_knots = np.unique(np.concatenate([dA.grid + dA.center, dB.grid + dB.center, knots]))
    mid_all = 0.5 * (all_knots[:-1] + all_knots[1:])
    inter = (mid_all > lo) & (mid_all < hi)
    idx = np.clip(np.searchsorted(knots, mid_all, side="right") - 1, 0, knots.size - 2)

    cells_a = gl_cell_integrals(lambda x: np.asarray(density_at(dA, x)), all_knots)
    cells_b = gl_cell_integrals(lambda x: np.asarray(density_at(dB, x)), all_knots)
    cells_min = np.where(a_smaller[idx], cells_a, cells_b)
    cells_min = np.minimum(cells_min, np.minimum(cells_a, cells_b))

    kinds1 = np.where(inter, 2, 0).astype(np.int64)
    m1 = np.where(inter, np.maximum(cells_a - cells_min, 0.0), cells_a)
    kinds3 = np.where(inter, 3, 1).astype(np.int64)
    m3 = np.where(inter, np.maximum(cells_b - cells_min, 0.0), cells_b)
    kinds2 = np.full(all_knots.size - 1, 4, dtype=np.int64)
    m2 = np.where(inter, cells_min, 0.0)

    nu13_degenerate = p >= 1.0 - degenerate_tol
    nu2_degenerate = p <= degenerate_tol

    def build(kinds: np.ndarray, masses: np.ndarray) -> PartSampler:
        cum = np.concatenate([[0.0], np.cumsum(np.maximum(masses, 0.0))])
        got = float(cum[-1])
        if got <= 0.0:
            return _dirac_part()
        return PartSampler(dA, dB, all_knots, cum, kinds, got)

    nu1 = _dirac_part() if nu13_degenerate else build(kinds1, m1)
    nu3 = _dirac_part() if nu13_degenerate else build(kinds3, m3)
    nu2 = _dirac_part() if nu2_degenerate else build(kinds2, m2)
    return OverlapDecomposition(p, nu1, nu2, nu3)
