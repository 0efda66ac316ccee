"""Vectorized conditional-update kernels for the replica engines.

A kernel turns arrays of neighbor pairs and uniforms into resampled
heights. The gaussian and sos presets have exact closed forms for the
conditional CDF and quantile, which also yield exact sticky-coupling
updates (overlap probability plus draws from the three signed parts).
Other potentials go through a per-event symmetric table that is cheap,
deterministic, and mean-exact by symmetry.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.special import erf, ndtr, ndtri

from .potential import Potential

__all__ = ["kernel_for", "GaussianKernel", "SOSKernel", "TabulatedVecKernel",
           "StickyUnsupportedError"]

SQRT_HALF = math.sqrt(0.5)
_TINY = 1e-300
_Q_FORCE = 1e-14          # below this coupling-failure mass, treat as coupled


class StickyUnsupportedError(NotImplementedError):
    pass


def _bisect_monotone(fn: Callable[[np.ndarray], np.ndarray], lo: np.ndarray,
                     hi: np.ndarray, target: np.ndarray, iters: int = 72) -> np.ndarray:
    """Vector bisection for nondecreasing fn; returns x with fn(x) ~= target."""
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        go_right = fn(mid) < target
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    return 0.5 * (lo + hi)


def _newton_invert(fn, deriv, lo: np.ndarray, hi: np.ndarray,
                   target: np.ndarray, iters: int = 14) -> np.ndarray:
    """Safeguarded Newton for a nondecreasing CDF with analytic density.

    Keeps a bisection bracket; Newton steps that leave it fall back to the
    midpoint, so convergence never degrades below bisection.
    """
    lo = lo.copy()
    hi = hi.copy()
    x = 0.5 * (lo + hi)
    for _ in range(iters):
        val = fn(x) - target
        below = val < 0.0
        lo = np.where(below, x, lo)
        hi = np.where(below, hi, x)
        d = deriv(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - val / d
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        x = np.where(bad, 0.5 * (lo + hi), xn)
    return x


class GaussianKernel:
    """Exact conditional updates for V(u) = u^2 / 2."""

    name = "gaussian"
    sd = SQRT_HALF

    def draw(self, b: np.ndarray, c: np.ndarray, u: np.ndarray) -> np.ndarray:
        return 0.5 * (b + c) + self.sd * ndtri(u)

    def overlap(self, mx: np.ndarray, my: np.ndarray) -> np.ndarray:
        """Coupling probability for two conditionals with means mx, my."""
        return 2.0 * ndtr(-np.abs(my - mx) / (2.0 * self.sd))

    def sticky(self, bx, cx, by, cy, u1, u2, u3, u4, force):
        """One sticky update; returns (coupled, vx, vy)."""
        sd = self.sd
        mx = 0.5 * (bx + cx)
        my = 0.5 * (by + cy)
        ad = np.abs(my - mx)
        q_fail = erf(ad / (2.0 * sd * math.sqrt(2.0)))
        p = 1.0 - q_fail
        coupled = force | (u1 <= p) | (q_fail < _Q_FORCE)

        vx = np.empty_like(mx)
        vy = np.empty_like(mx)

        ic = np.where(coupled)[0]
        if ic.size:
            # nu2: normalized min of the two normal densities
            q = u3[ic]
            pc = p[ic]
            m_lo = np.minimum(mx[ic], my[ic])
            m_hi = np.maximum(mx[ic], my[ic])
            arg_l = np.clip(q * pc, _TINY, 1.0 - 1e-16)
            arg_r = np.clip(1.0 - (1.0 - q) * pc, _TINY, 1.0 - 1e-16)
            v2 = np.where(q <= 0.5, m_hi + sd * ndtri(arg_l), m_lo + sd * ndtri(arg_r))
            vx[ic] = v2
            vy[ic] = v2

        iu = np.where(~coupled)[0]
        if iu.size:
            # nu1 (chain x) and nu3 (chain y): signed parts split at the
            # midpoint of the two means; the two inversions are stacked
            # into one safeguarded-Newton call
            mxs, mys = mx[iu], my[iu]
            mid = 0.5 * (mxs + mys)
            x_low = mxs <= mys
            span = 0.5 * ad[iu] + 12.0 * sd
            qf = np.maximum(q_fail[iu], _TINY)

            # in both problems the CDF is (Phi_ref - Phi_other + shift)/qf
            # over the support given by ref_low
            m_ref = np.concatenate([mxs, mys])
            m_other = np.concatenate([mys, mxs])
            shift = np.concatenate([np.where(x_low, 0.0, qf),
                                    np.where(x_low, qf, 0.0)])
            qf2 = np.concatenate([qf, qf])
            mid2 = np.concatenate([mid, mid])
            span2 = np.concatenate([span, span])
            ref_low = np.concatenate([x_low, ~x_low])

            def g(u_val):
                base = ndtr((u_val - m_ref) / sd) - ndtr((u_val - m_other) / sd)
                return (base + shift) / qf2

            def gd(u_val):
                dens = (np.exp(-0.5 * ((u_val - m_ref) / sd) ** 2)
                        - np.exp(-0.5 * ((u_val - m_other) / sd) ** 2))
                return np.maximum(dens, 0.0) / (qf2 * sd * math.sqrt(2 * math.pi))

            lo = np.where(ref_low, mid2 - span2, mid2)
            hi = np.where(ref_low, mid2, mid2 + span2)
            sol = _newton_invert(g, gd, lo, hi, np.concatenate([u2[iu], u4[iu]]))
            vx[iu] = sol[:iu.size]
            vy[iu] = sol[iu.size:]

        return coupled, vx, vy


def _sos_cdf(x, lo, hi):
    """Closed-form CDF of the conditional for V(u) = |u|, neighbors (lo, hi)."""
    z = (hi - lo) + 1.0
    below = 0.5 * np.exp(np.minimum(2.0 * (x - lo), 0.0))
    above = z - 0.5 * np.exp(np.minimum(-2.0 * (x - hi), 0.0))
    val = np.where(x <= lo, below, np.where(x >= hi, above, 0.5 + (x - lo)))
    return val / z


def _sos_quantile(p, lo, hi):
    z = (hi - lo) + 1.0
    t = p * z
    with np.errstate(invalid="ignore", divide="ignore"):
        left = lo + 0.5 * np.log(np.maximum(2.0 * t, _TINY))
        right = hi - 0.5 * np.log(np.maximum(2.0 * (z - t), _TINY))
    mid = lo + (t - 0.5)
    return np.where(t <= 0.5, left, np.where(t >= z - 0.5, right, mid))


def _sos_logpdf(x, lo, hi):
    z = (hi - lo) + 1.0
    return -2.0 * (np.maximum(x - hi, 0.0) + np.maximum(lo - x, 0.0)) - np.log(z)


def _sos_pdf(x, lo, hi):
    z = (hi - lo) + 1.0
    return np.exp(-2.0 * (np.maximum(x - hi, 0.0) + np.maximum(lo - x, 0.0))) / z


class SOSKernel:
    """Exact conditional updates for V(u) = |u|."""

    name = "sos"

    def draw(self, b, c, u):
        lo = np.minimum(b, c)
        hi = np.maximum(b, c)
        return _sos_quantile(u, lo, hi)

    def sticky(self, bx, cx, by, cy, u1, u2, u3, u4, force):
        lox = np.minimum(bx, cx)
        hix = np.maximum(bx, cx)
        loy = np.minimum(by, cy)
        hiy = np.maximum(by, cy)

        comparable = ((lox <= loy) & (hix <= hiy)) | ((loy <= lox) & (hiy <= hix))
        if not np.all(comparable):
            raise StickyUnsupportedError(
                "vectorized sos sticky updates need comparable neighbor pairs; "
                "run the scalar sticky coupling for unordered chains")

        # orient so that (lo1, hi1) <= (lo2, hi2); chain x is side 1 iff x_low
        x_low = (lox <= loy) & (hix <= hiy)
        lo1 = np.where(x_low, lox, loy)
        hi1 = np.where(x_low, hix, hiy)
        lo2 = np.where(x_low, loy, lox)
        hi2 = np.where(x_low, hiy, hix)

        # crossing of the two log densities: piecewise linear, nonincreasing
        bp = np.sort(np.stack([lo1, hi1, lo2, hi2], axis=-1), axis=-1)
        h = _sos_logpdf(bp, lo1[..., None], hi1[..., None]) \
            - _sos_logpdf(bp, lo2[..., None], hi2[..., None])
        neg = h < 0.0
        first_neg = np.argmax(neg, axis=-1)
        any_neg = np.any(neg, axis=-1)
        j = np.where(any_neg, np.maximum(first_neg, 1), bp.shape[-1] - 1)
        rows = np.arange(bp.shape[0])
        ha = h[rows, j - 1]
        hb = h[rows, j]
        ba = bp[rows, j - 1]
        bb = bp[rows, j]
        denom = ha - hb
        frac = np.where(np.abs(denom) > 0.0, ha / np.where(denom == 0.0, 1.0, denom), 0.0)
        u0 = ba + np.clip(frac, 0.0, 1.0) * (bb - ba)
        u0 = np.where(any_neg & (first_neg == 0), bp[:, 0], u0)
        u0 = np.where(~any_neg, bp[:, -1], u0)

        f1_u0 = _sos_cdf(u0, lo1, hi1)
        f2_u0 = _sos_cdf(u0, lo2, hi2)
        p = np.clip(f2_u0 + 1.0 - f1_u0, 0.0, 1.0)
        q_fail = 1.0 - p
        coupled = force | (u1 <= p) | (q_fail < _Q_FORCE)

        vx = np.empty_like(p)
        vy = np.empty_like(p)

        ic = np.where(coupled)[0]
        if ic.size:
            pp = np.maximum(p[ic], _TINY)
            l1, h1, l2, h2 = lo1[ic], hi1[ic], lo2[ic], hi2[ic]
            uc = u0[ic]
            fc = f1_u0[ic]

            def g2(u):
                lowpart = _sos_cdf(np.minimum(u, uc), l2, h2)
                highpart = np.maximum(_sos_cdf(u, l1, h1) - fc, 0.0)
                return (lowpart + highpart) / pp

            def g2d(u):
                return np.where(u <= uc, _sos_pdf(u, l2, h2), _sos_pdf(u, l1, h1)) / pp

            vx[ic] = vy[ic] = _newton_invert(
                g2, g2d, np.minimum(l1, l2) - 25.0, np.maximum(h1, h2) + 25.0, u3[ic])

        iu = np.where(~coupled)[0]
        if iu.size:
            qf = np.maximum(q_fail[iu], _TINY)
            l1, h1, l2, h2 = lo1[iu], hi1[iu], lo2[iu], hi2[iu]
            uc = u0[iu]
            f1c, f2c = f1_u0[iu], f2_u0[iu]
            xl = x_low[iu]
            lo_all = np.minimum(l1, l2) - 25.0
            hi_all = np.maximum(h1, h2) + 25.0

            def g_low(u):
                # mass of (rho_1 - rho_2)_+ below u; support left of u0
                uu = np.minimum(u, uc)
                return np.maximum(_sos_cdf(uu, l1, h1) - _sos_cdf(uu, l2, h2), 0.0) / qf

            def gd_low(u):
                return np.maximum(_sos_pdf(u, l1, h1) - _sos_pdf(u, l2, h2), 0.0) / qf

            def g_high(u):
                # mass of (rho_2 - rho_1)_+ below u; support right of u0
                uu = np.maximum(u, uc)
                grow = (_sos_cdf(uu, l2, h2) - f2c) - (_sos_cdf(uu, l1, h1) - f1c)
                return np.maximum(grow, 0.0) / qf

            def gd_high(u):
                return np.maximum(_sos_pdf(u, l2, h2) - _sos_pdf(u, l1, h1), 0.0) / qf

            # chain x draws its own positive part with u2, chain y with u4;
            # the low part belongs to whichever chain has the smaller pair
            u_low = np.where(xl, u2[iu], u4[iu])
            u_high = np.where(xl, u4[iu], u2[iu])
            v_low = _newton_invert(g_low, gd_low, lo_all, uc, u_low)
            v_high = _newton_invert(g_high, gd_high, uc, hi_all, u_high)
            vx[iu] = np.where(xl, v_low, v_high)
            vy[iu] = np.where(xl, v_high, v_low)

        return coupled, vx, vy


class TabulatedVecKernel:
    """Per-event symmetric tables for potentials without closed forms.

    The grid is symmetric about the conditional center, so sampled means are
    exact for any resolution; resolution only affects higher moments. Not
    usable for sticky updates (those go through the scalar overlap path).
    """

    name = "tabulated"

    def __init__(self, pot: Potential, half_cells: int = 64, tail_budget: float = 46.0):
        self.pot = pot
        self.half_cells = half_cells
        self.tail_budget = tail_budget
        # 2-point Gauss-Legendre per cell (exact through cubics)
        self._nodes, self._weights = np.polynomial.legendre.leggauss(2)
        # positive-half spacing, denser near zero
        s = np.linspace(0.0, 1.0, half_cells + 1)
        beta = 2.2
        self._shape = np.sinh(beta * s) / math.sinh(beta)

    def _w(self, a: np.ndarray, u: np.ndarray, pa: np.ndarray) -> np.ndarray:
        pot = self.pot
        return pot(a + u) + pot(a - u) - 2.0 * pa

    def draw(self, b: np.ndarray, c: np.ndarray, u: np.ndarray) -> np.ndarray:
        b = np.atleast_1d(np.asarray(b, dtype=float))
        c = np.atleast_1d(np.asarray(c, dtype=float))
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if b.size > 8192:
            out = np.empty_like(b)
            for i in range(0, b.size, 8192):
                sl = slice(i, i + 8192)
                out[sl] = self.draw(b[sl], c[sl], u[sl])
            return out
        center = 0.5 * (b + c)
        a = 0.5 * (c - b)
        aa = np.abs(a)
        pa = self.pot(a)

        # per-row half-width: W at the edge must exceed the tail budget
        edge = aa + 6.0
        for _ in range(40):
            short = self._w(a, edge, pa) < self.tail_budget
            if not np.any(short):
                break
            edge = np.where(short, aa + (edge - aa) * 1.7, edge)

        knots = edge[:, None] * self._shape[None, :]              # (R, C+1)
        lo = knots[:, :-1]
        h = np.diff(knots, axis=1)
        pts = lo[:, :, None] + (h[:, :, None] * 0.5) * (self._nodes[None, None, :] + 1.0)
        w = self._w(a[:, None, None], pts, pa[:, None, None])
        w = np.minimum(w, 700.0)
        mass_half = (h * 0.5) * np.einsum("rcg,g->rc", np.exp(-w), self._weights)

        mass = np.concatenate([mass_half[:, ::-1], mass_half], axis=1)  # (R, 2C)
        cdf = np.concatenate([np.zeros((mass.shape[0], 1)), np.cumsum(mass, axis=1)], axis=1)
        total = cdf[:, -1:]
        cdf = cdf / total
        grid = np.concatenate([-knots[:, ::-1], knots[:, 1:]], axis=1)  # (R, 2C+1)

        # row-wise searchsorted via offset trick
        nrow, ncol = cdf.shape
        flat = (cdf + 2.0 * np.arange(nrow)[:, None]).ravel()
        tgt = u + 2.0 * np.arange(nrow)
        idx = np.searchsorted(flat, tgt, side="left") - np.arange(nrow) * ncol
        idx = np.clip(idx, 1, ncol - 1)
        rows = np.arange(nrow)
        c0 = cdf[rows, idx - 1]
        c1 = cdf[rows, idx]
        g0 = grid[rows, idx - 1]
        g1 = grid[rows, idx]
        denom = np.maximum(c1 - c0, 1e-300)
        frac = np.clip((u - c0) / denom, 0.0, 1.0)
        return center + g0 + frac * (g1 - g0)

    def sticky(self, *args, **kwargs):
        raise StickyUnsupportedError(
            f"potential {self.pot.name!r} has no vectorized sticky kernel; "
            "use the scalar sticky coupling")


def kernel_for(pot: Potential):
    if pot.closed_form == "gaussian":
        return GaussianKernel()
    if pot.closed_form == "sos":
        return SOSKernel()
    return TabulatedVecKernel(pot)
