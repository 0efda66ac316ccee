"""Convex increment potentials and the objects derived from them.

A potential V assigns an energy to a height increment. Everything downstream
(conditional resampling densities, partition values, exponential tilting)
only ever sees V through the interface defined here. V must be convex,
polynomially bounded, and non-affine; ``make_potential`` enforces all three.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .quadrature import WindowError, grow_exp_window, simpson_segments

__all__ = [
    "Potential",
    "TiltedFamily",
    "PotentialError",
    "VerificationReport",
    "make_potential",
    "resampling_potential",
    "partition",
    "tilt_solve",
    "verify_potential",
]

NONAFFINE_RADIUS = 1e3
NONAFFINE_MIN_GAP = 1e-8
DEFAULT_TAIL_TOL = 1e-12
DEFAULT_TILT_TOL = 1e-10


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class Potential:
    """A convex increment potential.

    ``fn`` must accept and return float64 numpy arrays. ``closed_form`` tags
    presets for which downstream code has analytic fast paths ("gaussian",
    "sos", "power"); anything else is handled numerically. The growth
    exponent is metadata only, used by tolerance heuristics.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    growth_exponent_hint: int = 2
    closed_form: str = "none"
    power: Optional[float] = None

    def __call__(self, u):
        return self.fn(np.asarray(u, dtype=np.float64))

    def slope_gap(self, radius: float = NONAFFINE_RADIUS) -> float:
        """Secant slope at +radius minus secant slope at -radius."""
        pts = self(np.array([-radius, -radius + 1.0, radius - 1.0, radius]))
        right = pts[3] - pts[2]
        left = pts[1] - pts[0]
        return float(right - left)

    def slope_bounds(self, radius: float = NONAFFINE_RADIUS) -> tuple[float, float]:
        """Estimated asymptotic slopes (V'_-, V'_+) from secants at +-radius."""
        pts = self(np.array([-radius, -radius + 1.0, radius - 1.0, radius]))
        return float(pts[1] - pts[0]), float(pts[3] - pts[2])


@dataclass(frozen=True)
class TiltedFamily:
    """Exponentially tilted increment law with a prescribed mean."""

    base: Potential
    lam: float
    mean: float


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    detail: str
    witness: Optional[tuple] = None


@dataclass(frozen=True)
class VerificationReport:
    convex: CheckResult
    non_affine: CheckResult
    poly_bound: CheckResult

    @property
    def all_ok(self) -> bool:
        return self.convex.ok and self.non_affine.ok and self.poly_bound.ok


def _table_fn(knots: np.ndarray, vals: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    # linear interpolation between knots, extended by the boundary slopes
    sl = (vals[1] - vals[0]) / (knots[1] - knots[0])
    sr = (vals[-1] - vals[-2]) / (knots[-1] - knots[-2])

    def fn(u: np.ndarray) -> np.ndarray:
        out = np.interp(u, knots, vals)
        out = np.where(u < knots[0], vals[0] + sl * (u - knots[0]), out)
        out = np.where(u > knots[-1], vals[-1] + sr * (u - knots[-1]), out)
        return out

    return fn


def make_potential(spec: str, table: Optional[np.ndarray] = None) -> Potential:
    """Build a preset or table potential and validate it.

    ``spec`` is one of ``gaussian``, ``sos``, ``power:<p>`` with p >= 1, or
    ``table`` (``table:<path>`` loads a two-column whitespace file). Raises
    PotentialError when the candidate fails any structural check, in
    particular for affine inputs, which would not be normalizable.
    """
    spec = spec.strip()
    if spec == "gaussian":
        pot = Potential("gaussian", lambda u: 0.5 * u * u, 2, "gaussian")
    elif spec == "sos":
        pot = Potential("sos", np.abs, 1, "sos")
    elif spec.startswith("power"):
        try:
            p = float(spec.split(":", 1)[1])
        except (IndexError, ValueError):
            raise PotentialError(f"cannot parse power exponent from {spec!r}")
        if p < 1.0:
            raise PotentialError(f"power exponent must be >= 1, got {p}")
        # exact rewrites for common exponents; np.power is far slower
        if p == 1.5:
            fn = lambda u: np.abs(u) * np.sqrt(np.abs(u))    # noqa: E731
        elif p == 2.0:
            fn = lambda u: u * u                             # noqa: E731
        elif p == 3.0:
            fn = lambda u: np.abs(u) * u * u                 # noqa: E731
        else:
            fn = lambda u, p=p: np.abs(u) ** p               # noqa: E731
        pot = Potential(f"power:{p:g}", fn, max(2, int(np.ceil(p))), "power", power=p)
    elif spec.startswith("table"):
        if table is None:
            path = spec.split(":", 1)[1]
            table = np.loadtxt(path)
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 2:
            raise PotentialError("table potential needs at least two (u, V) rows")
        knots, vals = table[:, 0], table[:, 1]
        if np.any(np.diff(knots) <= 0):
            raise PotentialError("table abscissae must be strictly increasing")
        pot = Potential("table", _table_fn(knots, vals),
                        1, "none")
    else:
        raise PotentialError(f"unknown potential spec {spec!r}")

    report = verify_potential(pot)
    if not report.all_ok:
        bad = [name for name, chk in
               (("convexity", report.convex), ("non-affine", report.non_affine),
                ("polynomial bound", report.poly_bound)) if not chk.ok]
        raise PotentialError(
            f"potential {pot.name!r} rejected: failed {', '.join(bad)}; "
            f"details: {report}")
    return pot


def verify_potential(pot: Potential, radius: float = NONAFFINE_RADIUS,
                     n_grid: int = 181, seed: int = 20240901) -> VerificationReport:
    """Report-only check of convexity, non-affineness and polynomial growth."""
    rng = np.random.default_rng(seed)
    grid = np.concatenate([
        np.linspace(-radius, radius, n_grid),
        -np.logspace(-3, np.log10(radius), 40),
        np.logspace(-3, np.log10(radius), 40),
        rng.uniform(-radius, radius, size=60),
    ])
    grid = np.sort(grid)
    vals = pot(grid)

    convex = CheckResult(True, "midpoint convexity holds on the sampled grid")
    # consecutive triples plus random pairs
    u = grid[:-2]
    v = grid[2:]
    mids = pot(0.5 * (u + v))
    slack = 0.5 * (vals[:-2] + vals[2:]) - mids
    tol = 1e-12 + 1e-14 * (np.abs(vals[:-2]) + np.abs(vals[2:]))
    bad = np.where(slack < -tol)[0]
    if bad.size == 0:
        iu = rng.integers(0, grid.size, size=400)
        iv = rng.integers(0, grid.size, size=400)
        mids2 = pot(0.5 * (grid[iu] + grid[iv]))
        slack2 = 0.5 * (vals[iu] + vals[iv]) - mids2
        tol2 = 1e-12 + 1e-14 * (np.abs(vals[iu]) + np.abs(vals[iv]))
        bad2 = np.where(slack2 < -tol2)[0]
        if bad2.size:
            j = bad2[0]
            convex = CheckResult(False, "midpoint convexity violated",
                                 (float(grid[iu[j]]), float(grid[iv[j]]), float(slack2[j])))
    else:
        j = bad[0]
        convex = CheckResult(False, "midpoint convexity violated",
                             (float(u[j]), float(v[j]), float(slack[j])))

    gap = pot.slope_gap(radius)
    if np.isfinite(gap) and gap > NONAFFINE_MIN_GAP:
        non_affine = CheckResult(True, f"slope gap {gap:.3g} at radius {radius:g}")
    else:
        non_affine = CheckResult(False, f"slope gap {gap:.3g} below {NONAFFINE_MIN_GAP:g}",
                                 (float(-radius), float(radius), float(gap)))

    k = max(1, pot.growth_exponent_hint)
    with np.errstate(over="raise"):
        try:
            ratio = np.abs(vals) / (1.0 + np.abs(grid)) ** k
            c_fit = float(np.max(ratio))
            ok = bool(np.all(np.isfinite(ratio)))
        except FloatingPointError:
            c_fit, ok = np.inf, False
    poly = CheckResult(ok, f"fitted C = {c_fit:.6g} for exponent K = {k}",
                       None if ok else (float(grid[np.argmax(~np.isfinite(vals))]),))

    return VerificationReport(convex, non_affine, poly)


def resampling_potential(pot: Potential, a: float, u) -> np.ndarray | float:
    """Symmetric resampling potential V(a+u) + V(a-u) - 2 V(a).

    Nonnegative, even in u, and zero at u = 0 for any convex V.
    """
    u_arr = np.asarray(u, dtype=np.float64)
    w = pot(a + u_arr) + pot(a - u_arr) - 2.0 * float(pot(a))
    if np.isscalar(u) or u_arr.ndim == 0:
        return float(w)
    return w


def partition(pot: Potential, a: float, tail_tol: float = DEFAULT_TAIL_TOL) -> float:
    """Normalization of exp(-W_a), the resampling weight at half-gap ``a``.

    The window is grown from the exponential tail rate of W_a and the
    integral is computed with doubling composite Simpson on segments split
    at the bulk boundary +-|a| (where presets have kinks).
    """
    if not (0.0 < tail_tol <= 1e-6):
        raise ValueError("tail_tol must lie in (0, 1e-6]")
    aa = abs(float(a))

    def w(u: np.ndarray) -> np.ndarray:
        return resampling_potential(pot, a, u)

    try:
        h = grow_exp_window(w, aa, tail_tol, what=f"Z({a:g})")
    except WindowError as e:
        raise PotentialError(str(e)) from e

    def f(u: np.ndarray) -> np.ndarray:
        return np.exp(-np.asarray(w(u)))

    knots = sorted({-h, -aa, aa, h})
    rtol = max(2e-13, 1e-3 * tail_tol)
    return simpson_segments(f, np.array(knots), rtol)


def _tilted_moments(pot: Potential, lam: float, tail_tol: float) -> tuple[float, float]:
    """(normalizer, mean) of the density proportional to exp(-V(u) + lam*u)."""
    # recenter the exponent at its minimum to keep exp() in range; the
    # window expands until the minimizer is interior
    half = 64.0
    while True:
        coarse = np.linspace(-half, half, 4097)
        expo = pot(coarse) - lam * coarse
        i0 = int(np.argmin(expo))
        if 0 < i0 < coarse.size - 1 or half >= 2.0e6:
            break
        half *= 8.0
    u0 = float(coarse[i0])

    base = float(pot(np.array([u0]))[0]) - lam * u0

    def phi(s: np.ndarray) -> np.ndarray:
        u = u0 + np.asarray(s)
        return pot(u) - lam * u - base

    # the two tails decay at different rates; window each side separately
    h_plus = grow_exp_window(phi, abs(u0) + 1.0, tail_tol,
                             max_width=65536.0, what=f"tilted law at lambda={lam:g}")
    h_minus = grow_exp_window(lambda s: phi(-s), abs(u0) + 1.0, tail_tol,
                              max_width=65536.0, what=f"tilted law at lambda={lam:g}")
    kinks = {-h_minus, 0.0, h_plus, -u0}
    knots = np.array(sorted(k for k in kinks if -h_minus <= k <= h_plus))
    rtol = max(2e-13, 1e-3 * tail_tol)
    z = simpson_segments(lambda s: np.exp(-phi(s)), knots, rtol)
    m1 = simpson_segments(lambda s: (u0 + s) * np.exp(-phi(s)), knots, rtol)
    return z, m1 / z


def tilt_solve(pot: Potential, m: float, tol: float = DEFAULT_TILT_TOL,
               tail_tol: float = DEFAULT_TAIL_TOL) -> TiltedFamily:
    """Find the tilt lambda whose tilted increment law has mean ``m``.

    The mean is strictly increasing in lambda on the open slope interval
    I = (V'_-, V'_+), so a sign-bracket plus bisection always succeeds when
    the requested mean is attainable. Fails with the estimated I bounds
    when no bracket can be found inside it.
    """
    lo_slope, hi_slope = pot.slope_bounds()

    def psi(lam: float) -> float:
        return _tilted_moments(pot, lam, tail_tol)[1]

    def fail() -> PotentialError:
        return PotentialError(
            f"no bisection bracket for mean {m:g}: estimated slope "
            f"interval I = ({lo_slope:.6g}, {hi_slope:.6g})")

    def advance(cur: float, bound: float) -> float:
        # geometric step toward an interval endpoint, never reaching it
        step = 2.0 * max(1.0, abs(cur))
        if not np.isfinite(bound):
            return cur + step if bound > 0 else cur - step
        cand = cur + step if bound > cur else cur - step
        return cand if abs(cand - cur) < 0.5 * abs(bound - cur) else 0.5 * (cur + bound)

    lam_lo = lam_hi = 0.0
    f0 = psi(0.0) - m
    if abs(f0) <= tol:
        return TiltedFamily(pot, 0.0, m)
    if f0 < 0:
        for _ in range(200):
            cand = advance(lam_hi, hi_slope)
            if not cand > lam_hi:
                raise fail()
            lam_hi = cand
            if psi(lam_hi) - m >= 0:
                break
        else:
            raise fail()
    else:
        for _ in range(200):
            cand = advance(lam_lo, lo_slope)
            if not cand < lam_lo:
                raise fail()
            lam_lo = cand
            if psi(lam_lo) - m <= 0:
                break
        else:
            raise fail()

    # monotone bisection on psi(lam) - m
    mid = 0.5 * (lam_lo + lam_hi)
    for _ in range(200):
        mid = 0.5 * (lam_lo + lam_hi)
        val = psi(mid) - m
        if abs(val) <= tol or (lam_hi - lam_lo) < 1e-15 * max(1.0, abs(mid)):
            return TiltedFamily(pot, mid, m)
        if val > 0:
            lam_hi = mid
        else:
            lam_lo = mid
    return TiltedFamily(pot, mid, m)
