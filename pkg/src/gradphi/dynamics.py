"""Event-driven simulation of single chains and coupled families.

The chain state is a pinned height profile; every event resamples one
interior height from its conditional law given the neighbors. Couplings
reuse the same event stream: the grand coupling feeds one shared uniform
through each chain's conditional quantile, the sticky coupling splits the
two conditionals into overlap and remainder parts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .kernels import StickyUnsupportedError, TabulatedVecKernel, kernel_for
from .potential import Potential
from .resampler import build_conditional, overlap_decompose, quantile
from .streams import EventStream, build_event_stream

__all__ = [
    "Interface",
    "CensoringScheme",
    "CouplingOrderError",
    "StickyResult",
    "run_single",
    "run_grand_coupled",
    "run_sticky_pair",
    "coalescence_fraction",
    "flat_interior",
    "tent_profile",
    "mode_profile",
]

ORDER_TOL = 1e-9


class CouplingOrderError(AssertionError):
    """A monotone coupling produced an order violation; includes event context."""


@dataclass
class Interface:
    """Pinned height configuration: heights[0] = 0, heights[N] = tilt * N."""

    heights: np.ndarray
    tilt: float = 0.0

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=np.float64)
        n = self.heights.size - 1
        if n < 2:
            raise ValueError("an interface needs at least two increments")
        if self.heights[0] != 0.0:
            raise ValueError("left endpoint must be pinned at 0")
        if self.heights[-1] != self.tilt * n:
            raise ValueError(f"right endpoint must be pinned at tilt*N = {self.tilt * n}")

    @property
    def N(self) -> int:
        return self.heights.size - 1

    def increments(self) -> np.ndarray:
        return np.diff(self.heights)

    def copy(self) -> "Interface":
        return Interface(self.heights.copy(), self.tilt)

    def __le__(self, other: "Interface") -> bool:
        return bool(np.all(self.heights <= other.heights))


def flat_interior(N: int, value: float, tilt: float = 0.0) -> Interface:
    h = np.full(N + 1, float(value))
    h[0] = 0.0
    h[N] = tilt * N
    return Interface(h, tilt)


def tent_profile(N: int, tilt: float = 0.0) -> Interface:
    k = np.arange(N + 1, dtype=np.float64)
    h = np.minimum(k, N - k) + tilt * k
    return Interface(h, tilt)


def mode_profile(N: int, j: int = 1, amplitude: float = 1.0) -> Interface:
    k = np.arange(N + 1, dtype=np.float64)
    h = amplitude * np.sin(j * np.pi * k / N)
    h[0] = 0.0
    h[N] = 0.0
    return Interface(h, 0.0)


@dataclass(frozen=True)
class CensoringScheme:
    """Time intervals with sets of sites whose updates are suppressed.

    Intervals are half-open [start, end) and must not overlap; an update of
    site k at time t is skipped iff k belongs to the active set at t.
    """

    intervals: tuple = ()

    def __post_init__(self):
        iv = tuple((float(s), float(e), frozenset(int(k) for k in sites))
                   for s, e, sites in self.intervals)
        object.__setattr__(self, "intervals", tuple(sorted(iv)))
        last_end = -np.inf
        for s, e, _ in self.intervals:
            if s < last_end:
                raise ValueError("censoring intervals must not overlap")
            if e < s:
                raise ValueError("censoring interval must have end >= start")
            last_end = e

    def active(self, t: float, site: int) -> bool:
        for s, e, sites in self.intervals:
            if s <= t < e:
                return site in sites
            if s > t:
                break
        return False

    def mask(self, times: np.ndarray, sites: np.ndarray, N: int) -> np.ndarray:
        """Vectorized suppression mask for (times, sites) arrays."""
        out = np.zeros(times.shape, dtype=bool)
        for s, e, site_set in self.intervals:
            if not site_set:
                continue
            lut = np.zeros(N + 1, dtype=bool)
            lut[list(site_set)] = True
            out |= (times >= s) & (times < e) & lut[np.clip(sites, 0, N)]
        return out


def _scalar_draw(pot: Potential, kernel, hifi: bool):
    if not hifi and not isinstance(kernel, TabulatedVecKernel):
        def draw(b: float, c: float, u: float) -> float:
            return float(kernel.draw(np.array([b]), np.array([c]), np.array([u]))[0])
        return draw

    def draw(b: float, c: float, u: float) -> float:
        return quantile(build_conditional(pot, b, c), u)
    return draw


def run_single(pot: Potential, x0: Interface, events: EventStream,
               censor: Optional[CensoringScheme] = None,
               sample_times: Optional[Sequence[float]] = None,
               observers: Optional[dict[str, Callable[[np.ndarray], float]]] = None,
               trajectory: Optional[list] = None):
    """Run one chain through an event stream.

    Returns (final Interface, observer traces). Observer callbacks are
    evaluated on the height vector at each requested sample time (state is
    piecewise constant between events). ``trajectory``, when given, collects
    (time, site, new_value) rows for every applied update.
    """
    x = x0.heights.copy()
    kernel = kernel_for(pot)
    draw = _scalar_draw(pot, kernel, hifi=isinstance(kernel, TabulatedVecKernel))

    st = np.asarray(sorted(sample_times), dtype=float) if sample_times is not None else np.empty(0)
    traces = {name: np.empty(st.size) for name in (observers or {})}
    ptr = 0

    def record_until(t: float):
        nonlocal ptr
        while ptr < st.size and st[ptr] < t:
            for name, fn in (observers or {}).items():
                traces[name][ptr] = fn(x)
            ptr += 1

    for ev in events:
        record_until(ev.time)
        if censor is not None and censor.active(ev.time, ev.site):
            continue
        k = ev.site
        x[k] = draw(x[k - 1], x[k + 1], ev.uniforms[0])
        if trajectory is not None:
            trajectory.append((ev.time, k, x[k]))
    record_until(np.inf)
    return Interface(x, x0.tilt), traces


def _check_height_order(xs: np.ndarray, pairs, t, k, tol=ORDER_TOL):
    for i, j in pairs:
        if np.any(xs[i] > xs[j] + tol):
            bad = int(np.argmax(xs[i] - xs[j]))
            raise CouplingOrderError(
                f"height order lost between chains {i} <= {j} at time {t:.6g} "
                f"after update of site {k}: site {bad} differs by "
                f"{float(xs[i][bad] - xs[j][bad]):.3e}")


def _check_grad_order(xs: np.ndarray, pairs, t, k, tol=ORDER_TOL):
    for i, j in pairs:
        di = np.diff(xs[i])
        dj = np.diff(xs[j])
        if np.any(di > dj + tol):
            bad = int(np.argmax(di - dj))
            raise CouplingOrderError(
                f"gradient order lost between chains {i} and {j} at time "
                f"{t:.6g} after update of site {k}: increment {bad} differs "
                f"by {float(di[bad] - dj[bad]):.3e}")


def run_grand_coupled(pot: Potential, initials: Sequence[Interface],
                      events: EventStream, check_orders: bool = True,
                      order_tol: float = ORDER_TOL) -> list[Interface]:
    """Evolve a family of chains through shared clocks and shared uniforms.

    Pairs of initial conditions that are ordered (by height, or by
    increments) must stay ordered under this coupling; when
    ``check_orders`` is set, every event re-verifies this and an order
    violation raises with full event context.

    Chains only need to share N: each right endpoint stays frozen at its
    initial value, so families with different boundary tilts evolve side
    by side (that is what makes the increment order nontrivial).
    """
    if len({x.N for x in initials}) != 1:
        raise ValueError("all chains must share N")
    xs = np.stack([x.heights for x in initials]).astype(np.float64)
    m = xs.shape[0]
    kernel = kernel_for(pot)
    hifi = isinstance(kernel, TabulatedVecKernel)
    draw = _scalar_draw(pot, kernel, hifi)

    height_pairs = [(i, j) for i in range(m) for j in range(m)
                    if i != j and np.all(xs[i] <= xs[j])]
    grad_pairs = [(i, j) for i in range(m) for j in range(m)
                  if i != j and np.all(np.diff(xs[i]) <= np.diff(xs[j]))]

    for ev in events:
        k = ev.site
        u = float(ev.uniforms[0])
        if hifi:
            for i in range(m):
                xs[i, k] = draw(xs[i, k - 1], xs[i, k + 1], u)
        else:
            xs[:, k] = kernel.draw(xs[:, k - 1], xs[:, k + 1], np.full(m, u))
        if check_orders:
            _check_height_order(xs, height_pairs, ev.time, k, order_tol)
            _check_grad_order(xs, grad_pairs, ev.time, k, order_tol)

    return [Interface(xs[i], initials[i].tilt) for i in range(m)]


@dataclass
class StickyResult:
    coalescence_time: float            # inf when the pair never coalesced
    times: np.ndarray                  # event times
    area: np.ndarray                   # interior area sum(y - x) after each event
    final_x: Interface
    final_y: Interface

    @property
    def coalesced(self) -> bool:
        return np.isfinite(self.coalescence_time)


def _sticky_scalar_update(pot, bx, cx, by, cy, u1, u2, u3, u4):
    dx = build_conditional(pot, bx, cx)
    dy = build_conditional(pot, by, cy)
    od = overlap_decompose(dx, dy)
    if u1 <= od.p:
        v = od.nu2.quantile(u3)
        return True, v, v
    return False, od.nu1.quantile(u2), od.nu3.quantile(u4)


def run_sticky_pair(pot: Potential, x0: Interface, y0: Interface,
                    events: EventStream, switch_time: float = 0.0,
                    check_order: bool = True,
                    order_tol: float = ORDER_TOL) -> StickyResult:
    """Couple two chains: shared uniforms until switch_time, sticky after.

    Sticky updates set both heights to a common draw from the overlap part
    with the maximal probability, else to independent draws from the two
    remainders. Sites count as equal only when assigned jointly, never by
    numeric coincidence; the pair is coalesced once every interior site is
    equal, and it stays coalesced because identical neighbors force a full
    overlap.
    """
    if x0.N != y0.N or x0.tilt != y0.tilt:
        raise ValueError("sticky pair needs matching N and tilt")
    n = x0.N
    x = x0.heights.copy()
    y = y0.heights.copy()
    kernel = kernel_for(pot)
    vec_ok = not isinstance(kernel, TabulatedVecKernel)
    draw = _scalar_draw(pot, kernel, hifi=not vec_ok)

    eq = x0.heights == y0.heights
    ordered = bool(np.all(x <= y))
    coal_time = np.inf if not np.all(eq[1:n]) else 0.0
    times = np.empty(len(events))
    area = np.empty(len(events))

    for idx, ev in enumerate(events):
        k, t = ev.site, ev.time
        u1, u2, u3, u4 = (float(v) for v in ev.uniforms)
        force = bool(eq[k - 1] and eq[k + 1])
        if t <= switch_time:
            vx = draw(x[k - 1], x[k + 1], u1)
            vy = vx if force else draw(y[k - 1], y[k + 1], u1)
            eq[k] = force
        else:
            if force:
                vx = vy = draw(x[k - 1], x[k + 1], u3)
                eq[k] = True
            elif vec_ok:
                try:
                    coupled, vxa, vya = kernel.sticky(
                        np.array([x[k - 1]]), np.array([x[k + 1]]),
                        np.array([y[k - 1]]), np.array([y[k + 1]]),
                        np.array([u1]), np.array([u2]), np.array([u3]),
                        np.array([u4]), np.array([False]))
                    eq[k] = bool(coupled[0])
                    vx, vy = float(vxa[0]), float(vya[0])
                    if eq[k]:
                        vy = vx
                except StickyUnsupportedError:
                    eq[k], vx, vy = _sticky_scalar_update(
                        pot, x[k - 1], x[k + 1], y[k - 1], y[k + 1], u1, u2, u3, u4)
            else:
                eq[k], vx, vy = _sticky_scalar_update(
                    pot, x[k - 1], x[k + 1], y[k - 1], y[k + 1], u1, u2, u3, u4)
        x[k], y[k] = vx, vy
        if check_order and ordered and vx > vy + order_tol:
            raise CouplingOrderError(
                f"sticky coupling lost height order at time {t:.6g}, site {k}: "
                f"{vx:.6g} > {vy:.6g}")
        if not np.isfinite(coal_time) and np.all(eq[1:n]):
            coal_time = t
        times[idx] = t
        area[idx] = float(np.sum(y[1:n] - x[1:n]))

    return StickyResult(coal_time, times, area,
                        Interface(x, x0.tilt), Interface(y, y0.tilt))


def write_trajectory(path, rows, columns=("time", "site", "value")) -> None:
    """Dump update rows (time, site, value) as CSV; also fits observer
    traces with columns (time, observable, value)."""
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(
                str(int(v)) if isinstance(v, (int, np.integer)) else f"{v:.17g}"
                for v in row) + "\n")


def coalescence_fraction(pot: Potential, x0: Interface, y0: Interface,
                         seeds: Iterable[int], t: float,
                         switch_time: float = 0.0) -> tuple[float, float]:
    """Fraction of replicas whose sticky pair coalesced by time t.

    Returns (fraction, standard error). Replicas run over the given seeds;
    the vectorized engine is used when the potential supports it.
    """
    seeds = list(seeds)
    hits = 0
    for s in seeds:
        ev = build_event_stream(int(s), x0.N, t)
        res = run_sticky_pair(pot, x0, y0, ev, switch_time=switch_time)
        if res.coalescence_time <= t:
            hits += 1
    frac = hits / len(seeds)
    se = float(np.sqrt(max(frac * (1.0 - frac), 1.0 / len(seeds)) / len(seeds)))
    return frac, se
