"""Lockstep replica engines.

Replicas are independent chains driven by per-seed event streams. The
engines advance all replicas one event at a time on numpy arrays, which
keeps every per-replica trajectory bitwise identical to the scalar
functions in ``dynamics`` while amortizing the Python overhead across the
batch. Long horizons are processed in time chunks so event arrays never
have to be materialized whole.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import CensoringScheme, CouplingOrderError, Interface
from .kernels import TabulatedVecKernel, kernel_for
from .potential import Potential
from .streams import _site_events_continue, _site_generator

__all__ = ["ensemble_single", "ensemble_grand", "ensemble_sticky"]

DEFAULT_BATCH = 2048
CHUNK_EVENTS = None     # adaptive: sized so padded chunk arrays stay modest


def _chunk_events_for(batch: int, requested) -> int:
    if requested is not None:
        return int(requested)
    return int(np.clip(2.5e6 / max(batch, 1), 512, 6144))


class _ChunkSource:
    """Per-replica, per-site buffered event generation in time chunks.

    Draw order per site stream matches ``streams.build_event_stream``
    exactly, so chunked replicas reproduce EventStream trajectories.
    """

    def __init__(self, seeds: Sequence[int], N: int):
        self.N = N
        self.R = len(seeds)
        self.gens = [[_site_generator(int(s), k) for k in range(1, N)] for s in seeds]
        self.tail_time = np.zeros((self.R, N - 1))
        self.buf_t = [[np.empty(0) for _ in range(N - 1)] for _ in range(self.R)]
        self.buf_u = [[np.empty((0, 4)) for _ in range(N - 1)] for _ in range(self.R)]

    def next_chunk(self, t_end: float):
        """Events with time <= t_end not yet emitted, padded per replica.

        Returns (times (R, L), sites (R, L), uniforms (R, L, 4), L); padded
        entries carry time t_end and site -1.
        """
        per_rep = []
        max_len = 0
        for r in range(self.R):
            ts, ss, us = [], [], []
            for ki in range(self.N - 1):
                t_tail = self.tail_time[r, ki]
                if t_tail <= t_end:
                    gen = self.gens[r][ki]
                    new_t, new_u, t_tail = _site_events_continue(gen, t_tail, t_end)
                    self.tail_time[r, ki] = t_tail
                    self.buf_t[r][ki] = np.concatenate([self.buf_t[r][ki], new_t])
                    self.buf_u[r][ki] = np.concatenate([self.buf_u[r][ki], new_u])
                take = self.buf_t[r][ki] <= t_end
                if np.any(take):
                    ts.append(self.buf_t[r][ki][take])
                    ss.append(np.full(int(take.sum()), ki + 1, dtype=np.int64))
                    us.append(self.buf_u[r][ki][take])
                    self.buf_t[r][ki] = self.buf_t[r][ki][~take]
                    self.buf_u[r][ki] = self.buf_u[r][ki][~take]
            if ts:
                t_cat = np.concatenate(ts)
                s_cat = np.concatenate(ss)
                u_cat = np.concatenate(us)
                order = np.lexsort((s_cat, t_cat))
                per_rep.append((t_cat[order], s_cat[order], u_cat[order]))
                max_len = max(max_len, t_cat.size)
            else:
                per_rep.append((np.empty(0), np.empty(0, dtype=np.int64), np.empty((0, 4))))

        times = np.full((self.R, max_len), t_end)
        sites = np.full((self.R, max_len), -1, dtype=np.int64)
        unis = np.full((self.R, max_len, 4), 0.5)
        for r, (t, s, u) in enumerate(per_rep):
            times[r, :t.size] = t
            sites[r, :s.size] = s
            unis[r, :u.shape[0]] = u
        return times, sites, unis, max_len


def _chunk_schedule(horizon: float, N: int, chunk_events: int):
    dt = max(chunk_events / max(N - 1, 1), 1e-9)
    edges = [0.0]
    while edges[-1] < horizon:
        edges.append(min(edges[-1] + dt, horizon))
    return edges


class _Recorder:
    """Collects per-replica statistic values at fixed sample times."""

    def __init__(self, sample_times: Sequence[float], n_rows: int,
                 stats: dict[str, Callable[[np.ndarray], np.ndarray]],
                 probe: np.ndarray):
        self.times = np.asarray(sorted(sample_times), dtype=float)
        self.stats = stats
        self.ptr = np.zeros(n_rows, dtype=np.int64)
        self.out = {}
        for name, fn in stats.items():
            val = np.asarray(fn(probe))
            shape = (n_rows, self.times.size) + val.shape[1:]
            self.out[name] = np.empty(shape)

    def flush(self, next_times: np.ndarray, state: np.ndarray):
        if self.times.size == 0:
            return
        while True:
            need = (self.ptr < self.times.size) & \
                   (self.times[np.minimum(self.ptr, self.times.size - 1)] < next_times)
            if not np.any(need):
                return
            rows = np.where(need)[0]
            cols = self.ptr[rows]
            for name, fn in self.stats.items():
                self.out[name][rows, cols] = np.asarray(fn(state[rows]))
            self.ptr[rows] += 1


def _as_rows(x0, n: int) -> np.ndarray:
    if isinstance(x0, Interface):
        return np.tile(x0.heights, (n, 1))
    arr = np.asarray(x0, dtype=float)
    if arr.ndim == 1:
        return np.tile(arr, (n, 1))
    return arr.copy()


def _run_batches(seeds, batch_size, threads, worker, combine):
    """Split seeds into batches; merge in batch order so the thread cap
    never changes results."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    jobs = [(i, seeds[i:i + batch_size]) for i in range(0, seeds.size, batch_size)]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: worker(*job), jobs))
    else:
        parts = [worker(*job) for job in jobs]
    return combine(parts)


def ensemble_single(pot: Potential, x0, seeds: Sequence[int], horizon: float,
                    sample_times: Sequence[float] = (),
                    stats: Optional[dict[str, Callable]] = None,
                    censor: Optional[CensoringScheme] = None,
                    return_final: bool = False, batch_size: int = DEFAULT_BATCH,
                    chunk_events: Optional[int] = CHUNK_EVENTS, threads: int = 1):
    """Run independent single chains for every seed.

    ``stats`` maps names to vectorized functions of the height block
    (rows, N+1); each is recorded at every sample time, yielding arrays of
    shape (replicas, n_times, ...). Results do not depend on batch size,
    chunking, or thread count.
    """
    x0_rows = _as_rows(x0, len(np.atleast_1d(seeds)))
    n_cols = x0_rows.shape[1]
    N = n_cols - 1
    kernel = kernel_for(pot)
    stats = stats or {}

    def worker(first, seed_chunk):
        b_rows = x0_rows[first:first + seed_chunk.size].copy() \
            if x0_rows.shape[0] > 1 else np.tile(x0_rows[0], (seed_chunk.size, 1))
        B = seed_chunk.size
        src = _ChunkSource(seed_chunk, N)
        rec = _Recorder(sample_times, B, stats, b_rows)
        rows = np.arange(B)
        for t_end in _chunk_schedule(horizon, N, _chunk_events_for(B, chunk_events))[1:]:
            times, sites, unis, L = src.next_chunk(t_end)
            for s in range(L):
                ts = times[:, s]
                rec.flush(ts, b_rows)
                k = sites[:, s]
                active = k >= 0
                if censor is not None:
                    active &= ~censor.mask(ts, k, N)
                if not np.any(active):
                    continue
                kk = np.where(active, k, 1)
                b = b_rows[rows, kk - 1]
                c = b_rows[rows, kk + 1]
                v = kernel.draw(b, c, unis[:, s, 0])
                b_rows[rows[active], kk[active]] = v[active]
        rec.flush(np.full(B, np.inf), b_rows)
        return rec.out, (b_rows if return_final else None)

    def combine(parts):
        merged = {name: np.concatenate([p[0][name] for p in parts]) for name in stats}
        final = np.concatenate([p[1] for p in parts]) if return_final else None
        return merged, final

    out, final = _run_batches(seeds, batch_size, threads, worker, combine)
    times = np.asarray(sorted(sample_times), dtype=float)
    if return_final:
        return times, out, final
    return times, out


def ensemble_grand(pot: Potential, initials, seeds: Sequence[int], horizon: float,
                   order_tol: float = 1e-9, check_every: int = 1,
                   batch_size: int = DEFAULT_BATCH,
                   chunk_events: Optional[int] = CHUNK_EVENTS, threads: int = 1):
    """Shared-uniform coupling of a family of chains per replica.

    ``initials`` is either a list of Interfaces (same family in every
    replica) or an array (R, M, N+1) of per-replica families. Initially
    ordered pairs (height or increment order) are re-checked after events
    (every ``check_every``-th event; 0 disables; per-replica families
    check pairs ordered in every replica). Returns (final states
    (R, M, N+1), total event count).
    """
    if isinstance(initials, np.ndarray):
        per_rep = initials.astype(float)
        _, m, n_cols = per_rep.shape
        hpairs = [(i, j) for i in range(m) for j in range(m) if i != j
                  and np.all(per_rep[:, i, :] <= per_rep[:, j, :])]
        gpairs = [(i, j) for i in range(m) for j in range(m) if i != j
                  and np.all(np.diff(per_rep[:, i, :], axis=-1)
                             <= np.diff(per_rep[:, j, :], axis=-1))]
    else:
        xs0 = np.stack([ic.heights for ic in initials]).astype(float)
        per_rep = None
        m, n_cols = xs0.shape
        hpairs = [(i, j) for i in range(m) for j in range(m)
                  if i != j and np.all(xs0[i] <= xs0[j])]
        gpairs = [(i, j) for i in range(m) for j in range(m)
                  if i != j and np.all(np.diff(xs0[i]) <= np.diff(xs0[j]))]
    N = n_cols - 1
    kernel = kernel_for(pot)
    if isinstance(kernel, TabulatedVecKernel):
        raise NotImplementedError(
            "vectorized grand coupling is limited to closed-form potentials; "
            "use dynamics.run_grand_coupled for the generic path")

    def worker(first, seed_chunk):
        B = seed_chunk.size
        xs = per_rep[first:first + B].copy() if per_rep is not None \
            else np.tile(xs0, (B, 1, 1))      # (B, M, N+1)
        src = _ChunkSource(seed_chunk, N)
        rows = np.arange(B)
        n_events = 0
        for t_end in _chunk_schedule(horizon, N, _chunk_events_for(B, chunk_events))[1:]:
            times, sites, unis, L = src.next_chunk(t_end)
            for s in range(L):
                k = sites[:, s]
                active = k >= 0
                if not np.any(active):
                    continue
                kk = np.where(active, k, 1)
                b = xs[rows, :, kk - 1]
                c = xs[rows, :, kk + 1]
                u = np.repeat(unis[:, s, 0][:, None], m, axis=1)
                v = kernel.draw(b.ravel(), c.ravel(), u.ravel()).reshape(B, m)
                sel = rows[active]
                xs[sel, :, kk[active]] = v[active]
                n_events += int(active.sum())
                if check_every and (n_events % check_every) == 0:
                    for i, j in hpairs:
                        if np.any(xs[active, i, :] > xs[active, j, :] + order_tol):
                            raise CouplingOrderError(
                                f"height order lost (chains {i}, {j}) before {t_end:.6g}")
                    for i, j in gpairs:
                        di = np.diff(xs[active, i, :], axis=-1)
                        dj = np.diff(xs[active, j, :], axis=-1)
                        if np.any(di > dj + order_tol):
                            raise CouplingOrderError(
                                f"gradient order lost (chains {i}, {j}) before {t_end:.6g}")
        return xs, n_events

    def combine(parts):
        return np.concatenate([p[0] for p in parts]), sum(p[1] for p in parts)

    return _run_batches(seeds, batch_size, threads, worker, combine)


def ensemble_sticky(pot: Potential, x0, y0, seeds: Sequence[int], horizon: float,
                    switch_time: float = 0.0, sample_times: Sequence[float] = (),
                    check_order: bool = True, order_tol: float = 1e-9,
                    batch_size: int = DEFAULT_BATCH,
                    chunk_events: Optional[int] = CHUNK_EVENTS, threads: int = 1,
                    stop_when_coalesced: bool = False):
    """Sticky-coupled pairs per replica (monotone phase until switch_time).

    Returns (coalescence times (R,), sample times, area traces (R, T),
    final x (R, N+1), final y (R, N+1)). ``x0``/``y0`` may be single
    interfaces or per-replica height arrays. With ``stop_when_coalesced``
    a batch stops early once every pair has merged (final states then
    reflect the stopping chunk, coalescence times are unaffected).
    """
    n_rep = len(np.atleast_1d(seeds))
    x_rows0 = _as_rows(x0, n_rep)
    y_rows0 = _as_rows(y0, n_rep)
    N = x_rows0.shape[1] - 1
    kernel = kernel_for(pot)
    if isinstance(kernel, TabulatedVecKernel):
        raise NotImplementedError(
            "vectorized sticky coupling is limited to closed-form potentials; "
            "use dynamics.run_sticky_pair for the generic path")

    def worker(first, seed_chunk):
        B = seed_chunk.size
        x = x_rows0[first:first + B].copy() if x_rows0.shape[0] > 1 \
            else np.tile(x_rows0[0], (B, 1))
        y = y_rows0[first:first + B].copy() if y_rows0.shape[0] > 1 \
            else np.tile(y_rows0[0], (B, 1))
        eq = x == y
        coal = np.where(np.all(eq[:, 1:N], axis=1), 0.0, np.inf)
        area_rec = _Recorder(sample_times, B, {
            "area": lambda st: np.sum(st[:, N + 2:2 * N + 1] - st[:, 1:N], axis=1)},
            np.concatenate([x, y], axis=1))
        ordered = np.all(x <= y)
        want_area = len(sample_times) > 0
        src = _ChunkSource(seed_chunk, N)
        rows = np.arange(B)
        for t_end in _chunk_schedule(horizon, N, _chunk_events_for(B, chunk_events))[1:]:
            if stop_when_coalesced and np.all(np.isfinite(coal)):
                break
            times, sites, unis, L = src.next_chunk(t_end)
            for s in range(L):
                ts = times[:, s]
                if want_area:
                    area_rec.flush(ts, np.concatenate([x, y], axis=1))
                k = sites[:, s]
                active = k >= 0
                if not np.any(active):
                    continue
                kk = np.where(active, k, 1)
                bx = x[rows, kk - 1]
                cx = x[rows, kk + 1]
                by = y[rows, kk - 1]
                cy = y[rows, kk + 1]
                force = eq[rows, kk - 1] & eq[rows, kk + 1]
                u1, u2, u3, u4 = (unis[:, s, i] for i in range(4))
                monotone = ts <= switch_time

                vx = np.empty(B)
                vy = np.empty(B)
                new_eq = np.zeros(B, dtype=bool)

                mono_rows = active & monotone
                if np.any(mono_rows):
                    vx[mono_rows] = kernel.draw(bx[mono_rows], cx[mono_rows], u1[mono_rows])
                    vy[mono_rows] = np.where(
                        force[mono_rows], vx[mono_rows],
                        kernel.draw(by[mono_rows], cy[mono_rows], u1[mono_rows]))
                    new_eq[mono_rows] = force[mono_rows]

                stick_rows = active & ~monotone
                forced = stick_rows & force
                if np.any(forced):
                    vv = kernel.draw(bx[forced], cx[forced], u3[forced])
                    vx[forced] = vv
                    vy[forced] = vv
                    new_eq[forced] = True
                open_rows = stick_rows & ~force
                if np.any(open_rows):
                    io = np.where(open_rows)[0]
                    coupled, vxs, vys = kernel.sticky(
                        bx[io], cx[io], by[io], cy[io],
                        u1[io], u2[io], u3[io], u4[io], np.zeros(io.size, dtype=bool))
                    vx[io] = vxs
                    vy[io] = np.where(coupled, vxs, vys)
                    new_eq[io] = coupled

                sel = rows[active]
                x[sel, kk[active]] = vx[active]
                y[sel, kk[active]] = vy[active]
                eq[sel, kk[active]] = new_eq[active]
                if check_order and ordered and np.any(vx[active] > vy[active] + order_tol):
                    bad = np.where(vx[active] > vy[active] + order_tol)[0][0]
                    raise CouplingOrderError(
                        f"sticky coupling lost height order before t={t_end:.6g} "
                        f"(site {int(kk[active][bad])})")
                done = np.all(eq[:, 1:N], axis=1) & active
                newly = done & ~np.isfinite(coal)
                coal[newly] = ts[newly]
        area_rec.flush(np.full(B, np.inf), np.concatenate([x, y], axis=1))
        return coal, area_rec.out["area"], x, y

    def combine(parts):
        return (np.concatenate([p[0] for p in parts]),
                np.asarray(sorted(sample_times), dtype=float),
                np.concatenate([p[1] for p in parts]),
                np.concatenate([p[2] for p in parts]),
                np.concatenate([p[3] for p in parts]))

    return _run_batches(seeds, batch_size, threads, worker, combine)
