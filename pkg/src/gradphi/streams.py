"""Deterministic Poisson event streams built on counter-based RNG.

Each site owns a Philox stream keyed by (mixed seed, site). Event i of a
site consumes values [5i, 5i+5) of that stream: one inter-arrival uniform
and the four per-update uniforms. The resulting event sequence is a pure
function of (seed, N, horizon): extending the horizon appends events
without disturbing earlier ones, and execution order never matters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

__all__ = ["EventStream", "build_event_stream", "derive_seeds", "mix64"]

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_U_EPS = 2.0 ** -53


def mix64(value: int) -> int:
    """splitmix64 finalizer; spreads structured seeds over 64 bits."""
    z = value & _MASK
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


def derive_seeds(base_seed: int, n: int, stream: int = 0) -> np.ndarray:
    """n independent 64-bit seeds for replicas of one experiment.

    ``stream`` separates independent consumers (chains, equilibrium draws,
    pilot runs) inside a single experiment.
    """
    out = np.empty(n, dtype=np.uint64)
    root = mix64(base_seed + _GOLDEN * (stream + 1))
    for i in range(n):
        out[i] = mix64(root + _GOLDEN * (i + 1))
    return out


def _site_generator(seed: int, site: int) -> np.random.Generator:
    key = np.array([mix64(int(seed)), site], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _site_events_continue(gen: np.random.Generator, t_tail: float, t_end: float):
    """Extend one site clock past ``t_end``; draw order is block-invariant.

    Returns (times, uniforms, new_tail) for every newly generated event,
    including the first one beyond ``t_end`` (callers buffer the excess).
    """
    ts, us = [], []
    tail = t_tail
    while tail <= t_end:
        block = max(16, int((t_end - tail) * 1.3) + 16)
        raw = gen.random((block, 5))
        t = tail + np.cumsum(-np.log1p(-raw[:, 0]))
        tail = float(t[-1])
        ts.append(t)
        us.append(np.clip(raw[:, 1:5], _U_EPS, 1.0 - _U_EPS))
    if len(ts) == 1:
        return ts[0], us[0], tail
    return np.concatenate(ts), np.concatenate(us), tail


def _site_events(seed: int, site: int, horizon: float):
    """(times, uniforms) for one site clock up to the horizon."""
    gen = _site_generator(seed, site)
    times, u, _ = _site_events_continue(gen, 0.0, horizon)
    keep = times <= horizon
    return times[keep], u[keep]


class Event(NamedTuple):
    time: float
    site: int
    uniforms: np.ndarray


@dataclass(frozen=True)
class EventStream:
    """Merged, time-ordered realization of all site clocks on [0, horizon]."""

    seed: int
    N: int
    horizon: float
    times: np.ndarray
    sites: np.ndarray
    uniforms: np.ndarray

    def __len__(self) -> int:
        return self.times.size

    def __iter__(self) -> Iterator[Event]:
        for i in range(self.times.size):
            yield Event(float(self.times[i]), int(self.sites[i]), self.uniforms[i])

    def site_counts(self) -> np.ndarray:
        """Events per interior site (index 0 holds site 1)."""
        return np.bincount(self.sites, minlength=self.N)[1:self.N]

    def restricted(self, horizon: float) -> "EventStream":
        keep = self.times <= horizon
        return EventStream(self.seed, self.N, horizon, self.times[keep],
                           self.sites[keep], self.uniforms[keep])


def write_replay(stream: EventStream, path) -> None:
    """Dump events as text lines 't k u1 u2 u3 u4' for replay elsewhere."""
    lines = []
    for i in range(len(stream)):
        u = stream.uniforms[i]
        lines.append(f"{stream.times[i]:.17g} {int(stream.sites[i])} "
                     f"{u[0]:.17g} {u[1]:.17g} {u[2]:.17g} {u[3]:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def read_replay(path, N: int, seed: int = 0) -> EventStream:
    """Load a replay file written by write_replay."""
    times, sites, unis = [], [], []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            tok = line.split()
            times.append(float(tok[0]))
            sites.append(int(tok[1]))
            unis.append([float(v) for v in tok[2:6]])
    times_arr = np.asarray(times)
    horizon = float(times_arr[-1]) if times_arr.size else 0.0
    return EventStream(seed, N, horizon, times_arr,
                       np.asarray(sites, dtype=np.int64),
                       np.asarray(unis).reshape(len(times), 4))


def build_event_stream(seed: int, N: int, horizon: float) -> EventStream:
    """Generate the event stream; deterministic in (seed, N, horizon)."""
    if N < 2:
        raise ValueError("N must be at least 2")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    all_t, all_s, all_u = [], [], []
    for site in range(1, N):
        t, u = _site_events(seed, site, horizon)
        all_t.append(t)
        all_s.append(np.full(t.size, site, dtype=np.int64))
        all_u.append(u)
    if not all_t:
        empty = np.empty(0)
        return EventStream(seed, N, horizon, empty, empty.astype(np.int64),
                           np.empty((0, 4)))
    times = np.concatenate(all_t)
    sites = np.concatenate(all_s)
    unis = np.concatenate(all_u) if all_u else np.empty((0, 4))
    order = np.lexsort((sites, times))
    return EventStream(seed, N, horizon, times[order], sites[order], unis[order])
