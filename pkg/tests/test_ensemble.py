import numpy as np
import pytest

from gradphi.dynamics import (
    CensoringScheme,
    CouplingOrderError,
    flat_interior,
    run_single,
    run_sticky_pair,
    tent_profile,
)
from gradphi.ensemble import ensemble_grand, ensemble_single, ensemble_sticky
from gradphi.streams import build_event_stream, derive_seeds


def test_single_matches_scalar_reference(gaussian, sos):
    seeds = derive_seeds(301, 6)
    x0 = tent_profile(8)
    for pot in (gaussian, sos):
        _, out, fin = ensemble_single(pot, x0, seeds, 25.0, sample_times=[10.0],
                                      stats={"h": lambda st: st}, return_final=True)
        for i, sd in enumerate(seeds):
            ev = build_event_stream(int(sd), 8, 25.0)
            ref, traces = run_single(pot, x0, ev, sample_times=[10.0],
                                     observers={"h": lambda h: h[3]})
            assert np.array_equal(fin[i], ref.heights)
            assert out["h"][i, 0, 3] == traces["h"][0]


def test_single_invariant_to_batching_and_threads(gaussian):
    seeds = derive_seeds(302, 30)
    x0 = flat_interior(6, 3.0)
    runs = []
    for kwargs in ({"batch_size": 30}, {"batch_size": 7},
                   {"batch_size": 11, "chunk_events": 64},
                   {"batch_size": 13, "threads": 4}):
        _, out = ensemble_single(gaussian, x0, seeds, 20.0, sample_times=[20.0],
                                 stats={"h": lambda st: st}, **kwargs)
        runs.append(out["h"])
    for other in runs[1:]:
        assert np.array_equal(runs[0], other)


def test_single_with_censoring_matches_scalar(gaussian):
    seeds = derive_seeds(303, 4)
    x0 = tent_profile(8)
    censor = CensoringScheme(((0.0, 10.0, frozenset({4, 5})),))
    _, _, fin = ensemble_single(gaussian, x0, seeds, 15.0, censor=censor,
                                return_final=True)
    for i, sd in enumerate(seeds):
        ev = build_event_stream(int(sd), 8, 15.0)
        ref, _ = run_single(gaussian, x0, ev, censor=censor)
        assert np.array_equal(fin[i], ref.heights)


def test_sticky_matches_scalar_reference(gaussian, sos):
    seeds = derive_seeds(304, 5)
    lo = flat_interior(8, -4.0)
    hi = flat_interior(8, 4.0)
    for pot in (gaussian, sos):
        coal, _, _, fx, fy = ensemble_sticky(pot, lo, hi, seeds, 60.0,
                                             switch_time=12.0)
        for i, sd in enumerate(seeds):
            ev = build_event_stream(int(sd), 8, 60.0)
            ref = run_sticky_pair(pot, lo, hi, ev, switch_time=12.0)
            assert np.array_equal(fx[i], ref.final_x.heights)
            assert np.array_equal(fy[i], ref.final_y.heights)
            assert coal[i] == ref.coalescence_time or (
                np.isinf(coal[i]) and np.isinf(ref.coalescence_time))


def test_sticky_area_traces_match_scalar(gaussian):
    seeds = derive_seeds(305, 3)
    lo = flat_interior(6, -3.0)
    hi = flat_interior(6, 3.0)
    grid = [5.0, 15.0, 30.0]
    coal, st, areas, _, _ = ensemble_sticky(gaussian, lo, hi, seeds, 30.0,
                                            sample_times=grid)
    for i, sd in enumerate(seeds):
        ev = build_event_stream(int(sd), 6, 30.0)
        ref = run_sticky_pair(gaussian, lo, hi, ev)
        for j, t in enumerate(grid):
            k = np.searchsorted(ref.times, t, side="right") - 1
            expected = ref.area[k] if k >= 0 else np.sum(hi.heights - lo.heights)
            assert areas[i, j] == pytest.approx(expected, abs=0)


def test_sticky_per_replica_initials(gaussian):
    seeds = derive_seeds(306, 4)
    y0 = np.zeros((4, 7))
    y0[:, 1:6] = np.arange(4)[:, None] + 1.0
    x0 = flat_interior(6, 0.0)
    coal, _, _, fx, fy = ensemble_sticky(gaussian, x0, y0, seeds, 40.0)
    assert np.all(np.isfinite(coal))
    assert np.array_equal(fx, fy)


def test_grand_matches_scalar_and_counts_events(gaussian):
    from gradphi.dynamics import run_grand_coupled
    seeds = derive_seeds(307, 5)
    lo = flat_interior(8, -2.0)
    hi = flat_interior(8, 2.0)
    finals, n_events = ensemble_grand(gaussian, [lo, hi], seeds, 30.0)
    total = 0
    for i, sd in enumerate(seeds):
        ev = build_event_stream(int(sd), 8, 30.0)
        refs = run_grand_coupled(gaussian, [lo, hi], ev)
        total += len(ev)
        assert np.array_equal(finals[i, 0], refs[0].heights)
        assert np.array_equal(finals[i, 1], refs[1].heights)
    assert n_events == total


def test_grand_rejects_generic_potential(power15):
    lo = flat_interior(4, -1.0)
    hi = flat_interior(4, 1.0)
    with pytest.raises(NotImplementedError):
        ensemble_grand(power15, [lo, hi], derive_seeds(1, 2), 5.0)


def test_sticky_stop_when_coalesced_keeps_times(gaussian):
    seeds = derive_seeds(308, 16)
    lo = flat_interior(4, -2.0)
    hi = flat_interior(4, 2.0)
    a, _, _, _, _ = ensemble_sticky(gaussian, lo, hi, seeds, 300.0)
    b, _, _, _, _ = ensemble_sticky(gaussian, lo, hi, seeds, 300.0,
                                    stop_when_coalesced=True)
    assert np.array_equal(a, b)
