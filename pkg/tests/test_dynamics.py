import numpy as np
import pytest

from gradphi.dynamics import (
    CensoringScheme,
    CouplingOrderError,
    Interface,
    coalescence_fraction,
    flat_interior,
    mode_profile,
    run_grand_coupled,
    run_single,
    run_sticky_pair,
    tent_profile,
)
from gradphi.resampler import gaussian_oracle
from gradphi.streams import build_event_stream, derive_seeds


def test_interface_validation():
    with pytest.raises(ValueError):
        Interface(np.array([1.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        Interface(np.array([0.0, 1.0, 5.0]), tilt=0.0)
    x = Interface(np.array([0.0, 1.0, 4.0]), tilt=2.0)
    assert x.N == 2
    assert np.array_equal(x.increments(), [1.0, 3.0])


def test_zero_events_returns_initial(gaussian):
    x0 = tent_profile(6)
    ev = build_event_stream(1, 6, 0.0)
    out, _ = run_single(gaussian, x0, ev)
    assert np.array_equal(out.heights, x0.heights)


def test_pinning_never_moves(gaussian):
    x0 = flat_interior(8, 5.0, tilt=1.5)
    ev = build_event_stream(2, 8, 50.0)
    out, _ = run_single(gaussian, x0, ev)
    assert out.heights[0] == 0.0
    assert out.heights[8] == 1.5 * 8


def test_single_update_uses_conditional(gaussian):
    # one site, one event: the new height is the conditional quantile
    x0 = flat_interior(2, 5.0)
    ev = build_event_stream(3, 2, 10.0)
    out, _ = run_single(gaussian, x0, ev.restricted(float(ev.times[0])))
    from scipy.special import ndtri
    m, sd = gaussian_oracle(gaussian, 0.0, 0.0)
    assert out.heights[1] == pytest.approx(m + sd * ndtri(ev.uniforms[0][0]))


def test_full_censoring_freezes_chain(gaussian):
    x0 = tent_profile(8)
    ev = build_event_stream(4, 8, 30.0)
    censor = CensoringScheme(((0.0, np.inf, frozenset(range(1, 8))),))
    out, _ = run_single(gaussian, x0, ev, censor=censor)
    assert np.array_equal(out.heights, x0.heights)


def test_partial_censoring_only_changes_censored_site(gaussian):
    x0 = tent_profile(8)
    ev = build_event_stream(4, 8, 5.0)
    censor = CensoringScheme(((0.0, np.inf, frozenset({4})),))
    plain = []
    gated = []
    run_single(gaussian, x0, ev, trajectory=plain)
    run_single(gaussian, x0, ev, censor=censor, trajectory=gated)
    plain_k = [(t, k) for t, k, _ in plain if k != 4]
    gated_k = [(t, k) for t, k, _ in gated]
    assert plain_k == gated_k


def test_censoring_scheme_validation():
    with pytest.raises(ValueError):
        CensoringScheme(((0.0, 2.0, {1}), (1.0, 3.0, {2})))
    scheme = CensoringScheme(((0.0, 2.0, {1}), (2.0, 3.0, {2})))
    assert scheme.active(0.5, 1)
    assert not scheme.active(2.0, 1)   # right-continuous switch at t=2
    assert scheme.active(2.0, 2)
    assert not scheme.active(3.0, 2)


def test_observer_traces_piecewise_constant(gaussian):
    x0 = tent_profile(4)
    ev = build_event_stream(8, 4, 10.0)
    _, traces = run_single(gaussian, x0, ev, sample_times=[0.0, 20.0],
                           observers={"mid": lambda h: h[2]})
    assert traces["mid"][0] == x0.heights[2]     # no event strictly before 0
    out, _ = run_single(gaussian, x0, ev)
    assert traces["mid"][1] == out.heights[2]    # constant after the horizon


def test_grand_coupling_preserves_orders(gaussian, sos):
    for pot in (gaussian, sos):
        lo = flat_interior(8, -4.0)
        hi = flat_interior(8, 4.0)
        steep = Interface(np.concatenate([[0.0], np.linspace(-3, 3, 7), [0.0]]))
        ev = build_event_stream(5, 8, 60.0)
        outs = run_grand_coupled(pot, [lo, hi, steep], ev, check_orders=True)
        assert np.all(outs[0].heights <= outs[1].heights + 1e-9)


def test_grand_coupling_identical_initials_identical_paths(gaussian):
    x0 = tent_profile(8)
    ev = build_event_stream(6, 8, 40.0)
    a, b = run_grand_coupled(gaussian, [x0, x0.copy()], ev)
    assert np.array_equal(a.heights, b.heights)


def test_grand_coupling_gradient_order(gaussian, sos):
    # pinned left ends force increment order to imply height order; a
    # nontrivial increment-ordered pair needs different right endpoints
    down = Interface(-np.arange(9.0), tilt=-1.0)
    up = Interface(np.arange(9.0), tilt=1.0)
    ev = build_event_stream(7, 8, 60.0)
    for pot in (gaussian, sos):
        outs = run_grand_coupled(pot, [down, up], ev)
        assert np.all(np.diff(outs[0].heights) <= np.diff(outs[1].heights) + 1e-9)
        assert outs[0].heights[8] == -8.0 and outs[1].heights[8] == 8.0


def test_sticky_identical_start_coalesces_immediately(gaussian):
    x0 = tent_profile(8)
    ev = build_event_stream(9, 8, 10.0)
    res = run_sticky_pair(gaussian, x0, x0.copy(), ev)
    assert res.coalescence_time == 0.0
    assert np.all(res.area == 0.0)


def test_sticky_absorbing_once_coalesced(gaussian):
    lo = flat_interior(6, -2.0)
    hi = flat_interior(6, 2.0)
    ev = build_event_stream(10, 6, 200.0)
    res = run_sticky_pair(gaussian, lo, hi, ev)
    assert res.coalesced
    after = res.times >= res.coalescence_time
    assert np.all(res.area[after] == 0.0)
    assert np.array_equal(res.final_x.heights, res.final_y.heights)


def test_sticky_area_nonnegative_for_ordered_pairs(sos):
    lo = flat_interior(8, -3.0)
    hi = flat_interior(8, 3.0)
    ev = build_event_stream(11, 8, 80.0)
    res = run_sticky_pair(sos, lo, hi, ev, switch_time=5.0)
    assert np.all(res.area >= -1e-12)


def test_sticky_generic_potential_scalar_path(power15):
    lo = flat_interior(4, -1.0)
    hi = flat_interior(4, 1.0)
    ev = build_event_stream(12, 4, 30.0)
    res = run_sticky_pair(power15, lo, hi, ev)
    assert res.coalesced
    assert np.array_equal(res.final_x.heights, res.final_y.heights)


def test_coalescence_fraction_edges(gaussian):
    lo = flat_interior(4, -2.0)
    hi = flat_interior(4, 2.0)
    seeds = derive_seeds(13, 8)
    frac, se = coalescence_fraction(gaussian, lo, hi, seeds, t=1e-6)
    assert frac == 0.0
    frac1, _ = coalescence_fraction(gaussian, lo, hi, seeds[:1], t=500.0)
    assert frac1 in (0.0, 1.0)


def test_n2_first_update_couples(gaussian):
    # both neighbors are the pinned endpoints, so the very first sticky
    # update resamples from identical conditionals and must merge
    x0 = flat_interior(2, 4.0)
    y0 = flat_interior(2, -4.0)
    ev = build_event_stream(21, 2, 50.0)
    res = run_sticky_pair(gaussian, x0, y0, ev)
    assert res.coalescence_time == pytest.approx(float(ev.times[0]))
