import math

import numpy as np
import pytest
from scipy.stats import norm

from gradphi.dynamics import CensoringScheme, flat_interior, tent_profile
from gradphi.estimators import (
    _offset_flat,
    b_nu_contraction_check,
    censoring_compare,
    eigen_decay_check,
    equilibrium_sample,
    equilibrium_tail_check,
    fkg_test,
    gap_from_decay,
    heat_mean_check,
    mixing_time_bracket,
    projected_tv,
    putative_mixing_time,
    tv_upper_curve,
    wilson_lower_curve,
)
from gradphi.observables import spectral_gap


def test_gaussian_exact_bridge_moments(gaussian):
    src = equilibrium_sample(gaussian, 16, seed=1, n=40_000, mode="gaussian_exact")
    x = src.states
    assert x.shape == (40_000, 17)
    assert np.all(x[:, 0] == 0.0) and np.all(x[:, 16] == 0.0)
    # Var(x_k) = k (N - k) / N
    for k in (4, 8, 12):
        expect = k * (16 - k) / 16
        assert np.var(x[:, k], ddof=1) == pytest.approx(expect, rel=0.05)
    assert abs(x[:, 8].mean()) <= 4 * np.sqrt(4.0 / 40_000)
    assert src.certificate["bias_bound"] == 0.0


def test_gaussian_exact_tilted(gaussian):
    src = equilibrium_sample(gaussian, 8, seed=2, n=30_000,
                             mode="gaussian_exact", tilt=1.0)
    means = src.states.mean(axis=0)
    assert np.allclose(means, np.arange(9.0), atol=0.05)


def test_sandwich_certificate_and_agreement(gaussian):
    src = equilibrium_sample(gaussian, 8, seed=3, n=1500, mode="sandwich")
    assert src.certificate["mode"] == "sandwich"
    assert 0.0 < src.certificate["bias_bound"] <= 0.1
    exact = equilibrium_sample(gaussian, 8, seed=4, n=1500, mode="gaussian_exact")
    from scipy.stats import ks_2samp
    ks = ks_2samp(src.states[:, 4], exact.states[:, 4]).statistic
    assert ks <= 0.06      # loose: 1500 draws per side


def test_gap_from_decay_matches_theory(gaussian):
    rep = gap_from_decay(gaussian, 8, replicas=4000, seed=11)
    gap = spectral_gap(8)
    assert abs(rep.value - gap) / gap <= 0.05
    assert rep.method == "gap_from_decay"
    assert rep.inputs_digest["params"]["N"] == 8


def test_gap_report_reconstructible_from_digest(gaussian):
    rep = gap_from_decay(gaussian, 8, replicas=800, seed=5)
    params = dict(rep.inputs_digest["params"])
    again = gap_from_decay(gaussian, params.pop("N"),
                           horizon=params["horizon"],
                           replicas=params["replicas"],
                           seed=params["seed"], n_times=params["n_times"],
                           tilt=params["tilt"])
    assert again.value == rep.value
    assert again.stderr == rep.stderr


def test_gap_rejects_degenerate_inputs(gaussian):
    with pytest.raises(ValueError):
        gap_from_decay(gaussian, 8, horizon=1.0)
    with pytest.raises(ValueError):
        gap_from_decay(gaussian, 8, x0=flat_interior(8, 0.0))


def test_gap_universal_across_potentials(gaussian, sos, power15):
    # same N, three potentials: confidence intervals must overlap
    reps = [gap_from_decay(pot, 8, replicas=1200, seed=61 + i)
            for i, pot in enumerate((gaussian, sos, power15))]
    los = [r.ci()[0] for r in reps]
    his = [r.ci()[1] for r in reps]
    assert max(los) <= min(his)
    gap = spectral_gap(8)
    for r in reps:
        assert abs(r.value - gap) / gap < 0.1


def test_gap_tilt_invariant(gaussian, sos):
    for pot in (gaussian, sos):
        flat = gap_from_decay(pot, 8, replicas=1500, seed=61, tilt=0.0)
        tilted = gap_from_decay(pot, 8, replicas=1500, seed=62, tilt=1.0)
        assert flat.ci()[0] <= tilted.ci()[1]
        assert tilted.ci()[0] <= flat.ci()[1]


def test_eigen_decay_and_heat_checks(sos):
    assert eigen_decay_check(sos, 8, replicas=3000, seed=21)["pass"]
    chk = heat_mean_check(sos, 8, tent_profile(8), times=[2.0, 10.0],
                          replicas=8000, seed=22)
    assert chk["pass"]


def test_wilson_curve_shape(gaussian):
    # tent start: mean ~ 2 N^2 / pi^2, equilibrium variance ~ N/(4 gap), so
    # the two-moment bound starts near m0^2/(m0^2 + 2 V_pi) and decays
    t_put = putative_mixing_time(16)
    times = np.linspace(0.1, 2.2, 12) * t_put
    curve = wilson_lower_curve(gaussian, 16, times, replicas=600, seed=31)
    curve.validate()
    m0 = curve.meta["mean"][0]
    v_pi = curve.meta["var_pi"]
    ceiling = m0**2 / (m0**2 + 2 * v_pi)
    assert curve.lower[0] > 0.8 * ceiling
    assert curve.lower[-1] < 0.1         # decays toward zero
    assert np.all(np.diff(curve.lower) < 0.05)
    assert np.isfinite(curve.meta["fitted_c"])


def test_wilson_bound_holds_while_mean_dominates(gaussian):
    # the bound stays above 1/2 until roughly log(N/pi^2)/(2 gap), where the
    # transported mean squared falls to the equilibrium variance scale
    n = 32
    gap = spectral_gap(n)
    t_half = math.log(n / math.pi**2) / (2 * gap)
    times = np.array([0.5 * t_half, 0.8 * t_half])
    curve = wilson_lower_curve(gaussian, n, times, replicas=500, seed=35)
    assert np.all(curve.lower >= 0.5)


def test_tv_upper_curve_monotone_trend(gaussian):
    t_put = putative_mixing_time(8)
    times = np.linspace(0.2, 6.0, 10) * t_put
    curve = tv_upper_curve(gaussian, 8, _offset_flat(8, 8.0), times,
                           replicas=300, seed=32)
    curve.validate()
    assert curve.upper[0] >= curve.upper[-1]
    assert curve.upper[-1] <= 0.2


def test_mixing_bracket_contains_putative_time(gaussian):
    br = mixing_time_bracket(gaussian, 16, 0.25, replicas_lower=800,
                             replicas_upper=200, seed=33)
    assert br["t_lo"] <= br["t_hi"]
    assert br["t_lo"] <= br["putative"] * 1.35
    assert br["t_hi"] >= br["putative"] * 0.65
    assert br["width_ratio"] <= 6.0


def test_mixing_bracket_eps_monotone(gaussian):
    br1 = mixing_time_bracket(gaussian, 8, 0.25, replicas_lower=600,
                              replicas_upper=200, seed=34)
    br2 = mixing_time_bracket(gaussian, 8, 0.75,
                              curves=(br1["lower_curve"], br1["upper_curve"]))
    assert br2["t_hi"] <= br1["t_hi"] + 1e-12
    assert br2["t_lo"] <= br1["t_lo"] + 1e-12


def test_projected_tv_examples(rng):
    a = rng.normal(0, 1, 60_000)
    b = rng.normal(2, 1, 60_000)
    tv, se = projected_tv(a, b, seed=1)
    assert tv == pytest.approx(2 * norm.cdf(1.0) - 1.0, abs=0.01)
    assert projected_tv(a, a.copy(), seed=2)[0] == 0.0
    tv_dis, _ = projected_tv(rng.uniform(0, 1, 5000), rng.uniform(5, 6, 5000), seed=3)
    assert tv_dis >= 0.99
    with pytest.raises(ValueError):
        projected_tv(a[:50], b)


def test_projected_tv_data_processing(rng):
    a = rng.normal(0, 1, 30_000)
    b = rng.normal(1, 1, 30_000)
    direct, se1 = projected_tv(a, b, seed=4)
    coarse, se2 = projected_tv(np.tanh(a), np.tanh(b), seed=5)
    assert coarse <= direct + 3 * math.hypot(se1, se2)


def test_fkg_gaussian_matches_bridge_covariance(gaussian):
    out = fkg_test(gaussian, 16, replicas=40_000, seed=41)[0]
    # bridge cross covariance min(j,k)(N - max(j,k))/N = 4*4/16 = 1
    assert out["pass"]
    assert out["cov"] == pytest.approx(1.0, abs=3 * out["stderr"])


def test_fkg_rejects_non_monotone_statistic(gaussian):
    bad = [("neg", lambda st: -st[:, 4], "x12", lambda st: st[:, 12])]
    with pytest.raises(ValueError):
        fkg_test(gaussian, 16, pairs=bad, replicas=500, seed=42)


def test_censoring_empty_scheme_identical(gaussian):
    out = censoring_compare(gaussian, 8, CensoringScheme(()), t=10.0,
                            replicas=2000, seed=51, eq_n=4000)
    assert out["tv_censored"] == out["tv_uncensored"]
    assert out["pass"]


def test_censoring_frozen_site_slows_mixing(gaussian):
    n = 8
    t = 0.5 * math.log(n) / spectral_gap(n)
    scheme = CensoringScheme(((0.0, t, frozenset({n // 2})),))
    out = censoring_compare(gaussian, n, scheme, t, replicas=4000, seed=52,
                            eq_n=8000)
    assert out["pass"]
    assert out["tv_censored"] >= out["tv_uncensored"]


def test_tail_check_report(gaussian):
    rep = equilibrium_tail_check(gaussian, 16, replicas=20_000, seed=61)
    assert rep["pass"]
    freqs = rep["rows"][1]["freq"]    # sup gradient at u = 2, 4, 8
    assert freqs[0] >= freqs[1] >= freqs[2]


def test_tail_check_sos(sos):
    # frozen oracle at N=32 from three independent pilots (two sandwich
    # ensembles and a long-run chain): sup-gradient exceedance at u = 2, 4, 8
    # is about 0.98 / 0.37 / 0.007, the last consistent with 31 e^{-8} times
    # an O(1) bridge correction
    rep = equilibrium_tail_check(sos, 32, replicas=350, seed=61)
    assert rep["pass"]
    freqs = rep["rows"][1]["freq"]
    assert 0.9 <= freqs[0] <= 1.0
    assert 0.25 <= freqs[1] <= 0.5
    assert freqs[2] <= 0.03
    assert rep["certificate"]["mode"] == "sandwich"


def test_b_nu_contraction(gaussian):
    out = b_nu_contraction_check(gaussian, 8, tent_profile(8),
                                 t=2.0 / spectral_gap(8), replicas=1200, seed=71)
    assert out["pass"]
    assert out["ratio"] <= math.exp(-2.0) * 1.25
    out0 = b_nu_contraction_check(gaussian, 8, tent_profile(8), t=1e-9,
                                  replicas=400, seed=72)
    assert out0["ratio"] == pytest.approx(1.0, abs=0.05)
