"""Estimators turning simulations into quantitative mixing diagnostics.

Covers relaxation-rate fits, the two-sided distance-to-equilibrium
machinery (moment-based lower curve, coalescence upper curve, mixing-time
brackets, cutoff ratios), equilibrium sampling with bias certificates, and
the positive-correlation, censoring, and contraction checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import CensoringScheme, Interface, tent_profile
from .ensemble import ensemble_single, ensemble_sticky
from .observables import detilt, fourier_stat_rows, spectral_gap
from .potential import Potential
from .reporting import EstimateReport, TVCurve
from .streams import derive_seeds, mix64

__all__ = [
    "EquilibriumSource",
    "equilibrium_sample",
    "gap_from_decay",
    "eigen_decay_check",
    "heat_mean_check",
    "wilson_lower_curve",
    "tv_upper_curve",
    "mixing_time_bracket",
    "cutoff_profile",
    "fkg_test",
    "censoring_compare",
    "projected_tv",
    "equilibrium_tail_check",
    "b_nu_contraction_check",
    "putative_mixing_time",
]


def putative_mixing_time(N: int) -> float:
    """log N / (2 gap), the conjectured location of the mixing transition."""
    return math.log(N) / (2.0 * spectral_gap(N))


def _offset_flat(N: int, offset: float, tilt: float = 0.0) -> Interface:
    h = tilt * np.arange(N + 1, dtype=float) + offset
    h[0] = 0.0
    h[N] = tilt * N
    return Interface(h, tilt)


# ---------------------------------------------------------------------------
# equilibrium sampling


@dataclass
class EquilibriumSource:
    states: np.ndarray              # (n, N+1)
    certificate: dict

    @property
    def n(self) -> int:
        return self.states.shape[0]


def _gaussian_exact_states(N: int, n: int, seed: int, tilt: float) -> np.ndarray:
    # random-walk bridge: cumulative standard normals minus the linear
    # correction, plus the tilt profile
    key = np.array([mix64(seed + 0x9E3779B97F4A7C15), 0xE11B], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    steps = gen.standard_normal((n, N))
    walk = np.cumsum(steps, axis=1)
    k = np.arange(1, N + 1, dtype=float)
    bridge = walk - (k / N) * walk[:, -1:]
    out = np.concatenate([np.zeros((n, 1)), bridge], axis=1)
    out += tilt * np.arange(N + 1, dtype=float)
    out[:, 0] = 0.0
    out[:, N] = tilt * N
    return out


def equilibrium_sample(pot: Potential, N: int, seed: int, n: int = 1,
                       mode: str = "auto", t_run: Optional[float] = None,
                       tilt: float = 0.0, retry_rounds: int = 4) -> EquilibriumSource:
    """Draw approximate equilibrium configurations with a bias certificate.

    ``gaussian_exact`` samples the random-walk bridge directly (exact, only
    for the gaussian tag). ``sandwich`` runs sticky pairs from the two
    dominating flat profiles until they merge; the certificate bounds the
    bias by the observed non-coalescence fraction and records retries.
    """
    if mode == "auto":
        mode = "gaussian_exact" if pot.closed_form == "gaussian" else "sandwich"
    if mode == "gaussian_exact":
        if pot.closed_form != "gaussian":
            raise ValueError("gaussian_exact sampling requires the gaussian tag")
        states = _gaussian_exact_states(N, n, seed, tilt)
        return EquilibriumSource(states, {"mode": mode, "bias_bound": 0.0,
                                          "retries": 0, "t_run": 0.0})

    if mode != "sandwich":
        raise ValueError(f"unknown equilibrium mode {mode!r}")
    if t_run is None:
        t_run = 3.0 * putative_mixing_time(N) + N * N
    lo = _offset_flat(N, -float(N), tilt)
    hi = _offset_flat(N, +float(N), tilt)
    states = np.empty((n, N + 1))
    unresolved = np.arange(n)
    first_fail = None
    rounds_used = 0
    for rnd in range(retry_rounds + 1):
        if unresolved.size == 0:
            break
        rounds_used = rnd
        seeds = derive_seeds(seed, n, stream=100 + rnd)[unresolved]
        coal, _, _, fx, _ = ensemble_sticky(pot, lo, hi, seeds, t_run,
                                            switch_time=0.0, check_order=False)
        done = np.isfinite(coal)
        states[unresolved[done]] = fx[done]
        if first_fail is None:
            first_fail = float(np.mean(~done))
        unresolved = unresolved[~done]
    if unresolved.size:
        raise RuntimeError(
            f"sandwich sampler: {unresolved.size}/{n} replicas failed to merge "
            f"within t_run={t_run:g} after {retry_rounds} retries; increase t_run")
    bias = max(first_fail, 3.0 / n)
    return EquilibriumSource(states, {"mode": mode, "bias_bound": bias,
                                      "retries": rounds_used, "t_run": float(t_run)})


# ---------------------------------------------------------------------------
# relaxation rate and exact linear-dynamics checks


def _wls_slope(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    return slope, math.sqrt(1.0 / sxx), ym + slope * (x - xm) - y


def gap_decay_data(pot: Potential, N: int, x0: Optional[Interface] = None,
                   horizon: Optional[float] = None, replicas: int = 10_000,
                   seed: int = 0, n_times: int = 20, tilt: float = 0.0,
                   threads: int = 1) -> dict:
    """Decay curve of the slow sine statistic plus the fitted rate."""
    gap = spectral_gap(N)
    if x0 is None:
        x0 = tent_profile(N, tilt)
    if horizon is None:
        horizon = 3.2 / gap
    if horizon < 3.0 / gap:
        raise ValueError("horizon shorter than three relaxation times")
    times = np.linspace(0.15, 1.0, n_times) * horizon
    f0 = float(fourier_stat_rows(detilt(x0.heights, tilt)[None, :])[0])
    if f0 == 0.0:
        raise ValueError("initial condition is orthogonal to the slow mode")

    seeds = derive_seeds(seed, replicas)
    stat = {"f": lambda st: fourier_stat_rows(st - tilt * np.arange(st.shape[1]))}
    _, out = ensemble_single(pot, x0, seeds, horizon, sample_times=times,
                             stats=stat, threads=threads)
    samples = out["f"]                        # (R, T)
    m = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(replicas)

    usable = np.abs(m) > 4.0 * se
    if usable.sum() < 5:
        raise RuntimeError(
            "mean statistic is noise-dominated over the fit window; "
            "increase replicas or shorten the horizon")

    def fit_rate(mean_vec, se_vec):
        t_fit = times[usable]
        y = np.log(np.abs(mean_vec[usable]))
        w = (np.abs(mean_vec[usable]) / se_vec[usable]) ** 2   # Var(log|m|) ~ (se/m)^2
        return _wls_slope(t_fit, y, w)[0]

    slope = fit_rate(m, se)
    # replica bootstrap: the same replicas feed every time point, so the
    # per-point errors are correlated and the naive WLS stderr is optimistic
    gen = np.random.Generator(np.random.Philox(key=np.array(
        [mix64(seed + 0x6A9), 0x5C], dtype=np.uint64)))
    boots = np.empty(160)
    for i in range(boots.size):
        idx = gen.integers(0, replicas, replicas)
        mb = samples[idx].mean(axis=0)
        boots[i] = fit_rate(mb, se)
    slope_se = float(boots.std(ddof=1))

    fit = np.abs(m[usable][0]) * np.exp(slope * (times - times[usable][0]))
    return {"times": times, "mean": m, "stderr": se, "fit": fit,
            "usable": usable, "rate": float(-slope), "rate_stderr": slope_se,
            "gap_theory": gap, "f0": f0,
            "params": {"potential": pot.name, "N": N, "replicas": replicas,
                       "horizon": float(horizon), "n_times": n_times,
                       "tilt": tilt, "seed": seed}}


def gap_from_decay(pot: Potential, N: int, x0: Optional[Interface] = None,
                   horizon: Optional[float] = None, replicas: int = 10_000,
                   seed: int = 0, n_times: int = 20, tilt: float = 0.0,
                   threads: int = 1) -> EstimateReport:
    """Estimate the relaxation rate from the decay of the slow sine statistic.

    The replica mean of the statistic decays exponentially at the spectral
    gap for every admissible potential; the rate is fitted by weighted
    least squares on the log of the absolute mean.
    """
    data = gap_decay_data(pot, N, x0, horizon, replicas, seed, n_times, tilt,
                          threads)
    digest = {"seed": seed, "params": data["params"],
              "gap_theory": data["gap_theory"]}
    return EstimateReport(data["rate"], data["rate_stderr"], replicas,
                          "gap_from_decay", digest)


def eigen_decay_check(pot: Potential, N: int, amplitude: float = 10.0,
                      replicas: int = 10_000, seed: int = 0,
                      n_times: int = 10, threads: int = 1) -> dict:
    """Replica mean of the slow statistic against its exact exponential decay."""
    from .dynamics import mode_profile
    gap = spectral_gap(N)
    x0 = mode_profile(N, 1, amplitude)
    f0 = float(fourier_stat_rows(x0.heights[None, :])[0])
    times = np.linspace(0.2, 2.4, n_times) / gap
    seeds = derive_seeds(seed, replicas)
    _, out = ensemble_single(pot, x0, seeds, float(times[-1]),
                             sample_times=times,
                             stats={"f": fourier_stat_rows}, threads=threads)
    m = out["f"].mean(axis=0)
    se = out["f"].std(axis=0, ddof=1) / math.sqrt(replicas)
    exact = f0 * np.exp(-gap * times)
    z = (m - exact) / se
    return {"times": times, "mean": m, "stderr": se, "exact": exact,
            "z": z, "max_abs_z": float(np.max(np.abs(z))),
            "pass": bool(np.max(np.abs(z)) <= 4.0)}


def heat_mean_check(pot: Potential, N: int, x0: Interface,
                    times: Sequence[float], replicas: int = 100_000,
                    seed: int = 0, threads: int = 1) -> dict:
    """Replica-mean height field against the exact half-Laplacian flow."""
    from .observables import heat_mean_solution
    seeds = derive_seeds(seed, replicas)
    _, out = ensemble_single(pot, x0, seeds, float(max(times)),
                             sample_times=times,
                             stats={"h": lambda st: st}, threads=threads)
    h = out["h"]                                  # (R, T, N+1)
    m = h.mean(axis=0)
    se = h.std(axis=0, ddof=1) / math.sqrt(replicas)
    exact = np.stack([heat_mean_solution(x0, t) for t in sorted(times)])
    interior = slice(1, N)
    z = (m[:, interior] - exact[:, interior]) / np.maximum(se[:, interior], 1e-300)
    return {"times": np.asarray(sorted(times)), "mean": m, "stderr": se,
            "exact": exact, "max_abs_z": float(np.max(np.abs(z))),
            "pass": bool(np.max(np.abs(z)) <= 4.0)}


# ---------------------------------------------------------------------------
# distance-to-equilibrium curves


def equilibrium_fourier_variance(pot: Potential, N: int, seed: int,
                                 n: int = 20_000, mode: str = "auto",
                                 tilt: float = 0.0) -> tuple[float, float, dict]:
    """Variance of the slow statistic at equilibrium, with stderr."""
    src = equilibrium_sample(pot, N, seed, n=n, mode=mode, tilt=tilt)
    f = fourier_stat_rows(detilt(src.states, tilt))
    v = float(np.var(f, ddof=1))
    m4 = float(np.mean((f - f.mean()) ** 4))
    se = math.sqrt(max(m4 - v * v, 0.0) / n)
    return v, se, src.certificate


def wilson_lower_curve(pot: Potential, N: int, times: Sequence[float],
                       replicas: int = 2000, seed: int = 0,
                       eq_n: int = 20_000, threads: int = 1) -> TVCurve:
    """Moment-based lower bound on distance to equilibrium from a tent start.

    Plugs replica estimates of the mean and variance of the slow statistic
    into the two-moment bound; the equilibrium variance comes from the
    equilibrium sampler and its uncertainty is folded into the band.
    """
    times = np.asarray(sorted(times), dtype=float)
    x0 = tent_profile(N)
    seeds = derive_seeds(seed, replicas, stream=1)
    _, out = ensemble_single(pot, x0, seeds, float(times[-1]), sample_times=times,
                             stats={"f": fourier_stat_rows}, threads=threads)
    f = out["f"]
    m = f.mean(axis=0)
    v_t = f.var(axis=0, ddof=1)
    se_m = f.std(axis=0, ddof=1) / math.sqrt(replicas)
    m4 = np.mean((f - m) ** 4, axis=0)
    se_vt = np.sqrt(np.maximum(m4 - v_t**2, 0.0) / replicas)

    v_pi, se_vpi, cert = equilibrium_fourier_variance(pot, N, seed + 1, n=eq_n)

    denom = 2.0 * np.maximum(v_t, 0.0) + 2.0 * v_pi
    ratio = m**2 / denom
    lower = ratio / (1.0 + ratio)
    # delta method through (m, v_t, v_pi)
    dr_dm = 2.0 * m / denom
    dr_dv = -2.0 * m**2 / denom**2
    var_r = (dr_dm * se_m) ** 2 + (dr_dv) ** 2 * (se_vt**2 + se_vpi**2)
    se_lower = np.sqrt(var_r) / (1.0 + ratio) ** 2

    gap = spectral_gap(N)
    with np.errstate(over="ignore"):
        c_fit = ratio * np.exp(2.0 * gap * times) / N
    fit_region = lower > 0.05
    c_value = float(np.median(c_fit[fit_region])) if np.any(fit_region) else float("nan")

    return TVCurve(times, np.clip(lower, 0.0, 1.0), se_lower,
                   np.ones_like(times), np.zeros_like(times),
                   meta={"N": N, "potential": pot.name, "kind": "lower",
                         "replicas": replicas, "seed": seed,
                         "fitted_c": c_value, "eq_certificate": cert,
                         "mean": m, "var_t": v_t, "var_pi": v_pi})


def tv_upper_curve(pot: Potential, N: int, x0: Interface,
                   times: Sequence[float], replicas: int = 400, seed: int = 0,
                   switch_time: Optional[float] = None, eq_mode: str = "auto",
                   eq_bias_tol: float = 0.02, tilt: float = 0.0,
                   threads: int = 1) -> TVCurve:
    """Coalescence upper bound: sticky pairs against equilibrium starts.

    upper(t) is the fraction of replicas not yet merged at t. The default
    switch time (half the putative mixing time) runs the shared-uniform
    phase first, then the sticky phase.
    """
    times = np.asarray(sorted(times), dtype=float)
    if switch_time is None:
        switch_time = 0.5 * putative_mixing_time(N)
    src = equilibrium_sample(pot, N, seed + 17, n=replicas, mode=eq_mode, tilt=tilt)
    if src.certificate["bias_bound"] > eq_bias_tol:
        raise RuntimeError(
            f"equilibrium source bias bound {src.certificate['bias_bound']:.3g} "
            f"exceeds tolerance {eq_bias_tol:g}; raise t_run or replicas")
    seeds = derive_seeds(seed, replicas, stream=2)
    coal, _, _, _, _ = ensemble_sticky(pot, x0, src.states, seeds,
                                       float(times[-1]), switch_time=switch_time,
                                       check_order=False, threads=threads,
                                       stop_when_coalesced=True)
    upper = np.array([np.mean(coal > t) for t in times])
    se = np.sqrt(np.maximum(upper * (1.0 - upper), 1.0 / replicas) / replicas)
    return TVCurve(times, np.zeros_like(times), np.zeros_like(times),
                   upper, se,
                   meta={"N": N, "potential": pot.name, "kind": "upper",
                         "replicas": replicas, "seed": seed,
                         "switch_time": switch_time,
                         "eq_certificate": src.certificate,
                         "coal_times": coal})


def _crossing_time(times, values, stderr, level, direction) -> tuple[float, float]:
    """Last time values >= level (direction 'down'), or first time <= level
    ('up' curves decreasing); returns (time, time stderr via local slope)."""
    times = np.asarray(times)
    values = np.asarray(values)
    if direction == "last_above":
        idx = np.where(values >= level)[0]
        if idx.size == 0:
            return float(times[0]), 0.0
        i = int(idx[-1])
    else:
        idx = np.where(values <= level)[0]
        if idx.size == 0:
            return float(times[-1]), 0.0
        i = int(idx[0])
    lo = max(i - 1, 0)
    hi = min(i + 1, times.size - 1)
    dv_dt = (values[hi] - values[lo]) / max(times[hi] - times[lo], 1e-300)
    t_se = abs(float(stderr[i]) / dv_dt) if dv_dt != 0 else 0.0
    return float(times[i]), t_se


def _geometric_grid(lo: float, hi: float, per_decade: int = 12) -> np.ndarray:
    n = max(int(np.ceil(per_decade * np.log10(hi / lo))) + 1, 4)
    return np.geomspace(lo, hi, n)


def mixing_time_bracket(pot: Potential, N: int, eps: float,
                        replicas_lower: int = 2000, replicas_upper: int = 400,
                        seed: int = 0, horizon_factor: float = 8.0,
                        threads: int = 1,
                        curves: Optional[tuple[TVCurve, TVCurve]] = None) -> dict:
    """Bracket the eps-mixing time between the moment lower curve and the
    coalescence upper curve (worst of the two extreme flat starts)."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    t_put = putative_mixing_time(N)
    if curves is None:
        lower_curve = wilson_lower_curve(
            pot, N, _geometric_grid(0.12 * t_put, 2.8 * t_put), replicas_lower,
            seed=seed, threads=threads)
        grid_up = _geometric_grid(0.25 * t_put, horizon_factor * t_put)
        top = tv_upper_curve(pot, N, _offset_flat(N, +N), grid_up,
                             replicas_upper, seed=seed + 211, threads=threads)
        bot = tv_upper_curve(pot, N, _offset_flat(N, -N), grid_up,
                             replicas_upper, seed=seed + 212, threads=threads)
        upper_curve = TVCurve(grid_up, np.zeros_like(grid_up), np.zeros_like(grid_up),
                              np.maximum(top.upper, bot.upper),
                              np.hypot(top.upper_stderr, bot.upper_stderr),
                              meta={"N": N, "potential": pot.name,
                                    "kind": "upper-max", "seed": seed,
                                    "replicas": replicas_upper,
                                    "switch_time": top.meta["switch_time"]})
    else:
        lower_curve, upper_curve = curves

    t_lo, t_lo_se = _crossing_time(lower_curve.times, lower_curve.lower,
                                   lower_curve.lower_stderr, eps, "last_above")
    if np.all(upper_curve.upper > eps):
        raise RuntimeError(
            f"upper curve never drops below eps={eps}; raise the horizon factor")
    t_hi, t_hi_se = _crossing_time(upper_curve.times, upper_curve.upper,
                                   upper_curve.upper_stderr, eps, "first_below")
    return {"eps": eps, "t_lo": t_lo, "t_lo_stderr": t_lo_se,
            "t_hi": t_hi, "t_hi_stderr": t_hi_se,
            "t_mid": math.sqrt(t_lo * t_hi), "width_ratio": t_hi / t_lo,
            "putative": t_put, "lower_curve": lower_curve,
            "upper_curve": upper_curve}


def cutoff_profile(pot: Potential, N_list: Sequence[int],
                   eps_list: Sequence[float] = (0.25,), replicas_lower: int = 2000,
                   replicas_upper: int = 400, seed: int = 0,
                   threads: int = 1) -> dict:
    """Mixing brackets across sizes, normalized by the cutoff prediction.

    For each N the two curves are computed once and reused for every eps.
    The ratio column r = t_mid * pi^2 / (N^2 log N) tends to 1 as N grows.
    """
    rows = []
    curves_by_n = {}
    for N in N_list:
        if N < 8:
            raise ValueError("cutoff profile needs N >= 8")
        first = mixing_time_bracket(pot, N, float(eps_list[0]),
                                    replicas_lower, replicas_upper,
                                    seed=seed + 1000 * N, threads=threads)
        curves_by_n[N] = (first["lower_curve"], first["upper_curve"])
        for eps in eps_list:
            br = first if eps == eps_list[0] else mixing_time_bracket(
                pot, N, float(eps), curves=curves_by_n[N])
            norm = N * N * math.log(N) / math.pi**2
            rows.append({"N": N, "eps": float(eps), "t_lo": br["t_lo"],
                         "t_hi": br["t_hi"], "t_mid": br["t_mid"],
                         "t_lo_stderr": br["t_lo_stderr"],
                         "t_hi_stderr": br["t_hi_stderr"],
                         "ratio": br["t_mid"] / norm,
                         "width_ratio": br["width_ratio"],
                         "putative": br["putative"]})
    return {"rows": rows, "curves": curves_by_n,
            "meta": {"potential": pot.name, "seed": seed,
                     "replicas_lower": replicas_lower,
                     "replicas_upper": replicas_upper}}


# ---------------------------------------------------------------------------
# equilibrium diagnostics


def _check_increasing(fn: Callable[[np.ndarray], np.ndarray], N: int,
                      seed: int, trials: int = 64) -> None:
    gen = np.random.Generator(np.random.Philox(key=np.array(
        [mix64(seed + 0xA5A5), 0x31], dtype=np.uint64)))
    for _ in range(trials):
        x = np.zeros(N + 1)
        x[1:N] = gen.normal(0.0, float(N), N - 1)
        bump = np.zeros(N + 1)
        bump[1:N] = gen.uniform(0.0, 3.0, N - 1)
        lo = fn(x[None, :])[0]
        hi = fn((x + bump)[None, :])[0]
        if hi < lo - 1e-12:
            raise ValueError("statistic declared increasing fails an order spot-check")


def fkg_test(pot: Potential, N: int, pairs=None, replicas: int = 20_000,
             seed: int = 0, mode: str = "auto") -> list[dict]:
    """Sample covariance of increasing statistics under equilibrium.

    Each statistic is spot-checked for monotonicity on random ordered pairs
    before use. Positive association predicts covariance >= 0 up to noise.
    """
    if pairs is None:
        i, j = N // 4, 3 * N // 4
        pairs = [(f"x{i}", lambda st, i=i: st[:, i], f"x{j}", lambda st, j=j: st[:, j])]
    src = equilibrium_sample(pot, N, seed + 3, n=replicas, mode=mode)
    out = []
    for name_f, f, name_g, g in pairs:
        _check_increasing(f, N, seed)
        _check_increasing(g, N, seed + 1)
        fv = f(src.states)
        gv = g(src.states)
        prod = (fv - fv.mean()) * (gv - gv.mean())
        cov = float(prod.mean()) * replicas / (replicas - 1)
        se = float(prod.std(ddof=1) / math.sqrt(replicas))
        out.append({"f": name_f, "g": name_g, "cov": cov, "stderr": se,
                    "pass": cov >= -3.0 * se,
                    "certificate": src.certificate})
    return out


def projected_tv(samples_a: np.ndarray, samples_b: np.ndarray,
                 statistic: Optional[Callable] = None, n_boot: int = 200,
                 seed: int = 0) -> tuple[float, float]:
    """Histogram total-variation distance between two one-dimensional samples.

    Freedman-Diaconis bins over the pooled range. The estimate lower-bounds
    the true distance up to binning; noise inflates it near zero. Returns
    (estimate, bootstrap stderr).
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if statistic is not None:
        a, b = np.asarray(statistic(a)), np.asarray(statistic(b))
    a, b = a.ravel(), b.ravel()
    if a.size < 100 or b.size < 100:
        raise ValueError("projected_tv needs at least 100 samples per side")

    pooled = np.concatenate([a, b])
    q75, q25 = np.percentile(pooled, [75, 25])
    width = 2.0 * (q75 - q25) / pooled.size ** (1.0 / 3.0)
    lo, hi = pooled.min(), pooled.max()
    if width <= 0 or hi <= lo:
        return (0.0, 0.0) if np.array_equal(np.sort(a), np.sort(b)) else (1.0, 0.0)
    nbins = int(np.clip(np.ceil((hi - lo) / width), 4, 4096))
    edges = np.linspace(lo, hi, nbins + 1)

    def tv(xa, xb):
        pa = np.histogram(xa, bins=edges)[0] / xa.size
        pb = np.histogram(xb, bins=edges)[0] / xb.size
        return 0.5 * np.abs(pa - pb).sum()

    est = float(tv(a, b))
    gen = np.random.Generator(np.random.Philox(key=np.array(
        [mix64(seed + 0xB007), 0x77], dtype=np.uint64)))
    boots = np.empty(n_boot)
    for i in range(n_boot):
        boots[i] = tv(a[gen.integers(0, a.size, a.size)],
                      b[gen.integers(0, b.size, b.size)])
    return est, float(boots.std(ddof=1))


def censoring_compare(pot: Potential, N: int, scheme: CensoringScheme,
                      t: float, replicas: int = 10_000, seed: int = 0,
                      eq_n: int = 40_000, threads: int = 1) -> dict:
    """Censored versus uncensored distance proxies from the dominating start.

    Both runs consume identical event streams; the censored one only skips
    the scheduled updates. The proxy is the histogram distance of the slow
    statistic against equilibrium samples; censoring must not look closer
    to equilibrium than the uncensored chain, beyond noise.
    """
    x0 = _offset_flat(N, float(N))
    seeds = derive_seeds(seed, replicas, stream=5)
    stat = {"f": fourier_stat_rows}
    _, plain = ensemble_single(pot, x0, seeds, t, sample_times=[t], stats=stat,
                               threads=threads)
    _, gated = ensemble_single(pot, x0, seeds, t, sample_times=[t], stats=stat,
                               censor=scheme, threads=threads)
    src = equilibrium_sample(pot, N, seed + 23, n=eq_n)
    f_eq = fourier_stat_rows(src.states)
    tv_plain, se_plain = projected_tv(plain["f"][:, 0], f_eq, seed=seed + 31)
    tv_gated, se_gated = projected_tv(gated["f"][:, 0], f_eq, seed=seed + 32)
    margin = 3.0 * math.hypot(se_plain, se_gated)
    return {"tv_uncensored": tv_plain, "stderr_uncensored": se_plain,
            "tv_censored": tv_gated, "stderr_censored": se_gated,
            "pass": tv_gated >= tv_plain - margin,
            "certificate": src.certificate, "t": t}


def equilibrium_tail_check(pot: Potential, N: int, replicas: int = 50_000,
                           seed: int = 0, u_values: Sequence[float] = (2.0, 4.0, 8.0),
                           mode: str = "auto") -> dict:
    """Exceedance frequencies of scaled sup-height and sup-gradient.

    Report-only: frequencies at successive thresholds should fall at least
    geometrically once out of the saturated head (a max over N sites stays
    near one until the per-site tails are small), down to the Monte Carlo
    resolution floor 3/replicas.
    """
    src = equilibrium_sample(pot, N, seed + 7, n=replicas, mode=mode)
    interior = src.states[:, 1:N]
    grads = np.diff(src.states, axis=1)
    sup_h = np.max(np.abs(interior), axis=1) / math.sqrt(N)
    sup_g = np.max(np.abs(grads), axis=1)
    floor = 3.0 / replicas
    rows = []
    ok = True
    for name, vals in (("sup_height_scaled", sup_h), ("sup_gradient", sup_g)):
        freqs = [float(np.mean(vals >= u)) for u in u_values]
        for prev, nxt in zip(freqs[:-1], freqs[1:]):
            if nxt > prev:
                ok = False
            if prev <= 0.5 and nxt > max(prev / 4.0, floor):
                ok = False
        rows.append({"observable": name, "u": list(u_values), "freq": freqs})
    return {"rows": rows, "floor": floor, "pass": ok,
            "certificate": src.certificate}


def b_nu_contraction_check(pot: Potential, N: int, x0: Interface, t: float,
                           replicas: int = 2000, seed: int = 0,
                           n_boot: int = 200, threads: int = 1) -> dict:
    """Contraction of the coupled mean-displacement norm under the
    shared-uniform coupling against equilibrium starts.

    The norm sqrt(sum_k E|X_k - Y_k|^2-of-means) must shrink at least as
    fast as exp(-gap t), up to Monte Carlo error.
    """
    src = equilibrium_sample(pot, N, seed + 41, n=replicas)
    seeds = derive_seeds(seed, replicas, stream=7)
    coal, _, _, fx, fy = ensemble_sticky(pot, x0, src.states, seeds, t,
                                         switch_time=np.inf, check_order=False,
                                         threads=threads)
    diff0 = np.abs(x0.heights[None, 1:N] - src.states[:, 1:N])
    difft = np.abs(fx[:, 1:N] - fy[:, 1:N])

    def bnorm(d):
        return math.sqrt(float(np.sum(d.mean(axis=0) ** 2)))

    b0 = bnorm(diff0)
    bt = bnorm(difft)
    gen = np.random.Generator(np.random.Philox(key=np.array(
        [mix64(seed + 0xC0), 0x99], dtype=np.uint64)))
    ratios = np.empty(n_boot)
    for i in range(n_boot):
        idx = gen.integers(0, replicas, replicas)
        ratios[i] = bnorm(difft[idx]) / max(bnorm(diff0[idx]), 1e-300)
    ratio = bt / b0
    se = float(ratios.std(ddof=1))
    bound = math.exp(-spectral_gap(N) * t)
    return {"b0": b0, "bt": bt, "ratio": ratio, "ratio_stderr": se,
            "bound": bound, "pass": ratio <= bound * (1.0 + 3.0 * se / max(ratio, 1e-300)),
            "t": t}
