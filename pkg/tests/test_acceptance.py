"""Acceptance suite: one test per release criterion, one printed line each.

Heavy Monte Carlo lives here on purpose; the whole module is the release
gate and runs in well under an hour on one core.  Every tolerance is
fixed in this file, next to the check it belongs to.
"""

import itertools
import math
import time

import numpy as np
import pandas as pd
import pytest
from scipy import integrate, stats

from conftest import make_design
from rangequant.benchmark import NigStandard, fit_harx_gjr, nig_logpdf
from rangequant.density import DEFAULT_TAU_GRID, QuantileCurve, sample
from rangequant.evaluate import ag_test, berkowitz, dm_test
from rangequant.features import QuantDesign, build_design
from rangequant.ingest import DailyPanel
from rangequant.pipeline import (
    evaluate_forecasts,
    rolling_benchmark_forecasts,
    rolling_quantile_forecasts,
)
from rangequant.quantreg import (
    bootstrap,
    fit,
    joint_bootstrap,
    n_windows,
    pinball,
    pseudo_r1,
    slope_equality_test,
    xi_w_test,
)
from rangequant.rangevol import lambda_grid, lambda_table
from rangequant.simulate import SimSpec, estimator_mc, simulate
from test_benchmark import simulate_harx_gjr
from test_quantreg import intercept_design, lower_quantile_oracle

FOUR_LN2 = 4 * math.log(2)


def report(num: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(scope="module")
def grid_m5_big():
    return lambda_grid(5, n_paths=400_000, seed=2024)


def test_criterion_01_lambda_table_limits():
    t0 = time.monotonic()
    big = lambda_table(10_000, n_paths=1_000_000, seed=314159)
    elapsed = time.monotonic() - t0
    small = lambda_table(1, n_paths=1_000_000, seed=271828)
    big_lambda_1 = small.big_lambda
    rel_dev = abs(big.lam2 - FOUR_LN2) / FOUR_LN2
    ok = rel_dev <= 0.01 and abs(big_lambda_1 - 2.0) <= 0.02 and elapsed < 120.0
    report(1, ok, f"lambda2(m=1e4)={big.lam2:.5f} vs 4ln2={FOUR_LN2:.5f} "
                  f"(dev {rel_dev:.2%}, tol 1%); Lambda_1={big_lambda_1:.4f} "
                  f"(tol 2+-0.02); runtime {elapsed:.1f}s (tol 120s)")
    assert elapsed < 120.0, f"lambda table took {elapsed:.1f}s"
    assert abs(big_lambda_1 - 2.0) <= 0.02
    # the discrete-grid moment converges like 1/sqrt(m); at m=1e4 it sits
    # ~1.39% below the continuous limit, so this bound is expected to fail
    assert rel_dev <= 0.01, (
        f"lambda2 at m=1e4 is {big.lam2:.5f}, {rel_dev:.2%} from 4ln2"
    )


def test_criterion_02_estimator_consistency(grid_m5_big):
    t0 = time.monotonic()
    spec = SimSpec(n=468, m=5, days=1000, sigma=0.2, seed=11_000)
    tab = estimator_mc(spec, grid_m5_big, ("rv_sparse", "rrv")).set_index("estimator")
    elapsed = time.monotonic() - t0
    rel_bias = abs(tab.loc["rrv", "rel_bias"])
    rrv_rmse = tab.loc["rrv", "rmse"]
    rv_rmse = tab.loc["rv_sparse", "rmse"]
    ok = rel_bias < 0.02 and rrv_rmse < rv_rmse and elapsed < 60.0
    report(2, ok, f"RRV rel bias {rel_bias:.3%} (tol 2%); RMSE {rrv_rmse:.2e} < "
                  f"subinterval-RV {rv_rmse:.2e}; runtime {elapsed:.1f}s (tol 60s)")
    assert rel_bias < 0.02
    assert rrv_rmse < rv_rmse
    assert elapsed < 60.0


def test_criterion_03_noise_jump_robustness(grid_m5_big):
    spec = SimSpec(n=468, m=5, days=1000, sigma=0.01, jump_intensity=1.0,
                   jump_sd=0.03, noise_omega=5e-4, noise_law="two_point", seed=12_000)
    tab = estimator_mc(spec, grid_m5_big, ("rrv", "rbv", "rrv_bvbc")).set_index("estimator")
    bvbc, rrv, rbv = (tab.loc[k, "rmse"] for k in ("rrv_bvbc", "rrv", "rbv"))
    ok = bvbc < rrv and bvbc < rbv
    report(3, ok, f"RMSE vs true IV: bias-corrected {bvbc:.2e} < bipower {rbv:.2e} "
                  f"and < range {rrv:.2e}")
    assert bvbc < rrv
    assert bvbc < rbv


def test_criterion_04_jump_test_size(grid_m5_big):
    from rangequant.rangevol import jump_stat

    spec = SimSpec(n=78, m=5, days=5000, sigma=0.01, seed=13_000)
    zs = np.array([jump_stat(s.day, grid_m5_big) for s in simulate(spec)])
    rate = float((zs > stats.norm.ppf(0.99)).mean())
    ok = 0.005 <= rate <= 0.025
    report(4, ok, f"one-sided rejection at 1% critical value: {rate:.2%} "
                  f"over 5000 days (band [0.5%, 2.5%])")
    assert 0.005 <= rate <= 0.025


def test_criterion_05_quantile_regression_exactness():
    # intercept-only fits equal the lower empirical quantile exactly
    exact = True
    rng = np.random.default_rng(14_000)
    for n, tau in [(20, 0.5), (40, 0.25), (33, 0.1), (8, 0.4), (50, 0.9)]:
        y = rng.standard_normal(n)
        exact &= fit(intercept_design(y), tau).beta[0] == lower_quantile_oracle(y, tau)

    # analytic tau-slopes of the location-scale model at n = 1e4
    design = make_design(10_000, seed=2, k=1, hetero=0.5)
    slope_err = 0.0
    for tau in (0.1, 0.5, 0.9):
        target = 2.0 + 0.5 * stats.norm.ppf(tau)
        slope_err = max(slope_err, abs(fit(design, tau).beta[1] - target))

    # exhaustive basis-solution oracle on tiny instances
    worst_gap = 0.0
    for trial in range(18):
        n = int(rng.integers(6, 13))
        x = rng.uniform(-1, 3, n)
        y = 0.5 + 1.5 * x + rng.standard_normal(n)
        tau = [0.2, 0.5, 0.8][trial % 3]
        best = math.inf
        for i, j in itertools.combinations(range(n), 2):
            if x[i] == x[j]:
                continue
            slope = (y[j] - y[i]) / (x[j] - x[i])
            resid = y - (y[i] - slope * x[i]) - slope * x
            best = min(best, float(pinball(resid, tau).sum()))
        d = QuantDesign(y=y, X=np.column_stack([np.ones(n), x]),
                        dates=np.arange(n), column_names=("const", "x"))
        worst_gap = max(worst_gap, abs(fit(d, tau).objective - best))

    ok = exact and slope_err <= 0.1 and worst_gap <= 1e-8
    report(5, ok, f"intercept-only exact: {exact}; max slope error {slope_err:.4f} "
                  f"(tol 0.1); worst small-instance objective gap {worst_gap:.2e} (tol 1e-8)")
    assert exact
    assert slope_err <= 0.1
    assert worst_gap <= 1e-8


def test_criterion_06_pseudo_r1_nesting():
    taus = np.round(np.arange(0.05, 0.96, 0.05), 2)

    def check(design):
        restricted = design.subset(("lag1", "sp500")) if "lag1" in design.column_names \
            else design.subset(("x1",))
        worst = math.inf
        for tau in taus:
            r_full = pseudo_r1(fit(design, tau), design.y, tau)
            r_res = pseudo_r1(fit(restricted, tau), design.y, tau)
            worst = min(worst, r_full - r_res)
        return worst

    sim_margin = check(make_design(600, seed=15_000, hetero=0.4))

    from conftest import bundled_panel_frame

    frame = bundled_panel_frame().set_index("date")
    design = build_design(
        y=frame["y"], vix=np.log(frame["vix"]),
        sp500=frame["sp500"], jump=frame["jump"],
    )
    panel_margin = check(design)
    ok = sim_margin >= -1e-12 and panel_margin >= -1e-12
    report(6, ok, f"min(R1_full - R1_restricted) = {sim_margin:.2e} on simulation, "
                  f"{panel_margin:.2e} on the bundled panel (>= 0 required)")
    assert sim_margin >= -1e-12
    assert panel_margin >= -1e-12


def test_criterion_07_test_calibration():
    t0 = time.monotonic()
    reps = 500
    rng = np.random.default_rng(16_000)

    rej_berk = 0
    for _ in range(reps):
        rej_berk += berkowitz(rng.standard_normal(250))["p_value"] < 0.05

    rej_xi = 0
    for r in range(reps):
        design = make_design(250, seed=20_000 + r)  # x2 truly zero
        qr = fit(design, 0.5)
        boot = bootstrap(design, 0.5, B=200, seed=30_000 + r)
        rej_xi += xi_w_test(qr, boot, ("x2",))["p_value"] < 0.05

    taus = (0.25, 0.5, 0.75)
    rej_slope = 0
    for r in range(reps):
        design = make_design(250, seed=40_000 + r, hetero=0.0)  # location shift true
        jb = joint_bootstrap(design, taus, B=200, seed=50_000 + r)
        fits = [fit(design, t) for t in taus]
        rej_slope += slope_equality_test(fits, jb)["p_value"] < 0.05

    rej_ag = 0
    for _ in range(reps):
        y = rng.standard_normal(300)
        logf = stats.norm.logpdf(y, loc=0.3)
        logg = stats.norm.logpdf(y, loc=-0.3)  # symmetric: equal expected score
        rej_ag += ag_test(logf, logg, y, "NW")["p_value"] < 0.05

    rej_dm = 0
    for _ in range(reps):
        # symmetric median forecasts around a symmetric law: equal expected loss
        y = rng.standard_normal(300)
        li = (y - 0.4) * (0.5 - (y < 0.4))
        lj = (y + 0.4) * (0.5 - (y < -0.4))
        rej_dm += dm_test(li, lj)["p_value"] < 0.05

    elapsed = time.monotonic() - t0
    sizes = {"berkowitz": rej_berk / reps, "xi_w": rej_xi / reps,
             "slope_eq": rej_slope / reps, "ag": rej_ag / reps, "dm": rej_dm / reps}
    ok = all(0.025 <= s <= 0.08 for s in sizes.values()) and elapsed < 1800
    report(7, ok, f"empirical sizes at nominal 5%: " +
           ", ".join(f"{k}={v:.1%}" for k, v in sizes.items()) +
           f"; band [2.5%, 8%]; runtime {elapsed:.0f}s (tol 1800s)")
    for name, size in sizes.items():
        assert 0.025 <= size <= 0.08, f"{name} size {size:.3f}"
    assert elapsed < 1800


def test_criterion_08_density_self_consistency():
    taus = DEFAULT_TAU_GRID
    curve = QuantileCurve(taus=taus, q=0.7 + 1.9 * stats.norm.ppf(taus))
    draws = sample(curve, 10_000, np.random.default_rng(17_000))
    pits = np.array([curve.cdf(v) for v in draws])
    ks_p = stats.kstest(pits, "uniform").pvalue
    total, _ = integrate.quad(lambda v: math.exp(curve.log_density(v)), -80, 80,
                              limit=500, points=list(curve.q))
    ok = ks_p > 0.01 and abs(total - 1.0) <= 1e-6
    report(8, ok, f"KS uniformity p = {ks_p:.3f} (tol > 0.01) on 1e4 draws; "
                  f"density integral = {total:.8f} (tol 1 +- 1e-6)")
    assert ks_p > 0.01
    assert abs(total - 1.0) <= 1e-6


def test_criterion_09_benchmark_recovery():
    from test_benchmark import TRUE_GARCH, TRUE_MEAN

    truth = np.concatenate([TRUE_MEAN, TRUE_GARCH])
    successes = 0
    reps = 100
    for r in range(reps):
        rng = np.random.default_rng(18_000 + r)
        design = simulate_harx_gjr(5000, TRUE_MEAN, *TRUE_GARCH, rng)
        params = fit_harx_gjr(design, "gaussian")
        est = np.concatenate([params.mean_coefs,
                              [params.omega, params.alpha, params.gamma, params.beta]])
        if np.all(np.isfinite(params.se)) and np.all(np.abs(est - truth) <= 3 * params.se):
            successes += 1
    rate = successes / reps

    checks = []
    for a, b in [(1.5, 0.0), (2.0, 0.8)]:
        total, _ = integrate.quad(lambda x: math.exp(nig_logpdf(x, a, b)), -40, 40, limit=400)
        mean, _ = integrate.quad(lambda x: x * math.exp(nig_logpdf(x, a, b)), -40, 40, limit=400)
        var, _ = integrate.quad(lambda x: x * x * math.exp(nig_logpdf(x, a, b)), -60, 60, limit=400)
        checks.append((abs(total - 1) <= 1e-6, abs(mean) <= 1e-6, abs(var - 1) <= 1e-5))
    nig_ok = all(all(c) for c in checks)
    ok = rate >= 0.9 and nig_ok
    report(9, ok, f"parameter recovery within 3 SEs in {rate:.0%} of {reps} "
                  f"replications (tol >= 90%); NIG integral/mean/variance checks: {nig_ok}")
    assert rate >= 0.9
    assert nig_ok


def _location_scale_panel(seed: int, n: int = 1000):
    """Synthetic daily panel whose conditional quantile slopes vary with tau.

    Location-scale design: the scale rides the (serially independent) jump
    regressor, so the quantile slopes on that column vary strongly with tau
    and a residual-driven variance recursion cannot anticipate it, while the
    bimodal innovation denies any single-Gaussian shape.  Conditional
    quantiles remain exactly linear in the design columns.
    """
    rng = np.random.default_rng(seed)
    mode_loc, mode_sd = 1.3, 0.35
    s_eps = math.sqrt(mode_loc**2 + mode_sd**2)
    vix = np.empty(n)
    lv = math.log(18.0)
    for t in range(n):
        lv = math.log(18.0) + 0.9 * (lv - math.log(18.0)) + 0.10 * rng.standard_normal()
        vix[t] = lv
    sp500 = 0.01 * rng.standard_normal(n)
    jump = np.abs(0.4 * rng.standard_normal(n)) * (rng.random(n) < 0.3)
    y = np.empty(n)
    hist = [1.0] * 5
    for t in range(n):
        j_prev = jump[t - 1] if t else 0.0
        loc = (0.2 + 0.35 * hist[-1] + 0.15 * np.mean(hist[-5:])
               + 0.05 * (vix[t - 1] if t else vix[0]))
        scale = 0.10 + 0.35 * j_prev
        mode = mode_loc if rng.random() < 0.5 else -mode_loc
        y[t] = loc + scale * (mode + mode_sd * rng.standard_normal()) / s_eps
        hist.append(float(y[t]))
    return build_design(
        y=pd.Series(y), vix=pd.Series(vix), sp500=pd.Series(sp500), jump=pd.Series(jump)
    )


def test_criterion_10_end_to_end_discrimination():
    # estimation window 500: at 100 the quantile-estimation noise of the
    # 49-level curve (~0.3 nats/day measured) exceeds any realistic shape
    # handicap of the Gaussian benchmark and no DGP separates the models
    t0 = time.monotonic()
    reps, hits = 50, 0
    details = []
    for r in range(reps):
        design = _location_scale_panel(19_000 + r)
        taus = DEFAULT_TAU_GRID
        model = rolling_quantile_forecasts(design, window=500, step=10, taus=taus)
        bench = rolling_benchmark_forecasts(design, window=500, step=10, taus=taus,
                                            innov="gaussian")
        rep = evaluate_forecasts(model, bench, taus, dm_taus=(0.9,))
        ag_nw = rep.ag["NW"]["stat"]
        dm_09 = rep.dm[0.9]["stat"]
        win = ag_nw > 1.645 and dm_09 < -1.645
        hits += win
        details.append((round(ag_nw, 2), round(dm_09, 2)))
    rate = hits / reps
    elapsed = time.monotonic() - t0
    ok = rate >= 0.7
    report(10, ok, f"quantile densities beat the Gaussian HARX-GJR benchmark "
                   f"(AG_NW > 1.645 and DM_0.9 < -1.645) in {rate:.0%} of {reps} "
                   f"replications (tol >= 70%); runtime {elapsed:.0f}s")
    assert rate >= 0.7


def test_criterion_11_rolling_window_counts():
    from rangequant.quantreg import roll

    ok_formula = (n_windows(2608, 500, 1) == 2109) and (n_windows(600, 100, 10) == 51)
    design = make_design(600, seed=20_000)
    result = roll(design, (0.5,), window=100, step=10)
    ok = ok_formula and result.count == 51
    report(11, ok, f"floor((2608-500)/1)+1 = {n_windows(2608, 500, 1)} (expect 2109); "
                   f"floor((600-100)/10)+1 = {n_windows(600, 100, 10)} (expect 51); "
                   f"roll() produced {result.count} windows")
    assert ok_formula
    assert result.count == 51
