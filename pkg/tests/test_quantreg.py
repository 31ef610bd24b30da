import itertools
import math

import numpy as np
import pytest
from scipy import sparse, stats
from scipy.optimize import linprog

from conftest import make_design
from rangequant.errors import (
    CovarianceError,
    DomainError,
    LengthError,
    SingularDesignError,
)
from rangequant.features import QuantDesign
from rangequant.quantreg import (
    bootstrap,
    fit,
    joint_bootstrap,
    n_windows,
    pinball,
    pseudo_r1,
    roll,
    slope_equality_test,
    xi_w_test,
)


def intercept_design(y):
    y = np.asarray(y, dtype=float)
    return QuantDesign(y=y, X=np.ones((len(y), 1)), dates=np.arange(len(y)),
                       column_names=("const",))


def lower_quantile_oracle(y, tau):
    """Left endpoint of the pinball minimiser set, by scan over order stats."""
    ys = np.sort(np.asarray(y, dtype=float))
    best = None
    for c in ys:
        obj = pinball(ys - c, tau).sum()
        if best is None or obj < best[1] - 1e-12:
            best = (c, obj)
    return best[0]


class TestPinball:
    @pytest.mark.parametrize("tau", [0.1, 0.5, 0.9])
    def test_zero(self, tau):
        assert pinball(0.0, tau) == 0.0

    def test_median_symmetry(self):
        assert pinball(2.0, 0.5) == 1.0
        assert pinball(-2.0, 0.5) == 1.0

    def test_asymmetry(self):
        assert pinball(1.0, 0.9) == pytest.approx(0.9)
        assert pinball(-1.0, 0.9) == pytest.approx(0.1)

    def test_tau_domain(self):
        with pytest.raises(DomainError):
            pinball(1.0, 0.0)
        with pytest.raises(DomainError):
            pinball(1.0, 1.0)

    def test_nonnegative_vectorised(self):
        u = np.linspace(-5, 5, 101)
        assert np.all(pinball(u, 0.3) >= 0)


class TestFitExactness:
    @pytest.mark.parametrize("n,tau", [(20, 0.5), (20, 0.25), (21, 0.1), (50, 0.9),
                                       (10, 0.4), (37, 0.62)])
    def test_intercept_only_is_lower_quantile(self, n, tau):
        y = np.random.default_rng(n).standard_normal(n)
        res = fit(intercept_design(y), tau)
        assert res.beta[0] == lower_quantile_oracle(y, tau)

    def test_intercept_only_integer_position(self):
        # n*tau integer: the minimiser set is an interval; take its left end
        y = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
        res = fit(intercept_design(y), 0.5)
        assert res.beta[0] == 4.0

    def test_small_instance_oracle_equivalence(self):
        # exhaustive search over basic solutions: lines through point pairs
        rng = np.random.default_rng(123)
        for trial in range(12):
            n = rng.integers(6, 13)
            x = rng.uniform(-1, 3, n)
            y = 0.5 + 1.5 * x + rng.standard_normal(n)
            X = np.column_stack([np.ones(n), x])
            tau = [0.2, 0.5, 0.8][trial % 3]
            best = math.inf
            for i, j in itertools.combinations(range(n), 2):
                if x[i] == x[j]:
                    continue
                slope = (y[j] - y[i]) / (x[j] - x[i])
                inter = y[i] - slope * x[i]
                best = min(best, float(pinball(y - inter - slope * x, tau).sum()))
            design = QuantDesign(y=y, X=X, dates=np.arange(n),
                                 column_names=("const", "x"))
            res = fit(design, tau)
            assert res.objective == pytest.approx(best, abs=1e-8)

    def test_objective_matches_highs(self):
        for seed, tau in [(1, 0.1), (2, 0.5), (3, 0.9), (4, 0.35)]:
            design = make_design(300, seed=seed)
            res = fit(design, tau)
            n, p = design.X.shape
            c = np.concatenate([np.zeros(p), tau * np.ones(n), (1 - tau) * np.ones(n)])
            A = sparse.hstack(
                [sparse.csc_matrix(design.X), sparse.eye(n), -sparse.eye(n)], format="csc")
            ref = linprog(c, A_eq=A, b_eq=design.y,
                          bounds=[(None, None)] * p + [(0, None)] * (2 * n),
                          method="highs")
            assert res.objective == pytest.approx(ref.fun, rel=1e-8)

    def test_location_scale_slope_recovery(self):
        # y = 1 + 2x + (1 + 0.5x) eps: the tau-slope is 2 + 0.5 z_tau
        # (slope sd ~ 0.04 at this n, so the 0.1 tolerance is ~2.6 sigma)
        design = make_design(10_000, seed=2, k=1, hetero=0.5)
        for tau in (0.1, 0.5, 0.9):
            res = fit(design, tau)
            target = 2.0 + 0.5 * stats.norm.ppf(tau)
            assert res.beta[1] == pytest.approx(target, abs=0.1)

    def test_objective_recomputable(self):
        design = make_design(400, seed=11)
        res = fit(design, 0.3)
        recomputed = pinball(design.y - design.X @ res.beta, 0.3).sum()
        assert res.objective == pytest.approx(recomputed, rel=1e-8)

    def test_beats_ols_under_pinball(self):
        design = make_design(300, seed=13, hetero=0.5)
        beta_ols = np.linalg.lstsq(design.X, design.y, rcond=None)[0]
        for tau in (0.25, 0.75):
            res = fit(design, tau)
            ols_obj = pinball(design.y - design.X @ beta_ols, tau).sum()
            assert res.objective <= ols_obj + 1e-10

    def test_quantile_count_invariant(self):
        for seed, tau in [(5, 0.1), (6, 0.5), (7, 0.9), (8, 0.77)]:
            design = make_design(400, seed=seed, hetero=0.3)
            res = fit(design, tau)
            below = np.mean(design.y < design.X @ res.beta)
            slack = (design.X.shape[1] + 1) / design.n_obs
            assert tau - slack <= below <= tau + slack

    def test_equivariance_affine_response(self):
        design = make_design(350, seed=17)
        res = fit(design, 0.7)
        scaled = QuantDesign(y=3.5 * design.y + 2.0, X=design.X, dates=design.dates,
                             column_names=design.column_names)
        res2 = fit(scaled, 0.7)
        expected = 3.5 * res.beta
        expected[0] += 2.0
        assert res2.beta == pytest.approx(expected, abs=1e-6)

    def test_nesting_never_hurts_objective(self):
        design = make_design(300, seed=19, hetero=0.4)
        restricted = design.subset(("x1",))
        for tau in (0.2, 0.5, 0.8):
            assert fit(design, tau).objective <= fit(restricted, tau).objective + 1e-9

    def test_rank_deficient(self):
        n = 100
        x = np.random.default_rng(0).standard_normal(n)
        X = np.column_stack([np.ones(n), x, 2 * x])
        design = QuantDesign(y=x, X=X, dates=np.arange(n),
                             column_names=("const", "a", "b"))
        with pytest.raises(SingularDesignError):
            fit(design, 0.5)

    def test_needs_enough_observations(self):
        design = make_design(300, seed=1).window(0, 6)
        with pytest.raises(LengthError):
            fit(design, 0.5)

    def test_tau_domain(self):
        design = make_design(50, seed=1)
        with pytest.raises(DomainError):
            fit(design, 1.2)


class TestBootstrap:
    def test_deterministic(self):
        design = make_design(200, seed=23)
        a = bootstrap(design, 0.5, B=200, seed=99)
        b = bootstrap(design, 0.5, B=200, seed=99)
        assert np.array_equal(a.se, b.se)
        assert np.array_equal(a.p_values, b.p_values)

    def test_doubled_data_same_beta(self):
        design = make_design(150, seed=29)
        doubled = QuantDesign(
            y=np.concatenate([design.y, design.y]),
            X=np.vstack([design.X, design.X]),
            dates=np.arange(300),
            column_names=design.column_names,
        )
        res1 = fit(design, 0.25)
        res2 = fit(doubled, 0.25)
        assert res2.beta == pytest.approx(res1.beta, abs=1e-7)
        assert res2.objective == pytest.approx(2 * res1.objective, rel=1e-9)

    def test_minimum_replications(self):
        with pytest.raises(DomainError):
            bootstrap(make_design(100, seed=1), 0.5, B=100, seed=0)

    def test_strong_coefficient_significant(self):
        design = make_design(800, seed=31)
        rep = bootstrap(design, 0.5, B=200, seed=5)
        names = design.column_names
        assert rep.p_values[names.index("x1")] < 0.01
        assert rep.se[names.index("x1")] > 0

    def test_zero_coefficient_size(self):
        # x2 has a zero true coefficient: its p-value should usually be large
        hits = 0
        for seed in range(12):
            design = make_design(500, seed=100 + seed)
            rep = bootstrap(design, 0.5, B=200, seed=seed)
            if rep.p_values[design.column_names.index("x2")] > 0.05:
                hits += 1
        assert hits >= 10


class TestPseudoR1:
    def test_intercept_only_zero(self):
        y = np.random.default_rng(5).standard_normal(80)
        res = fit(intercept_design(y), 0.3)
        assert pseudo_r1(res, y, 0.3) == pytest.approx(0.0, abs=1e-12)

    def test_perfect_fit(self):
        design = make_design(100, seed=37)
        y = design.X @ np.array([1.0, 2.0, -0.5])
        exact = QuantDesign(y=y, X=design.X, dates=design.dates,
                            column_names=design.column_names)
        res = fit(exact, 0.5)
        assert pseudo_r1(res, y, 0.5) == pytest.approx(1.0, abs=1e-9)

    def test_nested_ordering(self):
        design = make_design(400, seed=41, hetero=0.4)
        restricted = design.subset(("x2",))
        for tau in (0.1, 0.5, 0.9):
            r_full = pseudo_r1(fit(design, tau), design.y, tau)
            r_res = pseudo_r1(fit(restricted, tau), design.y, tau)
            assert 0.0 <= r_res <= r_full <= 1.0

    def test_constant_response_degenerate(self):
        from rangequant.errors import DegenerateInputError

        y = np.ones(50)
        res = fit(intercept_design(y), 0.5)
        with pytest.raises(DegenerateInputError):
            pseudo_r1(res, y, 0.5)


class TestXiW:
    def test_empty_restriction(self):
        design = make_design(200, seed=43)
        res = fit(design, 0.5)
        rep = bootstrap(design, 0.5, B=200, seed=1)
        with pytest.raises(DomainError):
            xi_w_test(res, rep, ())

    def test_strong_coefficient_rejected(self):
        design = make_design(2000, seed=47)
        res = fit(design, 0.5)
        rep = bootstrap(design, 0.5, B=250, seed=2)
        out = xi_w_test(res, rep, ("x1",))
        assert out["p_value"] < 0.01 and out["df"] == 1

    def test_zero_subset_not_rejected_mostly(self):
        hits = 0
        for seed in range(10):
            design = make_design(400, seed=300 + seed)
            res = fit(design, 0.5)
            rep = bootstrap(design, 0.5, B=200, seed=seed)
            if xi_w_test(res, rep, ("x2",))["p_value"] > 0.05:
                hits += 1
        assert hits >= 8

    def test_intercept_not_restrictable(self):
        design = make_design(200, seed=49)
        res = fit(design, 0.5)
        rep = bootstrap(design, 0.5, B=200, seed=3)
        with pytest.raises(DomainError):
            xi_w_test(res, rep, ("const",))


class TestSlopeEquality:
    def test_single_tau_rejected(self):
        design = make_design(300, seed=53)
        jb = joint_bootstrap(design, [0.5], B=200, seed=1)
        with pytest.raises(DomainError):
            slope_equality_test([fit(design, 0.5)], jb)

    def test_location_shift_accepts(self):
        # iid errors: slopes are constant across quantiles
        design = make_design(700, seed=59, hetero=0.0)
        taus = (0.25, 0.5, 0.75)
        jb = joint_bootstrap(design, taus, B=200, seed=7)
        out = slope_equality_test([fit(design, t) for t in taus], jb)
        assert out["p_value"] > 0.01

    def test_location_scale_rejects(self):
        design = make_design(2000, seed=61, k=1, hetero=0.5)
        taus = (0.1, 0.5, 0.9)
        jb = joint_bootstrap(design, taus, B=200, seed=8)
        out = slope_equality_test([fit(design, t) for t in taus], jb)
        assert out["p_value"] < 0.05
        assert out["per_coefficient"]["x1"] < 0.05

    def test_mismatched_taus(self):
        design = make_design(300, seed=67)
        jb = joint_bootstrap(design, (0.3, 0.7), B=200, seed=9)
        with pytest.raises(DomainError):
            slope_equality_test([fit(design, 0.25), fit(design, 0.7)], jb)


class TestRoll:
    def test_window_counts(self):
        assert n_windows(510, 500, 1) == 11
        assert n_windows(600, 100, 10) == 51

    def test_roll_output_shape(self):
        design = make_design(160, seed=71)
        result = roll(design, (0.25, 0.75), window=100, step=20)
        assert result.count == n_windows(160, 100, 20) == 4
        assert result.coef_cube.shape == (4, 2, 3)
        assert not result.failures
        assert len(result.end_dates) == 4

    def test_window_exceeds_sample(self):
        with pytest.raises(DomainError):
            n_windows(90, 100, 1)

    def test_stationary_coefficients_stable(self):
        design = make_design(900, seed=73)
        result = roll(design, (0.5,), window=300, step=100)
        slopes = result.coef_cube[:, 0, 1]
        rep = bootstrap(design.window(0, 300), 0.5, B=200, seed=4)
        band = 4 * rep.se[1]
        assert np.all(np.abs(slopes - 2.0) < band + 0.2)
