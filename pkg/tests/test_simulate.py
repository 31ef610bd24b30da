import numpy as np
import pytest

from rangequant.errors import DomainError
from rangequant.ingest import load_intraday
from rangequant.rangevol import noise_variance, realized_variance
from rangequant.simulate import (
    SimSpec,
    estimator_mc,
    simulate,
    write_intraday_csv,
    write_truth_csv,
)


class TestSimulate:
    def test_deterministic_per_seed(self):
        spec = SimSpec(n=26, m=5, days=8, sigma=0.01, jump_intensity=0.4,
                       jump_sd=0.02, noise_omega=1e-4, seed=5)
        a = simulate(spec)
        b = simulate(spec)
        for da, db in zip(a, b):
            assert np.array_equal(da.day.prices, db.day.prices)
            assert da.iv_true == db.iv_true

    def test_no_jumps_when_intensity_zero(self):
        spec = SimSpec(n=26, m=5, days=30, sigma=0.01, jump_intensity=0.0, seed=6)
        for sim in simulate(spec):
            assert sim.n_jumps == 0 and sim.jumps_sq_sum == 0.0

    def test_rv_consistency(self):
        spec = SimSpec(n=468, m=5, days=800, sigma=0.02, seed=7)
        rel = [abs(realized_variance(s.day) - s.iv_true) / s.iv_true
               for s in simulate(spec)]
        assert np.mean(rel) < 0.05

    def test_constant_sigma_iv_exact(self):
        spec = SimSpec(n=26, m=5, days=3, sigma=0.013, seed=8)
        for sim in simulate(spec):
            assert sim.iv_true == pytest.approx(0.013**2, rel=1e-12)

    def test_sqrt_diffusion_feller_and_iv(self):
        spec = SimSpec(n=78, m=5, days=50, vol_model="sqrt_diffusion", seed=9)
        sims = simulate(spec)
        ivs = np.array([s.iv_true for s in sims])
        assert np.all(ivs > 0)
        assert ivs.std() > 0  # variance actually moves

    def test_noise_variance_recovery(self):
        spec = SimSpec(n=4680, m=5, days=5, sigma=0.01, noise_omega=5e-4, seed=10)
        est = np.mean([noise_variance(s.day) for s in simulate(spec)])
        assert est == pytest.approx(5e-4**2, rel=0.05)

    def test_rrv_error_matches_asymptotic_variance(self, grid_m5):
        # sqrt(n)-scaled RRV errors should have variance Lambda_m sigma^4
        from rangequant.rangevol import realized_range_variance

        spec = SimSpec(n=100, m=5, days=5000, sigma=0.01, seed=11)
        errs = np.array([
            np.sqrt(100) * (realized_range_variance(s.day, grid_m5) - s.iv_true)
            for s in simulate(spec)
        ])
        target = grid_m5.big_lambda * 0.01**4
        assert errs.var() == pytest.approx(target, rel=0.10)

    def test_invalid_spec(self):
        with pytest.raises(DomainError):
            SimSpec(n=0)
        with pytest.raises(DomainError):
            SimSpec(noise_law="laplace")
        with pytest.raises(DomainError):
            SimSpec(sigma=-0.1)


class TestEstimatorMc:
    def test_noise_and_jumps_favour_bias_corrected(self, grid_m5):
        spec = SimSpec(n=468, m=5, days=500, sigma=0.01, jump_intensity=1.0,
                       jump_sd=0.03, noise_omega=5e-4, seed=12)
        tab = estimator_mc(spec, grid_m5).set_index("estimator")
        assert tab.loc["rrv_bvbc", "rmse"] < tab.loc["rrv", "rmse"]
        assert tab.loc["rrv_bvbc", "rmse"] < tab.loc["rbv", "rmse"]

    def test_clean_data_range_beats_sparse_rv(self, grid_m5):
        spec = SimSpec(n=468, m=5, days=500, sigma=0.2, seed=13)
        tab = estimator_mc(spec, grid_m5, ("rv_sparse", "rrv")).set_index("estimator")
        assert tab.loc["rrv", "rmse"] < tab.loc["rv_sparse", "rmse"]

    def test_zero_days_empty_table(self, grid_m5):
        spec = SimSpec(n=26, m=5, days=0, sigma=0.01, seed=14)
        tab = estimator_mc(spec, grid_m5)
        assert tab.empty

    def test_unknown_estimator(self, grid_m5):
        with pytest.raises(DomainError):
            estimator_mc(SimSpec(days=1), grid_m5, ("rv", "vrr"))


class TestCsvRoundtrip:
    def test_intraday_roundtrip(self, tmp_path, grid_m5):
        spec = SimSpec(n=26, m=5, days=4, sigma=0.01, jump_intensity=0.5,
                       jump_sd=0.02, noise_omega=2e-4, seed=15)
        sims = simulate(spec)
        path = tmp_path / "bars.csv"
        write_intraday_csv(sims, str(path))
        loaded = load_intraday(str(path), m=5)
        assert len(loaded.days) == 4 and not loaded.rejected
        for sim, day in zip(sims, loaded.days):
            assert day.date == sim.day.date
            assert np.max(np.abs(day.prices - sim.day.prices)) < 1e-11

    def test_truth_csv(self, tmp_path):
        import pandas as pd

        spec = SimSpec(n=26, m=5, days=4, sigma=0.01, jump_intensity=2.0,
                       jump_sd=0.02, seed=16)
        sims = simulate(spec)
        path = tmp_path / "truth.csv"
        write_truth_csv(sims, str(path))
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["date", "iv_true", "n_jumps", "jumps_sq_sum"]
        assert frame.n_jumps.sum() == sum(s.n_jumps for s in sims)
