"""Ground-truth price path generator for estimator testing.

Generates days of a Brownian semimartingale on the fine N = n*m grid,
optionally with square-root stochastic variance, compound-Poisson jumps
and iid microstructure noise on every observed price.  The true
integrated variance of each day is returned alongside the observed
(noisy, jumpy) path, so estimator bias and RMSE can be measured exactly.

The default noise law is the two-point +-omega distribution that the
bias-corrected bipower's tilde moments are simulated under; Gaussian
noise of the same variance is available as an option.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DomainError
from .ingest import IntradayDay
from .rangevol import LambdaGrid, LambdaTable, day_estimates

__all__ = ["SimSpec", "SimDay", "simulate", "estimator_mc"]

_BASE_DATE = dt.date(2003, 1, 2)


@dataclass(frozen=True)
class SimSpec:
    """Configuration for the path generator; deterministic per seed."""

    n: int = 78
    m: int = 5
    days: int = 250
    sigma: float = 0.01             # daily diffusion scale (constant-vol model)
    vol_model: str = "constant"     # "constant" or "sqrt_diffusion"
    mean_reversion: float = 5.0     # sqrt-diffusion: pull toward long_run_var
    long_run_var: float = 1e-4
    vol_of_vol: float = 0.02        # keep 2*kappa*theta >= xi^2 (Feller)
    jump_intensity: float = 0.0     # expected jumps per day
    jump_sd: float = 0.0            # jump size standard deviation (log scale)
    noise_omega: float = 0.0        # noise scale on observed log prices
    noise_law: str = "two_point"    # "two_point" (+-omega) or "gaussian"
    drift: float = 0.0
    p0: float = np.log(100.0)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.days < 0:
            raise DomainError("n, m must be positive and days nonnegative")
        if min(self.sigma, self.jump_intensity, self.jump_sd, self.noise_omega) < 0:
            raise DomainError("scale parameters must be nonnegative")
        if self.vol_model not in ("constant", "sqrt_diffusion"):
            raise DomainError(f"unknown vol_model {self.vol_model!r}")
        if self.noise_law not in ("two_point", "gaussian"):
            raise DomainError(f"unknown noise_law {self.noise_law!r}")


@dataclass(frozen=True)
class SimDay:
    """One simulated day with its latent truth."""

    day: IntradayDay
    iv_true: float
    jumps_sq_sum: float
    n_jumps: int


def _variance_path(spec: SimSpec, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    if spec.vol_model == "constant":
        return np.full(n_steps, spec.sigma**2)
    # full-truncation Euler for dv = kappa(theta - v)dt + xi sqrt(v) dW
    dt_step = 1.0 / n_steps
    v = np.empty(n_steps)
    level = spec.long_run_var
    for i in range(n_steps):
        v[i] = max(level, 0.0)
        level = (
            level
            + spec.mean_reversion * (spec.long_run_var - max(level, 0.0)) * dt_step
            + spec.vol_of_vol * np.sqrt(max(level, 0.0) * dt_step) * rng.standard_normal()
        )
    return v


def _one_day(spec: SimSpec, date: dt.date, rng: np.random.Generator) -> SimDay:
    n_steps = spec.n * spec.m
    dt_step = 1.0 / n_steps
    var = _variance_path(spec, n_steps, rng)
    increments = (
        spec.drift * dt_step
        + np.sqrt(var * dt_step) * rng.standard_normal(n_steps)
    )
    clean = spec.p0 + np.concatenate([[0.0], np.cumsum(increments)])
    iv_true = float(var.sum() * dt_step)

    n_jumps = int(rng.poisson(spec.jump_intensity)) if spec.jump_intensity > 0 else 0
    jumps_sq = 0.0
    path = clean
    if n_jumps > 0:
        times = rng.uniform(0.0, 1.0, n_jumps)
        sizes = rng.normal(0.0, spec.jump_sd, n_jumps)
        jumps_sq = float(sizes @ sizes)
        step = np.zeros(n_steps + 1)
        for t_j, size in zip(times, sizes):
            # a jump at time t hits every price observed strictly after t
            first = int(np.floor(t_j * n_steps)) + 1
            step[first:] += size
        path = clean + step

    if spec.noise_omega > 0:
        if spec.noise_law == "two_point":
            eta = spec.noise_omega * rng.choice([-1.0, 1.0], size=n_steps + 1)
        else:
            eta = rng.normal(0.0, spec.noise_omega, n_steps + 1)
        path = path + eta

    day = IntradayDay(date=date, prices=path, m=spec.m)
    return SimDay(day=day, iv_true=iv_true, jumps_sq_sum=jumps_sq, n_jumps=n_jumps)


def simulate(spec: SimSpec) -> list[SimDay]:
    """Generate ``spec.days`` independent days; per-day split RNG streams."""
    streams = np.random.SeedSequence(spec.seed).spawn(spec.days)
    out = []
    for i, child in enumerate(streams):
        date = _BASE_DATE + dt.timedelta(days=i)
        out.append(_one_day(spec, date, np.random.default_rng(child)))
    return out


def write_intraday_csv(days: list[SimDay], path: str) -> None:
    """Emit simulated days in the intraday CSV format the loader reads.

    Bars are spread over the 09:30-16:00 session on a whole-second grid,
    which caps a day at 23 401 observations.
    """
    session = 6 * 3600 + 30 * 60
    rows = []
    for sim in days:
        n_obs = len(sim.day.prices)
        if n_obs > session + 1:
            raise DomainError("more bars than seconds in the trading session")
        for j, logp in enumerate(sim.day.prices):
            sec = 9 * 3600 + 30 * 60 + (j * session) // max(n_obs - 1, 1)
            time = f"{sec // 3600:02d}:{(sec // 60) % 60:02d}:{sec % 60:02d}"
            rows.append((sim.day.date.isoformat(), time, np.exp(logp)))
    frame = pd.DataFrame(rows, columns=["date", "time", "price"])
    frame.to_csv(path, index=False, float_format="%.12f")


def write_truth_csv(days: list[SimDay], path: str) -> None:
    frame = pd.DataFrame(
        {
            "date": [s.day.date.isoformat() for s in days],
            "iv_true": [s.iv_true for s in days],
            "n_jumps": [s.n_jumps for s in days],
            "jumps_sq_sum": [s.jumps_sq_sum for s in days],
        }
    )
    frame.to_csv(path, index=False, float_format="%.12g")


_KNOWN_ESTIMATORS = ("rv", "rv_sparse", "rrv", "rbv", "rrv_bvbc")


def estimator_mc(
    spec: SimSpec,
    lt: LambdaTable | LambdaGrid,
    estimators: tuple[str, ...] = ("rv", "rrv", "rbv", "rrv_bvbc"),
) -> pd.DataFrame:
    """Bias, RMSE and relative RMSE of estimators against the true IV.

    ``rv_sparse`` is the realized variance on the subinterval close grid
    (one price per subinterval), the sampling set the range estimators'
    efficiency gain is measured against.
    """
    for name in estimators:
        if name not in _KNOWN_ESTIMATORS:
            raise DomainError(f"unknown estimator {name!r}")
    sims = simulate(spec)
    rows = {name: [] for name in estimators}
    iv = []
    for sim in sims:
        est = day_estimates(sim.day, lt)
        iv.append(sim.iv_true)
        for name in estimators:
            if name == "rv_sparse":
                closes = sim.day.prices[:: sim.day.m]
                r = np.diff(closes)
                rows[name].append(float(r @ r))
            else:
                rows[name].append(getattr(est, name))
    iv_arr = np.array(iv)
    records = []
    for name in estimators:
        err = np.array(rows[name]) - iv_arr
        if len(err) == 0:
            continue
        records.append(
            {
                "estimator": name,
                "bias": float(err.mean()),
                "rel_bias": float(np.mean(err / iv_arr)),
                "rmse": float(np.sqrt(np.mean(err**2))),
                "rel_rmse": float(np.sqrt(np.mean((err / iv_arr) ** 2))),
                "mean_abs_rel_err": float(np.mean(np.abs(err) / iv_arr)),
                "n_days": len(err),
            }
        )
    return pd.DataFrame.from_records(
        records,
        columns=["estimator", "bias", "rel_bias", "rmse", "rel_rmse",
                 "mean_abs_rel_err", "n_days"],
    )
