"""Scoring and comparing sequences of density and quantile forecasts.

* Berkowitz LR: the PIT sequence, mapped through the normal inverse,
  should be iid N(0,1); the alternative is a Gaussian AR(1) with free
  mean and variance, so the LR has three degrees of freedom.  The AR(1)
  likelihood is exact, including the stationary first-observation term.
* Amisano-Giacomini: weighted log-score differences, studentised with a
  Newey-West long-run variance; five weight designs emphasise the
  centre, both tails, the right tail, the left tail, or nothing.
* Diebold-Mariano: the same studentisation applied to pinball-loss
  differences of two quantile forecast sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .density import PIT_CLIP
from .errors import DegenerateStatisticError, DomainError, LengthError

__all__ = [
    "EvalReport",
    "berkowitz",
    "pit_to_z",
    "ag_test",
    "dm_test",
    "newey_west",
    "hac_lags",
    "AG_WEIGHTS",
]

_MIN_OBS = 30


def hac_lags(n: int) -> int:
    """Automatic Bartlett bandwidth floor(4 (n/100)^{2/9})."""
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def newey_west(series, lags: int) -> float:
    """Bartlett-kernel long-run variance about the sample mean, floored at 0."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if lags < 0 or lags >= n:
        raise DomainError("need 0 <= lags < len(series)")
    d = x - x.mean()
    gamma0 = float(d @ d) / n
    acc = gamma0
    for lag in range(1, lags + 1):
        gamma = float(d[lag:] @ d[:-lag]) / n
        acc += 2.0 * (1.0 - lag / (lags + 1.0)) * gamma
    return max(acc, 0.0)


def pit_to_z(pit_values) -> np.ndarray:
    """Normal inverse of PIT values after clipping away the open-interval ends."""
    p = np.clip(np.asarray(pit_values, dtype=float), PIT_CLIP, 1.0 - PIT_CLIP)
    return stats.norm.ppf(p)


def _gaussian_ar1_loglik(z: np.ndarray, mu: float, sigma: float, rho: float) -> float:
    # exact likelihood: stationary N(mu, sigma^2/(1-rho^2)) first term,
    # conditional one-step terms after
    n = len(z)
    var_stat = sigma**2 / (1.0 - rho**2)
    ll = -0.5 * (math.log(2 * math.pi * var_stat) + (z[0] - mu) ** 2 / var_stat)
    resid = z[1:] - mu - rho * (z[:-1] - mu)
    ll += -0.5 * (n - 1) * math.log(2 * math.pi * sigma**2)
    ll += -0.5 * float(resid @ resid) / sigma**2
    return ll


def berkowitz(z) -> dict[str, float]:
    """LR test of z ~ iid N(0,1) against a Gaussian AR(1) alternative."""
    z = np.asarray(z, dtype=float)
    if len(z) < _MIN_OBS:
        raise LengthError(f"berkowitz needs >= {_MIN_OBS} observations")
    if not np.all(np.isfinite(z)):
        raise DomainError("z contains non-finite values")

    def negll(params):
        mu, log_sigma, atanh_rho = params
        sigma = math.exp(log_sigma)
        rho = math.tanh(atanh_rho)
        return -_gaussian_ar1_loglik(z, mu, sigma, rho)

    r1 = float(np.corrcoef(z[1:], z[:-1])[0, 1]) if np.std(z) > 0 else 0.0
    r1 = float(np.clip(r1, -0.97, 0.97))
    starts = [
        np.array([z.mean(), math.log(max(z.std(), 1e-6)), math.atanh(r1)]),
        np.zeros(3),
    ]
    best = None
    for x0 in starts:
        res = optimize.minimize(negll, x0, method="Nelder-Mead",
                                options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    ll_alt = -best.fun
    ll_null = _gaussian_ar1_loglik(z, 0.0, 1.0, 0.0)
    lr = max(2.0 * (ll_alt - ll_null), 0.0)  # null is nested in the alternative
    mu_hat, log_sigma_hat, atanh_rho_hat = best.x
    return {
        "lr": lr,
        "df": 3,
        "p_value": float(stats.chi2.sf(lr, 3)),
        "mu_hat": float(mu_hat),
        "sigma_hat": float(math.exp(log_sigma_hat)),
        "rho_hat": float(math.tanh(atanh_rho_hat)),
    }


AG_WEIGHTS = ("NW", "CE", "TL", "RT", "LT")


def _ag_weight(y_std: np.ndarray, weight: str) -> np.ndarray:
    if weight == "NW":
        return np.ones_like(y_std)
    if weight == "CE":
        return stats.norm.pdf(y_std)
    if weight == "TL":
        return 1.0 - stats.norm.pdf(y_std) / stats.norm.pdf(0.0)
    if weight == "RT":
        return stats.norm.cdf(y_std)
    if weight == "LT":
        return 1.0 - stats.norm.cdf(y_std)
    raise DomainError(f"unknown weight {weight!r}; pick one of {AG_WEIGHTS}")


def _studentise(d: np.ndarray) -> tuple[float, float, float]:
    n = len(d)
    mean = float(d.mean())
    lrv = newey_west(d, hac_lags(n))
    if lrv <= 0:
        raise DegenerateStatisticError("long-run variance of the differential is zero")
    stat = mean / math.sqrt(lrv / n)
    return stat, 2.0 * float(stats.norm.sf(abs(stat))), mean


def ag_test(logf, logg, y_std, weight: str = "NW") -> dict[str, float]:
    """Weighted log-score comparison of two density forecast sequences.

    ``y_std`` must be the realizations standardised with the estimation
    sample's unconditional mean and standard deviation.  Positive statistic
    favours the first sequence.
    """
    logf = np.asarray(logf, dtype=float)
    logg = np.asarray(logg, dtype=float)
    y_std = np.asarray(y_std, dtype=float)
    if not (len(logf) == len(logg) == len(y_std)):
        raise LengthError("sequences must have equal length")
    if len(logf) < _MIN_OBS:
        raise LengthError(f"ag_test needs >= {_MIN_OBS} observations")
    wlr = _ag_weight(y_std, weight) * (logf - logg)
    stat, p_value, mean_wlr = _studentise(wlr)
    return {"stat": stat, "p_value": p_value, "mean_wlr": mean_wlr}


def dm_test(loss_i, loss_j) -> dict[str, float]:
    """Equal predictive ability test on a loss differential sequence."""
    loss_i = np.asarray(loss_i, dtype=float)
    loss_j = np.asarray(loss_j, dtype=float)
    if len(loss_i) != len(loss_j):
        raise LengthError("loss sequences must have equal length")
    if len(loss_i) < _MIN_OBS:
        raise LengthError(f"dm_test needs >= {_MIN_OBS} observations")
    stat, p_value, mean_diff = _studentise(loss_i - loss_j)
    return {"stat": stat, "p_value": p_value, "mean_diff": mean_diff}


@dataclass(frozen=True)
class EvalReport:
    """Berkowitz, weighted log-score and quantile-loss comparisons for one run."""

    lr_b: dict[str, float]
    ag: dict[str, dict[str, float]]
    dm: dict[float, dict[str, float]]
    n_eval: int

    def rows(self, model: str) -> list[dict]:
        out = [{
            "model": model, "test": "berkowitz", "variant": "",
            "stat": self.lr_b["lr"], "p_value": self.lr_b["p_value"], "n": self.n_eval,
        }]
        for name, rec in self.ag.items():
            out.append({"model": model, "test": "ag", "variant": name,
                        "stat": rec["stat"], "p_value": rec["p_value"], "n": self.n_eval})
        for tau, rec in self.dm.items():
            out.append({"model": model, "test": "dm", "variant": f"tau={tau:g}",
                        "stat": rec["stat"], "p_value": rec["p_value"], "n": self.n_eval})
        return out
