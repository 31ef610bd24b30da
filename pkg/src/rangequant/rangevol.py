"""Range-based daily volatility estimators and their simulated moment tables.

For one trading day on [0, 1], split into n subintervals of m fine steps
each (N = n*m intraday returns), the estimators are built from the
per-subinterval high-low ranges of the log price,

    s_i = max p - min p   over the (m+1)-point grid of subinterval i,

and from the moments lambda_{r,m} = E[range of a standard Brownian motion
observed on an (m+1)-point unit-interval grid]^r, which have no closed
form for finite m and are obtained by Monte Carlo (Christensen &
Podolskij 2007; Christensen, Podolskij & Vetter 2009).

Estimators:

* realized variance          RV    = sum of squared fine-grid returns
* realized range variance    RRV   = sum(s_i^2) / lambda_2
* range bipower variation    RBV   = sum(s_i s_{i+1}) / lambda_1^2
* range quad-power quarticity RQQ  = n * sum(s_i s_{i+1} s_{i+2} s_{i+3}) / lambda_1^4
* noise variance             w2    = RV / (2N)
* bias-corrected bipower     RRV_BVBC = sum |s_i - 2w| |s_{i+1} - 2w| / tilde_lambda_1^2
* jump ratio statistic       Z_TP, asymptotically N(0,1) under no jumps

RBV is normalised by lambda_1^2 because E[s_i s_{i+1}] = lambda_1^2 sigma^2 dt
for independent adjacent subintervals; only that normalisation makes
RBV/RRV -> 1 under the no-jump null that Z_TP is built on.

The noise-adjusted moments tilde_lambda_r are simulated jointly with the
clean ones: with iid +-omega noise on every observed price, the observed
range is that of W + rho*b (b = noise signs, rho = omega in units of the
subinterval's sigma*sqrt(dt)), and the statistic matched to the estimator
is |observed range - 2*rho|.  Tables are tabulated on a grid of rho and
interpolated at the per-day plug-in ratio 2*w_hat / mean(s_i).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import _mc
from .errors import (
    ConfigError,
    DegenerateStatisticError,
    DomainError,
    LengthError,
)
from .ingest import IntradayDay

DEFAULT_N_PATHS = 1_000_000
DEFAULT_RATIO_GRID = np.round(np.arange(0.0, 1.0 + 1e-9, 0.05), 2)

__all__ = [
    "LambdaTable",
    "LambdaGrid",
    "DayEstimates",
    "lambda_table",
    "lambda_grid",
    "save_tables",
    "load_tables",
    "cached_lambda_grid",
    "realized_variance",
    "realized_range_variance",
    "range_bipower",
    "range_quadpower",
    "noise_variance",
    "rrv_bvbc",
    "jump_stat",
    "day_estimates",
    "subinterval_ranges",
]


@dataclass(frozen=True)
class LambdaTable:
    """Simulated moments of the grid-observed Brownian range.

    ``lam[r-1]`` holds lambda_{r,m} for r = 1..4; ``tilde1``/``tilde2`` hold
    the noise-adjusted first and second moments at ``omega_ratio``.
    """

    m: int
    lam: np.ndarray
    tilde1: float
    tilde2: float
    n_paths: int
    seed: int
    omega_ratio: float = 0.0

    def __post_init__(self):
        if self.m < 1:
            raise DomainError("m must be a positive integer")
        if np.any(self.lam <= 0):
            raise DomainError("range moments must be positive")

    @property
    def lam1(self) -> float:
        return float(self.lam[0])

    @property
    def lam2(self) -> float:
        return float(self.lam[1])

    @property
    def lam3(self) -> float:
        return float(self.lam[2])

    @property
    def lam4(self) -> float:
        return float(self.lam[3])

    @property
    def big_lambda(self) -> float:
        """Variance coefficient (lambda_4 - lambda_2^2) / lambda_2^2 of RRV."""
        return (self.lam4 - self.lam2**2) / self.lam2**2

    def nu(self) -> float:
        """Variance coefficient of the studentised RRV-RBV difference.

        Sum of the RRV coefficient, the RBV coefficient and minus twice the
        cross coefficient, each for the lambda-normalised estimator.  At
        m = 1 this reduces to the familiar 0.6090 of the return-based
        bipower ratio test.
        """
        l1, l2, l3, l4 = self.lam
        lam_r = (l4 - l2**2) / l2**2
        lam_b = (l2**2 + 2 * l1**2 * l2 - 3 * l1**4) / l1**4
        lam_rb = (2 * l3 * l1 - 2 * l2 * l1**2) / (l2 * l1**2)
        return lam_r + lam_b - 2 * lam_rb

    def tilde_at(self, rho: float) -> tuple[float, float]:
        """Noise-adjusted moments at a requested ratio (single-point table)."""
        if not math.isclose(rho, self.omega_ratio, abs_tol=1e-9):
            raise ConfigError(
                f"table was simulated at omega_ratio={self.omega_ratio}, not {rho}"
            )
        return self.tilde1, self.tilde2


@dataclass(frozen=True)
class LambdaGrid:
    """A family of noise-adjusted moments on an omega-ratio grid.

    Carries the clean moments once (they do not depend on the ratio) and
    linearly interpolates tilde_lambda between grid points.  Ratios outside
    the grid are clamped to its ends.
    """

    m: int
    lam: np.ndarray
    ratios: np.ndarray
    tilde1: np.ndarray
    tilde2: np.ndarray
    n_paths: int
    seed: int

    @property
    def base(self) -> LambdaTable:
        return LambdaTable(
            m=self.m,
            lam=self.lam,
            tilde1=float(self.tilde1[0]),
            tilde2=float(self.tilde2[0]),
            n_paths=self.n_paths,
            seed=self.seed,
            omega_ratio=float(self.ratios[0]),
        )

    def tilde_at(self, rho: float) -> tuple[float, float]:
        rho = float(np.clip(rho, self.ratios[0], self.ratios[-1]))
        t1 = float(np.interp(rho, self.ratios, self.tilde1))
        t2 = float(np.interp(rho, self.ratios, self.tilde2))
        return t1, t2

    # estimator code only reads these four, so either table type works
    lam1 = LambdaTable.lam1
    lam2 = LambdaTable.lam2
    lam3 = LambdaTable.lam3
    lam4 = LambdaTable.lam4
    big_lambda = LambdaTable.big_lambda
    nu = LambdaTable.nu


def lambda_table(
    m: int, n_paths: int = DEFAULT_N_PATHS, seed: int = 0, omega_ratio: float = 0.0
) -> LambdaTable:
    """Simulate the range moment table for one m and one noise ratio.

    Deterministic: the same (m, n_paths, seed, omega_ratio) gives a
    bit-identical table.
    """
    if m < 1 or n_paths < 1:
        raise DomainError("m and n_paths must be positive")
    if omega_ratio < 0:
        raise DomainError("omega_ratio must be nonnegative")
    if omega_ratio == 0.0:
        sums = _mc.range_moment_sums(m, n_paths, seed)
        lam = sums / n_paths
        # with zero noise the adjusted statistic is the clean range itself
        return LambdaTable(m, lam, float(lam[0]), float(lam[1]), n_paths, seed, 0.0)
    lam_s, t1, t2 = _mc.range_moment_sums_noisy(
        m, n_paths, seed, np.array([omega_ratio])
    )
    return LambdaTable(
        m,
        lam_s / n_paths,
        float(t1[0] / n_paths),
        float(t2[0] / n_paths),
        n_paths,
        seed,
        float(omega_ratio),
    )


def lambda_grid(
    m: int,
    n_paths: int = DEFAULT_N_PATHS,
    seed: int = 0,
    ratios: np.ndarray | None = None,
) -> LambdaGrid:
    """Simulate clean moments plus tilde moments on a ratio grid in one pass."""
    if m < 1 or n_paths < 1:
        raise DomainError("m and n_paths must be positive")
    ratios = DEFAULT_RATIO_GRID if ratios is None else np.asarray(ratios, dtype=float)
    if ratios.ndim != 1 or len(ratios) < 1 or np.any(np.diff(ratios) <= 0):
        raise DomainError("ratios must be a strictly increasing 1-d grid")
    if ratios[0] < 0:
        raise DomainError("ratios must be nonnegative")
    lam_s, t1, t2 = _mc.range_moment_sums_noisy(m, n_paths, seed, ratios)
    return LambdaGrid(
        m, lam_s / n_paths, ratios, t1 / n_paths, t2 / n_paths, n_paths, seed
    )


# ---------------------------------------------------------------------------
# CSV cache: m,r,kind,value,n_paths,seed,omega_ratio


def save_tables(grid: LambdaGrid | LambdaTable, path: str) -> None:
    """Append a table (or a full grid) to the CSV cache at ``path``."""
    rows = []
    if isinstance(grid, LambdaGrid):
        for r in range(1, 5):
            rows.append((grid.m, r, "lambda", grid.lam[r - 1], grid.n_paths, grid.seed, 0.0))
        for k, rho in enumerate(grid.ratios):
            rows.append((grid.m, 1, "lambda_tilde", grid.tilde1[k], grid.n_paths, grid.seed, rho))
            rows.append((grid.m, 2, "lambda_tilde", grid.tilde2[k], grid.n_paths, grid.seed, rho))
    else:
        for r in range(1, 5):
            rows.append((grid.m, r, "lambda", grid.lam[r - 1], grid.n_paths, grid.seed, grid.omega_ratio))
        rows.append((grid.m, 1, "lambda_tilde", grid.tilde1, grid.n_paths, grid.seed, grid.omega_ratio))
        rows.append((grid.m, 2, "lambda_tilde", grid.tilde2, grid.n_paths, grid.seed, grid.omega_ratio))
    frame = pd.DataFrame(
        rows, columns=["m", "r", "kind", "value", "n_paths", "seed", "omega_ratio"]
    )
    header = not os.path.exists(path)
    frame.to_csv(path, mode="a", header=header, index=False, float_format="%.17g")


def load_tables(path: str, m: int, n_paths: int, seed: int) -> LambdaGrid | None:
    """Load a cached grid matching (m, n_paths, seed); None when absent."""
    if not os.path.exists(path):
        return None
    frame = pd.read_csv(path, float_precision="round_trip")
    sel = frame[(frame.m == m) & (frame.n_paths == n_paths) & (frame.seed == seed)]
    if sel.empty:
        return None
    lam_rows = sel[sel.kind == "lambda"].drop_duplicates(["r"]).sort_values("r")
    if len(lam_rows) != 4:
        return None
    tilde = sel[sel.kind == "lambda_tilde"]
    t1 = tilde[tilde.r == 1].drop_duplicates(["omega_ratio"]).sort_values("omega_ratio")
    t2 = tilde[tilde.r == 2].drop_duplicates(["omega_ratio"]).sort_values("omega_ratio")
    if len(t1) == 0 or list(t1.omega_ratio) != list(t2.omega_ratio):
        return None
    return LambdaGrid(
        m=int(m),
        lam=lam_rows.value.to_numpy(),
        ratios=t1.omega_ratio.to_numpy(),
        tilde1=t1.value.to_numpy(),
        tilde2=t2.value.to_numpy(),
        n_paths=int(n_paths),
        seed=int(seed),
    )


def cached_lambda_grid(
    m: int,
    n_paths: int = DEFAULT_N_PATHS,
    seed: int = 0,
    cache_path: str | None = None,
    ratios: np.ndarray | None = None,
) -> LambdaGrid:
    """Load the grid from the CSV cache, simulating and persisting on a miss."""
    if cache_path is not None:
        cached = load_tables(cache_path, m, n_paths, seed)
        if cached is not None:
            return cached
    grid = lambda_grid(m, n_paths, seed, ratios)
    if cache_path is not None:
        save_tables(grid, cache_path)
    return grid


# ---------------------------------------------------------------------------
# Per-day estimators


def subinterval_ranges(day: IntradayDay) -> np.ndarray:
    """High-low range of the log price over each subinterval's (m+1)-point grid."""
    p = day.prices
    blocks = np.lib.stride_tricks.sliding_window_view(p, day.m + 1)[:: day.m]
    return blocks.max(axis=1) - blocks.min(axis=1)


def realized_variance(day: IntradayDay) -> float:
    """Sum of squared consecutive log-price differences on the full fine grid."""
    if len(day.prices) < 2:
        raise LengthError("need at least two prices")
    r = np.diff(day.prices)
    return float(r @ r)


def realized_range_variance(day: IntradayDay, lt: LambdaTable | LambdaGrid) -> float:
    _check_m(day, lt)
    s = subinterval_ranges(day)
    return float(s @ s) / lt.lam2


def range_bipower(day: IntradayDay, lt: LambdaTable | LambdaGrid) -> float:
    _check_m(day, lt)
    if day.n < 2:
        raise LengthError("range bipower needs at least two subintervals")
    s = subinterval_ranges(day)
    return float(s[:-1] @ s[1:]) / lt.lam1**2


def range_quadpower(day: IntradayDay, lt: LambdaTable | LambdaGrid) -> float:
    _check_m(day, lt)
    n = day.n
    if n < 4:
        raise LengthError("quad-power quarticity needs at least four subintervals")
    s = subinterval_ranges(day)
    prod = s[: n - 3] * s[1 : n - 2] * s[2 : n - 1] * s[3:]
    return n * float(prod.sum()) / lt.lam1**4


def noise_variance(day: IntradayDay) -> float:
    """RV / (2N): reads the fine-grid realized variance as pure noise.

    Consistent for the noise variance when noise dominates fine returns;
    on noise-free data it shrinks to zero at rate 1/N but stays positive,
    so the plug-in bias correction slightly over-corrects clean samples.
    """
    n_ret = len(day.prices) - 1
    return realized_variance(day) / (2.0 * n_ret)


def rrv_bvbc(
    day: IntradayDay, lt: LambdaTable | LambdaGrid, omega2: float
) -> float:
    """Bias-corrected range bipower variation under noise and jumps.

    Each range is shrunk by twice the noise scale, and the normalisation
    uses the tilde moments at the day's plug-in noise ratio
    2*w_hat / mean(s_i) (interpolated when ``lt`` is a grid).
    """
    _check_m(day, lt)
    if omega2 < 0:
        raise DomainError("omega2 must be nonnegative")
    if day.n < 2:
        raise LengthError("bias-corrected bipower needs at least two subintervals")
    s = subinterval_ranges(day)
    w_hat = math.sqrt(omega2)
    mean_s = float(s.mean())
    rho = 2.0 * w_hat / mean_s if mean_s > 0 else 0.0
    t1, _ = lt.tilde_at(rho)
    adj = np.abs(s - 2.0 * w_hat)
    val = float(adj[:-1] @ adj[1:]) / t1**2
    return max(val, 0.0)


def _z_tp(rrv: float, rbv: float, rqq: float, n: int, lt: LambdaTable | LambdaGrid) -> float:
    if rrv <= 0:
        raise DegenerateStatisticError("jump statistic undefined when RRV is zero")
    if rbv == 0.0:
        return math.inf  # ranges vanish next to a lone jump: certain jump
    quart = max(rqq / rbv**2, 1.0)
    # n/(n-1) rescales the (n-1)-term bipower sum onto the n-term range sum;
    # without it the ratio carries an exact 1/n mean shift under the null
    ratio = (n / (n - 1.0)) * rbv / rrv
    return math.sqrt(n) * (1.0 - ratio) / math.sqrt(lt.nu() * quart)


def jump_stat(day: IntradayDay, lt: LambdaTable | LambdaGrid) -> float:
    """Studentised RRV-vs-RBV ratio statistic, N(0,1) under no jumps."""
    rrv = realized_range_variance(day, lt)
    rbv = range_bipower(day, lt)
    rqq = range_quadpower(day, lt)
    return _z_tp(rrv, rbv, rqq, day.n, lt)


@dataclass(frozen=True)
class DayEstimates:
    """All estimator outputs for one day; ``jump = rrv - rrv_bvbc`` exactly."""

    rv: float
    rrv: float
    rbv: float
    rqq: float
    omega2: float
    rrv_bvbc: float
    z_tp: float
    jump: float = field(init=False)

    def __post_init__(self):
        for name in ("rv", "rrv", "rbv", "rqq", "omega2", "rrv_bvbc"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")
        object.__setattr__(self, "jump", self.rrv - self.rrv_bvbc)


def day_estimates(day: IntradayDay, lt: LambdaTable | LambdaGrid) -> DayEstimates:
    """Compute every estimator for one day.

    ``z_tp`` is NaN when RRV is zero (constant prices), +inf when RBV is
    zero while RRV is not.  ``jump`` may be negative in finite samples and
    is recorded as-is.
    """
    rv = realized_variance(day)
    rrv = realized_range_variance(day, lt)
    rbv = range_bipower(day, lt)
    rqq = range_quadpower(day, lt)
    omega2 = noise_variance(day)
    bvbc = rrv_bvbc(day, lt, omega2)
    if rrv <= 0:
        z = math.nan
    else:
        z = _z_tp(rrv, rbv, rqq, day.n, lt)
    return DayEstimates(rv=rv, rrv=rrv, rbv=rbv, rqq=rqq, omega2=omega2,
                        rrv_bvbc=bvbc, z_tp=z)


def _check_m(day: IntradayDay, lt: LambdaTable | LambdaGrid) -> None:
    if day.m != lt.m:
        raise ConfigError(f"lambda table has m={lt.m}, day has m={day.m}")
