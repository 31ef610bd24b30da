"""Model inputs: cross-asset principal component and lagged design matrices.

The market factor is the first principal component of the per-asset
volatility panel, taken on the covariance matrix of levels (not the
correlation matrix) so the score keeps volatility units, with the sign
fixed so that higher average volatility means a higher score.

Design matrices follow the heterogeneous-autoregression layout: today's
response is explained by yesterday's value, the trailing five-day mean
ending yesterday, and yesterday's covariates.  Row t therefore uses only
information dated t-1 or earlier; the first five dates are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import AlignmentError, DegenerateInputError, DomainError

DESIGN_COLUMNS = ("const", "lag1", "mean5", "vix", "sp500", "jump")

__all__ = ["PcaResult", "QuantDesign", "first_pc", "har_mean", "build_design",
           "DESIGN_COLUMNS"]


@dataclass(frozen=True)
class PcaResult:
    loadings: np.ndarray          # unit norm, sum >= 0
    scores: np.ndarray            # centred data projected on loadings
    explained_fraction: float

    def __post_init__(self):
        if abs(np.linalg.norm(self.loadings) - 1.0) > 1e-10:
            raise DomainError("loadings must have unit norm")


def first_pc(panel: np.ndarray | pd.DataFrame) -> PcaResult:
    """First principal component of the columns' covariance matrix.

    Columns are centred but not standardised.  The loading sign is chosen
    so the loadings sum is nonnegative.
    """
    values = panel.to_numpy() if isinstance(panel, pd.DataFrame) else np.asarray(panel, dtype=float)
    if values.ndim != 2 or values.shape[1] < 2 or values.shape[0] < 3:
        raise DomainError("need a 2-d panel with >= 3 rows and >= 2 columns")
    if not np.all(np.isfinite(values)):
        raise DomainError("panel contains non-finite values")
    centred = values - values.mean(axis=0)
    cov = np.cov(centred, rowvar=False, ddof=1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    total = float(eigvals.sum())
    if total <= 0 or eigvals[-1] <= 0:
        raise DegenerateInputError("panel has no variation")
    loadings = eigvecs[:, -1]
    if loadings.sum() < 0:
        loadings = -loadings
    scores = centred @ loadings
    return PcaResult(
        loadings=loadings,
        scores=scores,
        explained_fraction=float(eigvals[-1] / total),
    )


def har_mean(y, t: int, m: int) -> float:
    """Mean of the m values ending at (1-based) index t: (y_{t-m+1}+...+y_t)/m."""
    y = np.asarray(y, dtype=float)
    if m < 1:
        raise DomainError("m must be a positive integer")
    if t < m or t > len(y):
        raise IndexError(f"t={t} out of range for m={m}, len={len(y)}")
    return float(y[t - m : t].mean())


@dataclass(frozen=True)
class QuantDesign:
    """Response vector, design matrix and date index for quantile fits.

    Column order is fixed: const, lag1, mean5, then the covariates; row t
    carries y_t against regressors dated t-1 (lag1 = y_{t-1}, mean5 the
    5-day mean ending at t-1).
    """

    y: np.ndarray
    X: np.ndarray
    dates: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self):
        if self.X.shape[0] != len(self.y) or self.X.shape[0] != len(self.dates):
            raise AlignmentError("y, X and dates must have equal length")
        if self.X.shape[1] != len(self.column_names):
            raise AlignmentError("column_names must match X's width")

    @property
    def n_obs(self) -> int:
        return len(self.y)

    def subset(self, names: tuple[str, ...]) -> "QuantDesign":
        """Restricted design keeping the named columns (const always kept)."""
        keep = [i for i, c in enumerate(self.column_names) if c in names or c == "const"]
        return QuantDesign(
            y=self.y,
            X=self.X[:, keep],
            dates=self.dates,
            column_names=tuple(self.column_names[i] for i in keep),
        )

    def window(self, start: int, stop: int) -> "QuantDesign":
        return QuantDesign(
            y=self.y[start:stop],
            X=self.X[start:stop],
            dates=self.dates[start:stop],
            column_names=self.column_names,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=list(self.column_names))
        frame.insert(0, "date", self.dates)
        frame["y"] = self.y
        return frame


def _as_array(series, name: str, length: int | None) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(series, pd.Series):
        values = series.to_numpy(dtype=float)
        idx = series.index.to_numpy()
    else:
        values = np.asarray(series, dtype=float)
        idx = None
    if length is not None and len(values) != length:
        raise AlignmentError(f"{name} has length {len(values)}, expected {length}")
    return values, idx


def build_design(y, vix, sp500, jump, dates=None) -> QuantDesign:
    """Assemble the lagged design from equal-length date-aligned series.

    Inputs may be pandas Series (indices must agree and ascend) or plain
    arrays with an optional explicit ``dates`` vector.
    """
    y_arr, y_idx = _as_array(y, "y", None)
    length = len(y_arr)
    if length < 7:
        raise AlignmentError("need at least 7 observations (5 lags + 2 rows)")
    arrays = {"y": y_arr}
    indices = {"y": y_idx}
    for name, series in (("vix", vix), ("sp500", sp500), ("jump", jump)):
        arrays[name], indices[name] = _as_array(series, name, length)
    idx_ref = indices["y"] if dates is None else np.asarray(dates)
    for name, idx in indices.items():
        if idx is not None and idx_ref is not None and not np.array_equal(idx, idx_ref):
            raise AlignmentError(f"{name} index differs from y's")
    if idx_ref is None:
        idx_ref = np.arange(length)
    if len(idx_ref) != length:
        raise AlignmentError("dates length differs from series length")
    if np.any(idx_ref[1:] <= idx_ref[:-1]):
        raise AlignmentError("dates must be strictly ascending")

    rows = np.arange(5, length)  # response index t (0-based); needs y_{t-5..t-1}
    lag1 = arrays["y"][rows - 1]
    mean5 = np.array([arrays["y"][t - 5 : t].mean() for t in rows])
    X = np.column_stack(
        [
            np.ones(len(rows)),
            lag1,
            mean5,
            arrays["vix"][rows - 1],
            arrays["sp500"][rows - 1],
            arrays["jump"][rows - 1],
        ]
    )
    return QuantDesign(
        y=arrays["y"][rows],
        X=X,
        dates=idx_ref[rows],
        column_names=DESIGN_COLUMNS,
    )
