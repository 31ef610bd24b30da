"""Loading, aligning and describing the daily input data.

Intraday bar files are CSV with columns ``date,time,price`` (date
``YYYY-MM-DD``, time ``HH:MM`` or ``HH:MM:SS``, price on the raw scale).
Daily covariate files are CSV with columns ``date,value``.  Prices are
converted to natural logs on load; a day whose bar count does not fit
the configured subinterval width is rejected with a diagnostic rather
than padded, since fabricated flat segments bias range statistics.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    AlignmentError,
    DomainError,
    EmptyInputError,
    LengthError,
    ParseError,
)

logger = logging.getLogger(__name__)

__all__ = [
    "IntradayDay",
    "DailyPanel",
    "LoadResult",
    "AlignResult",
    "load_intraday",
    "load_daily",
    "daily_return",
    "describe",
    "align",
]


@dataclass(frozen=True)
class IntradayDay:
    """One trading day's log-price grid: n subintervals of m prices each.

    ``prices`` has length n*m + 1 including the opening price; ``n`` is
    derived from the array length and validated against ``m``.
    """

    date: dt.date
    prices: np.ndarray
    m: int
    n: int = field(init=False)

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "prices", prices)
        if self.m < 1:
            raise DomainError("m must be a positive integer")
        if prices.ndim != 1 or len(prices) < 2:
            raise DomainError("prices must be a 1-d sequence with >= 2 points")
        if not np.all(np.isfinite(prices)):
            raise DomainError(f"{self.date}: non-finite log price")
        n_ret = len(prices) - 1
        if n_ret % self.m != 0:
            raise DomainError(
                f"{self.date}: {n_ret} returns not divisible by m={self.m}"
            )
        object.__setattr__(self, "n", n_ret // self.m)

    @property
    def n_returns(self) -> int:
        return len(self.prices) - 1

    @property
    def open_price(self) -> float:
        return float(self.prices[0])

    @property
    def close_price(self) -> float:
        return float(self.prices[-1])


@dataclass(frozen=True)
class LoadResult:
    """Days that passed validation plus (date, reason) for rejected ones."""

    days: list[IntradayDay]
    rejected: list[tuple[dt.date, str]]

    def __iter__(self):
        return iter(self.days)

    def __len__(self):
        return len(self.days)


def _parse_date(text: str, lineno: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError as exc:
        raise ParseError(f"line {lineno}: bad date {text!r}") from exc


def _parse_time(text: str, lineno: int) -> dt.time:
    text = text.strip()
    for fmt in ("%H:%M:%S", "%H:%M"):
        try:
            return dt.datetime.strptime(text, fmt).time()
        except ValueError:
            continue
    raise ParseError(f"line {lineno}: bad time {text!r}")


def load_intraday(path: str, m: int) -> LoadResult:
    """Load an intraday bar CSV into one IntradayDay per trading date.

    Raises on malformed rows, non-positive prices and empty files; days
    failing the bar-count divisibility check are rejected, not fatal.
    """
    if m < 1:
        raise DomainError("m must be a positive integer")
    by_day: dict[dt.date, list[float]] = {}
    last_time: dict[dt.date, dt.time] = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise EmptyInputError(f"{path} is empty")
        if [c.strip().lower() for c in header[:3]] != ["date", "time", "price"]:
            raise ParseError(f"line 1: expected header date,time,price, got {header}")
        n_rows = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 3:
                raise ParseError(f"line {lineno}: expected 3 fields, got {len(row)}")
            date = _parse_date(row[0], lineno)
            time = _parse_time(row[1], lineno)
            try:
                price = float(row[2])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: bad price {row[2]!r}") from exc
            if not math.isfinite(price) or price <= 0:
                raise DomainError(f"line {lineno}: non-positive price {price}")
            prev = last_time.get(date)
            if prev is not None and time <= prev:
                raise ParseError(f"line {lineno}: time not increasing within {date}")
            last_time[date] = time
            by_day.setdefault(date, []).append(math.log(price))
            n_rows += 1
    if n_rows == 0:
        raise EmptyInputError(f"{path} has a header but no data rows")

    days: list[IntradayDay] = []
    rejected: list[tuple[dt.date, str]] = []
    for date in sorted(by_day):
        prices = np.array(by_day[date])
        n_ret = len(prices) - 1
        if n_ret < 1 or n_ret % m != 0:
            reason = f"{len(prices)} bars ({n_ret} returns) do not fit m={m}"
            rejected.append((date, reason))
            logger.warning("%s: rejected (%s)", date, reason)
            continue
        days.append(IntradayDay(date=date, prices=prices, m=m))
    return LoadResult(days=days, rejected=rejected)


def load_daily(path: str, name: str = "value") -> pd.Series:
    """Load a ``date,value`` CSV into a float series indexed by date."""
    frame = pd.read_csv(path)
    if frame.empty:
        raise EmptyInputError(f"{path} has no data rows")
    cols = [c.strip().lower() for c in frame.columns[:2]]
    if cols != ["date", "value"]:
        raise ParseError(f"{path}: expected header date,value, got {list(frame.columns)}")
    idx = pd.to_datetime(frame.iloc[:, 0]).dt.date
    series = pd.Series(frame.iloc[:, 1].astype(float).to_numpy(), index=idx, name=name)
    return series


def daily_return(day_t_close: float, day_t1_close: float) -> float:
    """Log return between consecutive raw-scale close prices."""
    if day_t_close <= 0 or day_t1_close <= 0:
        raise DomainError("close prices must be positive")
    return math.log(day_t1_close) - math.log(day_t_close)


def describe(series) -> dict[str, float]:
    """Mean, sd (n-1 divisor), median, IQR, skewness and raw kurtosis.

    Skewness and kurtosis are the standardised third and fourth central
    moments (kurtosis not excess); both are NaN for a constant series.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or len(x) < 4:
        raise LengthError("describe needs a 1-d series of length >= 4")
    mean = float(x.mean())
    centred = x - mean
    m2 = float(np.mean(centred**2))
    if m2 > 0:
        skew = float(np.mean(centred**3)) / m2**1.5
        kurt = float(np.mean(centred**4)) / m2**2
    else:
        skew = math.nan
        kurt = math.nan
    q25, q50, q75 = np.quantile(x, [0.25, 0.5, 0.75])
    return {
        "mean": mean,
        "sd": float(x.std(ddof=1)),
        "median": float(q50),
        "iqr": float(q75 - q25),
        "skewness": skew,
        "kurtosis": kurt,
    }


@dataclass(frozen=True)
class DailyPanel:
    """Aligned daily series on a shared ascending date index, no gaps."""

    frame: pd.DataFrame

    def __post_init__(self):
        if self.frame.isna().any().any():
            raise AlignmentError("panel contains missing values")
        idx = list(self.frame.index)
        if idx != sorted(idx):
            raise AlignmentError("panel index must be ascending")

    @property
    def dates(self) -> list[dt.date]:
        return list(self.frame.index)

    @property
    def columns(self) -> list[str]:
        return list(self.frame.columns)

    def column(self, name: str) -> np.ndarray:
        return self.frame[name].to_numpy()

    def __len__(self):
        return len(self.frame)


@dataclass(frozen=True)
class AlignResult:
    panel: DailyPanel
    dropped: dict[str, list[dt.date]]


def align(series_by_name: dict[str, pd.Series]) -> AlignResult:
    """Inner-join named series on their date indices, ascending.

    Rows missing from any input are dropped; the result reports the
    dropped dates per input.  An empty intersection is an error.
    """
    if not series_by_name:
        raise AlignmentError("no series to align")
    common = None
    for name, series in series_by_name.items():
        idx = set(series.index)
        common = idx if common is None else common & idx
    if not common:
        raise AlignmentError("date indices have empty intersection")
    dates = sorted(common)
    data = {}
    dropped = {}
    for name, series in series_by_name.items():
        series = series[~series.index.duplicated()]
        data[name] = series.reindex(dates).to_numpy()
        dropped[name] = sorted(set(series.index) - common)
    frame = pd.DataFrame(data, index=dates)
    return AlignResult(panel=DailyPanel(frame=frame), dropped=dropped)
