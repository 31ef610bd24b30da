"""Full predictive distributions from a grid of conditional quantiles.

A forecast day's quantile predictions on the tau grid (49 points,
0.02..0.98 by default) are rearranged to be monotone, linearly
interpolated into a CDF between the knots, and closed with exponential
tails that carry exactly the leftover mass (tau_min on the left,
1 - tau_max on the right) while matching the boundary knot's density.
The implied density is piecewise constant between knots, so log-scores,
PIT values and simulation from the curve's own law are all exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

DEFAULT_TAU_GRID = np.round(np.arange(0.02, 0.98 + 1e-9, 0.02), 10)
PIT_CLIP = 1e-9  # keeps the normal inverse finite downstream

__all__ = ["QuantileCurve", "rearrange", "cdf", "log_density", "pit",
           "quantile", "sample", "DEFAULT_TAU_GRID", "PIT_CLIP"]


def rearrange(q_raw) -> tuple[np.ndarray, int]:
    """Sort predicted quantiles ascending; report the crossing count.

    The count is the number of pairwise order violations (bubble-sort
    swaps), zero for already monotone input.
    """
    q_raw = np.asarray(q_raw, dtype=float)
    i, j = np.triu_indices(len(q_raw), k=1)
    crossings = int(np.sum(q_raw[i] > q_raw[j]))
    return np.sort(q_raw, kind="stable"), crossings


@dataclass(frozen=True)
class QuantileCurve:
    """Monotone map tau -> quantile with exponential tail closure.

    ``q_raw`` may cross; construction rearranges it and keeps the crossing
    diagnostic.  Zero-width knot intervals get their implied density
    capped, and the CDF there follows the midpoint convention.
    """

    taus: np.ndarray
    q: np.ndarray
    crossings: int = 0
    _left_rate: float = field(init=False, repr=False)
    _right_rate: float = field(init=False, repr=False)

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if taus.ndim != 1 or len(taus) < 2:
            raise DomainError("need at least two quantile levels")
        if np.any(taus <= 0) or np.any(taus >= 1) or np.any(np.diff(taus) <= 0):
            raise DomainError("taus must be ascending inside (0, 1)")
        if len(q) != len(taus):
            raise DomainError("taus and quantiles must have equal length")
        if not np.all(np.isfinite(q)):
            raise DomainError("quantiles must be finite")
        if np.any(np.diff(q) < 0):
            raise DomainError("quantiles must be nondecreasing; use from_raw")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "q", q)
        eps = self._width_floor()
        # exponential tails: mass tau_0 (left), 1 - tau_K (right), rate set so
        # the tail density is continuous with the boundary knot interval.  The
        # boundary width is floored at 0.1% of the curve's span: a collapsed
        # outer knot pair must not turn the tail into a near point mass, or a
        # single realization beyond it destroys every log-score comparison.
        span = float(q[-1] - q[0])
        tail_floor = max(eps, 1e-3 * span)
        f_left = (taus[1] - taus[0]) / max(q[1] - q[0], tail_floor)
        f_right = (taus[-1] - taus[-2]) / max(q[-1] - q[-2], tail_floor)
        object.__setattr__(self, "_left_rate", f_left / taus[0])
        object.__setattr__(self, "_right_rate", f_right / (1.0 - taus[-1]))

    @classmethod
    def from_raw(cls, q_raw, taus=None) -> "QuantileCurve":
        taus = DEFAULT_TAU_GRID if taus is None else np.asarray(taus, dtype=float)
        q_sorted, crossings = rearrange(q_raw)
        return cls(taus=taus, q=q_sorted, crossings=crossings)

    def _width_floor(self) -> float:
        scale = max(float(self.q[-1] - self.q[0]), float(np.abs(self.q).max()), 1e-30)
        return 1e-10 * scale

    # -- CDF ---------------------------------------------------------------

    def cdf(self, v: float) -> float:
        q, taus = self.q, self.taus
        if v < q[0]:
            out = taus[0] * math.exp(self._left_rate * (v - q[0]))
            return max(out, 1e-300)
        if v > q[-1]:
            out = 1.0 - (1.0 - taus[-1]) * math.exp(-self._right_rate * (v - q[-1]))
            return min(out, 1.0 - 1e-16)
        left = int(np.searchsorted(q, v, side="left"))
        right = int(np.searchsorted(q, v, side="right"))
        if right - left >= 2:
            # v sits on a flat knot run (a point mass): midpoint convention
            return float(0.5 * (taus[left] + taus[right - 1]))
        if right - left == 1:
            return float(taus[left])
        j = right - 1
        lo, hi = q[j], q[j + 1]
        frac = (v - lo) / (hi - lo)
        return float(taus[j] + frac * (taus[j + 1] - taus[j]))

    # -- density -----------------------------------------------------------

    def log_density(self, v: float) -> float:
        q, taus = self.q, self.taus
        eps = self._width_floor()
        if v < q[0]:
            rate = self._left_rate
            return math.log(taus[0] * rate) + rate * (v - q[0])
        if v > q[-1]:
            rate = self._right_rate
            return math.log((1.0 - taus[-1]) * rate) - rate * (v - q[-1])
        j = int(np.searchsorted(q, v, side="right")) - 1
        j = max(0, min(j, len(q) - 2))
        width = max(q[j + 1] - q[j], eps)
        return math.log((taus[j + 1] - taus[j]) / width)

    # -- inverse -----------------------------------------------------------

    def quantile(self, prob: float) -> float:
        if not 0.0 < prob < 1.0:
            raise DomainError("probability must lie inside (0, 1)")
        q, taus = self.q, self.taus
        if prob <= taus[0]:
            return float(q[0] + math.log(prob / taus[0]) / self._left_rate)
        if prob >= taus[-1]:
            return float(q[-1] - math.log((1.0 - prob) / (1.0 - taus[-1])) / self._right_rate)
        j = int(np.searchsorted(taus, prob, side="right")) - 1
        j = min(j, len(taus) - 2)
        frac = (prob - taus[j]) / (taus[j + 1] - taus[j])
        return float(q[j] + frac * (q[j + 1] - q[j]))


def cdf(curve: QuantileCurve, v: float) -> float:
    return curve.cdf(v)


def log_density(curve: QuantileCurve, v: float) -> float:
    return curve.log_density(v)


def pit(curve: QuantileCurve, realization: float) -> float:
    """Probability integral transform: the forecast CDF at the realization."""
    return curve.cdf(realization)


def quantile(curve: QuantileCurve, prob: float) -> float:
    return curve.quantile(prob)


def sample(curve: QuantileCurve, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw from the curve's own law by inverting the CDF at uniforms."""
    u = rng.uniform(0.0, 1.0, n)
    u = np.clip(u, PIT_CLIP, 1.0 - PIT_CLIP)
    return np.array([curve.quantile(ui) for ui in u])
