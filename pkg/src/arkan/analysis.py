"""Metrics, ACF-based period detection and periodicity strength.

Periodicity strength is the energy of the seasonal component divided by the
energy of the standardized series. The seasonal component comes from a
classical additive decomposition (centered moving-average trend, per-phase
means for the seasonal pattern) rather than loess-based STL.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .armemory import autocorrelation
from .errors import InputError
from .nn import mse_loss
from .series import TimeSeries, apply_standardize, fit_standardize

__all__ = [
    "WEAK_PEAK_THRESHOLD",
    "DecompositionResult",
    "PeriodicityReport",
    "acf_peak",
    "detect_period",
    "seasonal_decompose",
    "periodicity_strength",
    "mse",
]

WEAK_PEAK_THRESHOLD = 0.1


@dataclass(frozen=True)
class DecompositionResult:
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int


@dataclass(frozen=True)
class PeriodicityReport:
    strength: float
    period: int
    acf_peak_value: float

    @property
    def weak_peak(self) -> bool:
        return self.period == 0 or self.acf_peak_value < WEAK_PEAK_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "strength": self.strength,
            "acf_peak_value": self.acf_peak_value,
            "weak_peak": self.weak_peak,
        }


def _values(ts) -> np.ndarray:
    if isinstance(ts, TimeSeries):
        return ts.values
    return np.asarray(ts, dtype=np.float64)


def _standardized(ts) -> np.ndarray:
    series = ts if isinstance(ts, TimeSeries) else TimeSeries(ts)
    return apply_standardize(series, fit_standardize(series)).values


def acf_peak(ts) -> tuple[int, float]:
    """Lag and normalized height of the largest ACF local maximum at lag >= 2.

    The ACF is computed on the standardized series with its least-squares
    line removed, up to lag ``N // 2``, and normalized by ``N`` rather than
    ``N - l`` so harmonics of a period and sparsely averaged far lags do not
    outrank the fundamental. A local maximum needs ``r(l) > r(l-1)`` and
    ``r(l) >= r(l+1)``. Returns ``(0, 0.0)`` when there is none.
    """
    x = _values(ts)
    if x.size < 8:
        raise InputError(f"need at least 8 samples for period detection, got {x.size}")
    n = x.size
    maxlag = n // 2
    z = _standardized(x)
    # a trend tilts the ACF baseline and drags local maxima to shorter lags
    t = np.arange(n) - (n - 1) / 2.0
    z = z - z.mean() - t * (t @ z) / (t @ t)
    if z @ z <= 1e-20 * n:
        return 0, 0.0
    r = autocorrelation(z, maxlag).r * (n - np.arange(maxlag + 1)) / n
    rho = r / r[0]
    lags = np.arange(2, rho.size - 1)
    is_peak = (rho[lags] > rho[lags - 1]) & (rho[lags] >= rho[lags + 1])
    if not np.any(is_peak):
        return 0, 0.0
    peaks = lags[is_peak]
    best = peaks[np.argmax(rho[peaks])]
    return int(best), float(rho[best])


def detect_period(ts) -> int:
    return acf_peak(ts)[0]


def _moving_average(x: np.ndarray, period: int) -> np.ndarray:
    if period % 2:
        weights = np.full(period, 1.0 / period)
    else:
        weights = np.full(period + 1, 1.0 / period)
        weights[[0, -1]] = 0.5 / period
    # centered average; defined on indices half .. N-1-half
    return np.convolve(x, weights, mode="valid")


def seasonal_decompose(ts, period: int) -> DecompositionResult:
    """Classical additive decomposition ``x = trend + seasonal + residual``."""
    x = _values(ts)
    n = x.size
    if period < 2 or n < 2 * period:
        raise InputError(f"period {period} invalid for series of length {n} (need 2 <= period <= n/2)")
    half = period // 2
    core = _moving_average(x, period)
    trend = np.empty(n)
    trend[half : half + core.size] = core
    trend[:half] = core[0]
    trend[half + core.size :] = core[-1]

    detrended = x - trend
    valid = np.arange(half, half + core.size)
    phase = valid % period
    sums = np.bincount(phase, weights=detrended[valid], minlength=period)
    counts = np.bincount(phase, minlength=period)
    pattern = sums / counts
    pattern -= pattern.mean()
    seasonal = pattern[np.arange(n) % period]
    residual = x - trend - seasonal
    return DecompositionResult(trend, seasonal, residual, int(period))


def periodicity_strength(ts) -> PeriodicityReport:
    """Seasonal energy over total energy of the standardized series, in [0, 1].

    A weak ACF peak (below ``WEAK_PEAK_THRESHOLD``) is reported with its
    period but scores zero strength.
    """
    x = _values(ts)
    period, peak = acf_peak(x)
    if period == 0 or peak < WEAK_PEAK_THRESHOLD:
        return PeriodicityReport(0.0, period, peak)
    z = _standardized(x)
    if z.size < 2 * period:
        return PeriodicityReport(0.0, period, peak)
    seasonal = seasonal_decompose(z, period).seasonal
    strength = float(np.dot(seasonal, seasonal) / np.dot(z, z))
    return PeriodicityReport(min(max(strength, 0.0), 1.0), period, peak)


def mse(pred, actual) -> float:
    return mse_loss(pred, actual)[0]
