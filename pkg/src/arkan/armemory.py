"""Autoregressive memory: autocorrelation, Yule-Walker and the AR filter bank.

The AR coefficients estimated here are frozen and reused as per-lag gains
in front of the nonlinear stage of AR-KAN / AR-MLP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .errors import EstimationError, InputError
from .series import TimeSeries, fit_standardize

__all__ = [
    "ArModel",
    "AutocorrSequence",
    "autocorrelation",
    "toeplitz_system",
    "levinson_durbin",
    "solve_yule_walker",
    "ar_predict",
    "apply_memory",
    "memory_objective",
    "memory_objective_grad",
    "fit_ar",
]

logger = logging.getLogger(__name__)

_LD_FLOOR = 1e-12
_JITTER = 1e-10


@dataclass(frozen=True)
class ArModel:
    """AR(p) predictor ``x(n+1) = sum_i coeffs[i] * x(n-i)`` on a ``d``-differenced series."""

    p: int
    coeffs: np.ndarray
    d: int = 0

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=np.float64)
        coeffs.setflags(write=False)
        if self.p < 1 or coeffs.shape != (self.p,):
            raise InputError(f"AR order {self.p} does not match {coeffs.shape[0]} coefficients")
        if not np.all(np.isfinite(coeffs)):
            raise InputError("AR coefficients must be finite")
        if self.d not in (0, 1):
            raise InputError(f"differencing degree must be 0 or 1, got {self.d}")
        object.__setattr__(self, "coeffs", coeffs)


@dataclass(frozen=True)
class AutocorrSequence:
    r: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=np.float64)
        r.setflags(write=False)
        if r.ndim != 1 or r.size == 0 or not r[0] > 0:
            raise InputError("autocorrelation needs r[0] > 0")
        object.__setattr__(self, "r", r)

    @property
    def maxlag(self) -> int:
        return self.r.size - 1


def autocorrelation(ts, maxlag: int) -> AutocorrSequence:
    """Raw-product autocorrelation ``r(i) = 1/(N-i) * sum_n x(n) x(n-i)``.

    No mean is removed; pass a standardized series.
    """
    x = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=np.float64)
    n = x.shape[0]
    if maxlag < 0 or maxlag >= n or n - maxlag < 2:
        raise InputError(f"maxlag {maxlag} invalid for series of length {n}")
    r = np.empty(maxlag + 1)
    for i in range(maxlag + 1):
        r[i] = np.dot(x[i:], x[: n - i]) / (n - i)
    if not r[0] > 0:
        raise InputError("series has zero energy")
    return AutocorrSequence(r)


def toeplitz_system(r, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Return the p x p autocorrelation matrix and right-hand side ``r(1..p)``."""
    r = r.r if isinstance(r, AutocorrSequence) else np.asarray(r, dtype=np.float64)
    if r.size < p + 1:
        raise InputError(f"need {p + 1} autocorrelation lags, got {r.size}")
    return toeplitz(r[:p]), r[1 : p + 1].copy()


def levinson_durbin(r: np.ndarray, p: int) -> tuple[np.ndarray, float]:
    """Levinson-Durbin recursion for the symmetric Toeplitz Yule-Walker system.

    Returns the order-``p`` coefficients and the final prediction-error
    power. Raises ``EstimationError`` when an intermediate error power drops
    below ``1e-12 * r[0]``.
    """
    a = np.zeros(p)
    err = r[0]
    floor = _LD_FLOOR * r[0]
    for m in range(p):
        acc = r[m + 1] - np.dot(a[:m], r[m:0:-1])
        k = acc / err
        prev = a[:m].copy()
        a[:m] = prev - k * prev[::-1]
        a[m] = k
        err = err * (1.0 - k * k)
        if not err > floor:
            raise EstimationError(
                f"Levinson-Durbin prediction error collapsed at order {m + 1}", condition=None
            )
    return a, float(err)


def solve_yule_walker(r, p: int) -> np.ndarray:
    """Solve ``R a = [r(1), ..., r(p)]`` for the AR coefficients.

    Levinson-Durbin is tried first; if its prediction error collapses, a
    dense solve with ``1e-10 * r[0]`` added to the diagonal is used instead.
    """
    r = r.r if isinstance(r, AutocorrSequence) else np.asarray(r, dtype=np.float64)
    if p < 1:
        raise InputError(f"AR order must be >= 1, got {p}")
    R, rho = toeplitz_system(r, p)
    try:
        a, _ = levinson_durbin(r, p)
    except EstimationError:
        a = None
    if a is not None and np.all(np.isfinite(a)):
        if np.max(np.abs(R @ a - rho)) <= 1e-8 * r[0]:
            return a
        logger.debug("Levinson-Durbin residual too large; falling back to dense solve")

    cond = float(np.linalg.cond(R))
    R_j = R + _JITTER * r[0] * np.eye(p)
    try:
        a = np.linalg.solve(R_j, rho)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(f"Yule-Walker system is singular (cond={cond:.3g})", cond) from exc
    if not np.all(np.isfinite(a)):
        raise EstimationError(f"Yule-Walker solve produced non-finite values (cond={cond:.3g})", cond)
    logger.debug("dense Yule-Walker fallback used (cond=%.3g)", cond)
    return a


def _check_lengths(coeffs, window):
    a = np.asarray(coeffs.coeffs if isinstance(coeffs, ArModel) else coeffs, dtype=np.float64)
    w = np.asarray(window, dtype=np.float64)
    if w.shape[-1] != a.shape[0]:
        raise InputError(f"window length {w.shape[-1]} does not match order {a.shape[0]}")
    return a, w


def ar_predict(model, window):
    """One-step AR prediction; ``window[..., i]`` holds ``x(n-i)``. Batches allowed."""
    a, w = _check_lengths(model, window)
    return apply_memory(a, w).sum(axis=-1)


def apply_memory(coeffs, window) -> np.ndarray:
    """Per-lag filter outputs ``a_i * x(n-i)``; summation is left to the caller."""
    a, w = _check_lengths(coeffs, window)
    return a * w


def memory_objective(w, R, rho) -> float:
    """``w.rho - w.R.w / 2``: correlation with the target minus half the output energy."""
    w = np.asarray(w, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    if R.shape != (w.size, w.size) or rho.shape != w.shape:
        raise InputError(f"dimension mismatch: w {w.shape}, R {R.shape}, rho {rho.shape}")
    return float(w @ rho - 0.5 * w @ R @ w)


def memory_objective_grad(w, R, rho) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    return np.asarray(rho, dtype=np.float64) - np.asarray(R, dtype=np.float64) @ w


def fit_ar(train, p: int, d: int = 0) -> ArModel:
    """Fit AR(p) by Yule-Walker on a standardized series, optionally differenced once."""
    if d not in (0, 1):
        raise InputError(f"differencing degree must be 0 or 1, got {d}")
    x = train.values if isinstance(train, TimeSeries) else np.asarray(train, dtype=np.float64)
    if x.size - d <= p + 1:
        raise InputError(f"series of length {x.size} too short for AR({p}) with d={d}")
    if d == 1:
        x = np.diff(x)
        # differenced series must carry energy to be estimable
        fit_standardize(TimeSeries(x, name=getattr(train, "name", "")))
    r = autocorrelation(x, p)
    return ArModel(p, solve_yule_walker(r, p), d)
