"""Univariate series container, standardization, splitting and lag windows."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DegenerateSeriesError, InputError

__all__ = [
    "TimeSeries",
    "StandardizationStats",
    "WindowDataset",
    "load_csv",
    "write_csv",
    "fit_standardize",
    "apply_standardize",
    "split",
    "make_windows",
]


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """Ordered real-valued samples with an optional uniform time axis."""

    values: np.ndarray
    t0: Optional[float] = None
    dt: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1:
            raise InputError(f"series must be one-dimensional, got shape {values.shape}")
        if values.size == 0:
            raise InputError("series is empty")
        if not np.all(np.isfinite(values)):
            raise InputError("series contains non-finite values")
        if self.dt is not None and not self.dt > 0:
            raise InputError(f"sample spacing must be positive, got {self.dt}")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> Optional[np.ndarray]:
        if self.t0 is None or self.dt is None:
            return None
        return self.t0 + self.dt * np.arange(len(self))

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(values, t0=self.t0, dt=self.dt, name=self.name)


@dataclass(frozen=True)
class StandardizationStats:
    mean: float
    std: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.std)):
            raise InputError("standardization stats must be finite")
        if not self.std > 0:
            raise DegenerateSeriesError(f"standard deviation must be positive, got {self.std}")


@dataclass(frozen=True)
class WindowDataset:
    """Supervised (lag window, next value) pairs.

    Row ``m`` of ``inputs`` is ``[x(n), x(n-1), ..., x(n-p+1)]`` and
    ``targets[m]`` is ``x(n+1)``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    p: int = field(default=0)

    def __post_init__(self):
        inputs = _frozen(self.inputs)
        targets = _frozen(self.targets)
        if inputs.ndim != 2 or targets.ndim != 1 or inputs.shape[0] != targets.shape[0]:
            raise InputError(
                f"inconsistent window shapes: inputs {inputs.shape}, targets {targets.shape}"
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "p", int(inputs.shape[1]))

    def __len__(self) -> int:
        return self.targets.shape[0]


def _parse_float(cell: str, path, lineno: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise InputError(
            f"{path}: line {lineno}: non-numeric cell {cell!r} in column {column!r}"
        ) from None
    if not math.isfinite(value):
        raise InputError(f"{path}: line {lineno}: non-finite value in column {column!r}")
    return value


def load_csv(path) -> TimeSeries:
    """Read a series from a CSV with a ``value`` column and optional ``t`` column.

    The time axis is kept only when ``t`` is uniformly spaced (relative
    tolerance 1e-9); otherwise ``t0`` and ``dt`` are left unset.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file")
        header = [h.strip() for h in reader.fieldnames]
        reader.fieldnames = header
        if "value" not in header:
            raise InputError(f"{path}: missing required column 'value' (found {header})")
        has_t = "t" in header
        values, times = [], []
        for lineno, row in enumerate(reader, start=2):
            if not any((c or "").strip() for c in row.values()):
                continue
            values.append(_parse_float((row["value"] or "").strip(), path, lineno, "value"))
            if has_t:
                times.append(_parse_float((row["t"] or "").strip(), path, lineno, "t"))
    if not values:
        raise InputError(f"{path}: no data rows")

    t0 = dt = None
    if has_t and len(times) >= 2:
        steps = np.diff(times)
        step = float(np.mean(steps))
        if step > 0 and np.all(np.abs(steps - step) <= 1e-9 * abs(step)):
            t0, dt = times[0], step
    return TimeSeries(values, t0=t0, dt=dt, name=path.stem)


def write_csv(ts: TimeSeries, path) -> None:
    """Write ``t,value`` (or just ``value`` when there is no time axis)."""
    times = ts.times
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if times is None:
            writer.writerow(["value"])
            writer.writerows([repr(float(v))] for v in ts.values)
        else:
            writer.writerow(["t", "value"])
            for t, v in zip(times, ts.values):
                writer.writerow([repr(float(t)), repr(float(v))])


def fit_standardize(train: TimeSeries) -> StandardizationStats:
    """Mean and population standard deviation (divide by N) of ``train``."""
    x = train.values
    if x.size < 2:
        raise InputError("need at least 2 samples to standardize")
    mean = float(np.mean(x))
    std = float(np.sqrt(np.mean((x - mean) ** 2)))
    if not std > 1e-12 * max(1.0, abs(mean)):
        raise DegenerateSeriesError(f"series {train.name!r} is constant; cannot standardize")
    return StandardizationStats(mean, std)


def apply_standardize(ts: TimeSeries, stats: StandardizationStats, inverse: bool = False) -> TimeSeries:
    if inverse:
        return ts.with_values(ts.values * stats.std + stats.mean)
    return ts.with_values((ts.values - stats.mean) / stats.std)


def split(ts: TimeSeries, ratio: float = 0.8) -> tuple[TimeSeries, TimeSeries]:
    """Chronological split: first ``floor(ratio * N)`` samples train, the rest test."""
    if not 0.0 < ratio < 1.0:
        raise InputError(f"split ratio must lie in (0, 1), got {ratio}")
    n = len(ts)
    n_train = int(math.floor(ratio * n))
    if n_train < 1 or n_train >= n:
        raise InputError(f"split of {n} samples at ratio {ratio} leaves an empty side")
    train = TimeSeries(ts.values[:n_train], t0=ts.t0, dt=ts.dt, name=ts.name)
    t0_test = None if ts.t0 is None or ts.dt is None else ts.t0 + n_train * ts.dt
    test = TimeSeries(ts.values[n_train:], t0=t0_test, dt=ts.dt, name=ts.name)
    return train, test


def lag_matrix(x: np.ndarray, p: int) -> np.ndarray:
    """Rows ``[x[n], x[n-1], ..., x[n-p+1]]`` for ``n = p-1 .. len(x)-1``."""
    x = np.asarray(x, dtype=np.float64)
    windows = np.lib.stride_tricks.sliding_window_view(x, p)
    return np.ascontiguousarray(windows[:, ::-1])


def make_windows(ts: TimeSeries, p: int, context: Optional[TimeSeries] = None) -> WindowDataset:
    """Build one (window, target) pair for every predictable sample of ``ts``.

    With ``context``, windows for the first samples of ``ts`` reach back into
    the preceding series, so each target still gets a full history.
    """
    if p < 1:
        raise InputError(f"lag order must be >= 1, got {p}")
    x = ts.values
    n_ctx = 0
    if context is not None:
        x = np.concatenate([context.values, x])
        n_ctx = len(context)
    if x.size < p + 1:
        raise InputError(f"series of length {x.size} too short for lag order {p}")
    # targets are the samples of ts that have p predecessors
    first = max(n_ctx, p)
    inputs = lag_matrix(x[:-1], p)[first - p:]
    targets = x[first:]
    return WindowDataset(inputs, targets)
