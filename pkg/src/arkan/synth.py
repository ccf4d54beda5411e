"""Noisy almost-periodic benchmark signals.

    f1(t) = cos(2 t) + cos(2 pi t) + noise
    f2(t) = sin(3 t) + sin(2 e t) + noise

sampled on an endpoint-inclusive uniform grid over ``[0, t_max]``. Noise is
i.i.d. N(0, sigma^2) drawn from numpy's Philox-4x64 counter-based generator
seeded with ``seed`` (normals via numpy's ziggurat sampler), so a given spec
always produces the same samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .series import TimeSeries

__all__ = ["SynthSpec", "FUNCTIONS", "noiseless", "sample"]


def _f1(t):
    return np.cos(2.0 * t) + np.cos(2.0 * np.pi * t)


def _f2(t):
    return np.sin(3.0 * t) + np.sin(2.0 * np.e * t)


FUNCTIONS = {"f1": _f1, "f2": _f2}


@dataclass(frozen=True)
class SynthSpec:
    function: str = "f1"
    sigma: float = 0.0
    n_samples: int = 500
    t_max: float = 8.0 * math.pi
    seed: int = 0

    def __post_init__(self):
        if self.function not in FUNCTIONS:
            raise InputError(f"unknown function {self.function!r}; expected one of {sorted(FUNCTIONS)}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise InputError(f"sigma must be >= 0, got {self.sigma}")
        if self.n_samples < 2:
            raise InputError(f"n_samples must be >= 2, got {self.n_samples}")
        if not (math.isfinite(self.t_max) and self.t_max > 0):
            raise InputError(f"t_max must be positive, got {self.t_max}")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_samples)


def noiseless(spec: SynthSpec) -> np.ndarray:
    return FUNCTIONS[spec.function](spec.times)


def sample(spec: SynthSpec) -> TimeSeries:
    values = noiseless(spec)
    if spec.sigma > 0:
        rng = np.random.Generator(np.random.Philox(spec.seed))
        values = values + spec.sigma * rng.standard_normal(spec.n_samples)
    dt = spec.t_max / (spec.n_samples - 1)
    return TimeSeries(values, t0=0.0, dt=dt, name=f"{spec.function}_sigma{spec.sigma:g}")
