"""Kolmogorov-Arnold network with per-edge cubic B-spline activations.

Each edge ``i -> j`` of a layer computes

    mix[i, j] * (base[i, j] * silu(x_i) + sum_c coef[i, j, c] * B_c(x_i))

and each output unit sums its incoming edges. Basis functions live on a
clamped uniform knot vector over ``[lo, hi]``; outside that range they are
continued affinely from the boundary value and slope.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InputError, NumericalError

__all__ = [
    "SplineGrid",
    "KanEdge",
    "KanLayer",
    "KanNetwork",
    "silu",
    "silu_grad",
    "bspline_basis",
    "bspline_basis_and_grad",
    "edge_eval",
    "init_kan",
    "kan_forward",
    "kan_backward",
]


@dataclass(frozen=True)
class SplineGrid:
    lo: float = -3.0
    hi: float = 3.0
    intervals: int = 3
    degree: int = 3

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InputError(f"grid needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.intervals < 1 or self.degree < 1:
            raise InputError("grid needs intervals >= 1 and degree >= 1")

    @property
    def n_basis(self) -> int:
        return self.intervals + self.degree

    @property
    def knots(self) -> np.ndarray:
        inner = np.linspace(self.lo, self.hi, self.intervals + 1)
        k = self.degree
        return np.concatenate([np.full(k, self.lo), inner, np.full(k, self.hi)])


def silu(x):
    return x / (1.0 + np.exp(-x))


def silu_grad(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


def _cox_de_boor(x: np.ndarray, grid: SplineGrid) -> tuple[np.ndarray, np.ndarray]:
    """Basis values and first derivatives for points already inside ``[lo, hi]``.

    Only the ``k + 1`` functions that are nonzero on each point's knot span
    are evaluated (Cox-de Boor triangle), then scattered into the full basis.
    """
    t = grid.knots
    k = grid.degree
    shape = x.shape
    x = x.reshape(-1)
    # last non-empty knot interval containing x; x == hi maps to the final one
    span = np.clip(np.searchsorted(t, x, side="right") - 1, k, t.size - k - 2)
    left = [None] + [x - t[span + 1 - j] for j in range(1, k + 1)]
    right = [None] + [t[span + j] - x for j in range(1, k + 1)]
    N = [np.ones_like(x)]
    lower = N
    for j in range(1, k + 1):
        lower = N
        saved = np.zeros_like(x)
        N = []
        for r in range(j):
            temp = lower[r] / (right[r + 1] + left[j - r])
            N.append(saved + right[r + 1] * temp)
            saved = left[j - r] * temp
        N.append(saved)
    # derivative from the degree k-1 functions on the same span
    dN = []
    for r in range(k + 1):
        d = np.zeros_like(x)
        if r > 0:
            d = d + lower[r - 1] / (t[span + r] - t[span + r - k])
        if r < k:
            d = d - lower[r] / (t[span + r + 1] - t[span + r + 1 - k])
        dN.append(k * d)
    n_basis = grid.n_basis
    rows = np.arange(x.size)[:, None]
    cols = span[:, None] - k + np.arange(k + 1)
    B = np.zeros((x.size, n_basis))
    dB = np.zeros((x.size, n_basis))
    B[rows, cols] = np.stack(N, axis=1)
    dB[rows, cols] = np.stack(dN, axis=1)
    return B.reshape(shape + (n_basis,)), dB.reshape(shape + (n_basis,))


def bspline_basis_and_grad(x, grid: SplineGrid) -> tuple[np.ndarray, np.ndarray]:
    """All ``G + k`` basis values and their derivatives at ``x`` (any shape)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InputError("spline input must be finite")
    xc = np.clip(x, grid.lo, grid.hi)
    B, dB = _cox_de_boor(xc, grid)
    outside = x != xc
    if np.any(outside):
        B = B + dB * (x - xc)[..., None]
    return B, dB


def bspline_basis(x, grid: SplineGrid) -> np.ndarray:
    return bspline_basis_and_grad(x, grid)[0]


@dataclass
class KanEdge:
    spline_coeffs: np.ndarray
    base_weight: float = 1.0
    mix_weight: float = 1.0


def edge_eval(edge: KanEdge, grid: SplineGrid, x, base_activation: str = "silu"):
    coeffs = np.asarray(edge.spline_coeffs, dtype=np.float64)
    if coeffs.shape != (grid.n_basis,):
        raise InputError(f"edge needs {grid.n_basis} spline coefficients, got {coeffs.shape}")
    x = np.asarray(x, dtype=np.float64)
    value = bspline_basis(x, grid) @ coeffs
    if base_activation == "silu":
        value = value + edge.base_weight * silu(x)
    return edge.mix_weight * value


@dataclass
class KanLayer:
    """Parameters of one layer, stored as dense arrays over its edges.

    ``coef`` has shape ``(d_in, d_out, G + k)``; ``base`` and ``mix`` have
    shape ``(d_in, d_out)``.
    """

    coef: np.ndarray
    base: np.ndarray
    mix: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.base.shape

    def edge(self, i: int, j: int) -> KanEdge:
        return KanEdge(self.coef[i, j].copy(), float(self.base[i, j]), float(self.mix[i, j]))

    def copy(self) -> "KanLayer":
        return KanLayer(self.coef.copy(), self.base.copy(), self.mix.copy())


@dataclass
class KanNetwork:
    widths: list
    layers: list
    grid: SplineGrid
    base_activation: str = "silu"

    def __post_init__(self):
        self.widths = [int(w) for w in self.widths]
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise InputError(f"invalid KAN widths {self.widths}")
        if self.base_activation not in ("silu", "none"):
            raise InputError(f"unknown base activation {self.base_activation!r}")
        if len(self.layers) != len(self.widths) - 1:
            raise InputError("layer count does not match widths")
        for ell, layer in enumerate(self.layers):
            expect = (self.widths[ell], self.widths[ell + 1])
            if layer.shape != expect or layer.coef.shape != expect + (self.grid.n_basis,):
                raise InputError(f"layer {ell} has shape {layer.shape}, expected {expect}")

    # -- flat parameter view, used by the optimizer and serialization --
    def params(self) -> list:
        out = []
        for layer in self.layers:
            out.extend([layer.coef, layer.base, layer.mix])
        return out

    def set_params(self, arrays: Sequence[np.ndarray]) -> None:
        it = iter(arrays)
        for layer in self.layers:
            layer.coef[...] = next(it)
            layer.base[...] = next(it)
            layer.mix[...] = next(it)

    def copy(self) -> "KanNetwork":
        return KanNetwork(list(self.widths), [l.copy() for l in self.layers], self.grid, self.base_activation)

    @property
    def n_inputs(self) -> int:
        return self.widths[0]


def init_kan(widths, grid: Optional[SplineGrid] = None, rng=None, base_activation: str = "silu") -> KanNetwork:
    """Near-linear start: small spline coefficients, unit base weight, scaled mixing."""
    grid = grid or SplineGrid()
    rng = rng if rng is not None else np.random.default_rng(0)
    layers = []
    for d_in, d_out in zip(widths[:-1], widths[1:]):
        coef = rng.normal(0.0, 0.1 / np.sqrt(grid.n_basis), size=(d_in, d_out, grid.n_basis))
        base = np.ones((d_in, d_out))
        mix = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, d_out))
        layers.append(KanLayer(coef, base, mix))
    return KanNetwork(list(widths), layers, grid, base_activation)


def zeros_kan(widths, grid: Optional[SplineGrid] = None, base_activation: str = "silu") -> KanNetwork:
    grid = grid or SplineGrid()
    layers = [
        KanLayer(np.zeros((a, b, grid.n_basis)), np.zeros((a, b)), np.zeros((a, b)))
        for a, b in zip(widths[:-1], widths[1:])
    ]
    return KanNetwork(list(widths), layers, grid, base_activation)


def kan_forward(net: KanNetwork, inputs):
    """Evaluate the network on one input vector or a batch of shape ``(B, d_0)``.

    Returns the output and a cache of per-layer inputs, basis values and
    basis derivatives for ``kan_backward``.
    """
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.widths[0]:
        raise InputError(f"input shape {np.shape(inputs)} does not match width {net.widths[0]}")
    if not np.all(np.isfinite(x)):
        raise InputError("KAN input must be finite")
    use_base = net.base_activation == "silu"
    cache = []
    n_basis = net.grid.n_basis
    for ell, layer in enumerate(net.layers):
        B, dB = bspline_basis_and_grad(x, net.grid)
        d_in, d_out = layer.shape
        w_spline = (layer.mix[..., None] * layer.coef).transpose(0, 2, 1).reshape(d_in * n_basis, d_out)
        with np.errstate(invalid="ignore", over="ignore"):
            out = B.reshape(x.shape[0], d_in * n_basis) @ w_spline
            if use_base:
                out = out + silu(x) @ (layer.mix * layer.base)
        cache.append((x, B, dB))
        if not np.all(np.isfinite(out)):
            raise NumericalError(f"non-finite activation in KAN layer {ell}")
        x = out
    return (x[0] if single else x), cache


def kan_backward(net: KanNetwork, cache, upstream):
    """Gradients of ``sum(upstream * output)`` w.r.t. all parameters and the input.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` follows the
    ordering of ``net.params()``.
    """
    g = np.asarray(upstream, dtype=np.float64)
    single = g.ndim == 1
    if single:
        g = g[None, :]
    if len(cache) != len(net.layers):
        raise InputError("cache does not match network depth")
    use_base = net.base_activation == "silu"
    n_basis = net.grid.n_basis
    grads = []
    for layer, (x, B, dB) in zip(reversed(net.layers), reversed(cache)):
        d_in, d_out = layer.shape
        if g.shape != (x.shape[0], d_out):
            raise InputError(f"upstream shape {g.shape} does not match layer output {(x.shape[0], d_out)}")
        Bf = B.reshape(x.shape[0], d_in * n_basis)
        # gradient w.r.t. effective spline weights mix * coef, laid out (d_in, d_out, n_basis)
        g_ws = (Bf.T @ g).reshape(d_in, n_basis, d_out).transpose(0, 2, 1)
        g_coef = layer.mix[..., None] * g_ws
        g_mix = np.einsum("ioc,ioc->io", layer.coef, g_ws)
        w_spline = layer.mix[..., None] * layer.coef
        # spline part of the input gradient
        proj = (g @ w_spline.transpose(1, 0, 2).reshape(d_out, d_in * n_basis)).reshape(-1, d_in, n_basis)
        gx = np.einsum("bic,bic->bi", proj, dB)
        if use_base:
            s = silu(x)
            g_wb = s.T @ g
            g_base = layer.mix * g_wb
            g_mix = g_mix + layer.base * g_wb
            gx = gx + silu_grad(x) * (g @ (layer.mix * layer.base).T)
        else:
            g_base = np.zeros_like(layer.base)
        grads.append((g_coef, g_base, g_mix))
        g = gx
    flat = []
    for triple in reversed(grads):
        flat.extend(triple)
    return flat, (g[0] if single else g)
