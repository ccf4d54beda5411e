"""MLP baseline, MSE loss, Adam, and the full-batch training loop.

The training loop is shared by every gradient-trained model; it only needs
``params()`` / ``set_params()`` / ``copy()`` on the network and a matching
forward/backward pair.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError, NumericalError
from .kan import KanNetwork, kan_backward, kan_forward

__all__ = [
    "MlpNetwork",
    "TrainConfig",
    "TrainHistory",
    "init_mlp",
    "mlp_forward",
    "mlp_backward",
    "mse_loss",
    "adam_init",
    "adam_step",
    "train",
]

logger = logging.getLogger(__name__)


@dataclass
class MlpNetwork:
    """Affine layers with ReLU between them and a linear output layer."""

    widths: list
    weights: list
    biases: list
    activation: str = "relu"

    def __post_init__(self):
        self.widths = [int(w) for w in self.widths]
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise InputError(f"invalid MLP widths {self.widths}")
        if self.activation != "relu":
            raise InputError(f"unsupported activation {self.activation!r}")
        if len(self.weights) != len(self.widths) - 1 or len(self.biases) != len(self.weights):
            raise InputError("layer count does not match widths")
        for ell, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.widths[ell], self.widths[ell + 1]) or b.shape != (self.widths[ell + 1],):
                raise InputError(f"layer {ell} parameters do not match widths {self.widths}")

    def params(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend([W, b])
        return out

    def set_params(self, arrays: Sequence[np.ndarray]) -> None:
        it = iter(arrays)
        for W, b in zip(self.weights, self.biases):
            W[...] = next(it)
            b[...] = next(it)

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(list(self.widths), [W.copy() for W in self.weights],
                          [b.copy() for b in self.biases], self.activation)

    @property
    def n_inputs(self) -> int:
        return self.widths[0]


def init_mlp(widths, rng=None) -> MlpNetwork:
    """He-normal weights, zero biases."""
    rng = rng if rng is not None else np.random.default_rng(0)
    weights, biases = [], []
    for d_in, d_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return MlpNetwork(list(widths), weights, biases)


def mlp_forward(net: MlpNetwork, inputs):
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.widths[0]:
        raise InputError(f"input shape {np.shape(inputs)} does not match width {net.widths[0]}")
    cache = []
    last = len(net.weights) - 1
    for ell, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = x @ W + b
        cache.append((x, z))
        x = z if ell == last else np.maximum(z, 0.0)
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite MLP output")
    return (x[0] if single else x), cache


def mlp_backward(net: MlpNetwork, cache, upstream):
    """Gradients of ``sum(upstream * output)``; ReLU'(0) is taken as 0."""
    g = np.asarray(upstream, dtype=np.float64)
    single = g.ndim == 1
    if single:
        g = g[None, :]
    if len(cache) != len(net.weights):
        raise InputError("cache does not match network depth")
    grads = []
    last = len(net.weights) - 1
    for ell in range(last, -1, -1):
        x, z = cache[ell]
        W = net.weights[ell]
        if ell != last:
            g = g * (z > 0)
        if g.shape != z.shape:
            raise InputError(f"upstream shape {g.shape} does not match layer output {z.shape}")
        grads.append((x.T @ g, g.sum(axis=0)))
        g = g @ W.T
    flat = []
    for gW, gb in reversed(grads):
        flat.extend([gW, gb])
    return flat, (g[0] if single else g)


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InputError(f"length mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise InputError("empty prediction vector")
    diff = pred - target
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean(diff * diff)), 2.0 * diff / diff.size


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 3000
    patience: int = 200
    val_fraction: float = 0.2
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be positive")
        if not 0.0 < self.val_fraction < 0.5:
            raise InputError("val_fraction must lie in (0, 0.5)")
        if self.patience < 1 or self.max_epochs < 1:
            raise InputError("patience and max_epochs must be >= 1")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0 and self.adam_eps > 0):
            raise InputError("invalid Adam hyperparameters")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch]

    @property
    def final_val_loss(self) -> float:
        """Validation loss of the returned (best-epoch) parameters."""
        return self.best_val_loss

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss"])
            for e, (tl, vl) in enumerate(zip(self.train_loss, self.val_loss)):
                writer.writerow([e, repr(tl), repr(vl)])


def adam_init(params) -> dict:
    return {"m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params]}


def adam_step(params, grads, state, config: TrainConfig, t: int):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    if t < 1:
        raise InputError("Adam step index starts at 1")
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise InputError("parameter and gradient shapes differ")
    b1, b2 = config.adam_beta1, config.adam_beta2
    lr_t = config.learning_rate
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_params.append(p - lr_t * (m / c1) / (np.sqrt(v / c2) + config.adam_eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, {"m": new_m, "v": new_v}


def _passes(model):
    if isinstance(model, KanNetwork):
        return kan_forward, kan_backward
    if isinstance(model, MlpNetwork):
        return mlp_forward, mlp_backward
    raise InputError(f"cannot train object of type {type(model).__name__}")


def _validation_split(n: int, val_fraction: float) -> int:
    n_val = max(1, int(np.floor(val_fraction * n)))
    if n - n_val < 1:
        raise InputError(f"{n} windows are too few for a validation split")
    return n_val


def train(model, data, config: TrainConfig):
    """Full-batch Adam with chronological validation and early stopping.

    Returns a trained copy of ``model`` holding the parameters of the best
    validation epoch, and the loss history. Train and validation losses of
    epoch ``e`` are both measured at the parameters before update ``e``.
    """
    forward, backward = _passes(model)
    X = np.asarray(data.inputs, dtype=np.float64)
    y = np.asarray(data.targets, dtype=np.float64)
    if X.shape[0] == 0:
        raise InputError("empty training data")
    n_val = _validation_split(X.shape[0], config.val_fraction)
    X_tr, y_tr = X[:-n_val], y[:-n_val]
    X_va, y_va = X[-n_val:], y[-n_val:]

    net = model.copy()
    params = [p.copy() for p in net.params()]
    state = adam_init(params)
    history = TrainHistory()
    best = [p.copy() for p in params]
    best_val = np.inf
    stale = 0
    for epoch in range(config.max_epochs):
        out, cache = forward(net, X_tr)
        loss, g_out = mse_loss(out[:, 0], y_tr)
        val_loss, _ = mse_loss(forward(net, X_va)[0][:, 0], y_va)
        if not (np.isfinite(loss) and np.isfinite(val_loss)):
            raise NumericalError(f"non-finite loss at epoch {epoch} (train={loss}, val={val_loss})")
        history.train_loss.append(loss)
        history.val_loss.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            history.best_epoch = epoch
            best = [p.copy() for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
        grads, _ = backward(net, cache, g_out[:, None])
        params, state = adam_step(params, grads, state, config, epoch + 1)
        net.set_params(params)
    net.set_params(best)
    logger.debug("training stopped after %d epochs; best epoch %d, val %.6g",
                 len(history.val_loss), history.best_epoch, best_val)
    return net, history
