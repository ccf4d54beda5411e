"""Forecasters: AR-KAN, AR-MLP, plain KAN / MLP, ARIMA and plain AR.

Every model works internally on the series standardized with statistics of
its own training data and exposes the same one-step, teacher-forced
forecasting interface.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .armemory import ArModel, apply_memory, ar_predict, fit_ar, solve_yule_walker, autocorrelation
from .errors import EstimationError, InputError
from .kan import KanLayer, KanNetwork, SplineGrid, init_kan, kan_forward
from .nn import MlpNetwork, TrainConfig, TrainHistory, init_mlp, mlp_forward
from .nn import train as train_network
from .series import (
    StandardizationStats,
    TimeSeries,
    WindowDataset,
    apply_standardize,
    fit_standardize,
    lag_matrix,
    make_windows,
    split,
)

__all__ = [
    "VARIANTS",
    "DEFAULT_P",
    "KAN_HIDDEN",
    "MLP_HIDDEN",
    "ArimaModel",
    "ForecastModel",
    "fit_ar_kan",
    "fit_ar_mlp",
    "fit_plain",
    "fit_ar_only",
    "fit_arima",
    "make_invertible",
    "fit_model",
    "forecast_one_step",
    "evaluate",
    "to_document",
    "from_document",
    "save_model",
    "load_model",
]

logger = logging.getLogger(__name__)

VARIANTS = ("ar_kan", "ar_mlp", "kan", "mlp", "arima", "ar")
DEFAULT_P = 20
KAN_HIDDEN = [50]
MLP_HIDDEN = [128, 256, 128]
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ArimaModel:
    """ARIMA(p, d, q) on the standardized series.

    On the ``d``-differenced series ``y``::

        y(n) = sum_i phi[i] y(n-1-i) + sum_j theta[j] e(n-1-j) + e(n)
    """

    p: int
    d: int
    q: int
    phi: np.ndarray
    theta: np.ndarray
    residual_history: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("phi", "theta", "residual_history"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.phi.shape != (self.p,) or self.theta.shape != (self.q,):
            raise InputError("ARIMA coefficient lengths do not match (p, q)")
        if self.d not in (0, 1) or self.q not in (0, 1, 2):
            raise InputError(f"unsupported ARIMA orders d={self.d}, q={self.q}")

    def one_step(self, z: np.ndarray) -> np.ndarray:
        """Teacher-forced predictions of ``z[n]`` for every ``n`` in ``1..len(z)``.

        Entry ``n`` of the result predicts ``z[n]`` from ``z[:n]``; the last
        entry is the forecast beyond the end of ``z``. Entries without enough
        history are NaN. Residuals are recomputed recursively from the true
        history; residuals before the first predictable index are zero.
        """
        z = np.asarray(z, dtype=np.float64)
        y = np.diff(z) if self.d == 1 else z
        n = y.size
        p, q = self.p, self.q
        resid = np.zeros(n)
        y_hat = np.full(n + 1, np.nan)
        phi = self.phi
        theta = self.theta
        for t in range(p, n + 1):
            pred = float(np.dot(phi, y[t - p:t][::-1]))
            if q:
                lo = max(t - q, 0)
                pred += float(np.dot(theta[: t - lo], resid[lo:t][::-1]))
            y_hat[t] = pred
            if t < n:
                resid[t] = y[t] - pred
        if self.d == 0:
            return y_hat
        # y[t] = z[t+1] - z[t], so the level forecast of z[t+1] is z[t] + y_hat[t]
        out = np.full(z.size + 1, np.nan)
        out[1:] = z + y_hat
        return out


@dataclass
class ForecastModel:
    variant: str
    p: int
    stats: StandardizationStats
    ar: Optional[ArModel] = None
    network: object = None
    arima: Optional[ArimaModel] = None
    history: Optional[TrainHistory] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError(f"unknown model variant {self.variant!r}")
        if self.variant in ("ar_kan", "ar_mlp") and (self.ar is None or self.network is None):
            raise InputError(f"{self.variant} needs both an AR memory and a network")
        if self.ar is not None and self.ar.d != 0:
            raise InputError("forecasting models use an undifferenced AR memory (d=0)")
        if self.network is not None and self.network.n_inputs != self.p:
            raise InputError(f"network input width {self.network.n_inputs} != window length {self.p}")

    @property
    def min_history(self) -> int:
        if self.variant == "arima":
            return self.arima.p + self.arima.d
        return self.p

    def predict_windows(self, windows: np.ndarray) -> np.ndarray:
        """Standardized next-value predictions for lag windows (most recent first)."""
        W = np.atleast_2d(np.asarray(windows, dtype=np.float64))
        if self.variant == "ar":
            return ar_predict(self.ar, W)
        if self.variant in ("ar_kan", "ar_mlp"):
            W = apply_memory(self.ar.coeffs, W)
        forward = kan_forward if isinstance(self.network, KanNetwork) else mlp_forward
        return forward(self.network, W)[0][:, 0]

    def predict_standardized(self, z: np.ndarray, start: int) -> np.ndarray:
        """Teacher-forced predictions of ``z[start:]`` from the true past of ``z``."""
        z = np.asarray(z, dtype=np.float64)
        if start < self.min_history:
            raise InputError(f"{self.variant} needs {self.min_history} past samples, got {start}")
        if self.variant == "arima":
            return self.arima.one_step(z)[start : z.size]
        windows = lag_matrix(z[:-1], self.p)[start - self.p:]
        return self.predict_windows(windows)


def _check_train(train: TimeSeries, p: int):
    if len(train) <= p + 2:
        raise InputError(f"training series of length {len(train)} too short for p={p} (need > {p + 2})")


def _standardized(train: TimeSeries):
    stats = fit_standardize(train)
    return stats, apply_standardize(train, stats)


def _fit_network_model(variant: str, train: TimeSeries, cfg: TrainConfig, p: int,
                       hidden=None, grid: Optional[SplineGrid] = None,
                       base_activation: str = "silu") -> ForecastModel:
    _check_train(train, p)
    stats, z = _standardized(train)
    data = make_windows(z, p)
    ar = None
    inputs = data.inputs
    if variant in ("ar_kan", "ar_mlp"):
        ar = fit_ar(z, p, d=0)
        inputs = apply_memory(ar.coeffs, inputs)
    rng = np.random.default_rng(cfg.seed)
    if variant in ("ar_kan", "kan"):
        widths = [p] + list(KAN_HIDDEN if hidden is None else hidden) + [1]
        net = init_kan(widths, grid=grid or SplineGrid(), rng=rng, base_activation=base_activation)
    else:
        widths = [p] + list(MLP_HIDDEN if hidden is None else hidden) + [1]
        net = init_mlp(widths, rng=rng)
    net, history = train_network(net, WindowDataset(inputs, data.targets), cfg)
    return ForecastModel(variant, p, stats, ar=ar, network=net, history=history)


def fit_ar_kan(train: TimeSeries, cfg: TrainConfig = TrainConfig(), p: int = DEFAULT_P, **kw) -> ForecastModel:
    """Frozen AR(p) memory feeding a KAN of widths ``[p, 50, 1]`` (G=3, k=3)."""
    return _fit_network_model("ar_kan", train, cfg, p, **kw)


def fit_ar_mlp(train: TimeSeries, cfg: TrainConfig = TrainConfig(), p: int = DEFAULT_P, **kw) -> ForecastModel:
    """Frozen AR(p) memory feeding an MLP of widths ``[p, 128, 256, 128, 1]``."""
    return _fit_network_model("ar_mlp", train, cfg, p, **kw)


def fit_plain(variant: str, train: TimeSeries, cfg: TrainConfig = TrainConfig(), p: int = DEFAULT_P, **kw) -> ForecastModel:
    """KAN or MLP on raw lag windows, without the AR memory."""
    if variant not in ("kan", "mlp"):
        raise InputError(f"plain variant must be 'kan' or 'mlp', got {variant!r}")
    return _fit_network_model(variant, train, cfg, p, **kw)


def fit_ar_only(train: TimeSeries, p: int = DEFAULT_P) -> ForecastModel:
    """The frozen AR(p) memory used as a linear forecaster on its own."""
    _check_train(train, p)
    stats, z = _standardized(train)
    return ForecastModel("ar", p, stats, ar=fit_ar(z, p, d=0))


# -- ARIMA via Hannan-Rissanen ------------------------------------------------

def _hannan_rissanen(y: np.ndarray, p: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    n = y.size
    # residual lags are exact combinations of the p AR lags unless m exceeds p
    m = max(min(40, n // 4), p + q) if q else 0
    if q > 0:
        if m < 1:
            raise EstimationError(f"series of length {n} too short for the preliminary AR fit")
        a = solve_yule_walker(autocorrelation(y, m), m)
        resid = np.zeros(n)
        resid[m:] = y[m:] - lag_matrix(y[:-1], m)[: n - m] @ a
        first = max(p, m + q)
    else:
        resid = np.zeros(n)
        first = p
    rows = n - first
    if rows <= p + q:
        raise EstimationError(f"too few observations ({rows}) for ARMA({p},{q}) regression")
    cols = []
    if p:
        cols.append(lag_matrix(y[:-1], p)[first - p:])
    if q:
        cols.append(lag_matrix(resid[:-1], q)[first - q:])
    X = np.hstack(cols)
    target = y[first:]
    coef, _, rank, sv = np.linalg.lstsq(X, target, rcond=None)
    if rank < X.shape[1]:
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
        raise EstimationError(f"rank-deficient ARMA({p},{q}) design (rank {rank} < {X.shape[1]})", cond)
    return coef[:p], coef[p:]


MA_ROOT_FLOOR = 1.05


def make_invertible(theta: np.ndarray, floor: float = MA_ROOT_FLOOR) -> np.ndarray:
    """Move roots of ``1 + theta_1 B + ... + theta_q B^q`` to modulus >= ``floor``.

    Roots inside the unit circle are reflected to their reciprocals, then any
    root still below ``floor`` is pushed radially out to it. This keeps the
    residual recursion contracting, which least squares alone does not
    guarantee when the MA lags are nearly collinear with the AR lags.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size == 0:
        return theta
    if not np.all(np.isfinite(theta)):
        raise EstimationError("non-finite MA coefficients")
    roots = np.roots(np.r_[theta[::-1], 1.0])
    if roots.size == 0 or np.all(np.abs(roots) >= floor):
        return theta
    mod = np.abs(roots)
    roots = np.where(mod < 1.0, roots / mod**2, roots)
    mod = np.abs(roots)
    roots = np.where(mod < floor, roots / mod * floor, roots)
    # prod(1 - B / r) expanded in powers of B
    poly = np.real(np.poly(1.0 / roots))
    return poly[1 : theta.size + 1]


def _fit_arima_z(z: np.ndarray, p: int, d: int, q: int) -> ArimaModel:
    y = np.diff(z) if d == 1 else z
    if y.size <= p + 1:
        raise InputError(f"series too short for ARIMA(p={p}, d={d})")
    phi, theta = _hannan_rissanen(y, p, q)
    theta = make_invertible(theta)
    model = ArimaModel(p, d, q, phi, theta)
    preds = model.one_step(z)[: z.size]
    resid = np.nan_to_num(z - preds)
    tail = resid[-q:] if q else np.zeros(0)
    return ArimaModel(p, d, q, phi, theta, residual_history=tail)


def fit_arima(train: TimeSeries, p: int = DEFAULT_P, d_candidates=(0, 1), q_candidates=(1, 2),
              val_fraction: float = 0.2) -> ForecastModel:
    """Hannan-Rissanen ARIMA with (d, q) chosen by one-step MSE on the last part of ``train``."""
    _check_train(train, p)
    stats, zs = _standardized(train)
    z = zs.values
    n_val = max(1, int(np.floor(val_fraction * z.size)))
    n_fit = z.size - n_val
    scores = {}
    for d in d_candidates:
        for q in q_candidates:
            try:
                cand = _fit_arima_z(z[:n_fit], p, d, q)
            except (EstimationError, InputError) as exc:
                logger.debug("ARIMA candidate d=%d q=%d rejected: %s", d, q, exc)
                continue
            if n_fit < p + d:
                continue
            with np.errstate(all="ignore"):
                pred = cand.one_step(z)[n_fit : z.size]
                score = float(np.mean((pred - z[n_fit:]) ** 2))
            if np.isfinite(score):
                scores[(d, q)] = score
    if not scores:
        raise EstimationError("no ARIMA candidate could be estimated")
    d, q = min(scores, key=lambda k: (scores[k], k))
    logger.debug("ARIMA selection scores %s -> d=%d q=%d", scores, d, q)
    return ForecastModel("arima", p, stats, arima=_fit_arima_z(z, p, d, q))


def fit_model(variant: str, train: TimeSeries, cfg: TrainConfig = TrainConfig(), p: int = DEFAULT_P, **kw) -> ForecastModel:
    """Dispatch on a variant tag (``ar_kan``, ``ar_mlp``, ``kan``, ``mlp``, ``arima``, ``ar``)."""
    if variant == "ar_kan":
        return fit_ar_kan(train, cfg, p, **kw)
    if variant == "ar_mlp":
        return fit_ar_mlp(train, cfg, p, **kw)
    if variant in ("kan", "mlp"):
        return fit_plain(variant, train, cfg, p, **kw)
    if variant == "arima":
        return fit_arima(train, p, **kw)
    if variant == "ar":
        return fit_ar_only(train, p, **kw)
    raise InputError(f"unknown model variant {variant!r}")


def forecast_one_step(model: ForecastModel, history: TimeSeries) -> float:
    """Forecast the sample following ``history``, in original units."""
    x = history.values if isinstance(history, TimeSeries) else np.asarray(history, dtype=np.float64)
    if x.size < model.min_history:
        raise InputError(f"{model.variant} needs at least {model.min_history} past samples, got {x.size}")
    z = (x - model.stats.mean) / model.stats.std
    if model.variant == "arima":
        pred = model.arima.one_step(z)[-1]
    else:
        pred = model.predict_windows(z[-model.p:][::-1][None, :])[0]
    return float(pred * model.stats.std + model.stats.mean)


def evaluate(model, full_series: TimeSeries, split_ratio: float = 0.8):
    """Rolling one-step forecasts over the test part of ``full_series``.

    Returns ``(test_mse, predictions)``: the MSE is measured on the series
    standardized with the model's statistics; predictions are in original
    units, one per test sample.
    """
    train, test = split(full_series, split_ratio)
    stats = model.stats
    z = (full_series.values - stats.mean) / stats.std
    start = len(train)
    if start < model.min_history:
        raise InputError(f"training part of length {start} shorter than model history {model.min_history}")
    pred = np.asarray(model.predict_standardized(z, start), dtype=np.float64)
    mse = float(np.mean((pred - z[start:]) ** 2))
    return mse, pred * stats.std + stats.mean


# -- model documents -----------------------------------------------------------

def _kan_doc(net: KanNetwork) -> dict:
    layers = []
    for layer in net.layers:
        edges = np.concatenate([layer.coef, layer.base[..., None], layer.mix[..., None]], axis=-1)
        layers.append(edges.reshape(-1).tolist())
    g = net.grid
    return {
        "type": "kan",
        "widths": list(net.widths),
        "grid": {"lo": g.lo, "hi": g.hi, "intervals": g.intervals, "degree": g.degree},
        "base_activation": net.base_activation,
        "edge_layout": "coeffs..., base_weight, mix_weight",
        "layers": layers,
    }


def _kan_from_doc(doc: dict) -> KanNetwork:
    grid = SplineGrid(**doc["grid"])
    widths = [int(w) for w in doc["widths"]]
    layers = []
    for ell, flat in enumerate(doc["layers"]):
        arr = np.asarray(flat, dtype=np.float64).reshape(widths[ell], widths[ell + 1], grid.n_basis + 2)
        layers.append(KanLayer(arr[..., :-2].copy(), arr[..., -2].copy(), arr[..., -1].copy()))
    return KanNetwork(widths, layers, grid, doc.get("base_activation", "silu"))


def _mlp_doc(net: MlpNetwork) -> dict:
    return {
        "type": "mlp",
        "widths": list(net.widths),
        "activation": net.activation,
        "weights": [W.tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _mlp_from_doc(doc: dict) -> MlpNetwork:
    return MlpNetwork(
        [int(w) for w in doc["widths"]],
        [np.asarray(W, dtype=np.float64) for W in doc["weights"]],
        [np.asarray(b, dtype=np.float64) for b in doc["biases"]],
        doc.get("activation", "relu"),
    )


def to_document(model: ForecastModel) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "variant": model.variant,
        "p": model.p,
        "stats": {"mean": model.stats.mean, "std": model.stats.std},
    }
    if model.ar is not None:
        doc["ar"] = {"type": "ar", "p": model.ar.p, "d": model.ar.d, "coeffs": model.ar.coeffs.tolist()}
    if model.network is not None:
        doc["network"] = _kan_doc(model.network) if isinstance(model.network, KanNetwork) else _mlp_doc(model.network)
    if model.arima is not None:
        a = model.arima
        doc["arima"] = {
            "p": a.p, "d": a.d, "q": a.q,
            "phi": a.phi.tolist(), "theta": a.theta.tolist(),
            "residual_history": a.residual_history.tolist(),
        }
    if model.history is not None:
        doc["training"] = {
            "epochs": len(model.history.val_loss),
            "best_epoch": model.history.best_epoch,
            "final_val_loss": model.history.final_val_loss,
        }
    return doc


def from_document(doc: dict) -> ForecastModel:
    try:
        version = doc["format_version"]
        if version != FORMAT_VERSION:
            raise InputError(f"unsupported model format_version {version!r}")
        stats = StandardizationStats(float(doc["stats"]["mean"]), float(doc["stats"]["std"]))
        ar = network = arima = None
        if "ar" in doc:
            ar = ArModel(int(doc["ar"]["p"]), doc["ar"]["coeffs"], int(doc["ar"]["d"]))
        if "network" in doc:
            kind = doc["network"]["type"]
            if kind == "kan":
                network = _kan_from_doc(doc["network"])
            elif kind == "mlp":
                network = _mlp_from_doc(doc["network"])
            else:
                raise InputError(f"unknown network type {kind!r}")
        if "arima" in doc:
            a = doc["arima"]
            arima = ArimaModel(int(a["p"]), int(a["d"]), int(a["q"]), a["phi"], a["theta"],
                               a.get("residual_history", []))
        return ForecastModel(doc["variant"], int(doc["p"]), stats, ar=ar, network=network, arima=arima)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed model document: {exc!r}") from exc


def save_model(model: ForecastModel, path) -> None:
    Path(path).write_text(json.dumps(to_document(model), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> ForecastModel:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: model document must be a JSON object")
    return from_document(doc)
