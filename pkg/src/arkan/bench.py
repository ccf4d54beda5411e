"""Benchmark grid: fit and evaluate every (dataset, sigma, model, seed) cell.

Results are written as a long-form CSV plus a markdown pivot laid out like
a comparison table (rows: dataset and sigma, columns: models, cells: median
test MSE over seeds with the row minimum in bold).
"""

from __future__ import annotations

import csv
import json
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ArkanError, InputError
from .models import VARIANTS, evaluate, fit_model
from .nn import TrainConfig
from .series import TimeSeries, load_csv, split
from .synth import FUNCTIONS, SynthSpec, sample

__all__ = [
    "CSV_COLUMNS",
    "BenchSpec",
    "BenchRow",
    "BenchReport",
    "normalize_variant",
    "load_config",
    "config_for",
    "run_bench",
    "read_bench_csv",
]

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["dataset", "sigma", "model", "seed", "test_mse", "train_seconds", "status"]


def normalize_variant(tag: str) -> str:
    v = tag.strip().lower().replace("-", "_")
    if v not in VARIANTS:
        raise InputError(f"unknown model {tag!r}; expected one of {', '.join(VARIANTS)}")
    return v


def load_config(path) -> dict:
    """Parse a JSON training config.

    Top-level keys are ``TrainConfig`` fields; keys named after a model
    variant hold per-variant overrides. Anything else is rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise InputError(f"{path}: config must be a JSON object")
    base, overrides = {}, {}
    for key, value in raw.items():
        if key in VARIANTS:
            if not isinstance(value, dict):
                raise InputError(f"{path}: override for {key!r} must be an object")
            TrainConfig.from_dict(value)  # validates keys
            overrides[key] = value
        else:
            base[key] = value
    TrainConfig.from_dict(base)
    return {"base": base, "overrides": overrides}


def config_for(config: Optional[dict], variant: str, seed: Optional[int] = None) -> TrainConfig:
    data = {}
    if config:
        data.update(config.get("base", {}))
        data.update(config.get("overrides", {}).get(variant, {}))
    if seed is not None:
        data["seed"] = seed
    return TrainConfig.from_dict(data)


@dataclass
class BenchSpec:
    functions: list = field(default_factory=lambda: ["f1", "f2"])
    datasets: list = field(default_factory=list)
    sigmas: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4])
    models: list = field(default_factory=lambda: ["arima", "ar_kan", "ar_mlp", "kan", "mlp"])
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    out: Optional[str] = None
    config: Optional[dict] = None
    split_ratio: float = 0.8
    p: int = 20

    def __post_init__(self):
        self.models = [normalize_variant(m) for m in self.models]
        for f in self.functions:
            if f not in FUNCTIONS:
                raise InputError(f"unknown function {f!r}")
        if not (self.functions or self.datasets):
            raise InputError("bench needs at least one function or dataset")
        if self.functions and not self.sigmas:
            raise InputError("synthetic functions need at least one sigma")
        if not self.models or not self.seeds:
            raise InputError("bench needs at least one model and one seed")
        if any(s < 0 for s in self.sigmas):
            raise InputError("sigmas must be non-negative")

    def cells(self) -> list:
        """Every requested (dataset, sigma, model, seed) in canonical order."""
        out = []
        for f in self.functions:
            for s in self.sigmas:
                for m in self.models:
                    for seed in self.seeds:
                        out.append((f, s, m, seed))
        for path in self.datasets:
            for m in self.models:
                for seed in self.seeds:
                    out.append((str(path), None, m, seed))
        return out


@dataclass
class BenchRow:
    dataset: str
    sigma: Optional[float]
    model: str
    seed: int
    test_mse: Optional[float]
    train_seconds: Optional[float]
    status: str
    predictions: Optional[np.ndarray] = None
    actual: Optional[np.ndarray] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _dataset_label(dataset: str) -> str:
    return dataset if dataset in FUNCTIONS else Path(dataset).stem


def _load_series(dataset: str, sigma, seed: int) -> TimeSeries:
    if dataset in FUNCTIONS:
        return sample(SynthSpec(dataset, float(sigma), seed=seed))
    return load_csv(dataset)


def _run_cell(cell, config, split_ratio, p, keep_predictions):
    dataset, sigma, model, seed = cell
    label = _dataset_label(dataset)
    try:
        ts = _load_series(dataset, sigma, seed)
        train, test = split(ts, split_ratio)
        start = time.perf_counter()
        fitted = fit_model(model, train, config_for(config, model, seed), p=p)
        elapsed = time.perf_counter() - start
        mse, pred = evaluate(fitted, ts, split_ratio)
        return BenchRow(label, sigma, model, seed, mse, elapsed, "ok",
                        pred if keep_predictions else None,
                        test.values if keep_predictions else None)
    except (ArkanError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.info("cell %s failed: %s", cell, exc)
        reason = f"error: {type(exc).__name__}: {exc}".replace("\n", " ").replace(",", ";")
        return BenchRow(label, sigma, model, seed, None, None, reason)


class BenchReport:
    def __init__(self, rows):
        self.rows = list(rows)

    @property
    def n_failed(self) -> int:
        return sum(not r.ok for r in self.rows)

    def medians(self) -> dict:
        """Median test MSE over successful seeds, keyed by (dataset, sigma, model)."""
        groups = {}
        for r in self.rows:
            groups.setdefault((r.dataset, r.sigma, r.model), []).append(r)
        out = {}
        for key, rows in groups.items():
            vals = [r.test_mse for r in rows if r.ok]
            out[key] = (statistics.median(vals) if vals else None, len(vals), len(rows))
        return out

    def write_csv(self, path, timing: bool = False) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                writer.writerow([
                    r.dataset,
                    "" if r.sigma is None else repr(float(r.sigma)),
                    r.model,
                    r.seed,
                    "" if r.test_mse is None else repr(r.test_mse),
                    "" if (r.train_seconds is None or not timing) else f"{r.train_seconds:.3f}",
                    r.status,
                ])

    def markdown(self) -> str:
        meds = self.medians()
        models = list(dict.fromkeys(r.model for r in self.rows))
        row_keys = list(dict.fromkeys((r.dataset, r.sigma) for r in self.rows))
        header = "| dataset | sigma | " + " | ".join(models) + " |"
        lines = [header, "|" + "---|" * (len(models) + 2)]
        for dataset, sigma in row_keys:
            cells = {m: meds.get((dataset, sigma, m)) for m in models}
            vals = [c[0] for c in cells.values() if c and c[0] is not None]
            best = min(vals) if vals else None
            parts = []
            for m in models:
                med, n_ok, n_all = cells[m] if cells[m] else (None, 0, 0)
                if med is None:
                    parts.append("error")
                    continue
                text = f"{med:.4f}"
                if med == best:
                    text = f"**{text}**"
                if n_ok < n_all:
                    text += f" ({n_ok}/{n_all} ok)"
                parts.append(text)
            sig = "" if sigma is None else f"{sigma:g}"
            lines.append(f"| {dataset} | {sig} | " + " | ".join(parts) + " |")
        return "\n".join(lines) + "\n"

    def write_predictions(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for r in self.rows:
            if r.predictions is None:
                continue
            sig = "" if r.sigma is None else f"_sigma{r.sigma:g}"
            path = directory / f"{r.dataset}{sig}_{r.model}_seed{r.seed}.csv"
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["index", "actual", "predicted"])
                for i, (a, p_) in enumerate(zip(r.actual, r.predictions)):
                    writer.writerow([i, repr(float(a)), repr(float(p_))])


def run_bench(spec: BenchSpec, jobs: int = 1, keep_predictions: bool = False) -> BenchReport:
    """Run every cell; failures become error rows instead of aborting the grid."""
    cells = spec.cells()
    args = (spec.config, spec.split_ratio, spec.p, keep_predictions)
    if jobs <= 1:
        rows = [_run_cell(c, *args) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, c, *args) for c in cells]
            # collected in submission order, so output is independent of scheduling
            rows = [f.result() for f in futures]
    return BenchReport(rows)


def read_bench_csv(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
