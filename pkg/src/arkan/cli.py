"""Command-line entry point: ``arkan {synth,fit,eval,bench,periodicity}``.

Exit codes: 0 success, 1 numerical or internal failure, 2 usage or input error.
Logging verbosity comes from ``ARKAN_LOG`` (error, info or debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from .analysis import periodicity_strength
from .bench import BenchSpec, config_for, load_config, normalize_variant, run_bench
from .errors import ArkanError, InputError
from .models import evaluate, fit_model, load_model, save_model
from .series import load_csv, split, write_csv
from .synth import FUNCTIONS, SynthSpec, sample

logger = logging.getLogger("arkan")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _configure_logging():
    level = os.environ.get("ARKAN_LOG", "error").strip().lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(value) or value < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative number, got {text}")
    return value


def _pos_float(text: str) -> float:
    value = _nonneg_float(text)
    if value == 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _ratio(text: str) -> float:
    value = _pos_float(text)
    if value >= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return value


def _pos_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _write_json(obj, out) -> None:
    text = json.dumps(obj, indent=1) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def run_synth(args) -> int:
    spec = SynthSpec(args.function, args.sigma, n_samples=args.samples, t_max=args.tmax, seed=args.seed)
    ts = sample(spec)
    write_csv(ts, args.out)
    print(f"wrote {len(ts)} rows to {args.out}")
    return EXIT_OK


def run_fit(args) -> int:
    variant = normalize_variant(args.model)
    ts = load_csv(args.data)
    train, _ = split(ts, args.split)
    config = load_config(args.config) if args.config else None
    start = time.perf_counter()
    model = fit_model(variant, train, config_for(config, variant, args.seed), p=args.p)
    elapsed = time.perf_counter() - start
    save_model(model, args.out)
    if args.history and model.history is not None:
        model.history.to_csv(args.history)
    val = model.history.final_val_loss if model.history is not None else float("nan")
    extra = ""
    if model.arima is not None:
        extra = f" (selected d={model.arima.d}, q={model.arima.q})"
    print(f"model {variant}{extra} written to {args.out}; final validation loss {val:.6g}; "
          f"elapsed {elapsed:.2f}s")
    return EXIT_OK


def run_eval(args, model=None) -> int:
    ts = load_csv(args.data)
    model = model if model is not None else load_model(args.model)
    mse, pred = evaluate(model, ts, args.split)
    report = {"test_mse": mse, "n_test": int(pred.size), "predictions": [float(v) for v in pred]}
    _write_json(report, args.out)
    return EXIT_OK


def run_bench_cmd(args) -> int:
    functions, datasets = [], list(args.data or [])
    for item in args.functions or []:
        (functions if item in FUNCTIONS else datasets).append(item)
    for path in datasets:
        if not Path(path).is_file():
            raise InputError(f"data file not found: {path}")
    config = load_config(args.config) if args.config else None
    spec = BenchSpec(functions=functions, datasets=datasets, sigmas=args.sigmas, models=args.models,
                     seeds=args.seeds, out=args.out, config=config, split_ratio=args.split, p=args.p)
    start = time.perf_counter()
    report = run_bench(spec, jobs=args.jobs, keep_predictions=bool(args.predictions))
    elapsed = time.perf_counter() - start
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "bench.csv", timing=args.timing)
    (out / "bench.md").write_text(report.markdown(), encoding="utf-8")
    if args.predictions:
        report.write_predictions(args.predictions)
    print(report.markdown(), end="")
    print(f"{len(report.rows)} cells, {report.n_failed} failed, {elapsed:.1f}s; results in {out}")
    return EXIT_FAILURE if report.n_failed else EXIT_OK


def _csv_files(paths) -> list:
    files = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(q for q in p.iterdir() if q.suffix.lower() == ".csv"))
        else:
            files.append(p)
    return files


def run_periodicity(args) -> int:
    single = len(args.paths) == 1 and not Path(args.paths[0]).is_dir()
    rows = []
    for path in _csv_files(args.paths):
        try:
            entry = {"file": str(path), **periodicity_strength(load_csv(path)).to_dict()}
        except ArkanError as exc:
            if single:
                raise
            entry = {"file": str(path), "error": str(exc)}
        rows.append(entry)
    if single:
        _write_json(rows[0], args.out)
        return EXIT_OK
    rows.sort(key=lambda r: (-r.get("strength", -1.0), r["file"]))
    _write_json(rows, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arkan", description="AR-KAN forecasting toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="sample a noisy almost-periodic benchmark series")
    p.add_argument("--function", choices=sorted(FUNCTIONS), default="f1")
    p.add_argument("--sigma", type=_nonneg_float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=_pos_int, default=500)
    p.add_argument("--tmax", type=_pos_float, default=8 * math.pi)
    p.add_argument("--out", required=True)
    p.set_defaults(func=run_synth)

    p = sub.add_parser("fit", help="fit a model on the training part of a CSV series")
    p.add_argument("--model", required=True, help="ar-kan, ar-mlp, kan, mlp, arima or ar")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--split", type=_ratio, default=0.8)
    p.add_argument("--p", type=_pos_int, default=20, help="lag window length")
    p.add_argument("--history", help="write per-epoch losses to this CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=run_fit)

    p = sub.add_parser("eval", help="one-step teacher-forced evaluation on the test part")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", type=_ratio, default=0.8)
    p.add_argument("--out", help="report path (stdout if omitted)")
    p.set_defaults(func=run_eval)

    p = sub.add_parser("bench", help="run a (dataset x sigma x model x seed) grid")
    p.add_argument("--functions", nargs="*", default=["f1", "f2"],
                   help="synthetic functions (f1, f2) and/or CSV paths")
    p.add_argument("--data", nargs="*", default=[], help="additional CSV datasets")
    p.add_argument("--sigmas", nargs="+", type=_nonneg_float, default=[0.1, 0.2, 0.3, 0.4])
    p.add_argument("--models", nargs="+", default=["arima", "ar-kan", "ar-mlp", "kan", "mlp"])
    p.add_argument("--seeds", nargs="+", type=int, default=[1, 2, 3, 4, 5])
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--split", type=_ratio, default=0.8)
    p.add_argument("--p", type=_pos_int, default=20)
    p.add_argument("--jobs", type=_pos_int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock fit time (makes bench.csv run-dependent)")
    p.add_argument("--predictions", help="directory for per-cell prediction CSVs")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=run_bench_cmd)

    p = sub.add_parser("periodicity", help="periodicity strength of one or more CSV series")
    p.add_argument("paths", nargs="+", help="CSV files or directories of CSV files")
    p.add_argument("--out", help="report path (stdout if omitted)")
    p.set_defaults(func=run_periodicity)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"arkan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"arkan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArkanError as exc:
        print(f"arkan {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
