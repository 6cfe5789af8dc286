"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 missing file, 4 invalid config,
5 invalid input data, 6 unreadable model file, 7 bench latency budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .cnn import ModelFormatError, detect_cnn, load_model, save_model, train
from .config import AppConfig, ConfigError, load_config
from .detector import DetectionResult, SrDetector, detect_stream
from .evaluation import EvalConfig, score
from .spectral import SrConfig
from .synth import InjectionParams, TrainingSet, build_training_set, generate_base, inject
from .timeseries import GRANULARITY_SECONDS, IngestError, TimeSeries, ingest, write_csv

log = logging.getLogger("srdetect")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_CONFIG = 4
EXIT_DATA = 5
EXIT_MODEL = 6
EXIT_BUDGET = 7


class MissingFileError(Exception):
    pass


def _require(path: Optional[str], flag: str) -> Path:
    if path is None:
        raise ConfigError(f"{flag} is required")
    p = Path(path)
    if not p.exists():
        raise MissingFileError(f"{flag}: no such file {path}")
    return p


def _config(args) -> AppConfig:
    if args.config is not None:
        _require(args.config, "--config")
    cfg = load_config(args.config, granularity=getattr(args, "granularity", None))
    sr_changes = {}
    if getattr(args, "window", None) is not None:
        sr_changes["window"] = args.window
    if getattr(args, "threshold", None) is not None:
        sr_changes["threshold"] = args.threshold
    if sr_changes:
        try:
            cfg = dataclasses.replace(cfg, sr=cfg.sr.replace(**sr_changes))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg


def _input(args, cfg: AppConfig) -> Path:
    return _require(args.input or cfg.io.input, "--input")


def write_results(results: Sequence[DetectionResult], series: TimeSeries, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["index", "timestamp", "score", "is_anomaly"])
    ts = series.timestamps.tolist()
    for r in results:
        w.writerow([r.index, ts[r.index], repr(r.score), int(r.is_anomaly)])


def _emit(path: Optional[str], writer) -> None:
    if path is None:
        writer(sys.stdout)
    else:
        with open(path, "w", newline="") as fh:
            writer(fh)


def cmd_detect(args) -> int:
    cfg = _config(args)
    series = ingest(_input(args, cfg), cfg.granularity)
    results = detect_stream(series, cfg.sr)
    _emit(args.output or cfg.io.output, lambda fh: write_results(results, series, fh))
    return EXIT_OK


def cmd_detect_cnn(args) -> int:
    cfg = _config(args)
    series = ingest(_input(args, cfg), cfg.granularity)
    model = load_model(_require(args.model or cfg.io.model, "--model"))
    threshold = cfg.decision_threshold if args.decision_threshold is None else args.decision_threshold
    results = detect_cnn(series, model, cfg.sr, threshold)
    _emit(args.output or cfg.io.output, lambda fh: write_results(results, series, fh))
    return EXIT_OK


def cmd_inject(args) -> int:
    cfg = _config(args)
    series = ingest(_input(args, cfg), cfg.granularity)
    p = cfg.injection
    params = InjectionParams(
        ratio=p.ratio if args.ratio is None else args.ratio,
        seed=p.seed if args.seed is None else args.seed,
        local_window=p.local_window,
        r_range=p.r_range,
    )
    labeled, idx = inject(series, params, cfg.sr)
    out = args.output or cfg.io.output
    if out is None:
        raise ConfigError("--output is required")
    write_csv(labeled, out)
    log.info("injected %d anomalies at %s", len(idx), idx.tolist())
    return EXIT_OK


def cmd_build_training_set(args) -> int:
    cfg = _config(args)
    seed = cfg.injection.seed if args.seed is None else args.seed
    if args.input:
        sources = [ingest(_require(p, "--input"), cfg.granularity) for p in args.input]
    elif args.synthetic:
        kinds = ("seasonal", "stable", "unstable")
        sources = [
            generate_base(kinds[i % 3], args.length, seed + i, granularity=cfg.granularity, window=cfg.sr.window)
            for i in range(args.synthetic)
        ]
    else:
        raise ConfigError("give --input files or --synthetic N")
    p = cfg.injection
    ds = build_training_set(sources, InjectionParams(p.ratio, seed, p.local_window, p.r_range), cfg.sr)
    ds.save(args.output)
    log.info("wrote %d pairs (%d positive)", len(ds), int(ds.labels.sum()))
    return EXIT_OK


def cmd_train_cnn(args) -> int:
    cfg = _config(args)
    data = TrainingSet.load(_require(args.data, "--data"))
    tcfg = cfg.train
    if args.seed is not None:
        tcfg = dataclasses.replace(tcfg, seed=args.seed)
    model = train(data, tcfg)
    save_model(model, args.out)
    log.info("loss %s", " ".join(f"{v:.5f}" for v in model.loss_history))
    return EXIT_OK


def _read_predictions(path: Path) -> dict[int, bool]:
    preds = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"timestamp", "is_anomaly"} <= set(reader.fieldnames):
            raise IngestError("prediction file needs timestamp and is_anomaly columns", 1)
        for line, row in enumerate(reader, start=2):
            try:
                preds[int(row["timestamp"])] = row["is_anomaly"].strip() == "1"
            except ValueError:
                raise IngestError(f"bad timestamp {row['timestamp']!r}", line) from None
    return preds


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    truth = ingest(_require(args.truth, "--truth"), cfg.granularity)
    if not truth.is_labeled:
        raise IngestError("truth file has no label column")
    preds = _read_predictions(_require(args.pred, "--pred"))
    ts = truth.timestamps.tolist()
    missing = [t for t in ts if t not in preds]
    if missing:
        raise IngestError(f"{len(missing)} truth timestamps have no prediction (first {missing[0]})")
    pred = np.array([preds[t] for t in ts])
    eval_cfg = cfg.eval if args.k is None else EvalConfig(args.k)
    t0 = time.perf_counter()
    report = score(truth.labels, pred, eval_cfg.delay_for(truth.granularity))
    report.wall_time_seconds = time.perf_counter() - t0
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.report:
        Path(args.report).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def run_bench(window: int, points: int, seed: int) -> dict:
    cfg = SrConfig(window=window)
    series = generate_base("seasonal", points + window, seed, granularity="minute", window=window)
    det = SrDetector(cfg)
    values = series.values.tolist()
    for v in values[: window - 1]:
        det.update(v)
    lat = np.empty(points)
    clock = time.perf_counter_ns
    start = clock()
    for i, v in enumerate(values[window - 1 : window - 1 + points]):
        t0 = clock()
        det.update(v)
        lat[i] = clock() - t0
    total = (clock() - start) / 1e9
    lat_ms = lat / 1e6
    return {
        "window": window,
        "points": points,
        "seconds": total,
        "points_per_second": points / total,
        "latency_ms": {
            "mean": float(lat_ms.mean()),
            "p50": float(np.percentile(lat_ms, 50)),
            "p90": float(np.percentile(lat_ms, 90)),
            "p99": float(np.percentile(lat_ms, 99)),
            "max": float(lat_ms.max()),
        },
    }


def cmd_bench(args) -> int:
    window = args.window or 1440
    result = run_bench(window, args.points, 0 if args.seed is None else args.seed)
    text = json.dumps(result, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    if args.budget_ms is not None and result["latency_ms"]["mean"] > args.budget_ms:
        print(f"mean latency exceeds budget of {args.budget_ms} ms", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srdetect", description="Spectral residual anomaly detection")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def common(p, *, window=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--granularity", choices=sorted(GRANULARITY_SECONDS))
        p.add_argument("--seed", type=int)
        if window:
            p.add_argument("--window", type=int)
            p.add_argument("--threshold", type=float)

    p = sub.add_parser("detect", help="run the SR detector over a series")
    common(p)
    p.add_argument("--input")
    p.add_argument("--output")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("detect-cnn", help="run the SR-CNN detector over a series")
    common(p)
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--model")
    p.add_argument("--decision-threshold", type=float)
    p.set_defaults(func=cmd_detect_cnn)

    p = sub.add_parser("inject", help="inject labeled synthetic anomalies")
    common(p)
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--ratio", type=float)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("build-training-set", help="assemble saliency windows for CNN training")
    common(p)
    p.add_argument("--input", nargs="+")
    p.add_argument("--synthetic", type=int, help="generate N synthetic base series instead")
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_build_training_set)

    p = sub.add_parser("train-cnn", help="train the CNN discriminator")
    common(p, window=False)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_cnn)

    p = sub.add_parser("evaluate", help="delay-adjusted precision/recall/F1")
    common(p, window=False)
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="per-point latency of the SR detector")
    p.add_argument("--window", type=int)
    p.add_argument("--points", type=int, default=100_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--output")
    p.add_argument("--budget-ms", type=float)
    p.set_defaults(func=cmd_bench)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except MissingFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelFormatError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (IngestError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
