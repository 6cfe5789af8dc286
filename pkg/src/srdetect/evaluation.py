"""Delay-adjusted segment evaluation, per-class reporting and timing.

A maximal run of true anomalies ``[s, e]`` is credited in full when any
prediction falls in ``[s, min(e, s + k)]`` and zeroed in full otherwise.
Predictions outside true segments are kept as they are. Precision, recall and
F1 are then computed point-wise on the adjusted predictions, with confusion
counts pooled over all series.

Report JSON (``EvalReport.to_dict``)::

    {"precision": float, "recall": float, "f1": float,
     "tp": int, "fp": int, "fn": int, "tn": int,
     "per_class": {"seasonal": float, ...}, "class_std": float | null,
     "total_points": int, "wall_time_seconds": float}
"""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .detector import DetectionResult
from .timeseries import TimeSeries

DEFAULT_DELAYS = {"minute": 7, "hour": 3, "day": 1}


@dataclass(frozen=True)
class EvalConfig:
    # None picks the delay from each series' granularity
    delay_k: Optional[int] = None

    def __post_init__(self):
        if self.delay_k is not None and (isinstance(self.delay_k, bool) or self.delay_k < 0):
            raise ValueError("delay_k must be a non-negative integer")

    def delay_for(self, granularity: str) -> int:
        return DEFAULT_DELAYS[granularity] if self.delay_k is None else self.delay_k


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)


def f1_score(precision: float, recall: float) -> float:
    denom = precision + recall
    return 2 * precision * recall / denom if denom > 0 else 0.0


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    per_class: dict[str, float] = field(default_factory=dict)
    class_std: Optional[float] = None
    total_points: int = 0
    wall_time_seconds: float = 0.0

    @classmethod
    def from_confusion(cls, c: Confusion, **extra) -> "EvalReport":
        return cls(c.precision, c.recall, c.f1, c.tp, c.fp, c.fn, c.tn, **extra)

    def to_dict(self) -> dict:
        return asdict(self)


def _as_bool(v, name: str) -> np.ndarray:
    arr = np.asarray(v)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    return arr.astype(bool)


def segments(truth) -> list[tuple[int, int]]:
    """Maximal runs of True as inclusive ``(start, end)`` pairs."""
    t = np.concatenate([[False], _as_bool(truth, "truth"), [False]]).astype(np.int8)
    d = np.diff(t)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def adjust(truth, pred, k: int) -> np.ndarray:
    truth = _as_bool(truth, "truth")
    pred = _as_bool(pred, "pred")
    if truth.shape != pred.shape:
        raise ValueError(f"length mismatch: {truth.size} vs {pred.size}")
    if k < 0:
        raise ValueError("k must be non-negative")
    out = pred.copy()
    for s, e in segments(truth):
        out[s : e + 1] = pred[s : min(e, s + k) + 1].any()
    return out


def confusion(truth, pred, k: int) -> Confusion:
    truth = _as_bool(truth, "truth")
    adj = adjust(truth, pred, k)
    tp = int(np.sum(adj & truth))
    fp = int(np.sum(adj & ~truth))
    fn = int(np.sum(~adj & truth))
    return Confusion(tp, fp, fn, truth.size - tp - fp - fn)


def score(truth, pred, k: int) -> EvalReport:
    c = confusion(truth, pred, k)
    return EvalReport.from_confusion(c, total_points=len(np.asarray(truth)))


def class_std(per_class: dict[str, float]) -> Optional[float]:
    """Population standard deviation of per-class F1 values."""
    if not per_class:
        return None
    return float(np.std(list(per_class.values())))


Detector = Callable[[TimeSeries], Sequence[DetectionResult]]


def evaluate_detector(
    detector: Detector, dataset: Sequence[TimeSeries], eval_cfg: EvalConfig = EvalConfig()
) -> EvalReport:
    """Stream every series through ``detector`` and pool the delay-adjusted counts.

    ``detector`` maps a series to one result per point, in order. Wall time
    covers the detector calls only.
    """
    for s in dataset:
        if not s.is_labeled:
            raise ValueError(f"series {s.id!r} has no ground-truth labels")
    total = Confusion()
    by_class: dict[str, Confusion] = defaultdict(Confusion)
    elapsed = 0.0
    points = 0
    for s in dataset:
        t0 = time.perf_counter()
        results = detector(s)
        elapsed += time.perf_counter() - t0
        if len(results) != len(s):
            raise ValueError(f"detector returned {len(results)} results for {len(s)} points")
        pred = np.fromiter((r.is_anomaly for r in results), dtype=bool, count=len(results))
        c = confusion(s.labels, pred, eval_cfg.delay_for(s.granularity))
        total = total + c
        points += len(s)
        if s.class_tag is not None:
            by_class[s.class_tag] = by_class[s.class_tag] + c
    per_class = {tag: c.f1 for tag, c in sorted(by_class.items())}
    return EvalReport.from_confusion(
        total,
        per_class=per_class,
        class_std=class_std(per_class),
        total_points=points,
        wall_time_seconds=elapsed,
    )


def best_threshold_f1(
    truths: Sequence[np.ndarray], scores: Sequence[np.ndarray], ks: Sequence[int]
) -> tuple[float, float]:
    """Highest pooled F1 over all thresholds ``score > t``; returns ``(f1, t)``."""
    pooled = np.unique(np.concatenate([np.asarray(s, dtype=float) for s in scores]))
    # predicting at score > t only changes at observed scores; test just below each
    cands = np.concatenate([[-np.inf], pooled[:-1]]) if pooled.size else np.array([-np.inf])
    if pooled.size > 2000:
        cands = np.quantile(pooled, np.linspace(0, 1, 2001))[:-1]
    best = (0.0, float(cands[0]) if cands.size else 0.0)
    for t in cands:
        c = Confusion()
        for truth, sc, k in zip(truths, scores, ks):
            c = c + confusion(truth, np.asarray(sc) > t, k)
        if c.f1 > best[0]:
            best = (c.f1, float(t))
    return best
