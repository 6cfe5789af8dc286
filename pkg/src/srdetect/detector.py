"""Threshold detector on top of the saliency map, in streaming form.

For every new point ``x_n`` the detector takes the trailing ``ω - κ`` observed
values, appends ``κ`` estimated points (see :func:`extend_window`), runs the spectral
residual transform on the resulting length-``ω`` window and scores the
saliency at the position of ``x_n``. Points before index ``ω - 1`` are
reported as normal with score 0 so the output stays aligned with the input.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .spectral import SaliencyMap, SrConfig, saliency
from .timeseries import TimeSeries

SCORE_EPSILON = 1e-8


@dataclass(frozen=True)
class DetectionResult:
    index: int
    score: float
    is_anomaly: bool


def _local_average(s: np.ndarray, i: int, z: int) -> float:
    return float(np.mean(s[max(0, i - z) : i]))


def threshold_decide(s: SaliencyMap | np.ndarray, i: int, cfg: SrConfig) -> DetectionResult:
    """Relative deviation of ``s[i]`` from the mean of up to ``z`` preceding values."""
    values = s.values if isinstance(s, SaliencyMap) else np.asarray(s, dtype=float)
    if not 0 <= i < len(values):
        raise IndexError(f"index {i} outside saliency map of length {len(values)}")
    if i == 0:
        return DetectionResult(0, 0.0, False)
    avg = _local_average(values, i, cfg.score_window)
    if avg == 0:
        avg = SCORE_EPSILON
    score = (float(values[i]) - avg) / avg
    return DetectionResult(i, score, score > cfg.threshold)


def estimate_tail(x, cfg: SrConfig) -> np.ndarray:
    """``κ`` copies of the point extrapolated from the mean slope to the last ``m`` points."""
    x = np.asarray(x, dtype=float)
    m = cfg.gradient_points
    if x.size < m + 1:
        raise ValueError(f"need at least {m + 1} points to estimate the tail, got {x.size}")
    last = x[-1]
    steps = np.arange(1, m + 1)
    grad = np.mean((last - x[-1 - steps]) / steps)
    nxt = x[-m] + grad * m
    return np.full(cfg.estimated_points, nxt)


def extend_window(real: np.ndarray, cfg: SrConfig) -> np.ndarray:
    """Append the ``κ`` estimated points after the latest observed value.

    The extrapolated tail overshoots by a factor of about H_m whenever x_n
    itself jumps, which moves the salient edge off x_n; holding x_n keeps a
    jump at x_n as the salient point and still removes the wrap-around edge.
    """
    if not cfg.center_target:
        return real
    if cfg.tail_mode == "hold":
        tail = np.full(cfg.estimated_points, real[-1])
    else:
        tail = estimate_tail(real, cfg)
    return np.concatenate([real, tail])


def window_saliency(real: np.ndarray, cfg: SrConfig) -> np.ndarray:
    """Saliency of the extended window built from the ``cfg.real_points`` latest values."""
    return saliency(extend_window(real, cfg), cfg.avg_filter, cfg.log_epsilon)


class StreamingBuffer:
    """Fixed-capacity history exposing the latest values as a contiguous view.

    Every value is written twice into a buffer of twice the capacity, so the
    trailing window is always one slice without copying.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._buf = np.zeros(2 * capacity)
        self._pos = 0
        self.count = 0

    def push(self, value: float) -> None:
        self._buf[self._pos] = value
        self._buf[self._pos + self.capacity] = value
        self._pos = (self._pos + 1) % self.capacity
        self.count += 1

    def view(self) -> np.ndarray:
        return self._buf[self._pos : self._pos + self.capacity]


class SrDetector:
    """Per-series streaming detector; feed points in time order via :meth:`update`."""

    def __init__(self, cfg: SrConfig):
        self.cfg = cfg
        self._history = StreamingBuffer(cfg.real_points)
        self.index = -1

    def update(self, value: float, filled: bool = False) -> DetectionResult:
        cfg = self.cfg
        self._history.push(value)
        self.index += 1
        if self.index < cfg.window - 1:
            return DetectionResult(self.index, 0.0, False)
        sal = window_saliency(self._history.view(), cfg)
        pos = cfg.target_position
        avg = _local_average(sal, pos, cfg.score_window)
        if avg == 0:
            avg = SCORE_EPSILON
        score = (float(sal[pos]) - avg) / avg
        return DetectionResult(self.index, score, score > cfg.threshold and not filled)


def detect_stream(series: TimeSeries, cfg: SrConfig) -> list[DetectionResult]:
    if len(series) < cfg.window:
        raise ValueError(f"series has {len(series)} points, fewer than window {cfg.window}")
    det = SrDetector(cfg)
    filled = series.filled
    return [det.update(v, f) for v, f in zip(series.values.tolist(), filled.tolist())]


def worker_count(default: int = 1) -> int:
    """Parallelism bound from ``SRDETECT_THREADS``."""
    raw = os.environ.get("SRDETECT_THREADS")
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"SRDETECT_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def detect_many(
    series: Sequence[TimeSeries],
    cfg: SrConfig | Callable[[TimeSeries], SrConfig],
    detector: Optional[Callable[[TimeSeries, SrConfig], list[DetectionResult]]] = None,
    workers: Optional[int] = None,
) -> list[list[DetectionResult]]:
    """Run a detector over many series; output order matches input order."""
    detector = detector or detect_stream
    pick = cfg if callable(cfg) else (lambda _s: cfg)
    workers = workers or worker_count()
    if workers == 1 or len(series) <= 1:
        return [detector(s, pick(s)) for s in series]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: detector(s, pick(s)), series))
