"""Synthetic base series, anomaly injection and CNN training-set assembly.

An injected point takes the value::

    x' = (x_bar + mean) * (1 + var) * r + x

with ``x_bar`` the average of the ``z`` preceding points, ``mean``/``var`` the
mean and population variance of the length-``ω`` window ending at the point
and ``r`` a standard-normal draw (or a signed uniform magnitude when
``r_range`` is set). Injected indices lie in ``[ω - 1, n - 1]`` and are at
least ``ω`` apart, so no detection window sees two of them.

Training-set binary layout (little-endian)::

    magic  b"SRTS"       4 bytes
    version uint16       currently 1
    window  uint32       ω
    count   uint64       number of rows
    rows    count * (ω + 1) float32   saliency window followed by label 0.0/1.0

A ``.csv`` path instead stores one row per pair: ω saliency values then the
integer label.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .detector import window_saliency
from .spectral import DEFAULT_WINDOWS, SrConfig
from .timeseries import TimeSeries

TRAINING_MAGIC = b"SRTS"
TRAINING_VERSION = 1
_TRAINING_HEADER = struct.Struct("<4sHIQ")

DEFAULT_PERIODS = {"minute": 1440, "hour": 24, "day": 7}


@dataclass(frozen=True)
class InjectionParams:
    ratio: float = 0.01
    seed: int = 0
    # None means "use cfg.score_window"
    local_window: Optional[int] = None
    # (lo, hi): |r| ~ U(lo, hi) with a random sign instead of r ~ N(0, 1)
    r_range: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if not 0 <= self.ratio < 0.5:
            raise ValueError(f"ratio must lie in [0, 0.5), got {self.ratio}")
        if self.local_window is not None and self.local_window < 1:
            raise ValueError("local_window must be positive")
        if self.r_range is not None:
            lo, hi = self.r_range
            if lo < 0 or hi < lo:
                raise ValueError(f"r_range must satisfy 0 <= lo <= hi, got {self.r_range}")
            object.__setattr__(self, "r_range", (float(lo), float(hi)))


def _pick_indices(n: int, count: int, spacing: int, lo: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw over all sorted index sets in [lo, n) with gaps of at least ``spacing``.

    Shrinking each gap by spacing - 1 maps such sets one-to-one onto plain
    subsets of a shorter range, so sampling a subset there is exact.
    """
    span = n - lo - (count - 1) * (spacing - 1)
    if span < count:
        raise ValueError(
            f"cannot place {count} injections at spacing {spacing} in {n - lo} candidate points"
        )
    picked = np.sort(rng.choice(span, size=count, replace=False))
    return lo + picked + np.arange(count) * (spacing - 1)


def injection_value(x: float, local_avg: float, mean: float, var: float, r: float) -> float:
    return (local_avg + mean) * (1 + var) * r + x


def inject(
    series: TimeSeries, params: InjectionParams, cfg: SrConfig
) -> tuple[TimeSeries, np.ndarray]:
    """Return a labeled copy of ``series`` with anomalies injected, and their indices.

    Zero ratio labels every point normal. Existing labels are overwritten.
    """
    n, w = len(series), cfg.window
    if n < w:
        raise ValueError(f"series has {n} points, fewer than window {w}")
    rng = np.random.default_rng(params.seed)
    count = math.ceil(params.ratio * n)
    idx = _pick_indices(n, count, w, w - 1, rng) if count else np.zeros(0, dtype=int)

    if params.r_range is None:
        r = rng.standard_normal(len(idx))
    else:
        lo, hi = params.r_range
        r = rng.uniform(lo, hi, len(idx)) * rng.choice([-1.0, 1.0], len(idx))

    z = params.local_window or cfg.score_window
    x = series.values.copy()
    src = series.values
    for i, ri in zip(idx.tolist(), r.tolist()):
        win = src[i - w + 1 : i + 1]
        x[i] = injection_value(src[i], float(np.mean(src[max(0, i - z) : i])), float(win.mean()), float(win.var()), ri)

    labels = np.zeros(n, dtype=bool)
    labels[idx] = True
    return series.with_values(x, labels), idx


def generate_base(
    kind: str,
    n: int,
    seed: int,
    *,
    granularity: str = "hour",
    window: Optional[int] = None,
    level: float = 10.0,
    amplitude: float = 3.0,
    period: Optional[int] = None,
    noise: float = 0.5,
    series_id: Optional[str] = None,
) -> TimeSeries:
    """seasonal: level + sinusoid + noise; stable: level + noise; unstable: random walk from level."""
    w = window or DEFAULT_WINDOWS[granularity]
    if n < 2 * w:
        raise ValueError(f"n={n} is shorter than twice the window {w}")
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    eps = rng.standard_normal(n) * noise
    if kind == "seasonal":
        p = period or DEFAULT_PERIODS[granularity]
        phase = rng.uniform(0, 2 * np.pi)
        x = level + amplitude * np.sin(2 * np.pi * t / p + phase) + eps
    elif kind == "stable":
        x = level + eps
    elif kind == "unstable":
        x = level + np.cumsum(eps)
    else:
        raise ValueError(f"unknown series kind {kind!r}")
    return TimeSeries.from_arrays(
        x, id=series_id or f"{kind}-{seed}", granularity=granularity, class_tag=kind
    )


@dataclass(frozen=True, eq=False)
class TrainingSet:
    windows: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.windows.ndim != 2 or self.labels.shape != (self.windows.shape[0],):
            raise ValueError("windows must be (N, ω) and labels (N,)")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def window(self) -> int:
        return self.windows.shape[1]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.suffix.lower() == ".csv":
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                for row, lab in zip(self.windows.tolist(), self.labels.tolist()):
                    w.writerow([repr(v) for v in row] + [int(lab)])
            return
        rows = np.hstack([self.windows, self.labels[:, None]]).astype("<f4")
        with path.open("wb") as fh:
            fh.write(_TRAINING_HEADER.pack(TRAINING_MAGIC, TRAINING_VERSION, self.window, len(self)))
            fh.write(rows.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "TrainingSet":
        path = Path(path)
        if path.suffix.lower() == ".csv":
            data = np.loadtxt(path, delimiter=",", ndmin=2)
            return cls(data[:, :-1], data[:, -1].astype(np.int8))
        raw = path.read_bytes()
        if len(raw) < _TRAINING_HEADER.size:
            raise ValueError("training file truncated")
        magic, version, window, count = _TRAINING_HEADER.unpack_from(raw)
        if magic != TRAINING_MAGIC:
            raise ValueError("not a training-set file")
        if version != TRAINING_VERSION:
            raise ValueError(f"unsupported training-set version {version}")
        body = raw[_TRAINING_HEADER.size :]
        if len(body) != count * (window + 1) * 4:
            raise ValueError("training file truncated or padded")
        rows = np.frombuffer(body, dtype="<f4").reshape(count, window + 1).astype(float)
        return cls(rows[:, :-1], rows[:, -1].astype(np.int8))


def saliency_windows(series: TimeSeries, cfg: SrConfig) -> np.ndarray:
    """Saliency of the extended window presented to the detector for each end index ≥ ω-1."""
    x = series.values
    n, real = len(x), cfg.real_points
    out = np.empty((n - cfg.window + 1, cfg.window))
    for row, end in enumerate(range(cfg.window - 1, n)):
        out[row] = window_saliency(x[end - real + 1 : end + 1], cfg)
    return out


def build_training_set(
    sources: Sequence[TimeSeries], params: InjectionParams, cfg: SrConfig
) -> TrainingSet:
    """Inject into each source (seed ``params.seed + i``) and pair every saliency window
    with the label of the point it scores."""
    feats, labels = [], []
    for i, src in enumerate(sources):
        p = InjectionParams(params.ratio, params.seed + i, params.local_window, params.r_range)
        labeled, _ = inject(src, p, cfg)
        feats.append(saliency_windows(labeled, cfg))
        labels.append(labeled.labels[cfg.window - 1 :].astype(np.int8))
    if not feats:
        raise ValueError("no sources given")
    return TrainingSet(np.vstack(feats), np.concatenate(labels))
