"""Convolutional discriminator applied to saliency windows.

Geometry for a window of length ω (batch dimension omitted)::

    u   = s / (mean(s) + eps)                       scale normalization, no parameters
    h1  = relu(conv1d(u; ω filters of size ω))      valid conv -> ω channels x 1
    h2  = relu(conv1d(h1; 2ω filters))              spatial extent 1 -> 2ω channels x 1
    h3  = relu(fc1(h2))                             2ω -> ω
    p   = sigmoid(fc2(h3))                          ω -> 1

Conv filters are stored as ``(out_channels, in_channels, width)``; the
second layer's width is 1 because a size-ω filter applied to a length-1
signal only ever touches its centre tap.

Model file (little-endian)::

    magic    b"SRCNN\\0"   6 bytes
    version  uint16        FORMAT_VERSION
    window   uint32        ω
    params   float32[]     conv1_w, conv1_b, conv2_w, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b
                           in that order, each C-contiguous in the shapes above
    crc32    uint32        zlib.crc32 of all preceding bytes
"""

from __future__ import annotations

import logging
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .detector import DetectionResult, StreamingBuffer, window_saliency
from .spectral import SrConfig
from .timeseries import TimeSeries

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = b"SRCNN\0"
_HEADER = struct.Struct("<6sHI")
NORM_EPSILON = 1e-8
PARAM_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b")


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class TrainingError(RuntimeError):
    pass


def param_shapes(window: int) -> dict[str, tuple[int, ...]]:
    w = window
    return {
        "conv1_w": (w, 1, w),
        "conv1_b": (w,),
        "conv2_w": (2 * w, w, 1),
        "conv2_b": (2 * w,),
        "fc1_w": (w, 2 * w),
        "fc1_b": (w,),
        "fc2_w": (1, w),
        "fc2_b": (1,),
    }


@dataclass(eq=False)
class CnnModel:
    window: int
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray
    version: int = FORMAT_VERSION
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        shapes = param_shapes(self.window)
        for name in PARAM_NAMES:
            arr = getattr(self, name)
            if arr.shape != shapes[name]:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shapes[name]}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite weights")
        if self.conv2_w.shape[0] != 2 * self.conv1_w.shape[0]:
            raise ValueError("conv2 must have twice the channels of conv1")

    @classmethod
    def init(cls, window: int, seed: int = 0, dtype=np.float32) -> "CnnModel":
        """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in param_shapes(window).items():
            if name.endswith("_b"):
                params[name] = np.zeros(shape, dtype=dtype)
            else:
                fan_in = int(np.prod(shape[1:]))
                bound = 1.0 / np.sqrt(fan_in)
                params[name] = rng.uniform(-bound, bound, shape).astype(dtype)
        return cls(window, **params)

    @classmethod
    def zeros(cls, window: int, dtype=np.float64) -> "CnnModel":
        return cls(window, **{n: np.zeros(s, dtype=dtype) for n, s in param_shapes(window).items()})

    def params(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    def astype(self, dtype) -> "CnnModel":
        return replace(self, **{n: a.astype(dtype) for n, a in self.params().items()})


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def normalize(windows: np.ndarray) -> np.ndarray:
    return windows / (windows.mean(axis=1, keepdims=True) + NORM_EPSILON)


def _forward(model: CnnModel, x: np.ndarray):
    u = normalize(x)
    z1 = u @ model.conv1_w[:, 0, :].T + model.conv1_b
    a1 = np.maximum(z1, 0)
    z2 = a1 @ model.conv2_w[:, :, 0].T + model.conv2_b
    a2 = np.maximum(z2, 0)
    z3 = a2 @ model.fc1_w.T + model.fc1_b
    a3 = np.maximum(z3, 0)
    logit = (a3 @ model.fc2_w.T + model.fc2_b)[:, 0]
    return logit, (u, z1, a1, z2, a2, z3, a3)


def forward_batch(model: CnnModel, windows) -> np.ndarray:
    x = np.atleast_2d(np.asarray(windows, dtype=float))
    if x.shape[1] != model.window:
        raise ValueError(f"window length {x.shape[1]} does not match model window {model.window}")
    logit, _ = _forward(model, x)
    return _sigmoid(logit)


def forward(model: CnnModel, window) -> float:
    window = np.asarray(window, dtype=float)
    if window.ndim != 1:
        raise ValueError("forward takes a single 1-D window")
    return float(forward_batch(model, window[None, :])[0])


def loss_and_grads(
    model: CnnModel, x: np.ndarray, y: np.ndarray, positive_weight: float = 1.0
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean weighted binary cross-entropy and its gradient for every parameter."""
    y = np.asarray(y, dtype=float)
    logit, (u, z1, a1, z2, a2, z3, a3) = _forward(model, x)
    sw = np.where(y > 0.5, positive_weight, 1.0)
    b = x.shape[0]
    # -[y log p + (1-y) log(1-p)] == y*softplus(-z) + (1-y)*softplus(z)
    loss = float(np.sum(sw * (y * _softplus(-logit) + (1 - y) * _softplus(logit))) / b)

    dlogit = sw * (_sigmoid(logit) - y) / b
    g = {}
    g["fc2_w"] = dlogit[None, :] @ a3
    g["fc2_b"] = np.array([dlogit.sum()])
    d3 = np.outer(dlogit, model.fc2_w[0]) * (z3 > 0)
    g["fc1_w"] = d3.T @ a2
    g["fc1_b"] = d3.sum(axis=0)
    d2 = (d3 @ model.fc1_w) * (z2 > 0)
    g["conv2_w"] = (d2.T @ a1)[:, :, None]
    g["conv2_b"] = d2.sum(axis=0)
    d1 = (d2 @ model.conv2_w[:, :, 0]) * (z1 > 0)
    g["conv1_w"] = (d1.T @ u)[:, None, :]
    g["conv1_b"] = d1.sum(axis=0)
    return loss, g


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    positive_weight: float = 1.0
    momentum: float = 0.9

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.positive_weight > 0:
            raise ValueError("positive_weight must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


def _dataset_loss(model: CnnModel, x: np.ndarray, y: np.ndarray, pw: float, chunk: int = 8192) -> float:
    total = 0.0
    for i in range(0, len(y), chunk):
        xb, yb = x[i : i + chunk], y[i : i + chunk]
        logit, _ = _forward(model, xb)
        sw = np.where(yb > 0.5, pw, 1.0)
        total += float(np.sum(sw * (yb * _softplus(-logit) + (1 - yb) * _softplus(logit))))
    return total / len(y)


def _fits_float32(model: CnnModel) -> bool:
    limit = np.finfo(np.float32).max
    return all(np.all(np.abs(a) < limit) for a in model.params().values())


def train(
    dataset,
    tcfg: TrainConfig = TrainConfig(),
    *,
    model: Optional[CnnModel] = None,
) -> CnnModel:
    """Mini-batch SGD on weighted cross-entropy.

    ``dataset`` is a :class:`~srdetect.synth.TrainingSet` or an ``(windows, labels)``
    pair. The returned model holds float32 weights and ``loss_history`` with the
    full-dataset loss before training followed by one entry per epoch.
    """
    if isinstance(dataset, tuple):
        x, y = dataset
    else:
        x, y = dataset.windows, dataset.labels
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("dataset must be (N, ω) windows with N labels")
    if len(np.unique(y)) < 2:
        raise TrainingError("training data must contain both classes")
    window = x.shape[1]
    model = (model or CnnModel.init(window, tcfg.seed)).astype(np.float64)
    if model.window != window:
        raise ValueError(f"model window {model.window} does not match data window {window}")

    rng = np.random.default_rng(tcfg.seed)
    velocity = {n: np.zeros_like(a) for n, a in model.params().items()}
    history = [_dataset_loss(model, x, y, tcfg.positive_weight)]
    for epoch in range(tcfg.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), tcfg.batch_size):
            idx = order[start : start + tcfg.batch_size]
            loss, grads = loss_and_grads(model, x[idx], y[idx], tcfg.positive_weight)
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged to {loss} in epoch {epoch + 1}")
            for name, grad in grads.items():
                v = velocity[name]
                v *= tcfg.momentum
                v -= tcfg.learning_rate * grad
                getattr(model, name)[...] += v
        history.append(_dataset_loss(model, x, y, tcfg.positive_weight))
        if not np.isfinite(history[-1]) or not _fits_float32(model):
            raise TrainingError(f"training diverged in epoch {epoch + 1} (loss {history[-1]})")
        log.info("epoch %d loss %.6f", epoch + 1, history[-1])
    out = model.astype(np.float32)
    out.loss_history = history
    return out


class CnnDetector:
    """Streaming counterpart of :class:`~srdetect.detector.SrDetector` using the network."""

    def __init__(self, model: CnnModel, cfg: SrConfig, decision_threshold: float = 0.5):
        if model.window != cfg.window:
            raise ValueError(f"model window {model.window} does not match config window {cfg.window}")
        self.model = model
        self.cfg = cfg
        self.decision_threshold = decision_threshold
        self._history = StreamingBuffer(cfg.real_points)
        self.index = -1

    def update(self, value: float, filled: bool = False) -> DetectionResult:
        self._history.push(value)
        self.index += 1
        if self.index < self.cfg.window - 1:
            return DetectionResult(self.index, 0.0, False)
        prob = forward(self.model, window_saliency(self._history.view(), self.cfg))
        return DetectionResult(self.index, prob, prob > self.decision_threshold and not filled)


def detect_cnn(
    series: TimeSeries, model: CnnModel, cfg: SrConfig, decision_threshold: float = 0.5
) -> list[DetectionResult]:
    if len(series) < cfg.window:
        raise ValueError(f"series has {len(series)} points, fewer than window {cfg.window}")
    det = CnnDetector(model, cfg, decision_threshold)
    return [det.update(v, f) for v, f in zip(series.values.tolist(), series.filled.tolist())]


def save_model(model: CnnModel, path: str | Path) -> None:
    body = bytearray(_HEADER.pack(MAGIC, model.version, model.window))
    for name in PARAM_NAMES:
        body += np.ascontiguousarray(getattr(model, name), dtype="<f4").tobytes()
    body += struct.pack("<I", zlib.crc32(body))
    Path(path).write_bytes(bytes(body))


def load_model(path: str | Path) -> CnnModel:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + 4:
        raise ModelFormatError("model file truncated")
    magic, version, window = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ModelFormatError("not a model file")
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model version {version}, expected {FORMAT_VERSION}")
    shapes = param_shapes(window)
    expected = _HEADER.size + 4 * sum(int(np.prod(s)) for s in shapes.values()) + 4
    if len(raw) != expected:
        raise ModelFormatError(f"model file has {len(raw)} bytes, expected {expected}")
    (crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[:-4]) != crc:
        raise ModelFormatError("model file checksum mismatch")
    offset = _HEADER.size
    params = {}
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        params[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
        offset += 4 * count
    return CnnModel(window, version=version, **params)
