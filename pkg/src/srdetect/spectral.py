"""Fourier machinery and the spectral residual transform.

The transform turns a window of values into a saliency map::

    A, P = |F(x)|, angle(F(x))
    L    = log(A + eps)
    AL   = centered length-q moving average of L (edges replicated)
    R    = L - AL
    S    = |F^-1(exp(R + iP))|

A bin whose amplitude is at round-off level has no meaningful phase; it is
left out of the inverse transform, so a constant window maps to a flat
saliency map.

The forward transform is unnormalized, the inverse carries the 1/n factor, so
``inverse_dft(*dft(x)) == |x|``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

# ω per series granularity; the remaining defaults are shared by all three.
DEFAULT_WINDOWS = {"minute": 1440, "hour": 64, "day": 30}
TAIL_MODES = ("hold", "extrapolate")
# Bins at or below this fraction of the peak amplitude are treated as exactly zero.
ZERO_BIN = 1e-10


@dataclass(frozen=True)
class SrConfig:
    window: int = 1440
    avg_filter: int = 3
    score_window: int = 21
    threshold: float = 3.0
    estimated_points: int = 5
    gradient_points: int = 5
    log_epsilon: float = 1e-8
    # False drops the estimated tail: the target is then the last real point.
    center_target: bool = True
    # "hold" repeats x_n; "extrapolate" repeats the slope-based estimate of x_{n+1}
    tail_mode: str = "hold"

    def __post_init__(self):
        for name in ("window", "avg_filter", "score_window", "estimated_points", "gradient_points"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.avg_filter % 2 == 0:
            raise ValueError("avg_filter must be odd")
        if self.avg_filter > self.window:
            raise ValueError("avg_filter must not exceed window")
        if self.score_window >= self.window:
            raise ValueError("score_window must be smaller than window")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.tail_mode not in TAIL_MODES:
            raise ValueError(f"tail_mode must be one of {TAIL_MODES}, got {self.tail_mode!r}")
        if not self.log_epsilon > 0:
            raise ValueError("log_epsilon must be positive")
        if self.center_target and self.window - self.estimated_points < self.gradient_points + 1:
            raise ValueError(
                "window must leave at least gradient_points + 1 real points "
                "after reserving estimated_points"
            )

    @classmethod
    def for_granularity(cls, granularity: str, **overrides) -> "SrConfig":
        return cls(window=DEFAULT_WINDOWS[granularity], **overrides)

    @property
    def real_points(self) -> int:
        """Number of observed points fed to the transform per decision."""
        return self.window - self.estimated_points if self.center_target else self.window

    @property
    def target_position(self) -> int:
        """Index of the scored point inside the (extended) window."""
        return self.real_points - 1

    def replace(self, **changes) -> "SrConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    amplitude: np.ndarray
    phase: np.ndarray
    log_amplitude: np.ndarray
    avg_log_amplitude: np.ndarray
    residual: np.ndarray


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


def dft(x) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude and phase spectra of ``x`` (any length, O(n log n))."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("dft needs a non-empty 1-D vector")
    spectrum = np.fft.fft(x)
    return np.abs(spectrum), np.angle(spectrum)


def inverse_dft(amplitude, phase, *, log_amplitude: bool = False) -> np.ndarray:
    """Magnitude of the inverse transform of ``amplitude * exp(i * phase)``.

    With ``log_amplitude=True`` the first argument is read as a log spectrum
    and exponentiated first, which is how the residual is mapped back.
    """
    amplitude = np.asarray(amplitude, dtype=float)
    phase = np.asarray(phase, dtype=float)
    if amplitude.shape != phase.shape:
        raise ValueError(f"length mismatch: {amplitude.shape} vs {phase.shape}")
    if amplitude.ndim != 1 or amplitude.size == 0:
        raise ValueError("inverse_dft needs non-empty 1-D vectors")
    if log_amplitude:
        return np.abs(np.fft.ifft(np.exp(amplitude + 1j * phase)))
    return np.abs(np.fft.ifft(amplitude * np.exp(1j * phase)))


def average_filter(values: np.ndarray, q: int) -> np.ndarray:
    """Centered moving average of odd width ``q`` with edge replication."""
    if q == 1:
        return values.copy()
    half = q // 2
    padded = np.pad(values, half, mode="edge")
    return np.convolve(padded, np.full(q, 1.0 / q), mode="valid")


def _transform(x: np.ndarray, q: int, eps: float):
    spectrum = np.fft.fft(x)
    amp = np.abs(spectrum)
    log_amp = np.log(amp + eps)
    avg_log = average_filter(log_amp, q)
    residual = log_amp - avg_log
    # exp(R + iP) == exp(R) * spectrum / |spectrum|; round-off bins have no phase and drop out
    live = amp > max(ZERO_BIN * amp.max(), np.finfo(float).tiny)
    unit = np.divide(spectrum, amp, out=np.zeros_like(spectrum), where=live)
    sal = np.abs(np.fft.ifft(np.exp(residual) * unit))
    return spectrum, amp, log_amp, avg_log, residual, sal


def spectral_residual(x, cfg: SrConfig) -> tuple[SpectralDecomposition, SaliencyMap]:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < cfg.avg_filter:
        raise ValueError(f"input needs at least avg_filter={cfg.avg_filter} points")
    spectrum, amp, log_amp, avg_log, residual, sal = _transform(x, cfg.avg_filter, cfg.log_epsilon)
    dec = SpectralDecomposition(amp, np.angle(spectrum), log_amp, avg_log, residual)
    return dec, SaliencyMap(sal)


def saliency(x: np.ndarray, q: int = 3, eps: float = 1e-8) -> np.ndarray:
    """Saliency values only; the hot path of the streaming detectors."""
    return _transform(x, q, eps)[-1]
