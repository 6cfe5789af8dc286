"""Spectral residual (SR) and SR-CNN time-series anomaly detection."""

from .cnn import CnnModel, TrainConfig, detect_cnn, forward, load_model, save_model, train
from .detector import DetectionResult, SrDetector, detect_stream, estimate_tail, threshold_decide
from .evaluation import EvalConfig, EvalReport, adjust, evaluate_detector, score
from .spectral import SaliencyMap, SpectralDecomposition, SrConfig, dft, inverse_dft, spectral_residual
from .synth import InjectionParams, TrainingSet, build_training_set, generate_base, inject
from .timeseries import TimeSeries, TimeSeriesPoint, Window, ingest, ingest_csv, ingest_json, windows

__version__ = "0.1.0"

__all__ = [
    "CnnModel",
    "DetectionResult",
    "EvalConfig",
    "EvalReport",
    "InjectionParams",
    "SaliencyMap",
    "SpectralDecomposition",
    "SrConfig",
    "SrDetector",
    "TimeSeries",
    "TimeSeriesPoint",
    "TrainConfig",
    "TrainingSet",
    "Window",
    "adjust",
    "build_training_set",
    "detect_cnn",
    "detect_stream",
    "dft",
    "estimate_tail",
    "evaluate_detector",
    "forward",
    "generate_base",
    "ingest",
    "ingest_csv",
    "ingest_json",
    "inject",
    "inverse_dft",
    "load_model",
    "save_model",
    "score",
    "spectral_residual",
    "threshold_decide",
    "train",
    "windows",
]
