"""Time-series data model, CSV/JSON ingestion and sliding windows.

CSV layout (one point per line, optional header row)::

    timestamp,value[,label]

``timestamp`` is an integer epoch second, ``value`` a finite decimal float and
``label`` is ``0`` or ``1``. A header is detected when the first field of the
first line is not an integer; with a header, ``schema`` may map the logical
columns ``timestamp``/``value``/``label`` to arbitrary header names.

JSON layout: a top-level array of objects ``{"t": <int>, "v": <float>, "l": <0|1>}``
where ``"l"`` is optional (it must be present on all objects or none).

After parsing, rows are sorted by timestamp, duplicates are rejected and gaps
that are whole multiples of the granularity interval are filled by linear
interpolation. Filled points carry ``filled=True`` and are never reported as
anomalies.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

GRANULARITY_SECONDS = {"minute": 60, "hour": 3600, "day": 86400}
SERIES_CLASSES = ("seasonal", "stable", "unstable")


class IngestError(ValueError):
    """Raised for malformed input files. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateTimestampError(IngestError):
    pass


class NonFiniteValueError(IngestError):
    pass


@dataclass(frozen=True)
class TimeSeriesPoint:
    timestamp: int
    value: float
    label: Optional[bool] = None
    filled: bool = False


@dataclass(frozen=True)
class TimeSeries:
    id: str
    granularity: str
    points: tuple[TimeSeriesPoint, ...]
    class_tag: Optional[str] = None

    def __post_init__(self):
        if self.granularity not in GRANULARITY_SECONDS:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.class_tag is not None and self.class_tag not in SERIES_CLASSES:
            raise ValueError(f"unknown class tag {self.class_tag!r}")
        object.__setattr__(self, "points", tuple(self.points))
        step = GRANULARITY_SECONDS[self.granularity]
        prev = None
        for p in self.points:
            if not math.isfinite(p.value):
                raise NonFiniteValueError(f"non-finite value at timestamp {p.timestamp}")
            if prev is not None:
                if p.timestamp <= prev:
                    raise ValueError("timestamps must be strictly increasing")
                if p.timestamp - prev != step:
                    raise ValueError(
                        f"timestamp delta {p.timestamp - prev} at {p.timestamp} "
                        f"does not match {self.granularity} interval {step}"
                    )
            prev = p.timestamp

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def values(self) -> np.ndarray:
        arr = np.fromiter((p.value for p in self.points), dtype=float, count=len(self.points))
        arr.flags.writeable = False
        return arr

    @cached_property
    def timestamps(self) -> np.ndarray:
        arr = np.fromiter((p.timestamp for p in self.points), dtype=np.int64, count=len(self.points))
        arr.flags.writeable = False
        return arr

    @cached_property
    def filled(self) -> np.ndarray:
        arr = np.fromiter((p.filled for p in self.points), dtype=bool, count=len(self.points))
        arr.flags.writeable = False
        return arr

    @property
    def is_labeled(self) -> bool:
        return bool(self.points) and all(p.label is not None for p in self.points)

    @cached_property
    def labels(self) -> np.ndarray:
        """Ground-truth labels as a bool array; unlabeled points read as False."""
        arr = np.fromiter((bool(p.label) for p in self.points), dtype=bool, count=len(self.points))
        arr.flags.writeable = False
        return arr

    @classmethod
    def from_arrays(
        cls,
        values: Sequence[float],
        *,
        id: str = "series",
        granularity: str = "hour",
        start: int = 0,
        labels: Optional[Sequence[bool]] = None,
        class_tag: Optional[str] = None,
    ) -> "TimeSeries":
        step = GRANULARITY_SECONDS[granularity]
        if labels is not None and len(labels) != len(values):
            raise ValueError("labels and values differ in length")
        points = tuple(
            TimeSeriesPoint(
                timestamp=start + i * step,
                value=float(v),
                label=None if labels is None else bool(labels[i]),
            )
            for i, v in enumerate(values)
        )
        return cls(id=id, granularity=granularity, points=points, class_tag=class_tag)

    def with_values(self, values: Sequence[float], labels: Optional[Sequence[bool]] = None) -> "TimeSeries":
        if len(values) != len(self.points):
            raise ValueError("length mismatch")
        points = tuple(
            TimeSeriesPoint(
                timestamp=p.timestamp,
                value=float(v),
                label=p.label if labels is None else bool(labels[i]),
                filled=p.filled,
            )
            for i, (p, v) in enumerate(zip(self.points, values))
        )
        return TimeSeries(self.id, self.granularity, points, self.class_tag)


@dataclass(frozen=True, eq=False)
class Window:
    series_id: str
    end_index: int
    values: np.ndarray = field(repr=False)


def windows(series: TimeSeries, size: int) -> Iterator[Window]:
    """Yield one window per index in ``[size - 1, n - 1]``."""
    if size < 1:
        raise ValueError("window size must be positive")
    n = len(series)
    if n < size:
        raise ValueError(f"series has {n} points, fewer than window size {size}")
    values = series.values
    for end in range(size - 1, n):
        yield Window(series.id, end, values[end - size + 1 : end + 1])


def _build(
    rows: list[tuple[int, int, float, Optional[bool]]],
    granularity: str,
    series_id: str,
    class_tag: Optional[str],
) -> TimeSeries:
    """``rows`` are ``(line, timestamp, value, label)``."""
    if granularity not in GRANULARITY_SECONDS:
        raise ValueError(f"unknown granularity {granularity!r}")
    if not rows:
        raise IngestError("no data rows")
    has_label = rows[0][3] is not None
    for line, _, _, label in rows:
        if (label is not None) != has_label:
            raise IngestError("label column present on some rows only", line)
    rows = sorted(rows, key=lambda r: r[1])
    for a, b in zip(rows, rows[1:]):
        if a[1] == b[1]:
            raise DuplicateTimestampError(f"duplicate timestamp {b[1]}", b[0])

    step = GRANULARITY_SECONDS[granularity]
    points: list[TimeSeriesPoint] = []
    prev = None
    for line, ts, value, label in rows:
        if prev is not None:
            delta = ts - prev.timestamp
            if delta % step:
                raise IngestError(
                    f"timestamp {ts} is not aligned to the {granularity} interval", line
                )
            missing = delta // step - 1
            for j in range(1, missing + 1):
                frac = j / (missing + 1)
                points.append(
                    TimeSeriesPoint(
                        timestamp=prev.timestamp + j * step,
                        value=prev.value + (value - prev.value) * frac,
                        label=False if has_label else None,
                        filled=True,
                    )
                )
        prev = TimeSeriesPoint(ts, value, label)
        points.append(prev)
    return TimeSeries(series_id, granularity, tuple(points), class_tag)


def _parse_value(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestError(f"cannot parse value {text!r}", line) from None
    if not math.isfinite(value):
        raise NonFiniteValueError(f"non-finite value {text!r}", line)
    return value


def _parse_timestamp(text: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise IngestError(f"cannot parse timestamp {text!r}", line) from None


def _parse_label(text: str, line: int) -> bool:
    if text not in ("0", "1"):
        raise IngestError(f"label must be 0 or 1, got {text!r}", line)
    return text == "1"


def ingest_csv(
    path: str | Path,
    granularity: str = "minute",
    schema: Optional[Mapping[str, str | int]] = None,
    *,
    series_id: Optional[str] = None,
    class_tag: Optional[str] = None,
) -> TimeSeries:
    path = Path(path)
    schema = dict(schema or {})
    unknown = set(schema) - {"timestamp", "value", "label"}
    if unknown:
        raise ValueError(f"unknown schema keys: {sorted(unknown)}")

    with path.open(newline="") as fh:
        lines = [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in row)]
    if not lines:
        raise IngestError("empty file")

    first_line, first = lines[0]
    try:
        int(first[0])
        header = None
    except (ValueError, IndexError):
        header = [c.strip() for c in first]
        lines = lines[1:]

    def column(key: str, default: Optional[int]) -> Optional[int]:
        spec = schema.get(key)
        if spec is None:
            if header is not None and key in header:
                return header.index(key)
            return default
        if isinstance(spec, int):
            return spec
        if header is None or spec not in header:
            raise IngestError(f"column {spec!r} not found in header", first_line)
        return header.index(spec)

    ts_col = column("timestamp", 0)
    val_col = column("value", 1)
    lab_col = column("label", 2)

    rows = []
    for line, row in lines:
        row = [c.strip() for c in row]
        if len(row) <= max(ts_col, val_col):
            raise IngestError(f"expected at least {max(ts_col, val_col) + 1} columns", line)
        label = None
        if lab_col is not None and lab_col < len(row) and row[lab_col] != "":
            label = _parse_label(row[lab_col], line)
        rows.append((line, _parse_timestamp(row[ts_col], line), _parse_value(row[val_col], line), label))
    return _build(rows, granularity, series_id or path.stem, class_tag)


def ingest_json(
    path: str | Path,
    granularity: str = "minute",
    *,
    series_id: Optional[str] = None,
    class_tag: Optional[str] = None,
) -> TimeSeries:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise IngestError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(data, list):
        raise IngestError("top-level JSON value must be an array")
    rows = []
    for i, obj in enumerate(data):
        # element position stands in for a line number
        where = i + 1
        if not isinstance(obj, dict) or "t" not in obj or "v" not in obj:
            raise IngestError("each element needs 't' and 'v'", where)
        t, v = obj["t"], obj["v"]
        if isinstance(t, bool) or not isinstance(t, int):
            raise IngestError(f"timestamp must be an integer, got {t!r}", where)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise IngestError(f"value must be a number, got {v!r}", where)
        if not math.isfinite(v):
            raise NonFiniteValueError(f"non-finite value {v!r}", where)
        label = None
        if "l" in obj and obj["l"] is not None:
            if obj["l"] not in (0, 1) or isinstance(obj["l"], float):
                raise IngestError(f"label must be 0 or 1, got {obj['l']!r}", where)
            label = bool(obj["l"])
        rows.append((where, t, float(v), label))
    return _build(rows, granularity, series_id or path.stem, class_tag)


def ingest(path: str | Path, granularity: str = "minute", **kwargs) -> TimeSeries:
    """Dispatch on file suffix: ``.json`` goes to :func:`ingest_json`, anything else to CSV."""
    if Path(path).suffix.lower() == ".json":
        kwargs.pop("schema", None)
        return ingest_json(path, granularity, **kwargs)
    return ingest_csv(path, granularity, **kwargs)


def write_csv(series: TimeSeries, path: str | Path, *, header: bool = True) -> None:
    labeled = series.is_labeled
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["timestamp", "value", "label"] if labeled else ["timestamp", "value"])
        for p in series.points:
            row = [p.timestamp, repr(p.value)]
            if labeled:
                row.append(int(p.label))
            w.writerow(row)


def write_json(series: TimeSeries, path: str | Path) -> None:
    labeled = series.is_labeled
    out = []
    for p in series.points:
        obj = {"t": p.timestamp, "v": p.value}
        if labeled:
            obj["l"] = int(p.label)
        out.append(obj)
    Path(path).write_text(json.dumps(out))

