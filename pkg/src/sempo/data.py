"""CSV ingestion, channel independence and window construction."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from . import tensor as T

log = logging.getLogger(__name__)

_DATE_FORMATS = ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d", "%Y/%m/%d %H:%M:%S",
                 "%Y/%m/%d %H:%M", "%Y/%m/%d", "%d/%m/%Y %H:%M", "%m/%d/%Y %H:%M")


class DataFormatError(ValueError):
    """A CSV file that cannot be turned into numeric series."""


@dataclass
class SeriesTable:
    name: str
    columns: list[str]
    values: list[np.ndarray]
    timestamps: list[str] | None = None

    @property
    def n_variates(self) -> int:
        return len(self.columns)

    @property
    def length(self) -> int:
        return len(self.values[0]) if self.values else 0


@dataclass
class Series:
    dataset: str
    column: str
    values: np.ndarray


@dataclass
class WindowSpec:
    l: int = 512
    horizons: list[int] = field(default_factory=lambda: [96])
    stride: int = 64

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass
class TimeSeriesWindow:
    context: np.ndarray
    future: np.ndarray | None
    dataset: str
    column: str
    start: int


def _is_timestamp(cell: str) -> bool:
    cell = cell.strip()
    try:
        float(cell)
        return False
    except ValueError:
        pass
    try:
        datetime.fromisoformat(cell)
        return True
    except ValueError:
        pass
    for fmt in _DATE_FORMATS:
        try:
            datetime.strptime(cell, fmt)
            return True
        except ValueError:
            continue
    return False


def load_csv(path: str | os.PathLike, name: str | None = None) -> SeriesTable:
    """Read a header-row CSV; a leading date/time column is kept as timestamps.

    Raises :class:`DataFormatError` for empty files, ragged rows, non-numeric
    or missing cells (rows are 1-based data rows, header excluded).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise DataFormatError(f"{path}: empty file (need a header and at least one data row)")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataFormatError(f"{path}: ragged row {i}: {len(row)} cells, header has {len(header)}")

    first = 1 if _is_timestamp(body[0][0]) else 0
    if first == len(header):
        raise DataFormatError(f"{path}: no numeric columns")
    data = np.empty((len(body), len(header) - first), dtype=np.float64)
    for i, row in enumerate(body, start=1):
        for j in range(first, len(header)):
            cell = row[j].strip()
            try:
                v = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}: non-numeric cell {cell!r} at row {i}, column {j + 1} ({header[j]!r})"
                ) from None
            if math.isnan(v) or math.isinf(v):
                raise DataFormatError(f"{path}: missing/non-finite value at row {i}, column {j + 1} ({header[j]!r})")
            data[i - 1, j - first] = v
    return SeriesTable(
        name=name or path.stem,
        columns=header[first:],
        values=[data[:, k].astype(T.get_dtype()) for k in range(data.shape[1])],
        timestamps=[r[0] for r in body] if first else None,
    )


def channel_split(table: SeriesTable) -> list[Series]:
    """One univariate series per variate, in column order."""
    if not table.values:
        raise DataFormatError(f"{table.name}: no numeric columns")
    return [Series(table.name, c, v) for c, v in zip(table.columns, table.values)]


def window_count(length: int, l: int, stride: int, future: int = 0) -> int:
    usable = length - l - future
    return usable // stride + 1 if usable >= 0 else 0


def make_windows(series: Series | np.ndarray, spec: WindowSpec, with_future: bool) -> list[TimeSeriesWindow]:
    """Contiguous windows starting at 0, ``stride`` apart, fully in-bounds."""
    if isinstance(series, np.ndarray):
        series = Series("array", "0", series)
    values = np.asarray(series.values)
    fut = max(spec.horizons) if with_future else 0
    n = window_count(len(values), spec.l, spec.stride, fut)
    if n == 0:
        log.info("%s/%s: series of length %d too short for L=%d (+%d)",
                 series.dataset, series.column, len(values), spec.l, fut)
        return []
    out = []
    for k in range(n):
        s = k * spec.stride
        ctx = values[s : s + spec.l]
        future = values[s + spec.l : s + spec.l + fut] if with_future else None
        out.append(TimeSeriesWindow(ctx, future, series.dataset, series.column, s))
    return out


def split_train_val(windows: list, seed: int, train_fraction: float = 0.9) -> tuple[list, list]:
    """Seeded shuffle, then first 90% train and the rest validation."""
    if len(windows) < 10:
        raise DataFormatError(f"need at least 10 windows for a 9:1 split, got {len(windows)}")
    order = np.random.default_rng(seed).permutation(len(windows))
    cut = int(round(train_fraction * len(windows)))
    return [windows[i] for i in order[:cut]], [windows[i] for i in order[cut:]]


def few_shot_subset(windows: list[TimeSeriesWindow], fraction: float) -> list[TimeSeriesWindow]:
    """Chronological prefix of ceil(fraction * n) windows per source series."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    groups: dict[tuple[str, str], list[TimeSeriesWindow]] = {}
    for w in windows:
        groups.setdefault((w.dataset, w.column), []).append(w)
    out = []
    for ws in groups.values():
        ws = sorted(ws, key=lambda w: w.start)
        out.extend(ws[: math.ceil(fraction * len(ws))])
    return out


# ---------------------------------------------------------------- registry


@dataclass
class ManifestEntry:
    path: Path
    weight: float = 1.0


def read_manifest(path: str | os.PathLike) -> list[ManifestEntry]:
    """One CSV path per line, optional ``weight=<float>``; ``#`` starts a comment."""
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        weight = 1.0
        for extra in parts[1:]:
            if not extra.startswith("weight="):
                raise DataFormatError(f"{path}:{lineno}: unexpected token {extra!r}")
            weight = float(extra[len("weight="):])
            if weight <= 0:
                raise DataFormatError(f"{path}:{lineno}: weight must be positive")
        p = Path(parts[0])
        entries.append(ManifestEntry(p if p.is_absolute() else path.parent / p, weight))
    if not entries:
        raise DataFormatError(f"{path}: manifest lists no datasets")
    return entries


def registry_windows(entries: list[ManifestEntry], spec: WindowSpec, with_future: bool):
    """All windows of all manifest datasets (manifest order) plus per-window weights."""
    windows, weights = [], []
    for e in entries:
        table = load_csv(e.path)
        for s in channel_split(table):
            ws = make_windows(s, spec, with_future)
            windows.extend(ws)
            weights.extend([e.weight] * len(ws))
    return windows, np.asarray(weights, dtype=np.float64)


def chronological_split(values: np.ndarray, train: float = 0.7, val: float = 0.1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(values)
    a, b = int(n * train), int(n * (train + val))
    return values[:a], values[a:b], values[b:]
