"""
Dataset Module

This module defines the labeled time-series containers and their CSV / NDJSON formats,
plus per-series normalization and stratified splitting.
"""

import os
import csv
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import DataError, ParameterError
from src.utils.helper_functions import format_float, write_ndjson
from src.utils.logger import get_logger

logger = get_logger()

OK = 0
NOK = 1


@dataclass
class TimeSeries:
    """
    Fixed-length univariate signal with an optional OK (0) / NOK (1) label.

    Attributes:
        values: float64 samples
        label: 0, 1 or None
        series_id: Stable identifier
        metadata: Free-form generator details (phase, anomaly spec, ...)
    """

    values: np.ndarray
    label: Optional[int] = None
    series_id: str = ""
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.label is not None:
            self.label = int(self.label)
            if self.label not in (OK, NOK):
                raise DataError(f"label must be 0 or 1, got {self.label}")

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        return TimeSeries(values, self.label, self.series_id, dict(self.metadata))


def series_values(series) -> np.ndarray:
    """Accept a TimeSeries or anything array-like and return the float64 samples."""
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=np.float64).reshape(-1)


class Dataset:
    """
    Ordered collection of time series.

    Attributes:
        series: The members
    """

    def __init__(self, series: Sequence[TimeSeries] = ()):
        self.series: List[TimeSeries] = list(series)

    def __len__(self) -> int:
        return len(self.series)

    def __iter__(self) -> Iterator[TimeSeries]:
        return iter(self.series)

    def __getitem__(self, index: int) -> TimeSeries:
        return self.series[index]

    @property
    def ids(self) -> List[str]:
        return [s.series_id for s in self.series]

    @property
    def labels(self) -> np.ndarray:
        return np.array([-1 if s.label is None else s.label for s in self.series], dtype=int)

    @property
    def length(self) -> int:
        """
        The common series length.

        Raises:
            DataError: If the dataset is empty or lengths differ
        """
        if not self.series:
            raise DataError("dataset is empty")
        lengths = {len(s) for s in self.series}
        if len(lengths) != 1:
            raise DataError(f"series lengths differ: {sorted(lengths)}")
        return lengths.pop()

    def values(self) -> np.ndarray:
        """(n, length) matrix of the samples."""
        if not self.series:
            return np.zeros((0, 0))
        return np.stack([s.values for s in self.series])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset([self.series[int(i)] for i in indices])

    def by_ids(self, ids: Sequence[str]) -> "Dataset":
        """
        Members with the given ids, in the order given.

        Raises:
            DataError: On an unknown id
        """
        lookup = {s.series_id: s for s in self.series}
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise DataError(f"unknown series ids: {missing[:5]}")
        return Dataset([lookup[i] for i in ids])

    def nok_fraction(self) -> float:
        labels = self.labels
        return float(np.mean(labels == NOK)) if len(labels) else 0.0


def normalize_minmax(values: np.ndarray) -> np.ndarray:
    """
    Per-series min-max scaling to [0, 1] along the last axis; constant rows map to 0.

    Args:
        values: (..., L) samples

    Returns:
        np.ndarray: Normalized samples
    """
    values = np.asarray(values, dtype=np.float64)
    low = values.min(axis=-1, keepdims=True)
    span = values.max(axis=-1, keepdims=True) - low
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (values - low) / safe, 0.0)


def stratified_split(
    labels: np.ndarray, fractions: Sequence[float], rng: np.random.Generator
) -> List[np.ndarray]:
    """
    Split indices so every part keeps the label proportions.

    Per label, part sizes use largest-remainder rounding so they add up exactly.

    Args:
        labels: Label per instance (unlabeled instances form their own stratum)
        fractions: Part fractions, each > 0, summing to 1
        rng: Generator for shuffling

    Returns:
        List[np.ndarray]: Sorted index array per part
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    if np.any(fractions <= 0) or not np.isclose(fractions.sum(), 1.0):
        raise ParameterError(f"split fractions must be > 0 and sum to 1, got {fractions.tolist()}")

    parts: List[List[int]] = [[] for _ in fractions]
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        members = members[rng.permutation(len(members))]
        exact = fractions * len(members)
        sizes = np.floor(exact).astype(int)
        remainder = len(members) - sizes.sum()
        order = np.lexsort((np.arange(len(fractions)), -(exact - sizes)))
        sizes[order[:remainder]] += 1
        cursor = 0
        for part, size in zip(parts, sizes):
            part.extend(members[cursor:cursor + size].tolist())
            cursor += size
    return [np.array(sorted(part), dtype=int) for part in parts]


def write_csv_dataset(dataset: Dataset, path: str) -> str:
    """
    Write one series per row: id, values..., label.

    Args:
        dataset: Dataset to write
        path: Output file

    Returns:
        str: The path written
    """
    length = dataset.length
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["id"] + [f"v{i}" for i in range(length)] + ["label"])
        for s in dataset:
            writer.writerow([s.series_id] + [format_float(v) for v in s.values]
                            + ["" if s.label is None else s.label])
    logger.info(f"Wrote {len(dataset)} series to {path}")
    return path


def _parse_label(cell: str, row_number: int) -> Optional[int]:
    cell = cell.strip()
    if cell == "":
        return None
    try:
        return int(float(cell))
    except ValueError:
        raise DataError(f"row {row_number}: invalid label {cell!r}")


def read_csv_dataset(path: str, has_label: bool = True) -> Dataset:
    """
    Read the CSV format written by write_csv_dataset.

    Headerless files are also accepted: every cell numeric, the last column being the
    label when has_label is set, ids assigned by row number.

    Args:
        path: Input file
        has_label: Headerless files only; whether the last column is a label

    Returns:
        Dataset: The series
    """
    series: List[TimeSeries] = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        return Dataset()

    header = rows[0]
    with_header = bool(header) and header[0] == "id"
    body = rows[1:] if with_header else rows
    for row_number, row in enumerate(body, start=2 if with_header else 1):
        if not row:
            continue
        try:
            if with_header:
                values = [float(v) for v in row[1:-1]]
                series.append(TimeSeries(values, _parse_label(row[-1], row_number), row[0]))
            else:
                cells = row[:-1] if has_label else row
                label = _parse_label(row[-1], row_number) if has_label else None
                series.append(TimeSeries([float(v) for v in cells], label, f"s{row_number - 1:05d}"))
        except ValueError as e:
            if isinstance(e, DataError):
                raise
            raise DataError(f"row {row_number}: {e}")
    logger.info(f"Read {len(series)} series from {path}")
    return Dataset(series)


def write_ndjson_dataset(dataset: Dataset, path: str) -> str:
    """Write {"id", "values", "label"} records, one per line."""
    return write_ndjson(
        ({"id": s.series_id, "values": s.values, "label": s.label} for s in dataset), path
    )


def read_ndjson_dataset(path: str) -> Dataset:
    """Read the NDJSON format written by write_ndjson_dataset."""
    series: List[TimeSeries] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                series.append(TimeSeries(record["values"], record.get("label"), str(record["id"])))
            except (KeyError, TypeError, json.JSONDecodeError) as e:
                raise DataError(f"line {line_number}: {e}")
    logger.info(f"Read {len(series)} series from {path}")
    return Dataset(series)


def read_dataset(path: str) -> Dataset:
    """Dispatch on extension: .ndjson/.jsonl or CSV."""
    if path.endswith((".ndjson", ".jsonl")):
        return read_ndjson_dataset(path)
    return read_csv_dataset(path)


def write_dataset(dataset: Dataset, path: str) -> str:
    if path.endswith((".ndjson", ".jsonl")):
        return write_ndjson_dataset(dataset, path)
    return write_csv_dataset(dataset, path)


def split_sizes(parts: Sequence[np.ndarray], labels: np.ndarray) -> Tuple[List[int], List[float]]:
    """Sizes and NOK fractions of each split part."""
    sizes = [int(len(p)) for p in parts]
    fractions = [float(np.mean(labels[p] == NOK)) if len(p) else 0.0 for p in parts]
    return sizes, fractions
