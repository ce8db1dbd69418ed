"""
Helper Functions Module

This module provides utility functions used throughout the application: seeding,
canonical artifact writers, hashing and small path helpers.
"""

import os
import re
import csv
import json
import math
import zlib
import hashlib
import datetime
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np

from src.utils.logger import get_logger

logger = get_logger()

SeedKey = Union[int, str]


def create_required_directories(directories: Iterable[str]) -> None:
    """
    Create necessary directories for the application.

    Args:
        directories: Directory paths to create
    """
    for directory in directories:
        if directory:
            os.makedirs(directory, exist_ok=True)
            logger.debug(f"Created directory: {directory}")


def derive_seed(master_seed: int, *keys: SeedKey) -> int:
    """
    Derive an independent 64-bit seed from a master seed and a path of keys.

    String keys are hashed with CRC32 so the result does not depend on iteration
    order or on Python's randomized str hash.

    Args:
        master_seed: Root seed of the run
        *keys: Instance ids, trial indices, arm names, ...

    Returns:
        int: Derived seed
    """
    entropy = [int(master_seed) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            entropy.append(zlib.crc32(key.encode("utf-8")))
        else:
            entropy.append(int(key) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


def derive_rng(master_seed: int, *keys: SeedKey) -> np.random.Generator:
    """Seeded generator for the given key path (see derive_seed)."""
    return np.random.default_rng(derive_seed(master_seed, *keys))


def ceil_count(fraction: float, total: int) -> int:
    """
    Compute ceil(fraction * total) without floating-point overshoot.

    0.1 * 30 evaluates to 3.0000000000000004; rounding to nine decimals first keeps
    the ceiling at 3.

    Args:
        fraction: Fraction in [0, 1]
        total: Population size

    Returns:
        int: Count
    """
    return int(math.ceil(round(fraction * total, 9)))


def sanitize_filename(filename: str) -> str:
    """
    Sanitize a string to be used as a filename.

    Args:
        filename: Input filename

    Returns:
        str: Sanitized filename
    """
    invalid_chars = r'[<>:"/\\|?*\x00-\x1F\s]'
    sanitized = re.sub(invalid_chars, '_', filename)

    sanitized = sanitized.strip()
    if not sanitized:
        sanitized = "file"

    if len(sanitized) > 255:
        sanitized = sanitized[:255]

    return sanitized


def format_float(value: float) -> str:
    """Shortest round-tripping text form of a float."""
    return repr(float(value))


def to_jsonable(obj: Any) -> Any:
    """
    Convert numpy scalars/arrays and tuples into plain JSON types.

    Args:
        obj: Arbitrary nested structure

    Returns:
        Any: Structure made of dict/list/str/int/float/bool/None
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and fixed separators so equal inputs give equal bytes."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj: Any, path: str) -> str:
    """
    Write a JSON artifact in canonical form.

    Args:
        obj: Object to serialize
        path: Output file path

    Returns:
        str: The path written
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(canonical_json(obj))
    logger.debug(f"Wrote JSON artifact: {path}")
    return path


def read_json(path: str) -> Any:
    """Read a JSON file."""
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def write_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], path: str) -> str:
    """
    Write a CSV artifact; floats use their shortest round-tripping form.

    Args:
        header: Column names
        rows: Row values
        path: Output file path

    Returns:
        str: The path written
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    logger.debug(f"Wrote CSV artifact: {path}")
    return path


def write_ndjson(records: Iterable[Dict[str, Any]], path: str) -> str:
    """Write one canonical JSON object per line."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(to_jsonable(record), sort_keys=True, allow_nan=False) + "\n")
    logger.debug(f"Wrote NDJSON artifact: {path}")
    return path


def config_hash(config: Dict[str, Any]) -> str:
    """
    SHA-256 of the canonical JSON form of a configuration tree.

    Args:
        config: Configuration dictionary

    Returns:
        str: Hex digest
    """
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def file_sha256(path: str) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def get_current_timestamp() -> str:
    """
    Get current timestamp as a formatted string.

    Returns:
        str: Formatted timestamp
    """
    return datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S")


def parse_id_list(value: Union[str, List[str], None]) -> List[str]:
    """
    Parse a comma-separated id list from the command line.

    Args:
        value: "a,b,c", a list, or None

    Returns:
        List[str]: Stripped, non-empty ids
    """
    if value is None:
        return []
    if isinstance(value, str):
        value = value.split(",")
    return [item.strip() for item in value if item and item.strip()]
