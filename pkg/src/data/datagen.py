"""
Synthetic Corpus Generator

This module generates labeled series that mimic the structure of end-of-line test
traces: a periodic regime A over the first two thirds and a faster, weaker regime B over
the final third, with anomalies injected into a small fraction of instances.
"""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.data.dataset import NOK, OK, Dataset, TimeSeries
from src.utils.errors import DimensionError, ParameterError
from src.utils.helper_functions import ceil_count, derive_rng, derive_seed
from src.utils.logger import get_logger

logger = get_logger()


@dataclass(frozen=True)
class RegimeParams:
    """Two superposed sinusoids plus an offset; frequencies in cycles per full series."""

    frequencies: Tuple[float, float] = (6.0, 18.0)
    amplitudes: Tuple[float, float] = (1.0, 0.5)
    offset: float = 0.0


@dataclass(frozen=True)
class GeneratorConfig:
    """
    Attributes:
        length: Samples per series (1024 desk scale, 8192 full scale)
        size: Number of series in the corpus
        nok_rate: Fraction of NOK instances, in [0, 1)
        regime_a: Pattern over [0, boundary)
        regime_b: Pattern over [boundary, length)
        boundary_fraction: Regime boundary as a fraction of the length
        noise_sigma: Gaussian noise standard deviation
        phase_jitter: Maximum per-instance phase shift, in cycles
        master_seed: Root seed
    """

    length: int = 1024
    size: int = 5000
    nok_rate: float = 0.0068
    regime_a: RegimeParams = RegimeParams()
    regime_b: RegimeParams = RegimeParams(frequencies=(48.0, 96.0), amplitudes=(0.35, 0.1), offset=0.5)
    boundary_fraction: float = 2.0 / 3.0
    noise_sigma: float = 0.05
    phase_jitter: float = 0.02
    master_seed: int = 42

    @property
    def boundary(self) -> int:
        return int(round(self.boundary_fraction * self.length))

    def validate(self) -> "GeneratorConfig":
        if self.length < 64:
            raise ParameterError(f"length must be >= 64, got {self.length}")
        if self.size < 0:
            raise ParameterError(f"size must be >= 0, got {self.size}")
        if not 0.0 <= self.nok_rate < 1.0:
            raise ParameterError(f"nok_rate must be in [0, 1), got {self.nok_rate}")
        if not 0 < self.boundary < self.length:
            raise ParameterError(f"regime boundary {self.boundary} must lie inside (0, {self.length})")
        if self.noise_sigma < 0 or self.phase_jitter < 0:
            raise ParameterError("noise_sigma and phase_jitter must be >= 0")
        return self

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GeneratorConfig":
        data = dict(data)
        for key in ("regime_a", "regime_b"):
            if key in data:
                regime = dict(data[key])
                for tuple_key in ("frequencies", "amplitudes"):
                    if tuple_key in regime:
                        regime[tuple_key] = tuple(float(v) for v in regime[tuple_key])
                data[key] = RegimeParams(**regime)
        return cls(**data).validate()

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class AnomalyKind(str, Enum):
    PATTERN_DISRUPTION = "pattern_disruption"
    REGIME_MISSING = "regime_missing"
    AMPLITUDE_SHIFT = "amplitude_shift"


@dataclass(frozen=True)
class AnomalySpec:
    """
    Attributes:
        kind: What the anomaly does to the window
        window: Half-open index range [start, stop)
        magnitude: Blend factor (disruption) or additive shift (amplitude_shift)
    """

    kind: AnomalyKind
    window: Tuple[int, int]
    magnitude: float = 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "window": list(self.window), "magnitude": self.magnitude}


def regime_waveform(params: RegimeParams, positions: np.ndarray, length: int, phase: float) -> np.ndarray:
    """Noise-free regime pattern evaluated at the given sample positions."""
    x = positions / float(length)
    wave = np.full(positions.shape, params.offset, dtype=np.float64)
    for frequency, amplitude in zip(params.frequencies, params.amplitudes):
        wave += amplitude * np.sin(2.0 * np.pi * (frequency * x + phase))
    return wave


def generate_normal(config: GeneratorConfig, instance_seed: int, series_id: str = "") -> TimeSeries:
    """
    Generate one OK series.

    Args:
        config: Generator configuration
        instance_seed: Seed for this instance's phase and noise
        series_id: Identifier to assign

    Returns:
        TimeSeries: Labeled OK, with the drawn phase in metadata
    """
    config.validate()
    rng = np.random.default_rng(instance_seed)
    phase = float(rng.uniform(-config.phase_jitter, config.phase_jitter)) if config.phase_jitter > 0 else 0.0
    positions = np.arange(config.length, dtype=np.float64)
    boundary = config.boundary

    values = np.empty(config.length)
    values[:boundary] = regime_waveform(config.regime_a, positions[:boundary], config.length, phase)
    values[boundary:] = regime_waveform(config.regime_b, positions[boundary:], config.length, phase)
    if config.noise_sigma > 0:
        values += rng.normal(0.0, config.noise_sigma, size=config.length)
    return TimeSeries(values, OK, series_id, {"phase": phase, "seed": int(instance_seed)})


def inject_anomaly(
    series: TimeSeries, spec: AnomalySpec, seed: int, config: Optional[GeneratorConfig] = None
) -> TimeSeries:
    """
    Modify only spec.window according to the anomaly kind and relabel as NOK.

    Args:
        series: Source series (left untouched)
        spec: What to inject and where
        seed: Seed for the window noise
        config: Generator configuration; required for regime_missing

    Returns:
        TimeSeries: NOK copy
    """
    start, stop = spec.window
    if not 0 <= start < stop <= len(series):
        raise DimensionError(f"anomaly window {spec.window} outside series of length {len(series)}")
    if spec.magnitude < 0:
        raise ParameterError(f"anomaly magnitude must be >= 0, got {spec.magnitude}")

    rng = np.random.default_rng(seed)
    values = series.values.copy()
    window = values[start:stop]
    if spec.kind == AnomalyKind.PATTERN_DISRUPTION:
        flat = window.mean() + rng.normal(0.0, 0.02, size=window.shape)
        values[start:stop] = window + spec.magnitude * (flat - window)
    elif spec.kind == AnomalyKind.AMPLITUDE_SHIFT:
        values[start:stop] = window + spec.magnitude
    elif spec.kind == AnomalyKind.REGIME_MISSING:
        if config is None:
            raise ParameterError("regime_missing needs the generator config")
        positions = np.arange(start, stop, dtype=np.float64)
        phase = float(series.metadata.get("phase", 0.0))
        continued = regime_waveform(config.regime_a, positions, config.length, phase)
        if config.noise_sigma > 0:
            continued = continued + rng.normal(0.0, config.noise_sigma, size=continued.shape)
        values[start:stop] = continued
    else:
        raise ParameterError(f"Unknown anomaly kind: {spec.kind}")

    metadata = dict(series.metadata)
    metadata["anomaly"] = spec.to_dict()
    return TimeSeries(values, NOK, series.series_id, metadata)


def random_anomaly_spec(config: GeneratorConfig, rng: np.random.Generator) -> AnomalySpec:
    """
    Draw an anomaly with its window inside the final two thirds of the series.

    Args:
        config: Generator configuration
        rng: Generator

    Returns:
        AnomalySpec: Randomized spec
    """
    kinds = list(AnomalyKind)
    kind = kinds[int(rng.integers(len(kinds)))]
    if kind == AnomalyKind.REGIME_MISSING:
        return AnomalySpec(kind, (config.boundary, config.length), 1.0)

    first = config.length // 3
    width = int(rng.integers(config.length // 16, config.length // 6 + 1))
    start = int(rng.integers(first, config.length - width + 1))
    if kind == AnomalyKind.PATTERN_DISRUPTION:
        magnitude = float(rng.uniform(0.6, 1.0))
    else:
        magnitude = float(rng.uniform(0.5, 1.0))
    return AnomalySpec(kind, (start, start + width), magnitude)


def generate_corpus(config: GeneratorConfig) -> Tuple[Dataset, Dict[str, Any]]:
    """
    Generate the labeled corpus and its manifest.

    Exactly ceil(nok_rate * size) instances are NOK; which ones, their anomaly specs and
    every instance seed derive from the master seed.

    Args:
        config: Generator configuration

    Returns:
        Tuple[Dataset, Dict]: Corpus and manifest (config, seeds, labels, specs)
    """
    config.validate()
    n_nok = ceil_count(config.nok_rate, config.size)
    rng = derive_rng(config.master_seed, "nok-selection")
    nok_indices = set(rng.permutation(config.size)[:n_nok].tolist())

    series: List[TimeSeries] = []
    instances: List[Dict[str, Any]] = []
    width = max(5, len(str(config.size)))
    for index in range(config.size):
        series_id = f"s{index:0{width}d}"
        seed = derive_seed(config.master_seed, "instance", index)
        ts = generate_normal(config, seed, series_id)
        record: Dict[str, Any] = {"id": series_id, "seed": seed, "label": OK, "anomaly": None}
        if index in nok_indices:
            spec_rng = derive_rng(config.master_seed, "anomaly", index)
            spec = random_anomaly_spec(config, spec_rng)
            anomaly_seed = derive_seed(config.master_seed, "anomaly-noise", index)
            ts = inject_anomaly(ts, spec, anomaly_seed, config)
            record.update({"label": NOK, "anomaly": spec.to_dict(), "anomaly_seed": anomaly_seed})
        series.append(ts)
        instances.append(record)

    manifest = {
        "config": config.to_dict(),
        "nok_count": n_nok,
        "ok_count": config.size - n_nok,
        "instances": instances,
    }
    logger.info(f"Generated corpus: {config.size} series, {n_nok} NOK, length {config.length}")
    return Dataset(series), manifest
