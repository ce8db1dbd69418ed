"""
Segmentation Module

Equal-width segmentation of a series and the masking machinery LIME and KernelSHAP share:
a masked-out segment is replaced by the straight line joining its first and last samples.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.utils.errors import DimensionError, ParameterError


@dataclass(frozen=True)
class SegmentationScheme:
    """
    Attributes:
        bounds: Half-open (start, stop) ranges partitioning [0, length)
    """

    bounds: Tuple[Tuple[int, int], ...]

    @classmethod
    def equal(cls, length: int, segments: int) -> "SegmentationScheme":
        """
        Split [0, length) into `segments` contiguous windows whose sizes differ by at most 1.

        Raises:
            ParameterError: Unless 1 <= segments <= length
        """
        if not 1 <= segments <= length:
            raise ParameterError(f"segments must be in [1, {length}], got {segments}")
        edges = (np.arange(segments + 1) * length) // segments
        return cls(tuple((int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])))

    def __len__(self) -> int:
        return len(self.bounds)

    @property
    def length(self) -> int:
        return self.bounds[-1][1] if self.bounds else 0

    @property
    def sizes(self) -> np.ndarray:
        return np.array([b - a for a, b in self.bounds], dtype=int)

    def validate(self) -> "SegmentationScheme":
        cursor = 0
        for start, stop in self.bounds:
            if start != cursor or stop <= start:
                raise ParameterError(f"segments must be contiguous and nonempty, got {self.bounds}")
            cursor = stop
        return self

    def expand(self, values: np.ndarray) -> np.ndarray:
        """Broadcast per-segment values (..., m) to time steps (..., length)."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != len(self):
            raise DimensionError(f"expected {len(self)} segment values, got {values.shape[-1]}")
        return np.repeat(values, self.sizes, axis=-1)

    def segment_of(self, position: int) -> int:
        starts = np.array([a for a, _ in self.bounds])
        return int(np.searchsorted(starts, position, side="right") - 1)


def interpolation_background(x: np.ndarray, scheme: SegmentationScheme) -> np.ndarray:
    """
    Per-segment linear interpolation between each segment's first and last sample.

    Args:
        x: Series (L,)
        scheme: Segmentation of x

    Returns:
        np.ndarray: Replacement signal (L,)
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (scheme.length,):
        raise DimensionError(f"series length {x.shape} does not match segmentation length {scheme.length}")
    background = np.empty_like(x)
    for start, stop in scheme.bounds:
        background[start:stop] = np.linspace(x[start], x[stop - 1], stop - start)
    return background


def apply_masks(
    x: np.ndarray, masks: np.ndarray, scheme: SegmentationScheme, background: np.ndarray
) -> np.ndarray:
    """
    Build perturbed series: kept segments (mask 1) from x, the rest from background.

    Args:
        x: Series (L,)
        masks: Binary (n, m) masks
        scheme: Segmentation
        background: Replacement signal (L,)

    Returns:
        np.ndarray: (n, L) perturbed series
    """
    masks = np.asarray(masks)
    if masks.ndim != 2 or masks.shape[1] != len(scheme):
        raise DimensionError(f"masks must be (n, {len(scheme)}), got {masks.shape}")
    keep = scheme.expand(masks.astype(np.float64)) > 0.5
    return np.where(keep, x[None, :], background[None, :])


@dataclass
class PerturbationSample:
    """One evaluated mask: the mask, its perturbed series and the encoder output."""

    mask: np.ndarray
    series: np.ndarray
    output: np.ndarray


def evaluate_masks(model, x: np.ndarray, masks: np.ndarray, scheme: SegmentationScheme,
                   background: np.ndarray) -> np.ndarray:
    """Encoder latents (n, latent_dim) of every masked version of the normalized series x."""
    return np.stack([sample.output for sample in perturbation_samples(model, x, masks, scheme, background)])


def perturbation_samples(model, x: np.ndarray, masks: np.ndarray, scheme: SegmentationScheme,
                         background: np.ndarray) -> List[PerturbationSample]:
    perturbed = apply_masks(x, masks, scheme, background)
    outputs = model.encode_prepared(perturbed)
    return [PerturbationSample(m, s, o) for m, s, o in zip(masks, perturbed, outputs)]
