"""
KernelSHAP Module

Shapley values of segments for each latent unit. The value of a coalition S is the encoder
output when the segments outside S are replaced by the interpolated background.

Exact mode enumerates all 2^m coalitions with the Shapley weights. Sampled mode solves the
KernelSHAP weighted least-squares problem under the efficiency constraint, enumerating every
coalition when the sample budget allows and otherwise drawing paired coalitions from the
kernel's size distribution.
"""

from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
from scipy.special import binom, factorial

from src.models.autoencoder import AEModel
from src.utils.errors import ParameterError
from src.utils.logger import get_logger
from src.xai.explanation import Explanation, ExplanationTarget, combine_abs, explain_input
from src.xai.segmentation import SegmentationScheme, evaluate_masks, interpolation_background

logger = get_logger()

EXACT_MAX_SEGMENTS = 12


@dataclass(frozen=True)
class KernelShapConfig:
    """
    Attributes:
        segments: Number of equal-width segments m
        samples: Coalition budget for sampled mode
        exact: Enumerate all coalitions with Shapley weights (m <= 12)
        seed: Seed for sampled coalitions
    """

    segments: int = 64
    samples: int = 2048
    exact: bool = False
    seed: int = 0

    def validate(self) -> "KernelShapConfig":
        if self.segments < 2:
            raise ParameterError(f"KernelSHAP needs at least 2 segments, got {self.segments}")
        if self.exact and self.segments > EXACT_MAX_SEGMENTS:
            raise ParameterError(
                f"exact Shapley enumeration is limited to {EXACT_MAX_SEGMENTS} segments, got {self.segments}"
            )
        if not self.exact and self.samples < 2:
            raise ParameterError(f"samples must be >= 2, got {self.samples}")
        return self


def all_coalitions(m: int) -> np.ndarray:
    """Every binary mask over m players, row r encoding the bits of r (player 0 = lowest bit)."""
    codes = np.arange(2 ** m)
    return ((codes[:, None] >> np.arange(m)[None, :]) & 1).astype(np.int8)


def kernel_weight(m: int, size: np.ndarray) -> np.ndarray:
    """Shapley kernel (m - 1) / (C(m, |z|) |z| (m - |z|)) for 0 < |z| < m."""
    size = np.asarray(size, dtype=np.float64)
    return (m - 1) / (binom(m, size) * size * (m - size))


def exact_shapley(values: np.ndarray, m: int) -> np.ndarray:
    """
    Exact Shapley values from the value of every coalition.

    Args:
        values: (2^m, k) value of each coalition, indexed as in all_coalitions
        m: Number of players

    Returns:
        np.ndarray: (m, k) Shapley values
    """
    codes = np.arange(2 ** m)
    sizes = np.array([bin(c).count("1") for c in codes])
    weights = factorial(sizes) * factorial(m - sizes - 1) / factorial(m)
    phi = np.zeros((m,) + values.shape[1:])
    for player in range(m):
        bit = 1 << player
        without = codes[(codes & bit) == 0]
        marginal = values[without | bit] - values[without]
        phi[player] = np.tensordot(weights[without], marginal, axes=(0, 0))
    return phi


def sample_coalitions(m: int, samples: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Coalitions and weights for the constrained regression.

    If the budget covers every non-trivial coalition they are all enumerated with kernel
    weights; otherwise sizes are drawn from the kernel's size distribution and each draw is
    paired with its complement, every sample weighing 1.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (n, m) masks, (n,) weights
    """
    if samples >= 2 ** m - 2:
        masks = all_coalitions(m)[1:-1]
        return masks, kernel_weight(m, masks.sum(axis=1))

    sizes = np.arange(1, m)
    probabilities = (m - 1) / (sizes * (m - sizes))
    probabilities /= probabilities.sum()
    masks = np.zeros((samples, m), dtype=np.int8)
    row = 0
    while row < samples:
        size = int(rng.choice(sizes, p=probabilities))
        chosen = rng.choice(m, size=size, replace=False)
        masks[row, chosen] = 1
        row += 1
        if row < samples:
            masks[row] = 1 - masks[row - 1]
            row += 1
    return masks, np.ones(samples)


def constrained_wls(masks: np.ndarray, values: np.ndarray, weights: np.ndarray,
                    v_empty: np.ndarray, v_full: np.ndarray) -> np.ndarray:
    """
    Weighted least squares for the attributions subject to sum(phi) = v_full - v_empty.

    The last player is eliminated through the constraint, so efficiency holds exactly.

    Args:
        masks: (n, m) coalitions
        values: (n, k) coalition values
        weights: (n,) sample weights
        v_empty: (k,) value of the empty coalition
        v_full: (k,) value of the full coalition

    Returns:
        np.ndarray: (m, k) attributions
    """
    z = masks.astype(np.float64)
    delta = v_full - v_empty
    y = values - v_empty[None, :] - z[:, -1:] * delta[None, :]
    design = z[:, :-1] - z[:, -1:]
    root = np.sqrt(weights)[:, None]
    head, *_ = np.linalg.lstsq(design * root, y * root, rcond=None)
    last = delta - head.sum(axis=0)
    return np.vstack([head, last[None, :]])


def kshap_feature_maps(model: AEModel, series, config: KernelShapConfig = KernelShapConfig()) -> Tuple[np.ndarray, Dict[str, Any]]:
    """
    Segment attributions for every latent unit.

    Returns:
        Tuple: ((latent_dim, L) attribution maps, metadata)
    """
    config.validate()
    x, _ = explain_input(model, series)
    m = config.segments
    scheme = SegmentationScheme.equal(x.shape[0], m)
    background = interpolation_background(x, scheme)
    metadata: Dict[str, Any] = {"segments": m, "exact": config.exact}

    if config.exact:
        masks = all_coalitions(m)
        values = evaluate_masks(model, x, masks, scheme, background)
        phi = exact_shapley(values, m)
        metadata["coalitions"] = int(masks.shape[0])
    else:
        rng = np.random.default_rng(config.seed)
        masks, weights = sample_coalitions(m, config.samples, rng)
        ends = np.vstack([np.zeros(m, dtype=np.int8), np.ones(m, dtype=np.int8)])
        v_empty, v_full = evaluate_masks(model, x, ends, scheme, background)
        values = evaluate_masks(model, x, masks, scheme, background)
        phi = constrained_wls(masks, values, weights, v_empty, v_full)
        metadata.update({"coalitions": int(masks.shape[0]), "seed": config.seed,
                         "enumerated": bool(config.samples >= 2 ** m - 2)})
    return scheme.expand(phi.T), metadata


def kshap_explain(model: AEModel, series, target=None, config: KernelShapConfig = KernelShapConfig()) -> Explanation:
    """
    KernelSHAP explanation of one latent unit or combined (mean absolute over units).

    Every time step of a segment carries the segment's attribution.

    Args:
        model: Trained model
        series: Series to explain
        target: ExplanationTarget, index or "combined"
        config: KernelSHAP settings

    Returns:
        Explanation: Attribution map of the input length
    """
    target = ExplanationTarget.parse(target).check(model.latent_dim)
    _, series_id = explain_input(model, series)
    maps, metadata = kshap_feature_maps(model, series, config)
    values = combine_abs(maps) if target.is_combined else maps[target.index]
    return Explanation(values, "shap", target, series_id, metadata)


def segment_attributions(model: AEModel, series, config: KernelShapConfig = KernelShapConfig()) -> np.ndarray:
    """(m, latent_dim) per-segment attributions, before broadcasting to time steps."""
    maps, _ = kshap_feature_maps(model, series, config)
    scheme = SegmentationScheme.equal(maps.shape[1], config.segments)
    starts = np.array([a for a, _ in scheme.bounds])
    return maps[:, starts].T
