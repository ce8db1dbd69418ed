"""
LIME Module

Local surrogate explanations: random segment masks, interpolated replacements, an
exponential proximity kernel on the cosine distance to the unmasked instance, and a
weighted ridge regression per latent unit.
"""

from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from src.models.autoencoder import AEModel
from src.utils.errors import NumericalError, ParameterError
from src.utils.logger import get_logger
from src.xai.explanation import Explanation, ExplanationTarget, combine_abs, explain_input
from src.xai.segmentation import SegmentationScheme, evaluate_masks, interpolation_background

logger = get_logger()


@dataclass(frozen=True)
class LimeConfig:
    """
    Attributes:
        segments: Number of equal-width segments m
        samples: Number of masks n (the first is always all ones)
        kernel_width: sigma of exp(-d^2 / sigma^2)
        ridge: Ridge penalty lambda on the segment coefficients
        seed: Seed for the masks
    """

    segments: int = 64
    samples: int = 1000
    kernel_width: float = 0.25
    ridge: float = 1.0
    seed: int = 0

    def validate(self) -> "LimeConfig":
        if self.segments < 2:
            raise ParameterError(f"LIME needs at least 2 segments, got {self.segments}")
        if self.samples < self.segments:
            raise ParameterError(f"LIME needs samples >= segments, got {self.samples} < {self.segments}")
        if not self.kernel_width > 0:
            raise ParameterError(f"kernel_width must be > 0, got {self.kernel_width}")
        if self.ridge < 0:
            raise ParameterError(f"ridge must be >= 0, got {self.ridge}")
        return self


def cosine_distance_to_ones(masks: np.ndarray) -> np.ndarray:
    """Cosine distance of each binary mask to the all-ones mask; the empty mask gets 1."""
    masks = np.asarray(masks, dtype=np.float64)
    ones = masks.sum(axis=1)
    norms = np.sqrt(ones) * np.sqrt(masks.shape[1])
    similarity = np.divide(ones, norms, out=np.zeros_like(ones), where=norms > 0)
    return 1.0 - similarity


def weighted_ridge(
    design: np.ndarray, targets: np.ndarray, weights: np.ndarray, ridge: float
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Weighted ridge regression with an unpenalized intercept.

    Solves (X^T W X + lambda P) beta = X^T W y for every target column. On a singular or
    non-finite solve, lambda is raised tenfold once.

    Args:
        design: (n, m) features
        targets: (n, k) responses
        weights: (n,) sample weights
        ridge: Penalty lambda

    Returns:
        Tuple: (coefficients (m, k), intercepts (k,), lambda used)

    Raises:
        NumericalError: If the bumped system is still unsolvable
    """
    n, m = design.shape
    x = np.hstack([np.ones((n, 1)), design])
    penalty = np.eye(m + 1)
    penalty[0, 0] = 0.0
    gram = x.T @ (weights[:, None] * x)
    rhs = x.T @ (weights[:, None] * targets)

    lam = ridge
    for attempt in range(2):
        try:
            beta = np.linalg.solve(gram + lam * penalty, rhs)
            if np.all(np.isfinite(beta)):
                return beta[1:], beta[0], lam
        except np.linalg.LinAlgError:
            pass
        if attempt == 0:
            bumped = lam * 10.0 if lam > 0 else 1e-6
            logger.warning(f"Ridge system singular at lambda={lam}; retrying with lambda={bumped}")
            lam = bumped
    raise NumericalError(f"ridge system unsolvable even with lambda={lam}")


def lime_feature_maps(model: AEModel, series, config: LimeConfig = LimeConfig()) -> Tuple[np.ndarray, Dict[str, Any]]:
    """
    Fit one surrogate per latent unit.

    Returns:
        Tuple: ((latent_dim, L) signed coefficient maps, metadata)
    """
    config.validate()
    x, _ = explain_input(model, series)
    scheme = SegmentationScheme.equal(x.shape[0], config.segments)
    background = interpolation_background(x, scheme)

    rng = np.random.default_rng(config.seed)
    masks = rng.integers(0, 2, size=(config.samples, config.segments))
    masks[0] = 1
    outputs = evaluate_masks(model, x, masks, scheme, background)
    distances = cosine_distance_to_ones(masks)
    weights = np.exp(-(distances ** 2) / config.kernel_width ** 2)

    coefficients, _, lam = weighted_ridge(masks.astype(np.float64), outputs, weights, config.ridge)
    maps = scheme.expand(coefficients.T)
    return maps, {"segments": config.segments, "samples": config.samples, "ridge": lam, "seed": config.seed}


def lime_explain(model: AEModel, series, target=None, config: LimeConfig = LimeConfig()) -> Explanation:
    """
    LIME explanation of one latent unit (signed coefficients) or combined (mean absolute).

    Args:
        model: Trained model
        series: Series to explain
        target: ExplanationTarget, index or "combined"
        config: LIME settings; the same seed gives the same explanation

    Returns:
        Explanation: Segment coefficients broadcast to time steps
    """
    target = ExplanationTarget.parse(target).check(model.latent_dim)
    _, series_id = explain_input(model, series)
    maps, metadata = lime_feature_maps(model, series, config)
    values = combine_abs(maps) if target.is_combined else maps[target.index]
    return Explanation(values, "lime", target, series_id, metadata)
