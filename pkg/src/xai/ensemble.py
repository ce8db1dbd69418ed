"""
Ensemble Module

Aggregated explanation: every member explanation is min-max scaled to [a_min, a_max] over
its own values, then the scaled maps are averaged point by point, optionally weighted.
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils.errors import ExplanationSetError, ParameterError
from src.utils.logger import get_logger
from src.xai.explanation import Explanation

logger = get_logger()


@dataclass(frozen=True)
class ScalingBounds:
    a_min: float = 0.0
    a_max: float = 1.0

    def validate(self) -> "ScalingBounds":
        if not self.a_max > self.a_min:
            raise ParameterError(f"a_max must exceed a_min, got ({self.a_min}, {self.a_max})")
        return self


@dataclass(frozen=True)
class EnsembleConfig:
    """
    Attributes:
        bounds: Target range of the scaled members
        weights: Optional non-negative weight per method; equal weights when None
    """

    bounds: ScalingBounds = ScalingBounds()
    weights: Optional[Tuple[Tuple[str, float], ...]] = None

    def validate(self) -> "EnsembleConfig":
        self.bounds.validate()
        if self.weights is not None:
            _check_weights(dict(self.weights), [m for m, _ in self.weights])
        return self

    def weight_map(self) -> Optional[Dict[str, float]]:
        return dict(self.weights) if self.weights is not None else None


def scale_values(values: np.ndarray, bounds: ScalingBounds = ScalingBounds()) -> Tuple[np.ndarray, bool]:
    """
    Affine min-max scaling of one explanation to [a_min, a_max].

    Args:
        values: Explanation values
        bounds: Target range

    Returns:
        Tuple[np.ndarray, bool]: (scaled values, degenerate flag); a constant input maps to
        all a_min with the flag set
    """
    bounds.validate()
    values = np.asarray(values, dtype=np.float64)
    low, high = float(values.min()), float(values.max())
    if high == low:
        return np.full_like(values, bounds.a_min), True
    scaled = (values - low) / (high - low) * (bounds.a_max - bounds.a_min) + bounds.a_min
    return np.clip(scaled, bounds.a_min, bounds.a_max), False


def scale(explanation: Explanation, bounds: ScalingBounds = ScalingBounds()) -> Explanation:
    """Scaled copy of an explanation; metadata records the degenerate flag."""
    values, degenerate = scale_values(explanation.values, bounds)
    if degenerate:
        logger.warning(f"Constant {explanation.method} explanation for {explanation.series_id!r}; scaled to a_min")
    metadata = dict(explanation.metadata)
    metadata["scaled"] = {"a_min": bounds.a_min, "a_max": bounds.a_max, "degenerate": degenerate}
    return Explanation(values, explanation.method, explanation.target, explanation.series_id, metadata)


class ExplanationSet:
    """
    Explanations of one series and one target by at least two methods.

    Raises:
        ExplanationSetError: On fewer than two methods or mismatched length, series or target
    """

    def __init__(self, explanations: Union[Mapping[str, Explanation], Sequence[Explanation]]):
        if isinstance(explanations, Mapping):
            items = dict(explanations)
        else:
            items = {}
            for e in explanations:
                if e.method in items:
                    raise ExplanationSetError(f"duplicate method {e.method!r}")
                items[e.method] = e
        if len(items) < 2:
            raise ExplanationSetError(f"an explanation set needs at least 2 methods, got {len(items)}")
        members = list(items.values())
        first = members[0]
        for e in members[1:]:
            if len(e) != len(first):
                raise ExplanationSetError(f"length mismatch: {e.method} has {len(e)}, {first.method} has {len(first)}")
            if e.series_id != first.series_id:
                raise ExplanationSetError(f"series mismatch: {e.series_id!r} vs {first.series_id!r}")
            if e.target != first.target:
                raise ExplanationSetError(f"target mismatch: {e.target} vs {first.target}")
        self.explanations: Dict[str, Explanation] = items

    @property
    def methods(self):
        return sorted(self.explanations)

    def __len__(self) -> int:
        return len(self.explanations)


@dataclass
class AggregatedExplanation:
    """
    Attributes:
        values: Aggregated value per time step, within the bounds
        bounds: Scaling bounds used
        weights: Normalized weight per method
        methods: Contributing methods, sorted
        degenerate: Methods whose explanation was constant
        series_id: Explained series
        target: Explained target
    """

    values: np.ndarray
    bounds: ScalingBounds
    weights: Dict[str, float]
    methods: Tuple[str, ...]
    degenerate: Tuple[str, ...] = ()
    series_id: str = ""
    target: object = None

    def as_explanation(self) -> Explanation:
        """The aggregate tagged as method "aee", for exports and quality evaluation."""
        return Explanation(
            self.values, "aee", self.target, self.series_id,
            {"methods": list(self.methods), "weights": dict(self.weights),
             "bounds": [self.bounds.a_min, self.bounds.a_max], "degenerate": list(self.degenerate)},
        )


def _check_weights(weights: Mapping[str, float], methods: Sequence[str]) -> None:
    missing = [m for m in methods if m not in weights]
    if missing:
        raise ParameterError(f"weights missing for methods {missing}")
    if any(weights[m] < 0 for m in methods):
        raise ParameterError("weights must be non-negative")
    if not sum(weights[m] for m in methods) > 0:
        raise ParameterError("weights must have a positive sum")


def aggregate(
    explanation_set: Union[ExplanationSet, Mapping[str, Explanation], Sequence[Explanation]],
    bounds: ScalingBounds = ScalingBounds(),
    weights: Optional[Mapping[str, float]] = None,
) -> AggregatedExplanation:
    """
    Scale every member and take the (weighted) mean per point.

    Members are combined in sorted method order, so the result does not depend on the
    order they were supplied in.

    Args:
        explanation_set: Two or more explanations of the same series and target
        bounds: Scaling bounds
        weights: Optional non-negative weight per method

    Returns:
        AggregatedExplanation: Values within [a_min, a_max]
    """
    if not isinstance(explanation_set, ExplanationSet):
        explanation_set = ExplanationSet(explanation_set)
    bounds.validate()
    methods = explanation_set.methods
    if weights is None:
        weights = {m: 1.0 for m in methods}
    _check_weights(weights, methods)
    total = float(sum(weights[m] for m in methods))

    accumulated = None
    degenerate = []
    for method in methods:
        scaled, flat = scale_values(explanation_set.explanations[method].values, bounds)
        if flat:
            degenerate.append(method)
        term = weights[method] * scaled
        accumulated = term if accumulated is None else accumulated + term
    values = np.clip(accumulated / total, bounds.a_min, bounds.a_max)

    first = explanation_set.explanations[methods[0]]
    return AggregatedExplanation(
        values, bounds, {m: float(weights[m]) / total for m in methods}, tuple(methods),
        tuple(degenerate), first.series_id, first.target,
    )
