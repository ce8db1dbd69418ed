"""
LRP Module

Epsilon-rule layer-wise relevance propagation through the encoder. Relevance starts as the
value of the explained latent unit and is redistributed layer by layer in proportion to each
input's contribution z_jk = x_j w_jk; biases take no share.
"""

from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from src.models.autoencoder import AEModel
from src.nn import functional as F
from src.nn.layers import LayerKind
from src.nn.network import ForwardTrace
from src.utils.errors import ParameterError, StateError
from src.xai.explanation import Explanation, ExplanationTarget, combine_abs, explain_input


@dataclass(frozen=True)
class LrpConfig:
    """
    Attributes:
        epsilon: Stabilizer, relative to each layer's largest |sum_j z_jk|
    """

    epsilon: float = 1e-6

    def validate(self) -> "LrpConfig":
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")
        return self


def _stabilize(zsum: np.ndarray, epsilon: float) -> np.ndarray:
    scale = float(np.max(np.abs(zsum))) if zsum.size else 0.0
    eps = epsilon * scale if scale > 0 else epsilon
    return zsum + eps * np.where(zsum >= 0, 1.0, -1.0)


def _propagate(layer, entry, relevance: np.ndarray, epsilon: float) -> np.ndarray:
    x = entry.inputs
    kind = layer.kind
    if kind == LayerKind.DENSE:
        zsum = x @ layer.weights.T
        s = relevance / _stabilize(zsum, epsilon)
        return x * (s @ layer.weights)
    if kind == LayerKind.CONV1D:
        zsum = F.conv1d_forward(x, layer.weights, np.zeros_like(layer.bias), layer.stride, layer.padding)
        s = relevance / _stabilize(zsum, epsilon)
        c, _, _ = F.conv1d_backward(x, layer.weights, s, layer.stride, layer.padding)
        return x * c
    if kind == LayerKind.MAXPOOL1D:
        return F.maxpool1d_backward(entry.cache["indices"], relevance, x.shape)
    if kind in (LayerKind.FLATTEN, LayerKind.RESHAPE):
        return relevance.reshape(x.shape)
    if kind == LayerKind.UPSAMPLE1D:
        return F.upsample1d_backward(relevance, layer.factor)
    if kind in (LayerKind.ACTIVATION, LayerKind.DROPOUT):
        return relevance
    raise StateError(f"no relevance rule for {kind.value}")


def propagate_relevance(model: AEModel, trace: ForwardTrace, latent_index: int,
                        config: LrpConfig = LrpConfig()) -> np.ndarray:
    """
    Input relevance for one latent unit of a recorded inference pass.

    Args:
        model: Model whose encoder produced the trace
        trace: Forward trace of a single-series batch
        latent_index: Explained unit
        config: Epsilon setting

    Returns:
        np.ndarray: Relevance per input time step
    """
    config.validate()
    if trace is None or not trace.entries:
        raise StateError("LRP needs a recorded forward trace")
    relevance = np.zeros_like(trace.output)
    relevance[:, latent_index] = trace.output[:, latent_index]
    for entry in reversed(trace.entries):
        relevance = _propagate(model.encoder.layers[entry.layer_index], entry, relevance, config.epsilon)
    return relevance.reshape(-1)


def lrp_feature_maps(model: AEModel, series, config: LrpConfig = LrpConfig()) -> Tuple[np.ndarray, Dict[str, Any]]:
    """Relevance maps for every latent unit, shape (latent_dim, L)."""
    x, _ = explain_input(model, series)
    trace = model.encoder.forward(x[None, None, :])
    maps = np.stack([propagate_relevance(model, trace, i, config) for i in range(model.latent_dim)])
    return maps, {"epsilon": config.epsilon}


def lrp_explain(model: AEModel, series, target=None, config: LrpConfig = LrpConfig()) -> Explanation:
    """
    Epsilon-LRP explanation of one latent unit (signed) or combined (mean absolute).

    Args:
        model: Trained model
        series: Series to explain
        target: ExplanationTarget, index or "combined"
        config: Epsilon setting

    Returns:
        Explanation: Relevance per time step
    """
    config.validate()
    target = ExplanationTarget.parse(target).check(model.latent_dim)
    x, series_id = explain_input(model, series)
    trace = model.encoder.forward(x[None, None, :])
    if target.is_combined:
        values = combine_abs([propagate_relevance(model, trace, i, config) for i in range(model.latent_dim)])
    else:
        values = propagate_relevance(model, trace, target.index, config)
    relevance_sum = float(values.sum()) if not target.is_combined else None
    return Explanation(values, "lrp", target, series_id,
                       {"epsilon": config.epsilon, "relevance_sum": relevance_sum})
