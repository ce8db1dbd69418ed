"""
Grad-CAM Module

Class-activation maps for an encoder latent unit: the feature maps A of the last
convolutional layer (after its activation) are weighted by the time-averaged gradient of
the latent unit, summed over channels, rectified and interpolated to the input length.
"""

from typing import Any, Dict, Tuple

import numpy as np

from src.models.autoencoder import AEModel
from src.nn.layers import LayerKind
from src.utils.errors import StateError
from src.xai.explanation import Explanation, ExplanationTarget, combine_abs, explain_input


def feature_map_index(model: AEModel) -> int:
    """
    Index of the layer whose output Grad-CAM uses: the activation right after the last
    convolution, or the convolution itself when no activation follows.
    """
    index = model.encoder.last_index(LayerKind.CONV1D.value)
    layers = model.encoder.layers
    if index + 1 < len(layers) and layers[index + 1].kind == LayerKind.ACTIVATION:
        index += 1
    if index + 1 >= len(layers):
        raise StateError("the last convolution must be followed by layers leading to the latent")
    return index


def feature_map_gradients(model: AEModel, series, latent_index: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Feature maps A and dL_i/dA for one series.

    Args:
        model: Trained model
        series: Series to explain
        latent_index: Latent unit i

    Returns:
        Tuple[np.ndarray, np.ndarray]: (A, gradient), both (channels, feature length)
    """
    ExplanationTarget.latent(latent_index).check(model.latent_dim)
    x, _ = explain_input(model, series)
    return _maps_and_gradients(model, x, [latent_index])[0]


def _maps_and_gradients(model: AEModel, x: np.ndarray, indices) -> list:
    a_index = feature_map_index(model)
    trace = model.encoder.forward(x[None, None, :])
    maps = trace.entry(a_index).outputs[0]
    results = []
    for i in indices:
        seed = np.zeros_like(trace.output)
        seed[0, i] = 1.0
        grad, _ = model.encoder.backward(trace, seed, stop=a_index + 1)
        results.append((maps, grad[0]))
    return results


def _cam(maps: np.ndarray, grads: np.ndarray, length: int) -> np.ndarray:
    weights = grads.mean(axis=1)
    cam = np.maximum(np.tensordot(weights, maps, axes=(0, 0)), 0.0)
    if cam.shape[0] == length:
        return cam
    if cam.shape[0] == 1:
        return np.full(length, cam[0])
    return np.interp(np.linspace(0.0, cam.shape[0] - 1, length), np.arange(cam.shape[0]), cam)


def gradcam_feature_maps(model: AEModel, series) -> Tuple[np.ndarray, Dict[str, Any]]:
    """One CAM per latent unit, shape (latent_dim, L)."""
    x, _ = explain_input(model, series)
    pairs = _maps_and_gradients(model, x, range(model.latent_dim))
    cams = np.stack([_cam(maps, grads, x.shape[0]) for maps, grads in pairs])
    return cams, {"feature_layer": feature_map_index(model)}


def gradcam_explain(model: AEModel, series, target=None) -> Explanation:
    """
    Grad-CAM explanation of one latent unit, or the mean of all units' CAMs (combined).

    Args:
        model: Trained model
        series: Series to explain
        target: ExplanationTarget, index or "combined"

    Returns:
        Explanation: Non-negative heatmap of the input length
    """
    target = ExplanationTarget.parse(target).check(model.latent_dim)
    x, series_id = explain_input(model, series)
    metadata: Dict[str, Any] = {"feature_layer": feature_map_index(model)}
    if target.is_combined:
        pairs = _maps_and_gradients(model, x, range(model.latent_dim))
        values = combine_abs([_cam(m, g, x.shape[0]) for m, g in pairs])
    else:
        maps, grads = _maps_and_gradients(model, x, [target.index])[0]
        values = _cam(maps, grads, x.shape[0])
    return Explanation(values, "gradcam", target, series_id, metadata)
