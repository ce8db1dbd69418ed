"""
Functional Layer Kit

Forward and backward passes for 1D convolution, max pooling, dense layers, activations,
dropout, flatten, nearest-neighbour upsampling and the MSE loss. Every operation works on
float64 numpy arrays and accepts optional leading batch axes: a convolution input may be
(C, L) or (B, C, L), a dense input (N,) or (B, N).
"""

from typing import Optional, Tuple

import numpy as np
from scipy import special

from src.utils.errors import DimensionError, ParameterError

ACTIVATIONS = ("relu", "tanh", "sigmoid", "softmax", "linear")
PADDING_MODES = ("same", "valid")


def as_tensor(x) -> np.ndarray:
    """Convert to a float64 array."""
    return np.asarray(x, dtype=np.float64)


def padding_amounts(length: int, kernel_size: int, stride: int, padding: str) -> Tuple[int, int]:
    """
    Left/right zero padding for a convolution.

    "same" pads so that the output length is ceil(length / stride); the extra element
    of an odd total goes to the right.

    Args:
        length: Input length
        kernel_size: Kernel size K
        stride: Stride
        padding: "same" or "valid"

    Returns:
        Tuple[int, int]: (left, right)
    """
    if padding == "valid":
        return 0, 0
    if padding != "same":
        raise ParameterError(f"Unknown padding mode: {padding}")
    out_length = -(-length // stride)
    total = max((out_length - 1) * stride + kernel_size - length, 0)
    return total // 2, total - total // 2


def conv1d_output_length(length: int, kernel_size: int, stride: int, padding: str) -> int:
    left, right = padding_amounts(length, kernel_size, stride, padding)
    return (length + left + right - kernel_size) // stride + 1


def _check_conv(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, stride: int) -> None:
    if x.ndim < 2:
        raise DimensionError(f"conv1d expects input (..., C, L), got shape {x.shape}")
    if weights.ndim != 3:
        raise DimensionError(f"conv1d weights must be (C_out, C_in, K), got {weights.shape}")
    if weights.shape[1] != x.shape[-2]:
        raise DimensionError(
            f"conv1d channel mismatch: weights expect {weights.shape[1]} input channels, "
            f"input has {x.shape[-2]}"
        )
    if bias.shape != (weights.shape[0],):
        raise DimensionError(f"conv1d bias must have shape ({weights.shape[0]},), got {bias.shape}")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")


def _tap(x_padded: np.ndarray, k: int, stride: int, out_length: int) -> np.ndarray:
    # Input samples hit by kernel tap k for every output position.
    return x_padded[..., k:k + stride * (out_length - 1) + 1:stride]


def conv1d_forward(x, weights, bias, stride: int = 1, padding: str = "valid") -> np.ndarray:
    """
    1D cross-correlation with bias.

    Args:
        x: Input (..., C_in, L_in)
        weights: Kernel (C_out, C_in, K)
        bias: Bias (C_out,)
        stride: Positive stride
        padding: "same" or "valid"

    Returns:
        np.ndarray: Output (..., C_out, L_out)
    """
    x, weights, bias = as_tensor(x), as_tensor(weights), as_tensor(bias)
    _check_conv(x, weights, bias, stride)
    kernel_size = weights.shape[2]
    left, right = padding_amounts(x.shape[-1], kernel_size, stride, padding)
    if kernel_size > x.shape[-1] + left + right:
        raise DimensionError(
            f"kernel size {kernel_size} exceeds padded input length {x.shape[-1] + left + right}"
        )
    x_padded = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(left, right)])
    out_length = (x_padded.shape[-1] - kernel_size) // stride + 1

    out = np.zeros(x.shape[:-2] + (weights.shape[0], out_length))
    for k in range(kernel_size):
        out += np.matmul(weights[:, :, k], _tap(x_padded, k, stride, out_length))
    out += bias[:, None]
    return out


def conv1d_backward(
    x, weights, grad_out, stride: int = 1, padding: str = "valid"
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradients of conv1d_forward.

    Args:
        x: Input the forward pass saw (..., C_in, L_in)
        weights: Kernel (C_out, C_in, K)
        grad_out: Upstream gradient (..., C_out, L_out)
        stride: Stride used in the forward pass
        padding: Padding used in the forward pass

    Returns:
        Tuple: (input_grad, weight_grad, bias_grad)
    """
    x, weights, grad_out = as_tensor(x), as_tensor(weights), as_tensor(grad_out)
    c_out, c_in, kernel_size = weights.shape
    left, right = padding_amounts(x.shape[-1], kernel_size, stride, padding)
    out_length = conv1d_output_length(x.shape[-1], kernel_size, stride, padding)
    expected = x.shape[:-2] + (c_out, out_length)
    if grad_out.shape != expected:
        raise DimensionError(f"conv1d upstream gradient must have shape {expected}, got {grad_out.shape}")

    x_padded = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(left, right)])
    grad_flat = grad_out.reshape(-1, c_out, out_length)

    grad_weights = np.empty_like(weights)
    grad_padded = np.zeros_like(x_padded)
    for k in range(kernel_size):
        tap = _tap(x_padded, k, stride, out_length).reshape(-1, c_in, out_length)
        grad_weights[:, :, k] = np.tensordot(grad_flat, tap, axes=([0, 2], [0, 2]))
        grad_padded[..., k:k + stride * (out_length - 1) + 1:stride] += np.matmul(
            weights[:, :, k].T, grad_out
        )
    grad_bias = grad_flat.sum(axis=(0, 2))
    grad_input = grad_padded[..., left:left + x.shape[-1]]
    return np.ascontiguousarray(grad_input), grad_weights, grad_bias


def maxpool1d_forward(x, pool_size: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    """
    Non-overlapping max pooling over the last axis; a trailing remainder is dropped.

    Ties go to the lowest index inside the window.

    Args:
        x: Input (..., L)
        pool_size: Window size

    Returns:
        Tuple: (output (..., L // pool_size), argmax indices into the last input axis)
    """
    x = as_tensor(x)
    if pool_size < 1:
        raise ParameterError(f"pool_size must be >= 1, got {pool_size}")
    if x.ndim < 1 or x.shape[-1] < pool_size:
        raise DimensionError(f"maxpool1d input length must be >= {pool_size}, got shape {x.shape}")
    out_length = x.shape[-1] // pool_size
    windows = x[..., :out_length * pool_size].reshape(x.shape[:-1] + (out_length, pool_size))
    local = np.argmax(windows, axis=-1)
    output = np.take_along_axis(windows, local[..., None], axis=-1)[..., 0]
    indices = local + np.arange(out_length) * pool_size
    return output, indices


def maxpool1d_backward(indices, grad_out, input_shape) -> np.ndarray:
    """
    Route each upstream gradient to its recorded argmax position.

    Args:
        indices: Argmax indices from maxpool1d_forward
        grad_out: Upstream gradient, same shape as indices
        input_shape: Shape of the pooled input

    Returns:
        np.ndarray: Input gradient, zero except at argmax positions
    """
    grad_out = as_tensor(grad_out)
    indices = np.asarray(indices)
    if grad_out.shape != indices.shape:
        raise DimensionError(f"maxpool1d gradient shape {grad_out.shape} != indices shape {indices.shape}")
    grad_input = np.zeros(tuple(input_shape))
    np.put_along_axis(grad_input, indices, grad_out, axis=-1)
    return grad_input


def dense_forward(x, weights, bias) -> np.ndarray:
    """
    Affine map y = W x + b over the last axis.

    Args:
        x: Input (..., N_in)
        weights: Matrix (N_out, N_in)
        bias: Bias (N_out,)

    Returns:
        np.ndarray: Output (..., N_out)
    """
    x, weights, bias = as_tensor(x), as_tensor(weights), as_tensor(bias)
    if weights.ndim != 2 or x.shape[-1] != weights.shape[1]:
        raise DimensionError(f"dense expects input (..., {weights.shape[-1]}), got {x.shape}")
    if bias.shape != (weights.shape[0],):
        raise DimensionError(f"dense bias must have shape ({weights.shape[0]},), got {bias.shape}")
    return x @ weights.T + bias


def dense_backward(x, weights, grad_out) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradients of dense_forward.

    Returns:
        Tuple: (input_grad, weight_grad, bias_grad)
    """
    x, weights, grad_out = as_tensor(x), as_tensor(weights), as_tensor(grad_out)
    if grad_out.shape != x.shape[:-1] + (weights.shape[0],):
        raise DimensionError(f"dense upstream gradient has shape {grad_out.shape}")
    grad_flat = grad_out.reshape(-1, weights.shape[0])
    x_flat = x.reshape(-1, weights.shape[1])
    return grad_out @ weights, grad_flat.T @ x_flat, grad_flat.sum(axis=0)


def activation_forward(x, name: str, axis: int = -1) -> np.ndarray:
    """
    Elementwise nonlinearity; softmax normalizes along `axis`.

    Args:
        x: Input
        name: relu, tanh, sigmoid, softmax or linear
        axis: Softmax axis

    Returns:
        np.ndarray: Activated output
    """
    x = as_tensor(x)
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "tanh":
        return np.tanh(x)
    if name == "sigmoid":
        return special.expit(x)
    if name == "softmax":
        return special.softmax(x, axis=axis)
    if name == "linear":
        return x.copy()
    raise ParameterError(f"Unknown activation: {name}")


def activation_backward(x, y, grad_out, name: str, axis: int = -1) -> np.ndarray:
    """
    Gradient of activation_forward given its input x and output y.

    Returns:
        np.ndarray: Input gradient
    """
    x, y, grad_out = as_tensor(x), as_tensor(y), as_tensor(grad_out)
    if name == "relu":
        return grad_out * (x > 0)
    if name == "tanh":
        return grad_out * (1.0 - y * y)
    if name == "sigmoid":
        return grad_out * y * (1.0 - y)
    if name == "softmax":
        return y * (grad_out - np.sum(grad_out * y, axis=axis, keepdims=True))
    if name == "linear":
        return grad_out.copy()
    raise ParameterError(f"Unknown activation: {name}")


def dropout_forward(
    x, rate: float, rng: Optional[np.random.Generator] = None, training: bool = False
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Inverted dropout: kept units are scaled by 1 / (1 - rate).

    Args:
        x: Input
        rate: Drop probability in [0, 1)
        rng: Generator drawing the mask (required when training)
        training: Identity when False

    Returns:
        Tuple: (output, scaled mask or None at inference)
    """
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ParameterError("dropout in training mode needs a random generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(mask: Optional[np.ndarray], grad_out) -> np.ndarray:
    grad_out = as_tensor(grad_out)
    return grad_out if mask is None else grad_out * mask


def flatten(x, start_axis: int = 0) -> np.ndarray:
    """Collapse every axis from start_axis onwards."""
    x = as_tensor(x)
    return x.reshape(x.shape[:start_axis] + (-1,))


def upsample1d_forward(x, factor: int = 2) -> np.ndarray:
    """Nearest-neighbour upsampling along the last axis."""
    return np.repeat(as_tensor(x), factor, axis=-1)


def upsample1d_backward(grad_out, factor: int = 2) -> np.ndarray:
    grad_out = as_tensor(grad_out)
    return grad_out.reshape(grad_out.shape[:-1] + (-1, factor)).sum(axis=-1)


def mse_loss(prediction, target) -> Tuple[float, np.ndarray]:
    """
    Mean squared error and its gradient with respect to the prediction.

    Args:
        prediction: Model output
        target: Desired output, same shape

    Returns:
        Tuple[float, np.ndarray]: (loss, d loss / d prediction)
    """
    prediction, target = as_tensor(prediction), as_tensor(target)
    if prediction.shape != target.shape:
        raise DimensionError(f"mse shape mismatch: {prediction.shape} vs {target.shape}")
    diff = prediction - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size
