"""
Layers Module

Stateless-forward layer objects wrapping the functional kit. A layer owns its parameters
and its LayerSpec; forward returns the output plus the cache backward needs, and both
run on batched inputs (B, C, L) or (B, N).
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.nn import functional as F
from src.utils.errors import DimensionError, ParameterError, StateError

# Tuned search-space grids
SEARCH_FILTERS = (16, 32, 64, 128)
SEARCH_KERNEL_SIZES = (8, 16, 32)
SEARCH_DROPOUT_RATES = (0.1, 0.2, 0.3, 0.4, 0.5)
SEARCH_UNITS = (32, 64, 128, 256)
SEARCH_ACTIVATIONS = ("relu", "tanh", "sigmoid", "softmax")
SEARCH_POOL_SIZE = 2


class LayerKind(str, Enum):
    CONV1D = "Conv1D"
    MAXPOOL1D = "MaxPool1D"
    DENSE = "Dense"
    ACTIVATION = "Activation"
    DROPOUT = "Dropout"
    FLATTEN = "Flatten"
    UPSAMPLE1D = "UpSample1D"
    RESHAPE = "Reshape"


@dataclass(frozen=True)
class LayerSpec:
    """
    Architecture description of one layer.

    Attributes:
        kind: Layer kind
        params: Kind-specific parameters (filters, kernel_size, stride, padding, in_channels,
            pool_size, units, in_features, activation, dropout_rate, shape)
    """

    kind: LayerKind
    params: Dict[str, Any] = field(default_factory=dict)

    def validate(self, search_space: bool = False) -> "LayerSpec":
        """
        Check the parameters for this kind.

        Args:
            search_space: Also enforce the tuned value grids, not just positivity

        Returns:
            LayerSpec: self

        Raises:
            ParameterError: On an invalid parameter
        """
        p = self.params
        if self.kind == LayerKind.CONV1D:
            for key in ("filters", "kernel_size", "in_channels"):
                if int(p.get(key, 0)) < 1:
                    raise ParameterError(f"Conv1D {key} must be a positive int, got {p.get(key)}")
            if int(p.get("stride", 1)) < 1:
                raise ParameterError(f"Conv1D stride must be >= 1, got {p.get('stride')}")
            if p.get("padding", "same") not in F.PADDING_MODES:
                raise ParameterError(f"Conv1D padding must be one of {F.PADDING_MODES}")
            if search_space:
                if p["filters"] not in SEARCH_FILTERS:
                    raise ParameterError(f"filters {p['filters']} not in {SEARCH_FILTERS}")
                if p["kernel_size"] not in SEARCH_KERNEL_SIZES:
                    raise ParameterError(f"kernel_size {p['kernel_size']} not in {SEARCH_KERNEL_SIZES}")
        elif self.kind == LayerKind.MAXPOOL1D:
            size = int(p.get("pool_size", SEARCH_POOL_SIZE))
            if size < 1 or (search_space and size != SEARCH_POOL_SIZE):
                raise ParameterError(f"invalid pool_size {size}")
        elif self.kind == LayerKind.DENSE:
            for key in ("units", "in_features"):
                if int(p.get(key, 0)) < 1:
                    raise ParameterError(f"Dense {key} must be a positive int, got {p.get(key)}")
            if search_space and p["units"] not in SEARCH_UNITS:
                raise ParameterError(f"units {p['units']} not in {SEARCH_UNITS}")
        elif self.kind == LayerKind.ACTIVATION:
            allowed = SEARCH_ACTIVATIONS if search_space else F.ACTIVATIONS
            if p.get("activation") not in allowed:
                raise ParameterError(f"activation {p.get('activation')} not in {allowed}")
        elif self.kind == LayerKind.DROPOUT:
            rate = float(p.get("dropout_rate", -1.0))
            if not 0.0 <= rate < 1.0:
                raise ParameterError(f"dropout_rate must be in [0, 1), got {rate}")
            if search_space and rate not in SEARCH_DROPOUT_RATES:
                raise ParameterError(f"dropout_rate {rate} not in {SEARCH_DROPOUT_RATES}")
        elif self.kind == LayerKind.UPSAMPLE1D:
            if int(p.get("factor", 2)) < 1:
                raise ParameterError("UpSample1D factor must be >= 1")
        elif self.kind == LayerKind.RESHAPE:
            shape = p.get("shape")
            if not shape or any(int(s) < 1 for s in shape):
                raise ParameterError(f"Reshape needs a positive target shape, got {shape}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LayerSpec":
        params = dict(data.get("params", {}))
        if "shape" in params:
            params["shape"] = tuple(params["shape"])
        return cls(LayerKind(data["kind"]), params)


@dataclass
class TraceEntry:
    """Input, output and backward cache of one layer during one forward pass."""

    layer_index: int
    inputs: np.ndarray
    outputs: np.ndarray
    cache: Dict[str, Any] = field(default_factory=dict)
    training: bool = False


class Layer:
    """Base class; parameterless layers only override forward/backward."""

    kind: LayerKind

    def __init__(self, spec: LayerSpec):
        self.spec = spec.validate()

    def parameters(self) -> List[np.ndarray]:
        return []

    def set_parameters(self, params: List[np.ndarray]) -> None:
        if params:
            raise DimensionError(f"{self.kind.value} has no parameters")

    def forward(
        self, x: np.ndarray, training: bool = False, rng: Optional[np.random.Generator] = None
    ) -> Tuple[np.ndarray, Dict[str, Any]]:
        raise NotImplementedError

    def backward(self, entry: Optional[TraceEntry], grad: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        raise NotImplementedError

    def replay(self, x: np.ndarray, cache: Dict[str, Any]) -> np.ndarray:
        """Recompute the output from a recorded input and cache."""
        return self.forward(x)[0]

    @staticmethod
    def _require(entry: Optional[TraceEntry]) -> TraceEntry:
        if entry is None:
            raise StateError("backward called without a forward trace")
        return entry

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.spec.params})"


class Conv1D(Layer):
    kind = LayerKind.CONV1D

    def __init__(self, weights: np.ndarray, bias: np.ndarray, stride: int = 1, padding: str = "same"):
        weights, bias = F.as_tensor(weights), F.as_tensor(bias)
        if weights.ndim != 3:
            raise DimensionError(f"Conv1D weights must be (C_out, C_in, K), got {weights.shape}")
        super().__init__(LayerSpec(self.kind, {
            "filters": int(weights.shape[0]),
            "in_channels": int(weights.shape[1]),
            "kernel_size": int(weights.shape[2]),
            "stride": int(stride),
            "padding": padding,
        }))
        self.weights, self.bias = weights, bias
        self.stride, self.padding = int(stride), padding

    def parameters(self) -> List[np.ndarray]:
        return [self.weights, self.bias]

    def set_parameters(self, params: List[np.ndarray]) -> None:
        weights, bias = params
        if weights.shape != self.weights.shape or bias.shape != self.bias.shape:
            raise DimensionError("Conv1D parameter shapes changed")
        self.weights, self.bias = weights, bias

    def forward(self, x, training=False, rng=None):
        return F.conv1d_forward(x, self.weights, self.bias, self.stride, self.padding), {}

    def backward(self, entry, grad):
        entry = self._require(entry)
        dx, dw, db = F.conv1d_backward(entry.inputs, self.weights, grad, self.stride, self.padding)
        return dx, [dw, db]


class MaxPool1D(Layer):
    kind = LayerKind.MAXPOOL1D

    def __init__(self, pool_size: int = SEARCH_POOL_SIZE):
        super().__init__(LayerSpec(self.kind, {"pool_size": int(pool_size)}))
        self.pool_size = int(pool_size)

    def forward(self, x, training=False, rng=None):
        out, indices = F.maxpool1d_forward(x, self.pool_size)
        return out, {"indices": indices}

    def backward(self, entry, grad):
        entry = self._require(entry)
        return F.maxpool1d_backward(entry.cache["indices"], grad, entry.inputs.shape), []


class Dense(Layer):
    kind = LayerKind.DENSE

    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        weights, bias = F.as_tensor(weights), F.as_tensor(bias)
        if weights.ndim != 2:
            raise DimensionError(f"Dense weights must be (N_out, N_in), got {weights.shape}")
        super().__init__(LayerSpec(self.kind, {
            "units": int(weights.shape[0]),
            "in_features": int(weights.shape[1]),
        }))
        self.weights, self.bias = weights, bias

    def parameters(self) -> List[np.ndarray]:
        return [self.weights, self.bias]

    def set_parameters(self, params: List[np.ndarray]) -> None:
        weights, bias = params
        if weights.shape != self.weights.shape or bias.shape != self.bias.shape:
            raise DimensionError("Dense parameter shapes changed")
        self.weights, self.bias = weights, bias

    def forward(self, x, training=False, rng=None):
        return F.dense_forward(x, self.weights, self.bias), {}

    def backward(self, entry, grad):
        entry = self._require(entry)
        dx, dw, db = F.dense_backward(entry.inputs, self.weights, grad)
        return dx, [dw, db]


class Activation(Layer):
    kind = LayerKind.ACTIVATION

    def __init__(self, activation: str):
        super().__init__(LayerSpec(self.kind, {"activation": activation}))
        self.activation = activation

    def forward(self, x, training=False, rng=None):
        # Batched layouts put channels (or features) on axis 1.
        return F.activation_forward(x, self.activation, axis=1), {}

    def backward(self, entry, grad):
        entry = self._require(entry)
        return F.activation_backward(entry.inputs, entry.outputs, grad, self.activation, axis=1), []


class Dropout(Layer):
    kind = LayerKind.DROPOUT

    def __init__(self, rate: float):
        super().__init__(LayerSpec(self.kind, {"dropout_rate": float(rate)}))
        self.rate = float(rate)

    def forward(self, x, training=False, rng=None):
        out, mask = F.dropout_forward(x, self.rate, rng, training)
        return out, {"mask": mask}

    def backward(self, entry, grad):
        entry = self._require(entry)
        return F.dropout_backward(entry.cache.get("mask"), grad), []

    def replay(self, x, cache):
        mask = cache.get("mask")
        return F.as_tensor(x) if mask is None else x * mask


class Flatten(Layer):
    kind = LayerKind.FLATTEN

    def __init__(self):
        super().__init__(LayerSpec(self.kind, {}))

    def forward(self, x, training=False, rng=None):
        return F.flatten(x, start_axis=1), {}

    def backward(self, entry, grad):
        entry = self._require(entry)
        return grad.reshape(entry.inputs.shape), []


class UpSample1D(Layer):
    kind = LayerKind.UPSAMPLE1D

    def __init__(self, factor: int = 2):
        super().__init__(LayerSpec(self.kind, {"factor": int(factor)}))
        self.factor = int(factor)

    def forward(self, x, training=False, rng=None):
        return F.upsample1d_forward(x, self.factor), {}

    def backward(self, entry, grad):
        self._require(entry)
        return F.upsample1d_backward(grad, self.factor), []


class Reshape(Layer):
    kind = LayerKind.RESHAPE

    def __init__(self, shape: Tuple[int, ...]):
        super().__init__(LayerSpec(self.kind, {"shape": tuple(int(s) for s in shape)}))
        self.shape = tuple(int(s) for s in shape)

    def forward(self, x, training=False, rng=None):
        x = F.as_tensor(x)
        if int(np.prod(x.shape[1:])) != int(np.prod(self.shape)):
            raise DimensionError(f"cannot reshape {x.shape[1:]} to {self.shape}")
        return x.reshape((x.shape[0],) + self.shape), {}

    def backward(self, entry, grad):
        entry = self._require(entry)
        return grad.reshape(entry.inputs.shape), []


def he_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform He initialization: U(-sqrt(6 / fan_in), sqrt(6 / fan_in))."""
    limit = np.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-limit, limit, size=shape)


def build_layer(
    spec: LayerSpec,
    rng: Optional[np.random.Generator] = None,
    params: Optional[List[np.ndarray]] = None,
) -> Layer:
    """
    Instantiate a layer from its spec, either with given parameters or seeded He init.

    Args:
        spec: Layer description
        rng: Generator for initialization when params is None
        params: Explicit parameter arrays (weights, bias)

    Returns:
        Layer: The layer
    """
    p = spec.validate().params
    if spec.kind in (LayerKind.CONV1D, LayerKind.DENSE):
        if params is None:
            if rng is None:
                raise ParameterError(f"{spec.kind.value} needs either parameters or a generator")
            if spec.kind == LayerKind.CONV1D:
                shape = (p["filters"], p["in_channels"], p["kernel_size"])
                params = [he_uniform(rng, shape, p["in_channels"] * p["kernel_size"]), np.zeros(p["filters"])]
            else:
                shape = (p["units"], p["in_features"])
                params = [he_uniform(rng, shape, p["in_features"]), np.zeros(p["units"])]
        if spec.kind == LayerKind.CONV1D:
            return Conv1D(params[0], params[1], p.get("stride", 1), p.get("padding", "same"))
        return Dense(params[0], params[1])
    if spec.kind == LayerKind.MAXPOOL1D:
        return MaxPool1D(p.get("pool_size", SEARCH_POOL_SIZE))
    if spec.kind == LayerKind.ACTIVATION:
        return Activation(p["activation"])
    if spec.kind == LayerKind.DROPOUT:
        return Dropout(p["dropout_rate"])
    if spec.kind == LayerKind.FLATTEN:
        return Flatten()
    if spec.kind == LayerKind.UPSAMPLE1D:
        return UpSample1D(p.get("factor", 2))
    if spec.kind == LayerKind.RESHAPE:
        return Reshape(p["shape"])
    raise ParameterError(f"Unknown layer kind: {spec.kind}")
