"""
Network Module

Sequential layer stacks with recorded forward traces and manual backpropagation.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.nn.functional import as_tensor
from src.nn.layers import Layer, LayerSpec, TraceEntry, build_layer
from src.utils.errors import DimensionError, StateError


@dataclass
class ForwardTrace:
    """
    Per-layer inputs and outputs of one forward pass.

    Attributes:
        entries: One TraceEntry per evaluated layer, in order
        start: Index of the first evaluated layer
    """

    entries: List[TraceEntry] = field(default_factory=list)
    start: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def output(self) -> np.ndarray:
        if not self.entries:
            raise StateError("empty forward trace")
        return self.entries[-1].outputs

    def entry(self, layer_index: int) -> TraceEntry:
        """Entry recorded for the given network layer index."""
        position = layer_index - self.start
        if not 0 <= position < len(self.entries):
            raise StateError(f"layer {layer_index} was not evaluated in this trace")
        return self.entries[position]

    def replay(self, network: "Network") -> bool:
        """
        Re-apply each recorded layer to its recorded input.

        Returns:
            bool: True when every recorded output is reproduced exactly
        """
        for entry in self.entries:
            layer = network.layers[entry.layer_index]
            if not np.array_equal(layer.replay(entry.inputs, entry.cache), entry.outputs):
                return False
        return True


class Network:
    """
    Ordered stack of layers operating on batched inputs.

    Attributes:
        layers: The layers, first to last
    """

    def __init__(self, layers: Sequence[Layer]):
        self.layers: List[Layer] = list(layers)

    @classmethod
    def from_specs(
        cls,
        specs: Sequence[LayerSpec],
        rng: Optional[np.random.Generator] = None,
        params: Optional[List[np.ndarray]] = None,
    ) -> "Network":
        """
        Build a network from layer specs.

        Args:
            specs: Layer descriptions
            rng: Generator for He initialization
            params: Flat parameter list (as returned by parameters()) to load instead

        Returns:
            Network: The network
        """
        layers, cursor = [], 0
        for spec in specs:
            if params is None:
                layers.append(build_layer(spec, rng=rng))
                continue
            count = 2 if spec.kind.value in ("Conv1D", "Dense") else 0
            layers.append(build_layer(spec, params=params[cursor:cursor + count] if count else None))
            cursor += count
        if params is not None and cursor != len(params):
            raise DimensionError(f"expected {cursor} parameter arrays, got {len(params)}")
        return cls(layers)

    @property
    def specs(self) -> List[LayerSpec]:
        return [layer.spec for layer in self.layers]

    def parameters(self) -> List[np.ndarray]:
        params: List[np.ndarray] = []
        for layer in self.layers:
            params.extend(layer.parameters())
        return params

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def set_parameters(self, params: Sequence[np.ndarray]) -> None:
        """Replace every parameter array (used only inside a training context)."""
        cursor = 0
        for layer in self.layers:
            count = len(layer.parameters())
            layer.set_parameters(list(params[cursor:cursor + count]))
            cursor += count
        if cursor != len(params):
            raise DimensionError(f"expected {cursor} parameter arrays, got {len(params)}")

    def forward(
        self,
        x: np.ndarray,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        start: int = 0,
    ) -> ForwardTrace:
        """
        Run the layers from `start` to the end and record a trace.

        Args:
            x: Batched input to layer `start`
            training: Enables dropout
            rng: Generator for dropout masks
            start: First layer to evaluate

        Returns:
            ForwardTrace: Recorded pass
        """
        trace = ForwardTrace(start=start)
        out = as_tensor(x)
        for index in range(start, len(self.layers)):
            layer = self.layers[index]
            result, cache = layer.forward(out, training=training, rng=rng)
            trace.entries.append(TraceEntry(index, out, result, cache, training))
            out = result
        return trace

    def predict(self, x: np.ndarray, start: int = 0) -> np.ndarray:
        """Inference-mode output without keeping a trace."""
        out = as_tensor(x)
        for layer in self.layers[start:]:
            out = layer.forward(out)[0]
        return out

    def backward(
        self, trace: Optional[ForwardTrace], grad: np.ndarray, stop: Optional[int] = None
    ) -> Tuple[np.ndarray, List[np.ndarray]]:
        """
        Backpropagate from the trace output down to the input of layer `stop`.

        Args:
            trace: Trace from forward
            grad: Gradient with respect to the trace output
            stop: Layer whose input gradient is returned (default: first traced layer)

        Returns:
            Tuple: (gradient at the input of layer `stop`, parameter gradients aligned with
            parameters(); layers below `stop` get zero gradients)
        """
        if trace is None or not trace.entries:
            raise StateError("backward needs a recorded forward trace")
        stop = trace.start if stop is None else stop
        if grad.shape != trace.output.shape:
            raise DimensionError(f"gradient shape {grad.shape} != output shape {trace.output.shape}")

        grads_by_layer = {}
        for entry in reversed(trace.entries):
            if entry.layer_index < stop:
                break
            grad, param_grads = self.layers[entry.layer_index].backward(entry, grad)
            grads_by_layer[entry.layer_index] = param_grads

        param_grads: List[np.ndarray] = []
        for index, layer in enumerate(self.layers):
            params = layer.parameters()
            param_grads.extend(grads_by_layer.get(index) or [np.zeros_like(p) for p in params])
        return grad, param_grads

    def last_index(self, kind: str) -> int:
        """Index of the last layer of the given kind value, e.g. "Conv1D"."""
        for index in range(len(self.layers) - 1, -1, -1):
            if self.layers[index].kind.value == kind:
                return index
        raise StateError(f"network has no {kind} layer")

    def __len__(self) -> int:
        return len(self.layers)
