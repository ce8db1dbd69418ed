"""
Autoencoder Module

This module describes and builds the 1D convolutional autoencoder: an encoder of
convolutional blocks followed by dense blocks and a linear latent layer, and a decoder that
expands the latent vector back to the input length.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from src.data.dataset import Dataset, TimeSeries, normalize_minmax
from src.nn.functional import ACTIVATIONS, conv1d_output_length
from src.nn.layers import (
    SEARCH_ACTIVATIONS,
    SEARCH_POOL_SIZE,
    LayerKind,
    LayerSpec,
)
from src.nn.network import Network
from src.nn.optim import OptimizerConfig
from src.utils.errors import DimensionError, ParameterError, StateError
from src.utils.logger import get_logger

logger = get_logger()

FORMAT_VERSION = 1
NORMALIZATIONS = ("minmax", "none")
ENCODE_CHUNK = 256


@dataclass(frozen=True)
class ConvBlockSpec:
    """
    One convolutional block.

    In the encoder `pool` appends MaxPool1D(2); in the decoder it prepends UpSample1D(2).
    """

    filters: int = 32
    kernel_size: int = 16
    dropout_rate: Optional[float] = None
    pool: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {"filters": self.filters, "kernel_size": self.kernel_size,
                "dropout_rate": self.dropout_rate, "pool": self.pool}


@dataclass(frozen=True)
class DenseBlockSpec:
    units: int = 64
    dropout_rate: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"units": self.units, "dropout_rate": self.dropout_rate}


@dataclass(frozen=True)
class TrainingConfig:
    """
    Attributes:
        epochs: Maximum number of epochs
        batch_size: Mini-batch size
        optimizer: Update rule and learning rate
        seed: Seed for splitting, initialization, shuffling and dropout
        split_fractions: Train / validation / test fractions
        patience: Stop after this many epochs without validation improvement (None = off)
    """

    epochs: int = 200
    batch_size: int = 32
    optimizer: OptimizerConfig = OptimizerConfig()
    seed: int = 42
    split_fractions: Tuple[float, float, float] = (0.6, 0.2, 0.2)
    patience: Optional[int] = None

    def validate(self) -> "TrainingConfig":
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        fractions = np.asarray(self.split_fractions, dtype=np.float64)
        if len(fractions) != 3 or np.any(fractions <= 0) or not np.isclose(fractions.sum(), 1.0):
            raise ParameterError(f"split fractions must be three values > 0 summing to 1, got {self.split_fractions}")
        if self.patience is not None and self.patience < 1:
            raise ParameterError(f"patience must be >= 1, got {self.patience}")
        self.optimizer.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer.algorithm,
            "lr": self.optimizer.lr,
            "betas": list(self.optimizer.betas),
            "epsilon": self.optimizer.epsilon,
            "seed": self.seed,
            "split_fractions": list(self.split_fractions),
            "patience": self.patience,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainingConfig":
        data = dict(data)
        optimizer = OptimizerConfig(
            algorithm=data.pop("optimizer", "adam"),
            lr=float(data.pop("lr", 1e-3)),
            betas=tuple(float(b) for b in data.pop("betas", (0.9, 0.999))),
            epsilon=float(data.pop("epsilon", 1e-8)),
        )
        if "split_fractions" in data:
            data["split_fractions"] = tuple(float(f) for f in data["split_fractions"])
        return cls(optimizer=optimizer, **data).validate()


def _default_encoder_blocks() -> Tuple[ConvBlockSpec, ...]:
    return tuple(ConvBlockSpec(filters, 16, None, True) for filters in (32, 64, 128))


def _default_decoder_blocks() -> Tuple[ConvBlockSpec, ...]:
    return tuple(ConvBlockSpec(filters, 16, None, True) for filters in (64, 32, 16))


@dataclass(frozen=True)
class AEConfig:
    """
    Architecture and training configuration of the autoencoder.

    Attributes:
        encoder_blocks: 1 to 3 convolutional blocks
        encoder_dnn_blocks: 0 to 2 dense blocks after the flatten
        latent_dim: Size of the linear bottleneck
        decoder_dnn_blocks: 0 to 2 dense blocks before the reshape
        decoder_blocks: 1 to 3 convolutional blocks, built independently of the encoder
        decoder_channels: Channels of the reshaped decoder seed
        activation: Hidden activation for every block
        output_activation: Activation of the final decoder convolution
        normalization: Per-series input scaling ("minmax" or "none")
        training: Training hyper-parameters
    """

    encoder_blocks: Tuple[ConvBlockSpec, ...] = field(default_factory=_default_encoder_blocks)
    encoder_dnn_blocks: Tuple[DenseBlockSpec, ...] = ()
    latent_dim: int = 3
    decoder_dnn_blocks: Tuple[DenseBlockSpec, ...] = ()
    decoder_blocks: Tuple[ConvBlockSpec, ...] = field(default_factory=_default_decoder_blocks)
    decoder_channels: int = 128
    activation: str = "relu"
    output_activation: str = "sigmoid"
    normalization: str = "minmax"
    training: TrainingConfig = TrainingConfig()

    def validate(self, input_length: Optional[int] = None, search_space: bool = False) -> "AEConfig":
        """
        Check block bounds and, when given, compatibility with the input length.

        Args:
            input_length: Series length the model will see
            search_space: Enforce the tuned value grids on every layer

        Raises:
            ParameterError: On any violation
        """
        if not 1 <= len(self.encoder_blocks) <= 3:
            raise ParameterError(f"encoder needs 1 to 3 convolutional blocks, got {len(self.encoder_blocks)}")
        if not 1 <= len(self.decoder_blocks) <= 3:
            raise ParameterError(f"decoder needs 1 to 3 convolutional blocks, got {len(self.decoder_blocks)}")
        for name, blocks in (("encoder", self.encoder_dnn_blocks), ("decoder", self.decoder_dnn_blocks)):
            if len(blocks) > 2:
                raise ParameterError(f"{name} allows at most 2 dense blocks, got {len(blocks)}")
        if self.latent_dim < 1:
            raise ParameterError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.decoder_channels < 1:
            raise ParameterError(f"decoder_channels must be >= 1, got {self.decoder_channels}")
        allowed = SEARCH_ACTIVATIONS if search_space else ACTIVATIONS
        if self.activation not in allowed:
            raise ParameterError(f"activation {self.activation} not in {allowed}")
        if self.output_activation not in ACTIVATIONS:
            raise ParameterError(f"output_activation {self.output_activation} not in {ACTIVATIONS}")
        if self.normalization not in NORMALIZATIONS:
            raise ParameterError(f"normalization must be one of {NORMALIZATIONS}")
        self.training.validate()

        if input_length is not None:
            if input_length < 1:
                raise ParameterError(f"input_length must be >= 1, got {input_length}")
            length = input_length
            for block in self.encoder_blocks:
                length = conv1d_output_length(length, block.kernel_size, 1, "same")
                if block.pool:
                    if length < SEARCH_POOL_SIZE:
                        raise ParameterError(f"input length {input_length} too short for the encoder pooling")
                    length //= SEARCH_POOL_SIZE
            self.decoder_seed_length(input_length)

        conv_blocks = self.encoder_blocks + self.decoder_blocks
        dense_blocks = self.encoder_dnn_blocks + self.decoder_dnn_blocks
        for block in conv_blocks:
            LayerSpec(LayerKind.CONV1D, {
                "filters": block.filters, "kernel_size": block.kernel_size, "in_channels": 1,
            }).validate(search_space)
        for block in dense_blocks:
            LayerSpec(LayerKind.DENSE, {"units": block.units, "in_features": 1}).validate(search_space)
        for block in conv_blocks + dense_blocks:
            if block.dropout_rate:
                LayerSpec(LayerKind.DROPOUT, {"dropout_rate": block.dropout_rate}).validate(search_space)
        return self

    def decoder_seed_length(self, input_length: int) -> int:
        """Length of the reshaped decoder seed so upsampling lands exactly on input_length."""
        factor = SEARCH_POOL_SIZE ** sum(1 for b in self.decoder_blocks if b.pool)
        if input_length % factor:
            raise ParameterError(
                f"input length {input_length} is not divisible by the decoder upsampling factor {factor}"
            )
        return input_length // factor

    def encoder_specs(self, input_length: int) -> list:
        """Layer specs of the encoder for the given input length."""
        specs, channels, length = [], 1, input_length
        for block in self.encoder_blocks:
            specs.append(LayerSpec(LayerKind.CONV1D, {
                "filters": block.filters, "kernel_size": block.kernel_size,
                "in_channels": channels, "stride": 1, "padding": "same",
            }))
            specs.append(LayerSpec(LayerKind.ACTIVATION, {"activation": self.activation}))
            if block.dropout_rate:
                specs.append(LayerSpec(LayerKind.DROPOUT, {"dropout_rate": block.dropout_rate}))
            if block.pool:
                specs.append(LayerSpec(LayerKind.MAXPOOL1D, {"pool_size": SEARCH_POOL_SIZE}))
                length //= SEARCH_POOL_SIZE
            channels = block.filters
        specs.append(LayerSpec(LayerKind.FLATTEN, {}))
        features = channels * length
        for block in self.encoder_dnn_blocks:
            specs.extend(self._dense_block(block, features))
            features = block.units
        specs.append(LayerSpec(LayerKind.DENSE, {"units": self.latent_dim, "in_features": features}))
        return specs

    def decoder_specs(self, input_length: int) -> list:
        """Layer specs of the decoder for the given output length."""
        specs, features = [], self.latent_dim
        for block in self.decoder_dnn_blocks:
            specs.extend(self._dense_block(block, features))
            features = block.units
        seed_length = self.decoder_seed_length(input_length)
        specs.append(LayerSpec(LayerKind.DENSE, {
            "units": self.decoder_channels * seed_length, "in_features": features,
        }))
        specs.append(LayerSpec(LayerKind.ACTIVATION, {"activation": self.activation}))
        specs.append(LayerSpec(LayerKind.RESHAPE, {"shape": (self.decoder_channels, seed_length)}))
        channels = self.decoder_channels
        for block in self.decoder_blocks:
            if block.pool:
                specs.append(LayerSpec(LayerKind.UPSAMPLE1D, {"factor": SEARCH_POOL_SIZE}))
            specs.append(LayerSpec(LayerKind.CONV1D, {
                "filters": block.filters, "kernel_size": block.kernel_size,
                "in_channels": channels, "stride": 1, "padding": "same",
            }))
            specs.append(LayerSpec(LayerKind.ACTIVATION, {"activation": self.activation}))
            if block.dropout_rate:
                specs.append(LayerSpec(LayerKind.DROPOUT, {"dropout_rate": block.dropout_rate}))
            channels = block.filters
        specs.append(LayerSpec(LayerKind.CONV1D, {
            "filters": 1, "kernel_size": self.decoder_blocks[-1].kernel_size,
            "in_channels": channels, "stride": 1, "padding": "same",
        }))
        specs.append(LayerSpec(LayerKind.ACTIVATION, {"activation": self.output_activation}))
        return specs

    def _dense_block(self, block: DenseBlockSpec, in_features: int) -> list:
        specs = [
            LayerSpec(LayerKind.DENSE, {"units": block.units, "in_features": in_features}),
            LayerSpec(LayerKind.ACTIVATION, {"activation": self.activation}),
        ]
        if block.dropout_rate:
            specs.append(LayerSpec(LayerKind.DROPOUT, {"dropout_rate": block.dropout_rate}))
        return specs

    def with_training(self, **changes) -> "AEConfig":
        return replace(self, training=replace(self.training, **changes))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "encoder_blocks": [b.to_dict() for b in self.encoder_blocks],
            "encoder_dnn_blocks": [b.to_dict() for b in self.encoder_dnn_blocks],
            "latent_dim": self.latent_dim,
            "decoder_dnn_blocks": [b.to_dict() for b in self.decoder_dnn_blocks],
            "decoder_blocks": [b.to_dict() for b in self.decoder_blocks],
            "decoder_channels": self.decoder_channels,
            "activation": self.activation,
            "output_activation": self.output_activation,
            "normalization": self.normalization,
            "training": self.training.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AEConfig":
        """
        Build a config from a plain dict (YAML section or model header).

        Raises:
            ParameterError: On invalid values
            TypeError: On unknown keys
        """
        data = dict(data)
        for key in ("encoder_blocks", "decoder_blocks"):
            if key in data:
                data[key] = tuple(ConvBlockSpec(**b) for b in data[key])
        for key in ("encoder_dnn_blocks", "decoder_dnn_blocks"):
            if key in data:
                data[key] = tuple(DenseBlockSpec(**b) for b in data[key])
        if "training" in data:
            data["training"] = TrainingConfig.from_dict(data["training"])
        return cls(**data).validate()


SeriesLike = Union[TimeSeries, Dataset, np.ndarray, Sequence[float]]


class AEModel:
    """
    Trained (or freshly initialized) autoencoder.

    The encoder maps a (B, 1, L) batch to (B, latent_dim); the decoder maps latents back to
    (B, 1, L). Models are treated as immutable once training returns them.

    Attributes:
        encoder: Encoder network
        decoder: Decoder network, None for encoder-only models
        input_length: Series length
        latent_dim: Bottleneck size
        normalization: Input scaling applied by prepare()
        config: Configuration the model was built from, if any
        format_version: Model file format version
    """

    def __init__(
        self,
        encoder: Network,
        decoder: Optional[Network],
        input_length: int,
        latent_dim: int,
        normalization: str = "minmax",
        config: Optional[AEConfig] = None,
        format_version: int = FORMAT_VERSION,
    ):
        if normalization not in NORMALIZATIONS:
            raise ParameterError(f"normalization must be one of {NORMALIZATIONS}")
        self.encoder = encoder
        self.decoder = decoder
        self.input_length = int(input_length)
        self.latent_dim = int(latent_dim)
        self.normalization = normalization
        self.config = config
        self.format_version = int(format_version)

    def parameters(self):
        params = self.encoder.parameters()
        if self.decoder is not None:
            params = params + self.decoder.parameters()
        return params

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def _raw_matrix(self, series: SeriesLike) -> Tuple[np.ndarray, bool]:
        if isinstance(series, TimeSeries):
            matrix, single = series.values[None, :], True
        elif isinstance(series, Dataset):
            matrix, single = series.values(), False
            if len(series) == 0:
                matrix = np.zeros((0, self.input_length))
        else:
            matrix = np.asarray(series, dtype=np.float64)
            single = matrix.ndim == 1
            matrix = matrix.reshape(1, -1) if single else matrix
        if matrix.ndim != 2 or matrix.shape[1] != self.input_length:
            raise DimensionError(
                f"expected series of length {self.input_length}, got shape {matrix.shape}"
            )
        return matrix, single

    def normalize(self, values: np.ndarray) -> np.ndarray:
        """Apply the model's input scaling along the last axis."""
        values = np.asarray(values, dtype=np.float64)
        return normalize_minmax(values) if self.normalization == "minmax" else values.copy()

    def prepare(self, series: SeriesLike) -> np.ndarray:
        """
        Validate lengths and return the normalized (B, 1, L) encoder input.

        Raises:
            DimensionError: On a length mismatch
        """
        matrix, _ = self._raw_matrix(series)
        return self.normalize(matrix)[:, None, :]

    def encode_prepared(self, x: np.ndarray) -> np.ndarray:
        """Latents of an already-normalized (B, 1, L) or (B, L) batch, in chunks."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, None, :]
        if x.shape[0] == 0:
            return np.zeros((0, self.latent_dim))
        chunks = [self.encoder.predict(x[i:i + ENCODE_CHUNK]) for i in range(0, x.shape[0], ENCODE_CHUNK)]
        return np.concatenate(chunks, axis=0)

    def encode(self, series: SeriesLike) -> np.ndarray:
        """
        Latent vector of one series, or a (n, latent_dim) matrix for a collection.

        Raises:
            DimensionError: On a length mismatch
        """
        matrix, single = self._raw_matrix(series)
        latents = self.encode_prepared(self.normalize(matrix)[:, None, :])
        return latents[0] if single else latents

    def decode(self, latent: np.ndarray) -> np.ndarray:
        """
        Decoder output in the model's normalized scale.

        Args:
            latent: (latent_dim,) or (n, latent_dim)

        Returns:
            np.ndarray: (L,) or (n, L)
        """
        if self.decoder is None:
            raise StateError("model has no decoder")
        latent = np.asarray(latent, dtype=np.float64)
        single = latent.ndim == 1
        batch = latent.reshape(1, -1) if single else latent
        if batch.shape[1] != self.latent_dim:
            raise DimensionError(f"expected latent vectors of size {self.latent_dim}, got {batch.shape}")
        out = self.decoder.predict(batch)[:, 0, :]
        return out[0] if single else out

    def reconstruct_prepared(self, x: np.ndarray) -> np.ndarray:
        """Reconstruction of a normalized (B, 1, L) batch, shape (B, L)."""
        return self.decode(self.encode_prepared(x))

    def reconstruct(self, series: SeriesLike) -> Union[TimeSeries, np.ndarray]:
        """
        Reconstruct t_hat = D(E(t)) and map it back to the input's scale.

        Returns:
            TimeSeries for a TimeSeries input, otherwise an array shaped like the input
        """
        matrix, single = self._raw_matrix(series)
        out = self.decode(self.encode_prepared(self.normalize(matrix)[:, None, :]))
        out = out.reshape(matrix.shape)
        if self.normalization == "minmax":
            low = matrix.min(axis=1, keepdims=True)
            out = out * (matrix.max(axis=1, keepdims=True) - low) + low
        if isinstance(series, TimeSeries):
            return series.with_values(out[0])
        return out[0] if single else out

    def __repr__(self) -> str:
        return (f"AEModel(input_length={self.input_length}, latent_dim={self.latent_dim}, "
                f"parameters={self.parameter_count()})")


def build_autoencoder(
    config: AEConfig, input_length: int, rng: np.random.Generator
) -> AEModel:
    """
    Build a freshly initialized autoencoder.

    Args:
        config: Architecture configuration
        input_length: Series length
        rng: Generator for He initialization

    Returns:
        AEModel: Untrained model
    """
    config.validate(input_length)
    encoder = Network.from_specs(config.encoder_specs(input_length), rng=rng)
    decoder = Network.from_specs(config.decoder_specs(input_length), rng=rng)
    model = AEModel(encoder, decoder, input_length, config.latent_dim, config.normalization, config)
    logger.debug(f"Built {model} ({len(encoder)} encoder / {len(decoder)} decoder layers)")
    return model


def encode(model: AEModel, series: SeriesLike) -> np.ndarray:
    return model.encode(series)


def decode(model: AEModel, latent: np.ndarray) -> np.ndarray:
    return model.decode(latent)


def reconstruct(model: AEModel, series: SeriesLike):
    return model.reconstruct(series)
