"""
Architecture Search Module

Desk-scale random search over the tuned architecture space: block counts, filters, kernel
sizes, dropout, dense units and the shared activation. Trials are ranked by validation MSE.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.data.dataset import Dataset
from src.models.autoencoder import AEConfig, ConvBlockSpec, DenseBlockSpec
from src.models.training import train
from src.nn.layers import (
    SEARCH_ACTIVATIONS,
    SEARCH_DROPOUT_RATES,
    SEARCH_FILTERS,
    SEARCH_KERNEL_SIZES,
    SEARCH_POOL_SIZE,
    SEARCH_UNITS,
)
from src.utils.errors import ParameterError, TrainingDivergedError
from src.utils.helper_functions import derive_seed
from src.utils.logger import get_logger

logger = get_logger()


@dataclass(frozen=True)
class SearchSpace:
    """Value grids and block-count bounds sampled uniformly by random_search."""

    filters: Tuple[int, ...] = SEARCH_FILTERS
    kernel_sizes: Tuple[int, ...] = SEARCH_KERNEL_SIZES
    dropout_rates: Tuple[float, ...] = SEARCH_DROPOUT_RATES
    units: Tuple[int, ...] = SEARCH_UNITS
    activations: Tuple[str, ...] = SEARCH_ACTIVATIONS
    conv_blocks: Tuple[int, int] = (1, 3)
    dense_blocks: Tuple[int, int] = (0, 2)
    dropout_probability: float = 0.5

    def validate(self) -> "SearchSpace":
        for name in ("filters", "kernel_sizes", "dropout_rates", "units", "activations"):
            if not getattr(self, name):
                raise ParameterError(f"search space has no {name} to sample")
        if set(self.filters) - set(SEARCH_FILTERS) or set(self.kernel_sizes) - set(SEARCH_KERNEL_SIZES):
            raise ParameterError("search space filters/kernel sizes exceed the tuned grid")
        if set(self.units) - set(SEARCH_UNITS) or set(self.activations) - set(SEARCH_ACTIVATIONS):
            raise ParameterError("search space units/activations exceed the tuned grid")
        if set(self.dropout_rates) - set(SEARCH_DROPOUT_RATES):
            raise ParameterError("search space dropout rates exceed the tuned grid")
        low, high = self.conv_blocks
        if not 1 <= low <= high <= 3:
            raise ParameterError(f"conv block bounds must satisfy 1 <= low <= high <= 3, got {self.conv_blocks}")
        low, high = self.dense_blocks
        if not 0 <= low <= high <= 2:
            raise ParameterError(f"dense block bounds must satisfy 0 <= low <= high <= 2, got {self.dense_blocks}")
        if not 0.0 <= self.dropout_probability <= 1.0:
            raise ParameterError("dropout_probability must be in [0, 1]")
        return self


@dataclass
class SearchTrial:
    trial: int
    config: AEConfig
    val_mse: float
    diverged: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trial": self.trial,
            "val_mse": self.val_mse if np.isfinite(self.val_mse) else None,
            "diverged": self.diverged,
            "config": self.config.to_dict(),
        }


@dataclass
class SearchResult:
    best_config: AEConfig
    leaderboard: List[SearchTrial] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "best_config": self.best_config.to_dict(),
            "leaderboard": [t.to_dict() for t in self.leaderboard],
        }


def _dropout(space: SearchSpace, rng: np.random.Generator) -> Optional[float]:
    if rng.random() < space.dropout_probability:
        return float(space.dropout_rates[int(rng.integers(len(space.dropout_rates)))])
    return None


def _choice(values, rng: np.random.Generator):
    return values[int(rng.integers(len(values)))]


def sample_config(
    space: SearchSpace, rng: np.random.Generator, input_length: int, base: Optional[AEConfig] = None
) -> AEConfig:
    """
    Draw one architecture uniformly from the space.

    Pooling (and the mirrored upsampling) is switched off when input_length is not
    divisible by the resulting factor.

    Args:
        space: Search space
        rng: Generator
        input_length: Series length
        base: Config supplying latent_dim, output activation, normalization and training

    Returns:
        AEConfig: Valid sampled configuration
    """
    base = base or AEConfig()
    n_enc = int(rng.integers(space.conv_blocks[0], space.conv_blocks[1] + 1))
    n_dec = int(rng.integers(space.conv_blocks[0], space.conv_blocks[1] + 1))
    n_enc_dense = int(rng.integers(space.dense_blocks[0], space.dense_blocks[1] + 1))
    n_dec_dense = int(rng.integers(space.dense_blocks[0], space.dense_blocks[1] + 1))

    def conv_blocks(count: int) -> Tuple[ConvBlockSpec, ...]:
        pool = input_length % (SEARCH_POOL_SIZE ** count) == 0
        return tuple(
            ConvBlockSpec(int(_choice(space.filters, rng)), int(_choice(space.kernel_sizes, rng)),
                          _dropout(space, rng), pool)
            for _ in range(count)
        )

    def dense_blocks(count: int) -> Tuple[DenseBlockSpec, ...]:
        return tuple(DenseBlockSpec(int(_choice(space.units, rng)), _dropout(space, rng)) for _ in range(count))

    config = replace(
        base,
        encoder_blocks=conv_blocks(n_enc),
        encoder_dnn_blocks=dense_blocks(n_enc_dense),
        decoder_dnn_blocks=dense_blocks(n_dec_dense),
        decoder_blocks=conv_blocks(n_dec),
        decoder_channels=int(_choice(space.filters, rng)),
        activation=str(_choice(space.activations, rng)),
    )
    return config.validate(input_length, search_space=True)


def random_search(
    dataset: Dataset,
    space: Optional[SearchSpace] = None,
    trials: int = 10,
    epochs: int = 50,
    seed: int = 42,
    base: Optional[AEConfig] = None,
) -> SearchResult:
    """
    Train `trials` sampled architectures and rank them by final validation MSE.

    Args:
        dataset: Training corpus
        space: Search space (tuned grid by default)
        trials: Number of sampled architectures, >= 1
        epochs: Epochs per trial
        seed: Search seed
        base: Config supplying the non-searched settings

    Returns:
        SearchResult: Best config and the leaderboard, ascending by validation MSE
    """
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    space = (space or SearchSpace()).validate()
    base = base or AEConfig()
    input_length = dataset.length

    leaderboard: List[SearchTrial] = []
    for trial in range(trials):
        rng = np.random.default_rng(derive_seed(seed, "search", trial))
        config = sample_config(space, rng, input_length, base)
        config = config.with_training(epochs=epochs, seed=derive_seed(seed, "search-train", trial) & 0x7FFFFFFF)
        try:
            _, report = train(dataset, config)
            val_mse, diverged = float(report.val_loss[report.best_epoch - 1]), False
        except TrainingDivergedError as e:
            logger.warning(f"Search trial {trial} diverged at epoch {e.epoch}")
            val_mse, diverged = float("inf"), True
        logger.info(f"Search trial {trial + 1}/{trials}: validation MSE {val_mse:.6g}")
        leaderboard.append(SearchTrial(trial, config, val_mse, diverged))

    leaderboard.sort(key=lambda t: (t.val_mse, t.trial))
    if all(t.diverged for t in leaderboard):
        logger.warning("Every search trial diverged; returning the first sampled config")
    return SearchResult(leaderboard[0].config, leaderboard)
