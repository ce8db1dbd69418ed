"""
Training Module

Mini-batch training of the autoencoder on a stratified train/validation/test split. NOK
instances stay in the training mix; the report records how they were distributed.
"""

import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.data.dataset import Dataset, split_sizes, stratified_split
from src.models.autoencoder import AEConfig, AEModel, build_autoencoder
from src.nn.functional import mse_loss
from src.nn.optim import build_optimizer, optimizer_step
from src.utils.errors import DataError, TrainingDivergedError
from src.utils.helper_functions import derive_rng
from src.utils.logger import get_logger

logger = get_logger()

SPLIT_NAMES = ("train", "validation", "test")


@dataclass
class TrainReport:
    """
    Outcome of one training run.

    Attributes:
        train_loss: Mean training MSE per epoch
        val_loss: Validation MSE per epoch
        test_mse: Final reconstruction MSE on the test split
        split_sizes: Members per split
        nok_fractions: NOK fraction per split
        split_ids: Member ids per split
        normalization: Input scaling used
        epochs_run: Number of epochs actually run
        best_epoch: Epoch whose parameters were kept (1-based)
        seed: Training seed
        wall_time: Seconds spent (not part of equality)
    """

    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    test_mse: float = 0.0
    split_sizes: Dict[str, int] = field(default_factory=dict)
    nok_fractions: Dict[str, float] = field(default_factory=dict)
    split_ids: Dict[str, List[str]] = field(default_factory=dict)
    normalization: str = "minmax"
    epochs_run: int = 0
    best_epoch: int = 0
    seed: int = 0
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "train_loss": list(self.train_loss),
            "val_loss": list(self.val_loss),
            "test_mse": self.test_mse,
            "split_sizes": dict(self.split_sizes),
            "nok_fractions": dict(self.nok_fractions),
            "split_ids": {k: list(v) for k, v in self.split_ids.items()},
            "normalization": self.normalization,
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainReport":
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


def reconstruction_mse(model: AEModel, x: np.ndarray, batch_size: int = 256) -> float:
    """
    Mean squared reconstruction error of a normalized (B, 1, L) batch in inference mode.

    Returns:
        float: MSE, 0.0 for an empty batch
    """
    if x.shape[0] == 0:
        return 0.0
    total = 0.0
    for i in range(0, x.shape[0], batch_size):
        chunk = x[i:i + batch_size]
        out = model.reconstruct_prepared(chunk)
        total += float(np.sum((out - chunk[:, 0, :]) ** 2))
    return total / x[:, 0, :].size


def _train_step(
    model: AEModel, xb: np.ndarray, optimizer, dropout_rng: np.random.Generator
) -> float:
    enc_trace = model.encoder.forward(xb, training=True, rng=dropout_rng)
    dec_trace = model.decoder.forward(enc_trace.output, training=True, rng=dropout_rng)
    loss, grad = mse_loss(dec_trace.output, xb)
    if not np.isfinite(loss):
        return loss
    grad_latent, dec_grads = model.decoder.backward(dec_trace, grad)
    _, enc_grads = model.encoder.backward(enc_trace, grad_latent)

    params = model.encoder.parameters() + model.decoder.parameters()
    updated = optimizer_step(params, enc_grads + dec_grads, optimizer)
    n_enc = len(enc_grads)
    model.encoder.set_parameters(updated[:n_enc])
    model.decoder.set_parameters(updated[n_enc:])
    return loss


def train(dataset: Dataset, config: Optional[AEConfig] = None) -> Tuple[AEModel, TrainReport]:
    """
    Train an autoencoder on the full labeled mix.

    Args:
        dataset: Labeled (or unlabeled) series, all the same length
        config: Architecture and training configuration

    Returns:
        Tuple[AEModel, TrainReport]: Trained model and its report

    Raises:
        DataError: Empty dataset or inconsistent lengths
        TrainingDivergedError: Non-finite loss, naming the epoch
    """
    config = config or AEConfig()
    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    input_length = dataset.length
    config.validate(input_length)
    settings = config.training
    started = time.perf_counter()

    labels = dataset.labels
    parts = stratified_split(labels, settings.split_fractions, derive_rng(settings.seed, "split"))
    sizes, fractions = split_sizes(parts, labels)
    report = TrainReport(
        split_sizes=dict(zip(SPLIT_NAMES, sizes)),
        nok_fractions=dict(zip(SPLIT_NAMES, fractions)),
        split_ids={name: [dataset.ids[i] for i in part] for name, part in zip(SPLIT_NAMES, parts)},
        normalization=config.normalization,
        seed=settings.seed,
    )
    logger.info(
        f"Training on {sizes[0]} / validating on {sizes[1]} / testing on {sizes[2]} series "
        f"(NOK fractions {', '.join(f'{f:.4f}' for f in fractions)})"
    )

    model = build_autoencoder(config, input_length, derive_rng(settings.seed, "init"))
    x_all = model.prepare(dataset)
    x_train, x_val, x_test = (x_all[part] for part in parts)
    optimizer = build_optimizer(settings.optimizer)
    shuffle_rng = derive_rng(settings.seed, "shuffle")
    dropout_rng = derive_rng(settings.seed, "dropout")

    best_val, best_params, stale = np.inf, None, 0
    log_every = max(1, settings.epochs // 10)
    for epoch in range(1, settings.epochs + 1):
        order = shuffle_rng.permutation(x_train.shape[0])
        weighted = 0.0
        for start in range(0, len(order), settings.batch_size):
            xb = x_train[order[start:start + settings.batch_size]]
            loss = _train_step(model, xb, optimizer, dropout_rng)
            if not np.isfinite(loss):
                logger.error(f"Non-finite loss at epoch {epoch}")
                raise TrainingDivergedError(epoch, loss)
            weighted += loss * xb.shape[0]
        train_loss = weighted / max(x_train.shape[0], 1)
        val_loss = reconstruction_mse(model, x_val) if x_val.shape[0] else train_loss
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(epoch, val_loss)
        report.train_loss.append(train_loss)
        report.val_loss.append(val_loss)
        report.epochs_run = epoch

        message = f"Epoch {epoch}/{settings.epochs}: train MSE {train_loss:.6g}, validation MSE {val_loss:.6g}"
        if epoch % log_every == 0 or epoch == settings.epochs:
            logger.info(message)
        else:
            logger.debug(message)

        if val_loss < best_val:
            best_val, stale, report.best_epoch = val_loss, 0, epoch
            best_params = [p.copy() for p in model.parameters()]
        else:
            stale += 1
            if settings.patience is not None and stale >= settings.patience:
                logger.info(f"Early stopping at epoch {epoch}; keeping epoch {report.best_epoch}")
                break

    if settings.patience is not None and best_params is not None:
        n_enc = len(model.encoder.parameters())
        model.encoder.set_parameters(best_params[:n_enc])
        model.decoder.set_parameters(best_params[n_enc:])
    else:
        report.best_epoch = report.epochs_run

    report.test_mse = reconstruction_mse(model, x_test)
    report.wall_time = time.perf_counter() - started
    logger.info(f"Training finished after {report.epochs_run} epochs: test MSE {report.test_mse:.6g}")
    return model, report
