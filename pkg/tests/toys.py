"""
Small hand-built encoders and configurations shared by the test modules.
"""

import numpy as np

from src.models.autoencoder import AEConfig, AEModel, ConvBlockSpec
from src.nn.layers import Activation, Conv1D, Dense, Flatten, MaxPool1D, he_uniform
from src.nn.network import Network


def linear_encoder(weights: np.ndarray) -> AEModel:
    """Encoder z = W x with no bias and no input scaling; weights are (latent_dim, L)."""
    weights = np.asarray(weights, dtype=np.float64)
    latent_dim, length = weights.shape
    network = Network([Flatten(), Dense(weights, np.zeros(latent_dim))])
    return AEModel(network, None, length, latent_dim, normalization="none")


def tanh_encoder(rng: np.random.Generator, length: int = 16, latent_dim: int = 2) -> AEModel:
    """Flatten -> Dense -> tanh -> Dense, a smooth non-linear toy."""
    hidden = 6
    network = Network([
        Flatten(),
        Dense(rng.normal(0.0, 0.5, size=(hidden, length)), rng.normal(0.0, 0.1, size=hidden)),
        Activation("tanh"),
        Dense(rng.normal(0.0, 0.5, size=(latent_dim, hidden)), np.zeros(latent_dim)),
    ])
    return AEModel(network, None, length, latent_dim, normalization="none")


def conv_encoder(rng: np.random.Generator, length: int = 32, latent_dim: int = 3,
                 channels: int = 4, kernel_size: int = 5, normalization: str = "minmax") -> AEModel:
    """Conv1D -> ReLU -> MaxPool1D -> Flatten -> Dense with zero biases and He weights."""
    pooled = length // 2
    network = Network([
        Conv1D(he_uniform(rng, (channels, 1, kernel_size), kernel_size), np.zeros(channels)),
        Activation("relu"),
        MaxPool1D(2),
        Flatten(),
        Dense(he_uniform(rng, (latent_dim, channels * pooled), channels * pooled), np.zeros(latent_dim)),
    ])
    return AEModel(network, None, length, latent_dim, normalization=normalization)


def tiny_ae_config(epochs: int = 2, latent_dim: int = 2, seed: int = 11) -> AEConfig:
    """Autoencoder small enough to train on 64-sample series in a fraction of a second."""
    config = AEConfig(
        encoder_blocks=(ConvBlockSpec(4, 8, None, True), ConvBlockSpec(8, 8, None, True)),
        latent_dim=latent_dim,
        decoder_blocks=(ConvBlockSpec(4, 8, None, True),),
        decoder_channels=4,
    )
    return config.with_training(epochs=epochs, batch_size=8, seed=seed)


def tiny_pipeline_dict(output_dir: str, log_directory: str, seed: int = 5) -> dict:
    """Raw configuration tree for an end-to-end run on a 40-series corpus."""
    return {
        "master_seed": seed,
        "format_version": 1,
        "log_level": "WARNING",
        "paths": {"output_dir": output_dir, "dataset": None, "model": None, "log_directory": log_directory},
        "generator": {"length": 64, "size": 40, "nok_rate": 0.1},
        "autoencoder": {
            "latent_dim": 2,
            "encoder_blocks": [{"filters": 4, "kernel_size": 8, "dropout_rate": None, "pool": True},
                               {"filters": 8, "kernel_size": 8, "dropout_rate": None, "pool": True}],
            "decoder_blocks": [{"filters": 4, "kernel_size": 8, "dropout_rate": None, "pool": True}],
            "decoder_channels": 4,
            "training": {"epochs": 2, "batch_size": 8, "optimizer": "adam", "lr": 0.001},
        },
        "dbscan": {"eps": None, "min_pts": 3, "standardize": False, "split": "test"},
        "explainer": {
            "methods": ["gradcam", "lime", "shap", "lrp"],
            "target": "combined",
            "ids": [],
            "lime": {"segments": 8, "samples": 40, "kernel_width": 0.25, "ridge": 1.0},
            "shap": {"segments": 8, "samples": 64, "exact": False},
            "lrp": {"epsilon": 1e-6},
        },
        "ensemble": {"a_min": 0.0, "a_max": 1.0, "weights": None, "methods": ["gradcam", "lime", "shap", "lrp"]},
        "qm": {"perturbation": {"fraction": 0.1, "strategy": "shuffle"}, "trials": 2, "ok_count": 4,
               "stability_runs": 2, "stability_instances": 3},
        "search": {"trials": 2, "epochs": 1, "conv_blocks": [1, 2], "dense_blocks": [0, 1]},
    }
