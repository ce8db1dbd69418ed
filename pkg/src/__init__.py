"""Latent-space outlier detection and encoder explanations for univariate time series."""

__version__ = "0.1.0"
