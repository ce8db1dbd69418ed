"""
Plots Module

SVG figures for the render command: explanation heatmaps (series in black over a
red-intensity background), per-feature heatmaps with the reconstruction overlaid, QM box
plots, the 2-D latent scatter and reconstruction overlays.

Figures are written with the Agg backend, a fixed SVG hash salt and no date metadata so the
same inputs produce byte-identical files.
"""

import os
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from src.detection.latent_anomaly import TAG_OK, TAG_OK_DEVIATING, TAG_OUTLIER, LatentScatter
from src.utils.errors import DataError, DimensionError
from src.utils.logger import get_logger
from src.xai.explanation import Explanation
from src.xai.quality import CLASS_NAMES, QMSummary

logger = get_logger()

SVG_HASH_SALT = "aee-ts"
HEATMAP_CMAP = "Reds"
NOISE_COLOR = "tab:green"
XAI_COLOR = "tab:red"
TAG_COLORS = {TAG_OK: "tab:blue", TAG_OK_DEVIATING: "tab:orange", TAG_OUTLIER: "tab:red"}

plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
plt.rcParams["svg.fonttype"] = "path"


def _save(fig, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug(f"Wrote figure {path}")
    return path


def display_intensity(values: np.ndarray) -> np.ndarray:
    """
    Per-explanation color intensity in [0, 1].

    Every heatmap is scaled over its own minimum and maximum, so intensities are comparable
    within a figure but not across methods. A constant explanation renders blank.
    """
    values = np.asarray(values, dtype=np.float64)
    low, high = float(values.min()), float(values.max())
    if high == low:
        return np.zeros_like(values)
    return (values - low) / (high - low)


def _draw_heatmap(ax, series: np.ndarray, explanation_values: np.ndarray,
                  reconstruction: Optional[np.ndarray] = None) -> None:
    if explanation_values.shape[0] != series.shape[0]:
        raise DimensionError(
            f"explanation length {explanation_values.shape[0]} does not match series length {series.shape[0]}"
        )
    curves = [series] if reconstruction is None else [series, reconstruction]
    low = float(min(c.min() for c in curves))
    high = float(max(c.max() for c in curves))
    margin = 0.05 * (high - low) if high > low else 0.5
    ax.imshow(
        display_intensity(explanation_values)[None, :],
        cmap=HEATMAP_CMAP, vmin=0.0, vmax=1.0, aspect="auto", interpolation="nearest",
        extent=(0, series.shape[0], low - margin, high + margin),
    )
    ax.plot(np.arange(series.shape[0]) + 0.5, series, color="black", linewidth=0.8, label="series")
    if reconstruction is not None:
        ax.plot(np.arange(series.shape[0]) + 0.5, reconstruction, color="tab:blue",
                linewidth=0.8, linestyle="--", label="reconstruction")
    ax.set_xlim(0, series.shape[0])
    ax.set_ylim(low - margin, high + margin)


def render_heatmap(series: np.ndarray, explanation: Explanation, path: str,
                   reconstruction: Optional[np.ndarray] = None, title: Optional[str] = None) -> str:
    """
    Heatmap of one explanation behind its series.

    Args:
        series: Raw series values
        explanation: Explanation of the series
        path: Output SVG path
        reconstruction: Optional reconstruction drawn dashed over the series
        title: Figure title; defaults to "<method> <target> <id>"

    Returns:
        str: The written path
    """
    series = np.asarray(series, dtype=np.float64)
    fig, ax = plt.subplots(1, 1, figsize=(10, 3))
    _draw_heatmap(ax, series, explanation.values, reconstruction)
    ax.set_title(title or f"{explanation.method} {explanation.target} {explanation.series_id}")
    ax.set_xlabel("time step")
    fig.tight_layout()
    return _save(fig, path)


def render_feature_heatmaps(series: np.ndarray, explanations: Sequence[Explanation], path: str,
                            reconstruction: Optional[np.ndarray] = None) -> str:
    """
    One panel per latent unit, each with the reconstruction overlaid.

    Args:
        series: Raw series values
        explanations: Individual explanations, index i for latent unit i
        path: Output SVG path
        reconstruction: Reconstruction in the input scale

    Returns:
        str: The written path
    """
    if not explanations:
        raise DataError("no explanations to render")
    series = np.asarray(series, dtype=np.float64)
    fig, axes = plt.subplots(len(explanations), 1, figsize=(10, 2.4 * len(explanations)),
                             sharex=True, squeeze=False)
    for ax, explanation in zip(axes[:, 0], explanations):
        _draw_heatmap(ax, series, explanation.values, reconstruction)
        ax.set_title(f"{explanation.method} {explanation.target}", fontsize=9)
    axes[0, 0].legend(loc="upper right", fontsize=7)
    axes[-1, 0].set_xlabel("time step")
    fig.suptitle(explanations[0].series_id)
    fig.tight_layout()
    return _save(fig, path)


def render_qm_boxplot(summary: QMSummary, path: str, class_name: str = "NOK") -> str:
    """
    Box plots of the normalized QM distances, per method, noise (green) next to XAI (red).

    Whiskers sit at the 1.5 IQR fences clipped to [0, 1].

    Args:
        summary: QM summary
        path: Output SVG path
        class_name: Stratum to plot, "OK" or "NOK"

    Returns:
        str: The written path
    """
    if class_name not in CLASS_NAMES.values():
        raise DataError(f"unknown class {class_name!r}")
    methods = summary.methods
    fig, ax = plt.subplots(1, 1, figsize=(1.6 * max(len(methods), 1) + 2, 4))
    ticks, tick_labels = [], []
    for i, method in enumerate(methods):
        for offset, condition, color in ((-0.2, "noise", NOISE_COLOR), (0.2, "xai", XAI_COLOR)):
            stats = summary.stats.get((method, class_name, condition))
            if stats is None:
                continue
            box = {
                "med": stats.median, "q1": stats.q1, "q3": stats.q3,
                "whislo": max(stats.lower_fence, 0.0), "whishi": min(stats.upper_fence, 1.0),
                "fliers": [], "label": condition,
            }
            artists = ax.bxp([box], positions=[i + offset], widths=0.3, patch_artist=True, showfliers=False)
            for patch in artists["boxes"]:
                patch.set_facecolor(color)
                patch.set_alpha(0.6)
        ticks.append(i)
        tick_labels.append(method)
    ax.set_xticks(ticks)
    ax.set_xticklabels(tick_labels)
    ax.set_ylabel("normalized latent distance")
    ax.set_title(f"QM {class_name}")
    handles = [plt.Rectangle((0, 0), 1, 1, color=NOISE_COLOR, alpha=0.6),
               plt.Rectangle((0, 0), 1, 1, color=XAI_COLOR, alpha=0.6)]
    ax.legend(handles, ["noise", "xai"], loc="upper left")
    fig.tight_layout()
    return _save(fig, path)


def render_latent_scatter(scatter: LatentScatter, path: str) -> str:
    """2-D latent projection colored by outlier / ok_deviating / ok tag."""
    fig, ax = plt.subplots(1, 1, figsize=(6, 5))
    tags = np.asarray(scatter.tags)
    for tag in (TAG_OK, TAG_OK_DEVIATING, TAG_OUTLIER):
        mask = tags == tag
        if not mask.any():
            continue
        ax.scatter(scatter.points[mask, 0], scatter.points[mask, 1], s=8 if tag == TAG_OK else 18,
                   color=TAG_COLORS[tag], label=f"{tag} ({int(mask.sum())})")
    ax.set_xlabel("PC 1")
    ax.set_ylabel("PC 2")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def render_reconstruction(series: np.ndarray, reconstruction: np.ndarray, path: str,
                          title: Optional[str] = None) -> str:
    """Original series with the autoencoder reconstruction overlaid."""
    series = np.asarray(series, dtype=np.float64)
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    if series.shape != reconstruction.shape:
        raise DimensionError(f"reconstruction shape {reconstruction.shape} does not match series {series.shape}")
    fig, ax = plt.subplots(1, 1, figsize=(10, 3))
    steps = np.arange(series.shape[0])
    ax.plot(steps, series, color="black", linewidth=0.8, label="series")
    ax.plot(steps, reconstruction, color="tab:blue", linewidth=0.8, linestyle="--", label="reconstruction")
    ax.set_xlabel("time step")
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
