"""
Latent Anomaly Detection Module

This module flags whole-series outliers by clustering encoder latents with DBSCAN, scores
the flags against OK/NOK labels, and projects the latent space to two dimensions.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.data.dataset import NOK, OK, Dataset
from src.detection.dbscan import ClusterAssignment, dbscan, select_eps
from src.models.autoencoder import AEModel
from src.utils.errors import DataError, DimensionError, ParameterError
from src.utils.logger import get_logger

logger = get_logger()

TAG_OUTLIER = "outlier"
TAG_OK_DEVIATING = "ok_deviating"
TAG_OK = "ok"


@dataclass(frozen=True)
class DbscanConfig:
    """
    Attributes:
        eps: Neighbourhood radius; None picks the k-distance elbow
        min_pts: Core threshold
        standardize: z-score latent dimensions before clustering
    """

    eps: Optional[float] = None
    min_pts: int = 5
    standardize: bool = False

    def validate(self) -> "DbscanConfig":
        if self.eps is not None and not self.eps > 0:
            raise ParameterError(f"eps must be > 0, got {self.eps}")
        if self.min_pts < 1:
            raise ParameterError(f"min_pts must be >= 1, got {self.min_pts}")
        return self


@dataclass
class DetectionResult:
    """
    Attributes:
        flags: True where DBSCAN labeled the instance OUTLIER
        assignment: Full cluster assignment
        eps_used: Radius actually used
        latents: Encoder latents the clustering ran on (before standardization)
        ids: Series ids, aligned with flags
    """

    flags: np.ndarray
    assignment: ClusterAssignment
    eps_used: float
    latents: np.ndarray
    ids: List[str] = field(default_factory=list)

    def to_rows(self) -> List[List[Any]]:
        return [
            [sid, int(flag), int(label), int(core)]
            for sid, flag, label, core in zip(self.ids, self.flags, self.assignment.labels, self.assignment.core)
        ]


def standardize(latents: np.ndarray) -> np.ndarray:
    """z-score each column; constant columns become 0."""
    std = latents.std(axis=0)
    return np.where(std > 0, (latents - latents.mean(axis=0)) / np.where(std > 0, std, 1.0), 0.0)


def detect_latents(latents: np.ndarray, config: Optional[DbscanConfig] = None,
                   ids: Sequence[str] = ()) -> DetectionResult:
    """Cluster precomputed latents; see detect."""
    config = (config or DbscanConfig()).validate()
    latents = np.asarray(latents, dtype=np.float64)
    if latents.shape[0] == 0:
        empty = ClusterAssignment(np.zeros(0, dtype=int), np.zeros(0, dtype=bool))
        return DetectionResult(np.zeros(0, dtype=bool), empty, float(config.eps or 0.0), latents, list(ids))

    points = standardize(latents) if config.standardize else latents
    eps = config.eps if config.eps is not None else select_eps(points, config.min_pts)
    assignment = dbscan(points, eps, config.min_pts)
    flags = assignment.outliers
    logger.info(f"DBSCAN found {assignment.n_clusters} clusters and {int(flags.sum())} outliers "
                f"among {len(flags)} series (eps={eps:.6g}, min_pts={config.min_pts})")
    return DetectionResult(flags, assignment, float(eps), latents, list(ids))


def detect(model: AEModel, dataset: Dataset, config: Optional[DbscanConfig] = None) -> DetectionResult:
    """
    Flag outliers: flag = (DBSCAN label of the instance's latent == OUTLIER).

    Args:
        model: Trained model
        dataset: Series to screen
        config: DBSCAN settings

    Returns:
        DetectionResult: Flags plus the assignment and eps used
    """
    latents = model.encode(dataset) if len(dataset) else np.zeros((0, model.latent_dim))
    return detect_latents(latents, config, dataset.ids)


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    degenerate: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1-score": self.f1,
            "support": self.support,
            "degenerate": list(self.degenerate),
        }


@dataclass
class DetectionReport:
    """
    Per-class metrics; class NOK treats a flag as a positive, class OK a non-flag.

    Attributes:
        ok: Metrics for OK
        nok: Metrics for NOK
        confusion: tp / fp / fn / tn counts with NOK as the positive class
    """

    ok: ClassMetrics
    nok: ClassMetrics
    confusion: Dict[str, int]

    def to_dict(self) -> Dict[str, Any]:
        return {"OK": self.ok.to_dict(), "NOK": self.nok.to_dict(), "confusion": dict(self.confusion)}

    def format_table(self) -> str:
        lines = [f"{'':<6}{'precision':>11}{'recall':>9}{'f1-score':>10}{'support':>9}"]
        for name, m in (("OK", self.ok), ("NOK", self.nok)):
            lines.append(f"{name:<6}{m.precision:>11.2f}{m.recall:>9.2f}{m.f1:>10.2f}{m.support:>9d}")
        return "\n".join(lines)


def _ratio(numerator: int, denominator: int, name: str, degenerate: List[str]) -> float:
    if denominator == 0:
        degenerate.append(name)
        return 0.0
    return numerator / denominator


def _class_metrics(tp: int, fp: int, fn: int, support: int) -> ClassMetrics:
    degenerate: List[str] = []
    precision = _ratio(tp, tp + fp, "precision", degenerate)
    recall = _ratio(tp, tp + fn, "recall", degenerate)
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1-score")
    return ClassMetrics(precision, recall, f1, support, degenerate)


def score(flags: Sequence[bool], labels: Sequence[int]) -> DetectionReport:
    """
    Score outlier flags against OK (0) / NOK (1) labels.

    Undefined ratios are reported as 0.0 and listed under `degenerate`.

    Raises:
        DimensionError: Unequal lengths
        DataError: Labels other than 0/1
    """
    flags = np.asarray(flags, dtype=bool)
    labels = np.asarray(labels, dtype=int)
    if flags.shape != labels.shape:
        raise DimensionError(f"flags ({flags.shape}) and labels ({labels.shape}) differ in length")
    if np.any((labels != OK) & (labels != NOK)):
        raise DataError("score needs every instance labeled 0 or 1")

    nok = labels == NOK
    tp = int(np.sum(flags & nok))
    fp = int(np.sum(flags & ~nok))
    fn = int(np.sum(~flags & nok))
    tn = int(np.sum(~flags & ~nok))
    return DetectionReport(
        ok=_class_metrics(tn, fn, fp, tn + fp),
        nok=_class_metrics(tp, fp, fn, tp + fn),
        confusion={"tp": tp, "fp": fp, "fn": fn, "tn": tn},
    )


def pca_project(points: np.ndarray, dims: int = 2) -> np.ndarray:
    """
    Project onto the leading principal components.

    Each component's largest-magnitude loading is made positive; missing dimensions
    (fewer input dimensions than `dims`) are zero-filled.

    Args:
        points: (n, d) coordinates
        dims: Output dimensions

    Returns:
        np.ndarray: (n, dims) projection, variances in non-increasing order
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    out = np.zeros((n, dims))
    if n == 0:
        return out
    centered = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    signs = np.sign(vt[np.arange(vt.shape[0]), np.argmax(np.abs(vt), axis=1)])
    vt = vt * np.where(signs == 0, 1.0, signs)[:, None]
    keep = min(dims, vt.shape[0])
    out[:, :keep] = centered @ vt[:keep].T
    return out


@dataclass
class LatentScatter:
    points: np.ndarray
    tags: List[str]
    ids: List[str]
    labels: np.ndarray

    def to_rows(self) -> List[List[Any]]:
        return [[sid, x, y, tag, int(label)]
                for sid, (x, y), tag, label in zip(self.ids, self.points, self.tags, self.labels)]


def scatter_from_detection(detection: DetectionResult, labels: Optional[np.ndarray] = None) -> LatentScatter:
    """2-D projection of a detection's latents with outlier / ok_deviating / ok tags."""
    tags = [
        TAG_OUTLIER if flag else (TAG_OK_DEVIATING if border else TAG_OK)
        for flag, border in zip(detection.flags, detection.assignment.border)
    ]
    if labels is None:
        labels = np.full(len(tags), -1, dtype=int)
    return LatentScatter(pca_project(detection.latents, 2), tags, list(detection.ids), np.asarray(labels))


def latent_scatter(model: AEModel, dataset: Dataset, config: Optional[DbscanConfig] = None) -> LatentScatter:
    """
    Project latents to 2-D and tag each instance.

    OK-deviating instances are DBSCAN border points: cluster members without a dense
    neighbourhood of their own.
    """
    detection = detect(model, dataset, config)
    return scatter_from_detection(detection, dataset.labels)
