"""
DBSCAN Module

Density-based clustering with a Euclidean metric. Neighbourhoods come from a KD-tree;
points are scanned in input order so the assignment is deterministic, and a border point
belongs to the first cluster that reaches it.
"""

from collections import deque
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
from scipy.spatial import cKDTree

from src.utils.errors import DimensionError, ParameterError
from src.utils.logger import get_logger

logger = get_logger()

OUTLIER = -1


@dataclass
class ClusterAssignment:
    """
    Attributes:
        labels: Cluster id per point (contiguous from 0) or OUTLIER
        core: True for core points
    """

    labels: np.ndarray
    core: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self) and self.labels.max() >= 0 else 0

    @property
    def outliers(self) -> np.ndarray:
        return self.labels == OUTLIER

    @property
    def border(self) -> np.ndarray:
        """Non-core members of a cluster."""
        return (self.labels != OUTLIER) & ~self.core

    def cluster_sizes(self) -> Dict[int, int]:
        ids, counts = np.unique(self.labels[self.labels != OUTLIER], return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}


def _check_points(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if points.ndim != 2:
        raise DimensionError(f"points must be (n, d), got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise DimensionError("points must be finite")
    return points


def dbscan(points: np.ndarray, eps: float, min_pts: int = 5) -> ClusterAssignment:
    """
    Cluster points with DBSCAN.

    A point is core when at least min_pts points (itself included) lie within eps,
    inclusive. Clusters grow breadth-first from the lowest-index unvisited core point.

    Args:
        points: (n, d) coordinates
        eps: Neighbourhood radius, > 0
        min_pts: Core threshold, >= 1

    Returns:
        ClusterAssignment: Labels and core mask
    """
    if not eps > 0:
        raise ParameterError(f"eps must be > 0, got {eps}")
    if min_pts < 1:
        raise ParameterError(f"min_pts must be >= 1, got {min_pts}")
    points = _check_points(points)
    n = points.shape[0]
    if n == 0:
        return ClusterAssignment(np.zeros(0, dtype=int), np.zeros(0, dtype=bool))

    tree = cKDTree(points)
    neighbours: List[List[int]] = [sorted(hood) for hood in tree.query_ball_point(points, r=eps)]
    core = np.array([len(hood) >= min_pts for hood in neighbours], dtype=bool)

    labels = np.full(n, OUTLIER, dtype=int)
    cluster = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != OUTLIER:
            continue
        labels[seed] = cluster
        queue = deque([seed])
        while queue:
            current = queue.popleft()
            for neighbour in neighbours[current]:
                if labels[neighbour] != OUTLIER:
                    continue
                labels[neighbour] = cluster
                if core[neighbour]:
                    queue.append(neighbour)
        cluster += 1

    logger.debug(f"DBSCAN(eps={eps:.6g}, min_pts={min_pts}): {cluster} clusters, "
                 f"{int(np.sum(labels == OUTLIER))} outliers")
    return ClusterAssignment(labels, core)


def k_distance_profile(points: np.ndarray, k: int) -> np.ndarray:
    """
    Ascending distances from each point to its k-th nearest neighbour (itself excluded).

    Args:
        points: (n, d) coordinates
        k: Neighbour rank, 1 <= k < n

    Returns:
        np.ndarray: Sorted distances, length n
    """
    points = _check_points(points)
    n = points.shape[0]
    if not 1 <= k < n:
        raise ParameterError(f"k must satisfy 1 <= k < {n}, got {k}")
    distances, _ = cKDTree(points).query(points, k=k + 1)
    return np.sort(distances[:, k])


def select_eps(points: np.ndarray, min_pts: int = 5, floor: float = 1e-9) -> float:
    """
    Pick eps at the elbow of the k-distance profile (k = min_pts).

    The elbow is the profile point farthest from the chord joining its first and last
    points, after scaling both axes to [0, 1].

    Args:
        points: (n, d) coordinates
        min_pts: DBSCAN core threshold
        floor: Lower bound returned for degenerate profiles

    Returns:
        float: eps, never below floor
    """
    points = _check_points(points)
    n = points.shape[0]
    if n < 2:
        return 1.0
    profile = k_distance_profile(points, min(max(min_pts, 1), n - 1))
    span = profile[-1] - profile[0]
    if span <= 0:
        return max(float(profile[-1]), floor)
    x = np.linspace(0.0, 1.0, n)
    y = (profile - profile[0]) / span
    # distance to the chord y = x, up to a constant factor
    elbow = int(np.argmax(x - y))
    return max(float(profile[elbow]), floor)
