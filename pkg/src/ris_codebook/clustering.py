"""Power-feature user clustering with sensing beams (no channel knowledge).

Each user is described by the receive powers it reports under a fixed set
of random sensing beams. Rows are normalized to unit length so clusters
reflect channel direction rather than path-loss magnitude, then grouped by
k-means with farthest-point seeding and a fixed iteration cap.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .codebook import Codebook, PhaseGrid, _as_matrix, gain_matrix
from .errors import ConfigurationError, DatasetFormatError, DimensionError

logger = logging.getLogger(__name__)


def sensing_codebook(num_elements: int, num_beams: int, grid: PhaseGrid,
                     seed: int = 0) -> Codebook:
    """Random grid-phase sensing beams, i.i.d. uniform, deterministic per seed."""
    if num_beams < 1:
        raise ConfigurationError("need at least one sensing beam")
    rng = np.random.default_rng(seed)
    indices = rng.integers(0, grid.size, size=(num_beams, num_elements))
    return Codebook(indices, grid)


def power_features(users, sensing: Codebook, noise_scale: float = 0.0,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """(num_users, num_beams) received powers under the sensing beams.

    noise_scale > 0 applies multiplicative lognormal measurement noise,
    modelling imperfect power reports.
    """
    features = gain_matrix(_as_matrix(users), sensing)
    if noise_scale > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        features = features * np.exp(noise_scale * rng.standard_normal(features.shape))
    return features


@dataclass(eq=False)
class ClusterAssignment:
    """Cluster label per user plus the centroid feature vectors (0-based)."""

    labels: np.ndarray
    centroids: np.ndarray
    empty_clusters: tuple[int, ...] = ()
    n_iterations: int = 0
    wcss_history: tuple[float, ...] = ()

    @property
    def num_clusters(self) -> int:
        return self.centroids.shape[0]


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe


def _assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _wcss(x: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(((x - centroids[labels]) ** 2).sum())


def cluster_users(features: np.ndarray, n_clusters: int, seed: int = 0,
                  max_iter: int = 100) -> ClusterAssignment:
    """k-means over unit-normalized feature rows.

    Seeding: the first centroid is a seed-chosen user, the rest follow
    farthest-point traversal. Clusters that empty out during Lloyd
    iterations are re-seeded from the farthest point (and logged).
    Deterministic for a given (features, n_clusters, seed).
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 2:
        raise DimensionError("feature matrix must be 2-D (users x beams)")
    num_users = features.shape[0]
    if n_clusters < 1:
        raise ConfigurationError("need at least one cluster")
    if n_clusters > num_users:
        raise ConfigurationError(
            f"cannot form {n_clusters} clusters from {num_users} users"
        )
    x = _normalize_rows(features)
    rng = np.random.default_rng(seed)

    centroids = np.empty((n_clusters, x.shape[1]))
    centroids[0] = x[int(rng.integers(num_users))]
    min_d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, n_clusters):
        centroids[j] = x[int(np.argmax(min_d2))]
        min_d2 = np.minimum(min_d2, ((x - centroids[j]) ** 2).sum(axis=1))

    labels = _assign(x, centroids)
    history = [_wcss(x, centroids, labels)]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        for j in range(n_clusters):
            members = labels == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
            else:
                distances = ((x - centroids[labels]) ** 2).sum(axis=1)
                far = int(np.argmax(distances))
                centroids[j] = x[far]
                logger.info("re-seeded empty cluster %d from user %d", j, far)
        new_labels = _assign(x, centroids)
        history.append(_wcss(x, centroids, new_labels))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels

    empty = tuple(j for j in range(n_clusters) if not (labels == j).any())
    if empty:
        logger.info("clusters %s ended empty (duplicate-heavy features)", empty)
    return ClusterAssignment(
        labels=labels.astype(int),
        centroids=centroids,
        empty_clusters=empty,
        n_iterations=iterations,
        wcss_history=tuple(history),
    )


def assign_to_centroids(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid labels for new users (same row normalization)."""
    return _assign(_normalize_rows(np.asarray(features, dtype=float)), centroids).astype(int)


def save_assignment(csv_path, assignment: ClusterAssignment,
                    centroids_path=None, sensing: Codebook | None = None,
                    config_hash: str | None = None) -> None:
    """CSV of (user_id, cluster_id), both 1-based; centroids as JSON alongside."""
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        if config_hash is not None:
            fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "cluster_id"])
        for user, label in enumerate(assignment.labels):
            writer.writerow([user + 1, int(label) + 1])
    if centroids_path is not None:
        body = {
            "format_version": 1,
            "n_clusters": assignment.num_clusters,
            "centroids": assignment.centroids.tolist(),
            "empty_clusters": [j + 1 for j in assignment.empty_clusters],
        }
        if sensing is not None:
            body["sensing"] = {
                "q": sensing.grid.bits,
                "M": sensing.num_elements,
                "beams": (sensing.indices + 1).tolist(),
            }
        if config_hash is not None:
            body["config_hash"] = config_hash
        with open(centroids_path, "w", encoding="utf-8") as fh:
            json.dump(body, fh, indent=1)
            fh.write("\n")


def load_assignment(csv_path) -> np.ndarray:
    """Labels (0-based) from a CSV written by save_assignment."""
    labels: list[int] = []
    with open(csv_path, "r", encoding="utf-8") as fh:
        rows = [r for r in fh if r.strip() and not r.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader, None)
    if header != ["user_id", "cluster_id"]:
        raise DatasetFormatError(f"{csv_path}: unexpected header {header}")
    for row in reader:
        labels.append(int(row[1]) - 1)
    return np.asarray(labels, dtype=int)
