"""Fused-distance weighted k-means used to refine source-model pseudo-labels.

The procedure is: probability-weighted centroids from the source model's
softmax, nearest-centroid assignment under the fused metric
(euclidean + cosine + manhattan), one arithmetic-mean refinement, and a final
assignment against the refined centroids. Soft labels are
``softmax(-D_f / tau)`` over the final centroids.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

EMPTY_TOL = 1e-8

_warned_zero_norm = False


def _warn_zero_norm():
    global _warned_zero_norm
    if not _warned_zero_norm:
        log.warning("zero-norm feature in fused distance; cosine term set to 1")
        _warned_zero_norm = True


def fused_distance(p, q) -> float:
    """D_eu + D_cos + D_man between two feature vectors."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"fused_distance shape mismatch: {p.shape} vs {q.shape}")
    d = p - q
    eu = np.sqrt(np.dot(d, d))
    man = np.abs(d).sum()
    npn, nqn = np.linalg.norm(p), np.linalg.norm(q)
    if npn == 0 or nqn == 0:
        _warn_zero_norm()
        cos = 1.0
    else:
        cos = 1.0 - np.dot(p, q) / (npn * nqn)
    return float(eu + cos + man)


def fused_distance_matrix(features, centroids) -> np.ndarray:
    """N x K matrix of fused distances; vectorised form of :func:`fused_distance`."""
    X = np.asarray(features, dtype=np.float64)
    C = np.asarray(centroids, dtype=np.float64)
    diff = X[:, None, :] - C[None, :, :]
    eu = np.sqrt(np.einsum("nkf,nkf->nk", diff, diff))
    man = np.abs(diff).sum(axis=2)
    xn = np.linalg.norm(X, axis=1)
    cn = np.linalg.norm(C, axis=1)
    denom = xn[:, None] * cn[None, :]
    zero = denom == 0
    if np.any(zero):
        _warn_zero_norm()
    cos = np.where(zero, 1.0, 1.0 - (X @ C.T) / np.where(zero, 1.0, denom))
    return eu + cos + man


@dataclass
class Centroids:
    centers: np.ndarray  # K x F
    empty: np.ndarray  # K bools

    @property
    def num_classes(self) -> int:
        return self.centers.shape[0]


@dataclass
class PseudoLabels:
    hard: np.ndarray  # clustered labels, length N
    soft: np.ndarray  # N x K distributions
    argmax: np.ndarray  # raw source-model argmax labels
    centroids: Centroids
    tau: float


def init_centroids(features, probs) -> Centroids:
    X = np.asarray(features, dtype=np.float64)
    P = np.asarray(probs, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("init_centroids needs at least one sample")
    if P.shape[0] != X.shape[0]:
        raise ValueError("features and probs disagree on the number of samples")
    weight = P.sum(axis=0)
    empty = weight < EMPTY_TOL
    centers = (P.T @ X) / np.where(empty, 1.0, weight)[:, None]
    centers[empty] = 0.0
    return Centroids(centers, empty)


def assign_labels(features, centroids: Centroids) -> np.ndarray:
    """Nearest non-empty centroid under the fused metric; ties go to the lowest index."""
    if np.all(centroids.empty):
        raise ValueError("all centroids are empty")
    D = fused_distance_matrix(features, centroids.centers)
    D[:, centroids.empty] = np.inf
    return np.argmin(D, axis=1)


def refine_centroids(features, labels, previous: Centroids | None = None, num_classes=None) -> Centroids:
    """Class means of the assigned features. Classes with no members keep
    their previous centroid (or zeros) and are flagged empty."""
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = previous.num_classes if previous is not None else int(labels.max()) + 1
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    sums = np.zeros((num_classes, X.shape[1]))
    np.add.at(sums, labels, X)
    empty = counts == 0
    centers = sums / np.where(empty, 1.0, counts)[:, None]
    if previous is not None:
        centers[empty] = previous.centers[empty]
    return Centroids(centers, empty)


def soft_labels(features, centroids: Centroids, tau=1.0) -> np.ndarray:
    if tau <= 0:
        raise ValueError("temperature must be positive")
    D = fused_distance_matrix(features, centroids.centers)
    logits = -D / tau
    logits[:, centroids.empty] = -np.inf
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def cluster_pseudo_labels(features, probs, rounds=1, tau=1.0) -> PseudoLabels:
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    probs = np.asarray(probs, dtype=np.float64)
    K = probs.shape[1]
    cents = init_centroids(features, probs)
    for _ in range(rounds):
        labels = assign_labels(features, cents)
        cents = refine_centroids(features, labels, previous=cents, num_classes=K)
    hard = assign_labels(features, cents)
    soft = soft_labels(features, cents, tau)
    return PseudoLabels(hard=hard, soft=soft, argmax=np.argmax(probs, axis=1), centroids=cents, tau=tau)


def load_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def run_standalone(features_path, probs_path, hard_out, soft_out, rounds=1, tau=1.0) -> PseudoLabels:
    """File-to-file mode: comma-delimited matrices in, one row per sample out."""
    pl = cluster_pseudo_labels(load_matrix(features_path), load_matrix(probs_path), rounds, tau)
    np.savetxt(hard_out, pl.hard.reshape(-1, 1), fmt="%d", delimiter=",")
    np.savetxt(soft_out, pl.soft, fmt="%.17g", delimiter=",")
    return pl
