"""Complete-linkage agglomerative clustering under cosine distance, and homogeneity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import DegenerateVectorError, InvalidInputError
from ..numerics.kernels import COSINE_EPS


@dataclass(frozen=True)
class ClusterAssignment:
    item_ids: tuple
    labels: tuple[int, ...]
    k: int

    def __post_init__(self):
        if len(self.item_ids) != len(self.labels):
            raise InvalidInputError("one label per item required")
        if any(not 0 <= lab < self.k for lab in self.labels):
            raise InvalidInputError(f"labels must lie in [0, {self.k})")


def cosine_distance_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms < COSINE_EPS):
        raise DegenerateVectorError("cannot cluster a zero vector under cosine distance")
    unit = x / norms[:, None]
    d = 1.0 - np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(d, 0.0)
    return d


def agglomerative_cluster(embeddings, k: int, item_ids=None) -> ClusterAssignment:
    """Merge the closest pair of clusters until ``k`` remain.

    Cluster distance is the largest pairwise cosine distance between members.
    Clusters are keyed by their smallest member index, and among equally
    distant pairs the lexicographically smallest key pair merges first.
    Final labels are numbered by each cluster's smallest member.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise InvalidInputError("embeddings must be a non-empty (n, d) array")
    n = len(x)
    if not 1 <= k <= n:
        raise InvalidInputError(f"k={k} must lie in [1, n={n}]")
    ids = tuple(range(n)) if item_ids is None else tuple(item_ids)
    dist = cosine_distance_matrix(x)
    active = list(range(n))  # key of each live cluster, kept sorted
    members = {i: [i] for i in range(n)}
    while len(active) > k:
        best = None
        for ai, a in enumerate(active):
            row = dist[a]
            for b in active[ai + 1:]:
                if best is None or row[b] < best[0]:
                    best = (row[b], a, b)
        _, a, b = best
        # complete linkage: distance to the union is the max of the two
        merged = np.maximum(dist[a], dist[b])
        dist[a, :] = merged
        dist[:, a] = merged
        dist[a, a] = 0.0
        members[a] += members.pop(b)
        active.remove(b)
    labels = np.empty(n, dtype=int)
    for lab, key in enumerate(sorted(active)):
        labels[members[key]] = lab
    return ClusterAssignment(ids, tuple(int(v) for v in labels), k)


def _entropy(counts: np.ndarray) -> float:
    counts = counts[counts > 0].astype(np.float64)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def homogeneity_score(assignment, truth_groups) -> float:
    """1 - H(class | cluster) / H(class), natural logs; 1.0 when the classes carry no entropy."""
    pred = np.asarray(assignment.labels if isinstance(assignment, ClusterAssignment) else assignment)
    truth = np.asarray(truth_groups)
    if pred.size == 0:
        raise InvalidInputError("empty assignment")
    if pred.shape != truth.shape:
        raise InvalidInputError("assignment and truth cover different items")
    _, t_idx = np.unique(truth, return_inverse=True)
    _, p_idx = np.unique(pred, return_inverse=True)
    table = np.zeros((t_idx.max() + 1, p_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (t_idx, p_idx), 1)
    h_c = _entropy(table.sum(axis=1))
    if h_c == 0.0:
        return 1.0
    n = pred.size
    h_c_given_k = 0.0
    for j in range(table.shape[1]):
        col = table[:, j]
        h_c_given_k += col.sum() / n * _entropy(col)
    return float(1.0 - h_c_given_k / h_c)
