"""Embedding-geometry, labeling and correlation metrics."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import betainc

from ..exceptions import DegenerateInputError, DegenerateVectorError, InvalidInputError
from ..numerics.kernels import COSINE_EPS


def _cos(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < COSINE_EPS or nv < COSINE_EPS:
        raise DegenerateVectorError("cosine of a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def mean_inter_group_cosine_distance(embeddings, truth_groups) -> float:
    """Mean of 1 - cos over all unordered pairs drawn from different groups."""
    x = np.asarray(embeddings, dtype=np.float64)
    g = np.asarray(truth_groups)
    if len(x) != len(g):
        raise InvalidInputError("one group per embedding required")
    if len(np.unique(g)) < 2:
        raise InvalidInputError("need at least two groups")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms < COSINE_EPS):
        raise DegenerateVectorError("cosine of a zero vector")
    unit = x / norms[:, None]
    sims = np.clip(unit @ unit.T, -1.0, 1.0)
    iu = np.triu_indices(len(x), k=1)
    across = g[iu[0]] != g[iu[1]]
    return float(np.mean(1.0 - sims[iu][across]))


def mean_inter_type_cosine_similarity(embedding_set) -> float:
    """Mean cos(idiomatic, literal) over PIEs that have both embeddings."""
    pairs = [(e.idiomatic, e.literal) for e in embedding_set.values()
             if e.idiomatic is not None and e.literal is not None]
    if not pairs:
        raise InvalidInputError("no PIE has both idiomatic and literal embeddings")
    return float(np.mean([_cos(np.asarray(a, np.float64), np.asarray(b, np.float64)) for a, b in pairs]))


def _aligned(pred, gold) -> list[tuple[np.ndarray, np.ndarray]]:
    if len(pred) != len(gold):
        raise InvalidInputError(f"{len(pred)} predicted sequences vs {len(gold)} gold")
    out = []
    for i, (p, g) in enumerate(zip(pred, gold)):
        p, g = np.asarray(p, dtype=bool), np.asarray(g, dtype=bool)
        if p.shape != g.shape:
            raise InvalidInputError(f"sequence {i}: {p.shape[0]} predicted labels vs {g.shape[0]} gold")
        out.append((p, g))
    return out


def sequence_accuracy(pred: Sequence, gold: Sequence) -> float:
    pairs = _aligned(pred, gold)
    if not pairs:
        raise InvalidInputError("no sequences")
    return float(np.mean([np.array_equal(p, g) for p, g in pairs]))


def token_accuracy(pred: Sequence, gold: Sequence) -> float:
    pairs = _aligned(pred, gold)
    total = sum(len(g) for _, g in pairs)
    if total == 0:
        raise InvalidInputError("no tokens")
    return float(sum(int((p == g).sum()) for p, g in pairs) / total)


def sequence_recall(p: np.ndarray, g: np.ndarray) -> float:
    positives = int(g.sum())
    if positives == 0:
        # nothing to recall: perfect only if nothing was flagged
        return 0.0 if p.any() else 1.0
    return float((p & g).sum() / positives)


def token_recall(pred: Sequence, gold: Sequence) -> float:
    pairs = _aligned(pred, gold)
    if not pairs:
        raise InvalidInputError("no sequences")
    return float(np.mean([sequence_recall(p, g) for p, g in pairs]))


def binary_scores(pred, gold) -> dict[str, float]:
    """Accuracy and positive-class F1 for boolean predictions."""
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gold, dtype=bool)
    if p.shape != g.shape or p.size == 0:
        raise InvalidInputError("predictions and gold must be equal-length and non-empty")
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    denom = 2 * tp + fp + fn
    return {"acc": float((p == g).mean()), "f1": 2 * tp / denom if denom else 0.0}


def pearson_correlation(xs, ys) -> tuple[float, float]:
    """Product-moment r with a two-sided p-value from the t approximation."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInputError("xs and ys must be equal-length vectors")
    n = x.size
    if n < 3:
        raise InvalidInputError("need at least 3 points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("zero variance")
    r = float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))
    df = n - 2
    if abs(r) == 1.0:
        return r, 0.0
    t2 = r * r * df / (1.0 - r * r)
    # two-sided tail of Student's t via the regularized incomplete beta
    p = float(betainc(df / 2.0, 0.5, df / (df + t2)))
    return r, p
