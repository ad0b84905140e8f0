"""Per-sentence PIE embeddings and their per-PIE, per-sense averages."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..corpus.records import SentenceRecord
from ..model.fused import FusedModel


@dataclass(frozen=True)
class PieEmbedding:
    pie_id: int
    idiomatic: np.ndarray | None
    literal: np.ndarray | None
    n_idiomatic: int
    n_literal: int


EmbeddingSet = dict  # pie_id -> PieEmbedding, ordered by pie_id


def token_embeddings(model: FusedModel, records: Sequence, route: str | None = None,
                     batch_size: int = 64) -> list[np.ndarray]:
    """Final encoder outputs, one float64 (T_i, d) array per sentence."""
    embs = model.embed_tokens([r.tokens for r in records], route=route, batch_size=batch_size)
    return [e.astype(np.float64) for e in embs]


def pooled_spans(token_embs: Sequence[np.ndarray], records: Sequence[SentenceRecord]) -> np.ndarray:
    return np.stack([e[r.span[0]:r.span[1]].mean(axis=0) for e, r in zip(token_embs, records)])


def sentence_pie_embeddings(model: FusedModel, records: Sequence[SentenceRecord], route: str | None = None,
                            batch_size: int = 64) -> np.ndarray:
    return pooled_spans(token_embeddings(model, records, route, batch_size), records)


def embedding_set_from(vectors: np.ndarray, records: Sequence[SentenceRecord]) -> EmbeddingSet:
    """Average sentence vectors per PIE and sense, summing in record order."""
    acc: dict[int, dict[str, list]] = {}
    for v, r in zip(vectors, records):
        acc.setdefault(r.pie_id, {"idiomatic": [], "literal": []})[r.sense].append(v)
    out: EmbeddingSet = {}
    for pid in sorted(acc):
        idio, lit = acc[pid]["idiomatic"], acc[pid]["literal"]
        out[pid] = PieEmbedding(
            pid,
            np.mean(idio, axis=0) if idio else None,
            np.mean(lit, axis=0) if lit else None,
            len(idio), len(lit),
        )
    return out


def build_embedding_set(model: FusedModel, records: Sequence[SentenceRecord], route: str | None = None) -> EmbeddingSet:
    return embedding_set_from(sentence_pie_embeddings(model, records, route), records)


def span_labels(records: Sequence[SentenceRecord]) -> list[np.ndarray]:
    """Gold token tags: span tokens are 1 for idiomatic uses; everything else 0."""
    out = []
    for r in records:
        y = np.zeros(len(r.tokens), dtype=np.int64)
        if r.is_idiomatic:
            y[r.span[0]:r.span[1]] = 1
        out.append(y)
    return out
