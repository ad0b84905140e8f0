"""Copy, similarity and prompt-infilling losses, batched over examples."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..corpus.records import PieLexiconEntry, SentenceRecord
from ..exceptions import InvalidInputError
from ..model.fused import FusedModel
from ..numerics import Tensor, no_grad
from ..numerics import kernels as K
from .prompts import TrainingExample, plain_example


@dataclass(frozen=True)
class LossBreakdown:
    reconstruction_ce: float
    sim_positive: float
    sim_negative: float
    similarity: float
    total: float

    FIELDS = ("reconstruction_ce", "sim_positive", "sim_negative", "similarity", "total")

    def as_dict(self) -> dict[str, float]:
        return {f: getattr(self, f) for f in self.FIELDS}


@dataclass(frozen=True)
class ObjectiveWeights:
    copy: bool = True
    sim: bool = True
    ce_weight: float = 1.0
    sim_weight: float = 1.0
    force_sense: str | None = None  # "idiomatic" makes every PIE occurrence idiomatic


def sequence_ce(model: FusedModel, sources: Sequence[Sequence[int]], targets: Sequence[Sequence[int]],
                route: str | None = None):
    """Teacher-forced cross-entropy over every target token; returns (encoder output, loss)."""
    enc, logits, tgt_out, tgt_mask = model.forward(sources, targets, route)
    return enc, K.cross_entropy(logits, tgt_out, tgt_mask)


def copy_loss(model: FusedModel, record: SentenceRecord, route: str | None = None) -> Tensor:
    return sequence_ce(model, [record.tokens], [record.tokens], route)[1]


def prompt_infill_loss(model: FusedModel, example: TrainingExample, route: str | None = None) -> Tensor:
    if example.prompt_kind == "none":
        raise InvalidInputError("prompt_infill_loss needs a prompted example")
    return sequence_ce(model, [example.source], [example.target_sequence], route)[1]


def literal_target_embedding(base_model: FusedModel, record: SentenceRecord) -> np.ndarray:
    """Span mean of the plain base encoder's final outputs."""
    return base_model.pie_embedding(record.tokens, record.span, route="base")


def idiomatic_target_embedding(reference: FusedModel, gloss: Sequence[int]) -> np.ndarray:
    if len(gloss) == 0:
        raise InvalidInputError("empty definition gloss")
    return reference.pie_embedding(tuple(gloss), (0, len(gloss)), route="base")


class TargetCache:
    """Frozen similarity targets: one gloss embedding per PIE, one literal embedding per sentence."""

    def __init__(self, reference: FusedModel, lexicon: Sequence[PieLexiconEntry], batch_size: int = 128):
        self.reference = reference
        self.lexicon = {e.pie_id: e for e in lexicon}
        self._idiomatic: dict[int, np.ndarray] = {}
        self._literal: dict[int, np.ndarray] = {}
        self.batch_size = batch_size

    def idiomatic(self, pie_id: int) -> np.ndarray:
        if pie_id not in self._idiomatic:
            self._idiomatic[pie_id] = idiomatic_target_embedding(
                self.reference, self.lexicon[pie_id].definition_gloss)
        return self._idiomatic[pie_id]

    def literal(self, record: SentenceRecord) -> np.ndarray:
        if record.sentence_id not in self._literal:
            self.warm([record])
        return self._literal[record.sentence_id]

    def warm(self, records: Sequence[SentenceRecord]) -> "TargetCache":
        todo = [r for r in records if r.sentence_id not in self._literal]
        with no_grad():
            for i in range(0, len(todo), self.batch_size):
                chunk = todo[i:i + self.batch_size]
                embs = self.reference.embed_tokens([r.tokens for r in chunk], route="base",
                                                   batch_size=self.batch_size)
                for r, e in zip(chunk, embs):
                    self._literal[r.sentence_id] = e[r.span[0]:r.span[1]].mean(axis=0)
        for pid in sorted({r.pie_id for r in records}):
            self.idiomatic(pid)
        return self

    def arrays(self, records: Sequence[SentenceRecord]) -> tuple[np.ndarray, np.ndarray]:
        idio = np.stack([self.idiomatic(r.pie_id) for r in records])
        lit = np.stack([self.literal(r) for r in records])
        return idio, lit


def similarity_loss(pie_emb, idiomatic_emb, literal_emb, sense):
    """Pull the PIE embedding toward the sense-matching target, hinge it away from the other.

    Works on single vectors or on (B, d) batches with one sense per row.
    Returns (mean cos to positive, mean cos to negative, mean loss).
    """
    pie = pie_emb if isinstance(pie_emb, Tensor) else Tensor(pie_emb, dtype=np.asarray(pie_emb).dtype)
    single = pie.ndim == 1
    idio = np.atleast_2d(np.asarray(idiomatic_emb.data if isinstance(idiomatic_emb, Tensor) else idiomatic_emb))
    lit = np.atleast_2d(np.asarray(literal_emb.data if isinstance(literal_emb, Tensor) else literal_emb))
    if single:
        pie = K.reshape(pie, (1, pie.shape[0]))
    senses = [sense] if isinstance(sense, str) else list(sense)
    if len(senses) != pie.shape[0] or idio.shape != pie.shape or lit.shape != pie.shape:
        raise InvalidInputError("similarity_loss inputs disagree in shape")
    bad = set(senses) - {"idiomatic", "literal"}
    if bad:
        raise InvalidInputError(f"unknown sense {sorted(bad)}")
    is_idio = np.array([s == "idiomatic" for s in senses])[:, None]
    pos = Tensor(np.where(is_idio, idio, lit), dtype=pie.dtype)
    neg = Tensor(np.where(is_idio, lit, idio), dtype=pie.dtype)
    cos_pos = K.cosine_similarity(pie, pos, axis=-1)
    cos_neg = K.cosine_similarity(pie, neg, axis=-1)
    per_row = (1.0 - cos_pos) + K.relu(cos_neg)
    return K.mean(cos_pos), K.mean(cos_neg), K.mean(per_row)


def total_loss(model: FusedModel, examples: Sequence[TrainingExample], weights: ObjectiveWeights,
               targets: TargetCache | None = None, route: str | None = None) -> tuple[Tensor, LossBreakdown]:
    """Summed objective for one batch.

    Cross-entropy covers every target token: the sentence itself for plain
    examples and the infilled output for prompted ones. With ``weights.copy``
    off, plain examples contribute no cross-entropy. The similarity term uses
    the PIE span of the encoder input; spans are unaffected by an appended
    prompt.
    """
    if not examples:
        raise InvalidInputError("empty batch")
    ce_examples = [ex for ex in examples if weights.copy or ex.prompt_kind != "none"]
    need_sim = weights.sim
    if not ce_examples and not need_sim:
        raise InvalidInputError("batch has no active objective")

    terms = []
    zero = 0.0
    ce_val = zero
    if ce_examples and len(ce_examples) == len(examples):
        enc, ce = sequence_ce(model, [e.source for e in examples], [e.target_sequence for e in examples], route)
        enc_all = enc
    else:
        enc_all = None
        ce = None
        if ce_examples:
            _, ce = sequence_ce(model, [e.source for e in ce_examples],
                                [e.target_sequence for e in ce_examples], route)
    if ce is not None:
        terms.append(ce * weights.ce_weight if weights.ce_weight != 1.0 else ce)
        ce_val = float(ce.item())

    pos_val = neg_val = sim_val = zero
    if need_sim:
        if targets is None:
            raise InvalidInputError("similarity objective needs a TargetCache")
        if enc_all is None:
            from ..model.fused import pad_batch

            ids, mask = pad_batch([e.source for e in examples])
            enc_all = model.encode(ids, mask, route)
        records = [e.record for e in examples]
        pie = model.pooled(enc_all.final, [r.span for r in records])
        idio, lit = targets.arrays(records)
        senses = [weights.force_sense or r.sense for r in records]
        cos_pos, cos_neg, sim = similarity_loss(pie, idio, lit, senses)
        terms.append(sim * weights.sim_weight if weights.sim_weight != 1.0 else sim)
        pos_val, neg_val, sim_val = float(cos_pos.item()), float(cos_neg.item()), float(sim.item())

    total = terms[0]
    for t in terms[1:]:
        total = total + t
    breakdown = LossBreakdown(
        reconstruction_ce=ce_val, sim_positive=pos_val, sim_negative=neg_val, similarity=sim_val,
        total=float(total.item()),
    )
    return total, breakdown


def examples_for(records: Sequence[SentenceRecord]) -> list[TrainingExample]:
    return [plain_example(r) for r in records]
