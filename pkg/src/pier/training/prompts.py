"""Masked prompt construction and per-sentence prompt sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..corpus.records import PieLexiconEntry, SentenceRecord
from ..corpus.vocab import DEFN_GEN_TEMPLATES, Vocabulary
from ..exceptions import InvalidInputError

PROMPT_KINDS = ("none", "type_cls", "defn_gen")
PROMPT_MODES = ("single", "multi")
N_TEMPLATES = len(DEFN_GEN_TEMPLATES)


@dataclass(frozen=True)
class TrainingExample:
    """One record plus its prompt annotation.

    ``source`` is what the encoder reads; ``target_sequence`` is what the
    decoder must produce. Without a prompt both equal the sentence itself.
    """

    record: SentenceRecord
    prompt_kind: str
    template_index: int
    source: tuple[int, ...]
    target_sequence: tuple[int, ...]

    def __post_init__(self):
        if self.prompt_kind not in PROMPT_KINDS:
            raise InvalidInputError(f"unknown prompt kind {self.prompt_kind!r}")
        if self.prompt_kind == "none" and not (self.target_sequence == self.source == self.record.tokens):
            raise InvalidInputError("an unprompted example must copy its sentence")


def _fill(template: Sequence[str], pie: Sequence[int], answer: Sequence[int], vocab: Vocabulary) -> list[int]:
    out: list[int] = []
    for w in template:
        if w == "[PIE]":
            out += list(pie)
        elif w == "[MASK]":
            out += list(answer)
        else:
            out.append(vocab.id(w))
    return out


def prompt_answer(record: SentenceRecord, kind: str, entry: PieLexiconEntry, vocab: Vocabulary) -> tuple[int, ...]:
    if kind == "type_cls":
        return (vocab.idiomatic if record.is_idiomatic else vocab.literal,)
    if kind == "defn_gen":
        # a literal use is "defined" by the phrase itself
        return tuple(entry.definition_gloss) if record.is_idiomatic else record.pie_tokens
    raise InvalidInputError(f"prompt kind {kind!r} has no answer")


def build_prompt(record: SentenceRecord, kind: str, template_index: int, entry: PieLexiconEntry,
                 vocab: Vocabulary, answer: Sequence[int] | None = None) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Return (prompted source with one mask token, infilled target).

    The target is the whole output sentence: original tokens followed by the
    template with the mask replaced by the answer. ``answer`` overrides the
    label-derived answer (used for sense-free pretraining data).
    """
    if kind not in ("type_cls", "defn_gen"):
        raise InvalidInputError(f"unknown prompt kind {kind!r}")
    if not 0 <= template_index < N_TEMPLATES:
        raise InvalidInputError(f"template index {template_index} outside 0..{N_TEMPLATES - 1}")
    if entry.pie_id != record.pie_id:
        raise InvalidInputError(f"lexicon entry {entry.pie_id} does not match record PIE {record.pie_id}")
    template = vocab.template(kind, template_index)
    pie = record.pie_tokens
    if answer is None:
        answer = prompt_answer(record, kind, entry, vocab)
    source = record.tokens + tuple(_fill(template, pie, (vocab.mask,), vocab))
    target = record.tokens + tuple(_fill(template, pie, answer, vocab))
    return source, target


def plain_example(record: SentenceRecord) -> TrainingExample:
    return TrainingExample(record, "none", 0, record.tokens, record.tokens)


def assign_prompts(records: Sequence[SentenceRecord], rng: np.random.Generator,
                   lexicon: Mapping[int, PieLexiconEntry], vocab: Vocabulary,
                   mode: str = "multi", kinds: Sequence[str] = ("type_cls", "defn_gen")) -> list[TrainingExample]:
    """Annotate every record with a prompt kind and template.

    Each record draws uniformly from ``none`` plus ``kinds`` (a third each
    with both kinds enabled). Templates are uniform over all five in
    ``multi`` mode and always the first in ``single`` mode. Order and
    membership of ``records`` are preserved.
    """
    if mode not in PROMPT_MODES:
        raise InvalidInputError(f"unknown prompt mode {mode!r}")
    unknown = set(kinds) - set(PROMPT_KINDS[1:])
    if unknown:
        raise InvalidInputError(f"unknown prompt kinds {sorted(unknown)}")
    choices = ("none",) + tuple(kinds)
    n = len(records)
    picks = rng.integers(0, len(choices), size=n)
    templates = rng.integers(0, N_TEMPLATES, size=n) if mode == "multi" else np.zeros(n, dtype=int)
    out = []
    for rec, p, t in zip(records, picks, templates):
        kind = choices[int(p)]
        if kind == "none":
            out.append(plain_example(rec))
            continue
        src, tgt = build_prompt(rec, kind, int(t), lexicon[rec.pie_id], vocab)
        out.append(TrainingExample(rec, kind, int(t), src, tgt))
    return out
