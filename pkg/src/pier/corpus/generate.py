"""Synthetic PIE lexicon and sentence generator.

Each PIE is a short run of general-vocabulary tokens. Idiomatic occurrences are
surrounded by cue words shared by the PIE's meaning group; literal occurrences
by cue words specific to that PIE (its compositional neighbourhood). Sense is
therefore recoverable from context, and a PIE that is almost never literal in
training leaves its literal cues nearly unseen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import GenerationError, InvalidConfigError
from .records import CorpusManifest, PieLexiconEntry, PlainSentence, SentenceRecord
from .vocab import Vocabulary

# per-PIE idiomaticity mixture: (share of PIEs, low, high)
RATIO_BANDS = ((0.70, 0.30, 0.90), (0.15, 0.95, 1.00), (0.15, 0.00, 0.05))
LITERAL_CUES_PER_PIE = 4
MAX_RESAMPLE = 200


def default_vocabulary(n_pies: int = 60, n_groups: int = 12) -> Vocabulary:
    return Vocabulary(
        n_general=200,
        n_groups=n_groups,
        gloss_per_group=8,
        cue_per_group=6,
        n_literal_cue=LITERAL_CUES_PER_PIE * n_pies,
    )


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


def _has_other_surface(tokens, surfaces: set, lengths, skip_start: int | None = None) -> bool:
    n = len(tokens)
    for L in lengths:
        for i in range(n - L + 1):
            if i == skip_start:
                continue
            if tuple(tokens[i:i + L]) in surfaces:
                return True
    return False


def generate_lexicon(seed: int, n_pies: int = 60, n_groups: int = 12,
                     vocab: Vocabulary | None = None) -> list[PieLexiconEntry]:
    """Draw ``n_pies`` PIEs spread over ``n_groups`` meaning groups (>= 2 per group)."""
    if n_groups < 2:
        raise InvalidConfigError("need at least two meaning groups")
    if n_pies < n_groups:
        raise InvalidConfigError(f"n_pies={n_pies} < n_groups={n_groups}")
    if n_pies < 2 * n_groups:
        raise InvalidConfigError(
            f"n_pies={n_pies} cannot give every one of {n_groups} groups at least two PIEs")
    vocab = vocab or default_vocabulary(n_pies, n_groups)
    if vocab.n_groups != n_groups:
        raise InvalidConfigError("vocabulary was built for a different number of groups")
    rng = _rng(seed, 1)

    groups = rng.permutation(np.arange(n_pies) % n_groups)

    quotas = [round(share * n_pies) for share, _, _ in RATIO_BANDS[1:]]
    band_of = np.array([0] * (n_pies - sum(quotas)) + [1] * quotas[0] + [2] * quotas[1])
    band_of = rng.permutation(band_of)
    ratios = []
    for b in band_of:
        _, lo, hi = RATIO_BANDS[b]
        u = rng.random()
        # the main band leans towards idiomatic usage, as in the real corpus
        ratios.append(lo + (hi - lo) * (math.sqrt(u) if b == 0 else u))

    general = np.array(vocab.general_ids)
    surfaces: list[tuple[int, ...]] = []
    while len(surfaces) < n_pies:
        length = int(rng.integers(2, 5))
        cand = tuple(int(t) for t in rng.choice(general, size=length, replace=False))
        clash = any(
            _has_other_surface(cand, {s}, [len(s)]) or _has_other_surface(s, {cand}, [len(cand)])
            for s in surfaces
        )
        if not clash:
            surfaces.append(cand)

    literal_pool = np.array(vocab.literal_cue_ids)
    if len(literal_pool) >= LITERAL_CUES_PER_PIE * n_pies:
        order = rng.permutation(literal_pool)
        literal_cues = [order[i * LITERAL_CUES_PER_PIE:(i + 1) * LITERAL_CUES_PER_PIE] for i in range(n_pies)]
    else:
        literal_cues = [rng.choice(literal_pool, LITERAL_CUES_PER_PIE, replace=False) for _ in range(n_pies)]

    entries = []
    for pid in range(n_pies):
        g = int(groups[pid])
        gloss_vocab = vocab.gloss_ids(g)
        n_extra = int(rng.integers(2, 6))
        # the group's first gloss word appears in every member's gloss
        extra = rng.choice(gloss_vocab[1:], size=min(n_extra, len(gloss_vocab) - 1), replace=False)
        gloss = (gloss_vocab[0],) + tuple(int(t) for t in extra)
        entries.append(PieLexiconEntry(
            pie_id=pid,
            surface=surfaces[pid],
            definition_gloss=gloss,
            group_id=g,
            idiomaticity_ratio=float(ratios[pid]),
            literal_cues=tuple(sorted(int(t) for t in literal_cues[pid])),
        ))
    return entries


def _largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    share = weights / weights.sum() * total
    base = np.floor(share).astype(int)
    left = total - base.sum()
    order = np.argsort(-(share - base), kind="stable")
    base[order[:left]] += 1
    return base


def _allocate_train(lexicon, n_train: int, target: float, rng, min_per_pie: int):
    ratios = np.array([e.idiomaticity_ratio for e in lexicon])
    freq = np.exp(rng.normal(0.0, 0.5, size=len(lexicon)))
    rest = n_train - min_per_pie * len(lexicon)
    if rest < 0:
        raise GenerationError(
            f"n_train={n_train} cannot give every PIE its {min_per_pie} training sentences")

    def realise(beta):
        counts = min_per_pie + _largest_remainder(rest, freq * np.exp(beta * ratios))
        idio = np.rint(counts * ratios).astype(int)
        return counts, idio

    lo, hi = -30.0, 30.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        counts, idio = realise(mid)
        if idio.sum() / n_train < target:
            lo = mid
        else:
            hi = mid
    counts, idio = realise(hi)
    if abs(idio.sum() / n_train - target) > 0.02:
        raise GenerationError(
            f"idiomatic fraction {idio.sum() / n_train:.3f} cannot reach target {target:.3f}")
    return counts, idio


@dataclass
class GeneratedCorpus:
    lexicon: list[PieLexiconEntry]
    train: list[SentenceRecord]
    test: list[SentenceRecord]
    pie_free: list[PlainSentence]
    manifest: CorpusManifest
    vocab: Vocabulary


class _SentenceMaker:
    def __init__(self, lexicon, vocab: Vocabulary, rng):
        self.lexicon = lexicon
        self.vocab = vocab
        self.rng = rng
        self.surfaces = {e.surface for e in lexicon}
        self.lengths = sorted({len(s) for s in self.surfaces})
        self.general = np.array(vocab.general_ids)

    def context(self, n_slots: int, cue_pool) -> list[int]:
        rng = self.rng
        n_cue = int(rng.integers(2, min(4, n_slots) + 1))
        slots = [int(t) for t in rng.choice(self.general, size=n_slots)]
        where = rng.choice(n_slots, size=n_cue, replace=False)
        cues = rng.choice(np.asarray(cue_pool), size=n_cue)
        for w, c in zip(where, cues):
            slots[int(w)] = int(c)
        return slots

    def sentence(self, entry: PieLexiconEntry, sense: str):
        pool = self.vocab.cue_ids(entry.group_id) if sense == "idiomatic" else entry.literal_cues
        for _ in range(MAX_RESAMPLE):
            left = int(self.rng.integers(2, 7))
            right = int(self.rng.integers(2, 7))
            ctx = self.context(left + right, pool)
            tokens = ctx[:left] + list(entry.surface) + ctx[left:]
            if not _has_other_surface(tokens, self.surfaces, self.lengths, skip_start=left):
                return tuple(tokens), (left, left + len(entry.surface))
        raise GenerationError(f"could not place PIE {entry.pie_id} without a second PIE occurrence")

    def plain(self) -> tuple[int, ...]:
        # cues come from one coherent pool, as in PIE sentences
        entry = self.lexicon[int(self.rng.integers(0, len(self.lexicon)))]
        if self.rng.random() < 0.5:
            pool = self.vocab.cue_ids(entry.group_id)
        else:
            pool = entry.literal_cues
        for _ in range(MAX_RESAMPLE):
            n = int(self.rng.integers(6, 17))
            tokens = self.context(n, pool)
            if not _has_other_surface(tokens, self.surfaces, self.lengths):
                return tuple(tokens)
        raise GenerationError("could not build a PIE-free sentence")


def generate_corpus(lexicon: list[PieLexiconEntry], n_train: int = 6000, n_test: int = 1200,
                    idiomatic_fraction: float = 0.774, seed: int = 0,
                    vocab: Vocabulary | None = None, n_pie_free: int = 300,
                    min_train_per_pie: int = 8) -> GeneratedCorpus:
    """Build train/test records whose global idiomatic share tracks ``idiomatic_fraction``.

    Every PIE receives at least ``min_train_per_pie`` training sentences, so
    every test PIE also occurs in training. Each PIE contributes at least one
    test sentence of each sense.
    """
    if not 0.0 < idiomatic_fraction < 1.0:
        raise InvalidConfigError("idiomatic_fraction must lie strictly between 0 and 1")
    if min_train_per_pie < 4:
        raise InvalidConfigError("every PIE needs at least 4 training sentences")
    n_pies = len(lexicon)
    n_groups = len({e.group_id for e in lexicon})
    vocab = vocab or default_vocabulary(n_pies, n_groups)
    if n_test < 2 * n_pies:
        raise GenerationError(f"n_test={n_test} too small to give each PIE both senses")

    counts, idio = _allocate_train(lexicon, n_train, idiomatic_fraction, _rng(seed, 2), min_train_per_pie)
    test_counts = 2 + _largest_remainder(n_test - 2 * n_pies, counts.astype(float))
    ratios = np.array([e.idiomaticity_ratio for e in lexicon])
    test_idio = np.clip(np.rint(test_counts * ratios).astype(int), 1, test_counts - 1)

    maker = _SentenceMaker(lexicon, vocab, _rng(seed, 3))

    def build(count_arr, idio_arr, rng):
        plan = []
        for e, n, k in zip(lexicon, count_arr, idio_arr):
            plan += [(e, "idiomatic")] * int(k) + [(e, "literal")] * int(n - k)
        order = rng.permutation(len(plan))
        return [plan[i] for i in order]

    train_plan = build(counts, idio, _rng(seed, 4))
    test_plan = build(test_counts, test_idio, _rng(seed, 5))

    train, test = [], []
    sid = 0
    for split, plan, out in (("train", train_plan, train), ("test", test_plan, test)):
        for entry, sense in plan:
            tokens, span = maker.sentence(entry, sense)
            out.append(SentenceRecord(sid, tokens, entry.pie_id, span, sense, split))
            sid += 1
    pie_free = [PlainSentence(sid + i, maker.plain()) for i in range(n_pie_free)]

    def frac(recs):
        return sum(r.is_idiomatic for r in recs) / len(recs)

    manifest = CorpusManifest(
        seed=seed, n_pies=n_pies, n_groups=n_groups, n_train=n_train, n_test=n_test,
        n_pie_free=n_pie_free, idiomatic_fraction=idiomatic_fraction, vocab=vocab.as_dict(),
        counts={"train": len(train), "test": len(test), "pie_free": len(pie_free),
                "lexicon": n_pies},
        realized_idiomatic_fraction={"train": round(frac(train), 6), "test": round(frac(test), 6)},
    )
    return GeneratedCorpus(lexicon, train, test, pie_free, manifest, vocab)


def generate(seed: int = 0, n_pies: int = 60, n_groups: int = 12, n_train: int = 6000,
             n_test: int = 1200, idiomatic_fraction: float = 0.774, n_pie_free: int = 300) -> GeneratedCorpus:
    """Lexicon plus corpus from one seed; the full pipeline's entry point."""
    vocab = default_vocabulary(n_pies, n_groups)
    lexicon = generate_lexicon(seed, n_pies, n_groups, vocab)
    return generate_corpus(lexicon, n_train, n_test, idiomatic_fraction, seed, vocab, n_pie_free)


def regenerate(manifest: CorpusManifest) -> GeneratedCorpus:
    return generate(manifest.seed, manifest.n_pies, manifest.n_groups, manifest.n_train,
                    manifest.n_test, manifest.idiomatic_fraction, manifest.n_pie_free)
