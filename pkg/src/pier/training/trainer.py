"""Staged training loop: base pretraining, adapter expert, fusion routing."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..corpus.generate import GeneratedCorpus
from ..corpus.vocab import ANSWERS, SPECIALS
from ..exceptions import DependencyError, DivergenceError, IntegrityError, InvalidConfigError
from ..model.checkpoint import group_checksums, load_into, read_checkpoint, save_checkpoint
from ..model.fused import PARAM_GROUPS, FusedModel
from ..numerics import Adam, backward, get_tape
from .config import STAGE_GROUP, TrainConfig
from .objectives import LossBreakdown, ObjectiveWeights, TargetCache, sequence_ce, total_loss
from .prompts import N_TEMPLATES, assign_prompts, build_prompt, plain_example

# groups copied from the prior checkpoint for each stage
_INHERITED = {"base": ("base",), "adapter": ("base",), "fusion": ("base", "adapters")}
# base pretraining mix: plain copies, noised copies, random-answer prompts
COPY_SHARE, NOISE_SHARE = 0.35, 0.40
MASK_RATE, REPLACE_RATE = 0.15, 0.15
GLOSS_REPEATS = 4
# fine-tuning batches drawn from a pool are length-sorted to cut padding
BUCKET_POOL = 50


def _rng(seed: int, stream: int, epoch: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream, epoch]))


@dataclass
class TrainResult:
    model: FusedModel
    log: list[dict] = field(default_factory=list)
    checksums_before: dict[str, str] = field(default_factory=dict)
    checksums_after: dict[str, str] = field(default_factory=dict)
    checkpoint_path: str | None = None
    digest: str | None = None

    @property
    def loss_decreased(self) -> bool:
        return len(self.log) > 1 and self.log[-1]["total"] < self.log[0]["total"]


def _blocks_of(init) -> dict[str, np.ndarray]:
    if isinstance(init, FusedModel):
        return {n: t.data for n, t in init.named_parameters()}
    path = Path(init)
    if not path.exists():
        raise DependencyError(f"prior-stage checkpoint {path} does not exist")
    return read_checkpoint(path)[2]


def _reference_from(blocks: dict[str, np.ndarray], model: FusedModel) -> FusedModel:
    ref = FusedModel(model.config.replace(variant="base-only"), seed=0)
    load_into(ref, blocks, groups=("base",))
    ref.set_trainable(())
    return ref


def loss_log_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("epoch",) + LossBreakdown.FIELDS)
    for r in rows:
        writer.writerow([r["epoch"]] + [f"{r[f]:.6g}" for f in LossBreakdown.FIELDS])
    return buf.getvalue()


class _Pretraining:
    """Sense-free data for the stand-in base model.

    Each sentence is copied, noised, or wrapped in a prompt whose answer is
    drawn at random (so the base learns the prompt layout, never the sense).
    Noise masks some tokens and swaps others for random ones; since any
    visible token may be wrong, every position has to be encoded in light
    of its context. Definition glosses are copied and noised as well so the
    base can later embed them as idiomatic targets.
    """

    def __init__(self, corpus: GeneratedCorpus):
        self.corpus = corpus
        self.lexicon = {e.pie_id: e for e in corpus.lexicon}
        self.first_word = len(SPECIALS) + len(ANSWERS)

    def _noised(self, tokens, rng) -> tuple[int, ...]:
        u = rng.random(len(tokens))
        swaps = rng.integers(self.first_word, len(self.corpus.vocab), size=len(tokens))
        out = np.where(u < MASK_RATE, self.corpus.vocab.mask,
                       np.where(u < MASK_RATE + REPLACE_RATE, swaps, np.asarray(tokens)))
        return tuple(int(t) for t in out)

    def epoch(self, rng) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        vocab = self.corpus.vocab
        pairs = []
        for rec in self.corpus.train:
            u = rng.random()
            if u < COPY_SHARE:
                pairs.append((rec.tokens, rec.tokens))
            elif u < COPY_SHARE + NOISE_SHARE:
                pairs.append((self._noised(rec.tokens, rng), rec.tokens))
            else:
                entry = self.lexicon[rec.pie_id]
                kind = ("type_cls", "defn_gen")[int(rng.integers(0, 2))]
                coin = int(rng.integers(0, 2))
                if kind == "type_cls":
                    answer = (vocab.idiomatic if coin else vocab.literal,)
                else:
                    answer = entry.definition_gloss if coin else rec.pie_tokens
                pairs.append(build_prompt(rec, kind, int(rng.integers(0, N_TEMPLATES)), entry, vocab, answer))
        for entry in self.corpus.lexicon:
            gloss = tuple(entry.definition_gloss)
            for r in range(GLOSS_REPEATS):
                pairs.append((gloss if r % 2 == 0 else self._noised(gloss, rng), gloss))
        order = rng.permutation(len(pairs))
        return [pairs[i] for i in order]


def _bucketed(items: list, bs: int, rng, length) -> list[list]:
    """Split shuffled ``items`` into batches of similar length, in random batch order."""
    batches = []
    pool = bs * BUCKET_POOL
    for i in range(0, len(items), pool):
        chunk = sorted(items[i:i + pool], key=length)
        batches += [chunk[j:j + bs] for j in range(0, len(chunk), bs)]
    order = rng.permutation(len(batches))
    return [batches[k] for k in order]


def _snapshot(params) -> list[np.ndarray]:
    return [p.data.copy() for p in params]


def train_stage(stage: str, config: TrainConfig, corpus: GeneratedCorpus, seed: int | None = None,
                init=None, reference=None, log_path=None, progress=None) -> TrainResult:
    """Train one stage and return the model with its per-epoch loss log.

    ``init`` is the prior-stage model or checkpoint path (required except for
    base pretraining). ``reference`` supplies the frozen encoder for the
    similarity targets: a model, a checkpoint path, or an already warmed
    TargetCache; it defaults to the base weights inside ``init``. Parameters outside the stage's group are verified
    bit-unchanged at the end. A non-finite loss restores the last good epoch,
    writes it next to ``config.out`` when set, and raises DivergenceError.
    """
    if stage != config.stage:
        config = config.replace(stage=stage)
    seed = config.seed if seed is None else int(seed)
    init = init if init is not None else config.init_checkpoint
    if stage != "base" and init is None:
        raise DependencyError(f"stage {stage!r} needs the prior-stage checkpoint")
    pretrain = stage == "base" and init is None
    if not pretrain and not (config.copy or config.sim or config.prompts):
        raise InvalidConfigError("no objective enabled")

    model = FusedModel(config.model_config(len(corpus.vocab)), seed=seed)
    targets = None
    if init is not None:
        blocks = _blocks_of(init)
        load_into(model, blocks, groups=_INHERITED[stage])
        if not pretrain and config.sim:
            if isinstance(reference, TargetCache):
                targets = reference
            else:
                if reference is not None:
                    ref_model = reference if isinstance(reference, FusedModel) else _reference_from(
                        _blocks_of(reference), model)
                elif config.reference_checkpoint:
                    ref_model = _reference_from(_blocks_of(config.reference_checkpoint), model)
                else:
                    ref_model = _reference_from(blocks, model)
                targets = TargetCache(ref_model, corpus.lexicon).warm(corpus.train)

    params = model.set_trainable((STAGE_GROUP[stage],))
    if not params:
        raise InvalidConfigError(f"stage {stage!r} has no trainable parameters")
    before = group_checksums(model)
    opt = Adam(params, lr=config.lr)
    lexicon = {e.pie_id: e for e in corpus.lexicon}
    weights = ObjectiveWeights(copy=config.copy, sim=config.sim, ce_weight=config.ce_weight,
                               sim_weight=config.sim_weight,
                               force_sense="idiomatic" if stage == "adapter" else None)
    route = model.default_route
    data = _Pretraining(corpus) if pretrain else None
    bs = config.batch_size
    log: list[dict] = []
    last_good = _snapshot(params)
    get_tape().clear()

    for epoch in range(1, config.epochs + 1):
        rng = _rng(seed, 11, epoch)
        if pretrain:
            # length-sorted batches group pairs by task and stall copy learning from scratch
            pairs = data.epoch(rng)
            batches = [pairs[j:j + bs] for j in range(0, len(pairs), bs)]
        else:
            order = rng.permutation(len(corpus.train))
            records = [corpus.train[i] for i in order]
            if config.prompts:
                examples = assign_prompts(records, rng, lexicon, corpus.vocab, config.prompt_mode, config.prompts)
            else:
                examples = [plain_example(r) for r in records]
            batches = _bucketed(examples, bs, rng, lambda e: len(e.source) + len(e.target_sequence))
        sums = dict.fromkeys(LossBreakdown.FIELDS, 0.0)
        n_batches = 0
        for i, chunk in enumerate(batches):
            if pretrain:
                _, loss = sequence_ce(model, [s for s, _ in chunk], [t for _, t in chunk], route)
                v = float(loss.item())
                br = LossBreakdown(v, 0.0, 0.0, 0.0, v)
            else:
                loss, br = total_loss(model, chunk, weights, targets, route)
            if not np.isfinite(br.total):
                get_tape().clear()
                for p, d in zip(params, last_good):
                    p.data = d
                saved = None
                if config.out:
                    saved = str(config.out) + ".last_good"
                    save_checkpoint(model, saved, meta={"stage": stage, "epoch": str(epoch - 1)})
                raise DivergenceError(f"non-finite loss in epoch {epoch}, batch {i}", last_good=saved)
            backward(loss)
            opt.step()
            opt.zero_grad()
            for f in LossBreakdown.FIELDS:
                sums[f] += getattr(br, f)
            n_batches += 1
        row = {"epoch": epoch, **{f: sums[f] / n_batches for f in LossBreakdown.FIELDS}}
        log.append(row)
        last_good = _snapshot(params)
        if progress is not None:
            progress(row)

    after = group_checksums(model)
    changed_frozen = [g for g in PARAM_GROUPS if g != STAGE_GROUP[stage] and before[g] != after[g]]
    if changed_frozen:
        raise IntegrityError(f"frozen parameter groups changed during {stage} training: {changed_frozen}")
    model.set_trainable(())
    result = TrainResult(model, log, before, after)
    meta = {"stage": stage, "seed": str(seed), "epochs": str(config.epochs)}
    if config.out:
        result.checkpoint_path = str(config.out)
        result.digest = save_checkpoint(model, config.out, meta=meta)
    if log_path is not None:
        tmp = Path(str(log_path) + ".tmp")
        tmp.write_text(loss_log_csv(log))
        os.replace(tmp, log_path)
    return result
