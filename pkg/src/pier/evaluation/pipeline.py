"""The full evaluation protocol for one trained model."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..corpus.generate import GeneratedCorpus
from ..model.fused import EOS, FusedModel, pad_batch
from ..numerics import no_grad
from .clustering import agglomerative_cluster, homogeneity_score
from .embeddings import embedding_set_from, pooled_spans, span_labels, token_embeddings
from .metrics import (
    binary_scores,
    mean_inter_group_cosine_distance,
    mean_inter_type_cosine_similarity,
    sequence_accuracy,
    token_recall,
)
from .probes import fit_sense_probes, fit_span_probes
from .report import MetricsReport, per_pie_report, skew_analysis, training_size_correlations

PROBE_SEED_STREAM = 101


@dataclass(frozen=True)
class ProbeSchedule:
    sense_epochs: int = 55
    sense_batch_size: int = 32
    span_epochs: int = 100
    span_batch_size: int = 16
    lr: float = 1e-3


def reconstruction_accuracy(model: FusedModel, sentences: Sequence, route: str | None = None,
                            batch_size: int = 64) -> float:
    """Teacher-forced argmax accuracy over every copy target token, end marker included."""
    correct = total = 0
    with no_grad():
        for i in range(0, len(sentences), batch_size):
            toks = [list(s.tokens if hasattr(s, "tokens") else s) for s in sentences[i:i + batch_size]]
            _, logits, tgt_out, tgt_mask = model.forward(toks, toks, route)
            pred = logits.data.argmax(axis=-1)
            correct += int(((pred == tgt_out) & tgt_mask).sum())
            total += int(tgt_mask.sum())
    return correct / total if total else 0.0


def fingerprint(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _per_pie_mean(pie_ids, values) -> dict[int, float]:
    acc: dict[int, list] = {}
    for p, v in zip(pie_ids, values):
        acc.setdefault(int(p), []).append(float(v))
    return {p: float(np.mean(v)) for p, v in sorted(acc.items())}


@dataclass
class _Views:
    tok_train: list
    tok_test: list
    pie_train: np.ndarray
    pie_test: np.ndarray


def _views(model: FusedModel, corpus: GeneratedCorpus, route: str | None) -> _Views:
    tok_train = token_embeddings(model, corpus.train, route)
    tok_test = token_embeddings(model, corpus.test, route)
    return _Views(tok_train, tok_test, pooled_spans(tok_train, corpus.train), pooled_spans(tok_test, corpus.test))


def probe_seed_for(seed: int) -> int:
    return int(np.random.SeedSequence([int(seed), PROBE_SEED_STREAM]).generate_state(1)[0])


def evaluate_models(models: Sequence[tuple[FusedModel, str | None]], corpus: GeneratedCorpus, seed: int = 0,
                    schedule: ProbeSchedule = ProbeSchedule(),
                    configs: Sequence[dict | None] | None = None) -> list[MetricsReport]:
    """Evaluate several (model, route) pairs under one seed.

    Probes for all models train side by side; each report equals the one
    ``evaluate_model`` gives for that model alone.
    """
    if not models:
        raise ValueError("no models to evaluate")
    configs = list(configs) if configs is not None else [None] * len(models)
    if len(configs) != len(models):
        raise ValueError("one config per model expected")
    probe_seed = probe_seed_for(seed)
    train, test = corpus.train, corpus.test
    views = [_views(m, corpus, r) for m, r in models]

    y_train = np.array([r.is_idiomatic for r in train], dtype=np.int64)
    y_test = np.array([r.is_idiomatic for r in test], dtype=np.int64)
    sense_probes = fit_sense_probes([v.pie_train for v in views], y_train, schedule.sense_epochs,
                                    schedule.sense_batch_size, schedule.lr, probe_seed)
    span_probes = fit_span_probes([v.tok_train for v in views], span_labels(train), schedule.span_epochs,
                                  schedule.span_batch_size, schedule.lr, probe_seed + 1)
    gold = span_labels(test)
    groups = {e.pie_id: e.group_id for e in corpus.lexicon}
    pie_ids = [r.pie_id for r in test]

    reports = []
    for (model, route), v, sense, span, config in zip(models, views, sense_probes, span_probes, configs):
        emb = embedding_set_from(v.pie_test, test)
        with_idio = [pid for pid, e in emb.items() if e.idiomatic is not None]
        idio_mat = np.stack([emb[p].idiomatic for p in with_idio])
        truth = [groups[p] for p in with_idio]
        k = min(len(set(truth)), len(with_idio))
        clusters = agglomerative_cluster(idio_mat, k, item_ids=with_idio)

        sense_pred = sense.predict(v.pie_test)
        span_pred = span.predict(v.tok_test)
        sense_by_pie = _per_pie_mean(pie_ids, sense_pred == y_test)
        span_by_pie = _per_pie_mean(pie_ids, [np.array_equal(p, g) for p, g in zip(span_pred, gold)])
        rows = per_pie_report(emb, train, sense_by_pie, span_by_pie, groups)
        reports.append(MetricsReport(
            h_score=homogeneity_score(clusters, truth),
            inter_group_cos_dist=mean_inter_group_cosine_distance(idio_mat, truth),
            inter_type_cos_sim=mean_inter_type_cosine_similarity(emb),
            senseclf=binary_scores(sense_pred, y_test),
            spandet={"seq_acc": sequence_accuracy(span_pred, gold), "token_recall": token_recall(span_pred, gold)},
            reconstruction_acc=reconstruction_accuracy(model, corpus.pie_free, route),
            per_pie=rows,
            skew=skew_analysis(rows),
            correlations=training_size_correlations(rows),
            config_fingerprint=fingerprint(config or {}),
            seed=int(seed),
        ))
    return reports


def evaluate_model(model: FusedModel, corpus: GeneratedCorpus, seed: int = 0, route: str | None = None,
                   schedule: ProbeSchedule = ProbeSchedule(), config: dict | None = None) -> MetricsReport:
    """Intrinsic geometry, both probes and the reconstruction check on one frozen model."""
    return evaluate_models([(model, route)], corpus, seed, schedule, [config])[0]
