"""MetricsReport: canonical JSON and the per-PIE CSV table."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..corpus.records import SentenceRecord
from ..exceptions import DegenerateInputError, InvalidInputError
from .embeddings import EmbeddingSet
from .metrics import _cos, pearson_correlation

HIGH_SIM = 0.7
SKEW_HIGH, SKEW_LOW = 0.85, 0.15
REPORT_SCHEMA = 1
PER_PIE_COLUMNS = (
    "pie_id", "group_id", "n_train", "n_train_idiomatic", "skew_ratio", "inter_type_sim",
    "n_test_idiomatic", "n_test_literal", "sense_acc", "span_seq_acc", "high_sim", "skewed",
)


def is_skewed(ratio: float) -> bool:
    return ratio > SKEW_HIGH or ratio < SKEW_LOW


def per_pie_report(embedding_set: EmbeddingSet, train: Sequence[SentenceRecord],
                   sense_acc: Mapping[int, float] | None = None,
                   span_acc: Mapping[int, float] | None = None,
                   groups: Mapping[int, int] | None = None) -> list[dict]:
    """One row per PIE in ``embedding_set``.

    Skew ratio is the idiomatic share of the PIE's training sentences. A PIE
    is flagged ``high_sim`` when its inter-type similarity exceeds 0.7 and
    ``skewed`` when its ratio is above 0.85 or below 0.15.
    """
    n_train: dict[int, int] = {}
    n_idio: dict[int, int] = {}
    for r in train:
        n_train[r.pie_id] = n_train.get(r.pie_id, 0) + 1
        n_idio[r.pie_id] = n_idio.get(r.pie_id, 0) + int(r.is_idiomatic)
    rows = []
    for pid, e in sorted(embedding_set.items()):
        total = n_train.get(pid, 0)
        ratio = n_idio.get(pid, 0) / total if total else None
        sim = _cos(e.idiomatic, e.literal) if e.idiomatic is not None and e.literal is not None else None
        rows.append({
            "pie_id": pid,
            "group_id": None if groups is None else groups.get(pid),
            "n_train": total,
            "n_train_idiomatic": n_idio.get(pid, 0),
            "skew_ratio": ratio,
            "inter_type_sim": sim,
            "n_test_idiomatic": e.n_idiomatic,
            "n_test_literal": e.n_literal,
            "sense_acc": None if sense_acc is None else sense_acc.get(pid),
            "span_seq_acc": None if span_acc is None else span_acc.get(pid),
            "high_sim": sim is not None and sim > HIGH_SIM,
            "skewed": ratio is not None and is_skewed(ratio),
        })
    return rows


def skew_analysis(rows: Sequence[dict]) -> dict:
    """Mean inter-type similarity of skewed versus balanced PIEs."""
    sk = [r["inter_type_sim"] for r in rows if r["inter_type_sim"] is not None and r["skewed"]]
    bal = [r["inter_type_sim"] for r in rows
           if r["inter_type_sim"] is not None and not r["skewed"] and r["skew_ratio"] is not None]
    return {
        "n_skewed": len(sk), "n_balanced": len(bal),
        "skewed_mean_sim": float(np.mean(sk)) if sk else None,
        "balanced_mean_sim": float(np.mean(bal)) if bal else None,
        "n_high_sim": sum(bool(r["high_sim"]) for r in rows),
        "n_high_sim_and_skewed": sum(bool(r["high_sim"] and r["skewed"]) for r in rows),
    }


def training_size_correlations(rows: Sequence[dict]) -> dict:
    """Pearson r (and t-approximate p) between per-PIE training count and each per-PIE score."""
    out = {}
    for col in ("inter_type_sim", "sense_acc", "span_seq_acc"):
        pairs = [(r["n_train"], r[col]) for r in rows if r[col] is not None]
        if len(pairs) < 3:
            out[col] = None
            continue
        xs, ys = zip(*pairs)
        try:
            r, p = pearson_correlation(xs, ys)
        except DegenerateInputError:
            out[col] = None
            continue
        out[col] = {"r": r, "p_value": p, "n": len(pairs)}
    return out


def _canon(x):
    if isinstance(x, dict):
        return {str(k): _canon(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_canon(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            raise InvalidInputError("non-finite value in report")
        return float(f"{x:.6g}")
    return x


@dataclass
class MetricsReport:
    h_score: float
    inter_group_cos_dist: float
    inter_type_cos_sim: float
    senseclf: dict
    spandet: dict
    reconstruction_acc: float
    per_pie: list = field(default_factory=list)
    skew: dict = field(default_factory=dict)
    correlations: dict = field(default_factory=dict)
    config_fingerprint: str = ""
    seed: int = 0
    schema_version: int = REPORT_SCHEMA

    def __post_init__(self):
        for name in ("h_score", "reconstruction_acc"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"{name}={v} outside [0, 1]")
        if not -1.0 <= self.inter_type_cos_sim <= 1.0:
            raise InvalidInputError("inter_type_cos_sim outside [-1, 1]")
        if not 0.0 <= self.inter_group_cos_dist <= 2.0:
            raise InvalidInputError("inter_group_cos_dist outside [0, 2]")

    def to_dict(self) -> dict:
        return _canon(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))

    def per_pie_csv(self) -> str:
        return per_pie_csv(self.per_pie)


def per_pie_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PER_PIE_COLUMNS)
    for r in rows:
        cells = []
        for c in PER_PIE_COLUMNS:
            v = _canon(r.get(c))
            cells.append("" if v is None else (int(v) if isinstance(v, bool) else v))
        w.writerow(cells)
    return buf.getvalue()
