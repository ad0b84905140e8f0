from __future__ import annotations

from dataclasses import dataclass, field

SENSES = ("idiomatic", "literal")
SPLITS = ("train", "test")


@dataclass(frozen=True)
class PieLexiconEntry:
    pie_id: int
    surface: tuple[int, ...]
    definition_gloss: tuple[int, ...]
    group_id: int
    idiomaticity_ratio: float
    literal_cues: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "pie_id": self.pie_id,
            "surface": list(self.surface),
            "gloss": list(self.definition_gloss),
            "group_id": self.group_id,
            "idiomaticity_ratio": self.idiomaticity_ratio,
            "literal_cues": list(self.literal_cues),
        }

    @classmethod
    def from_json(cls, d: dict) -> "PieLexiconEntry":
        return cls(
            pie_id=int(d["pie_id"]),
            surface=tuple(int(t) for t in d["surface"]),
            definition_gloss=tuple(int(t) for t in d["gloss"]),
            group_id=int(d["group_id"]),
            idiomaticity_ratio=float(d["idiomaticity_ratio"]),
            literal_cues=tuple(int(t) for t in d.get("literal_cues", ())),
        )


@dataclass(frozen=True)
class SentenceRecord:
    sentence_id: int
    tokens: tuple[int, ...]
    pie_id: int
    span: tuple[int, int]
    sense: str
    split: str = "train"

    def __post_init__(self):
        start, end = self.span
        if not 0 <= start < end <= len(self.tokens):
            raise ValueError(f"span {self.span} outside sentence of length {len(self.tokens)}")
        if self.sense not in SENSES:
            raise ValueError(f"unknown sense {self.sense!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    @property
    def is_idiomatic(self) -> bool:
        return self.sense == "idiomatic"

    @property
    def pie_tokens(self) -> tuple[int, ...]:
        return self.tokens[self.span[0]:self.span[1]]

    def to_json(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "tokens": list(self.tokens),
            "pie_id": self.pie_id,
            "span": list(self.span),
            "sense": self.sense,
            "split": self.split,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SentenceRecord":
        return cls(
            sentence_id=int(d["sentence_id"]),
            tokens=tuple(int(t) for t in d["tokens"]),
            pie_id=int(d["pie_id"]),
            span=(int(d["span"][0]), int(d["span"][1])),
            sense=d["sense"],
            split=d.get("split", "train"),
        )


@dataclass(frozen=True)
class PlainSentence:
    """A sentence without any PIE, used for the reconstruction check."""

    sentence_id: int
    tokens: tuple[int, ...]

    def to_json(self) -> dict:
        return {"sentence_id": self.sentence_id, "tokens": list(self.tokens)}

    @classmethod
    def from_json(cls, d: dict) -> "PlainSentence":
        return cls(int(d["sentence_id"]), tuple(int(t) for t in d["tokens"]))


@dataclass
class CorpusManifest:
    seed: int
    n_pies: int
    n_groups: int
    n_train: int
    n_test: int
    n_pie_free: int
    idiomatic_fraction: float
    vocab: dict
    counts: dict = field(default_factory=dict)
    realized_idiomatic_fraction: dict = field(default_factory=dict)
    schema_version: int = 1

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "n_pies": self.n_pies,
            "n_groups": self.n_groups,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "n_pie_free": self.n_pie_free,
            "idiomatic_fraction": self.idiomatic_fraction,
            "vocab": self.vocab,
            "counts": self.counts,
            "realized_idiomatic_fraction": self.realized_idiomatic_fraction,
        }

    @classmethod
    def from_json(cls, d: dict) -> "CorpusManifest":
        return cls(
            seed=d["seed"], n_pies=d["n_pies"], n_groups=d["n_groups"], n_train=d["n_train"],
            n_test=d["n_test"], n_pie_free=d["n_pie_free"],
            idiomatic_fraction=d["idiomatic_fraction"], vocab=d["vocab"],
            counts=d.get("counts", {}),
            realized_idiomatic_fraction=d.get("realized_idiomatic_fraction", {}),
            schema_version=d.get("schema_version", 1),
        )
