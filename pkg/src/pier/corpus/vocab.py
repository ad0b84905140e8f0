"""Token-id layout of the synthetic language.

The vocabulary is a pure function of a handful of sizes, so it never needs to
be stored: a manifest's sizes rebuild it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

SPECIALS = ("<pad>", "<bos>", "<eos>", "<mask>")
ANSWERS = ("idiomatic", "literal")

TYPE_CLS_TEMPLATES = (
    'the phrase " [PIE] " is quite [MASK] .',
    'the phrase " [PIE] " is used in its [MASK] sense .',
    'the phrase " [PIE] " is used as the [MASK] expression .',
    'the phrase " [PIE] " is the [MASK] way of saying it .',
    'the phrase " [PIE] " takes on its [MASK] meaning .',
)
DEFN_GEN_TEMPLATES = (
    'the meaning of the phrase " [PIE] " is [MASK] .',
    'the definition of the phrase " [PIE] " is [MASK] .',
    'the phrase " [PIE] " means [MASK] .',
    'the phrase " [PIE] " is defined as [MASK] .',
    'the phrase " [PIE] " is used to express [MASK] .',
)


def _template_words() -> tuple[str, ...]:
    seen: list[str] = []
    for t in TYPE_CLS_TEMPLATES + DEFN_GEN_TEMPLATES:
        for w in t.split():
            if w not in ("[PIE]", "[MASK]") and w not in seen:
                seen.append(w)
    return tuple(seen)


TEMPLATE_WORDS = _template_words()


@dataclass(frozen=True)
class Vocabulary:
    n_general: int
    n_groups: int
    gloss_per_group: int
    cue_per_group: int
    n_literal_cue: int

    @cached_property
    def tokens(self) -> tuple[str, ...]:
        out = list(SPECIALS) + list(ANSWERS) + list(TEMPLATE_WORDS)
        out += [f"w{i}" for i in range(self.n_general)]
        out += [f"g{g}_{j}" for g in range(self.n_groups) for j in range(self.gloss_per_group)]
        out += [f"c{g}_{j}" for g in range(self.n_groups) for j in range(self.cue_per_group)]
        out += [f"l{i}" for i in range(self.n_literal_cue)]
        return tuple(out)

    @cached_property
    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.index[token]

    def ids(self, words) -> list[int]:
        return [self.index[w] for w in words]

    def decode(self, ids) -> list[str]:
        return [self.tokens[i] for i in ids]

    pad = property(lambda self: 0)
    bos = property(lambda self: 1)
    eos = property(lambda self: 2)
    mask = property(lambda self: 3)

    @property
    def idiomatic(self) -> int:
        return self.index["idiomatic"]

    @property
    def literal(self) -> int:
        return self.index["literal"]

    @property
    def general_ids(self) -> range:
        start = self.index["w0"]
        return range(start, start + self.n_general)

    def gloss_ids(self, group: int) -> list[int]:
        start = self.index[f"g{group}_0"]
        return list(range(start, start + self.gloss_per_group))

    def cue_ids(self, group: int) -> list[int]:
        start = self.index[f"c{group}_0"]
        return list(range(start, start + self.cue_per_group))

    @property
    def literal_cue_ids(self) -> range:
        start = self.index["l0"]
        return range(start, start + self.n_literal_cue)

    def template(self, kind: str, index: int) -> list[str]:
        table = TYPE_CLS_TEMPLATES if kind == "type_cls" else DEFN_GEN_TEMPLATES
        return table[index].split()

    def as_dict(self) -> dict:
        return {
            "n_general": self.n_general,
            "n_groups": self.n_groups,
            "gloss_per_group": self.gloss_per_group,
            "cue_per_group": self.cue_per_group,
            "n_literal_cue": self.n_literal_cue,
            "size": len(self),
        }
