"""JSON-lines persistence for lexicon, sentence and PIE-free files."""

from __future__ import annotations

import json
import os
from pathlib import Path

from ..exceptions import DependencyError, ParseError, VersionError
from .records import CorpusManifest, PieLexiconEntry, PlainSentence, SentenceRecord
from .vocab import Vocabulary

SCHEMA_VERSION = 1
_KINDS = {
    "sentences": SentenceRecord,
    "lexicon": PieLexiconEntry,
    "pie_free": PlainSentence,
}
_KIND_OF = {cls: kind for kind, cls in _KINDS.items()}


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_jsonl(records, path) -> None:
    """Write a header line followed by one JSON object per record."""
    records = list(records)
    kind = _KIND_OF[type(records[0])] if records else "sentences"
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps({"kind": kind, "schema_version": SCHEMA_VERSION}) + "\n")
        for r in records:
            fh.write(_dumps(r.to_json()) + "\n")
    os.replace(tmp, path)


def load_jsonl(path) -> list:
    """Inverse of :func:`save_jsonl`. An empty file loads as an empty list."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return []
    if not text.endswith("\n"):
        # every writer terminates lines; a missing newline means a cut-off file
        raise ParseError("file is truncated (last line has no terminator)", line=text.count("\n") + 1)
    lines = text.split("\n")[:-1]
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed header: {exc.msg}", line=1) from None
    if not isinstance(header, dict) or "schema_version" not in header:
        raise ParseError("missing schema header", line=1)
    if header["schema_version"] != SCHEMA_VERSION:
        raise VersionError(f"schema version {header['schema_version']} != {SCHEMA_VERSION}")
    cls = _KINDS.get(header.get("kind"))
    if cls is None:
        raise ParseError(f"unknown record kind {header.get('kind')!r}", line=1)
    out = []
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            out.append(cls.from_json(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON: {exc.msg}", line=no) from None
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad record: {exc}", line=no) from None
    return out


def save_manifest(manifest: CorpusManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_manifest(path) -> CorpusManifest:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("schema_version") != SCHEMA_VERSION:
        raise VersionError(f"manifest schema version {d.get('schema_version')} != {SCHEMA_VERSION}")
    return CorpusManifest.from_json(d)


CORPUS_FILES = ("manifest.json", "lexicon.jsonl", "train.jsonl", "test.jsonl", "pie_free.jsonl")


def save_corpus(corpus, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_manifest(corpus.manifest, directory / "manifest.json")
    save_jsonl(corpus.lexicon, directory / "lexicon.jsonl")
    save_jsonl(corpus.train, directory / "train.jsonl")
    save_jsonl(corpus.test, directory / "test.jsonl")
    save_jsonl(corpus.pie_free, directory / "pie_free.jsonl")
    return [directory / f for f in CORPUS_FILES]


def vocabulary_from_manifest(manifest: CorpusManifest) -> Vocabulary:
    v = manifest.vocab
    return Vocabulary(v["n_general"], v["n_groups"], v["gloss_per_group"], v["cue_per_group"], v["n_literal_cue"])


def load_corpus(directory):
    from .generate import GeneratedCorpus

    directory = Path(directory)
    missing = [f for f in CORPUS_FILES if not (directory / f).exists()]
    if missing:
        raise DependencyError(f"corpus directory {directory} lacks {', '.join(missing)}")
    manifest = load_manifest(directory / "manifest.json")
    return GeneratedCorpus(
        lexicon=load_jsonl(directory / "lexicon.jsonl"),
        train=load_jsonl(directory / "train.jsonl"),
        test=load_jsonl(directory / "test.jsonl"),
        pie_free=load_jsonl(directory / "pie_free.jsonl"),
        manifest=manifest,
        vocab=vocabulary_from_manifest(manifest),
    )
