"""Synthetic PIE corpus: lexicon, sentences, splits and file formats."""

from .generate import GeneratedCorpus, default_vocabulary, generate, generate_corpus, generate_lexicon, regenerate
from .io import load_corpus, load_jsonl, load_manifest, save_corpus, save_jsonl, save_manifest
from .records import CorpusManifest, PieLexiconEntry, PlainSentence, SentenceRecord
from .vocab import Vocabulary

__all__ = [
    "CorpusManifest", "GeneratedCorpus", "PieLexiconEntry", "PlainSentence", "SentenceRecord",
    "Vocabulary", "default_vocabulary", "generate", "generate_corpus", "generate_lexicon",
    "load_corpus", "load_jsonl", "load_manifest", "regenerate", "save_corpus", "save_jsonl",
    "save_manifest",
]
