"""Deterministic synthetic text corpus for desk-scale runs.

Sentences are drawn from an embedded ~700-word lexicon with a Zipf-like
unigram distribution (the list is roughly frequency-ordered) and
uniform lengths, so the corpus has a learnable lexicon and realistic
word-frequency skew without shipping any external data.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .corpus import Transcript, normalize
from .rng import Rng

ZIPF_SHIFT = 2.7


def lexicon() -> list[str]:
    """Embedded word list, deduplicated, order of first occurrence."""
    text = resources.files("dsr.data").joinpath("words.txt").read_text("utf-8")
    seen = set()
    words = []
    for w in text.split():
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def make_desk_corpus(
    n_sentences: int,
    seed: int,
    min_words: int = 3,
    max_words: int = 10,
) -> list[Transcript]:
    words = lexicon()
    ranks = np.arange(len(words), dtype=np.float64)
    p = 1.0 / (ranks + ZIPF_SHIFT)
    p /= p.sum()
    cdf = np.cumsum(p)
    cdf[-1] = 1.0

    rng = Rng(seed).derive("desk-corpus")
    out = []
    for i in range(n_sentences):
        n = min_words + rng.integers(max_words - min_words + 1)
        sent = " ".join(words[rng.choice_weighted(cdf)] for _ in range(n))
        out.append(Transcript(normalize(sent), i))
    return out


def write_corpus(transcripts: list[Transcript], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in transcripts:
            f.write(t.text + "\n")
