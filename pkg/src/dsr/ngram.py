"""Word-level n-gram LM with absolute discounting and interpolation.

The conditional for a k-gram context is

    p_k(w | ctx) = max(c(ctx,w) - D, 0) / c(ctx)
                   + (D * N1+(ctx) / c(ctx)) * p_{k-1}(w | ctx[1:])

recursing to a uniform distribution over the event space (observed word
types + EOS + UNK), so every word sequence over the closed vocabulary
plus UNK has strictly positive probability and each context's
conditional sums to one.  Unseen contexts defer entirely to the shorter
context.  Sentences are padded with BOS contexts; EOS is a regular
outcome.  Natural log throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .corpus import Transcript

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


@dataclass
class NGramLM:
    order: int
    discount: float
    vocab: set[str]  # outcome types seen in training (includes EOS)
    probs: dict[tuple, float]  # full interpolated p(ngram[-1] | ngram[:-1])
    backoffs: dict[tuple, float]  # context -> D * N1+ / c(ctx)
    event_size: int = 0

    def __post_init__(self):
        if not self.event_size:
            self.event_size = len(self.vocab) + 1  # + UNK

    def _map(self, w: str) -> str:
        return w if w in self.vocab else UNK

    def _p(self, word: str, context: tuple) -> float:
        while True:
            ngram = context + (word,)
            if ngram in self.probs:
                return self.probs[ngram]
            if context in self.backoffs:
                shorter = self._p(word, context[1:]) if context else 1.0 / self.event_size
                return self.backoffs[context] * shorter
            if not context:
                # word never observed at all: pure uniform base via the
                # empty-context backoff (always present after training)
                return self.backoffs[()] * (1.0 / self.event_size)
            context = context[1:]

    def word_logprob(self, context_words: list[str], word: str) -> float:
        """log p(word | context), BOS-padded, OOV words mapped to UNK."""
        ctx = [self._map(w) for w in context_words][-(self.order - 1):] if self.order > 1 else []
        pad = (BOS,) * (self.order - 1 - len(ctx))
        return math.log(self._p(self._map(word), pad + tuple(ctx)))

    def logprob(self, words: list[str]) -> float:
        """Sum of word log-probs including the EOS term.  An empty list
        scores bare EOS (needed for empty hypotheses)."""
        total = 0.0
        for i, w in enumerate(words):
            total += self.word_logprob(words[:i], w)
        return total + self.word_logprob(words, EOS)


def train_ngram(corpus: list[Transcript], order: int, discount: float = 0.75) -> NGramLM:
    if not corpus:
        raise ValueError("empty corpus")
    if not 1 <= order <= 5:
        raise ValueError("order must be in [1, 5]")
    if not 0.0 < discount < 1.0:
        raise ValueError("discount must be in (0, 1)")

    counts: dict[tuple, int] = {}
    ctx_counts: dict[tuple, int] = {}
    followers: dict[tuple, set] = {}
    vocab: set[str] = set()

    for t in corpus:
        tokens = t.text.split() + [EOS]
        padded = [BOS] * (order - 1) + tokens
        vocab.update(tokens)
        for i in range(order - 1, len(padded)):
            w = padded[i]
            for k in range(1, order + 1):
                ctx = tuple(padded[i - k + 1 : i])
                ngram = ctx + (w,)
                counts[ngram] = counts.get(ngram, 0) + 1
                ctx_counts[ctx] = ctx_counts.get(ctx, 0) + 1
                followers.setdefault(ctx, set()).add(w)

    event_size = len(vocab) + 1
    backoffs = {
        ctx: discount * len(followers[ctx]) / ctx_counts[ctx] for ctx in ctx_counts
    }

    # interpolated probabilities, built shortest context first so the
    # recursion below always finds the lower order already filled
    probs: dict[tuple, float] = {}

    def lower(word: str, ctx: tuple) -> float:
        while True:
            ngram = ctx + (word,)
            if ngram in probs:
                return probs[ngram]
            if ctx in backoffs:
                shorter = lower(word, ctx[1:]) if ctx else 1.0 / event_size
                return backoffs[ctx] * shorter
            if not ctx:
                return backoffs[()] * (1.0 / event_size)
            ctx = ctx[1:]

    for ngram in sorted(counts, key=len):
        ctx, w = ngram[:-1], ngram[-1]
        p = max(counts[ngram] - discount, 0.0) / ctx_counts[ctx]
        base = (1.0 / event_size) if not ctx else lower(w, ctx[1:])
        probs[ngram] = p + backoffs[ctx] * base

    return NGramLM(order, discount, vocab, probs, backoffs, event_size)


def lm_logprob(lm: NGramLM, words: list[str]) -> float:
    if not words:
        raise ValueError("words must be nonempty")
    return lm.logprob(words)


def perplexity(lm: NGramLM, corpus: list[Transcript]) -> float:
    """exp(-mean token logprob), EOS counted as a token."""
    total = 0.0
    tokens = 0
    for t in corpus:
        words = t.text.split()
        total += lm.logprob(words)
        tokens += len(words) + 1
    if tokens == 0:
        raise ValueError("empty corpus")
    return math.exp(-total / tokens)


def save_ngram(lm: NGramLM, path) -> None:
    """Sorted text format: header, then one line per entry.

    `p <k> <w1..wk> <natural logprob>` and `b <k> <ctx> <backoff>`;
    floats via repr for exact round-trip."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"dsr-ngram 1\norder {lm.order}\ndiscount {lm.discount!r}\n")
        f.write(f"events {lm.event_size}\nvocab {len(lm.vocab)}\n")
        for w in sorted(lm.vocab):
            f.write(f"v {w}\n")
        for ngram in sorted(lm.probs):
            f.write(f"p {len(ngram)} {' '.join(ngram)} {lm.probs[ngram]!r}\n")
        for ctx in sorted(lm.backoffs):
            body = (" " + " ".join(ctx)) if ctx else ""
            f.write(f"b {len(ctx)}{body} {lm.backoffs[ctx]!r}\n")


def load_ngram(path) -> NGramLM:
    probs: dict[tuple, float] = {}
    backoffs: dict[tuple, float] = {}
    vocab: set[str] = set()
    order = discount = events = None
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "dsr-ngram 1":
            raise ValueError(f"{path}: not a dsr-ngram file")
        for line in f:
            parts = line.rstrip("\n").split(" ")
            kind = parts[0]
            if kind == "order":
                order = int(parts[1])
            elif kind == "discount":
                discount = float(parts[1])
            elif kind == "events":
                events = int(parts[1])
            elif kind == "vocab":
                pass
            elif kind == "v":
                vocab.add(parts[1])
            elif kind == "p":
                k = int(parts[1])
                probs[tuple(parts[2 : 2 + k])] = float(parts[2 + k])
            elif kind == "b":
                k = int(parts[1])
                backoffs[tuple(parts[2 : 2 + k])] = float(parts[2 + k])
    if order is None or discount is None or events is None:
        raise ValueError(f"{path}: incomplete header")
    return NGramLM(order, discount, vocab, probs, backoffs, events)
