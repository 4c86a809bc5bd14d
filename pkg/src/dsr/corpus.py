"""Clean-text corpus handling: a fixed character alphabet, line-based
loading with normalization, and seeded train/validation/test splitting.

The text alphabet is 26 letters + apostrophe + space.  The CTC blank and
the denoiser's control tokens live in two separate index spaces that
share the character prefix:

    emission axis:  chars[0..27], blank          (28 + 1 columns)
    denoiser axis:  chars[0..27], eos, bos, pad  (28 + 3 tokens)

(EOS directly after the characters, so the denoiser's output classes
chars + EOS are ids 0..28.)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

APOSTROPHE = "'"
TEXT_CHARS = tuple("abcdefghijklmnopqrstuvwxyz" + APOSTROPHE + " ")

# Fixed normalization table for symbols outside the alphabet.  Values are
# replacement strings ("" deletes).  Anything absent here (digits, most
# unicode) rejects the whole line so corpus statistics stay auditable.
CHAR_MAP = {
    "\t": " ",
    " ": " ",
    "‘": APOSTROPHE,
    "’": APOSTROPHE,
    "`": APOSTROPHE,
    "-": " ",
    "–": " ",
    "—": " ",
    "_": " ",
    "/": " ",
    ".": "",
    ",": "",
    ";": "",
    ":": "",
    "!": "",
    "?": "",
    '"': "",
    "(": "",
    ")": "",
    "[": "",
    "]": "",
}


class Rejected(ValueError):
    """Line contains a symbol with no entry in the normalization table."""

    def __init__(self, line: str, symbol: str | None):
        self.line = line
        self.symbol = symbol
        shown = repr(symbol) if symbol is not None else "empty after normalization"
        super().__init__(f"unmappable line ({shown}): {line!r}")


class EmptyCorpus(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Shared index space: dense char indices, blank last on the emission
    axis, control tokens appended on the denoiser axis."""

    chars: tuple[str, ...] = TEXT_CHARS

    def __post_init__(self):
        if len(set(self.chars)) != len(self.chars):
            raise ValueError("duplicate symbols in vocabulary")

    @property
    def char_to_id(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.chars)}

    @property
    def blank_id(self) -> int:
        return len(self.chars)

    @property
    def n_emission(self) -> int:
        """Columns of an emission matrix: chars + blank."""
        return len(self.chars) + 1

    @property
    def eos_id(self) -> int:
        return len(self.chars)

    @property
    def bos_id(self) -> int:
        return len(self.chars) + 1

    @property
    def pad_id(self) -> int:
        return len(self.chars) + 2

    @property
    def n_dlm(self) -> int:
        """Denoiser token-space size: chars + bos + eos + pad."""
        return len(self.chars) + 3

    def encode(self, text: str) -> np.ndarray:
        table = self.char_to_id
        try:
            return np.array([table[c] for c in text], dtype=np.int32)
        except KeyError as e:
            raise ValueError(f"symbol outside vocabulary: {e.args[0]!r}") from None

    def decode(self, ids) -> str:
        n = len(self.chars)
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < n:
                raise ValueError(f"index {i} is not a text symbol")
            out.append(self.chars[i])
        return "".join(out)


DEFAULT_VOCAB = Vocabulary()


@dataclass(frozen=True)
class Transcript:
    text: str
    id: int


@dataclass
class CorpusSplit:
    train: list[Transcript]
    validation: list[Transcript]
    test: list[Transcript]
    seed: int
    fractions: tuple[float, float, float] = (0.0, 0.0, 0.0)


def normalize(raw: str, vocab: Vocabulary = DEFAULT_VOCAB) -> str:
    """Lowercase, map punctuation by the fixed table, collapse whitespace.

    Raises Rejected for lines containing symbols absent from both the
    alphabet and the table, and for lines that normalize to nothing.
    """
    allowed = set(vocab.chars)
    out = []
    for c in raw.lower():
        if c in allowed:
            out.append(c)
        elif c in CHAR_MAP:
            out.append(CHAR_MAP[c])
        elif c == "\n" or c == "\r":
            out.append(" ")
        else:
            raise Rejected(raw, c)
    text = " ".join("".join(out).split())
    if not text:
        raise Rejected(raw, None)
    return text


def load_corpus(path, vocab: Vocabulary = DEFAULT_VOCAB) -> tuple[list[Transcript], int]:
    """Load one-sentence-per-line text; returns (transcripts, n_rejected).

    Ids are line numbers (0-based).  Raises EmptyCorpus if nothing survives.
    """
    transcripts: list[Transcript] = []
    rejected = 0
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            try:
                transcripts.append(Transcript(normalize(line, vocab), lineno))
            except Rejected:
                rejected += 1
    if not transcripts:
        raise EmptyCorpus(f"no usable lines in {path}")
    return transcripts, rejected


def split_corpus(
    corpus: list[Transcript],
    fractions: tuple[float, float, float],
    seed: int,
) -> CorpusSplit:
    """Seed-deterministic disjoint partition, sizes by largest remainder
    (each within one item of the requested fraction)."""
    if any(f <= 0 for f in fractions):
        raise ValueError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    n = len(corpus)
    if n < len(fractions):
        raise ValueError(f"{n} sentences cannot fill {len(fractions)} splits")

    order = list(range(n))
    Rng(seed).derive("corpus-split").shuffle(order)

    exact = [f * n for f in fractions]
    sizes = [int(x) for x in exact]
    remainders = sorted(range(3), key=lambda i: exact[i] - sizes[i], reverse=True)
    for i in remainders[: n - sum(sizes)]:
        sizes[i] += 1
    for i in range(3):  # no split may come out empty
        if sizes[i] == 0:
            donor = max(range(3), key=lambda j: sizes[j])
            sizes[donor] -= 1
            sizes[i] += 1

    parts = []
    start = 0
    for s in sizes:
        parts.append([corpus[j] for j in order[start : start + s]])
        start += s
    return CorpusSplit(parts[0], parts[1], parts[2], seed, tuple(fractions))


def save_split(split: CorpusSplit, out_dir) -> None:
    """Persist a split as three text files plus a JSON manifest
    {seed, fractions, counts}."""
    import json
    import os

    os.makedirs(out_dir, exist_ok=True)
    counts = {}
    for name in ("train", "validation", "test"):
        part = getattr(split, name)
        counts[name] = len(part)
        with open(os.path.join(out_dir, f"{name}.txt"), "w", encoding="utf-8") as f:
            for t in part:
                f.write(t.text + "\n")
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump({"seed": split.seed, "fractions": list(split.fractions),
                   "counts": counts}, f, indent=2)
        f.write("\n")
