"""Word error rate: Levenshtein alignment over whitespace words with a
deterministic backtrace, plus corpus-level pooling and oracle-in-beam
scoring.

Backtrace tie order is substitution > deletion > insertion, i.e. the
diagonal is preferred whenever it is optimal, which selects the optimal
alignment with the most substitutions (counts are then canonical: with
total errors E and length difference fixed, S determines I and D).
WERReport.wer is a fraction, not a percentage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass


@dataclass
class WERReport:
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    ref_words: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        if self.ref_words == 0:
            raise ValueError("empty reference")
        return self.errors / self.ref_words

    def add(self, other: "WERReport") -> None:
        self.substitutions += other.substitutions
        self.insertions += other.insertions
        self.deletions += other.deletions
        self.ref_words += other.ref_words


def wer(ref: str, hyp: str) -> WERReport:
    """Word-level edit distance with unit costs."""
    r = ref.split()
    h = hyp.split()
    if not r:
        raise ValueError("empty reference")
    R, H = len(r), len(h)

    d = [[0] * (H + 1) for _ in range(R + 1)]
    for i in range(1, R + 1):
        d[i][0] = i
    for j in range(1, H + 1):
        d[0][j] = j
    for i in range(1, R + 1):
        ri = r[i - 1]
        row, prev = d[i], d[i - 1]
        for j in range(1, H + 1):
            row[j] = min(
                prev[j - 1] + (ri != h[j - 1]),
                prev[j] + 1,
                row[j - 1] + 1,
            )

    subs = dels = ins = 0
    i, j = R, H
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (r[i - 1] != h[j - 1]):
            subs += r[i - 1] != h[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return WERReport(subs, ins, dels, R)


def corpus_wer(pairs) -> WERReport:
    """Pool error counts and reference words across utterances (corpus
    pooling, not a mean of per-utterance rates)."""
    total = WERReport()
    n = 0
    for ref, hyp in pairs:
        total.add(wer(ref, hyp))
        n += 1
    if n == 0:
        raise ValueError("empty evaluation set")
    return total


def oracle_wer(refs: list[str], beams: list[list[str]]) -> WERReport:
    """Per utterance pick the candidate with the fewest errors (ties to
    the higher-ranked candidate), then pool."""
    if len(refs) != len(beams):
        raise ValueError("refs and beams must align")
    total = WERReport()
    for ref, beam in zip(refs, beams):
        if not beam:
            raise ValueError(f"empty beam for reference {ref!r}")
        best = None
        for cand in beam:
            rep = wer(ref, cand)
            if best is None or rep.errors < best.errors:
                best = rep
        total.add(best)
    if not refs:
        raise ValueError("empty evaluation set")
    return total


def write_wer_diffs(path, rows) -> None:
    """JSON-lines of per-utterance counts: {id, ref, hyp, S, I, D}."""
    with open(path, "w", encoding="utf-8") as f:
        for utt_id, ref, hyp in rows:
            rep = wer(ref, hyp)
            f.write(json.dumps({
                "id": utt_id, "ref": ref, "hyp": hyp,
                "S": rep.substitutions, "I": rep.insertions, "D": rep.deletions,
            }) + "\n")
