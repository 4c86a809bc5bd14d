"""CTC algorithms over emission matrices: greedy collapse, exact forward
scoring of a transcript, and prefix beam search with optional word-level
LM fusion.

All arithmetic is in natural-log space.  Infeasible scores are -inf in
memory (guarded via logaddexp); JSON output maps them to null.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary, DEFAULT_VOCAB
from .emissions import EmissionMatrix

NEG_INF = float("-inf")


@dataclass
class ScoredHypothesis:
    text: str
    asr_logprob: float
    lm_logprob: float | None = None


def greedy_collapse(E: EmissionMatrix, vocab: Vocabulary = DEFAULT_VOCAB) -> str:
    """Per-frame argmax (ties to the lowest index), merge adjacent
    duplicates, drop blanks."""
    ids = np.argmax(E.logp, axis=1)
    blank = vocab.blank_id
    out = []
    prev = -1
    for i in ids:
        if i != prev and i != blank:
            out.append(vocab.chars[i])
        prev = i
    return "".join(out)


def _min_frames(labels: np.ndarray) -> int:
    """Shortest feasible alignment: one frame per label plus a separating
    blank between equal neighbors."""
    if len(labels) == 0:
        return 0
    return len(labels) + int(np.sum(labels[1:] == labels[:-1]))


def ctc_forward_logprob(
    E: EmissionMatrix, y: str, vocab: Vocabulary = DEFAULT_VOCAB
) -> float:
    """log sum over all alignments of y to E's frames (forward recursion
    over the blank-interleaved label sequence).  Returns -inf when no
    alignment fits in T frames."""
    logp = E.logp.astype(np.float64)
    T = logp.shape[0]
    blank = vocab.blank_id
    labels = vocab.encode(y)
    L = len(labels)
    if L == 0:
        return float(logp[:, blank].sum())
    if T < _min_frames(labels):
        return NEG_INF

    S = 2 * L + 1
    z = np.full(S, blank, dtype=np.int64)
    z[1::2] = labels
    # states allowed to skip over the preceding blank (label changed)
    can_skip = np.zeros(S, dtype=bool)
    can_skip[3::2] = labels[1:] != labels[:-1]

    alpha = np.full(S, NEG_INF)
    alpha[0] = logp[0, blank]
    alpha[1] = logp[0, labels[0]]
    for t in range(1, T):
        stay = alpha
        step = np.concatenate(([NEG_INF], alpha[:-1]))
        skip = np.concatenate(([NEG_INF, NEG_INF], alpha[:-2]))
        skip = np.where(can_skip, skip, NEG_INF)
        alpha = np.logaddexp(np.logaddexp(stay, step), skip) + logp[t, z]
    return float(np.logaddexp(alpha[S - 1], alpha[S - 2]))


def prefix_beam_search(
    E: EmissionMatrix,
    beam_width: int,
    lm=None,
    lm_weight: float = 0.0,
    word_score: float = 0.0,
    vocab: Vocabulary = DEFAULT_VOCAB,
) -> list[ScoredHypothesis]:
    """CTC prefix beam search with shallow fusion of a word-level LM.

    Per prefix we track (blank, non-blank) path masses.  The LM term
    lm_weight * logp(word | context) + word_score is added whenever a
    space completes a word, and pruning ranks prefixes by acoustic mass
    plus the LM terms accumulated so far.  Final candidates are ranked by
    asr_logprob + lm_weight * lm_logprob(words + EOS) + word_score * n_words,
    so a wide enough beam reproduces exhaustive search over strings.

    Returns up to beam_width distinct texts, best first, each carrying
    its pure acoustic score, and the unweighted LM score when an LM is
    given.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    logp = E.logp.astype(np.float64)
    T, V = logp.shape
    blank = vocab.blank_id
    space = vocab.char_to_id.get(" ", -1)
    use_lm = lm is not None and (lm_weight != 0.0 or word_score != 0.0)

    def word_bonus(prefix: tuple, upto: int) -> float:
        # LM score of the word ending at position upto (exclusive);
        # zero when the trailing segment is empty (consecutive spaces)
        if not use_lm:
            return 0.0
        j = upto
        while j > 0 and prefix[j - 1] != space:
            j -= 1
        if j == upto:
            return 0.0
        word = vocab.decode(prefix[j:upto])
        context = vocab.decode(prefix[:j]).split()
        return lm_weight * lm.word_logprob(context, word) + word_score

    # prefix -> [log p_blank, log p_nonblank, lm_so_far]
    beams = {(): [0.0, NEG_INF, 0.0]}
    for t in range(T):
        row = logp[t]
        nxt: dict[tuple, list[float]] = {}

        def bucket(prefix, lm_acc):
            b = nxt.get(prefix)
            if b is None:
                b = [NEG_INF, NEG_INF, lm_acc]
                nxt[prefix] = b
            return b

        for prefix, (pb, pnb, lm_acc) in beams.items():
            total = np.logaddexp(pb, pnb)
            # stay on this prefix via blank
            b = bucket(prefix, lm_acc)
            b[0] = np.logaddexp(b[0], total + row[blank])
            last = prefix[-1] if prefix else -1
            for c in range(V):
                if c == blank:
                    continue
                pc = row[c]
                if c == last:
                    # same char again extends the run (no new symbol)
                    b = bucket(prefix, lm_acc)
                    b[1] = np.logaddexp(b[1], pnb + pc)
                    # a blank-separated repeat emits a new symbol
                    ext = prefix + (c,)
                    lm_ext = lm_acc + (word_bonus(ext, len(prefix)) if c == space else 0.0)
                    e = bucket(ext, lm_ext)
                    e[1] = np.logaddexp(e[1], pb + pc)
                else:
                    ext = prefix + (c,)
                    lm_ext = lm_acc + (word_bonus(ext, len(prefix)) if c == space else 0.0)
                    e = bucket(ext, lm_ext)
                    e[1] = np.logaddexp(e[1], total + pc)
        ranked = sorted(
            nxt.items(),
            key=lambda kv: (-(np.logaddexp(kv[1][0], kv[1][1]) + kv[1][2]), kv[0]),
        )
        beams = dict(ranked[:beam_width])

    results = []
    for prefix, (pb, pnb, _) in beams.items():
        text = vocab.decode(prefix)
        asr = float(np.logaddexp(pb, pnb))
        lm_lp = None
        combined = asr
        if use_lm:
            words = text.split()
            lm_lp = lm.logprob(words)
            combined = asr + lm_weight * lm_lp + word_score * len(words)
        results.append((combined, text, asr, lm_lp))
    results.sort(key=lambda r: (-r[0], r[1]))
    return [ScoredHypothesis(t, a, l) for _, t, a, l in results[:beam_width]]


def score_to_json(x: float | None):
    """-inf serializes as null (documented sentinel), not a float special."""
    if x is None or x == NEG_INF:
        return None
    return x


def write_nbest_jsonl(path, utterance_id, hyps: list[ScoredHypothesis], append=False):
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as f:
        for rank, h in enumerate(hyps):
            f.write(
                json.dumps(
                    {
                        "id": utterance_id,
                        "rank": rank,
                        "text": h.text,
                        "asr_logprob": score_to_json(h.asr_logprob),
                        "lm_logprob": score_to_json(h.lm_logprob),
                    }
                )
                + "\n"
            )
