"""Stochastic ASR-channel simulation: per-speaker emission synthesis,
frame masking, character substitution, and the training-pair stream.

A "speaker" is one parameterization of the corruption process.  For each
true symbol the channel samples an emitted symbol from the speaker's
confusion row (once per occurrence, so long durations do not multiply
the error rate), emits a run of frames peaked on the emitted symbol, and
sprinkles blank frames.  Greedy-collapsing the resulting emission matrix
yields the noisy hypothesis paired with the clean sentence.

Speaker id spaces are disjoint by construction: training speakers occupy
[0, n_speakers); the "real-analog" reference family (standing in for
hypotheses from real audio) starts at REAL_SPEAKER_BASE; held-out
evaluation speakers start at EVAL_SPEAKER_BASE.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .corpus import CorpusSplit, Vocabulary, DEFAULT_VOCAB
from .ctc import greedy_collapse
from .emissions import EmissionMatrix, renormalize_log_rows
from .rng import Rng

REAL_SPEAKER_BASE = 1_000_000
EVAL_SPEAKER_BASE = 2_000_000
N_REAL_SPEAKERS = 4

# frame-row construction constants (documented, fixed across the repo)
SHARPEN_TEMPERATURE = 0.5  # rows raised to 1/T and renormalized
BLANK_FLOOR = 0.02  # blank mass inside a symbol frame
BLANK_PEAK = 0.92  # blank mass inside a blank frame
WITHIN_SPLIT_FACTOR = 0.15  # chance scale of a blank splitting a run
MAX_DURATION = 8

# speaker meta-ranges, tuned so the pooled collapsed character error
# rate on held-out speakers sits near 10% (single speakers roughly 5-15%)
SELF_PROB_RANGE = (0.90, 0.985)
BLANK_PROB_RANGE = (0.05, 0.30)
DURATION_RANGE = (1.5, 3.0)
SPACE_BOOST_RANGE = (0.005, 0.035)
MASK_RATE_RANGE = (0.5, 1.5)

# keyboard adjacency plus common sound-alikes; rows without an entry
# spread their off-diagonal mass uniformly
_NEIGHBORS = {
    "a": "qwsze", "b": "vgnp", "c": "xdfvks", "d": "serfcxt", "e": "wsdria",
    "f": "drtgcv", "g": "ftyhbvj", "h": "gyujnb", "i": "ujkoey", "j": "huikmng",
    "k": "jiolmc", "l": "kopr", "m": "njk", "n": "bhjm", "o": "iklpau",
    "p": "olb", "q": "wak", "r": "edftl", "s": "awedxzc", "t": "rfgyd",
    "u": "yhjiow", "v": "cfgb", "w": "qasev", "x": "zsdc", "y": "tghui",
    "z": "asx",
}


@dataclass
class SpeakerParams:
    speaker_id: int
    confusion: np.ndarray  # (n_chars, n_chars) row-stochastic
    blank_prob: float
    duration_mean: float
    space_confusion_boost: float
    mask_rate: float


@dataclass
class ChannelConfig:
    s: float = 0.1
    n_masks: int = 2
    mask_max_width: int = 30
    n_speakers: int = 16
    real_fraction: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.s < 1.0:
            raise ValueError("s must be in [0, 1)")
        if not 0.0 <= self.real_fraction <= 1.0:
            raise ValueError("real_fraction must be in [0, 1]")
        if self.n_speakers < 1:
            raise ValueError("n_speakers must be >= 1")
        if self.n_masks < 0 or self.mask_max_width < 1:
            raise ValueError("invalid mask parameters")


@dataclass
class TrainingPair:
    hypothesis: str
    target: str
    source: str  # "synthetic" | "real_analog"
    speaker_id: int
    char_sub: bool = False
    frame_mask: bool = False


def sample_speaker_params(
    seed: int,
    speaker_id: int,
    vocab: Vocabulary = DEFAULT_VOCAB,
    identity: bool = False,
) -> SpeakerParams:
    """Deterministic speaker draw from the documented meta-ranges above
    (self-probability, blank_prob, duration_mean, space boost,
    mask_rate).  Off-diagonal confusion mass goes 70% to a
    jittered keyboard/sound-alike neighbor set, 30% to a uniform floor;
    the space boost moves extra mass between the space row/column so
    word-boundary errors occur.  `identity` short-circuits to a noiseless
    channel (tests)."""
    if speaker_id < 0:
        raise ValueError("speaker_id must be >= 0")
    n = len(vocab.chars)
    if identity:
        return SpeakerParams(speaker_id, np.eye(n), 0.0, 1.0, 0.0, 1.0)

    rng = Rng(seed).derive("speaker", speaker_id)
    self_prob = rng.uniform_range(*SELF_PROB_RANGE)
    blank_prob = rng.uniform_range(*BLANK_PROB_RANGE)
    duration_mean = rng.uniform_range(*DURATION_RANGE)
    boost = rng.uniform_range(*SPACE_BOOST_RANGE)
    mask_rate = rng.uniform_range(*MASK_RATE_RANGE)

    table = vocab.char_to_id
    conf = np.zeros((n, n))
    for i, c in enumerate(vocab.chars):
        off = 1.0 - self_prob
        neigh = [table[x] for x in dict.fromkeys(_NEIGHBORS.get(c, ""))
                 if x != c and x in table]
        if neigh:
            w = rng.uniform(len(neigh)) + 0.1
            w /= w.sum()
            conf[i, neigh] += 0.7 * off * w
            floor = 0.3 * off
        else:
            floor = off
        others = np.ones(n) / (n - 1)
        others[i] = 0.0
        conf[i] += floor * others
        conf[i, i] += self_prob

    sp = table.get(" ")
    if sp is not None:
        for i in range(n):
            if i == sp:
                conf[i, i] -= boost
                conf[i, :] += boost / (n - 1)
                conf[i, i] -= boost / (n - 1)
            else:
                conf[i, i] -= boost
                conf[i, sp] += boost
    conf /= conf.sum(axis=1, keepdims=True)
    return SpeakerParams(int(speaker_id), conf, float(blank_prob),
                         float(duration_mean), float(boost), float(mask_rate))


def _frame_table(sp: SpeakerParams, vocab: Vocabulary) -> np.ndarray:
    """Log-prob frame rows indexed by emitted symbol (chars + blank).

    A symbol frame is the symbol's confusion row sharpened to temperature
    SHARPEN_TEMPERATURE with BLANK_FLOOR mass on blank; a blank frame has
    BLANK_PEAK on blank and the rest uniform."""
    n = len(vocab.chars)
    sharp = sp.confusion ** (1.0 / SHARPEN_TEMPERATURE)
    sharp /= sharp.sum(axis=1, keepdims=True)
    table = np.zeros((n + 1, n + 1))
    table[:n, :n] = (1.0 - BLANK_FLOOR) * sharp
    table[:n, n] = BLANK_FLOOR
    table[n, :n] = (1.0 - BLANK_PEAK) / n
    table[n, n] = BLANK_PEAK
    # probability floor keeps every log-row finite (identity channels
    # would otherwise put -inf in the matrix)
    return renormalize_log_rows(np.log(np.maximum(table, 1e-12)))


def synthesize_emissions(
    y: str,
    sp: SpeakerParams,
    rng: Rng,
    vocab: Vocabulary = DEFAULT_VOCAB,
    utterance_id: int | str = 0,
) -> EmissionMatrix:
    """Sample the channel's emission matrix for clean text y.

    Per symbol occurrence: one emitted symbol from the confusion row, a
    geometric-like duration with mean duration_mean (capped at
    MAX_DURATION), an optional leading blank frame (prob blank_prob) and
    an optional mid-run blank (prob blank_prob * WITHIN_SPLIT_FACTOR,
    runs of >= 2 only).  A separating blank is always forced between
    equal adjacent emitted symbols so a noiseless channel round-trips."""
    if not y:
        raise ValueError("cannot synthesize emissions for empty text")
    labels = vocab.encode(y)
    L = len(labels)
    n = len(vocab.chars)
    blank = vocab.blank_id

    cdf = np.cumsum(sp.confusion, axis=1)
    cdf[:, -1] = 1.0
    u_emit = rng.uniform(L)
    emitted = (u_emit[:, None] > cdf[labels]).sum(axis=1)

    if sp.duration_mean <= 1.0 + 1e-9:
        extra = np.zeros(L, dtype=np.int64)
    else:
        p_stop = 1.0 / sp.duration_mean
        u_dur = np.maximum(rng.uniform(L), 2.0**-53)
        extra = np.floor(np.log(u_dur) / np.log(1.0 - p_stop)).astype(np.int64)
    durations = 1 + np.minimum(extra, MAX_DURATION - 1)

    lead_blank = rng.uniform(L) < sp.blank_prob
    split_run = rng.uniform(L) < sp.blank_prob * WITHIN_SPLIT_FACTOR
    tail_blank = rng.uniform() < sp.blank_prob

    seq: list[int] = []
    prev = -1
    for i in range(L):
        e = int(emitted[i])
        d = int(durations[i])
        if lead_blank[i] or (e == prev and not seq[-1:] == [blank]):
            seq.append(blank)
        if d >= 2 and split_run[i]:
            h = d // 2
            seq.extend([e] * h)
            seq.append(blank)
            seq.extend([e] * (d - h))
        else:
            seq.extend([e] * d)
        prev = e
    if tail_blank:
        seq.append(blank)

    table = _frame_table(sp, vocab)
    return EmissionMatrix(table[np.array(seq, dtype=np.int64)].copy(), utterance_id)


def mask_frames(
    E: EmissionMatrix, n_masks: int, max_width: int, rng: Rng
) -> EmissionMatrix:
    """Blend n_masks random frame spans halfway toward uniform
    (0.5 * row + 0.5 * uniform, renormalized in log space)."""
    if n_masks < 0 or max_width < 1:
        raise ValueError("invalid mask parameters")
    logp = E.logp.copy()
    if n_masks == 0:
        return EmissionMatrix(logp, E.utterance_id)
    T, V = logp.shape
    masked = np.zeros(T, dtype=bool)
    for _ in range(n_masks):
        width = min(1 + rng.integers(max_width), T)
        start = rng.integers(T - width + 1)
        masked[start : start + width] = True
    if masked.any():
        rows = logp[masked].astype(np.float64)
        blended = np.log(0.5 * np.exp(rows) + 0.5 / V)
        logp[masked] = renormalize_log_rows(blended)
    return EmissionMatrix(logp, E.utterance_id)


def substitute_chars(
    text: str, s: float, rng: Rng, vocab: Vocabulary = DEFAULT_VOCAB
) -> str:
    """Independently replace each character with probability s by a
    uniform draw over the alphabet excluding itself (s is therefore the
    true corruption rate).  Length-preserving."""
    if not 0.0 <= s < 1.0:
        raise ValueError("s must be in [0, 1)")
    if not text or s == 0.0:
        return text
    ids = vocab.encode(text)
    L = len(ids)
    flip = rng.uniform(L) < s
    repl = rng.integers(len(vocab.chars) - 1, L)
    repl = repl + (repl >= ids)
    out = np.where(flip, repl, ids)
    return vocab.decode(out)


def _stochastic_round(x: float, rng: Rng) -> int:
    base = int(np.floor(x))
    return base + (1 if rng.uniform() < x - base else 0)


def make_pairs(
    split: CorpusSplit,
    config: ChannelConfig,
    count: int,
    vocab: Vocabulary = DEFAULT_VOCAB,
    shard_size: int = 1024,
) -> Iterator[TrainingPair]:
    """Seed-deterministic stream of training pairs.

    The stream is partitioned into shards of shard_size, each with an
    independently derived seed, so shards can be generated in parallel
    and merged in order without changing the stream.  Synthetic pairs run
    the full channel (+ masking, + substitution); real-analog pairs
    (probability real_fraction) come from the disjoint reference speaker
    family with no augmentation."""
    config.validate()
    if count < 1:
        raise ValueError("count must be >= 1")
    sentences = split.train
    if not sentences:
        raise ValueError("empty training split")
    speaker_cache: dict[int, SpeakerParams] = {}

    def speaker(sid: int) -> SpeakerParams:
        if sid not in speaker_cache:
            speaker_cache[sid] = sample_speaker_params(config.seed, sid, vocab)
        return speaker_cache[sid]

    produced = 0
    shard = 0
    while produced < count:
        rng = Rng(config.seed).derive("pairs-shard", shard)
        for _ in range(min(shard_size, count - produced)):
            is_real = rng.uniform() < config.real_fraction
            target = sentences[rng.integers(len(sentences))].text
            if is_real:
                sid = REAL_SPEAKER_BASE + rng.integers(N_REAL_SPEAKERS)
                E = synthesize_emissions(target, speaker(sid), rng, vocab)
                hyp = greedy_collapse(E, vocab)
                yield TrainingPair(hyp, target, "real_analog", sid)
            else:
                sid = rng.integers(config.n_speakers)
                sp = speaker(sid)
                E = synthesize_emissions(target, sp, rng, vocab)
                did_mask = False
                if config.n_masks > 0:
                    k = _stochastic_round(sp.mask_rate * config.n_masks, rng)
                    if k > 0:
                        E = mask_frames(E, k, config.mask_max_width, rng)
                        did_mask = True
                hyp = greedy_collapse(E, vocab)
                if config.s > 0.0:
                    hyp = substitute_chars(hyp, config.s, rng, vocab)
                yield TrainingPair(hyp, target, "synthetic", sid,
                                   char_sub=config.s > 0.0, frame_mask=did_mask)
            produced += 1
        shard += 1


def make_eval_set(
    transcripts,
    config: ChannelConfig,
    n_eval_speakers: int = 8,
    family_base: int = EVAL_SPEAKER_BASE,
    vocab: Vocabulary = DEFAULT_VOCAB,
) -> list[tuple[str, EmissionMatrix]]:
    """Emission matrices for a transcript list using held-out speaker
    draws (no masking, no substitution): the test-time channel."""
    rng = Rng(config.seed).derive("eval-emissions")
    out = []
    for t in transcripts:
        sid = family_base + rng.integers(n_eval_speakers)
        sp = sample_speaker_params(config.seed, sid, vocab)
        out.append((t.text, synthesize_emissions(t.text, sp, rng, vocab, t.id)))
    return out


def write_pairs_jsonl(path, pairs: Iterator[TrainingPair]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for i, p in enumerate(pairs):
            f.write(json.dumps({
                "id": i,
                "target": p.target,
                "hypothesis": p.hypothesis,
                "source": p.source,
                "speaker": p.speaker_id,
            }) + "\n")
            n += 1
    return n


def read_pairs_jsonl(path) -> list[TrainingPair]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            d = json.loads(line)
            out.append(TrainingPair(d["hypothesis"], d["target"], d["source"], d["speaker"]))
    return out
