"""Inference paths: denoiser greedy decoding, deterministic beam search
with nucleus-truncated expansions, blended rescoring of the beam against
CTC acoustic scores (a single weight lambda), lambda tuning, n-best LM
rescoring, and an exact enumeration of the two-model cascade on tiny
instances.

"Nucleus" here truncates each expansion to the smallest symbol set whose
cumulative probability reaches nucleus_p; search is deterministic beam
search over those sets (a `sample` flag switches to stochastic nucleus
sampling instead).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import Vocabulary, DEFAULT_VOCAB
from .ctc import NEG_INF, ScoredHypothesis, ctc_forward_logprob, greedy_collapse, score_to_json
from .dlm.infer import DecoderState, encode_hypothesis
from .dlm.model import DLMParameters, forward_logprob
from .emissions import EmissionMatrix
from .rng import Rng
from .wer import corpus_wer

DEFAULT_LAMBDA_GRID = tuple(round(0.25 * i, 2) for i in range(13))  # 0 .. 3.0


@dataclass
class BeamCandidate:
    text: str
    dlm_logprob: float
    origin: str = "beam"  # beam | dlm_greedy | asr_passthrough


@dataclass
class DSRConfig:
    n_best: int = 64
    nucleus_p: float = 0.9
    lam: float = 1.0
    max_decode_len: int = 128

    def validate(self) -> None:
        if self.n_best < 1:
            raise ValueError("n_best must be >= 1")
        if not 0.0 < self.nucleus_p <= 1.0:
            raise ValueError("nucleus_p must be in (0, 1]")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


def dlm_greedy(
    params: DLMParameters,
    hypothesis: str,
    max_decode_len: int = 128,
    vocab: Vocabulary = DEFAULT_VOCAB,
) -> tuple[str, bool]:
    """Autoregressive argmax decode (ties to the lowest index).  Returns
    (text, truncated): truncated is True when the cap was reached before
    EOS and text is the partial string."""
    enc = encode_hypothesis(params, hypothesis, vocab)
    state = DecoderState(params, enc, 1, max_decode_len + 1)
    eos_class = len(vocab.chars)
    token = np.array([vocab.bos_id])
    out: list[str] = []
    for _ in range(max_decode_len + 1):
        lp = state.step(token)[0]
        nxt = int(np.argmax(lp))
        if nxt == eos_class:
            return "".join(out), False
        if len(out) >= max_decode_len:
            break
        out.append(vocab.chars[nxt])
        token = np.array([nxt])
    return "".join(out), True


def _nucleus_cut(lp_row: np.ndarray, nucleus_p: float) -> np.ndarray:
    """Class ids of the smallest set with cumulative prob >= nucleus_p,
    most probable first (stable order)."""
    order = np.argsort(-lp_row, kind="stable")
    cum = np.cumsum(np.exp(lp_row[order]))
    k = int(np.searchsorted(cum, nucleus_p - 1e-12)) + 1
    return order[: min(k, len(order))]


def dlm_beam(
    params: DLMParameters,
    hypothesis: str,
    n_best: int,
    nucleus_p: float = 0.9,
    max_decode_len: int = 128,
    vocab: Vocabulary = DEFAULT_VOCAB,
    sample: bool = False,
    rng: Rng | None = None,
) -> list[BeamCandidate]:
    """Beam of corrected candidates from the denoiser alone.

    Completed (EOS) candidates retire; actives are pruned to n_best per
    step.  The greedy output and the raw input hypothesis are appended
    (scored by teacher forcing) when the beam itself missed them, so the
    candidate set always contains both.  Texts are distinct."""
    if n_best < 1:
        raise ValueError("n_best must be >= 1")
    if sample and rng is None:
        raise ValueError("stochastic nucleus sampling needs an rng")
    enc = encode_hypothesis(params, hypothesis, vocab)
    eos_class = len(vocab.chars)
    state = DecoderState(params, enc, 1, max_decode_len + 1)
    texts: list[tuple[int, ...]] = [()]
    scores = [0.0]
    tokens = np.array([vocab.bos_id])
    done: dict[tuple[int, ...], float] = {}

    for step_i in range(max_decode_len + 1):
        lp = state.step(tokens)
        # candidates: EOS completions and char extensions compete for the
        # same n_best slots (standard beam bookkeeping); chars are barred
        # on the last step so every retained candidate is complete
        candidates: list[tuple[float, int, int]] = []  # score, row, class
        for row in range(len(texts)):
            cut = _nucleus_cut(lp[row], nucleus_p)
            if sample:
                probs = np.exp(lp[row][cut])
                probs /= probs.sum()
                cdf = np.cumsum(probs)
                cdf[-1] = 1.0
                cut = cut[[int(np.searchsorted(cdf, rng.uniform(), side="right"))]]
            for c in cut:
                if c != eos_class and step_i == max_decode_len:
                    continue
                candidates.append((scores[row] + float(lp[row][c]), row, int(c)))
        candidates.sort(key=lambda e: (-e[0], e[1], e[2]))
        candidates = candidates[: n_best]
        expansions = []
        for sc, row, c in candidates:
            if c == eos_class:
                key = texts[row]
                if key not in done or sc > done[key]:
                    done[key] = sc
            else:
                expansions.append((sc, row, c))
        if not expansions:
            break
        if len(done) >= n_best:
            floor = sorted(done.values(), reverse=True)[n_best - 1]
            if expansions[0][0] <= floor:
                break
        state.select(np.array([row for _, row, _ in expansions]))
        texts = [texts[row] + (c,) for _, row, c in expansions]
        scores = [s for s, _, _ in expansions]
        tokens = np.array([c for _, _, c in expansions])

    ranked = sorted(done.items(), key=lambda kv: (-kv[1], kv[0]))
    out = [BeamCandidate(vocab.decode(t), s) for t, s in ranked[:n_best]]
    have = {c.text for c in out}
    greedy_text, _ = dlm_greedy(params, hypothesis, max_decode_len, vocab)
    for text, origin in ((greedy_text, "dlm_greedy"), (hypothesis, "asr_passthrough")):
        if text not in have:
            _, total = forward_logprob(params, hypothesis, text, vocab)
            out.append(BeamCandidate(text, total, origin))
            have.add(text)
    return out


def dsr_decode(
    params: DLMParameters,
    E: EmissionMatrix,
    cfg: DSRConfig,
    hypothesis: str | None = None,
    vocab: Vocabulary = DEFAULT_VOCAB,
) -> tuple[str, dict]:
    """Blend denoiser and acoustic scores over the denoiser's beam.

    The winner maximizes lam * dlm_logprob + asr_logprob over candidates
    with feasible acoustic scores; when every candidate is infeasible the
    ranking falls back to pure denoiser scores.  Returns (text,
    diagnostics with the fully scored beam)."""
    cfg.validate()
    collapsed = greedy_collapse(E, vocab)
    if hypothesis is not None and hypothesis != collapsed:
        raise ValueError("supplied hypothesis is not the greedy collapse of E")
    beam = dlm_beam(params, collapsed, cfg.n_best, cfg.nucleus_p,
                    cfg.max_decode_len, vocab)
    scored = [(c, ctc_forward_logprob(E, c.text, vocab)) for c in beam]
    best_text, diag_rows = rescore_beam(scored, cfg.lam)
    diagnostics = {
        "hypothesis": collapsed,
        "lambda": cfg.lam,
        "beam": diag_rows,
    }
    return best_text, diagnostics


def rescore_beam(scored: list[tuple[BeamCandidate, float]], lam: float) -> tuple[str, list[dict]]:
    """Pick the argmax of lam * dlm + asr over feasible candidates (ties
    to the earlier beam entry); all-infeasible beams rank by dlm alone."""
    feasible = [(c, a) for c, a in scored if a > NEG_INF]
    rows = []
    for c, a in scored:
        blended = lam * c.dlm_logprob + a if a > NEG_INF else NEG_INF
        rows.append({
            "text": c.text,
            "origin": c.origin,
            "dlm_logprob": c.dlm_logprob,
            "asr_logprob": score_to_json(a),
            "blended": score_to_json(blended),
        })
    if feasible:
        best_score = None
        best = None
        for c, a in feasible:
            s = lam * c.dlm_logprob + a
            if best_score is None or s > best_score:
                best_score, best = s, c
        return best.text, rows
    best = max(scored, key=lambda ca: ca[0].dlm_logprob)[0]
    return best.text, rows


def tune_lambda(
    params: DLMParameters,
    validation: list[tuple[str, EmissionMatrix]],
    grid=DEFAULT_LAMBDA_GRID,
    cfg: DSRConfig | None = None,
    vocab: Vocabulary = DEFAULT_VOCAB,
) -> tuple[float, list[dict]]:
    """Grid-search lambda by corpus WER on (reference, emissions) pairs;
    beams are computed once and rescored per grid value.  Ties go to the
    smaller lambda."""
    if not validation:
        raise ValueError("empty validation set")
    if not grid:
        raise ValueError("empty grid")
    if any(g < 0 for g in grid):
        raise ValueError("grid values must be >= 0")
    cfg = cfg or DSRConfig()
    cached = []
    for ref, E in validation:
        collapsed = greedy_collapse(E, vocab)
        beam = dlm_beam(params, collapsed, cfg.n_best, cfg.nucleus_p,
                        cfg.max_decode_len, vocab)
        cached.append((ref, [(c, ctc_forward_logprob(E, c.text, vocab)) for c in beam]))

    rows = []
    best_lam, best_wer = None, None
    for lam in sorted(grid):  # ascending scan: ties go to the smaller lambda
        hyps = [(ref, rescore_beam(scored, lam)[0]) for ref, scored in cached]
        w = corpus_wer(hyps).wer
        rows.append({"lambda": lam, "wer": w})
        if best_wer is None or w < best_wer:
            best_lam, best_wer = lam, w
    return best_lam, rows


def lm_rescore(nbest: list[ScoredHypothesis], lm, lm_weight: float) -> str:
    """argmax of asr_logprob + lm_weight * lm_logprob over an n-best list
    (missing LM scores are computed on the spot; ties to the earlier
    entry)."""
    if not nbest:
        raise ValueError("empty n-best list")
    best, best_score = None, None
    for h in nbest:
        lm_lp = h.lm_logprob
        if lm_lp is None:
            lm_lp = lm.logprob(h.text.split())
        s = h.asr_logprob + lm_weight * lm_lp
        if best_score is None or s > best_score:
            best, best_score = h, s
    return best.text


def tune_lm_weight(
    nbests: list[list[ScoredHypothesis]],
    refs: list[str],
    lm,
    grid=DEFAULT_LAMBDA_GRID,
) -> tuple[float, list[dict]]:
    """Same grid mechanism as tune_lambda, for the rescoring baseline."""
    if not nbests or len(nbests) != len(refs):
        raise ValueError("nbests and refs must align and be nonempty")
    rows = []
    best_w, best_wer = None, None
    for w in sorted(grid):
        hyps = [(ref, lm_rescore(nb, lm, w)) for ref, nb in zip(refs, nbests)]
        score = corpus_wer(hyps).wer
        rows.append({"lm_weight": w, "wer": score})
        if best_wer is None or score < best_wer:
            best_w, best_wer = w, score
    return best_w, rows


def enumerate_strings(vocab: Vocabulary, max_len: int) -> list[str]:
    """All strings over the alphabet with length 0..max_len."""
    out = [""]
    frontier = [""]
    for _ in range(max_len):
        frontier = [s + c for s in frontier for c in vocab.chars]
        out.extend(frontier)
    return out


def dsr_exact_marginal(
    tiny_params: DLMParameters,
    E_tiny: EmissionMatrix,
    y: str,
    max_len: int,
    vocab: Vocabulary,
) -> tuple[float, float]:
    """Exact cascade log-probability and its expectation lower bound on
    an enumerable instance.

        exact = log sum_h p_dlm(y|h) * p_asr(h|E)
        bound = sum_h [p_asr(h|E)/Z] * log p_dlm(y|h)   (feasible h only)

    Z renormalizes the acoustic mass over the enumerated set; when
    max_len >= T the enumeration covers the full output support, Z = 1,
    and exact >= bound is the expectation inequality for the concave log."""
    if len(vocab.chars) > 3 or max_len > 4 or E_tiny.frames > 4:
        raise ValueError("instance too large for exact enumeration")
    terms = []
    weights = []
    dlm_lps = []
    for h in enumerate_strings(vocab, max_len):
        asr_lp = ctc_forward_logprob(E_tiny, h, vocab)
        if asr_lp == NEG_INF:
            continue
        _, dlm_lp = forward_logprob(tiny_params, h, y, vocab)
        terms.append(dlm_lp + asr_lp)
        weights.append(asr_lp)
        dlm_lps.append(dlm_lp)
    if not terms:
        raise ValueError("no feasible hypotheses in enumeration")
    exact = float(np.logaddexp.reduce(terms))
    w = np.exp(np.array(weights))
    w /= w.sum()
    bound = float((w * np.array(dlm_lps)).sum())
    return exact, bound


def write_decodes_jsonl(path, rows: list[dict], include_beam: bool = False) -> None:
    """JSON-lines: {"id", "mode", "text", "scores": {...}, "beam": [...]}."""
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            out = {k: r[k] for k in ("id", "mode", "text", "scores")}
            if include_beam and "beam" in r:
                out["beam"] = r["beam"]
            f.write(json.dumps(out) + "\n")
