import itertools

import numpy as np
import pytest

from dsr.corpus import Vocabulary, DEFAULT_VOCAB
from dsr.ctc import (
    NEG_INF,
    ctc_forward_logprob,
    greedy_collapse,
    prefix_beam_search,
)
from dsr.emissions import EmissionMatrix
from dsr.rng import Rng

AB = Vocabulary(chars=("a", "b"))
ABS = Vocabulary(chars=("a", "b", " "))


def random_emissions(rng, T, vocab, peaked=False):
    V = len(vocab.chars) + 1
    u = rng.uniform(T * V).reshape(T, V)
    if peaked:
        u = u**8
    logp = np.log(np.maximum(u, 1e-4))
    logp -= np.logaddexp.reduce(logp, axis=1, keepdims=True)
    return EmissionMatrix(logp.astype(np.float32))


def emissions_from_argmaxes(ids, vocab, p=0.9):
    V = len(vocab.chars) + 1
    rows = np.full((len(ids), V), (1 - p) / (V - 1))
    rows[np.arange(len(ids)), ids] = p
    return EmissionMatrix(np.log(rows).astype(np.float32))


def brute_force_forward(E, y, vocab):
    """Sum over every frame path whose collapse equals y (float64)."""
    logp = E.logp.astype(np.float64)
    T, V = logp.shape
    total = NEG_INF
    for path in itertools.product(range(V), repeat=T):
        out = []
        prev = -1
        for s in path:
            if s != prev and s != vocab.blank_id:
                out.append(vocab.chars[s])
            prev = s
        if "".join(out) == y:
            total = np.logaddexp(total, sum(logp[t, s] for t, s in enumerate(path)))
    return total


class TestGreedyCollapse:
    def test_dedup_and_blank_removal(self):
        a, b, blank = 0, 1, AB.blank_id
        E = emissions_from_argmaxes([a, a, blank, b], AB)
        assert greedy_collapse(E, AB) == "ab"

    def test_all_blank(self):
        blank = AB.blank_id
        E = emissions_from_argmaxes([blank, blank, blank], AB)
        assert greedy_collapse(E, AB) == ""

    def test_blank_separates_repeats(self):
        a, blank = 0, AB.blank_id
        E = emissions_from_argmaxes([a, blank, a], AB)
        assert greedy_collapse(E, AB) == "aa"

    def test_tie_breaks_to_lowest_index(self):
        row = np.log(np.full(3, 1 / 3))
        E = EmissionMatrix(np.tile(row, (2, 1)).astype(np.float32))
        # both frames tie across all symbols; lowest index is 'a'
        assert greedy_collapse(E, AB) == "a"


class TestForward:
    def test_single_frame(self):
        rng = Rng(1).derive("single")
        E = random_emissions(rng, 1, AB)
        got = ctc_forward_logprob(E, "a", AB)
        assert abs(got - float(E.logp[0, 0])) < 1e-9

    def test_empty_string_is_all_blanks(self):
        rng = Rng(2).derive("empty")
        E = random_emissions(rng, 4, AB)
        want = float(E.logp.astype(np.float64)[:, AB.blank_id].sum())
        assert abs(ctc_forward_logprob(E, "", AB) - want) < 1e-9

    def test_repeat_needs_separating_blank(self):
        rng = Rng(3).derive("rep")
        E = random_emissions(rng, 2, AB)
        assert ctc_forward_logprob(E, "aa", AB) == NEG_INF
        E3 = random_emissions(rng, 3, AB)
        assert ctc_forward_logprob(E3, "aa", AB) > NEG_INF

    def test_matches_brute_force(self):
        """Forward recursion equals path enumeration within 1e-9."""
        rng = Rng(4).derive("bf")
        strings = ["", "a", "b", "ab", "ba", "aa", "aba", "abab"]
        for trial in range(25):
            T = 1 + rng.integers(6)
            E = random_emissions(rng, T, AB)
            for y in strings:
                got = ctc_forward_logprob(E, y, AB)
                want = brute_force_forward(E, y, AB)
                if want == NEG_INF:
                    assert got == NEG_INF
                else:
                    assert abs(got - want) < 1e-9

    def test_forward_scores_sum_to_one(self):
        """Total mass over all feasible outputs is 1 on tiny instances."""
        rng = Rng(5).derive("sum")
        for trial in range(5):
            T = 1 + rng.integers(4)
            E = random_emissions(rng, T, AB)
            total = NEG_INF
            outputs = [""]
            for L in range(1, T + 1):
                outputs += ["".join(c) for c in itertools.product("ab", repeat=L)]
            for y in outputs:
                lp = ctc_forward_logprob(E, y, AB)
                if lp > NEG_INF:
                    total = np.logaddexp(total, lp)
            assert abs(np.exp(total) - 1.0) < 1e-6

    def test_blank_frame_extension_never_decreases(self):
        """Appending a pure-blank frame keeps all alignments alive."""
        rng = Rng(6).derive("mono")
        for trial in range(10):
            T = 1 + rng.integers(4)
            E = random_emissions(rng, T, AB)
            blank_row = np.full((1, 3), np.log(1e-12), dtype=np.float32)
            blank_row[0, AB.blank_id] = 0.0
            E2 = EmissionMatrix(np.vstack([E.logp, blank_row]))
            for y in ("", "a", "ab", "ba"):
                before = ctc_forward_logprob(E, y, AB)
                if before == NEG_INF:
                    continue
                after = ctc_forward_logprob(E2, y, AB)
                assert after >= before - 1e-9

    def test_collapse_is_always_feasible(self):
        rng = Rng(7).derive("feas")
        for trial in range(20):
            E = random_emissions(rng, 1 + rng.integers(8), AB)
            y = greedy_collapse(E, AB)
            if y:
                assert ctc_forward_logprob(E, y, AB) > NEG_INF

    def test_symbol_outside_vocab(self):
        E = random_emissions(Rng(8).derive("x"), 3, AB)
        with pytest.raises(ValueError):
            ctc_forward_logprob(E, "z", AB)


class FixedLM:
    """Word LM stub with constant per-word cost."""

    def __init__(self, cost=-1.0):
        self.cost = cost

    def word_logprob(self, context, word):
        return self.cost

    def logprob(self, words):
        return self.cost * (len(words) + 1)  # + EOS


class TestPrefixBeamSearch:
    def test_degenerate_beam_matches_greedy(self):
        rng = Rng(9).derive("peak")
        for trial in range(10):
            T = 1 + rng.integers(6)
            ids = [rng.integers(3) for _ in range(T)]
            E = emissions_from_argmaxes(ids, AB, p=0.97)
            hyps = prefix_beam_search(E, 1, vocab=AB)
            assert hyps[0].text == greedy_collapse(E, AB)

    def test_exhaustive_oracle_no_lm(self):
        """Wide beam equals exhaustive search over all strings."""
        rng = Rng(10).derive("ex")
        for trial in range(8):
            T = 1 + rng.integers(5)
            E = random_emissions(rng, T, AB)
            hyps = prefix_beam_search(E, 64, vocab=AB)
            outputs = [""]
            for L in range(1, T + 1):
                outputs += ["".join(c) for c in itertools.product("ab", repeat=L)]
            scored = [
                (y, ctc_forward_logprob(E, y, AB))
                for y in outputs
                if ctc_forward_logprob(E, y, AB) > NEG_INF
            ]
            scored.sort(key=lambda p: (-p[1], p[0]))
            assert hyps[0].text == scored[0][0]
            assert abs(hyps[0].asr_logprob - scored[0][1]) < 1e-9

    def test_exhaustive_oracle_with_lm(self):
        """Combined score (acoustic + weighted LM + word bonus) matches
        enumeration when the LM is fused."""
        rng = Rng(11).derive("exlm")
        lm = FixedLM(cost=-0.7)
        lm_weight, word_score = 1.3, -0.2
        for trial in range(6):
            T = 1 + rng.integers(5)
            E = random_emissions(rng, T, ABS)
            hyps = prefix_beam_search(E, 128, lm, lm_weight, word_score, vocab=ABS)
            outputs = [""]
            for L in range(1, T + 1):
                outputs += ["".join(c) for c in itertools.product("ab ", repeat=L)]
            scored = []
            for y in set(outputs):
                asr = ctc_forward_logprob(E, y, ABS)
                if asr == NEG_INF:
                    continue
                words = y.split()
                c = asr + lm_weight * lm.logprob(words) + word_score * len(words)
                scored.append((c, y))
            scored.sort(key=lambda p: (-p[0], p[1]))
            assert hyps[0].text == scored[0][1]

    def test_nbest_texts_distinct(self):
        rng = Rng(12).derive("dd")
        E = random_emissions(rng, 6, AB)
        hyps = prefix_beam_search(E, 16, vocab=AB)
        texts = [h.text for h in hyps]
        assert len(texts) == len(set(texts))

    def test_beam_width_validation(self):
        E = random_emissions(Rng(13).derive("v"), 2, AB)
        with pytest.raises(ValueError):
            prefix_beam_search(E, 0, vocab=AB)
