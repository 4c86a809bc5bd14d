import numpy as np
import pytest

from dsr.channel import TrainingPair, sample_speaker_params, synthesize_emissions
from dsr.corpus import DEFAULT_VOCAB, Vocabulary
from dsr.ctc import NEG_INF, ScoredHypothesis, ctc_forward_logprob, greedy_collapse
from dsr.decode import (
    BeamCandidate,
    DSRConfig,
    dlm_beam,
    dlm_greedy,
    dsr_decode,
    dsr_exact_marginal,
    enumerate_strings,
    lm_rescore,
    rescore_beam,
    tune_lambda,
)
from dsr.dlm import DLMConfig, TrainConfig, forward_logprob, init_model, train
from dsr.emissions import EmissionMatrix
from dsr.rng import Rng

AB = Vocabulary(chars=("a", "b"))
TINY_AB = DLMConfig(d_model=8, n_heads=2, mlp_hidden=16, n_encoder_layers=1,
                    n_decoder_layers=1, max_seq_len=16, dropout_rate=0.0,
                    vocab_size=AB.n_dlm)


def memorized_params():
    tcfg = TrainConfig(batch_tokens=64, warmup_steps=20, max_steps=200,
                       eval_every=200, log_every=200, seed=0)
    cfg = DLMConfig(d_model=16, n_heads=2, mlp_hidden=32, n_encoder_layers=1,
                    n_decoder_layers=1, max_seq_len=64, dropout_rate=0.0)
    stream = iter([TrainingPair("ab", "ab", "synthetic", 0)] * 4000)
    params, _ = train(stream, cfg, tcfg, quiet=True)
    return params


class TestGreedy:
    def test_memorized_pair(self):
        params = memorized_params()
        text, truncated = dlm_greedy(params, "ab")
        assert text == "ab" and not truncated

    def test_deterministic(self):
        params = init_model(TINY_AB, seed=1)
        a = dlm_greedy(params, "ab", max_decode_len=8, vocab=AB)
        b = dlm_greedy(params, "ab", max_decode_len=8, vocab=AB)
        assert a == b

    def test_empty_hypothesis_accepted(self):
        params = init_model(TINY_AB, seed=2)
        text, _ = dlm_greedy(params, "", max_decode_len=8, vocab=AB)
        assert isinstance(text, str)

    def test_truncation_flag(self):
        params = init_model(TINY_AB, seed=3)
        text, truncated = dlm_greedy(params, "abab", max_decode_len=1, vocab=AB)
        if truncated:
            assert len(text) <= 1


class TestBeam:
    def test_degenerate_beam_equals_greedy(self):
        for seed in range(4):
            params = init_model(TINY_AB, seed=seed)
            greedy, truncated = dlm_greedy(params, "ab", max_decode_len=6, vocab=AB)
            beam = dlm_beam(params, "ab", n_best=1, nucleus_p=1.0,
                            max_decode_len=6, vocab=AB)
            from_beam = [c for c in beam if c.origin == "beam"]
            if from_beam and not truncated:
                assert from_beam[0].text == greedy

    def test_top1_matches_exhaustive(self):
        """Beam argmax equals enumeration of p(text) over length <= 4."""
        for seed in range(5):
            params = init_model(TINY_AB, seed=10 + seed)
            beam = dlm_beam(params, "ba", n_best=64, nucleus_p=1.0,
                            max_decode_len=4, vocab=AB)
            best_beam = max((c for c in beam), key=lambda c: c.dlm_logprob)
            scored = []
            for s in enumerate_strings(AB, 4):
                _, total = forward_logprob(params, "ba", s, AB)
                scored.append((total, s))
            scored.sort(key=lambda p: (-p[0], p[1]))
            assert best_beam.text == scored[0][1]
            assert abs(best_beam.dlm_logprob - scored[0][0]) < 1e-3

    def test_candidate_set_contains_greedy_and_passthrough(self):
        params = init_model(TINY_AB, seed=20)
        beam = dlm_beam(params, "abba", n_best=2, nucleus_p=0.6,
                        max_decode_len=6, vocab=AB)
        texts = {c.text for c in beam}
        greedy, _ = dlm_greedy(params, "abba", max_decode_len=6, vocab=AB)
        assert greedy in texts and "abba" in texts

    def test_texts_distinct(self):
        params = init_model(TINY_AB, seed=21)
        beam = dlm_beam(params, "ab", n_best=16, nucleus_p=0.95,
                        max_decode_len=5, vocab=AB)
        texts = [c.text for c in beam]
        assert len(texts) == len(set(texts))

    def test_nucleus_default_interface(self):
        assert DSRConfig().nucleus_p == 0.9
        assert DSRConfig().n_best == 64

    def test_scores_nonpositive(self):
        params = init_model(TINY_AB, seed=22)
        for c in dlm_beam(params, "ab", 8, 0.9, 5, AB):
            assert c.dlm_logprob <= 0

    def test_sampling_variant(self):
        params = init_model(TINY_AB, seed=23)
        out = dlm_beam(params, "ab", 4, 0.9, 5, AB, sample=True,
                       rng=Rng(3).derive("samp"))
        assert len(out) >= 1
        with pytest.raises(ValueError):
            dlm_beam(params, "ab", 4, 0.9, 5, AB, sample=True)


class TestRescore:
    def scored(self):
        return [
            (BeamCandidate("aa", -1.0), -5.0),
            (BeamCandidate("ab", -3.0), -2.0),
            (BeamCandidate("ba", -0.5), NEG_INF),
        ]

    def test_lambda_zero_picks_max_asr(self):
        text, _ = rescore_beam(self.scored(), 0.0)
        assert text == "ab"

    def test_large_lambda_picks_dlm_among_feasible(self):
        text, _ = rescore_beam(self.scored(), 1e9)
        assert text == "aa"

    def test_infeasible_excluded_not_floored(self):
        # "ba" has the best DLM score but no acoustic alignment
        text, _ = rescore_beam(self.scored(), 1.0)
        assert text != "ba"

    def test_all_infeasible_falls_back_to_dlm(self):
        scored = [(BeamCandidate("x", -2.0), NEG_INF), (BeamCandidate("y", -1.0), NEG_INF)]
        text, rows = rescore_beam(scored, 1.0)
        assert text == "y"
        assert all(r["blended"] is None for r in rows)

    def test_scale_invariance(self):
        """Scaling dlm scores by c and lambda by 1/c keeps the winner."""
        scored = self.scored()
        for lam in (0.25, 1.0, 2.5):
            base, _ = rescore_beam(scored, lam)
            c = 3.7
            scaled = [(BeamCandidate(b.text, b.dlm_logprob * c, b.origin), a)
                      for b, a in scored]
            got, _ = rescore_beam(scaled, lam / c)
            assert got == base


class TestDsrDecode:
    def test_recomputes_and_validates_hypothesis(self):
        params = init_model(TINY_AB, seed=30)
        sp = sample_speaker_params(1, 0, identity=True, vocab=AB)
        E = synthesize_emissions("ab", sp, Rng(1).derive("e"), AB)
        cfg = DSRConfig(n_best=4, nucleus_p=0.9, lam=0.5, max_decode_len=6)
        text, diag = dsr_decode(params, E, cfg, vocab=AB)
        assert diag["hypothesis"] == "ab"
        assert {r["origin"] for r in diag["beam"]} >= {"asr_passthrough"}
        with pytest.raises(ValueError):
            dsr_decode(params, E, cfg, hypothesis="wrong", vocab=AB)

    def test_deterministic(self):
        params = init_model(TINY_AB, seed=31)
        sp = sample_speaker_params(2, 1, vocab=AB)
        E = synthesize_emissions("abab", sp, Rng(2).derive("e"), AB)
        cfg = DSRConfig(n_best=8, nucleus_p=0.9, lam=1.0, max_decode_len=8)
        a = dsr_decode(params, E, cfg, vocab=AB)[0]
        b = dsr_decode(params, E, cfg, vocab=AB)[0]
        assert a == b


class TestTuneLambda:
    def test_single_value_grid(self):
        params = init_model(TINY_AB, seed=40)
        sp = sample_speaker_params(3, 0, vocab=AB)
        val = []
        rng = Rng(3).derive("v")
        for i, text in enumerate(("ab", "ba", "abab")):
            val.append((text, synthesize_emissions(text, sp, rng, AB, i)))
        lam, rows = tune_lambda(params, val, grid=(0.7,),
                                cfg=DSRConfig(n_best=4, max_decode_len=6), vocab=AB)
        assert lam == 0.7 and len(rows) == 1

    def test_ties_prefer_smaller_lambda(self):
        params = init_model(TINY_AB, seed=41)
        sp = sample_speaker_params(3, 0, identity=True, vocab=AB)
        val = [("ab", synthesize_emissions("ab", sp, Rng(4).derive("v"), AB))]
        lam, rows = tune_lambda(params, val, grid=(0.0, 1.0, 2.0),
                                cfg=DSRConfig(n_best=4, max_decode_len=6), vocab=AB)
        wers = [r["wer"] for r in rows]
        assert lam == min(g for g, w in zip((0.0, 1.0, 2.0), wers) if w == min(wers))

    def test_empty_validation_rejected(self):
        params = init_model(TINY_AB, seed=42)
        with pytest.raises(ValueError):
            tune_lambda(params, [], grid=(0.5,), vocab=AB)


class TestLmRescore:
    def test_weight_zero_is_asr_argmax(self):
        nbest = [ScoredHypothesis("a b", -3.0, -10.0),
                 ScoredHypothesis("b a", -1.0, -50.0)]
        assert lm_rescore(nbest, lm=None, lm_weight=0.0) == "b a"

    def test_single_candidate(self):
        nbest = [ScoredHypothesis("only", -2.0, -1.0)]
        assert lm_rescore(nbest, None, 0.5) == "only"

    def test_missing_lm_scores_computed(self):
        class StubLM:
            def logprob(self, words):
                return -1.0 * len(words)

        nbest = [ScoredHypothesis("a b c", -1.0, None),
                 ScoredHypothesis("a", -1.5, None)]
        assert lm_rescore(nbest, StubLM(), 1.0) == "a"

    def test_empty_nbest(self):
        with pytest.raises(ValueError):
            lm_rescore([], None, 0.0)


class TestExactMarginal:
    def one_hot_emissions(self, text, vocab):
        ids = vocab.encode(text)
        V = len(vocab.chars) + 1
        logp = np.full((len(ids), V), NEG_INF, dtype=np.float32)
        logp[np.arange(len(ids)), ids] = 0.0
        return EmissionMatrix(logp)

    def random_emissions(self, rng, T, vocab):
        V = len(vocab.chars) + 1
        u = rng.uniform(T * V).reshape(T, V)
        logp = np.log(np.maximum(u, 1e-3))
        logp -= np.logaddexp.reduce(logp, axis=1, keepdims=True)
        return EmissionMatrix(logp.astype(np.float32))

    def test_exact_dominates_bound(self):
        rng = Rng(7).derive("jensen")
        params = init_model(TINY_AB, seed=50)
        for trial in range(25):
            T = 1 + rng.integers(4)
            E = self.random_emissions(rng, T, AB)
            y = ["a", "ab", "ba", "b"][rng.integers(4)]
            exact, bound = dsr_exact_marginal(params, E, y, max_len=4, vocab=AB)
            assert exact >= bound - 1e-9

    def test_one_hot_acoustic_collapses_to_equality(self):
        params = init_model(TINY_AB, seed=51)
        E = self.one_hot_emissions("ab", AB)
        exact, bound = dsr_exact_marginal(params, E, "ba", max_len=4, vocab=AB)
        _, want = forward_logprob(params, "ab", "ba", AB)
        assert abs(exact - want) < 1e-9
        assert abs(bound - want) < 1e-9

    def test_uniform_dlm_independent_of_emissions(self):
        params = init_model(TINY_AB, seed=52)
        for t in params.tensors.values():
            t[...] = 0.0
        rng = Rng(8).derive("unif")
        y = "ab"
        n_out = TINY_AB.n_out
        want = -(len(y) + 1) * np.log(n_out)
        for trial in range(3):
            E = self.random_emissions(rng, 3, AB)
            exact, _ = dsr_exact_marginal(params, E, y, max_len=4, vocab=AB)
            assert abs(exact - want) < 1e-5

    def test_instance_size_guard(self):
        params = init_model(TINY_AB, seed=53)
        E = self.random_emissions(Rng(9).derive("big"), 5, AB)
        with pytest.raises(ValueError):
            dsr_exact_marginal(params, E, "a", max_len=4, vocab=AB)
