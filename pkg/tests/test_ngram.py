import math

import pytest

from dsr.corpus import Transcript
from dsr.ngram import (
    EOS,
    UNK,
    NGramLM,
    lm_logprob,
    load_ngram,
    perplexity,
    save_ngram,
    train_ngram,
)


def corpus(*sents):
    return [Transcript(s, i) for i, s in enumerate(sents)]


class TestTraining:
    def test_bigram_hand_computation(self):
        """p(b|a) from {"a b", "a c"} with D = 0.75, worked by hand from
        the interpolated absolute-discounting recursion.

        Outcome tokens: a b </s> a c </s>  (N=6); types {a,b,c,</s>}
        (V1=4); event space 5 (+unk).
          p1(b)   = (1-D)/6 + (D*4/6) * (1/5)
          p(b|a)  = (1-D)/2 + (D*2/2) * p1(b)
        """
        lm = train_ngram(corpus("a b", "a c"), order=2, discount=0.75)
        d = 0.75
        p1_b = (1 - d) / 6 + (d * 4 / 6) * (1 / 5)
        want = (1 - d) / 2 + (d * 2 / 2) * p1_b
        got = math.exp(lm.word_logprob(["a"], "b"))
        assert abs(got - want) < 1e-12

    def test_unigram_relative_frequencies(self):
        lm = train_ngram(corpus("a a b"), order=1, discount=0.5)
        # outcomes: a a b </s>; N=4, V1=3, events=4
        p_a = math.exp(lm.word_logprob([], "a"))
        want = (2 - 0.5) / 4 + (0.5 * 3 / 4) * (1 / 4)
        assert abs(p_a - want) < 1e-12
        # unknown words get exactly the backed-off uniform mass
        p_unk = math.exp(lm.word_logprob([], "zzz"))
        assert abs(p_unk - (0.5 * 3 / 4) * (1 / 4)) < 1e-12

    def test_conditionals_normalize(self):
        lm = train_ngram(
            corpus("the cat sat", "the dog sat", "a cat ran", "the cat ran far"),
            order=3,
        )
        events = sorted(lm.vocab) + [UNK]
        for ctx in ([], ["the"], ["the", "cat"], ["never", "seen"], ["cat"]):
            total = sum(math.exp(lm.word_logprob(ctx, w)) for w in events)
            assert abs(total - 1.0) < 1e-6, ctx

    def test_positive_probability_everywhere(self):
        lm = train_ngram(corpus("one two three"), order=2)
        assert lm.word_logprob(["qqq"], "zzz") > -math.inf
        assert math.exp(lm.word_logprob(["two"], "three")) > 0

    def test_validation(self):
        with pytest.raises(ValueError):
            train_ngram([], order=2)
        with pytest.raises(ValueError):
            train_ngram(corpus("a"), order=9)
        with pytest.raises(ValueError):
            train_ngram(corpus("a"), order=2, discount=1.5)


class TestScoring:
    def test_logprob_nonpositive(self):
        lm = train_ngram(corpus("a b c", "b c a"), order=2)
        assert lm_logprob(lm, ["a", "b"]) <= 0
        assert lm_logprob(lm, ["qqq"]) <= 0

    def test_training_sentence_beats_permutations(self):
        lm = train_ngram(corpus("the cat sat"), order=3)
        import itertools

        words = ["the", "cat", "sat"]
        target = lm_logprob(lm, words)
        for perm in itertools.permutations(words):
            assert target >= lm_logprob(lm, list(perm)) - 1e-12

    def test_empty_words_scores_bare_eos(self):
        lm = train_ngram(corpus("a b"), order=2)
        assert lm.logprob([]) == lm.word_logprob([], EOS)

    def test_lm_logprob_requires_words(self):
        lm = train_ngram(corpus("a b"), order=2)
        with pytest.raises(ValueError):
            lm_logprob(lm, [])


class TestPerplexity:
    def test_uniform_model_perplexity_equals_event_count(self):
        events = 8
        probs = {(w,): 1.0 / events for w in ["a", "b", "c", EOS]}
        lm = NGramLM(1, 0.5, {"a", "b", "c", EOS}, probs, {(): 0.5}, events)
        ppl = perplexity(lm, corpus("a b c", "b a c"))
        assert abs(ppl - events) < 1e-9

    def test_train_set_not_worse_than_heldout(self):
        train = corpus("the cat sat", "the dog sat", "a cat ran")
        held = corpus("the dog ran", "a dog sat far")
        lm = train_ngram(train, order=2)
        assert perplexity(lm, train) <= perplexity(lm, held)

    def test_at_least_one(self):
        lm = train_ngram(corpus("a b a b"), order=2)
        assert perplexity(lm, corpus("a b")) >= 1.0


class TestPersistence:
    def test_roundtrip_exact(self, tmp_path):
        lm = train_ngram(corpus("the cat sat", "a dog ran", "the cat ran"), order=3)
        path = tmp_path / "model.ngram"
        save_ngram(lm, path)
        back = load_ngram(path)
        assert back.order == lm.order and back.discount == lm.discount
        assert back.vocab == lm.vocab and back.event_size == lm.event_size
        assert back.probs == lm.probs and back.backoffs == lm.backoffs

    def test_bad_header(self, tmp_path):
        p = tmp_path / "x.ngram"
        p.write_text("not a model\n")
        with pytest.raises(ValueError):
            load_ngram(p)
