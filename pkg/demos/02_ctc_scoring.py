# CTC scoring on a small emission matrix: exact forward probabilities,
# the repeat rule, and prefix beam search with n-gram fusion.
#
#   python demos/02_ctc_scoring.py

import numpy as np

from dsr.corpus import Transcript, Vocabulary
from dsr.ctc import NEG_INF, ctc_forward_logprob, greedy_collapse, prefix_beam_search
from dsr.emissions import EmissionMatrix
from dsr.ngram import train_ngram

vocab = Vocabulary(chars=("a", "b", " "))
V = len(vocab.chars) + 1  # + blank

# Hand-built emissions: 5 frames leaning toward "a b" with some smear.
peaks = [0, 3, 2, 1, 1]  # a, blank, space, b, b
logp = np.full((5, V), np.log(0.05))
for t, k in enumerate(peaks):
    logp[t, k] = np.log(0.85)
logp -= np.logaddexp.reduce(logp, axis=1, keepdims=True)
E = EmissionMatrix(logp.astype(np.float32))

print("greedy collapse:", repr(greedy_collapse(E, vocab)))

print("\nexact forward scores (sum over alignments):")
for y in ("a b", "ab", "a", "b", "aa", ""):
    lp = ctc_forward_logprob(E, y, vocab)
    shown = f"{lp:9.4f}" if lp > NEG_INF else "  -inf (no alignment fits)"
    print(f"  p({y!r:7}) -> {shown}")

# The repeat rule: "aa" inside 2 frames is impossible (a separating
# blank is required), 3 frames make it merely unlikely.
short = EmissionMatrix(logp[:2].copy())
print("\nrepeat rule: logp('aa' | 2 frames) =",
      ctc_forward_logprob(short, "aa", vocab))

# Prefix beam search enumerates prefixes while summing (blank, non-blank)
# path mass; a word LM is fused at word boundaries.
lm = train_ngram([Transcript("a b", 0), Transcript("b a", 1), Transcript("a", 2)],
                 order=2)
print("\nn-best without LM:")
for h in prefix_beam_search(E, 5, vocab=vocab):
    print(f"  {h.text!r:9} asr {h.asr_logprob:8.4f}")
print("n-best with LM fusion (weight 1.0):")
for h in prefix_beam_search(E, 5, lm, lm_weight=1.0, vocab=vocab):
    print(f"  {h.text!r:9} asr {h.asr_logprob:8.4f}  lm {h.lm_logprob:8.4f}")
