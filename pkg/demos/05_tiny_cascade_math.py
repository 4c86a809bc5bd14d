# The two-model cascade, computed exactly on an instance small enough to
# enumerate: p(y|x) = sum over intermediate strings h of
# p_dlm(y|h) * p_asr(h|x), and its expectation lower bound.
#
#   python demos/05_tiny_cascade_math.py

import numpy as np

from dsr.corpus import Vocabulary
from dsr.ctc import NEG_INF, ctc_forward_logprob
from dsr.decode import dsr_exact_marginal, enumerate_strings
from dsr.dlm import DLMConfig, forward_logprob, init_model
from dsr.emissions import EmissionMatrix
from dsr.rng import Rng

vocab = Vocabulary(chars=("a", "b"))
params = init_model(DLMConfig(d_model=8, n_heads=2, mlp_hidden=16,
                              n_encoder_layers=1, n_decoder_layers=1,
                              max_seq_len=16, dropout_rate=0.0,
                              vocab_size=vocab.n_dlm), seed=5)

rng = Rng(9).derive("demo")
T = 3
u = rng.uniform(T * 3).reshape(T, 3)
logp = np.log(np.maximum(u, 1e-3))
logp -= np.logaddexp.reduce(logp, axis=1, keepdims=True)
E = EmissionMatrix(logp.astype(np.float32))

y = "ab"
print(f"target y = {y!r}, {T} frames, alphabet {vocab.chars}")
print("\nintermediate strings h with acoustic mass:")
total = 0.0
for h in enumerate_strings(vocab, max_len=T):
    asr = ctc_forward_logprob(E, h, vocab)
    if asr == NEG_INF:
        continue
    _, dlm = forward_logprob(params, h, y, vocab)
    total += np.exp(asr)
    print(f"  h={h!r:6}  p_asr {np.exp(asr):.4f}  log p_dlm(y|h) {dlm:8.3f}")
print(f"acoustic mass accounted for: {total:.6f}")

exact, bound = dsr_exact_marginal(params, E, y, max_len=T, vocab=vocab)
print(f"\nexact log p(y|x)      = {exact:.6f}")
print(f"expectation bound     = {bound:.6f}")
print(f"exact >= bound        : {exact >= bound - 1e-9}")

# a one-hot acoustic distribution collapses the two to the same value
ids = vocab.encode("ab")
hot = np.full((2, 3), NEG_INF, dtype=np.float32)
hot[np.arange(2), ids] = 0.0
exact1, bound1 = dsr_exact_marginal(params, EmissionMatrix(hot), y, 4, vocab)
print(f"\none-hot acoustics: exact {exact1:.6f} == bound {bound1:.6f}")
