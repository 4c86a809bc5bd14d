# Decoding paths side by side: raw collapse, greedy correction, the
# denoiser beam blended with acoustic scores (one weight, tuned on a
# validation set), and n-gram rescoring of a first-pass CTC beam.
#
#   python demos/04_decode_and_rescore.py

from dsr.channel import ChannelConfig, make_eval_set, make_pairs
from dsr.corpus import split_corpus
from dsr.ctc import greedy_collapse, prefix_beam_search
from dsr.decode import DSRConfig, dlm_greedy, dsr_decode, lm_rescore, tune_lambda, tune_lm_weight
from dsr.deskdata import make_desk_corpus
from dsr.dlm import DLMConfig, TrainConfig, train
from dsr.ngram import train_ngram
from dsr.wer import corpus_wer

corpus = make_desk_corpus(8000, seed=2)
split = split_corpus(corpus, (0.96, 0.02, 0.02), seed=2)
channel = ChannelConfig(n_speakers=8, seed=2)

print("training a small denoiser...")
params, _ = train(
    make_pairs(split, channel, 120_000),
    DLMConfig(d_model=64, n_heads=2, mlp_hidden=256, n_encoder_layers=2,
              n_decoder_layers=1, max_seq_len=256, dropout_rate=0.1),
    TrainConfig(batch_tokens=2000, peak_lr=2e-3, warmup_steps=60,
                max_steps=300, eval_every=300, log_every=100, seed=2),
)

cfg = DSRConfig(n_best=16, nucleus_p=0.9, max_decode_len=96)
tune_set = make_eval_set(split.validation[:30], channel)
test_set = make_eval_set(split.test[:50], channel)

lam, rows = tune_lambda(params, tune_set, cfg=cfg)
print("\nlambda sweep on the tuning set:")
for r in rows[::3]:
    print(f"  lambda {r['lambda']:>5}: WER {r['wer']:.3f}")
print(f"picked lambda = {lam}")

lm = train_ngram(split.train, order=3)
nbests = [prefix_beam_search(E, 16, lm, 0.5, 0.0) for _, E in tune_set]
w, _ = tune_lm_weight(nbests, [r for r, _ in tune_set], lm)
print(f"tuned lm rescoring weight = {w}")

results = {"asr": [], "dlm-greedy": [], "dsr": [], "lm-rescore": []}
for ref, E in test_set:
    hyp = greedy_collapse(E)
    results["asr"].append((ref, hyp))
    results["dlm-greedy"].append((ref, dlm_greedy(params, hyp, 96)[0]))
    text, diag = dsr_decode(params, E, DSRConfig(n_best=16, nucleus_p=0.9,
                                                 lam=lam, max_decode_len=96))
    results["dsr"].append((ref, text))
    nbest = prefix_beam_search(E, 16, lm, 0.5, 0.0)
    results["lm-rescore"].append((ref, lm_rescore(nbest, lm, w)))

print("\ncorpus WER by decode mode:")
for mode, pairs in results.items():
    print(f"  {mode:<11} {corpus_wer(pairs).wer:.3f}")

ref, E = test_set[0]
text, diag = dsr_decode(params, E, DSRConfig(n_best=8, nucleus_p=0.9,
                                             lam=lam, max_decode_len=96))
print(f"\none utterance in detail (ref: {ref!r})")
for row in diag["beam"][:6]:
    b = "-inf" if row["blended"] is None else f"{row['blended']:.2f}"
    print(f"  [{row['origin']:>15}] {row['text']!r:<38} "
          f"dlm {row['dlm_logprob']:8.2f}  blended {b}")
