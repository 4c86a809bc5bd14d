# Train a small denoiser on channel pairs and watch it fix hypotheses.
# Runs in a few minutes on a laptop (toy sizes throughout).
#
#   python demos/03_train_denoiser.py

from dsr.channel import ChannelConfig, make_eval_set, make_pairs
from dsr.corpus import split_corpus
from dsr.ctc import greedy_collapse
from dsr.decode import dlm_greedy
from dsr.deskdata import make_desk_corpus
from dsr.dlm import DLMConfig, TrainConfig, train
from dsr.wer import corpus_wer

corpus = make_desk_corpus(8000, seed=1)
split = split_corpus(corpus, (0.96, 0.02, 0.02), seed=1)
channel = ChannelConfig(n_speakers=8, seed=1)

model_cfg = DLMConfig(d_model=64, n_heads=2, mlp_hidden=256,
                      n_encoder_layers=2, n_decoder_layers=1,
                      max_seq_len=256, dropout_rate=0.1)
train_cfg = TrainConfig(batch_tokens=2000, peak_lr=2e-3, warmup_steps=60,
                        max_steps=300, eval_every=100, log_every=50, seed=1)

# validation pairs come from held-out speakers: the channel the model
# will face at test time, not the one it trains on
val_set = make_eval_set(split.validation[:40], channel)
val_pairs = [(greedy_collapse(E), ref) for ref, E in val_set]

print("training...")
params, metrics = train(make_pairs(split, channel, 120_000), model_cfg,
                        train_cfg, val_pairs=val_pairs)

test_set = make_eval_set(split.test[:60], channel)
raw, fixed = [], []
for ref, E in test_set:
    hyp = greedy_collapse(E)
    out, _ = dlm_greedy(params, hyp, max_decode_len=96)
    raw.append((ref, hyp))
    fixed.append((ref, out))

print(f"\nraw channel WER : {corpus_wer(raw).wer:.3f}")
print(f"after correction: {corpus_wer(fixed).wer:.3f}")
print("\nexamples:")
for (ref, hyp), (_, out) in list(zip(raw, fixed))[:6]:
    print(f"  ref: {ref}")
    print(f"  asr: {hyp}")
    print(f"  dlm: {out}\n")
