# A tour of the simulated ASR channel: speakers, emissions, collapse,
# masking, and character substitution.
#
#   python demos/01_channel_tour.py

import numpy as np

from dsr.channel import (
    ChannelConfig,
    make_pairs,
    mask_frames,
    sample_speaker_params,
    substitute_chars,
    synthesize_emissions,
)
from dsr.corpus import DEFAULT_VOCAB, Transcript, CorpusSplit
from dsr.ctc import greedy_collapse
from dsr.rng import Rng

rng = Rng(2024).derive("demo")

# Each "speaker" is one parameterization of the corruption process.
# Confusion rows are diagonally dominant, with off-diagonal mass on
# keyboard / sound-alike neighbors.
print("== speakers ==")
for sid in range(3):
    sp = sample_speaker_params(7, sid)
    self_probs = np.diag(sp.confusion)
    print(f"speaker {sid}: self-prob {self_probs.mean():.3f}  "
          f"blank {sp.blank_prob:.2f}  duration {sp.duration_mean:.2f}  "
          f"space boost {sp.space_confusion_boost:.3f}")

sp = sample_speaker_params(7, 1)
row = sp.confusion[DEFAULT_VOCAB.char_to_id["e"]]
top = np.argsort(-row)[:5]
print("'e' most often emits:", [(DEFAULT_VOCAB.chars[i], round(float(row[i]), 3)) for i in top])

# The channel turns clean text into a frame-wise log-probability matrix;
# greedy collapse (argmax, dedupe, drop blanks) recovers a noisy
# hypothesis.
print("\n== emissions and collapse ==")
text = "the weather was bright and clear"
for trial in range(4):
    E = synthesize_emissions(text, sp, rng)
    print(f"  {greedy_collapse(E)!r}  ({E.frames} frames)")

# Masked frame spans are blended halfway toward uniform: the rows stay
# normalized and the collapse is untouched, but acoustic scores blur.
print("\n== frame masking ==")
E = synthesize_emissions(text, sp, rng)
masked = mask_frames(E, n_masks=2, max_width=30, rng=rng)
changed = int(np.sum(np.any(masked.logp != E.logp, axis=1)))
print(f"masked {changed} of {E.frames} frames; collapse unchanged: "
      f"{greedy_collapse(masked) == greedy_collapse(E)}")

# Character substitution is the cheapest noise source: each character
# flips with probability s to a different symbol.
print("\n== substitution ==")
hyp = greedy_collapse(E)
for s in (0.0, 0.1, 0.3):
    print(f"  s={s}: {substitute_chars(hyp, s, rng)!r}")

# make_pairs wires it all together into the training stream.
print("\n== training pairs ==")
sentences = [Transcript(t, i) for i, t in enumerate(
    ["time flows like a river", "the cat sat on the mat",
     "every word counts", "a quiet morning in the village"])]
split = CorpusSplit(sentences, [], [], seed=0)
for pair in make_pairs(split, ChannelConfig(seed=3, n_speakers=4), count=6):
    tag = "real " if pair.source == "real_analog" else "synth"
    print(f"  [{tag} spk={pair.speaker_id:>7}] {pair.hypothesis!r:<42} <- {pair.target!r}")
