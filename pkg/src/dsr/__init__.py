"""Desk-scale denoising speech recognition.

A simulated per-speaker ASR channel produces (noisy hypothesis, clean
text) pairs from a text corpus; a character-level encoder-decoder
denoiser trains on them; decoding offers greedy correction, beam
rescoring blended with CTC acoustic scores, and a conventional n-gram
rescoring baseline, with WER evaluation and ablation harnesses.
"""

__version__ = "0.1.0"
