from .model import (
    Batch,
    DLMConfig,
    DLMParameters,
    forward,
    forward_logprob,
    init_model,
    make_batch,
    total_logprob,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import TINY_CONFIG, grad_check
from .infer import DecoderState, EncodedHypothesis, encode_hypothesis
from .train import AdamW, DivergenceError, TrainConfig, learning_rate, train

__all__ = [
    "AdamW",
    "Batch",
    "CheckpointError",
    "DLMConfig",
    "DLMParameters",
    "DecoderState",
    "DivergenceError",
    "EncodedHypothesis",
    "TINY_CONFIG",
    "TrainConfig",
    "encode_hypothesis",
    "forward",
    "forward_logprob",
    "grad_check",
    "init_model",
    "learning_rate",
    "load_checkpoint",
    "make_batch",
    "save_checkpoint",
    "total_logprob",
    "train",
]
