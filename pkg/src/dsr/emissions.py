"""Frame-wise log-probability matrices (the simulated ASR encoder output)
and their binary on-disk format.

File layout, little-endian: magic "DLME", version uint32, T uint32,
V uint32, then T*V float32 natural-log probabilities, row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"DLME"
VERSION = 1


@dataclass
class EmissionMatrix:
    """T rows of log-probabilities over chars + blank (blank last)."""

    logp: np.ndarray  # (T, n_chars + 1) float32
    utterance_id: int | str = 0

    @property
    def frames(self) -> int:
        return self.logp.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.logp.shape[1]

    def validate(self, atol: float = 1e-6) -> None:
        if self.logp.ndim != 2 or self.frames < 1:
            raise ValueError("emission matrix must be (T >= 1, V)")
        if not np.all(np.isfinite(self.logp)):
            raise ValueError("emission matrix contains non-finite entries")
        lse = np.logaddexp.reduce(self.logp.astype(np.float64), axis=1)
        bad = np.abs(lse).max()
        if bad > atol:
            raise ValueError(f"rows not normalized: max |logsumexp| = {bad:.2e}")


class EmissionFormatError(ValueError):
    pass


def renormalize_log_rows(logp: np.ndarray) -> np.ndarray:
    """Shift each row so it log-sum-exps to exactly 0 (float64 math)."""
    x = logp.astype(np.float64)
    x -= np.logaddexp.reduce(x, axis=1, keepdims=True)
    return x.astype(np.float32)


def write_dlme(E: EmissionMatrix, path) -> None:
    t, v = E.logp.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, t, v))
        f.write(np.ascontiguousarray(E.logp, dtype="<f4").tobytes())


def read_dlme(path, utterance_id: int | str = 0) -> EmissionMatrix:
    with open(path, "rb") as f:
        head = f.read(16)
        if len(head) < 16 or head[:4] != MAGIC:
            raise EmissionFormatError(f"{path}: bad magic")
        version, t, v = struct.unpack("<III", head[4:16])
        if version != VERSION:
            raise EmissionFormatError(f"{path}: unsupported version {version}")
        payload = f.read(4 * t * v)
        if len(payload) != 4 * t * v:
            raise EmissionFormatError(f"{path}: truncated payload")
        logp = np.frombuffer(payload, dtype="<f4").reshape(t, v)
    return EmissionMatrix(logp.copy(), utterance_id)
