"""Binary checkpoint format for denoiser parameters.

Layout, little-endian: magic "DLMC", version uint32, config JSON block
(uint32 length + utf-8 bytes), then per tensor in a fixed order:
name length uint32, name bytes, rank uint32, dims uint32 each, row-major
float32 data.  Step number rides inside the JSON block.  Round-trips are
bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import DLMConfig, DLMParameters, _tensor_shapes

MAGIC = b"DLMC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(params: DLMParameters, step: int, path) -> None:
    blob = json.dumps({"config": params.config.to_dict(), "step": step}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for name, t in params.tensors.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", t.ndim))
            f.write(struct.pack(f"<{t.ndim}I", *t.shape))
            f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[DLMParameters, DLMConfig, int]:
    def read_exact(f, n: int) -> bytes:
        b = f.read(n)
        if len(b) != n:
            raise CheckpointError(f"{path}: truncated file")
        return b

    with open(path, "rb") as f:
        if read_exact(f, 4) != MAGIC:
            raise CheckpointError(f"{path}: bad magic")
        version, blob_len = struct.unpack("<II", read_exact(f, 8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        meta = json.loads(read_exact(f, blob_len).decode("utf-8"))
        config = DLMConfig(**meta["config"])
        step = int(meta["step"])

        expected = dict(_tensor_shapes(config))
        tensors: dict[str, np.ndarray] = {}
        for name in expected:
            (name_len,) = struct.unpack("<I", read_exact(f, 4))
            got = read_exact(f, name_len).decode("utf-8")
            if got != name:
                raise CheckpointError(f"{path}: tensor {got!r}, expected {name!r}")
            (rank,) = struct.unpack("<I", read_exact(f, 4))
            dims = struct.unpack(f"<{rank}I", read_exact(f, 4 * rank))
            if tuple(dims) != tuple(expected[name]):
                raise CheckpointError(
                    f"{path}: {name} has shape {dims}, config implies {expected[name]}"
                )
            count = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(read_exact(f, 4 * count), dtype="<f4")
            tensors[name] = data.reshape(dims).copy()
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes")
    return DLMParameters(config, tensors), config, step
