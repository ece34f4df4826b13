"""Versioned checkpoint: architecture, flat parameters and RNG state."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .network import Architecture, ModelParameters

MAGIC = b"THZFMTL\x00"
VERSION = 1
_HEAD = "<HI"


def save_checkpoint(path, params: ModelParameters, rng: np.random.Generator | None = None,
                    iteration: int = 0) -> None:
    header = {
        "architecture": params.architecture.to_dict(),
        "num_params": params.num_params,
        "iteration": int(iteration),
        "rng_state": None if rng is None else rng.bit_generator.state,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(_HEAD, VERSION, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(params.flat_params, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return ``(params, rng, iteration)``; ``rng`` is None if none was stored."""
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    version, hlen = struct.unpack_from(_HEAD, data, len(MAGIC))
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    start = len(MAGIC) + struct.calcsize(_HEAD)
    header = json.loads(data[start:start + hlen])
    flat = np.frombuffer(data[start + hlen:], dtype="<f8").copy()
    if flat.size != header["num_params"]:
        raise ValueError(f"{path}: truncated parameter block")
    params = ModelParameters(Architecture.from_dict(header["architecture"]), flat)
    rng = None
    if header["rng_state"] is not None:
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = header["rng_state"]
    return params, rng, header["iteration"]
