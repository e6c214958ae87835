"""Deterministic checkpoint files.

Layout: 4-byte magic, little-endian uint32 format version, uint64 header
length, a canonical JSON header (sorted keys, no whitespace) holding the run
config, the vocabulary, and an ordered tensor manifest, then the raw
little-endian tensor payloads in manifest order.  Saving the same model twice
produces identical bytes, and a load/save round trip is byte-preserving.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .corpus import Vocab
from .errors import CheckpointError

MAGIC = b"STRC"
VERSION = 1

_DTYPES = {
    "float32": np.float32,
    "float64": np.float64,
    "int64": np.int64,
    "int32": np.int32,
}


def save_checkpoint(model, path) -> None:
    from .model import StrategyModel  # local import to avoid a cycle

    assert isinstance(model, StrategyModel)
    manifest = []
    payloads = []
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        if arr.dtype.name not in _DTYPES:
            raise CheckpointError(f"unsupported tensor dtype {arr.dtype.name} for {name}")
        manifest.append({"name": name, "dtype": arr.dtype.name, "shape": list(arr.shape)})
        payloads.append(np.ascontiguousarray(arr).tobytes())
    header = json.dumps(
        {
            "config": model.cfg.to_dict(),
            "vocab": model.vocab.to_dict(),
            "tensors": manifest,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for chunk in payloads:
            fh.write(chunk)


def load_checkpoint(path):
    from .model import StrategyModel

    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such checkpoint: {path}")
    blob = path.read_bytes()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {VERSION}")
    (header_len,) = struct.unpack_from("<Q", blob, 8)
    header_end = 16 + header_len
    if header_end > len(blob):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[16:header_end].decode("utf-8"))
        cfg = ModelConfig(**header["config"])
        vocab = Vocab.from_dict(header["vocab"])
        manifest = header["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: bad header ({exc})") from exc

    model = StrategyModel(cfg, vocab)
    if any(entry.get("dtype") == "float64" for entry in manifest):
        model = model.double()
    expected = model.state_dict()
    if [m["name"] for m in manifest] != list(expected.keys()):
        raise CheckpointError(f"{path}: tensor manifest does not match the model")

    state = {}
    offset = header_end
    for entry in manifest:
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(f"{path}: unknown dtype {entry['dtype']!r}")
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * np.dtype(dtype).itemsize
        if offset + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated payload at {entry['name']}")
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape)
        if tuple(expected[entry["name"]].shape) != shape:
            raise CheckpointError(
                f"{path}: {entry['name']} has shape {shape}, "
                f"model expects {tuple(expected[entry['name']].shape)}"
            )
        state[entry["name"]] = torch.from_numpy(arr.copy())
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    model.load_state_dict(state)
    return model
