"""Binary model checkpoints.

Layout: the 8-byte magic ``GMNCKPT1``, then for each parameter (sorted by
name) a u32 name length, the UTF-8 name, a u32 rank, u32 extents, and the
row-major float32 payload; everything little-endian. Hyperparameters and the
label-set hash live in a JSON sidecar at ``<path>.json``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import SchemaError

MAGIC = b"GMNCKPT1"


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def save_checkpoint(path: str | Path, params: dict[str, Tensor | np.ndarray], sidecar: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(MAGIC)
        for name in sorted(params):
            raw = params[name]
            data = np.ascontiguousarray(
                raw.data if isinstance(raw, Tensor) else raw, dtype="<f4"
            )
            encoded = name.encode("utf-8")
            handle.write(struct.pack("<I", len(encoded)))
            handle.write(encoded)
            handle.write(struct.pack("<I", data.ndim))
            handle.write(struct.pack(f"<{data.ndim}I", *data.shape))
            handle.write(data.tobytes())
    sidecar_path(path).write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise SchemaError(f"{path}: bad checkpoint magic")
    params: dict[str, np.ndarray] = {}
    offset = len(MAGIC)
    while offset < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        shape = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += 4 * count
        params[name] = np.array(data, dtype=np.float32)
    side = sidecar_path(path)
    sidecar = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
    return params, sidecar
