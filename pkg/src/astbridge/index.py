"""Persistent embedding index.

Binary layout: the 7-byte magic ``EMBIDX1``, then per entry a u32 id length,
the UTF-8 id string, and the little-endian float32 vector. The vector width
is the model's embedding dimension (100 by default) and is recorded in the
checkpoint sidecar, not in the index itself.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import SchemaError

MAGIC = b"EMBIDX1"
DEFAULT_DIM = 100


def write_index(path: str | Path, entries: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(MAGIC)
        for graph_id in sorted(entries):
            vector = np.ascontiguousarray(entries[graph_id], dtype="<f4").reshape(-1)
            encoded = graph_id.encode("utf-8")
            handle.write(struct.pack("<I", len(encoded)))
            handle.write(encoded)
            handle.write(vector.tobytes())


def read_index(path: str | Path, dim: int = DEFAULT_DIM) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise SchemaError(f"{path}: bad index magic")
    entries: dict[str, np.ndarray] = {}
    offset = len(MAGIC)
    while offset < len(blob):
        (id_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        graph_id = blob[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vector = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset)
        offset += 4 * dim
        entries[graph_id] = np.array(vector, dtype=np.float32)
    return entries


def export_tsv(path: str | Path, entries: dict[str, np.ndarray]) -> None:
    """id<TAB>v0<TAB>... lines for external projection tools."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for graph_id in sorted(entries):
            values = "\t".join(repr(float(x)) for x in np.asarray(entries[graph_id]).reshape(-1))
            handle.write(f"{graph_id}\t{values}\n")
