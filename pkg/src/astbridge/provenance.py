"""Provenance headers stamped into every artifact file.

The config hash covers the effective configuration minus output locations,
and input hashes cover file contents, so identical inputs and seeds yield
byte-identical artifacts regardless of where they are written.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__

_PATH_KEYS = {"out", "out_dir", "log", "log_path", "output"}


def config_hash(config: dict) -> str:
    trimmed = {k: v for k, v in config.items() if k not in _PATH_KEYS}
    blob = json.dumps(trimmed, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def file_hash(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def tree_hash(root: str | Path, pattern: str = "**/*") -> str:
    """Order-independent combined hash of every file under a directory."""
    digest = hashlib.sha256()
    for path in sorted(Path(root).glob(pattern)):
        if path.is_file():
            digest.update(path.relative_to(root).as_posix().encode("utf-8"))
            digest.update(bytes.fromhex(file_hash(path)))
    return digest.hexdigest()


def stamp(config: dict, seed: int, input_hashes: dict[str, str]) -> dict:
    return {
        "tool_version": __version__,
        "config_hash": config_hash(config),
        "seed": seed,
        "input_hashes": dict(sorted(input_hashes.items())),
    }
