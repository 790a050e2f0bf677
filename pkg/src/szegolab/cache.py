"""On-disk cache for lattice eigendecompositions.

Entries are ``.npz`` files named by a SHA-256 of the physics-relevant
parameters only, so renaming an experiment or moving its output reuses them.
A hit replays the stored arrays bit for bit.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

ENV_VAR = "SZEGO_CACHE_DIR"
# entries above this size are not written (large d=1 boxes)
MAX_ENTRY_BYTES = 400 * 2 ** 20


def content_key(**fields) -> str:
    blob = json.dumps(fields, sort_keys=True, separators=(",", ":"), default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()


class EigenCache:
    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.hits = 0
        self.misses = 0

    @classmethod
    def from_config(cls, directory: str | None) -> "EigenCache | None":
        directory = os.environ.get(ENV_VAR) or directory
        return cls(directory) if directory else None

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.npz"

    def load(self, key: str) -> dict[str, np.ndarray] | None:
        path = self._path(key)
        if not path.exists():
            self.misses += 1
            return None
        with np.load(path, allow_pickle=False) as data:
            out = {k: data[k] for k in data.files}
        self.hits += 1
        return out

    def store(self, key: str, **arrays: np.ndarray) -> bool:
        size = sum(a.nbytes for a in arrays.values())
        if size > MAX_ENTRY_BYTES:
            log.info("not caching %s: %.0f MB exceeds cap", key[:12], size / 2 ** 20)
            return False
        self.directory.mkdir(parents=True, exist_ok=True)
        tmp = self.directory / f".{key}.{os.getpid()}.tmp.npz"
        np.savez(tmp, **arrays)
        os.replace(tmp, self._path(key))
        return True
