"""Small shared helpers: canonical JSON, hashing, seeded RNG streams."""

from __future__ import annotations

import hashlib
import json
import zlib
from pathlib import Path

import numpy as np


def canonical_dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, compact separators)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def content_key(obj) -> str:
    return sha256_text(canonical_dumps(obj))


def stable_tag(text: str) -> int:
    """Stable 32-bit tag for deriving per-name RNG streams."""
    return zlib.crc32(text.encode("utf-8"))


def rng_stream(seed: int, *tags) -> np.random.Generator:
    """Independent deterministic generator for (seed, tags).

    String tags are folded through crc32 so stream identities do not
    depend on Python's randomized hashing.
    """
    entropy = [int(seed)]
    for tag in tags:
        entropy.append(stable_tag(tag) if isinstance(tag, str) else int(tag))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def mat_to_list(m: np.ndarray) -> list:
    return [[float(x) for x in row] for row in np.asarray(m)]
