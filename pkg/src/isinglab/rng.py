"""Deterministic counter-based random streams.

Every stochastic routine in the package draws from a stream identified by
``(master seed, purpose tag, replica index)``.  Streams are backed by the
counter-based Philox generator, keyed by a SHA-256 digest of the identifier,
so replicas can run in any order (or concurrently) and still reproduce
byte-identical results.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, tag: str, replica: int = 0) -> np.random.Generator:
    """Return the Generator for stream id (seed, tag, replica)."""
    msg = f"{int(seed)}|{tag}|{int(replica)}".encode()
    digest = hashlib.sha256(msg).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def substream_tags(tag: str, *parts) -> str:
    """Compose a hierarchical purpose tag, e.g. substream_tags('scan', 'er', 64)."""
    return "/".join([tag, *map(str, parts)])


def derive_seed(seed: int, tag: str, replica: int = 0) -> int:
    """Stable 63-bit integer seed for components that take a plain seed."""
    msg = f"derive|{int(seed)}|{tag}|{int(replica)}".encode()
    digest = hashlib.sha256(msg).digest()
    return int.from_bytes(digest[:8], "little") >> 1
