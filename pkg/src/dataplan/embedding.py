"""Deterministic hashing embedding for metadata and vector search.

A stand-in for a learned embedder that keeps search fully reproducible
offline: any model can be swapped in behind the same ``embed`` contract.
"""

from __future__ import annotations

import hashlib
import math
import re

DIMENSIONS = 64

_TOKEN_SPLIT = re.compile(r"[^0-9A-Za-z]+")


def tokenize(text: str) -> list:
    """Lowercased alphanumeric tokens of ``text``."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def token_hash(token: str) -> int:
    """Stable 64-bit hash: first 8 bytes of SHA-256, big-endian."""
    return int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big")


def embed(text: str) -> list:
    """Embed text into a fixed 64-dim unit vector (zero vector for empty text).

    Each token adds +1 to dimension ``hash64(token) mod 64``; the result is
    L2-normalized.
    """
    vector = [0.0] * DIMENSIONS
    for token in tokenize(text):
        vector[token_hash(token) % DIMENSIONS] += 1.0
    norm = math.sqrt(sum(x * x for x in vector))
    if norm == 0.0:
        return vector
    return [x / norm for x in vector]


def cosine(u: list, v: list) -> float:
    """Cosine similarity; zero when either vector is zero."""
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / (nu * nv)
