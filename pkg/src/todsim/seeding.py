"""Stable seed derivation so corpus runs reproduce under any scheduling."""

from __future__ import annotations

import hashlib


def derive_seed(*parts) -> int:
    """Map nested run coordinates to a 63-bit seed, stably across platforms."""
    key = "|".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1
