"""Stable seed derivation shared by every module."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from an arbitrary tuple of ints/strings.

    Uses blake2b over the ``repr`` of the parts, so the result does not depend
    on ``PYTHONHASHSEED`` or on the platform.
    """
    digest = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_for(*parts: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
