"""Seeded random streams.

Every random draw in the package comes from a ``numpy.random.Generator``.
Named substreams are derived from ``(master seed, purpose tag, index)`` so a
run is reproducible regardless of evaluation order::

    SeedSequence([seed, crc32(tag), index])
"""
from __future__ import annotations

import zlib

import numpy as np



def tag_code(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def substream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, purpose, index) triple."""
    if seed < 0 or index < 0:
        raise ValueError(f"seed and index must be nonnegative, got {seed}, {index}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag_code(tag), int(index)]))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def spawn(rng, n: int) -> list[np.random.Generator]:
    """Child generators, one per task index; independent of scheduling."""
    return as_generator(rng).spawn(n)
