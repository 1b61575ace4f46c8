"""Seeded random streams for reproducible experiments.

Every random quantity in splinelens is drawn from a ``numpy`` generator built
on the counter-based Philox bit generator. Streams are keyed by the run seed
plus a tuple of integers naming the consumer (draw index, instance index,
...), so results do not depend on scheduling or thread count.
"""

import zlib

import numpy as np


def _stream_key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"Stream keys must be non-negative, got {part}")
    return int(part)


def make_rng(seed: int, *stream: int | str) -> np.random.Generator:
    """Build the generator for ``seed`` and an optional substream path.

    Args:
        seed: Run seed (non-negative integer).
        *stream: Substream path; strings are hashed to stable integers.

    Returns:
        A ``numpy.random.Generator`` backed by ``Philox``.
    """
    entropy = [_stream_key(seed), *(_stream_key(part) for part in stream)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
