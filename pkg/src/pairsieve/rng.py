"""Named counter-based random substreams.

Every source of randomness in the package flows from one master seed
through a named substream, so results are reproducible regardless of
iteration order, thread count, or which pipeline stages run.
"""

from __future__ import annotations

import numpy as np

# Substream tags. Each (seed, stream, index) triple keys an independent
# Philox counter stream; index typically carries a record id, epoch, or
# step number.
_STREAMS = {
    "mixing": 1,
    "labels": 2,
    "record": 3,
    "split": 4,
    "subset": 5,
    "init": 6,
    "view": 7,
    "teacher": 8,
    "distill": 9,
    "batch": 10,
    "mask": 11,
    "bench": 12,
}

_INDEX_BITS = 48


def substream(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    """Return a Generator for the (seed, stream, index) substream."""
    if stream not in _STREAMS:
        raise KeyError(f"unknown rng stream {stream!r}")
    if not 0 <= index < (1 << _INDEX_BITS):
        raise ValueError(f"stream index out of range: {index}")
    seed64 = int(seed) & ((1 << 64) - 1)  # Philox keys are 128-bit
    key = (seed64 << 64) | (_STREAMS[stream] << _INDEX_BITS) | index
    return np.random.Generator(np.random.Philox(key=key))
