"""Seeded random streams.

All randomness goes through numpy's Philox-4x64 generator, a counter-based
bit generator (Salmon et al., 2011). A stream is keyed by an integer seed
plus optional integer/str labels, hashed by ``SeedSequence``, so unrelated
consumers of one run seed never share draws.
"""
import zlib

import numpy as np


def _label_int(label):
    if isinstance(label, (int, np.integer)):
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def make_rng(seed, *stream):
    """Generator for ``seed`` and a stream path such as ``("split",)`` or ``("proc", 2)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_label_int(s) for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
