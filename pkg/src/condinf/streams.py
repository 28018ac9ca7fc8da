"""Named, splittable random streams.

Every stream is a Philox counter-based generator keyed by
``SeedSequence(seed, spawn_key=(crc32(experiment), index))``. The stream
for replicate ``index`` of an experiment therefore depends only on the run
seed, the experiment name and the index, so serial and parallel runs draw
identical numbers and two methods given the same name are paired.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "stream_key"]


def stream_key(experiment: str) -> int:
    return zlib.crc32(experiment.encode("utf-8"))


def stream(seed: int, experiment: str, index: int = 0) -> np.random.Generator:
    """Generator for replicate ``index`` of ``experiment`` under ``seed``."""
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(stream_key(experiment), int(index)))
    return np.random.Generator(np.random.Philox(ss))
