"""Deterministic random-stream derivation.

Every stochastic routine takes a ``numpy.random.Generator``.  Experiment
replicates use independent substreams derived from a root seed and the
replicate index via ``SeedSequence(entropy=seed, spawn_key=(index,))``,
so results are reproducible and independent of execution order or worker
count.
"""
from __future__ import annotations

import numpy as np

__all__ = ["substream", "root_stream"]


def root_stream(seed: int) -> np.random.Generator:
    """Generator for single-stream use of a root seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed))


def substream(seed: int, index: int) -> np.random.Generator:
    """Generator for replicate ``index`` of root ``seed``.

    The split is ``SeedSequence(entropy=seed, spawn_key=(index,))``: distinct
    indices give statistically independent PCG64 streams, and the mapping
    (seed, index) -> stream is stable across platforms and processes.
    """
    if index < 0:
        raise ValueError("substream index must be non-negative")
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
