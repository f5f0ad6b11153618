"""Reproducible random streams for parallel path simulation.

Every source of randomness in a run derives from one master seed. Each
simulated path owns three independent substreams (Brownian increments,
Poisson increments, regime-chain uniforms), keyed by
``(master_seed, path_index, channel)`` through a counter-based Philox
generator. Any path can therefore be regenerated in isolation, and results
do not depend on how paths are batched across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHANNEL_BROWNIAN = 0
CHANNEL_POISSON = 1
CHANNEL_CHAIN = 2


def substream(master_seed: int, path_index: int, channel: int) -> np.random.Generator:
    """Generator for one (path, channel) pair, independent of all others."""
    if path_index < 0:
        raise ValueError("path_index must be >= 0")
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(path_index, channel))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class PathStreams:
    """The three per-path generators used by one path simulation."""

    brownian: np.random.Generator
    poisson: np.random.Generator
    chain: np.random.Generator


def path_streams(master_seed: int, path_index: int) -> PathStreams:
    return PathStreams(
        brownian=substream(master_seed, path_index, CHANNEL_BROWNIAN),
        poisson=substream(master_seed, path_index, CHANNEL_POISSON),
        chain=substream(master_seed, path_index, CHANNEL_CHAIN),
    )
