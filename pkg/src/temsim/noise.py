"""Noise records for path simulation: Brownian and Poisson increments plus
the regime value at each grid node, with block-sum coarsening and a binary
replay format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import BinaryIO, Optional

import numpy as np

from .rng import PathStreams

_MAGIC = b"TEMN"
_VERSION = 1


@dataclass(frozen=True)
class NoiseIncrements:
    """Per-step randomness of one path on a uniform grid of step ``delta``.

    ``brownian[k]`` and ``poisson[k]`` drive the step from node k to k+1;
    ``regimes`` (when attached) holds the chain value at nodes 0..K.
    """

    delta: float
    brownian: np.ndarray
    poisson: np.ndarray
    regimes: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        b = np.asarray(self.brownian, dtype=float)
        n = np.asarray(self.poisson, dtype=np.int64)
        if b.ndim != 1 or n.ndim != 1 or b.shape != n.shape:
            raise ValueError("brownian and poisson must be 1-d arrays of equal length")
        if n.size and n.min() < 0:
            raise ValueError("poisson increments must be nonnegative")
        object.__setattr__(self, "brownian", b)
        object.__setattr__(self, "poisson", n)
        if self.regimes is not None:
            r = np.asarray(self.regimes, dtype=np.int64)
            if r.shape != (b.size + 1,):
                raise ValueError("regimes must have one entry per grid node (K+1)")
            object.__setattr__(self, "regimes", r)

    @property
    def num_steps(self) -> int:
        return self.brownian.size


def make_noise(delta: float, num_steps: int, jump_intensity: float,
               streams: PathStreams) -> NoiseIncrements:
    """Draw the Brownian/Poisson channels for one path.

    Both channels come from disjoint per-path substreams in ``streams``,
    so they are mutually independent and independent of the chain
    uniforms. Regimes are not drawn here; attach a chain trajectory with
    :func:`attach_regimes`.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if jump_intensity < 0.0:
        raise ValueError("jump_intensity must be nonnegative")
    brownian = streams.brownian.standard_normal(num_steps) * np.sqrt(delta)
    poisson = streams.poisson.poisson(jump_intensity * delta, num_steps).astype(np.int64)
    return NoiseIncrements(delta=delta, brownian=brownian, poisson=poisson)


def attach_regimes(noise: NoiseIncrements, regimes: np.ndarray) -> NoiseIncrements:
    return replace(noise, regimes=np.asarray(regimes, dtype=np.int64))


def block_sums(values: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` entries along the last axis."""
    n = values.shape[-1]
    if n % factor:
        raise ValueError(f"{n} increments not divisible by factor {factor}")
    return values.reshape(*values.shape[:-1], n // factor, factor).sum(axis=-1)


def coarsen_noise(fine: NoiseIncrements, factor: int) -> NoiseIncrements:
    """Aggregate a fine record onto a grid ``factor`` times coarser.

    Brownian and Poisson increments are block sums; the regime at a coarse
    node is the fine regime at the same node. Both total Brownian
    displacement and total jump count are preserved exactly.
    """
    if factor < 1 or int(factor) != factor:
        raise ValueError("factor must be a positive integer")
    factor = int(factor)
    if factor == 1:
        return fine
    if fine.num_steps % factor:
        raise ValueError(
            f"{fine.num_steps} fine steps not divisible by coarsening factor {factor}"
        )
    regimes = None if fine.regimes is None else fine.regimes[::factor]
    return NoiseIncrements(
        delta=fine.delta * factor,
        brownian=block_sums(fine.brownian, factor),
        poisson=block_sums(fine.poisson, factor),
        regimes=regimes,
    )


# -- binary replay records -----------------------------------------------------
#
# Little-endian layout:
#   magic   4s   b"TEMN"
#   version u32
#   seed    u64  master seed of the run
#   path    u64  path index within the run
#   delta   f64
#   M       u64  delay steps (tau / delta)
#   lambda  f64  jump intensity
#   K       u64  number of increments
#   flags   u8   bit 0: regimes present
# followed by K float64 Brownian increments, K int64 Poisson increments,
# and (if flagged) K+1 int64 regime values.

_HEADER = struct.Struct("<4sIQQdQdQB")


def save_noise(noise: NoiseIncrements, fobj: BinaryIO, *, seed: int,
               path_index: int, tau_steps: int, jump_intensity: float) -> None:
    has_regimes = noise.regimes is not None
    fobj.write(_HEADER.pack(
        _MAGIC, _VERSION, seed, path_index, noise.delta, tau_steps,
        jump_intensity, noise.num_steps, 1 if has_regimes else 0,
    ))
    fobj.write(noise.brownian.astype("<f8").tobytes())
    fobj.write(noise.poisson.astype("<i8").tobytes())
    if has_regimes:
        fobj.write(noise.regimes.astype("<i8").tobytes())


def load_noise(fobj: BinaryIO) -> tuple[NoiseIncrements, dict]:
    raw = fobj.read(_HEADER.size)
    magic, version, seed, path_index, delta, tau_steps, lam, k, flags = \
        _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise ValueError("not a noise record (bad magic)")
    if version != _VERSION:
        raise ValueError(f"unsupported noise record version {version}")
    brownian = np.frombuffer(fobj.read(8 * k), dtype="<f8").astype(float)
    poisson = np.frombuffer(fobj.read(8 * k), dtype="<i8").astype(np.int64)
    regimes = None
    if flags & 1:
        regimes = np.frombuffer(fobj.read(8 * (k + 1)), dtype="<i8").astype(np.int64)
    noise = NoiseIncrements(delta=delta, brownian=brownian, poisson=poisson,
                            regimes=regimes)
    header = {"seed": seed, "path_index": path_index, "delta": delta,
              "tau_steps": tau_steps, "jump_intensity": lam}
    return noise, header
