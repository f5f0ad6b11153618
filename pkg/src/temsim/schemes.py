"""Time steppers and single-path simulation.

The exported observable of a simulation is the piecewise-constant step
process: constant on each ``[t_k, t_{k+1})`` with the grid value at its
left end. Delay lookups are pure integer shifts (``k - M``), never
interpolation, because the step always divides the delay exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import engine
from .engine import Grid, resolve_grid
from .model import ModelSpec, diffusion_g, drift_f, jump_h
from .noise import NoiseIncrements, attach_regimes, make_noise
from .regime import sample_chain_path
from .rng import PathStreams
from .truncation import TruncationPolicy, truncated_diffusion, truncated_drift


@dataclass(frozen=True)
class PathState:
    """A simulated trajectory on the grid k = -M..K (column j is node j - M)."""

    delta: float
    tau_steps: int
    values: np.ndarray
    regimes: np.ndarray
    noise: Optional[NoiseIncrements] = None

    def __post_init__(self):
        if self.values.ndim != 1:
            raise ValueError("values must be a 1-d array")
        if self.regimes.shape != (self.num_steps + 1,):
            raise ValueError("regimes must cover nodes 0..K")

    @property
    def num_steps(self) -> int:
        return self.values.size - self.tau_steps - 1

    def time(self, k: int) -> float:
        return k * self.delta

    def value(self, k: int) -> float:
        """Grid value at node k, for k in -M..K."""
        if not -self.tau_steps <= k <= self.num_steps:
            raise IndexError(f"node {k} outside -{self.tau_steps}..{self.num_steps}")
        return float(self.values[k + self.tau_steps])

    def delayed_value(self, k: int) -> float:
        """Value one delay back from node k (exact index shift by M)."""
        return self.value(k - self.tau_steps)

    def regime(self, k: int) -> int:
        if not 0 <= k <= self.num_steps:
            raise IndexError(f"node {k} outside 0..{self.num_steps}")
        return int(self.regimes[k])

    def step_value(self, t: float) -> float:
        """The step process at time t in [-tau, horizon]."""
        if t < -self.tau_steps * self.delta - 1e-12 or t > self.horizon + 1e-12:
            raise ValueError(f"time {t} outside the simulated range")
        k = min(math.floor(t / self.delta + 1e-12), self.num_steps)
        return self.value(max(k, -self.tau_steps))

    @property
    def horizon(self) -> float:
        return self.num_steps * self.delta

    def times(self) -> np.ndarray:
        return np.arange(-self.tau_steps, self.num_steps + 1) * self.delta


def tem_step(state: PathState, k: int, d_brownian: float, d_poisson: int,
             spec: ModelSpec, policy: TruncationPolicy) -> float:
    """One truncated-EM update from node k given the step's increments."""
    x = state.value(k)
    delayed = state.delayed_value(k)
    r = state.regime(k)
    fd = truncated_drift(x, r, state.delta, spec, policy)
    gd = truncated_diffusion(x, state.delta, spec, policy)
    phi = spec.volatility.eval(delayed, r)
    return x + fd * state.delta + phi * gd * d_brownian + jump_h(x, r, spec) * d_poisson


def bem_step(state: PathState, k: int, d_brownian: float, d_poisson: int,
             spec: ModelSpec) -> float:
    """One backward-EM update: drift implicit, diffusion and jump explicit."""
    x = state.value(k)
    delayed = state.delayed_value(k)
    r = state.regime(k)
    phi = spec.volatility.eval(delayed, r)
    target = x + phi * diffusion_g(x, spec) * d_brownian + jump_h(x, r, spec) * d_poisson
    tables = engine.CoefficientTables(spec)
    z = engine.implicit_drift_solve(
        tables, np.array([r - 1]), np.array([float(target)]), state.delta,
        spec.include_inverse_drift,
    )
    return float(z[0])


def _path_noise(spec: ModelSpec, grid: Grid, streams: PathStreams) -> NoiseIncrements:
    noise = make_noise(grid.delta, grid.num_steps, spec.jump_intensity, streams)
    regimes = sample_chain_path(
        spec.generator, spec.initial_regime, grid.delta, grid.num_steps, streams.chain
    )
    return attach_regimes(noise, regimes)


def _simulate_path(spec, grid, noise, simulate) -> PathState:
    if noise.regimes is None:
        raise ValueError("path simulation needs a regime trajectory in the noise record")
    values = simulate(
        brownian=noise.brownian[None, :],
        poisson=noise.poisson[None, :],
        regimes=noise.regimes[None, :],
    )
    return PathState(delta=grid.delta, tau_steps=grid.tau_steps,
                     values=values[0], regimes=noise.regimes, noise=noise)


def simulate_tem_path(
    spec: ModelSpec,
    policy: TruncationPolicy,
    delta: float,
    horizon: float,
    streams: Optional[PathStreams] = None,
    noise: Optional[NoiseIncrements] = None,
) -> PathState:
    """Simulate one truncated-EM path on [-tau, horizon].

    Pass ``streams`` to draw fresh noise, or ``noise`` (with regimes
    attached) to replay a recorded path; the result is a pure function of
    the noise record. The step snaps to an exact fraction of the delay and
    the horizon to a multiple of the step; read the effective values off
    the returned state.
    """
    grid, noise = _resolve_run(spec, delta, horizon, streams, noise)

    def run(**channels):
        return engine.simulate_tem_batch(spec, policy, grid, **channels)

    return _simulate_path(spec, grid, noise, run)


def simulate_bem_path(
    spec: ModelSpec,
    delta: float,
    horizon: float,
    streams: Optional[PathStreams] = None,
    noise: Optional[NoiseIncrements] = None,
) -> PathState:
    """Backward-EM companion to :func:`simulate_tem_path` (no truncation)."""
    grid, noise = _resolve_run(spec, delta, horizon, streams, noise)

    def run(**channels):
        return engine.simulate_bem_batch(spec, grid, **channels)

    return _simulate_path(spec, grid, noise, run)


def _resolve_run(spec, delta, horizon, streams, noise):
    if (streams is None) == (noise is None):
        raise ValueError("pass exactly one of streams or noise")
    grid = resolve_grid(spec.tau, delta, horizon)
    if noise is None:
        noise = _path_noise(spec, grid, streams)
    else:
        if abs(noise.delta - grid.delta) > 1e-12 * grid.delta:
            raise ValueError(
                f"noise recorded at delta {noise.delta:g} but the grid resolves "
                f"to {grid.delta:g}"
            )
        if noise.num_steps != grid.num_steps:
            raise ValueError(
                f"noise has {noise.num_steps} steps but the horizon needs "
                f"{grid.num_steps}"
            )
    return grid, noise
