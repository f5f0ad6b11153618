"""Monte Carlo estimators built on the batch engine: bond prices, barrier
options, scheme comparisons, and empirical strong-convergence orders.

Paths are processed in fixed-size chunks; per-path statistics are gathered
in path order and reduced once at the end, so estimates are bitwise
reproducible for a given master seed regardless of worker count or
completion order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

import numpy as np

from . import engine
from .engine import Grid, resolve_grid
from .model import ModelSpec
from .truncation import TruncationPolicy

CHUNK_SIZE = 128


@dataclass(frozen=True)
class EstimatorResult:
    estimate: float
    std_error: float
    num_paths: int
    confidence_95: tuple[float, float]

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "EstimatorResult":
        n = samples.size
        if n and samples.min() == samples.max():
            # degenerate estimator: the mean of identical samples is that
            # value exactly (float reductions would smear it by ulps)
            value = float(samples[0])
            return cls(estimate=value, std_error=0.0, num_paths=n,
                       confidence_95=(value, value))
        mean = float(samples.mean())
        se = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(estimate=mean, std_error=se, num_paths=n,
                   confidence_95=(mean - 1.96 * se, mean + 1.96 * se))


@dataclass(frozen=True)
class ConvergenceReport:
    step_sizes: np.ndarray
    errors: np.ndarray
    std_errors: np.ndarray
    fitted_order: float
    p: float
    num_paths: int
    reference_delta: float

    def __post_init__(self):
        ss = np.asarray(self.step_sizes, dtype=float)
        if ss.size != np.asarray(self.errors).size:
            raise ValueError("step_sizes and errors must have equal length")
        if ss.size > 1 and not np.all(np.diff(ss) < 0.0):
            raise ValueError("step_sizes must be strictly decreasing")


@dataclass(frozen=True)
class SchemeComparison:
    delta: float
    num_paths: int
    mean: float
    std_error: float
    confidence_95: tuple[float, float]
    max: float
    quantiles: dict[float, float]


def _chunk_ranges(num_paths: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + CHUNK_SIZE, num_paths))
            for lo in range(0, num_paths, CHUNK_SIZE)]


def _run_chunks(worker: Callable, num_paths: int, threads: int) -> list:
    """Apply a picklable chunk worker to every path range, in order."""
    ranges = _chunk_ranges(num_paths)
    if threads > 1 and len(ranges) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(ranges))) as pool:
            return list(pool.map(worker, ranges))
    return [worker(r) for r in ranges]


def _tem_chunk_values(spec, policy, grid, seed, path_range) -> np.ndarray:
    lo, hi = path_range
    indices = np.arange(lo, hi)
    brownian, poisson, regimes = engine.draw_batch_noise(spec, grid, seed, indices)
    return engine.simulate_tem_batch(
        spec, policy, grid, brownian, poisson, regimes,
        seed=seed, path_indices=indices,
    )


def _bond_chunk(spec, policy, grid, seed, path_range) -> np.ndarray:
    values = _tem_chunk_values(spec, policy, grid, seed, path_range)
    m, k = grid.tau_steps, grid.num_steps
    integrals = values[:, m:m + k].sum(axis=1) * grid.delta
    return np.exp(-integrals)


def bond_price(
    spec: ModelSpec,
    policy: TruncationPolicy,
    delta: float,
    horizon: float,
    num_paths: int,
    master_seed: int,
    threads: int = 1,
) -> EstimatorResult:
    """Estimate ``E[exp(-integral of the rate path)]`` at the horizon.

    The step-process integral is the exact left-rectangle sum of grid
    values times the step, so a constant path prices to exp(-x T) exactly.
    """
    grid = resolve_grid(spec.tau, delta, horizon)
    worker = partial(_bond_chunk, spec, policy, grid, master_seed)
    samples = np.concatenate(_run_chunks(worker, num_paths, threads))
    return EstimatorResult.from_samples(samples)


def _barrier_chunk(spec, policy, grid, strike, barrier, seed, path_range) -> np.ndarray:
    values = _tem_chunk_values(spec, policy, grid, seed, path_range)
    m, k = grid.tau_steps, grid.num_steps
    running_max = values[:, m:m + k + 1].max(axis=1)
    payoff = np.maximum(values[:, m + k] - strike, 0.0)
    return payoff * (running_max < barrier)


def barrier_option_price(
    spec: ModelSpec,
    policy: TruncationPolicy,
    delta: float,
    horizon: float,
    strike: float,
    barrier: float,
    num_paths: int,
    master_seed: int,
    threads: int = 1,
) -> EstimatorResult:
    """Knock-out call: pays (x(T) - strike)+ unless the path ever reaches the barrier.

    The supremum of the step process over [0, T] equals the maximum of the
    grid values, so the knockout indicator is exact for the exported
    observable; a barrier at or below the initial value prices to zero.
    """
    if strike < 0.0:
        raise ValueError("strike must be nonnegative")
    if barrier <= 0.0:
        raise ValueError("barrier must be positive")
    grid = resolve_grid(spec.tau, delta, horizon)
    worker = partial(_barrier_chunk, spec, policy, grid, strike, barrier, master_seed)
    samples = np.concatenate(_run_chunks(worker, num_paths, threads))
    return EstimatorResult.from_samples(samples)


def _comparison_chunk(spec, policy, grid, seed, path_range) -> np.ndarray:
    lo, hi = path_range
    indices = np.arange(lo, hi)
    brownian, poisson, regimes = engine.draw_batch_noise(spec, grid, seed, indices)
    tem = engine.simulate_tem_batch(spec, policy, grid, brownian, poisson, regimes,
                                    seed=seed, path_indices=indices)
    bem = engine.simulate_bem_batch(spec, grid, brownian, poisson, regimes,
                                    seed=seed, path_indices=indices)
    m = grid.tau_steps
    return np.abs(tem[:, m:] - bem[:, m:]).max(axis=1)


def scheme_comparison(
    spec: ModelSpec,
    policy: TruncationPolicy,
    delta: float,
    horizon: float,
    num_paths: int,
    master_seed: int,
    threads: int = 1,
) -> SchemeComparison:
    """Pathwise sup-distance between TEM and BEM under shared noise."""
    grid = resolve_grid(spec.tau, delta, horizon)
    worker = partial(_comparison_chunk, spec, policy, grid, master_seed)
    distances = np.concatenate(_run_chunks(worker, num_paths, threads))
    base = EstimatorResult.from_samples(distances)
    qs = (0.1, 0.5, 0.9)
    return SchemeComparison(
        delta=grid.delta,
        num_paths=num_paths,
        mean=base.estimate,
        std_error=base.std_error,
        confidence_95=base.confidence_95,
        max=float(distances.max()),
        quantiles={q: float(np.quantile(distances, q)) for q in qs},
    )


def _coupled_grids(spec: ModelSpec, coarse_deltas: Sequence[float],
                   reference_delta: float, horizon: float) -> tuple[Grid, list[tuple[Grid, int]]]:
    """Reference grid plus (coarse grid, coarsening factor) per level."""
    ref = resolve_grid(spec.tau, reference_delta, horizon)
    levels = []
    for delta in coarse_deltas:
        snapped = resolve_grid(spec.tau, delta, horizon)
        if ref.tau_steps % snapped.tau_steps:
            raise ValueError(
                f"step {delta:g} (tau/{snapped.tau_steps}) is not an integer "
                f"multiple of the reference step tau/{ref.tau_steps}"
            )
        factor = ref.tau_steps // snapped.tau_steps
        if ref.num_steps % factor:
            raise ValueError(
                f"horizon {horizon:g} does not align step {delta:g} with the "
                f"reference grid"
            )
        grid = Grid(delta=snapped.delta, tau_steps=snapped.tau_steps,
                    num_steps=ref.num_steps // factor)
        levels.append((grid, factor))
    return ref, levels


def _strong_error_chunk(spec, policy, ref_grid, levels, seed, path_range) -> np.ndarray:
    lo, hi = path_range
    indices = np.arange(lo, hi)
    brownian, poisson, regimes = engine.draw_batch_noise(spec, ref_grid, seed, indices)
    fine = engine.simulate_tem_batch(spec, policy, ref_grid, brownian, poisson,
                                     regimes, seed=seed, path_indices=indices)
    m_ref = ref_grid.tau_steps
    sups = np.empty((len(levels), hi - lo))
    for row, (grid, factor) in enumerate(levels):
        cb, cp, cr = engine.coarsen_batch(brownian, poisson, regimes, factor)
        coarse = engine.simulate_tem_batch(spec, policy, grid, cb, cp, cr,
                                           seed=seed, path_indices=indices)
        fine_at_nodes = fine[:, m_ref::factor]
        sups[row] = np.abs(coarse[:, grid.tau_steps:] - fine_at_nodes).max(axis=1)
    return sups


def strong_error(
    spec: ModelSpec,
    policy: TruncationPolicy,
    coarse_deltas: Sequence[float],
    reference_delta: float,
    horizon: float,
    p: float,
    num_paths: int,
    master_seed: int,
    threads: int = 1,
) -> ConvergenceReport:
    """Empirical strong error of coarse steps against a fine reference.

    Every path is simulated once at the reference step; each coarse path
    reuses that path's Brownian/Poisson increments (block-summed) and its
    regime values at the coarse nodes, so coarse and reference solutions
    are pathwise coupled. The error sample per path and level is the
    maximum over the coarse nodes of the absolute difference; the report
    carries the p-th-moment error per level and the least-squares slope of
    log2(error) against log2(step).
    """
    if p < 1.0:
        raise ValueError("p must be >= 1")
    order = np.argsort(-np.asarray(coarse_deltas, dtype=float))
    deltas_desc = [float(coarse_deltas[i]) for i in order]
    ref_grid, levels = _coupled_grids(spec, deltas_desc, reference_delta, horizon)
    worker = partial(_strong_error_chunk, spec, policy, ref_grid, levels, master_seed)
    sups = np.concatenate(_run_chunks(worker, num_paths, threads), axis=1)

    powered = sups**p
    mean_powered = powered.mean(axis=1)
    se_powered = powered.std(axis=1, ddof=1) / np.sqrt(num_paths)
    errors = mean_powered ** (1.0 / p)
    # delta method for the 1/p root of a sample mean
    with np.errstate(divide="ignore", invalid="ignore"):
        std_errors = np.where(
            mean_powered > 0.0,
            se_powered / p * mean_powered ** (1.0 / p - 1.0),
            0.0,
        )

    step_sizes = np.array([g.delta for g, _ in levels])
    if step_sizes.size >= 2 and np.all(errors > 0.0):
        slope = np.polyfit(np.log2(step_sizes), np.log2(errors), 1)[0]
    else:
        slope = float("nan")
    return ConvergenceReport(
        step_sizes=step_sizes,
        errors=errors,
        std_errors=std_errors,
        fitted_order=float(slope),
        p=p,
        num_paths=num_paths,
        reference_delta=ref_grid.delta,
    )


def _moment_chunk(spec, policy, fine_grid, levels, p, seed, path_range) -> list[np.ndarray]:
    lo, hi = path_range
    indices = np.arange(lo, hi)
    brownian, poisson, regimes = engine.draw_batch_noise(spec, fine_grid, seed, indices)
    out = []
    for grid, factor in levels:
        cb, cp, cr = engine.coarsen_batch(brownian, poisson, regimes, factor)
        values = engine.simulate_tem_batch(spec, policy, grid, cb, cp, cr,
                                           seed=seed, path_indices=indices)
        out.append((np.abs(values[:, grid.tau_steps:]) ** p).sum(axis=0))
    return out


def moment_curves(
    spec: ModelSpec,
    policy: TruncationPolicy,
    deltas: Sequence[float],
    horizon: float,
    p: float,
    num_paths: int,
    master_seed: int,
    threads: int = 1,
) -> dict[float, np.ndarray]:
    """Sample p-th absolute moments of the scheme on [0, horizon] per step size.

    All step sizes are driven by one shared fine noise record per path
    (the finest requested step), so the curves are pathwise coupled.
    Returns, per effective step, the moment at each of its grid nodes.
    """
    finest = min(deltas)
    fine_grid, levels = _coupled_grids(spec, list(deltas), finest, horizon)
    worker = partial(_moment_chunk, spec, policy, fine_grid, levels, p, master_seed)
    chunk_sums = _run_chunks(worker, num_paths, threads)
    curves = {}
    for row, (grid, _) in enumerate(levels):
        total = np.sum([c[row] for c in chunk_sums], axis=0)
        curves[grid.delta] = total / num_paths
    return curves
