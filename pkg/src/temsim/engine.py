"""Vectorized path-simulation engine.

Simulates batches of paths on a shared uniform grid. One path is the
special case of a batch of width one, so the scalar convenience wrappers
in :mod:`temsim.schemes` and the Monte Carlo estimators all run through
the same arithmetic. Each path draws its noise from its own counter-based
substreams, so results are independent of batch boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from .model import ModelSpec
from .noise import block_sums
from .regime import sample_chain_paths_batch
from .truncation import TruncationPolicy, truncation_band


class SimulationError(RuntimeError):
    """Raised when a simulation produces non-finite values or a solve fails.

    Carries the replay coordinates (master seed, path index, delta) needed
    to regenerate the offending path in isolation.
    """

    def __init__(self, message: str, *, path_index: int | None = None,
                 step: int | None = None, seed: int | None = None,
                 delta: float | None = None):
        super().__init__(message)
        self.path_index = path_index
        self.step = step
        self.seed = seed
        self.delta = delta


@dataclass(frozen=True)
class Grid:
    """Resolved uniform grid: ``delta`` divides the delay exactly.

    Nodes are ``t_k = k * delta`` for k = -tau_steps .. num_steps; the
    initial segment fills k <= 0.
    """

    delta: float
    tau_steps: int
    num_steps: int

    @property
    def horizon(self) -> float:
        return self.num_steps * self.delta

    @property
    def num_nodes(self) -> int:
        return self.tau_steps + self.num_steps + 1


def resolve_grid(tau: float, delta: float, horizon: float) -> Grid:
    """Snap a requested step to ``tau / M`` and the horizon to a multiple.

    The delay must span a whole number of steps; the requested ``delta`` is
    rounded to the nearest ``tau / M`` and the horizon to the nearest
    multiple of the effective step.
    """
    if delta <= 0.0 or horizon < 0.0:
        raise ValueError("need delta > 0 and horizon >= 0")
    m = max(1, round(tau / delta))
    eff = tau / m
    k = round(horizon / eff)
    return Grid(delta=eff, tau_steps=m, num_steps=k)


class CoefficientTables:
    """Per-regime coefficient arrays for vectorized evaluation (0-based rows)."""

    def __init__(self, spec: ModelSpec):
        self.a_m1 = np.array([r.alpha_m1 for r in spec.regimes])
        self.a0 = np.array([r.alpha_0 for r in spec.regimes])
        self.a1 = np.array([r.alpha_1 for r in spec.regimes])
        self.a2 = np.array([r.alpha_2 for r in spec.regimes])
        self.a3 = np.array([r.alpha_3 for r in spec.regimes])
        self.rho = spec.rho
        self.theta = spec.theta
        self.include_inverse = spec.include_inverse_drift

    def drift(self, x: np.ndarray, ridx: np.ndarray) -> np.ndarray:
        power = np.sign(x) * np.abs(x) ** self.rho
        out = -self.a0[ridx] + self.a1[ridx] * x - self.a2[ridx] * power
        if self.include_inverse:
            out = out + self.a_m1[ridx] / x
        return out

    def drift_derivative(self, x: np.ndarray, ridx: np.ndarray) -> np.ndarray:
        out = self.a1[ridx] - self.a2[ridx] * self.rho * np.abs(x) ** (self.rho - 1.0)
        if self.include_inverse:
            out = out - self.a_m1[ridx] / (x * x)
        return out

    def diffusion(self, x: np.ndarray) -> np.ndarray:
        return np.where(x > 0.0, np.maximum(x, 0.0) ** self.theta, 0.0)

    def jump(self, x: np.ndarray, ridx: np.ndarray) -> np.ndarray:
        return np.where(x > 0.0, self.a3[ridx] * x, 0.0)


def draw_batch_noise(
    spec: ModelSpec,
    grid: Grid,
    master_seed: int,
    path_indices: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-path noise for a batch: Brownian (P,K), Poisson (P,K), regimes (P,K+1).

    Row p is drawn from the substreams of ``path_indices[p]``, identically
    to a single-path simulation of that index.
    """
    p = len(path_indices)
    k = grid.num_steps
    brownian = np.empty((p, k))
    poisson = np.empty((p, k), dtype=np.int64)
    uniforms = np.empty((p, k))
    sqrt_dt = np.sqrt(grid.delta)
    mean_jumps = spec.jump_intensity * grid.delta
    for row, idx in enumerate(path_indices):
        streams = rng.path_streams(master_seed, int(idx))
        brownian[row] = streams.brownian.standard_normal(k) * sqrt_dt
        poisson[row] = streams.poisson.poisson(mean_jumps, k)
        uniforms[row] = streams.chain.random(k)
    regimes = sample_chain_paths_batch(
        spec.generator, spec.initial_regime, grid.delta, k, uniforms
    )
    return brownian, poisson, regimes


def initial_values(spec: ModelSpec, grid: Grid) -> np.ndarray:
    """Initial-segment values at nodes k = -M..0 (length M+1)."""
    # keep rounded node times inside the segment's domain [-tau, 0]
    ts = np.clip(np.arange(-grid.tau_steps, 1) * grid.delta, -spec.tau, 0.0)
    return np.array([spec.initial_segment.eval(float(t)) for t in ts])


def simulate_tem_batch(
    spec: ModelSpec,
    policy: TruncationPolicy,
    grid: Grid,
    brownian: np.ndarray,
    poisson: np.ndarray,
    regimes: np.ndarray,
    *,
    check: bool = True,
    seed: Optional[int] = None,
    path_indices: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Truncated EM trajectories, shape (P, M+K+1); column j is node j - M.

    Each step evaluates the truncated drift and diffusion at the current
    value, the volatility at the value one delay back, and the raw jump
    coefficient, then adds the three increments.
    """
    lower, upper = truncation_band(grid.delta, policy)
    tables = CoefficientTables(spec)
    m, k = grid.tau_steps, grid.num_steps
    num_paths = brownian.shape[0]
    _check_shapes(brownian, poisson, regimes, num_paths, k)

    values = np.empty((num_paths, m + k + 1))
    values[:, : m + 1] = initial_values(spec, grid)[None, :]
    ridx = regimes - 1
    # overflow to inf is caught by the finiteness check below
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(k):
            x = values[:, m + step]
            delayed = values[:, step]
            r = ridx[:, step]
            clamped = np.clip(x, lower, upper)
            fd = tables.drift(clamped, r)
            gd = tables.diffusion(np.minimum(x, upper))
            phi = spec.volatility.evaluate_many(delayed, regimes[:, step])
            jump = tables.jump(x, r)
            values[:, m + step + 1] = (
                x + fd * grid.delta + phi * gd * brownian[:, step]
                + jump * poisson[:, step]
            )
    if check:
        _check_finite(values, m, seed, grid.delta, path_indices)
    return values


def simulate_bem_batch(
    spec: ModelSpec,
    grid: Grid,
    brownian: np.ndarray,
    poisson: np.ndarray,
    regimes: np.ndarray,
    *,
    check: bool = True,
    seed: Optional[int] = None,
    path_indices: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Backward (drift-implicit) EM trajectories with explicit noise terms.

    Each step solves ``z - delta * f(z, r) = x + phi * g(x) * dB + h(x) * dN``
    for z. With the inverse drift term present the root is confined to
    (0, inf), which keeps every iterate strictly positive. Without it the
    reduced model is free to cross zero, so the equation is solved on the
    whole line with the drift frozen at its boundary value for z <= 0
    (the same extension pattern the other coefficients use); this matches
    the truncated scheme's limit field below zero, which is what makes the
    two schemes comparable there. Uniqueness needs
    ``delta < 1 / max(alpha_1)``.
    """
    tables = CoefficientTables(spec)
    max_a1 = float(tables.a1.max())
    if max_a1 > 0.0 and grid.delta >= 1.0 / max_a1:
        raise SimulationError(
            f"delta = {grid.delta:g} too large for a unique implicit solve "
            f"(needs delta < {1.0 / max_a1:g})",
            delta=grid.delta, seed=seed,
        )
    positive_domain = spec.include_inverse_drift
    m, k = grid.tau_steps, grid.num_steps
    num_paths = brownian.shape[0]
    _check_shapes(brownian, poisson, regimes, num_paths, k)

    values = np.empty((num_paths, m + k + 1))
    values[:, : m + 1] = initial_values(spec, grid)[None, :]
    ridx = regimes - 1
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(k):
            x = values[:, m + step]
            delayed = values[:, step]
            r = ridx[:, step]
            phi = spec.volatility.evaluate_many(delayed, regimes[:, step])
            target = (
                x + phi * tables.diffusion(x) * brownian[:, step]
                + tables.jump(x, r) * poisson[:, step]
            )
            values[:, m + step + 1] = implicit_drift_solve(
                tables, r, target, grid.delta, positive_domain,
                context=(seed, path_indices, step),
            )
    if check:
        _check_finite(values, m, seed, grid.delta, path_indices)
    return values


def implicit_drift_solve(
    tables: CoefficientTables,
    ridx: np.ndarray,
    target: np.ndarray,
    delta: float,
    positive_domain: bool,
    context: tuple = (None, None, None),
) -> np.ndarray:
    """Solve ``z - delta * drift(z, r) = target`` elementwise.

    Safeguarded Newton iteration inside a sign-changing bracket, falling
    back to bisection whenever a Newton proposal leaves the bracket. The
    residual is strictly increasing in z for admissible deltas, so the
    bracketed root is unique.
    """
    seed, path_indices, step = context

    if positive_domain:
        def residual(z):
            return z - delta * tables.drift(z, ridx) - target

        def slope_at(z):
            return 1.0 - delta * tables.drift_derivative(z, ridx)
    else:
        # boundary-value extension: drift frozen at its z = 0 value below zero
        def residual(z):
            return z - delta * tables.drift(np.maximum(z, 0.0), ridx) - target

        def slope_at(z):
            return np.where(
                z > 0.0,
                1.0 - delta * tables.drift_derivative(np.maximum(z, 1e-300), ridx),
                1.0,
            )

    def no_root(kind, still_bad):
        row = int(np.argmax(still_bad))
        idx = row if path_indices is None else int(np.asarray(path_indices)[row])
        raise SimulationError(
            f"implicit solve found no {kind} bracket end at step {step} of "
            f"path {idx} (replay: seed={seed}, path={idx}, delta={delta:g})",
            path_index=idx, step=step, seed=seed, delta=delta,
        )

    if positive_domain:
        # residual -> -inf as z -> 0+ through the a_m1/z term
        lo = np.clip(np.abs(target), 1e-8, 0.5)
        for _ in range(400):
            res = residual(lo)
            bad = ~(res < 0.0)  # NaN counts as bad
            if not bad.any():
                break
            lo = np.where(bad, lo * 0.125, lo)
        else:
            no_root("positive lower", ~(residual(lo) < 0.0))
    else:
        lo = np.minimum(target, 0.0) - 1.0
        for _ in range(200):
            bad = residual(lo) >= 0.0
            if not bad.any():
                break
            lo = np.where(bad, 2.0 * lo - 1.0, lo)
        else:
            no_root("lower", residual(lo) >= 0.0)
    hi = np.abs(target) + 1.0
    for _ in range(200):
        bad = residual(hi) <= 0.0
        if not bad.any():
            break
        hi = np.where(bad, 2.0 * hi + 1.0, hi)
    else:
        no_root("upper", residual(hi) <= 0.0)

    z = 0.5 * (lo + hi)
    active = np.ones(z.shape, dtype=bool)
    for _ in range(200):
        f = residual(z)
        lo = np.where(active & (f < 0.0), z, lo)
        hi = np.where(active & (f >= 0.0), z, hi)
        slope = slope_at(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            proposal = z - f / slope
        inside = np.isfinite(proposal) & (proposal > lo) & (proposal < hi)
        z_next = np.where(inside, proposal, 0.5 * (lo + hi))
        settled = (np.abs(f) <= 1e-14 * (1.0 + np.abs(z) + np.abs(target))) | (
            (hi - lo) <= 1e-15 * (1.0 + np.abs(z))
        )
        z = np.where(active & ~settled, z_next, z)
        active &= ~settled
        if not active.any():
            break
    return z


def _check_shapes(brownian, poisson, regimes, num_paths, k):
    if brownian.shape != (num_paths, k) or poisson.shape != (num_paths, k):
        raise ValueError("noise arrays must have shape (num_paths, num_steps)")
    if regimes.shape != (num_paths, k + 1):
        raise ValueError("regimes must have shape (num_paths, num_steps + 1)")


def _check_finite(values, m, seed, delta, path_indices):
    finite = np.isfinite(values)
    if finite.all():
        return
    row, col = np.argwhere(~finite)[0]
    idx = int(row) if path_indices is None else int(np.asarray(path_indices)[row])
    raise SimulationError(
        f"non-finite value at node {int(col) - m} of path {idx}"
        + (f" (replay: seed={seed}, path={idx}, delta={delta:g})" if seed is not None else ""),
        path_index=idx, step=int(col) - m, seed=seed, delta=delta,
    )


def coarsen_batch(
    brownian: np.ndarray,
    poisson: np.ndarray,
    regimes: np.ndarray,
    factor: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch analogue of noise coarsening: block sums + node subsampling."""
    if factor == 1:
        return brownian, poisson, regimes
    return (
        block_sums(brownian, factor),
        block_sums(poisson, factor),
        regimes[:, ::factor],
    )
