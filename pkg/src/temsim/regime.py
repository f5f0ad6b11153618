"""Markov regime chain: generator matrices, one-step transition matrices,
and the grid-based chain sampler.

States are labelled ``1..N`` throughout the public API. The chain is
simulated on the same time grid as the state process: the one-step
transition matrix is the matrix exponential of ``delta * generator``, and
each step consumes a single uniform draw via cumulative-row selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_GENERATOR_TOL = 1e-10


class GeneratorError(ValueError):
    """Raised for matrices that are not valid chain generators."""


@dataclass(frozen=True)
class GeneratorMatrix:
    """Transition-rate matrix: nonnegative off-diagonal, zero row sums."""

    entries: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.entries, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            raise GeneratorError("generator must be a square matrix")
        if not np.all(np.isfinite(q)):
            raise GeneratorError("generator entries must be finite")
        off = q[~np.eye(q.shape[0], dtype=bool)]
        if off.size and off.min() < -_GENERATOR_TOL:
            raise GeneratorError("off-diagonal rates must be nonnegative")
        row_sums = q.sum(axis=1)
        if np.abs(row_sums).max() > _GENERATOR_TOL:
            raise GeneratorError("generator rows must sum to zero")
        q = q.copy()
        q.flags.writeable = False
        object.__setattr__(self, "entries", q)

    @property
    def num_states(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic one-step matrix together with the step it was built for."""

    entries: np.ndarray
    step: float
    # cumulative row sums, precomputed for the sampler
    _cumulative: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        p = np.asarray(self.entries, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("transition matrix must be square")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.abs(p.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("transition-matrix rows must sum to 1")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "entries", p)
        cum = np.cumsum(p, axis=1)
        cum.flags.writeable = False
        object.__setattr__(self, "_cumulative", cum)

    @property
    def num_states(self) -> int:
        return self.entries.shape[0]


def matrix_exponential(generator: GeneratorMatrix, delta: float) -> TransitionMatrix:
    """One-step transition matrix ``exp(delta * generator)``.

    Uses scaling-and-squaring with a fixed 13-term Taylor series after the
    scaled matrix has sup-norm at most 1/2, which keeps the truncation error
    near machine precision for any generator.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    a = delta * generator.entries
    n = a.shape[0]
    norm = np.abs(a).sum(axis=1).max()
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
        a = a / (2.0**squarings)
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, 14):
        term = term @ a / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    # exact arithmetic preserves row sums and nonnegativity; roundoff can
    # leave eps-scale violations, which we repair before validating
    result = np.clip(result, 0.0, None)
    rows = result.sum(axis=1)
    if np.abs(rows - 1.0).max() > 1e-12:
        result = result / rows[:, None]
    return TransitionMatrix(entries=result, step=float(delta))


def sample_chain_step(current: int, transition: TransitionMatrix, u: float) -> int:
    """Next state from state ``current`` (1-based) given a uniform ``u`` in [0,1).

    Selects the smallest state j whose cumulative row probability strictly
    exceeds u; if u is at or beyond the cumulative sum through state N-1,
    the last state is returned. Equality with a partial sum therefore moves
    to the next state (the lower bound of each branch is inclusive).
    """
    n = transition.num_states
    if not 1 <= current <= n:
        raise ValueError(f"state {current} outside 1..{n}")
    cum = transition._cumulative[current - 1]
    # count of partial sums <= u over states 1..N-1 gives the 0-based index
    return 1 + int(np.count_nonzero(cum[: n - 1] <= u))


def sample_chain_path(
    generator: GeneratorMatrix,
    initial_state: int,
    delta: float,
    num_steps: int,
    stream: np.random.Generator,
) -> np.ndarray:
    """Regime trajectory of length ``num_steps + 1`` on the grid ``k * delta``."""
    if num_steps < 0:
        raise ValueError("num_steps must be >= 0")
    if not 1 <= initial_state <= generator.num_states:
        raise ValueError("initial_state outside the state space")
    path = np.empty(num_steps + 1, dtype=np.int64)
    path[0] = initial_state
    if num_steps == 0:
        return path
    transition = matrix_exponential(generator, delta)
    uniforms = stream.random(num_steps)
    cum = transition._cumulative[:, : generator.num_states - 1]
    state = initial_state
    for k in range(num_steps):
        state = 1 + int(np.count_nonzero(cum[state - 1] <= uniforms[k]))
        path[k + 1] = state
    return path


def sample_chain_paths_batch(
    generator: GeneratorMatrix,
    initial_state: int,
    delta: float,
    num_steps: int,
    uniforms: np.ndarray,
) -> np.ndarray:
    """Vectorized chain sampling for many paths sharing one grid.

    ``uniforms`` has shape (num_paths, num_steps); the returned array has
    shape (num_paths, num_steps + 1). Path p consumes uniforms[p] exactly as
    :func:`sample_chain_path` would, so batch and scalar results agree.
    """
    num_paths = uniforms.shape[0]
    if uniforms.shape[1] != num_steps:
        raise ValueError("uniforms shape inconsistent with num_steps")
    paths = np.empty((num_paths, num_steps + 1), dtype=np.int64)
    paths[:, 0] = initial_state
    if num_steps == 0:
        return paths
    transition = matrix_exponential(generator, delta)
    cum = transition._cumulative[:, : generator.num_states - 1]
    states = np.full(num_paths, initial_state, dtype=np.int64)
    for k in range(num_steps):
        states = 1 + np.count_nonzero(cum[states - 1] <= uniforms[:, k, None], axis=1)
        paths[:, k + 1] = states
    return paths


def stationary_distribution(generator: GeneratorMatrix) -> np.ndarray:
    """Probability vector pi with ``pi @ generator = 0`` and ``sum(pi) = 1``.

    Solved by replacing one balance equation with the normalization row;
    raises for reducible or otherwise singular chains.
    """
    n = generator.num_states
    a = generator.entries.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise GeneratorError(f"no unique stationary distribution: {exc}") from exc
    if np.any(pi < -1e-10):
        raise GeneratorError("stationary solve produced negative mass (reducible chain?)")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()
