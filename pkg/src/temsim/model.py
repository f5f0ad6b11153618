"""Model parameterization and coefficient functions.

The state equation is an Ait-Sahalia-type short-rate model whose
coefficients switch with a finite-state Markov chain, with a
delayed-argument volatility multiplier and a Poisson jump term:

    drift      f(x, i) = a_m1(i)/x - a_0(i) + a_1(i) x - a_2(i) x^rho
    diffusion  phi(x(t - tau), i) * g(x),   g(x) = x^theta
    jump       h(x, i) = a_3(i) x          (per Poisson increment)

All coefficient functions are extended off the positive half-line so that
every scheme step is total: g and h vanish for x < 0, the volatility
multiplier at a negative delayed value equals its value at zero, and x^rho
is read as sign(x)|x|^rho for direct calls with negative arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .regime import GeneratorMatrix


@dataclass(frozen=True)
class RegimeParams:
    """Per-regime coefficients of the drift/jump terms.

    The model form wants the four drift coefficients strictly positive;
    construction only requires them nonnegative so that degenerate test
    configurations (zeroed drift) remain expressible, and
    :func:`validate_assumptions` reports the strict check separately.
    """

    alpha_m1: float
    alpha_0: float
    alpha_1: float
    alpha_2: float
    alpha_3: float

    def __post_init__(self):
        for name in ("alpha_m1", "alpha_0", "alpha_1", "alpha_2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not math.isfinite(self.alpha_3) or self.alpha_3 < 0.0:
            raise ValueError(f"alpha_3 must be finite and >= 0, got {self.alpha_3}")


@dataclass(frozen=True)
class VolatilitySpec:
    """Bounded volatility multiplier ``phi(y, i)`` of the delayed value.

    ``eval`` maps (delayed value, 1-based regime) to a nonnegative level no
    larger than ``bound_sigma``, with ``eval(y, i) == eval(0, i)`` for y < 0.
    ``eval_vec``, when provided, is the same map over numpy arrays and is
    used by the batch simulation engine; otherwise the scalar form is
    broadcast (slower, but equivalent).
    """

    bound_sigma: float
    eval: Callable[[float, int], float]
    eval_vec: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def __post_init__(self):
        if not (self.bound_sigma > 0.0 and math.isfinite(self.bound_sigma)):
            raise ValueError("bound_sigma must be a positive finite real")

    def evaluate_many(self, y: np.ndarray, regimes: np.ndarray) -> np.ndarray:
        if self.eval_vec is not None:
            return self.eval_vec(y, regimes)
        out = np.empty(y.shape, dtype=float)
        flat_y, flat_r, flat_o = y.ravel(), regimes.ravel(), out.ravel()
        for j in range(flat_y.size):
            flat_o[j] = self.eval(float(flat_y[j]), int(flat_r[j]))
        return out


@dataclass(frozen=True)
class InitialSegment:
    """Initial history ``xi(t)`` on [-tau, 0], positive and Hoelder continuous."""

    eval: Callable[[float], float]
    holder_constant: float = 1.0
    holder_exponent: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if self.holder_constant <= 0.0:
            raise ValueError("holder_constant must be positive")
        if not 0.0 < self.holder_exponent <= 1.0:
            raise ValueError("holder_exponent must lie in (0, 1]")


def constant_segment(value: float) -> InitialSegment:
    if value <= 0.0:
        raise ValueError("initial segment must be positive")
    return InitialSegment(
        eval=_ConstantFn(value), holder_constant=1.0, holder_exponent=1.0,
        name=f"constant({value})",
    )


class _ConstantFn:
    """Picklable constant callable (lambdas would break process pools)."""

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, *_args):
        return self.value


@dataclass(frozen=True)
class ModelSpec:
    """Full parameterization of the rate model, chain generator included."""

    regimes: tuple[RegimeParams, ...]
    rho: float
    theta: float
    tau: float
    jump_intensity: float
    volatility: VolatilitySpec
    initial_segment: InitialSegment
    generator: GeneratorMatrix
    initial_regime: int = 1
    include_inverse_drift: bool = True

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple(self.regimes))
        if not self.regimes:
            raise ValueError("at least one regime is required")
        if self.rho <= 1.0:
            raise ValueError("rho must exceed 1")
        if self.theta <= 1.0:
            raise ValueError("theta must exceed 1")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if self.jump_intensity < 0.0:
            raise ValueError("jump_intensity must be nonnegative")
        if not 1 <= self.initial_regime <= len(self.regimes):
            raise ValueError("initial_regime outside the state space")
        if self.generator.num_states != len(self.regimes):
            raise ValueError(
                f"generator is {self.generator.num_states}x{self.generator.num_states} "
                f"but there are {len(self.regimes)} regimes"
            )

    @property
    def num_regimes(self) -> int:
        return len(self.regimes)

    def regime(self, i: int) -> RegimeParams:
        if not 1 <= i <= len(self.regimes):
            raise ValueError(f"regime {i} outside 1..{len(self.regimes)}")
        return self.regimes[i - 1]


def drift_f(x: float, i: int, spec: ModelSpec) -> float:
    """Regime-``i`` drift at ``x``; requires x != 0 when the 1/x term is on."""
    p = spec.regime(i)
    power = math.copysign(abs(x) ** spec.rho, x) if x < 0 else x**spec.rho
    value = -p.alpha_0 + p.alpha_1 * x - p.alpha_2 * power
    if spec.include_inverse_drift:
        if x == 0.0:
            raise ValueError("drift with inverse term undefined at x = 0")
        value += p.alpha_m1 / x
    return value


def diffusion_g(x: float, spec: ModelSpec) -> float:
    """State factor of the diffusion: x^theta for x >= 0, zero below."""
    return x**spec.theta if x > 0.0 else 0.0


def jump_h(x: float, i: int, spec: ModelSpec) -> float:
    """Jump size per Poisson count: alpha_3(i) x for x >= 0, zero below."""
    return spec.regime(i).alpha_3 * x if x > 0.0 else 0.0


# -- built-in volatility functions -------------------------------------------

_SIGMOID_SCALE = (0.5, 0.25)


def sigmoid_volatility_vec(y: np.ndarray, i: np.ndarray) -> np.ndarray:
    """Vectorized two-regime sigmoid volatility (regimes 1 and 2)."""
    y = np.asarray(y, dtype=float)
    scale = np.where(np.asarray(i) == 1, _SIGMOID_SCALE[0], _SIGMOID_SCALE[1])
    yp = np.where(y >= 0.0, y, 0.0)
    # (1 + e^y - e^-y)/(e^y + e^-y) rewritten as tanh(y) + sech-type term,
    # stable for arbitrarily large y
    ratio = np.tanh(yp) + np.exp(-yp) / (1.0 + np.exp(-2.0 * yp))
    return np.where(y >= 0.0, scale * ratio, scale * 0.5)


# sup of (1 + e^y - e^-y)/(e^y + e^-y) over y >= 0, attained at y = arcsinh(2);
# the y -> inf limit is 1, but the curve overshoots through the 1/cosh term
_SIGMOID_RATIO_SUP = math.sqrt(5.0) / 2.0


def sigmoid_volatility(y: float, i: int) -> float:
    """Two-regime sigmoid volatility level for a delayed value ``y``.

    Regime 1 starts at 1/4 at y = 0, peaks at sqrt(5)/4 near y = 1.44 and
    settles toward 1/2; regime 2 runs at half those levels. Negative
    delayed values take the regime's constant y = 0 level.
    """
    if i not in (1, 2):
        raise ValueError("the built-in sigmoid volatility has regimes 1 and 2")
    return float(sigmoid_volatility_vec(np.float64(y), np.int64(i)))


def _constant_vol(level: float):
    return VolatilitySpec(
        bound_sigma=level if level > 0.0 else 1.0,
        eval=_ConstantFn(level),
        eval_vec=_ConstantVecFn(level),
        name="constant" if level > 0.0 else "zero",
    )


class _ConstantVecFn:
    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, y, i):
        return np.full(np.shape(y), self.value, dtype=float)


def build_volatility(name: str, level: float = 0.25,
                     bound: Optional[float] = None) -> VolatilitySpec:
    """Construct a volatility by registered name.

    Names: ``sigmoid_s5`` (two-regime sigmoid, exact bound sqrt(5)/4),
    ``constant`` (flat ``level``), ``zero``.
    """
    if name == "sigmoid_s5":
        return VolatilitySpec(
            bound_sigma=0.5 * _SIGMOID_RATIO_SUP if bound is None else bound,
            eval=sigmoid_volatility,
            eval_vec=sigmoid_volatility_vec,
            name="sigmoid_s5",
        )
    if name == "constant":
        vol = _constant_vol(level)
        if bound is not None:
            vol = VolatilitySpec(bound_sigma=bound, eval=vol.eval,
                                 eval_vec=vol.eval_vec, name=vol.name)
        return vol
    if name == "zero":
        return _constant_vol(0.0)
    raise ValueError(f"unknown volatility name {name!r}; "
                     "known: sigmoid_s5, constant, zero")


def two_regime_demo(
    include_inverse_drift: bool = True,
    tau: float = 1.0,
    jump_intensity: float = 1.0,
    initial_value: float = 0.02,
) -> ModelSpec:
    """The built-in two-regime instance used throughout the docs and tests.

    Regime 1: 0.3/x - 0.2 + 0.1 x - 0.5 x^2 with unit jump scale; regime 2:
    0.2/x - 0.3 + 0.2 x - 0.6 x^2 with jump scale 2; sigmoid volatility,
    rho = 2, theta = 5/4, generator [[-2, 2], [1, -1]], flat initial history.
    """
    return ModelSpec(
        regimes=(
            RegimeParams(0.3, 0.2, 0.1, 0.5, 1.0),
            RegimeParams(0.2, 0.3, 0.2, 0.6, 2.0),
        ),
        rho=2.0,
        theta=1.25,
        tau=tau,
        jump_intensity=jump_intensity,
        volatility=build_volatility("sigmoid_s5"),
        initial_segment=constant_segment(initial_value),
        generator=GeneratorMatrix(np.array([[-2.0, 2.0], [1.0, -1.0]])),
        initial_regime=1,
        include_inverse_drift=include_inverse_drift,
    )


# -- assumption validation ----------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]


def _volatility_probe_grid(num_points: int) -> np.ndarray:
    dense = np.linspace(-20.0, 20.0, max(num_points - 12, 3))
    tails = np.array([-1e8, -1e4, -1e2, 1e2, 1e4, 1e8])
    return np.concatenate([dense, tails, np.array([0.0])])


def validate_assumptions(spec: ModelSpec, grid_points: int = 10_000) -> AssumptionReport:
    """Check the standing model hypotheses, returning a report (never raising).

    The volatility bound, its negative-argument extension, and the initial
    segment's positivity and Hoelder continuity are sampled on dense grids
    (heuristic, not symbolic); coefficient positivity and the exponent
    balance 1 + rho > 2 theta are exact arithmetic.
    """
    checks: list[CheckResult] = []

    strict = all(
        r.alpha_m1 > 0 and r.alpha_0 > 0 and r.alpha_1 > 0 and r.alpha_2 > 0
        for r in spec.regimes
    )
    checks.append(CheckResult(
        "coefficient_positivity", strict,
        "" if strict else "some drift coefficient is zero (degenerate spec)",
    ))

    balance = 1.0 + spec.rho > 2.0 * spec.theta
    checks.append(CheckResult(
        "exponent_balance", balance,
        f"1 + rho = {1.0 + spec.rho:g} vs 2 theta = {2.0 * spec.theta:g}",
    ))

    ys = _volatility_probe_grid(grid_points)
    regimes = np.arange(1, spec.num_regimes + 1)
    bound_ok, ext_ok, vol_err = True, True, ""
    try:
        for i in regimes:
            vals = spec.volatility.evaluate_many(ys, np.full(ys.shape, i))
            if np.any(vals < 0.0) or np.any(vals > spec.volatility.bound_sigma + 1e-15):
                bound_ok = False
            at_zero = spec.volatility.eval(0.0, int(i))
            neg = vals[ys < 0.0]
            if neg.size and np.abs(neg - at_zero).max() > 1e-15:
                ext_ok = False
    except Exception as exc:  # report, never abort
        bound_ok = ext_ok = False
        vol_err = f"evaluation failed: {exc}"
    checks.append(CheckResult("volatility_bounded", bound_ok, vol_err))
    checks.append(CheckResult(
        "volatility_negative_extension", ext_ok,
        "" if ext_ok else "eval(y<0, i) differs from eval(0, i)",
    ))

    ts = np.linspace(-spec.tau, 0.0, grid_points)
    seg = spec.initial_segment
    try:
        xi = np.array([seg.eval(float(t)) for t in ts])
        positive = bool(np.all(xi > 0.0))
        holder = True
        for stride in (1, 10, 100, 1000):
            if stride >= len(ts):
                break
            dt = ts[stride:] - ts[:-stride]
            dxi = np.abs(xi[stride:] - xi[:-stride])
            if np.any(dxi > seg.holder_constant * dt**seg.holder_exponent + 1e-12):
                holder = False
        seg_err = ""
    except Exception as exc:
        positive = holder = False
        seg_err = f"evaluation failed: {exc}"
    checks.append(CheckResult("initial_segment_positive", positive, seg_err))
    checks.append(CheckResult("initial_segment_hoelder", holder, seg_err))

    return AssumptionReport(checks=tuple(checks))


# -- one-sided growth (moment-bound) check ------------------------------------

def khasminskii_integrand(x: float, y: float, i: int, p: float, spec: ModelSpec) -> float:
    """x f(x,i) + (p-1)/2 * (phi(y,i) g(x))^2, the one-sided growth functional."""
    phi = spec.volatility.eval(y, i)
    return x * drift_f(x, i, spec) + 0.5 * (p - 1.0) * (phi * diffusion_g(x, spec)) ** 2


def khasminskii_check(
    spec: ModelSpec,
    p: float = 2.0,
    x_grid: Sequence[float] | None = None,
    y_grid: Sequence[float] | None = None,
) -> tuple[bool, float]:
    """Grid test that the growth functional stays below K4 (1 + x^2).

    Returns ``(holds, fitted_k4)`` where ``fitted_k4`` is the largest ratio
    of the functional to ``1 + x^2`` over the grid. The bound is judged to
    hold when that maximum is finite, attained away from the upper grid
    edge, and not still increasing there.
    """
    if p < 2.0:
        raise ValueError("p must be >= 2")
    xs = np.geomspace(1e-2, 1e2, 401) if x_grid is None else np.asarray(x_grid, dtype=float)
    ys = np.linspace(-5.0, 5.0, 21) if y_grid is None else np.asarray(y_grid, dtype=float)
    if np.any(xs <= 0.0):
        raise ValueError("x grid must be positive")
    xs = np.sort(xs)

    ratios = np.empty(xs.size)
    for j, x in enumerate(xs):
        worst = -np.inf
        for i in range(1, spec.num_regimes + 1):
            for y in ys:
                worst = max(worst, khasminskii_integrand(float(x), float(y), i, p, spec))
        ratios[j] = worst / (1.0 + x * x)

    k4 = float(ratios.max())
    arg = int(ratios.argmax())
    holds = bool(
        np.all(np.isfinite(ratios))
        and arg < xs.size - 1
        and ratios[-1] <= ratios[-2]
    )
    return holds, k4
