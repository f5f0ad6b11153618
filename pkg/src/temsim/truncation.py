"""Step-size-dependent truncation of the superlinear coefficients.

A dominating function ``mu`` bounds the coefficient magnitudes over bands
``[1/r, r]``; its inverse composed with a decreasing step profile
``psi(delta) = delta^-q`` yields the truncation band for each step size.
Inside the band the truncated coefficients equal the raw ones; outside,
arguments are clamped to the band edges, which caps every coefficient
evaluation at ``psi(delta)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import ModelSpec, diffusion_g, drift_f


class TruncationError(ValueError):
    """Raised when a policy cannot be constructed or a step size is inadmissible."""


class StepProfileWarning(UserWarning):
    """Emitted when psi violates the quarter-power admissibility bound."""


class _Mu3U2:
    """mu(u) = 3 u^2, the closed form used with the built-in demo model."""

    name = "3u2"

    def __call__(self, r):
        return 3.0 * r * r

    def inverse(self, u):
        return np.sqrt(u / 3.0)


class _MuPower:
    """mu(u) = c * u^m with a grid-fitted constant."""

    name = "power_fit"

    def __init__(self, c: float, m: float):
        self.c = float(c)
        self.m = float(m)

    def __call__(self, r):
        return self.c * r**self.m

    def inverse(self, u):
        return (u / self.c) ** (1.0 / self.m)


@dataclass(frozen=True)
class TruncationPolicy:
    """Dominating function, step profile exponent, and admissible step bound."""

    mu: Callable[[float], float]
    mu_inverse: Callable[[float], float]
    psi_exponent: float
    delta_star: float
    mu_name: str = "custom"

    def __post_init__(self):
        if self.psi_exponent <= 0.0:
            raise TruncationError("psi_exponent must be positive")
        if not 0.0 < self.delta_star < 1.0:
            raise TruncationError("delta_star must lie in (0, 1)")


def psi(delta: float, policy: TruncationPolicy) -> float:
    """Step profile ``delta^-q``; warns when ``delta^(1/4) * psi > 1``."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    value = delta ** (-policy.psi_exponent)
    if delta ** 0.25 * value > 1.0 + 1e-12:
        warnings.warn(
            f"psi exponent {policy.psi_exponent:g} exceeds 1/4: "
            f"delta^(1/4) psi(delta) = {delta**0.25 * value:.4g} > 1 at delta = {delta:g}",
            StepProfileWarning,
            stacklevel=2,
        )
    return value


def truncation_band(delta: float, policy: TruncationPolicy) -> tuple[float, float]:
    """Clamp interval ``[1/u, u]`` with ``u = mu_inverse(psi(delta))``."""
    if delta > policy.delta_star * (1.0 + 1e-12):
        raise TruncationError(
            f"delta = {delta:g} exceeds the admissible bound delta_star = "
            f"{policy.delta_star:g}"
        )
    upper = float(policy.mu_inverse(psi(delta, policy)))
    if upper <= 1.0:
        raise TruncationError(
            f"truncation band degenerate at delta = {delta:g} (upper edge {upper:g})"
        )
    return 1.0 / upper, upper


def truncated_drift(x: float, i: int, delta: float, spec: ModelSpec,
                    policy: TruncationPolicy) -> float:
    """Drift evaluated at ``x`` clamped into the band for this step size."""
    lower, upper = truncation_band(delta, policy)
    return drift_f(min(max(x, lower), upper), i, spec)


def truncated_diffusion(x: float, delta: float, spec: ModelSpec,
                        policy: TruncationPolicy) -> float:
    """Diffusion factor with only the upper clamp; zero for negative x."""
    if x < 0.0:
        return 0.0
    _, upper = truncation_band(delta, policy)
    return diffusion_g(min(x, upper), spec)


def _coefficient_sup(spec: ModelSpec, xs: np.ndarray) -> np.ndarray:
    """max over regimes of |f| or g, pointwise on a positive grid."""
    sup = np.array([diffusion_g(float(x), spec) for x in xs])
    for i in range(1, spec.num_regimes + 1):
        fv = np.abs([drift_f(float(x), i, spec) for x in xs])
        sup = np.maximum(sup, fv)
    return sup


def _verify_domination(spec: ModelSpec, mu: Callable[[float], float],
                       r_grid: np.ndarray, xs: np.ndarray, sup: np.ndarray) -> None:
    for r in r_grid:
        in_band = (xs >= 1.0 / r) & (xs <= r)
        if not np.any(in_band):
            continue
        band_sup = float(sup[in_band].max())
        if band_sup > float(mu(r)) * (1.0 + 1e-9):
            raise TruncationError(
                f"mu({r:g}) = {float(mu(r)):g} does not dominate the "
                f"coefficient sup {band_sup:g} on [1/{r:g}, {r:g}]"
            )


def delta_star_search(spec: ModelSpec, policy: TruncationPolicy) -> float:
    """Largest admissible step bound for this model under the policy's mu/psi."""
    return _delta_star_search(spec, policy.mu_inverse, policy.psi_exponent)


def _delta_star_search(spec: ModelSpec, mu_inverse: Callable[[float], float],
                       q: float) -> float:
    def admissible(delta: float) -> bool:
        if float(mu_inverse(delta**-q)) <= 1.0:
            return False
        if spec.include_inverse_drift:
            xs = np.geomspace(delta * 1e-3, delta * (1.0 - 1e-9), 128)
            for i in range(1, spec.num_regimes + 1):
                if any(drift_f(float(x), i, spec) <= 0.0 for x in xs):
                    return False
        return True

    lo, hi = 1e-12, 1.0 - 1e-9
    if not admissible(lo):
        raise TruncationError("no admissible step bound found above 1e-12")
    if admissible(hi):
        return hi
    while hi - lo > 1e-6 * max(lo, 1e-3):
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def default_mu_for(spec: ModelSpec, psi_exponent: float = 0.25,
                   mu_preset: str = "auto",
                   delta_star: float | None = None) -> TruncationPolicy:
    """Build a truncation policy for a model.

    ``mu_preset``:
      * ``"3u2"`` -- the closed form mu(u) = 3 u^2 (valid for the built-in
        demo model); verified against the coefficients before use.
      * ``"power_fit"`` -- mu(u) = c * u^(max(rho, theta) + 1) with c fitted
        by grid maximization of the coefficient sup.
      * ``"auto"`` -- 3u2 if it dominates this model's coefficients, else
        the power fit.

    The default profile exponent 1/4 is the largest satisfying the
    quarter-power step condition; larger values (e.g. 2/3) are accepted but
    make :func:`psi` warn.
    """
    xs = np.geomspace(1e-3, 1e3, 4001)
    sup = _coefficient_sup(spec, xs)
    r_grid = np.geomspace(1.0, 1e3, 200)

    mu = None
    if mu_preset in ("auto", "3u2"):
        candidate = _Mu3U2()
        try:
            _verify_domination(spec, candidate, r_grid, xs, sup)
            mu = candidate
        except TruncationError:
            if mu_preset == "3u2":
                raise
    if mu is None:
        if mu_preset not in ("auto", "power_fit"):
            raise TruncationError(f"unknown mu preset {mu_preset!r}")
        m = max(spec.rho, spec.theta) + 1.0
        ratios = []
        for r in r_grid:
            in_band = (xs >= 1.0 / r) & (xs <= r)
            if np.any(in_band):
                ratios.append(float(sup[in_band].max()) / r**m)
        c = max(ratios) * (1.0 + 1e-6)
        mu = _MuPower(c, m)
        # verify on an offset grid, not the one used for the fit
        r_check = np.geomspace(1.013, 0.87e3, 173)
        _verify_domination(spec, mu, r_check, xs, sup)

    if delta_star is None:
        delta_star = _delta_star_search(spec, mu.inverse, psi_exponent)
    else:
        if not 0.0 < delta_star < 1.0:
            raise TruncationError("delta_star override must lie in (0, 1)")
        if float(mu.inverse(delta_star**-psi_exponent)) <= 1.0:
            raise TruncationError(
                f"delta_star override {delta_star:g} gives a degenerate band"
            )

    return TruncationPolicy(
        mu=mu,
        mu_inverse=mu.inverse,
        psi_exponent=psi_exponent,
        delta_star=float(delta_star),
        mu_name=mu.name,
    )
