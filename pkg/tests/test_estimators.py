import math

import numpy as np
import pytest

from temsim.engine import SimulationError
from temsim.estimators import (
    ConvergenceReport,
    EstimatorResult,
    barrier_option_price,
    bond_price,
    moment_curves,
    scheme_comparison,
    strong_error,
)
from temsim.model import (
    ModelSpec,
    RegimeParams,
    build_volatility,
    constant_segment,
    two_regime_demo,
)
from temsim.regime import GeneratorMatrix
from temsim.truncation import default_mu_for

DEMO = two_regime_demo()
POLICY = default_mu_for(DEMO, psi_exponent=2 / 3)


def constant_path_spec(level=0.02):
    """All channels dead: every path is identically the initial level."""
    return ModelSpec(
        regimes=(RegimeParams(0.0, 0.0, 0.0, 0.0, 0.0),),
        rho=2.0, theta=1.25, tau=1.0, jump_intensity=0.0,
        volatility=build_volatility("zero"),
        initial_segment=constant_segment(level),
        generator=GeneratorMatrix(np.zeros((1, 1))),
        initial_regime=1, include_inverse_drift=False,
    )


def ode_spec(initial=1.0):
    return ModelSpec(
        regimes=(RegimeParams(0.3, 0.2, 0.1, 0.5, 0.0),),
        rho=2.0, theta=1.25, tau=1.0, jump_intensity=0.0,
        volatility=build_volatility("zero"),
        initial_segment=constant_segment(initial),
        generator=GeneratorMatrix(np.zeros((1, 1))),
        initial_regime=1, include_inverse_drift=True,
    )


CONST_SPEC = constant_path_spec()
CONST_POLICY = default_mu_for(CONST_SPEC, psi_exponent=2 / 3,
                              mu_preset="power_fit")


class TestEstimatorResult:
    def test_interval_definition(self):
        result = EstimatorResult.from_samples(np.array([1.0, 2.0, 3.0]))
        assert result.estimate == pytest.approx(2.0)
        se = np.std([1.0, 2.0, 3.0], ddof=1) / math.sqrt(3)
        assert result.std_error == pytest.approx(se)
        assert result.confidence_95[0] == pytest.approx(2.0 - 1.96 * se)
        assert result.confidence_95[1] == pytest.approx(2.0 + 1.96 * se)


class TestBondPrice:
    def test_constant_path_closed_form(self):
        result = bond_price(CONST_SPEC, CONST_POLICY, 1e-3, 1.0, 32, 0)
        assert result.estimate == pytest.approx(math.exp(-0.02), rel=1e-13)
        assert result.std_error == 0.0

    def test_deterministic_ode_against_quadrature(self):
        # zero volatility: the price is exp(-integral of the Euler path);
        # reference integral from a fine fourth-order solution
        spec = ode_spec()
        policy = default_mu_for(spec, psi_exponent=2 / 3)
        result = bond_price(spec, policy, 1e-4, 1.0, 8, 0)

        def f(x):
            return 0.3 / x - 0.2 + 0.1 * x - 0.5 * x * x

        n = 2**14
        dt = 1.0 / n
        xs = np.empty(n + 1)
        xs[0] = 1.0
        x = 1.0
        for _ in range(n):
            k1 = f(x); k2 = f(x + 0.5 * dt * k1)
            k3 = f(x + 0.5 * dt * k2); k4 = f(x + dt * k3)
            x += dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            xs[_ + 1] = x
        integral = np.trapezoid(xs, dx=dt)
        assert result.estimate == pytest.approx(math.exp(-integral), abs=1e-4)

    def test_bond_in_unit_interval_for_positive_paths(self):
        result = bond_price(DEMO, POLICY, 1e-2, 1.0, 64, 3)
        assert 0.0 < result.estimate <= 1.0

    def test_bitwise_reproducible_and_thread_invariant(self):
        a = bond_price(DEMO, POLICY, 1e-2, 1.0, 300, 11, threads=1)
        b = bond_price(DEMO, POLICY, 1e-2, 1.0, 300, 11, threads=2)
        assert a == b

    def test_std_error_scaling(self):
        small = bond_price(DEMO, POLICY, 1e-2, 1.0, 600, 5)
        large = bond_price(DEMO, POLICY, 1e-2, 1.0, 1200, 5)
        ratio = small.std_error / large.std_error
        assert math.sqrt(2.0) * 0.9 <= ratio <= math.sqrt(2.0) * 1.1

    def test_two_step_sizes_statistically_consistent(self):
        # same seed set at two step sizes: estimates within each other's
        # three-standard-error bands. Uses an in-band start: from 0.02 the
        # sub-band rise field differs across steps, a systematic transient
        # bias that dwarfs the Monte Carlo error at these step sizes.
        spec = two_regime_demo(initial_value=1.0)
        policy = default_mu_for(spec, psi_exponent=2 / 3)
        coarse = bond_price(spec, policy, 1e-2, 2.0, 500, 14)
        fine = bond_price(spec, policy, 1e-3, 2.0, 500, 14)
        gap = abs(coarse.estimate - fine.estimate)
        assert gap <= 3.0 * max(coarse.std_error, fine.std_error)


class TestBarrierOption:
    def test_immediate_knockout_prices_zero(self):
        result = barrier_option_price(DEMO, POLICY, 1e-2, 1.0, 0.01, 0.02, 64, 0)
        assert result.estimate == 0.0
        assert result.std_error == 0.0

    def test_constant_path_payoff(self):
        spec = constant_path_spec(0.05)
        policy = default_mu_for(spec, psi_exponent=2 / 3, mu_preset="power_fit")
        result = barrier_option_price(spec, policy, 1e-2, 1.0, 0.03, 1.0, 16, 0)
        assert result.estimate == pytest.approx(0.02, abs=1e-15)

    def test_unbounded_barrier_zero_strike_is_terminal_mean(self):
        from temsim import engine
        result = barrier_option_price(DEMO, POLICY, 1e-2, 1.0, 0.0, np.inf, 200, 9)
        grid = engine.resolve_grid(DEMO.tau, 1e-2, 1.0)
        chunks = []
        for lo in range(0, 200, 128):
            idx = np.arange(lo, min(lo + 128, 200))
            b, p, r = engine.draw_batch_noise(DEMO, grid, 9, idx)
            values = engine.simulate_tem_batch(DEMO, POLICY, grid, b, p, r)
            chunks.append(values[:, -1])
        terminal = np.concatenate(chunks)
        assert result.estimate == terminal.mean()

    def test_payoffs_nonnegative(self):
        result = barrier_option_price(DEMO, POLICY, 1e-2, 1.0, 0.5, 2.0, 128, 21)
        assert result.estimate >= 0.0

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            barrier_option_price(DEMO, POLICY, 1e-2, 1.0, -0.1, 1.0, 8, 0)
        with pytest.raises(ValueError):
            barrier_option_price(DEMO, POLICY, 1e-2, 1.0, 0.1, 0.0, 8, 0)


class TestStrongError:
    def test_reference_compared_with_itself_is_zero(self):
        report = strong_error(DEMO, POLICY, [2**-6], 2**-6, 1.0, 2.0, 16, 0)
        assert report.errors[0] == 0.0
        assert math.isnan(report.fitted_order)

    def test_zero_noise_euler_order_one(self):
        spec = ode_spec()
        policy = default_mu_for(spec, psi_exponent=2 / 3)
        ladder = [2**-4, 2**-5, 2**-6, 2**-7]
        report = strong_error(spec, policy, ladder, 2**-10, 1.0, 2.0, 4, 0)
        assert report.fitted_order == pytest.approx(1.0, abs=0.1)

    def test_sorted_decreasing_and_lengths(self):
        report = strong_error(DEMO, POLICY, [2**-7, 2**-5, 2**-6], 2**-9, 1.0,
                              2.0, 8, 1)
        assert np.all(np.diff(report.step_sizes) < 0)
        assert report.errors.size == 3

    def test_monotone_within_bands(self):
        report = strong_error(DEMO, POLICY, [2**-5, 2**-6, 2**-7, 2**-8],
                              2**-11, 1.0, 2.0, 128, 4)
        for j in range(len(report.errors) - 1):
            assert report.errors[j] + 2 * report.std_errors[j] >= \
                report.errors[j + 1] - 2 * report.std_errors[j + 1]

    def test_non_dyadic_ladder_rejected(self):
        with pytest.raises(ValueError, match="0.3"):
            strong_error(DEMO, POLICY, [0.3], 0.125, 1.0, 2.0, 8, 0)

    def test_misaligned_reference_rejected(self):
        with pytest.raises(ValueError):
            strong_error(DEMO, POLICY, [1 / 3], 1 / 9, 1.0, 2.0, 8, 0)

    def test_nan_paths_abort_with_replay_record(self):
        spec = ModelSpec(
            regimes=(RegimeParams(0.0, 0.0, 0.0, 0.0, 2.0),),
            rho=2.0, theta=1.25, tau=1.0, jump_intensity=3000.0,
            volatility=build_volatility("zero"),
            initial_segment=constant_segment(1.0),
            generator=GeneratorMatrix(np.zeros((1, 1))),
            initial_regime=1, include_inverse_drift=False,
        )
        policy = default_mu_for(spec, psi_exponent=2 / 3, mu_preset="power_fit")
        with pytest.raises(SimulationError, match="replay"):
            strong_error(spec, policy, [2**-4], 2**-8, 2.0, 2.0, 8, 13)

    def test_report_type_invariants(self):
        with pytest.raises(ValueError):
            ConvergenceReport(step_sizes=np.array([0.1, 0.2]),
                              errors=np.array([1.0, 2.0]),
                              std_errors=np.array([0.0, 0.0]),
                              fitted_order=0.5, p=2.0, num_paths=1,
                              reference_delta=0.01)


class TestSchemeComparison:
    def test_zero_drift_schemes_identical(self):
        # both schemes reduce to the same explicit recursion when the drift
        # vanishes and paths stay inside the truncation band (mild jumps)
        spec = ModelSpec(
            regimes=(RegimeParams(0.0, 0.0, 0.0, 0.0, 0.1),
                     RegimeParams(0.0, 0.0, 0.0, 0.0, 0.2)),
            rho=2.0, theta=1.25, tau=1.0, jump_intensity=1.0,
            volatility=build_volatility("sigmoid_s5"),
            initial_segment=constant_segment(0.5),
            generator=GeneratorMatrix(np.array([[-2.0, 2.0], [1.0, -1.0]])),
            initial_regime=1, include_inverse_drift=False,
        )
        policy = default_mu_for(spec, psi_exponent=2 / 3, mu_preset="power_fit")
        result = scheme_comparison(spec, policy, 1e-2, 1.0, 32, 0)
        assert result.mean == 0.0
        assert result.max == 0.0

    def test_deterministic_report(self):
        a = scheme_comparison(DEMO, POLICY, 1e-2, 0.5, 64, 3)
        b = scheme_comparison(DEMO, POLICY, 1e-2, 0.5, 64, 3)
        assert a == b

    def test_distance_shrinks_with_step(self):
        spec = two_regime_demo(include_inverse_drift=False)
        policy = default_mu_for(spec, psi_exponent=0.25)
        coarse = scheme_comparison(spec, policy, 1e-2, 1.0, 96, 5)
        fine = scheme_comparison(spec, policy, 2.5e-3, 1.0, 96, 5)
        assert fine.mean < coarse.mean

    def test_quantiles_ordered(self):
        result = scheme_comparison(DEMO, POLICY, 1e-2, 0.5, 64, 3)
        assert result.quantiles[0.1] <= result.quantiles[0.5] <= result.quantiles[0.9]
        assert result.quantiles[0.9] <= result.max


class TestMomentCurves:
    def test_coupled_curves_cover_each_grid(self):
        curves = moment_curves(DEMO, POLICY, [1e-2, 1e-3], 1.0, 4.0, 64, 2)
        assert len(curves) == 2
        for delta, curve in curves.items():
            assert curve.size == round(1.0 / delta) + 1
            assert np.isfinite(curve).all()

    def test_matches_direct_average(self):
        from temsim import engine
        curves = moment_curves(DEMO, POLICY, [1e-2], 0.5, 4.0, 40, 8)
        grid = engine.resolve_grid(DEMO.tau, 1e-2, 0.5)
        b, p, r = engine.draw_batch_noise(DEMO, grid, 8, np.arange(40))
        values = engine.simulate_tem_batch(DEMO, POLICY, grid, b, p, r)
        direct = (np.abs(values[:, grid.tau_steps:]) ** 4).mean(axis=0)
        np.testing.assert_allclose(curves[grid.delta], direct, rtol=1e-12)
