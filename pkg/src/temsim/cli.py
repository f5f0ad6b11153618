"""Command-line front end.

Commands: validate | simulate | converge | compare-schemes | price-bond |
price-barrier. One YAML config file describes the run; command-line flags
override file values, file values override defaults. Exit codes: 0 on
success, 2 for configuration problems, 3 for failed validation checks,
4 for numerical failures.
"""

from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np
import yaml

from . import export
from .config import ConfigError, RunConfig, load_config, resolve_config
from .engine import SimulationError, resolve_grid
from .estimators import (
    barrier_option_price,
    bond_price,
    scheme_comparison,
    strong_error,
)
from .model import drift_f, validate_assumptions
from .rng import path_streams
from .schemes import simulate_tem_path
from .truncation import (
    StepProfileWarning,
    TruncationError,
    psi,
    truncation_band,
    truncated_diffusion,
    truncated_drift,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="temsim",
        description="Truncated EM simulation of a regime-switching jump "
                    "rate model with delayed volatility",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("validate", "audit model assumptions and the truncation policy"),
        ("simulate", "simulate one path and write it as CSV"),
        ("converge", "strong-error study over the configured step ladder"),
        ("compare-schemes", "pathwise TEM vs BEM distance at one step size"),
        ("price-bond", "Monte Carlo bond price"),
        ("price-barrier", "Monte Carlo knock-out barrier option price"),
    ]:
        cmd = sub.add_parser(name, help=helptext)
        cmd.add_argument("--config", required=True, help="YAML config file")
        cmd.add_argument("--seed", type=int, default=None, help="master seed override")
        cmd.add_argument("--threads", type=int, default=None,
                         help="worker processes (default: machine parallelism)")
        cmd.add_argument("--out", default=None, help="output file (default: stdout)")
        cmd.add_argument("--no-inverse-drift", action="store_true",
                         help="drop the 1/x drift term")
        cmd.add_argument("--psi-exponent", type=float, default=None,
                         help="step-profile exponent override")
    return parser


def cmd_validate(run: RunConfig) -> tuple[str, int]:
    header = export.config_header(run.resolved, "validate")
    lines = list(header)
    failed = False

    report = validate_assumptions(run.spec)
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        failed |= not check.passed
        suffix = f" ({check.detail})" if check.detail and not check.passed else ""
        lines.append(f"{status} {check.name}{suffix}")

    lines.append(f"INFO delta_star = {run.policy.delta_star!r}")
    grid = resolve_grid(run.spec.tau, run.delta, run.horizon)
    lines.append(f"INFO effective_delta = {grid.delta!r}")

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", StepProfileWarning)
        step_profile = psi(grid.delta, run.policy)
        lower, upper = truncation_band(grid.delta, run.policy)
    lines.append(f"INFO psi(delta) = {step_profile!r}")
    lines.append(f"INFO band = [{lower!r}, {upper!r}]")
    if any(issubclass(w.category, StepProfileWarning) for w in caught):
        lines.append("WARN quarter_power_step_profile "
                     f"(psi_exponent = {run.policy.psi_exponent!r} > 0.25)")
    else:
        lines.append("PASS quarter_power_step_profile")

    # randomized cap check: every truncated coefficient stays below psi(delta)
    rng = np.random.default_rng(12345)
    cap_ok = True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StepProfileWarning)
        for _ in range(2000):
            x = float(rng.uniform(-50.0, 50.0))
            i = int(rng.integers(1, run.spec.num_regimes + 1))
            delta = float(rng.uniform(1e-6, run.policy.delta_star))
            cap = psi(delta, run.policy) * (1.0 + 1e-12)
            fd = abs(truncated_drift(x, i, delta, run.spec, run.policy))
            gd = truncated_diffusion(x, delta, run.spec, run.policy)
            if max(fd, gd) > cap:
                cap_ok = False
                break
        interior_ok = True
        for x in np.linspace(lower * 1.01, upper * 0.99, 7):
            if truncated_drift(float(x), 1, grid.delta, run.spec, run.policy) != \
                    drift_f(float(x), 1, run.spec):
                interior_ok = False
    lines.append(("PASS" if cap_ok else "FAIL") + " truncated_coefficient_cap")
    lines.append(("PASS" if interior_ok else "FAIL") + " band_interior_identity")
    failed |= not (cap_ok and interior_ok)

    return "\n".join(lines) + "\n", EXIT_VALIDATION if failed else EXIT_OK


def cmd_simulate(run: RunConfig) -> tuple[str, int]:
    state = simulate_tem_path(
        run.spec, run.policy, run.delta, run.horizon,
        streams=path_streams(run.seed, 0),
    )
    header = export.config_header(run.resolved, "simulate")
    return export.render_path_csv(state, header), EXIT_OK


def cmd_converge(run: RunConfig) -> tuple[str, int]:
    exp = run.experiment
    if not exp.step_ladder:
        raise ConfigError("experiment.step_ladder", "required for converge")
    if exp.reference_delta is None:
        raise ConfigError("experiment.reference_delta", "required for converge")
    try:
        report = strong_error(
            run.spec, run.policy, list(exp.step_ladder), exp.reference_delta,
            run.horizon, exp.p, run.num_paths, run.seed, threads=run.threads,
        )
    except ValueError as exc:
        raise ConfigError("experiment.step_ladder", str(exc)) from exc
    header = export.config_header(run.resolved, "converge")
    return export.render_convergence_csv(report, header), EXIT_OK


def cmd_compare_schemes(run: RunConfig) -> tuple[str, int]:
    result = scheme_comparison(
        run.spec, run.policy, run.delta, run.horizon, run.num_paths, run.seed,
        threads=run.threads,
    )
    header = export.config_header(run.resolved, "compare-schemes")
    return export.render_comparison_csv(result, header), EXIT_OK


def cmd_price_bond(run: RunConfig) -> tuple[str, int]:
    result = bond_price(run.spec, run.policy, run.delta, run.horizon,
                        run.num_paths, run.seed, threads=run.threads)
    header = export.config_header(run.resolved, "price-bond")
    return export.render_price_csv(result, header), EXIT_OK


def cmd_price_barrier(run: RunConfig) -> tuple[str, int]:
    exp = run.experiment
    result = barrier_option_price(
        run.spec, run.policy, run.delta, run.horizon, exp.strike, exp.barrier,
        run.num_paths, run.seed, threads=run.threads,
    )
    header = export.config_header(run.resolved, "price-barrier")
    return export.render_price_csv(result, header), EXIT_OK


_COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "compare-schemes": cmd_compare_schemes,
    "price-bond": cmd_price_bond,
    "price-barrier": cmd_price_barrier,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config)
        run = resolve_config(
            raw,
            seed=args.seed,
            threads=args.threads,
            no_inverse_drift=args.no_inverse_drift,
            psi_exponent=args.psi_exponent,
        )
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        output, code = _COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, TruncationError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fobj:
            fobj.write(output)
    else:
        sys.stdout.write(output)
    return code


if __name__ == "__main__":
    sys.exit(main())
