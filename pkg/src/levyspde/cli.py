"""Command-line front end: identity verifiers, rate experiments and plots.

Exit codes: 0 when every check passes, 1 when a check fails or the
configuration is inadmissible, 2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .config import ConfigError, RunConfig, load_config
from .harness import (
    RateReport,
    regularity_report,
    smoothing_sweep,
    strong_error,
    weak_error,
    weak_linear_sweep,
)
from .levy import AdmissibilityError
from .plotting import plot_reports
from .reports import SCHEMA_VERSION, IdentityReport
from .suites import adapted_suite, duality_suite, levy_suite, malliavin_suite, mecke_suite

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--threads", type=int, help="worker threads")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--profile", help="named parameter profile (default, quick)")
    parser.add_argument("--no-timestamp", action="store_true", help="omit wall-clock fields and SVG dates")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levyspde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", help="run an identity suite")
    verify_sub = verify.add_subparsers(dest="suite", required=True)
    for name, text in [
        ("mecke", "univariate and bivariate Mecke formula"),
        ("malliavin", "pathwise chain, product and commutation rules"),
        ("duality", "Monte Carlo duality and isometry"),
        ("adapted", "adaptedness and the derivative of the Lévy path"),
        ("levy", "stable clock sampler and Lévy path derivative"),
    ]:
        p = verify_sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--samples", type=int, help="samples or paths (overrides the config)")
        p.add_argument("--sigma-level", type=float, help="Monte Carlo tolerance in standard errors")

    rates = sub.add_parser("rates", help="run a convergence-rate experiment")
    rates_sub = rates.add_subparsers(dest="experiment", required=True)
    for name, text in [
        ("strong", "strong L^p error against h and k"),
        ("weak", "weak error against h and k"),
        ("smoothing", "deterministic smoothing estimate"),
        ("regularity", "Hölder regularity in time"),
    ]:
        p = rates_sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--sweep", choices=("h", "k", "both"), default=None, help="swept parameter")
        p.add_argument("--paths", type=int, help="Monte Carlo paths (overrides the config)")
        if name == "smoothing":
            p.add_argument("--sigma", type=float, action="append", help="smoothing exponent; repeatable")
        if name == "weak":
            p.add_argument("--functional", choices=("linear", "bounded_smooth"), help="test functional")
            p.add_argument("--estimator", choices=("mecke", "conditional", "coupled"), default="mecke")

    plot = sub.add_parser("plot", help="log-log SVG of saved rate reports")
    plot.add_argument("reports", nargs="*", help="rate report JSON files")
    plot.add_argument("--output", default="rates.svg", help="SVG path")
    plot.add_argument("--title")
    plot.add_argument("--no-timestamp", action="store_true")
    return parser


def _load(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config, args.profile)
    return config.with_overrides(seed=args.seed, threads=args.threads, out=args.out)


def _write_identity(reports: list[IdentityReport], suite: str, config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"verify-{suite}.json"
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "identity-suite",
        "suite": suite,
        "seed": config.seed,
        "passed": all(r.passed for r in reports),
        "failing": [r.name for r in reports if not r.passed],
        "reports": [r.to_dict() for r in reports],
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def cmd_verify(args: argparse.Namespace) -> int:
    config = _load(args)
    sigma = args.sigma_level if args.sigma_level is not None else config.tolerances.sigma_level
    n = args.samples
    seed, threads = config.seed, config.threads
    if args.suite == "mecke":
        reports = mecke_suite(n or config.n_samples, seed, sigma, threads=threads)
    elif args.suite == "malliavin":
        reports = malliavin_suite(n or 1000, seed, threads=threads)
    elif args.suite == "duality":
        reports = duality_suite(n or config.n_samples, seed, sigma, threads=threads)
    elif args.suite == "adapted":
        reports = adapted_suite(n or 1000, seed, threads=threads)
    else:
        reports = levy_suite(n or 1_000_000, seed, alpha=config.model.alpha, sigma_level=sigma)
    for r in reports:
        print(r.summary())
    path = _write_identity(reports, args.suite, config)
    failing = [r.name for r in reports if not r.passed]
    if failing:
        print("failing identities: " + ", ".join(failing), file=sys.stderr)
    print(f"wrote {path}")
    return EXIT_FAIL if failing else EXIT_PASS


def slope_window(experiment: str, axis: str, config: RunConfig, sigma: float | None = None) -> tuple[float, float]:
    """Accepted interval for a fitted slope under the configured tolerances."""
    tol = config.tolerances
    beta_minus = config.model.beta_minus
    if experiment == "smoothing":
        target = sigma if axis == "h" else sigma / 2.0
        return target - tol.smoothing_slope, target + tol.smoothing_slope
    if experiment == "weak-linear":
        target = 1.8 if axis == "h" else 0.9
        return target - tol.deterministic_slope, target + tol.deterministic_slope
    if experiment == "weak":
        target = 1.8 if axis == "h" else 0.9
        return target - tol.weak_slope, target + tol.weak_slope
    if experiment == "strong":
        return (0.95, 1.35) if axis == "h" else (0.45, 0.7)
    if experiment == "regularity":
        return beta_minus / 2.0 - 0.15, float("inf")
    raise ValueError(f"unknown experiment {experiment!r}")


def _axes(sweep: str | None) -> list[str]:
    return ["h", "k"] if sweep in (None, "both") else [sweep]


def cmd_rates(args: argparse.Namespace) -> int:
    config = _load(args)
    model = config.model.build()
    timing = not args.no_timestamp
    out = Path(config.out)
    checks: list[tuple[RateReport, tuple[float, float]]] = []
    if args.experiment == "smoothing":
        for sigma in args.sigma or [1.0, 2.0]:
            for axis in _axes(args.sweep):
                checks.append((smoothing_sweep(sigma, axis), slope_window("smoothing", axis, config, sigma)))
    elif args.experiment == "weak":
        kind = args.functional or config.functional.kind
        if kind == "linear":
            for axis in _axes(args.sweep):
                report = weak_linear_sweep(axis, x0_decay=config.x0_decay, direction_decay=config.functional.linear_decay)
                checks.append((report, slope_window("weak-linear", axis, config)))
        else:
            functional = config.functional.build(model.n_modes)
            for axis in _axes(args.sweep or "h"):
                grids = config.grid.h_grids() if axis == "h" else config.grid.k_grids()
                report = weak_error(
                    model, config.x0(), functional, grids, args.paths or config.n_weak_paths, config.seed,
                    estimator=args.estimator, threads=config.threads, name=f"weak-{kind}-{axis}",
                )
                checks.append((report, slope_window("weak", axis, config)))
    elif args.experiment == "strong":
        for axis in _axes(args.sweep):
            grids = config.grid.h_grids() if axis == "h" else config.grid.k_grids()
            report = strong_error(
                model, config.x0(), grids, config.model.moment, args.paths or config.n_paths, config.seed,
                threads=config.threads, name=f"strong-{axis}",
            )
            checks.append((report, slope_window("strong", axis, config)))
    else:
        report = regularity_report(
            model, config.x0(), args.paths or config.n_paths, config.seed,
            moment=config.model.moment, threads=config.threads,
        )
        checks.append((report, slope_window("regularity", "gap", config)))
    failed = False
    for report, (lo, hi) in checks:
        report.write(out, include_timing=timing)
        plot_reports([report], out / f"{report.name}.svg", timestamp=timing)
        ok = lo <= report.slope <= hi
        failed |= not ok
        print(f"{report.name}: slope {report.slope:.4f}, accepted [{lo:.3g}, {hi:.3g}] -> {'PASS' if ok else 'FAIL'}")
    return EXIT_FAIL if failed else EXIT_PASS


def cmd_plot(args: argparse.Namespace) -> int:
    if not args.reports:
        print("plot needs at least one report file", file=sys.stderr)
        return EXIT_USAGE
    try:
        reports = [RateReport.from_dict(json.loads(Path(p).read_text())) for p in args.reports]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"cannot read report: {exc}", file=sys.stderr)
        return EXIT_USAGE
    path = plot_reports(reports, args.output, title=args.title, timestamp=not args.no_timestamp)
    print(f"wrote {path}")
    return EXIT_PASS


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "rates":
            return cmd_rates(args)
        return cmd_plot(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AdmissibilityError as exc:
        print(f"inadmissible parameters: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
