"""Named verification suites run by the CLI and the acceptance tests.

Every suite returns a list of identity reports with one seed stream per
check, so the results do not depend on how checks are scheduled.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .catalog import Catalog, default_catalog
from .levy import LevyModel, SubordinatedQWiener, levy_derivative_checks, stable_laplace_check
from .malliavin import (
    adaptedness_check,
    chain_rule_check,
    commutation_check,
    double_skorohod_check,
    duality_check,
    higher_difference_check,
    isometry_check,
    predictable_shortcut_check,
    product_rule_check,
)
from .measure import Box, PointConfiguration, mecke_check, mecke_check_bivariate, sample_poisson_batch
from .parallel import ordered_map
from .reports import IdentityReport, combine_exact
from .rng import stream

SUITES = ("mecke", "malliavin", "duality", "adapted", "levy")


def mecke_suite(n_samples: int, seed: int, sigma_level: float = 3.0, catalog: Catalog | None = None, threads: int = 1) -> list[IdentityReport]:
    """Three univariate families, each with both μ-side estimators, plus a bivariate check.

    The bivariate integrand depends on the configuration and on both points,
    so it exercises the factorial pairs and the double removal.
    """
    cat = catalog or default_catalog()
    window = cat.window
    left = Box((0.0, 0.0), (0.5, 1.0))
    right = Box((0.5, 0.0), (1.0, 1.0))
    m_left, m_right = window.measure(left), window.measure(right)

    def ones(eta: PointConfiguration, x) -> float:
        return 1.0

    def same(eta: PointConfiguration, x) -> float:
        return eta.count_in(left) * float(left.contains(x))

    def disjoint(eta: PointConfiguration, x) -> float:
        return eta.count_in(left) * float(right.contains(x))

    families: list[tuple[str, Callable, Callable[[PointConfiguration], float]]] = [
        ("constant", ones, lambda eta: window.total_mass),
        ("count-same-set", same, lambda eta: m_left * (eta.count_in(left) + 1)),
        ("count-disjoint-sets", disjoint, lambda eta: m_right * eta.count_in(left)),
    ]
    jobs: list[Callable[[], IdentityReport]] = []
    for i, (label, f, comp) in enumerate(families):
        for estimator in ("extra_point", "compensator"):
            jobs.append(
                lambda f=f, comp=comp, label=label, estimator=estimator, i=i: mecke_check(
                    f, window, n_samples, stream(seed, "mecke", i), estimator=estimator,
                    compensator=comp, sigma_level=sigma_level, name=f"mecke-{label}-{estimator.replace('_', '-')}",
                )
            )
    bivariate = [
        ("count-and-points", lambda eta, a, b: (eta.count_in(left) + a[0]) * float(right.contains(a)) * b[1]),
    ]
    for i, (label, f) in enumerate(bivariate):
        jobs.append(
            lambda f=f, label=label, i=i: mecke_check_bivariate(
                f, window, n_samples, stream(seed, "mecke-bivariate", i), sigma_level=sigma_level,
                name=f"mecke-bivariate-{label}",
            )
        )
    return ordered_map(lambda job: job(), jobs, threads)


def malliavin_suite(n_paths: int, seed: int, catalog: Catalog | None = None, threads: int = 1) -> list[IdentityReport]:
    """Pathwise algebra on ``n_paths`` configurations: every identity must hold to 1e-10."""
    cat = catalog or default_catalog()
    window = cat.window
    configs = sample_poisson_batch(window, stream(seed, "malliavin", "configs"), n_paths)
    probes = window.sample_points(stream(seed, "malliavin", "probes"), 3 * n_paths)
    names = sorted(cat.functionals)
    smooth = {"sine": np.sin, "cube": lambda v: v**3, "softplus": lambda v: np.log1p(np.exp(v))}
    left = Box((0.0, 0.0), (0.5, 1.0))
    vector = (1.0, -2.0, 0.5)

    def path_checks(i: int) -> dict[str, list[IdentityReport]]:
        eta = configs[i]
        x, y, z = probes[3 * i], probes[3 * i + 1], probes[3 * i + 2]
        out: dict[str, list[IdentityReport]] = {}
        for fname in names:
            F = cat.functionals[fname]
            for hname, h in smooth.items():
                out.setdefault(f"chain-rule/{fname}/{hname}", []).append(chain_rule_check(F, h, eta, x))
            for k, pts in enumerate(([x], [x, y], [x, y, z]), start=1):
                out.setdefault(f"difference-k/{fname}/k={k}", []).append(higher_difference_check(F, eta, pts))
        for a, b in zip(names, names[1:] + names[:1]):
            out.setdefault(f"product-rule/{a}/{b}", []).append(
                product_rule_check(cat.functionals[a], cat.functionals[b], eta, x)
            )
        for fname, fld in sorted(cat.fields.items()):
            out.setdefault(f"commutation/{fname}", []).append(commutation_check(fld, eta, x))
        for fname, fld in sorted(cat.fields2.items()):
            out.setdefault(f"double-skorohod/{fname}", []).append(double_skorohod_check(fld, eta))
        out.setdefault("predictable-shortcut/constant", []).append(predictable_shortcut_check(left, vector, eta))
        out.setdefault("predictable-shortcut/outside-count", []).append(
            predictable_shortcut_check(left, vector, eta, outside=cat.functionals["count-low-vector"])
        )
        return out

    per_path = ordered_map(path_checks, range(n_paths), threads)
    keys = list(per_path[0]) if per_path else []
    return [combine_exact(key, [r for p in per_path for r in p[key]]) for key in keys]


def duality_suite(n_samples: int, seed: int, sigma_level: float = 3.0, catalog: Catalog | None = None, threads: int = 1) -> list[IdentityReport]:
    """Monte Carlo duality and isometry checks on catalog pairs."""
    cat = catalog or default_catalog()
    window = cat.window
    duality_pairs = [
        ("count-left", "indicator-left"),
        ("linear-statistic", "count-right-times-left"),
        ("count-low-vector", "ratio-whole-polynomial"),
    ]
    isometry_pairs = [
        ("indicator-left", "indicator-left"),
        ("count-right-times-left", "count-low-times-left"),
        ("wave-statistic-low", "ratio-whole-polynomial"),
    ]
    jobs: list[Callable[[], IdentityReport]] = []
    for i, (fname, phi) in enumerate(duality_pairs):
        jobs.append(
            lambda fname=fname, phi=phi, i=i: duality_check(
                cat.functionals[fname], cat.fields[phi], window, n_samples, stream(seed, "duality", i),
                sigma_level, name=f"duality/{fname}/{phi}",
            )
        )
    for i, (a, b) in enumerate(isometry_pairs):
        jobs.append(
            lambda a=a, b=b, i=i: isometry_check(
                cat.fields[a], cat.fields[b], window, n_samples, stream(seed, "isometry", i),
                sigma_level, name=f"isometry/{a}/{b}",
            )
        )
    return ordered_map(lambda job: job(), jobs, threads)


def adapted_suite(n_paths: int, seed: int, model: LevyModel | None = None, catalog: Catalog | None = None, threads: int = 1) -> list[IdentityReport]:
    """Future probes leave adapted functionals unchanged; ``D_{s,x} L(t) = 1_{s≤t} x``."""
    cat = catalog or default_catalog()
    jobs: list[Callable[[], IdentityReport]] = []
    for i, (fname, F) in enumerate(sorted(cat.functionals.items())):
        for j, t in enumerate((0.25, 0.5, 0.75)):
            jobs.append(
                lambda F=F, t=t, fname=fname, i=i, j=j: adaptedness_check(
                    F, t, cat.window, n_paths, stream(seed, "adapted", i, j), name=f"adaptedness/{fname}/t={t}"
                )
            )
    levy_model = model or SubordinatedQWiener(n_modes=16, jump_threshold=0.05)
    jobs.append(lambda: _renamed(levy_derivative_checks(levy_model, n_paths, seed), "levy-path-derivative"))
    return ordered_map(lambda job: job(), jobs, threads)


def levy_suite(n_draws: int, seed: int, alpha: float = 1.5, n_probes: int = 200, sigma_level: float = 3.0) -> list[IdentityReport]:
    """Stable clock Laplace transform and the derivative of the Lévy path."""
    laplace = stable_laplace_check(alpha / 2.0, (0.5, 1.0, 2.0), n_draws, stream(seed, "stable"), sigma_level=sigma_level)
    derivative = levy_derivative_checks(SubordinatedQWiener(alpha=alpha, n_modes=16, jump_threshold=0.05), n_probes, seed)
    return [laplace, _renamed(derivative, "levy-path-derivative")]


def _renamed(report: IdentityReport, name: str) -> IdentityReport:
    report.name = name
    return report


def all_passed(reports: list[IdentityReport]) -> bool:
    return all(r.passed for r in reports)
