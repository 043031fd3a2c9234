"""Difference operator, pathwise Skorohod integral and identity checks.

Functionals are plain callables ``F(η)`` returning a scalar or a vector.
Random fields are :class:`RandomField` objects of some order ``k``: they
map a configuration and ``k`` points to a vector, and know how to integrate
any subset of their point arguments against the window's intensity.
"""

from __future__ import annotations

import itertools
from typing import Any, Callable, Sequence

import numpy as np

from .measure import (
    Box,
    IntensityWindow,
    Point,
    PointConfiguration,
    add_atom,
    as_point,
    factorial_pairs,
    remove_atom,
    sample_poisson_batch,
)
from .reports import (
    EXACT_RTOL,
    ConsistencyError,
    IdentityReport,
    exact_report,
    monte_carlo_report,
    relative_error,
)
from .rng import as_generator

Functional = Callable[[PointConfiguration], Any]
Pattern = tuple["Point | None", ...]
MAX_ORDER = 3


def _value(v: Any) -> np.ndarray:
    return np.asarray(v, dtype=float)


def _magnitude(v: Any) -> float:
    a = np.asarray(v, dtype=float)
    return float(np.max(np.abs(a))) if a.size else 0.0


def pair(a: Any, b: Any) -> np.ndarray:
    """Inner product of two vectors, or a plain product if one is scalar."""
    a = _value(a)
    b = _value(b)
    if a.ndim == 0 or b.ndim == 0:
        return a * b
    return np.asarray(np.dot(a, b))


class RandomField:
    """A field ``Φ(η, x_1, ..., x_k)`` of order ``k``.

    :meth:`integrate` takes a pattern of length ``k`` in which ``None``
    marks a coordinate to integrate against the window intensity.  The
    default implementation falls back on the window's quadrature rule;
    subclasses override it with closed forms.
    """

    order: int = 1

    def __call__(self, eta: PointConfiguration, *xs: Point) -> np.ndarray:
        raise NotImplementedError

    def integrate(self, eta: PointConfiguration, pattern: Pattern | None = None) -> np.ndarray:
        if pattern is None:
            pattern = (None,) * self.order
        if len(pattern) != self.order:
            raise ValueError(f"pattern length {len(pattern)} does not match field order {self.order}")
        if None not in pattern:
            return _value(self(eta, *pattern))
        i = pattern.index(None)

        def inner(y: Point) -> np.ndarray:
            return self.integrate(eta, pattern[:i] + (y,) + pattern[i + 1 :])

        return _value(eta.window.integrate(inner))


class FunctionField(RandomField):
    """Wrap a plain function, optionally with a closed-form integral."""

    def __init__(
        self,
        fn: Callable[..., Any],
        order: int = 1,
        integral: Callable[[PointConfiguration, Pattern], Any] | None = None,
    ):
        self.fn = fn
        self.order = order
        self.integral = integral

    def __call__(self, eta: PointConfiguration, *xs: Point) -> np.ndarray:
        return _value(self.fn(eta, *xs))

    def integrate(self, eta: PointConfiguration, pattern: Pattern | None = None) -> np.ndarray:
        if pattern is None:
            pattern = (None,) * self.order
        if self.integral is not None and None in pattern:
            return _value(self.integral(eta, pattern))
        return super().integrate(eta, pattern)


class DifferenceField(RandomField):
    """``D_x Φ``: the field evaluated with and without an extra atom at ``x``."""

    def __init__(self, field: RandomField, x: Point):
        self.field = field
        self.x = as_point(x)
        self.order = field.order

    def __call__(self, eta: PointConfiguration, *xs: Point) -> np.ndarray:
        return self.field(add_atom(eta, self.x), *xs) - self.field(eta, *xs)

    def integrate(self, eta: PointConfiguration, pattern: Pattern | None = None) -> np.ndarray:
        return self.field.integrate(add_atom(eta, self.x), pattern) - self.field.integrate(eta, pattern)


class _LastCoordinateSkorohod(RandomField):
    """Field of order ``k-1`` obtained by integrating the last slot with δ."""

    def __init__(self, field: RandomField):
        if field.order < 1:
            raise ValueError("cannot integrate a field of order 0")
        self.field = field
        self.order = field.order - 1

    def __call__(self, eta: PointConfiguration, *xs: Point) -> np.ndarray:
        total = -self.field.integrate(eta, tuple(xs) + (None,))
        for a, m in eta.atoms:
            total = total + m * self.field(remove_atom(eta, a), *xs, a)
        return total

    def integrate(self, eta: PointConfiguration, pattern: Pattern | None = None) -> np.ndarray:
        if pattern is None:
            pattern = (None,) * self.order
        total = -self.field.integrate(eta, tuple(pattern) + (None,))
        for a, m in eta.atoms:
            total = total + m * self.field.integrate(remove_atom(eta, a), tuple(pattern) + (a,))
        return total


def difference(F: Functional, eta: PointConfiguration, x: Any) -> np.ndarray:
    """``D_x F(η) = F(η + δ_x) - F(η)``."""
    return _value(F(add_atom(eta, x))) - _value(F(eta))


def _difference_recursive(F: Functional, eta: PointConfiguration, xs: Sequence[Point]) -> np.ndarray:
    if not xs:
        return _value(F(eta))
    head, rest = xs[0], xs[1:]
    return _difference_recursive(F, add_atom(eta, head), rest) - _difference_recursive(F, eta, rest)


def difference_subset_sum(F: Functional, eta: PointConfiguration, xs: Sequence[Point]) -> tuple[np.ndarray, float]:
    """Explicit ``Σ_{I⊂[k]} (-1)^{k-|I|} F(η + δ_{x_I})`` and the largest term size."""
    k = len(xs)
    total = None
    scale = 0.0
    for size in range(k + 1):
        for subset in itertools.combinations(range(k), size):
            config = eta
            for i in subset:
                config = add_atom(config, xs[i])
            term = _value(F(config))
            scale = max(scale, _magnitude(term))
            signed = term if (k - size) % 2 == 0 else -term
            total = signed if total is None else total + signed
    return total, scale


def difference_k(
    F: Functional, eta: PointConfiguration, xs: Sequence[Any], rtol: float = EXACT_RTOL
) -> np.ndarray:
    """Iterated difference ``D^k_{x_1..x_k} F(η)`` for ``k ≤ 3``.

    The recursive value is returned after checking it against the explicit
    subset-sum formula; a mismatch raises :class:`ConsistencyError`.
    """
    points = [as_point(x) for x in xs]
    if not 1 <= len(points) <= MAX_ORDER:
        raise ValueError(f"order must be between 1 and {MAX_ORDER}")
    recursive = _difference_recursive(F, eta, points)
    explicit, scale = difference_subset_sum(F, eta, points)
    if relative_error(recursive, explicit, max(scale, _magnitude(recursive))) > rtol:
        raise ConsistencyError("recursive and subset-sum higher differences disagree")
    return recursive


def _skorohod_with_scale(field: RandomField, eta: PointConfiguration) -> tuple[np.ndarray, float]:
    compensator = field.integrate(eta, (None,))
    total = -compensator
    scale = _magnitude(compensator)
    for a, m in eta.atoms:
        term = m * field(remove_atom(eta, a), a)
        scale = max(scale, _magnitude(term))
        total = total + term
    return total, scale


def skorohod(field: RandomField, eta: PointConfiguration) -> np.ndarray:
    """Pathwise ``δ(Φ) = Σ_{a∈η} Φ(η∖δ_a, a) - ∫ Φ(η, x) μ(dx)``."""
    if field.order != 1:
        raise ValueError("skorohod expects a field of order 1; use skorohod_k")
    return _skorohod_with_scale(field, eta)[0]


def skorohod_two_nonrecursive(field: RandomField, eta: PointConfiguration) -> tuple[np.ndarray, float]:
    """Four-term formula for ``δ²``, summing over factorial pairs."""
    if field.order != 2:
        raise ValueError("the four-term formula applies to fields of order 2")
    both = field.integrate(eta, (None, None))
    total = both
    scale = _magnitude(both)
    for a, b in factorial_pairs(eta):
        term = field(remove_atom(remove_atom(eta, a), b), a, b)
        scale = max(scale, _magnitude(term))
        total = total + term
    for a in eta.points():
        first = field.integrate(remove_atom(eta, a), (a, None))
        second = field.integrate(remove_atom(eta, a), (None, a))
        scale = max(scale, _magnitude(first), _magnitude(second))
        total = total - first - second
    return total, scale


def skorohod_k(field: RandomField, eta: PointConfiguration, rtol: float = EXACT_RTOL) -> np.ndarray:
    """Multiple pathwise integral ``δ^k(Φ)`` for ``k ≤ 3`` by iteration.

    For ``k = 2`` the non-recursive four-term formula is evaluated as well
    and a mismatch raises :class:`ConsistencyError`.
    """
    k = field.order
    if not 1 <= k <= MAX_ORDER:
        raise ValueError(f"order must be between 1 and {MAX_ORDER}")
    current = field
    while current.order > 1:
        current = _LastCoordinateSkorohod(current)
    value, scale = _skorohod_with_scale(current, eta)
    if k == 2:
        explicit, explicit_scale = skorohod_two_nonrecursive(field, eta)
        if relative_error(value, explicit, max(scale, explicit_scale)) > rtol:
            raise ConsistencyError("recursive and four-term double integrals disagree")
    return value


def _report_name(base: str, name: str | None) -> str:
    return name or base


def chain_rule_check(
    F: Functional, h: Callable[[Any], Any], eta: PointConfiguration, x: Any, name: str | None = None
) -> IdentityReport:
    """``D_x h(F) = h(F + D_x F) - h(F)`` on one configuration."""
    composite = lambda config: h(_value(F(config)))  # noqa: E731
    lhs = difference(composite, eta, x)
    base = _value(F(eta))
    rhs = _value(h(base + difference(F, eta, x))) - _value(h(base))
    scale = max(_magnitude(h(base)), _magnitude(composite(add_atom(eta, x))), _magnitude(lhs))
    return exact_report(_report_name("chain-rule", name), lhs, rhs, scale)


def product_rule_check(
    F: Functional, G: Functional, eta: PointConfiguration, x: Any, name: str | None = None
) -> IdentityReport:
    """``D_x⟨F,G⟩ = ⟨D_xF, G⟩ + ⟨F, D_xG⟩ + ⟨D_xF, D_xG⟩`` on one configuration."""
    inner = lambda config: pair(F(config), G(config))  # noqa: E731
    lhs = difference(inner, eta, x)
    f, g = _value(F(eta)), _value(G(eta))
    df, dg = difference(F, eta, x), difference(G, eta, x)
    terms = [pair(df, g), pair(f, dg), pair(df, dg)]
    rhs = terms[0] + terms[1] + terms[2]
    scale = max([_magnitude(t) for t in terms] + [_magnitude(inner(eta)), _magnitude(lhs)])
    return exact_report(_report_name("product-rule", name), lhs, rhs, scale)


def commutation_check(
    field: RandomField, eta: PointConfiguration, x: Any, name: str | None = None
) -> IdentityReport:
    """``D_x δ(Φ) = δ(D_x Φ) + Φ(η, x)`` on one configuration."""
    x = as_point(x)
    with_x, scale_with = _skorohod_with_scale(field, add_atom(eta, x))
    without, scale_without = _skorohod_with_scale(field, eta)
    lhs = with_x - without
    inner, scale_inner = _skorohod_with_scale(DifferenceField(field, x), eta)
    local = field(eta, x)
    rhs = inner + local
    scale = max(scale_with, scale_without, scale_inner, _magnitude(local))
    return exact_report(_report_name("commutation", name), lhs, rhs, scale)


def higher_difference_check(
    F: Functional, eta: PointConfiguration, xs: Sequence[Any], name: str | None = None
) -> IdentityReport:
    """Recursive ``D^k`` against the explicit subset-sum formula on one configuration."""
    points = [as_point(x) for x in xs]
    recursive = _difference_recursive(F, eta, points)
    explicit, scale = difference_subset_sum(F, eta, points)
    return exact_report(
        _report_name("higher-difference", name), recursive, explicit, max(scale, _magnitude(recursive))
    )


def double_skorohod_check(field: RandomField, eta: PointConfiguration, name: str | None = None) -> IdentityReport:
    """Iterated ``δ(δ(Φ))`` against the four-term formula on one configuration."""
    recursive, scale = _skorohod_with_scale(_LastCoordinateSkorohod(field), eta)
    explicit, explicit_scale = skorohod_two_nonrecursive(field, eta)
    return exact_report(_report_name("double-skorohod", name), recursive, explicit, max(scale, explicit_scale))


def predictable_shortcut_check(
    box: Box,
    vector: Any,
    eta: PointConfiguration,
    outside: Functional | None = None,
    name: str | None = None,
) -> IdentityReport:
    """``δ(1_B F h) = (η(B) - μ(B)) F h`` when ``F`` ignores atoms inside ``B``.

    ``outside`` defaults to the constant 1.  It is evaluated on the
    configuration with atoms in ``B`` removed, which enforces the contract.
    """
    h = _value(vector)
    window = eta.window
    restricted = (lambda config: outside(config.restrict(lambda p: not box.contains(p)))) if outside else None
    factor = (lambda config: _value(restricted(config))) if restricted else (lambda config: np.asarray(1.0))
    fld = FunctionField(
        lambda config, x: factor(config) * (h if box.contains(x) else np.zeros_like(h)),
        integral=lambda config, pattern: factor(config) * window.measure(box) * h,
    )
    lhs, scale = _skorohod_with_scale(fld, eta)
    rhs = (eta.count_in(box) - window.measure(box)) * factor(eta) * h
    return exact_report(_report_name("predictable-shortcut", name), lhs, rhs, max(scale, _magnitude(rhs)))


def duality_check(
    F: Functional,
    field: RandomField,
    window: IntensityWindow,
    n_samples: int,
    seed: int | np.random.Generator,
    sigma_level: float = 3.0,
    name: str | None = None,
) -> IdentityReport:
    """Monte Carlo check of ``E⟨F, δ(Φ)⟩ = E ∫ ⟨D_x F, Φ(x)⟩ μ(dx)``.

    The right-hand μ-integral uses one extra point per sample.
    """
    rng = as_generator(seed, "duality")
    configs = sample_poisson_batch(window, rng, n_samples)
    mass = window.total_mass
    extra = window.sample_points(rng, n_samples) if mass > 0 else [None] * n_samples
    lhs, rhs = [], []
    for eta, x in zip(configs, extra):
        lhs.append(pair(F(eta), skorohod(field, eta)))
        rhs.append(mass * pair(difference(F, eta, x), field(eta, x)) if mass > 0 else 0.0 * lhs[-1])
    return monte_carlo_report(_report_name("duality", name), np.array(lhs), np.array(rhs), sigma_level)


def isometry_check(
    phi: RandomField,
    psi: RandomField,
    window: IntensityWindow,
    n_samples: int,
    seed: int | np.random.Generator,
    sigma_level: float = 3.0,
    name: str | None = None,
) -> IdentityReport:
    """Monte Carlo check of the isometry for pathwise Skorohod integrals.

    ``E⟨δΦ, δΨ⟩ = E∫⟨Φ(x), Ψ(x)⟩μ(dx) + E∫∫⟨D_yΦ(x), D_xΨ(y)⟩μ(dx)μ(dy)``,
    with the μ-integrals replaced by two independent extra points.
    """
    rng = as_generator(seed, "isometry")
    configs = sample_poisson_batch(window, rng, n_samples)
    mass = window.total_mass
    xs = window.sample_points(rng, n_samples) if mass > 0 else [None] * n_samples
    ys = window.sample_points(rng, n_samples) if mass > 0 else [None] * n_samples
    lhs, rhs = [], []
    for eta, x, y in zip(configs, xs, ys):
        lhs.append(pair(skorohod(phi, eta), skorohod(psi, eta)))
        if mass == 0:
            rhs.append(0.0 * lhs[-1])
            continue
        diagonal = mass * pair(phi(eta, x), psi(eta, x))
        d_phi = phi(add_atom(eta, y), x) - phi(eta, x)
        d_psi = psi(add_atom(eta, x), y) - psi(eta, y)
        rhs.append(diagonal + mass * mass * pair(d_phi, d_psi))
    return monte_carlo_report(_report_name("isometry", name), np.array(lhs), np.array(rhs), sigma_level)


def mean_zero_check(
    field: RandomField,
    window: IntensityWindow,
    n_samples: int,
    seed: int | np.random.Generator,
    sigma_level: float = 3.0,
    name: str | None = None,
) -> IdentityReport:
    """Monte Carlo check that ``E δ(Φ) = 0``."""
    rng = as_generator(seed, "mean-zero")
    configs = sample_poisson_batch(window, rng, n_samples)
    values = np.array([skorohod(field, eta) for eta in configs])
    return monte_carlo_report(_report_name("skorohod-mean-zero", name), values, np.zeros_like(values), sigma_level)


def _future_probe(window: IntensityWindow, rng: np.random.Generator, t: float, time_axis: int) -> Point:
    for _ in range(10_000):
        (p,) = window.sample_points(rng, 1)
        if p[time_axis] > t:
            return p
    raise ValueError(f"window {window.window_id!r} has no mass after time {t}")


def adaptedness_check(
    F: Functional,
    t: float,
    window: IntensityWindow,
    n_paths: int,
    seed: int | np.random.Generator,
    probes_per_path: int = 1,
    time_axis: int = 0,
    name: str | None = None,
) -> IdentityReport:
    """Check ``D_{s,x} F = 0`` for probes with ``s > t`` when ``F`` is adapted.

    ``F`` is evaluated on the configuration restricted to atoms with time
    coordinate at most ``t``, which is how adaptedness is enforced.
    """
    rng = as_generator(seed, "adapted")
    adapted = lambda config: F(config.restrict(lambda p: p[time_axis] <= t))  # noqa: E731
    configs = sample_poisson_batch(window, rng, n_paths)
    worst = 0.0
    failing = 0
    largest = 0.0
    for eta in configs:
        base = _value(adapted(eta))
        largest = max(largest, _magnitude(base))
        for _ in range(probes_per_path):
            probe = _future_probe(window, rng, t, time_axis)
            d = _magnitude(difference(adapted, eta, probe))
            worst = max(worst, d)
            failing += d != 0.0
    report = exact_report(
        _report_name("adaptedness", name),
        worst,
        0.0,
        scale=max(largest, 1.0),
        n_samples=n_paths * probes_per_path,
        details={"nonzero_differences": failing, "t": t},
    )
    if failing:
        report.verdict = "fail"
    return report


def sobolev_moments(
    F: Functional,
    window: IntensityWindow,
    n_samples: int,
    seed: int | np.random.Generator,
    p: float = 2.0,
) -> dict[str, float]:
    """Diagnostic estimates of ``E|F|^p`` and ``E∫|D_xF|^p μ(dx)``."""
    rng = as_generator(seed, "sobolev")
    configs = sample_poisson_batch(window, rng, n_samples)
    mass = window.total_mass
    extra = window.sample_points(rng, n_samples) if mass > 0 else [None] * n_samples
    values = np.array([np.linalg.norm(np.atleast_1d(_value(F(eta)))) ** p for eta in configs])
    grads = np.array(
        [
            mass * np.linalg.norm(np.atleast_1d(difference(F, eta, x))) ** p if mass > 0 else 0.0
            for eta, x in zip(configs, extra)
        ]
    )
    return {"moment_F": float(values.mean()), "moment_DF": float(grads.mean()), "p": p}
