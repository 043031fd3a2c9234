"""Finite point configurations standing in for a Poisson random measure.

A configuration lives in an :class:`IntensityWindow`, a region of finite
intensity mass.  Atoms are kept as a sorted tuple of ``(point, multiplicity)``
pairs, where a point is a tuple of floats.  Two atoms are the same atom only
when their coordinates are bit-identical.
"""

from __future__ import annotations

import bisect
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Iterator, Sequence

import numpy as np

from .reports import IdentityReport, monte_carlo_report
from .rng import as_generator

Point = tuple[float, ...]


class WindowError(ValueError):
    """A point was placed outside the region of its window."""


class QuadratureError(RuntimeError):
    """Quadrature could not reach the declared tolerance."""


def as_point(x: Any) -> Point:
    """Normalise a scalar, sequence or array to a tuple of floats."""
    if type(x) is tuple:
        for v in x:
            if type(v) is not float:
                break
        else:
            return x
    return tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)).ravel())


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lower, upper)``; infinite bounds are allowed."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ValueError("lower and upper bounds differ in dimension")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("box bounds are inverted")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def interval(cls, a: float, b: float) -> "Box":
        return cls((a,), (b,))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return math.prod(b - a for a, b in zip(self.lower, self.upper))

    def contains(self, x: Point) -> bool:
        for v, a, b in zip(x, self.lower, self.upper):
            if not a <= v < b:
                return False
        return True

    def contains_closed(self, x: Point) -> bool:
        for v, a, b in zip(x, self.lower, self.upper):
            if not a <= v <= b:
                return False
        return True

    def intersect(self, other: "Box") -> "Box | None":
        lo = tuple(max(a, c) for a, c in zip(self.lower, other.lower))
        hi = tuple(min(b, d) for b, d in zip(self.upper, other.upper))
        if any(a >= b for a, b in zip(lo, hi)):
            return None
        return Box(lo, hi)


class IntensityWindow:
    """A finite-mass restriction of an intensity measure.

    Subclasses provide ``total_mass``, ``contains``, ``sample_points`` and
    ``measure``.  :meth:`integrate` is a generic quadrature fallback.
    """

    window_id: str
    dim: int
    total_mass: float

    def contains(self, x: Point) -> bool:
        raise NotImplementedError

    def sample_points(self, rng: np.random.Generator, n: int) -> list[Point]:
        raise NotImplementedError

    def measure(self, box: Box) -> float:
        raise NotImplementedError

    def integrate(self, g: Callable[[Point], Any], tol: float = 1e-8) -> Any:
        raise QuadratureError(f"window {self.window_id!r} has no quadrature rule")


def _check_mass(total_mass: float) -> float:
    total_mass = float(total_mass)
    if not math.isfinite(total_mass) or total_mass < 0:
        raise ValueError(f"total mass must be finite and non-negative, got {total_mass}")
    return total_mass


class UniformWindow(IntensityWindow):
    """Intensity ``rate`` times Lebesgue measure on a bounded box."""

    def __init__(self, region: Box, rate: float = 1.0, window_id: str | None = None):
        if not all(math.isfinite(v) for v in region.lower + region.upper):
            raise ValueError("a uniform window needs a bounded region")
        if not math.isfinite(rate) or rate < 0:
            raise ValueError("rate must be finite and non-negative")
        self.region = region
        self.rate = float(rate)
        self.dim = region.dim
        self.total_mass = _check_mass(self.rate * region.volume)
        self.window_id = window_id or f"uniform{region.lower}-{region.upper}@{self.rate:g}"

    def __repr__(self) -> str:
        return f"UniformWindow({self.region!r}, rate={self.rate})"

    def contains(self, x: Point) -> bool:
        return len(x) == self.dim and self.region.contains_closed(x)

    def sample_points(self, rng: np.random.Generator, n: int) -> list[Point]:
        lo = np.asarray(self.region.lower)
        hi = np.asarray(self.region.upper)
        u = rng.random((n, self.dim))
        return [tuple(row) for row in (lo + (hi - lo) * u).tolist()]

    def measure(self, box: Box) -> float:
        part = self.region.intersect(box)
        return 0.0 if part is None else self.rate * part.volume

    def moment(self, box: Box, powers: Sequence[int]) -> float:
        """Closed form of ``∫_box Π x_i^{p_i} μ(dx)``."""
        part = self.region.intersect(box)
        if part is None:
            return 0.0
        value = self.rate
        for a, b, p in zip(part.lower, part.upper, powers):
            value *= (b ** (p + 1) - a ** (p + 1)) / (p + 1)
        return value

    def integrate(self, g: Callable[[Point], Any], tol: float = 1e-8, max_points: int = 2**16) -> Any:
        """Midpoint product rule, refined until two levels agree within ``tol``."""
        lo = np.asarray(self.region.lower)
        hi = np.asarray(self.region.upper)
        per_dim = 8
        previous = None
        while per_dim**self.dim <= max_points:
            axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(per_dim) + 0.5) / per_dim for i in range(self.dim)]
            total = None
            for node in itertools.product(*axes):
                value = np.asarray(g(tuple(float(v) for v in node)), dtype=float)
                total = value if total is None else total + value
            estimate = total * (self.total_mass / per_dim**self.dim)
            if previous is not None:
                err = float(np.max(np.abs(estimate - previous)))
                if err <= tol * max(1.0, float(np.max(np.abs(estimate)))):
                    return estimate if estimate.ndim else float(estimate)
            previous = estimate
            per_dim *= 2
        raise QuadratureError(f"midpoint rule did not reach tolerance {tol}")


class PointConfiguration:
    """Immutable finite multiset of atoms drawn under a window."""

    __slots__ = ("atoms", "window")

    def __init__(self, atoms: tuple[tuple[Point, int], ...], window: IntensityWindow):
        self.atoms = atoms
        self.window = window

    @classmethod
    def from_points(cls, points: Iterable[Any], window: IntensityWindow) -> "PointConfiguration":
        counts = Counter(as_point(p) for p in points)
        for p in counts:
            if not window.contains(p):
                raise WindowError(f"point {p} lies outside window {window.window_id!r}")
        return cls(tuple(sorted(counts.items())), window)

    @classmethod
    def empty(cls, window: IntensityWindow) -> "PointConfiguration":
        return cls((), window)

    @property
    def window_id(self) -> str:
        return self.window.window_id

    @property
    def count(self) -> int:
        return sum(m for _, m in self.atoms)

    def __len__(self) -> int:
        return self.count

    def distinct(self) -> list[Point]:
        return [p for p, _ in self.atoms]

    def points(self) -> Iterator[Point]:
        """Atoms repeated according to multiplicity."""
        for p, m in self.atoms:
            for _ in range(m):
                yield p

    def multiplicity(self, x: Any) -> int:
        x = as_point(x)
        i = bisect.bisect_left(self.atoms, (x,))
        if i < len(self.atoms) and self.atoms[i][0] == x:
            return self.atoms[i][1]
        return 0

    def count_in(self, box: Box) -> int:
        return sum(m for p, m in self.atoms if box.contains(p))

    def restrict(self, keep: Callable[[Point], bool]) -> "PointConfiguration":
        return PointConfiguration(tuple(a for a in self.atoms if keep(a[0])), self.window)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PointConfiguration):
            return NotImplemented
        return self.atoms == other.atoms and self.window_id == other.window_id

    def __hash__(self) -> int:
        return hash((self.atoms, self.window_id))

    def __repr__(self) -> str:
        return f"PointConfiguration({list(self.atoms)!r}, window={self.window_id!r})"


def add_atom(eta: PointConfiguration, x: Any) -> PointConfiguration:
    """Return ``eta + δ_x``; points outside the window are rejected."""
    x = as_point(x)
    if not eta.window.contains(x):
        raise WindowError(f"point {x} lies outside window {eta.window_id!r}")
    atoms = eta.atoms
    i = bisect.bisect_left(atoms, (x,))
    if i < len(atoms) and atoms[i][0] == x:
        new = atoms[:i] + ((x, atoms[i][1] + 1),) + atoms[i + 1 :]
    else:
        new = atoms[:i] + ((x, 1),) + atoms[i:]
    return PointConfiguration(new, eta.window)


def remove_atom(eta: PointConfiguration, x: Any) -> PointConfiguration:
    """Return ``eta ∖ δ_x``: one copy of ``x`` removed, or ``eta`` if absent."""
    x = as_point(x)
    atoms = eta.atoms
    i = bisect.bisect_left(atoms, (x,))
    if i == len(atoms) or atoms[i][0] != x:
        return eta
    m = atoms[i][1]
    middle = ((x, m - 1),) if m > 1 else ()
    return PointConfiguration(atoms[:i] + middle + atoms[i + 1 :], eta.window)


def remove_atoms(eta: PointConfiguration, xs: Iterable[Any]) -> PointConfiguration:
    """Remove one copy of each listed point in turn; absent points are ignored."""
    counts = dict(eta.atoms)
    changed = False
    for x in xs:
        x = as_point(x)
        if counts.get(x, 0) > 0:
            counts[x] -= 1
            changed = True
    if not changed:
        return eta
    return PointConfiguration(tuple((p, counts[p]) for p, _ in eta.atoms if counts[p] > 0), eta.window)


def factorial_pairs(eta: PointConfiguration) -> list[tuple[Point, Point]]:
    """Ordered pairs of atoms with distinct indices, repeated by multiplicity.

    An atom of multiplicity ``m`` yields ``m(m-1)`` pairs with itself, and two
    distinct atoms with multiplicities ``m, n`` yield ``m n`` pairs per order.
    """
    pairs: list[tuple[Point, Point]] = []
    for (a, ma), (b, mb) in itertools.product(eta.atoms, repeat=2):
        reps = ma * (ma - 1) if a == b else ma * mb
        pairs.extend([(a, b)] * reps)
    return pairs


def sample_poisson(window: IntensityWindow, seed: int | np.random.Generator) -> PointConfiguration:
    """Draw one Poisson configuration with intensity ``window``."""
    rng = as_generator(seed, "poisson")
    n = int(rng.poisson(window.total_mass)) if window.total_mass > 0 else 0
    return PointConfiguration.from_points(window.sample_points(rng, n) if n else [], window)


def sample_poisson_batch(
    window: IntensityWindow, rng: np.random.Generator, n_samples: int
) -> list[PointConfiguration]:
    """Draw ``n_samples`` independent configurations with vectorised sampling."""
    if window.total_mass == 0:
        return [PointConfiguration.empty(window)] * n_samples
    counts = rng.poisson(window.total_mass, size=n_samples)
    points = window.sample_points(rng, int(counts.sum()))
    out = []
    start = 0
    # Sampled points are float tuples inside the window, so validation is skipped.
    for c in counts.tolist():
        chunk = points[start : start + c]
        atoms = tuple(sorted(Counter(chunk).items())) if c > 1 else tuple((p, 1) for p in chunk)
        out.append(PointConfiguration(atoms, window))
        start += c
    return out


def mecke_check(
    f: Callable[[PointConfiguration, Point], float],
    window: IntensityWindow,
    n_samples: int,
    seed: int | np.random.Generator,
    estimator: str = "extra_point",
    compensator: Callable[[PointConfiguration], float] | None = None,
    sigma_level: float = 3.0,
    name: str = "mecke",
) -> IdentityReport:
    """Compare ``E Σ_{x∈N} f(N, x)`` with ``E ∫ f(N+δ_x, x) μ(dx)``.

    With ``estimator="extra_point"`` the inner μ-integral is replaced by the
    unbiased one-point estimate ``μ(window)·f(N+δ_X, X)`` with ``X`` drawn
    from the normalised intensity.  With ``estimator="compensator"`` the
    caller supplies ``compensator(η) = ∫ f(η+δ_x, x) μ(dx)`` in closed form.
    """
    rng = as_generator(seed, "mecke")
    configs = sample_poisson_batch(window, rng, n_samples)
    lhs = np.array([sum(f(eta, a) for a in eta.points()) for eta in configs], dtype=float)
    if estimator == "extra_point":
        mass = window.total_mass
        extra = window.sample_points(rng, n_samples) if mass > 0 else []
        rhs = np.array(
            [mass * f(add_atom(eta, x), x) for eta, x in zip(configs, extra)] if mass > 0 else np.zeros(n_samples),
            dtype=float,
        )
    elif estimator == "compensator":
        if compensator is None:
            raise ValueError("the compensator estimator needs a closed-form compensator")
        rhs = np.array([compensator(eta) for eta in configs], dtype=float)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    return monte_carlo_report(name, lhs, rhs, sigma_level, details={"estimator": estimator})


def mecke_check_bivariate(
    f: Callable[[PointConfiguration, Point, Point], float],
    window: IntensityWindow,
    n_samples: int,
    seed: int | np.random.Generator,
    sigma_level: float = 3.0,
    name: str = "mecke-bivariate",
) -> IdentityReport:
    """Compare ``E Σ_{(a,b)∈N^(2)} f(N∖δ_a∖δ_b, a, b)`` with ``E ∫∫ f(N, x, y) μ(dx)μ(dy)``.

    The double μ-integral uses two independent extra points.
    """
    rng = as_generator(seed, "mecke2")
    configs = sample_poisson_batch(window, rng, n_samples)
    lhs = np.array(
        [
            sum(f(remove_atoms(eta, (a, b)), a, b) for a, b in factorial_pairs(eta))
            for eta in configs
        ],
        dtype=float,
    )
    mass = window.total_mass
    if mass > 0:
        xs = window.sample_points(rng, n_samples)
        ys = window.sample_points(rng, n_samples)
        rhs = np.array([mass * mass * f(eta, x, y) for eta, x, y in zip(configs, xs, ys)], dtype=float)
    else:
        rhs = np.zeros(n_samples)
    return monte_carlo_report(name, lhs, rhs, sigma_level, details={"estimator": "extra_point"})
