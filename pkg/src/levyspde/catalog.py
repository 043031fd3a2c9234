"""Test functionals and random fields with closed-form intensity integrals.

Every field here is a product ``g(S(η)) · Π_i w_i(x_i) · h`` where each
weight ``w_i`` is an indicator of a box times a monomial, ``S`` is a sum of
a weight over the atoms, and ``h`` is a fixed vector.  Integrals of such
products against a :class:`UniformWindow` are elementary, so compensators
never need quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .malliavin import Pattern, RandomField
from .measure import Box, IntensityWindow, Point, PointConfiguration, UniformWindow


@dataclass(frozen=True)
class Weight:
    """``w(x) = 1_box(x) · Π x_i^{p_i}``."""

    box: Box
    powers: tuple[int, ...] | None = None

    def __call__(self, x: Point) -> float:
        if not self.box.contains(x):
            return 0.0
        if self.powers is None:
            return 1.0
        return math.prod(v**p for v, p in zip(x, self.powers))

    def mass(self, window: IntensityWindow) -> float:
        """``∫ w dμ`` over the window."""
        if self.powers is None or not any(self.powers):
            return window.measure(self.box)
        if isinstance(window, UniformWindow):
            return window.moment(self.box, self.powers)
        return float(window.integrate(self))

    def sum_over(self, eta: PointConfiguration) -> float:
        return sum(m * self(p) for p, m in eta.atoms)


def identity(n: float) -> float:
    return n


def square(n: float) -> float:
    return n * n


def bounded_ratio(n: float) -> float:
    return 1.0 / (1.0 + n)


def bounded_wave(n: float) -> float:
    return math.sin(n) + 0.5 * math.cos(0.7 * n)


@dataclass(frozen=True)
class ProductField(RandomField):
    """``Φ(η, x_1..x_k) = g(S(η)) · Π w_i(x_i) · h``.

    With ``statistic=None`` the field is deterministic.
    """

    weights: tuple[Weight, ...]
    vector: tuple[float, ...] = (1.0,)
    statistic: Weight | None = None
    g: Callable[[float], float] = identity

    @property
    def order(self) -> int:  # type: ignore[override]
        return len(self.weights)

    def _level(self, eta: PointConfiguration) -> float:
        return 1.0 if self.statistic is None else self.g(self.statistic.sum_over(eta))

    def __call__(self, eta: PointConfiguration, *xs: Point) -> np.ndarray:
        factor = self._level(eta)
        for w, x in zip(self.weights, xs):
            factor *= w(x)
        return factor * np.asarray(self.vector, dtype=float)

    def integrate(self, eta: PointConfiguration, pattern: Pattern | None = None) -> np.ndarray:
        if pattern is None:
            pattern = (None,) * self.order
        factor = self._level(eta)
        for w, x in zip(self.weights, pattern):
            factor *= w.mass(eta.window) if x is None else w(x)
        return factor * np.asarray(self.vector, dtype=float)


@dataclass(frozen=True)
class StatisticFunctional:
    """``F(η) = g(S(η)) · h``, or a scalar when ``vector`` is ``None``."""

    statistic: Weight
    g: Callable[[float], float] = identity
    vector: tuple[float, ...] | None = None

    def __call__(self, eta: PointConfiguration) -> Any:
        value = self.g(self.statistic.sum_over(eta))
        if self.vector is None:
            return value
        return value * np.asarray(self.vector, dtype=float)


def count(box: Box, g: Callable[[float], float] = identity, vector: tuple[float, ...] | None = None) -> StatisticFunctional:
    """``F(η) = g(η(box))``, optionally times a vector."""
    return StatisticFunctional(Weight(box), g, vector)


def constant(value: float) -> Callable[[PointConfiguration], float]:
    return lambda eta: value


@dataclass
class Catalog:
    """Named functionals and fields on a common window."""

    window: UniformWindow
    functionals: dict[str, Callable[[PointConfiguration], Any]] = field(default_factory=dict)
    fields: dict[str, RandomField] = field(default_factory=dict)
    fields2: dict[str, RandomField] = field(default_factory=dict)
    fields3: dict[str, RandomField] = field(default_factory=dict)
    bounded: dict[str, Callable[[PointConfiguration], Any]] = field(default_factory=dict)


def default_catalog(rate: float = 3.0) -> Catalog:
    """The catalog used by the CLI and the acceptance suite.

    The window is ``[0,1]²`` with intensity ``rate`` times Lebesgue measure;
    the first coordinate plays the role of time.
    """
    window = UniformWindow(Box((0.0, 0.0), (1.0, 1.0)), rate, window_id="unit-square")
    left = Box((0.0, 0.0), (0.5, 1.0))
    right = Box((0.5, 0.0), (1.0, 1.0))
    low = Box((0.0, 0.0), (1.0, 0.4))
    whole = Box((0.0, 0.0), (1.0, 1.0))
    h = (1.0, -2.0, 0.5)
    cat = Catalog(window)
    cat.functionals = {
        "count-left": count(left),
        "count-left-squared": count(left, square),
        "count-low-vector": count(low, identity, (1.0, 0.5, -1.0)),
        "linear-statistic": StatisticFunctional(Weight(whole, (1, 2)), bounded_wave, (0.3, 1.0, 2.0)),
        "constant": constant(2.5),
    }
    cat.bounded = {
        "constant": constant(2.5),
        "ratio-left": count(left, bounded_ratio),
        "wave-low": count(low, bounded_wave),
        "wave-statistic": StatisticFunctional(Weight(whole, (1, 0)), bounded_wave),
    }
    cat.fields = {
        "indicator-left": ProductField((Weight(left),), h),
        "count-right-times-left": ProductField((Weight(left),), h, Weight(right)),
        "count-low-times-left": ProductField((Weight(left),), h, Weight(low)),
        "ratio-whole-polynomial": ProductField((Weight(whole, (1, 1)),), h, Weight(low), bounded_ratio),
        "wave-statistic-low": ProductField((Weight(low, (0, 1)),), h, Weight(whole, (2, 0)), bounded_wave),
    }
    cat.fields2 = {
        "indicator-left-right": ProductField((Weight(left), Weight(right)), h),
        "count-low-left-whole": ProductField((Weight(left), Weight(whole, (1, 0))), h, Weight(low), square),
        "wave-low-low": ProductField((Weight(low), Weight(low, (0, 1))), h, Weight(whole, (0, 1)), bounded_wave),
    }
    cat.fields3 = {
        "indicator-three": ProductField((Weight(left), Weight(right), Weight(low)), h),
        "count-three": ProductField((Weight(left), Weight(low), Weight(whole, (1, 1))), h, Weight(low), bounded_ratio),
    }
    return cat
