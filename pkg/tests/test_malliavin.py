from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyspde.catalog import ProductField, Weight, bounded_ratio, count, square
from levyspde.malliavin import (
    FunctionField,
    adaptedness_check,
    chain_rule_check,
    commutation_check,
    difference,
    difference_k,
    difference_subset_sum,
    double_skorohod_check,
    duality_check,
    higher_difference_check,
    isometry_check,
    mean_zero_check,
    predictable_shortcut_check,
    product_rule_check,
    skorohod,
    skorohod_k,
    skorohod_two_nonrecursive,
    sobolev_moments,
)
from levyspde.measure import Box, PointConfiguration, UniformWindow, sample_poisson
from levyspde.reports import ConsistencyError

LEFT = Box((0.0, 0.0), (0.5, 1.0))
RIGHT = Box((0.5, 0.0), (1.0, 1.0))
H = np.array([1.0, -2.0, 0.5])

coords = st.floats(min_value=0.0, max_value=0.999, allow_nan=False)
points = st.tuples(coords, coords)


def make(window, pts):
    return PointConfiguration.from_points(pts, window)


@pytest.fixture
def eta(unit_square):
    return make(unit_square, [(0.1, 0.2), (0.3, 0.9), (0.7, 0.4), (0.3, 0.9)])


class TestDifference:
    def test_counting_functional(self, eta):
        F = count(LEFT)
        assert difference(F, eta, (0.2, 0.5)) == 1.0
        assert difference(F, eta, (0.8, 0.5)) == 0.0

    def test_constant_functional(self, eta):
        assert difference(lambda e: 4.0, eta, (0.2, 0.5)) == 0.0

    def test_function_of_count(self, eta):
        F = count(LEFT, square)
        n = eta.count_in(LEFT)
        assert difference(F, eta, (0.1, 0.1)) == (n + 1) ** 2 - n**2

    def test_second_difference_of_count_vanishes(self, eta):
        assert difference_k(count(LEFT), eta, [(0.1, 0.1), (0.2, 0.2)]) == 0.0

    def test_second_difference_of_square_is_two(self, eta):
        assert difference_k(count(LEFT, square), eta, [(0.1, 0.1), (0.2, 0.2)]) == 2.0

    def test_order_one_equals_difference(self, eta):
        F = count(LEFT, bounded_ratio)
        assert difference_k(F, eta, [(0.2, 0.3)]) == difference(F, eta, (0.2, 0.3))

    def test_order_above_three_rejected(self, eta):
        with pytest.raises(ValueError):
            difference_k(count(LEFT), eta, [(0.1, 0.1)] * 4)

    def test_inconsistent_functional_detected(self, eta):
        # A functional that remembers calls breaks the subset-sum identity.
        calls = []

        def stateful(config):
            calls.append(1)
            return 2.0 ** len(calls)

        with pytest.raises(ConsistencyError):
            difference_k(stateful, eta, [(0.1, 0.1), (0.2, 0.2)])

    @settings(max_examples=40, deadline=None)
    @given(st.lists(points, max_size=5), st.lists(points, min_size=1, max_size=3))
    def test_recursive_matches_subset_sum(self, pts, probes):
        window = UniformWindow(Box((0.0, 0.0), (1.0, 1.0)), 3.0, "unit-square")
        config = make(window, pts)
        F = count(LEFT, lambda n: np.sin(n) * n)
        report = higher_difference_check(F, config, probes)
        assert report.passed
        explicit, _ = difference_subset_sum(F, config, probes)
        assert np.allclose(difference_k(F, config, probes), explicit, rtol=0, atol=1e-12)


class TestSkorohod:
    def test_indicator_field(self, eta, unit_square):
        field = ProductField((Weight(LEFT),), tuple(H))
        expected = (eta.count_in(LEFT) - unit_square.measure(LEFT)) * H
        assert np.allclose(skorohod(field, eta), expected, rtol=1e-14)

    def test_zero_field(self, eta):
        field = ProductField((Weight(LEFT),), (0.0, 0.0))
        assert np.all(skorohod(field, eta) == 0.0)

    def test_order_one_equals_skorohod(self, eta):
        field = ProductField((Weight(LEFT),), tuple(H), Weight(RIGHT), bounded_ratio)
        assert np.array_equal(skorohod_k(field, eta), skorohod(field, eta))

    def test_skorohod_rejects_higher_order(self, eta):
        with pytest.raises(ValueError):
            skorohod(ProductField((Weight(LEFT), Weight(RIGHT)), tuple(H)), eta)

    def test_double_integral_disjoint_indicators(self, eta, unit_square):
        field = ProductField((Weight(LEFT), Weight(RIGHT)), tuple(H))
        expected = (eta.count_in(LEFT) - 1.5) * (eta.count_in(RIGHT) - 1.5) * H
        assert np.allclose(skorohod_k(field, eta), expected, rtol=1e-13)

    def test_double_integral_zero_field(self, eta):
        field = ProductField((Weight(LEFT), Weight(RIGHT)), (0.0,))
        assert skorohod_k(field, eta) == pytest.approx(0.0)

    def test_four_term_matches_recursion(self, eta):
        field = ProductField((Weight(LEFT), Weight(LEFT, (0, 1))), tuple(H), Weight(RIGHT), square)
        explicit, _ = skorohod_two_nonrecursive(field, eta)
        assert np.allclose(skorohod_k(field, eta), explicit, rtol=1e-12)
        assert double_skorohod_check(field, eta).passed

    def test_triple_integral_of_disjoint_indicators(self, unit_square):
        a = Box((0.0, 0.0), (0.3, 1.0))
        b = Box((0.3, 0.0), (0.6, 1.0))
        c = Box((0.6, 0.0), (1.0, 1.0))
        field = ProductField((Weight(a), Weight(b), Weight(c)), (2.0,))
        config = make(unit_square, [(0.1, 0.1), (0.2, 0.5), (0.4, 0.4), (0.9, 0.9), (0.7, 0.2), (0.8, 0.1)])
        expected = (2 - 0.9) * (1 - 0.9) * (3 - 1.2) * 2.0
        assert skorohod_k(field, config) == pytest.approx(expected, rel=1e-13)

    def test_quadrature_fallback_matches_closed_form(self, eta, unit_square):
        closed = ProductField((Weight(LEFT),), (1.0,))
        generic = FunctionField(lambda config, x: np.array([float(LEFT.contains(x))]))
        assert skorohod(generic, eta) == pytest.approx(skorohod(closed, eta), abs=1e-6)


class TestPathwiseIdentities:
    @pytest.mark.parametrize("h", [lambda v: v, lambda v: np.sum(np.square(v)), lambda v: 3.0])
    def test_chain_rule(self, eta, h):
        assert chain_rule_check(count(LEFT, vector=(1.0, 0.0)), h, eta, (0.2, 0.2)).passed

    def test_chain_rule_norm_square(self, eta):
        F = count(LEFT, vector=(1.0, 0.0))
        report = chain_rule_check(F, lambda v: np.sum(np.square(v)), eta, (0.2, 0.2))
        n = eta.count_in(LEFT)
        assert report.lhs == pytest.approx((n + 1) ** 2 - n**2)

    def test_product_rule_with_constant(self, eta):
        report = product_rule_check(count(LEFT), lambda config: 2.0, eta, (0.2, 0.2))
        assert report.passed and report.lhs == pytest.approx(2.0)

    def test_product_rule_self(self, eta):
        F = count(LEFT, vector=tuple(H))
        assert product_rule_check(F, F, eta, (0.4, 0.6)).passed

    def test_commutation_deterministic_field(self, eta):
        field = ProductField((Weight(LEFT),), tuple(H))
        report = commutation_check(field, eta, (0.2, 0.5))
        assert report.passed
        assert np.allclose(report.lhs, H)

    def test_commutation_random_field(self, eta):
        field = ProductField((Weight(LEFT),), tuple(H), Weight(RIGHT))
        assert commutation_check(field, eta, (0.7, 0.5)).passed
        assert commutation_check(field, eta, (0.2, 0.5)).passed

    def test_inconsistent_field_detected(self, eta):
        # The identity holds for every deterministic field, so only a field
        # that answers differently on repeated calls can break it.
        calls = []

        def stateful(config, x):
            calls.append(1)
            return 2.0 ** len(calls) * H

        field = FunctionField(stateful, integral=lambda config, pattern: 1.5 * H)
        assert not commutation_check(field, eta, (0.2, 0.5)).passed

    @settings(max_examples=30, deadline=None)
    @given(st.lists(points, max_size=6), points)
    def test_predictable_shortcut(self, pts, x):
        window = UniformWindow(Box((0.0, 0.0), (1.0, 1.0)), 3.0, "unit-square")
        config = make(window, pts + [x])
        assert predictable_shortcut_check(LEFT, H, config).passed
        assert predictable_shortcut_check(LEFT, H, config, outside=count(RIGHT, square)).passed


class TestMonteCarlo:
    def test_duality_constant_functional(self, unit_square):
        field = ProductField((Weight(LEFT),), tuple(H))
        report = duality_check(lambda config: 1.0, field, unit_square, 5000, 1)
        assert report.passed
        assert np.allclose(report.rhs, 0.0)

    def test_duality_count_indicator(self, unit_square):
        field = ProductField((Weight(LEFT),), tuple(H))
        report = duality_check(count(LEFT), field, unit_square, 20_000, 2)
        assert report.passed
        assert np.all(np.abs(report.rhs - 1.5 * H) <= 4 * report.std_errors["rhs"])

    def test_duality_bounded_function(self, unit_square):
        field = ProductField((Weight(LEFT),), tuple(H), Weight(RIGHT), bounded_ratio)
        assert duality_check(count(LEFT, bounded_ratio), field, unit_square, 20_000, 3).passed

    def test_isometry_deterministic(self, unit_square):
        field = ProductField((Weight(LEFT),), tuple(H))
        report = isometry_check(field, field, unit_square, 20_000, 4)
        assert report.passed
        assert abs(report.lhs - 1.5 * float(H @ H)) <= 4 * report.std_errors["lhs"]

    def test_isometry_disjoint_supports(self, unit_square):
        a = ProductField((Weight(LEFT),), tuple(H))
        b = ProductField((Weight(RIGHT),), tuple(H))
        report = isometry_check(a, b, unit_square, 20_000, 5)
        assert report.passed and report.rhs == 0.0

    def test_isometry_random_field(self, unit_square):
        field = ProductField((Weight(LEFT),), tuple(H), Weight(RIGHT))
        assert isometry_check(field, field, unit_square, 20_000, 6).passed

    def test_mean_zero(self, unit_square):
        field = ProductField((Weight(LEFT),), tuple(H), Weight(LEFT), bounded_ratio)
        assert mean_zero_check(field, unit_square, 20_000, 7).passed

    def test_sobolev_moments_of_count(self, unit_square):
        out = sobolev_moments(count(LEFT), unit_square, 20_000, 8)
        # E N² = m + m², E ∫ |D N(B)|² dμ = μ(B).
        assert out["moment_F"] == pytest.approx(1.5 + 2.25, rel=0.05)
        assert out["moment_DF"] == pytest.approx(1.5, rel=0.05)


class TestAdaptedness:
    def test_count_before_time(self, unit_square):
        report = adaptedness_check(count(Box((0.0, 0.0), (1.0, 1.0))), 0.5, unit_square, 1000, 1)
        assert report.passed and report.details["nonzero_differences"] == 0

    def test_arbitrary_functional(self, unit_square):
        F = lambda config: np.sin(sum(p[0] * p[1] for p in config.points()))  # noqa: E731
        assert adaptedness_check(F, 0.3, unit_square, 1000, 2, probes_per_path=2).passed

    def test_unrestricted_functional_would_fail(self, unit_square):
        # Sanity check of the probe: without restriction the difference is nonzero.
        config = sample_poisson(unit_square, 3)
        assert difference(count(Box((0.0, 0.0), (1.0, 1.0))), config, (0.9, 0.5)) == 1.0
