from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from levyspde.harness import (
    RateReport,
    TestFunctional,
    TimeMeasure,
    fit_slope,
    gaussian_sqrt_difference,
    gaussian_sqrt_mean,
    h_sweep,
    k_sweep,
    linear_weak_error,
    local_average_direction,
    reference_integral,
    reference_weights,
    regularity_report,
    scheme_integral,
    strong_error,
    time_integral_derivative_check,
    weak_error,
    weak_linear_sweep,
)
from levyspde.levy import ImpulsiveCylindrical, JumpStream, SubordinatedQWiener, sample_jump_events
from levyspde.spde import SchemeGrid, error_symbol, reference_solution, scheme_from_events


@pytest.fixture
def model():
    return SubordinatedQWiener(n_modes=512)


@pytest.fixture
def x0():
    return np.arange(1, 513, dtype=float) ** -2.31


def smooth_functional(n_modes=512, tau=1.0):
    return TestFunctional("bounded_smooth", tuple(local_average_direction(0.5, 1 / 64, n_modes)), TimeMeasure.point(tau))


class TestFitSlope:
    @settings(max_examples=40, deadline=None)
    @given(st.floats(-3, 3), st.floats(0.1, 10))
    def test_exact_power_law(self, slope, const):
        levels = [2.0**-i for i in range(3, 8)]
        fit = fit_slope(levels, [const * h**slope for h in levels])
        assert fit.slope == pytest.approx(slope, abs=1e-9)
        assert fit.intercept == pytest.approx(math.log(const), abs=1e-9)
        assert fit.residual < 1e-9

    def test_needs_four_levels(self):
        with pytest.raises(ValueError):
            fit_slope([1, 2, 3], [1, 2, 3])

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            fit_slope([1, 2, 3, 4], [1, 0, 3, 4])


class TestTimeMeasure:
    @pytest.mark.parametrize(
        "zeta",
        [TimeMeasure.point(0.5), TimeMeasure.atoms([0.2, 0.9], [1.0, 2.0]), TimeMeasure.uniform(0.1, 0.6, 2.0)],
    )
    def test_round_trip(self, zeta):
        assert TimeMeasure.from_dict(zeta.to_dict()) == zeta

    def test_total_and_latest(self):
        assert TimeMeasure.atoms([0.2, 0.9], [1.0, 2.0]).total == 3.0
        assert TimeMeasure.uniform(0.1, 0.6, 2.0).total == pytest.approx(1.0)
        assert TimeMeasure.uniform(0.1, 0.6).latest == 0.6

    def test_invalid(self):
        with pytest.raises(ValueError):
            TimeMeasure.uniform(0.5, 0.5)
        with pytest.raises(ValueError):
            TimeMeasure.atoms([0.1, 0.2], [1.0])

    def test_uniform_weights_match_quadrature(self):
        zeta = TimeMeasure.uniform(0.2, 0.7, 1.5)
        lam = np.array([1.0, 30.0])
        for s in (0.0, 0.4, 0.8):
            w = reference_weights(zeta, np.array([s]), lam)[0]
            for j, l in enumerate(lam):
                lo = max(s, 0.2)
                value = integrate.quad(lambda t: 1.5 * math.exp(-l * (t - s)), lo, 0.7)[0] if lo < 0.7 else 0.0
                assert w[j] == pytest.approx(value, rel=1e-10, abs=1e-14)


class TestWeights:
    def test_reference_integral_is_mild_solution(self):
        model = ImpulsiveCylindrical(n_modes=8, jump_threshold=0.2)
        stream = sample_jump_events(model, 1.0, 5)
        x0 = np.linspace(1, 0.2, 8)
        value = reference_integral(stream, x0, TimeMeasure.point(0.6))
        assert np.allclose(value, reference_solution(stream, x0, [0.6])[0], rtol=1e-10, atol=1e-13)

    @pytest.mark.parametrize("k", [0.125, 2.0**-6])
    def test_scheme_integral_is_scheme(self, k):
        model = ImpulsiveCylindrical(n_modes=8, jump_threshold=0.2)
        stream = sample_jump_events(model, 1.0, 6)
        grid = SchemeGrid(5, k)
        x0 = np.linspace(1, 0.2, 8)
        value = scheme_integral(stream, x0, grid, TimeMeasure.point(0.5))
        expected = scheme_from_events(stream, x0, grid, [0.5])[0]
        assert np.allclose(value[: grid.n_retained], expected, rtol=1e-10, atol=1e-13)

    def test_time_integral_derivative(self):
        model = SubordinatedQWiener(n_modes=6, jump_threshold=0.1)
        report = time_integral_derivative_check(model, TimeMeasure.uniform(0.2, 0.9), (0.5, np.ones(6)), 3)
        assert report.passed


class TestGaussianSqrt:
    @pytest.mark.parametrize("mu, var", [(0.0, 0.5), (1.3, 0.2), (-0.4, 3.0), (2.0, 1e-6)])
    def test_mean_matches_quadrature(self, mu, var):
        sd = math.sqrt(var)
        dist = stats.norm(mu, sd)
        value = integrate.quad(lambda y: (math.sqrt(1 + y * y) - 1) * dist.pdf(y), mu - 12 * sd, mu + 12 * sd)[0]
        assert float(gaussian_sqrt_mean(mu, var)) == pytest.approx(value, rel=1e-8, abs=1e-12)

    def test_zero_for_equal_inputs(self):
        assert float(gaussian_sqrt_difference(0.7, 0.3, 0.7, 0.3)) == 0.0

    def test_small_difference_is_linear(self):
        d1 = float(gaussian_sqrt_difference(0.5, 0.3 + 1e-9, 0.5, 0.3))
        d2 = float(gaussian_sqrt_difference(0.5, 0.3 + 2e-9, 0.5, 0.3))
        assert d2 == pytest.approx(2 * d1, rel=1e-4)


class TestStrong:
    def test_noise_free_error_is_operator_symbol(self, model, x0):
        levels = h_sweep((4, 8, 16, 32), k=2.0**-10)
        report = strong_error(model, x0, levels, 1.3, 2, 0, include_noise=False)
        for grid, lvl in zip(levels, report.levels):
            errs = [np.linalg.norm(error_symbol(grid, grid.floor_index(t), 512) * x0) for t in (0.5, 1.0)]
            assert lvl.error == pytest.approx(max(errs), rel=1e-9)
            assert lvl.stderr == 0.0

    def test_moment_range(self, model, x0):
        with pytest.raises(ValueError):
            strong_error(model, x0, h_sweep((4, 8, 16, 32)), 1.5, 2, 0)

    def test_levels_vary_one_parameter(self, model, x0):
        with pytest.raises(ValueError):
            strong_error(model, x0, [SchemeGrid(4, 0.25), SchemeGrid(8, 0.125)], 1.3, 2, 0)

    def test_thread_count_does_not_change_report(self, model, x0):
        levels = k_sweep((2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6), n_retained=64)
        a = strong_error(model, x0, levels, 1.3, 12, 7, threads=1)
        b = strong_error(model, x0, levels, 1.3, 12, 7, threads=3)
        assert a.to_json(include_timing=False) == b.to_json(include_timing=False)


class TestWeak:
    def test_linear_is_exact_and_noise_free(self, model, x0):
        levels = h_sweep((4, 8, 16, 32))
        f = TestFunctional("linear", tuple(np.arange(1, 513) ** -0.51), TimeMeasure.point(1.0))
        report = weak_error(model, x0, f, levels, 10, 0)
        for g, lvl in zip(levels, report.levels):
            assert lvl.error == pytest.approx(linear_weak_error(x0, f, g, 512), rel=1e-12)
            assert lvl.stderr == 0.0

    @pytest.mark.parametrize("estimator", ["conditional", "coupled", "mecke"])
    def test_constant_functional_has_no_error(self, model, x0, estimator):
        f = TestFunctional("constant", (1.0,), TimeMeasure.point(1.0))
        report = weak_error(SubordinatedQWiener(n_modes=64), x0[:64], f, h_sweep((4, 8, 16, 32)), 5, 0, estimator=estimator)
        assert all(lvl.error == 0.0 for lvl in report.levels)

    def test_mecke_agrees_with_conditional(self, model, x0):
        levels = h_sweep((4, 8, 16, 32))
        f = smooth_functional()
        mecke = weak_error(model, x0, f, levels, 300, 1, estimator="mecke")
        cond = weak_error(model, x0, f, levels, 2000, 2, estimator="conditional")
        for a, b in zip(mecke.levels[:2], cond.levels[:2]):
            assert abs(a.error - b.error) <= 4 * math.hypot(a.stderr, b.stderr)

    def test_mecke_needs_point_mass(self, model, x0):
        f = TestFunctional("bounded_smooth", (1.0,), TimeMeasure.uniform(0.5, 1.0))
        with pytest.raises(ValueError):
            weak_error(model, x0, f, h_sweep((4, 8, 16, 32)), 2, 0, estimator="mecke")

    def test_unknown_estimator(self, model, x0):
        with pytest.raises(ValueError):
            weak_error(model, x0, smooth_functional(), h_sweep((4, 8, 16, 32)), 2, 0, estimator="plain")

    @pytest.mark.parametrize("axis, target", [("h", 1.8), ("k", 0.9)])
    def test_linear_sweep_slopes(self, axis, target):
        assert abs(weak_linear_sweep(axis).slope - target) <= 0.15


class TestReports:
    def test_round_trip_and_files(self, tmp_path):
        report = weak_linear_sweep("h")
        again = RateReport.from_dict(report.to_dict())
        assert again.to_json() == report.to_json()
        json_path, csv_path = report.write(tmp_path, include_timing=False)
        assert "wall_clock_seconds" not in json_path.read_text()
        assert csv_path.read_text().splitlines()[0] == "level_h,level_k,error,stderr,n_paths,seed"

    def test_regularity_levels(self, model, x0):
        report = regularity_report(model, x0, 4, 0, include_noise=False)
        assert report.sweep == "gap"
        assert all(lvl.h == 0.0 for lvl in report.levels)
        assert report.level_values() == [lvl.k for lvl in report.levels]


def test_local_average_direction():
    v = local_average_direction(0.3, 0.1, 3)
    for j in (1, 2, 3):
        expected = integrate.quad(lambda x: math.sqrt(2) * math.sin(j * math.pi * x) / 0.1, 0.25, 0.35)[0]
        assert v[j - 1] == pytest.approx(expected, rel=1e-10)


def test_empty_stream_reference():
    stream = JumpStream(np.zeros(0), np.zeros(0), np.zeros((0, 4)), np.zeros(4), 1.0)
    value = reference_integral(stream, np.ones(4), TimeMeasure.point(0.1))
    lam = (np.arange(1, 5) * np.pi) ** 2
    assert np.allclose(value, np.exp(-0.1 * lam))
