from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from levyspde.levy import (
    AdmissibilityError,
    ImpulsiveCylindrical,
    JumpStream,
    SubordinatedQWiener,
    coarsen_increments,
    increments_from_events,
    levy_derivative_checks,
    sample_increments,
    sample_jump_events,
    sample_stable_subordinator_increment,
    stable_laplace_check,
)
from levyspde.rng import stream


@pytest.fixture
def small_model():
    return SubordinatedQWiener(n_modes=16, jump_threshold=0.05)


class TestStableSampler:
    @pytest.mark.parametrize("gamma", [0.3, 0.6, 0.75, 0.9])
    def test_laplace_transform(self, gamma):
        report = stable_laplace_check(gamma, (0.5, 1.0, 2.0), 200_000, stream(3, "t", int(gamma * 100)))
        assert report.passed, report.summary()

    def test_time_scaling(self):
        report = stable_laplace_check(0.75, (1.0,), 200_000, stream(4), dt=0.25)
        assert report.passed
        assert report.rhs[0] == pytest.approx(math.exp(-0.25))

    def test_draws_positive(self):
        draws = sample_stable_subordinator_increment(0.75, 1e-3, stream(5), size=10_000)
        assert np.all(draws > 0)

    @pytest.mark.parametrize("bad", [0.0, 1.0, 1.2])
    def test_rejects_index(self, bad):
        with pytest.raises(ValueError):
            sample_stable_subordinator_increment(bad, 1.0, 0)

    def test_scalar_without_size(self):
        assert isinstance(sample_stable_subordinator_increment(0.75, 1.0, 0), float)

    def test_seed_reproducible(self):
        a = sample_stable_subordinator_increment(0.75, 1.0, 11, size=5)
        b = sample_stable_subordinator_increment(0.75, 1.0, 11, size=5)
        assert np.array_equal(a, b)


class TestSubordinatedModel:
    def test_levy_constant_gives_laplace_exponent(self):
        # Independent oracle: ∫ (1 - e^{-rσ}) c σ^{-1-γ} dσ = r^γ by quadrature.
        model = SubordinatedQWiener()
        g, c = model.alpha_half, model.levy_constant
        for r in (0.5, 1.0, 3.0):
            f = lambda s: -math.expm1(-r * s) * c * s ** (-1.0 - g)
            value = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
            assert value == pytest.approx(r**g, rel=1e-7)

    def test_jump_rate_matches_density(self):
        model = SubordinatedQWiener(jump_threshold=0.02)
        g, c = model.alpha_half, model.levy_constant
        value = integrate.quad(lambda s: c * s ** (-1.0 - g), 0.02, np.inf)[0]
        assert model.jump_rate() == pytest.approx(value, rel=1e-8)

    def test_sizes_are_pareto_above_threshold(self):
        model = SubordinatedQWiener(jump_threshold=0.1)
        sizes = model.sample_sizes(stream(1), 20_000)
        assert sizes.min() > 0.1
        pareto = stats.pareto(b=model.alpha_half, scale=0.1)
        assert stats.kstest(sizes, pareto.cdf).pvalue > 1e-3

    def test_increment_characteristic_function(self, small_model):
        # E exp(i u ΔL_1) = exp(-dt (u² q_1 / 2)^γ) for the time-changed Gaussian.
        dt, u = 0.5, 0.7
        rows = np.concatenate([sample_increments(small_model, [0.0, dt], stream(9, i))[:, 0] for i in range(4000)])
        empirical = np.cos(u * rows)
        expected = math.exp(-dt * (u * u * small_model.q[0] / 2.0) ** small_model.alpha_half)
        se = empirical.std(ddof=1) / math.sqrt(len(rows))
        assert abs(empirical.mean() - expected) < 4 * se

    def test_admissibility_boundary(self):
        SubordinatedQWiener(q_decay=0.75).check_admissible(1.2)
        with pytest.raises(AdmissibilityError):
            SubordinatedQWiener(q_decay=0.7).check_admissible(1.2)

    @pytest.mark.parametrize("kwargs", [{"alpha": 2.0}, {"q_decay": 0.0}, {"n_modes": 0}, {"jump_threshold": 0.0}])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ValueError):
            SubordinatedQWiener(**kwargs)

    def test_no_drift(self):
        assert not np.any(SubordinatedQWiener(n_modes=8).compensator_drift())


class TestImpulsiveModel:
    def test_drift_matches_quadrature(self):
        model = ImpulsiveCylindrical(n_modes=6, jump_threshold=0.05)
        size_mean = integrate.quad(lambda s: s * s ** (-1.0 - model.alpha), 0.05, np.inf)[0]
        for j in range(1, 7):
            basis_mean = integrate.quad(lambda x: math.sqrt(2.0) * math.sin(j * math.pi * x), 0, 1)[0]
            assert model.compensator_drift()[j - 1] == pytest.approx(size_mean * basis_mean, abs=1e-10)

    def test_even_modes_have_no_drift(self):
        drift = ImpulsiveCylindrical(n_modes=10).compensator_drift()
        assert np.allclose(drift[1::2], 0.0, atol=1e-12)

    def test_admissibility(self):
        ImpulsiveCylindrical().check_admissible(0.8)
        with pytest.raises(AdmissibilityError):
            ImpulsiveCylindrical().check_admissible(0.9)

    def test_stream_has_locations(self):
        model = ImpulsiveCylindrical(n_modes=4, jump_threshold=0.2)
        s = sample_jump_events(model, 1.0, 3)
        assert s.locations is not None and len(s.locations) == len(s)
        assert np.allclose(s.marks, s.sizes[:, None] * model.basis_at(s.locations))


class TestJumpEvents:
    def test_sorted_and_inside_horizon(self, small_model):
        s = sample_jump_events(small_model, 2.0, 7)
        assert np.all(np.diff(s.times) >= 0)
        assert np.all((s.times >= 0) & (s.times <= 2.0))

    def test_mean_count(self, small_model):
        counts = [len(sample_jump_events(small_model, 1.0, stream(2, i), with_marks=False)) for i in range(2000)]
        rate = small_model.jump_rate()
        assert abs(np.mean(counts) - rate) < 4 * math.sqrt(rate / 2000)

    def test_focus_thresholds(self, small_model):
        tau, min_lag = 0.5, 1e-6
        s = sample_jump_events(small_model, 1.0, 4, focus_times=[tau, 1.0], min_lag=min_lag)
        nxt = np.where(s.times <= tau, tau, 1.0)
        lag = nxt - s.times
        assert np.all(lag >= min_lag * (1 - 1e-12))
        assert np.all(s.sizes > small_model.jump_threshold * lag ** (1.0 / small_model.alpha_half) * (1 - 1e-12))

    def test_focus_mean_count(self, small_model):
        min_lag = 1e-4
        counts = [
            len(sample_jump_events(small_model, 1.0, stream(6, i), focus_times=[1.0], min_lag=min_lag, with_marks=False))
            for i in range(1000)
        ]
        # Intensity c σ^{-1-γ} above ε lag^{1/γ}, integrated over lags in [min_lag, 1].
        expected = small_model.jump_rate() / small_model.alpha_half * math.log(1.0 / min_lag)
        assert abs(np.mean(counts) - expected) < 4 * math.sqrt(expected / 1000)

    def test_mark_truncation(self):
        model = SubordinatedQWiener(n_modes=512, jump_threshold=0.05)
        s = sample_jump_events(model, 1.0, 8, focus_times=[1.0], mark_floor=4)
        lag = 1.0 - s.times
        reach = np.minimum(np.maximum(np.ceil(np.sqrt(60.0 / lag) / np.pi), 4), 512).astype(int)
        for row, r in zip(s.marks, reach):
            assert not np.any(row[r:])
            assert np.all(row[:r] != 0)

    def test_focus_needs_subordinated_model(self):
        with pytest.raises(ValueError):
            sample_jump_events(ImpulsiveCylindrical(n_modes=4), 1.0, 0, focus_times=[1.0])

    def test_increments_sum_to_path(self):
        model = ImpulsiveCylindrical(n_modes=5, jump_threshold=0.1)
        s = sample_jump_events(model, 1.0, 12)
        grid = np.linspace(0.0, 1.0, 9)
        inc = increments_from_events(s, grid)
        assert np.allclose(np.cumsum(inc, axis=0)[-1], s.path_value(1.0))
        assert np.allclose(np.cumsum(inc, axis=0)[3], s.path_value(grid[4]))

    def test_csv(self, tmp_path, small_model):
        s = sample_jump_events(small_model, 1.0, 1)
        s.to_csv(tmp_path / "j.csv", n_coefficients=3)
        lines = (tmp_path / "j.csv").read_text().splitlines()
        assert lines[0] == "time,size,c1,c2,c3"
        assert len(lines) == len(s) + 1


class TestIncrementRefinement:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 3), st.integers(0, 10_000))
    def test_coarsening_is_pairwise_sum(self, levels, seed):
        fine = np.random.default_rng(seed).standard_normal((16, 3))
        coarse = coarsen_increments(fine, 2**levels)
        manual = fine
        for _ in range(levels):
            manual = manual[0::2] + manual[1::2]
        assert np.array_equal(coarse, manual)

    def test_non_power_factor(self):
        fine = np.arange(12.0).reshape(6, 2)
        assert np.array_equal(coarsen_increments(fine, 3), np.array([[6.0, 9.0], [24.0, 27.0]]))

    def test_bad_factor(self):
        with pytest.raises(ValueError):
            coarsen_increments(np.zeros((6, 1)), 4)

    def test_grid_validation(self, small_model):
        with pytest.raises(ValueError):
            sample_increments(small_model, [0.1, 0.2], 0)


def test_levy_path_derivative(small_model):
    report = levy_derivative_checks(small_model, 50, 0)
    assert report.passed


def test_empty_stream_path_value():
    s = JumpStream(np.zeros(0), np.zeros(0), np.zeros((0, 3)), np.ones(3), 1.0)
    assert np.allclose(s.path_value(0.5), -0.5)
