"""The two stable-type noise models, as jump streams and grid increments.

Both models are finite-activity approximations: jumps below a threshold
are dropped and, where the retained jumps have non-zero mean, compensated
by a linear drift.  Marks are spectral coefficients in the sine basis
``e_j(ξ) = √2 sin(jπξ)`` of ``(0, 1)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .measure import Box, IntensityWindow, Point, PointConfiguration, add_atom, as_point
from .reports import IdentityReport, combine_exact, exact_report, monte_carlo_report
from .rng import as_generator


class AdmissibilityError(ValueError):
    """Model parameters violate the summability needed for the requested β."""


def eigenvalues(n_modes: int) -> np.ndarray:
    return (np.arange(1, n_modes + 1) * np.pi) ** 2


def sample_stable_subordinator_increment(
    alpha_half: float,
    dt: float,
    seed: int | np.random.Generator,
    size: int | None = None,
) -> float | np.ndarray:
    """Increment over ``dt`` of a ``γ``-stable subordinator, ``γ = alpha_half``.

    Uses the Chambers–Mallows–Stuck (Kanter) representation of a positive
    stable law with ``E exp(-r S) = exp(-r^γ)``, scaled by ``dt^{1/γ}`` so
    that ``E exp(-r ΔZ) = exp(-dt r^γ)``.
    """
    g = float(alpha_half)
    if not 0.0 < g < 1.0:
        raise ValueError("alpha_half must lie in (0, 1)")
    if dt <= 0:
        raise ValueError("dt must be positive")
    rng = as_generator(seed, "stable")
    n = 1 if size is None else size
    u = rng.uniform(0.0, np.pi, n)
    e = rng.standard_exponential(n)
    # Guard against u == 0, where sin(u) vanishes.
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    log_a = (
        g / (1.0 - g) * np.log(np.sin(g * u))
        + np.log(np.sin((1.0 - g) * u))
        - np.log(np.sin(u)) / (1.0 - g)
    )
    s = np.exp((1.0 - g) / g * (log_a - np.log(e)))
    out = dt ** (1.0 / g) * s
    return float(out[0]) if size is None else out


def stable_laplace_check(
    alpha_half: float,
    r_values: Sequence[float] = (0.5, 1.0, 2.0),
    n_draws: int = 1_000_000,
    seed: int | np.random.Generator = 0,
    dt: float = 1.0,
    sigma_level: float = 3.0,
) -> IdentityReport:
    """Empirical ``E exp(-r ΔZ)`` against ``exp(-dt r^γ)`` at each ``r``."""
    draws = sample_stable_subordinator_increment(alpha_half, dt, seed, size=n_draws)
    r = np.asarray(r_values, dtype=float)
    lhs = np.exp(-np.outer(draws, r))
    rhs = np.broadcast_to(np.exp(-dt * r**alpha_half), lhs.shape)
    return monte_carlo_report(
        "stable-laplace", lhs, rhs, sigma_level, details={"r": r.tolist(), "alpha_half": alpha_half, "dt": dt}
    )


@dataclass(frozen=True)
class SubordinatedQWiener:
    """``L(t) = W(Z(t))``: a Q-Wiener process run on an ``α/2``-stable clock.

    ``Q`` is diagonal in the sine basis with eigenvalues ``q_scale·j^{-q_decay}``.
    Subordinator jumps larger than ``jump_threshold`` are kept.
    """

    alpha: float = 1.5
    q_scale: float = 1.0
    q_decay: float = 0.75
    n_modes: int = 4096
    jump_threshold: float = 1e-2

    kind = "subordinated"

    def __post_init__(self) -> None:
        if not 1.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (1, 2)")
        if self.q_scale <= 0 or self.q_decay <= 0:
            raise ValueError("q_scale and q_decay must be positive")
        if self.n_modes < 1:
            raise ValueError("n_modes must be at least 1")
        if not self.jump_threshold > 0:
            raise ValueError("jump_threshold must be positive (zero means infinite activity)")

    @property
    def alpha_half(self) -> float:
        return self.alpha / 2.0

    @property
    def q(self) -> np.ndarray:
        return self.q_scale * np.arange(1, self.n_modes + 1, dtype=float) ** (-self.q_decay)

    @property
    def levy_constant(self) -> float:
        """``c`` in the subordinator Lévy density ``c σ^{-1-γ}``."""
        g = self.alpha_half
        return g / math.gamma(1.0 - g)

    def jump_rate(self, threshold: float | None = None) -> float:
        """Expected number of subordinator jumps above ``threshold`` per unit time."""
        eps = self.jump_threshold if threshold is None else threshold
        return eps ** (-self.alpha_half) / math.gamma(1.0 - self.alpha_half)

    def sample_sizes(self, rng: np.random.Generator, n: int, threshold: float | np.ndarray | None = None) -> np.ndarray:
        """Subordinator jump sizes conditioned to exceed ``threshold``."""
        eps = self.jump_threshold if threshold is None else threshold
        return eps * rng.random(n) ** (-1.0 / self.alpha_half)

    def sample_marks(
        self, rng: np.random.Generator, sizes: np.ndarray, modes_needed: np.ndarray | None = None
    ) -> np.ndarray:
        """Gaussian marks ``√σ Q^{1/2} ξ``; modes at or beyond ``modes_needed[i]`` are left at zero."""
        if modes_needed is None:
            g = rng.standard_normal((len(sizes), self.n_modes))
        else:
            keep = np.arange(self.n_modes)[None, :] < np.asarray(modes_needed)[:, None]
            g = np.zeros((len(sizes), self.n_modes))
            g[keep] = rng.standard_normal(int(keep.sum()))
        return np.sqrt(sizes)[:, None] * np.sqrt(self.q)[None, :] * g

    def compensator_drift(self) -> np.ndarray:
        return np.zeros(self.n_modes)

    def hilbert_schmidt_sum(self, beta: float) -> float:
        """``Σ_j λ_j^{β-2/α} q_j`` including an integral bound for ``j > J``."""
        a = beta - 2.0 / self.alpha
        exponent = 2.0 * a - self.q_decay
        if exponent >= -1.0:
            raise AdmissibilityError(
                f"Σ λ_j^(β-2/α) q_j diverges for β={beta}, α={self.alpha}, q_decay={self.q_decay}"
            )
        partial = float(np.sum(eigenvalues(self.n_modes) ** a * self.q))
        tail = self.q_scale * np.pi ** (2 * a) * self.n_modes ** (exponent + 1.0) / (-(exponent + 1.0))
        return partial + tail

    def check_admissible(self, beta: float) -> None:
        self.hilbert_schmidt_sum(beta)


@dataclass(frozen=True)
class ImpulsiveCylindrical:
    """Point impulses ``σ δ_ξ`` with ``ρ(dσ) = σ^{-1-α} dσ`` and uniform ``ξ ∈ (0,1)``."""

    alpha: float = 1.5
    n_modes: int = 4096
    jump_threshold: float = 1e-2

    kind = "impulsive"

    def __post_init__(self) -> None:
        if not 1.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (1, 2)")
        if self.n_modes < 1:
            raise ValueError("n_modes must be at least 1")
        if not self.jump_threshold > 0:
            raise ValueError("jump_threshold must be positive (zero means infinite activity)")

    def jump_rate(self, threshold: float | None = None) -> float:
        eps = self.jump_threshold if threshold is None else threshold
        return eps ** (-self.alpha) / self.alpha

    def sample_sizes(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.jump_threshold * rng.random(n) ** (-1.0 / self.alpha)

    def basis_at(self, xi: np.ndarray) -> np.ndarray:
        j = np.arange(1, self.n_modes + 1)
        return math.sqrt(2.0) * np.sin(np.pi * np.outer(xi, j))

    def marks_from(self, sizes: np.ndarray, locations: np.ndarray) -> np.ndarray:
        return sizes[:, None] * self.basis_at(locations)

    def compensator_drift(self) -> np.ndarray:
        """``∫ x ν(dx)`` over retained jumps, per unit time."""
        j = np.arange(1, self.n_modes + 1)
        size_mean = self.jump_threshold ** (1.0 - self.alpha) / (self.alpha - 1.0)
        basis_mean = math.sqrt(2.0) * (1.0 - np.cos(j * np.pi)) / (j * np.pi)
        return size_mean * basis_mean

    def check_admissible(self, beta: float) -> None:
        if not beta < 2.0 / self.alpha - 0.5:
            raise AdmissibilityError(f"β={beta} must be below 2/α - 1/2 = {2.0 / self.alpha - 0.5:.4f}")


LevyModel = Union[SubordinatedQWiener, ImpulsiveCylindrical]


@dataclass(frozen=True)
class JumpEvent:
    time: float
    mark: np.ndarray = field(compare=False)


@dataclass
class JumpStream:
    """Retained jumps of one path, sorted by time.

    ``sizes`` are subordinator jumps or impulse sizes; ``marks`` may be
    ``None`` when only sizes are needed.  ``drift`` is the compensator drift
    per unit time subtracted from the jump sum.
    """

    times: np.ndarray
    sizes: np.ndarray
    marks: np.ndarray | None
    drift: np.ndarray
    horizon: float
    locations: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def events(self) -> list[JumpEvent]:
        if self.marks is None:
            raise ValueError("this stream was sampled without marks")
        return [JumpEvent(float(t), m) for t, m in zip(self.times, self.marks)]

    def path_value(self, t: float) -> np.ndarray:
        """``L(t)``: compensated sum of marks up to and including ``t``."""
        if self.marks is None:
            raise ValueError("this stream was sampled without marks")
        n = int(np.searchsorted(self.times, t, side="right"))
        return self.marks[:n].sum(axis=0) - t * self.drift

    def to_csv(self, path: str | Path, n_coefficients: int | None = None) -> None:
        if self.marks is None:
            raise ValueError("this stream was sampled without marks")
        width = self.marks.shape[1] if n_coefficients is None else min(n_coefficients, self.marks.shape[1])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "size"] + [f"c{j}" for j in range(1, width + 1)])
            for t, s, m in zip(self.times, self.sizes, self.marks):
                writer.writerow([repr(float(t)), repr(float(s))] + [repr(float(v)) for v in m[:width]])


def _sort_stream(times, sizes, marks, drift, horizon, locations=None) -> JumpStream:
    order = np.argsort(times, kind="stable")
    return JumpStream(
        times=times[order],
        sizes=sizes[order],
        marks=None if marks is None else marks[order],
        drift=drift,
        horizon=horizon,
        locations=None if locations is None else locations[order],
    )


MARK_DECAY_CUTOFF = 60.0


def sample_jump_events(
    model: LevyModel,
    horizon: float,
    seed: int | np.random.Generator,
    focus_times: Sequence[float] | None = None,
    min_lag: float = 1e-8,
    with_marks: bool = True,
    mark_floor: int | None = None,
) -> JumpStream:
    """Sample the retained jumps of ``model`` on ``[0, horizon]``.

    With ``focus_times=None`` jumps are kept above the model's constant
    threshold ``ε``.  Otherwise (subordinated model only) the threshold
    shrinks towards each focus time ``τ``: a jump at time ``s`` with next
    focus time ``τ ≥ s`` is kept when its size exceeds ``ε (τ - s)^{2/α}``,
    and jumps within ``min_lag`` before a focus time are dropped.  This keeps
    the same relative resolution at every time scale seen from the focus
    times, which is what convergence-rate measurements at those times need.

    With focus times and ``mark_floor`` set, marks are drawn only for the
    first ``mark_floor`` modes plus the modes whose kernel
    ``exp(-λ_j (τ - s))`` at the next focus time exceeds ``e^{-60}``; the
    remaining entries are zero.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rng = as_generator(seed, "jumps")
    drift = model.compensator_drift()
    if focus_times is None:
        n = int(rng.poisson(model.jump_rate() * horizon))
        times = rng.uniform(0.0, horizon, n)
        sizes = model.sample_sizes(rng, n)
        if isinstance(model, ImpulsiveCylindrical):
            locations = rng.random(n)
            marks = model.marks_from(sizes, locations) if with_marks else None
            return _sort_stream(times, sizes, marks, drift, horizon, locations)
        marks = model.sample_marks(rng, sizes) if with_marks else None
        return _sort_stream(times, sizes, marks, drift, horizon)
    if not isinstance(model, SubordinatedQWiener):
        raise ValueError("focus-time truncation needs a symmetric model without drift")
    focus = sorted({float(t) for t in focus_times if 0.0 < t <= horizon})
    if not focus:
        raise ValueError("focus times must lie in (0, horizon]")
    g = model.alpha_half
    rate_per_log_lag = model.jump_rate() / g
    all_times, all_sizes = [], []
    start = 0.0
    for tau in focus:
        span = tau - start
        if span > min_lag:
            log_range = math.log(span / min_lag)
            n = int(rng.poisson(rate_per_log_lag * log_range))
            lags = min_lag * np.exp(rng.random(n) * log_range)
            thresholds = model.jump_threshold * lags ** (1.0 / g)
            all_sizes.append(model.sample_sizes(rng, n, thresholds))
            all_times.append(tau - lags)
        start = tau
    times = np.concatenate(all_times) if all_times else np.zeros(0)
    sizes = np.concatenate(all_sizes) if all_sizes else np.zeros(0)
    order = np.argsort(times, kind="stable")
    times, sizes = times[order], sizes[order]
    needed = None
    if mark_floor is not None:
        next_focus = np.asarray(focus)[np.searchsorted(focus, times, side="left")]
        lag = np.maximum(next_focus - times, 1e-300)
        reach = np.ceil(np.sqrt(MARK_DECAY_CUTOFF / lag) / np.pi)
        needed = np.minimum(np.maximum(reach, mark_floor), model.n_modes).astype(np.int64)
    marks = model.sample_marks(rng, sizes, needed) if with_marks else None
    return JumpStream(times, sizes, marks, drift, horizon)


def step_indices(times: np.ndarray, step: float) -> np.ndarray:
    """Index ``m ≥ 1`` of the grid step ``(t_{m-1}, t_m]`` containing each time."""
    return np.maximum(np.ceil(np.asarray(times) / step).astype(np.int64), 1)


def increments_from_events(stream: JumpStream, grid_times: np.ndarray) -> np.ndarray:
    """``L(t_m) - L(t_{m-1})`` for consecutive grid times, shape ``(M, J)``."""
    if stream.marks is None:
        raise ValueError("this stream was sampled without marks")
    grid_times = np.asarray(grid_times, dtype=float)
    idx = np.searchsorted(grid_times, stream.times, side="left")
    inside = (idx >= 1) & (idx < len(grid_times))
    out = np.zeros((len(grid_times) - 1, stream.marks.shape[1]))
    np.add.at(out, idx[inside] - 1, stream.marks[inside])
    out -= np.diff(grid_times)[:, None] * stream.drift[None, :]
    return out


def sample_increments(model: LevyModel, grid_times: Sequence[float], seed: int | np.random.Generator) -> np.ndarray:
    """Noise increments over a time grid starting at 0, shape ``(M, J)``.

    The subordinated model is sampled exactly in law through the stable
    clock; the impulsive model aggregates its jump stream.
    """
    grid_times = np.asarray(grid_times, dtype=float)
    if grid_times[0] != 0.0 or np.any(np.diff(grid_times) <= 0):
        raise ValueError("grid must start at 0 and increase strictly")
    rng = as_generator(seed, "increments")
    if isinstance(model, SubordinatedQWiener):
        dts = np.diff(grid_times)
        clock = np.array([sample_stable_subordinator_increment(model.alpha_half, dt, rng) for dt in dts])
        g = rng.standard_normal((len(dts), model.n_modes))
        return np.sqrt(clock)[:, None] * np.sqrt(model.q)[None, :] * g
    stream = sample_jump_events(model, float(grid_times[-1]), rng)
    return increments_from_events(stream, grid_times)


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum blocks of ``factor`` consecutive increments.

    Powers of two are summed by repeated pairwise halving, so a coarse
    increment is the exact floating-point sum of the two finer increments
    one level down.
    """
    if factor < 1 or len(increments) % factor:
        raise ValueError("factor must divide the number of increments")
    out = np.asarray(increments)
    if factor & (factor - 1) == 0:
        while factor > 1:
            out = out[0::2] + out[1::2]
            factor //= 2
        return out
    return out.reshape(len(out) // factor, factor, *out.shape[1:]).sum(axis=1)


class LevyWindow(IntensityWindow):
    """Jump intensity of a constant-threshold model on ``[0, horizon]``.

    Points are tuples ``(s, mark_1, ..., mark_J)``.  Boxes passed to
    :meth:`measure` constrain only the time coordinate.
    """

    def __init__(self, model: LevyModel, horizon: float = 1.0):
        self.model = model
        self.horizon = float(horizon)
        self.dim = 1 + model.n_modes
        self.rate = model.jump_rate()
        self.total_mass = self.rate * self.horizon
        self.window_id = f"levy-{model.kind}-J{model.n_modes}-eps{model.jump_threshold:g}-T{self.horizon:g}"

    def contains(self, x: Point) -> bool:
        return len(x) == self.dim and 0.0 <= x[0] <= self.horizon and all(math.isfinite(v) for v in x)

    def sample_points(self, rng: np.random.Generator, n: int) -> list[Point]:
        times = rng.uniform(0.0, self.horizon, n)
        sizes = self.model.sample_sizes(rng, n)
        if isinstance(self.model, ImpulsiveCylindrical):
            marks = self.model.marks_from(sizes, rng.random(n))
        else:
            marks = self.model.sample_marks(rng, sizes)
        return [tuple(row) for row in np.column_stack([times, marks]).tolist()]

    def measure(self, box: Box) -> float:
        lo = max(0.0, box.lower[0])
        hi = min(self.horizon, box.upper[0])
        return self.rate * max(0.0, hi - lo)


def events_to_configuration(stream: JumpStream, window: LevyWindow) -> PointConfiguration:
    """The point configuration ``Σ δ_{(s_i, ΔL_i)}`` of a jump stream."""
    if stream.marks is None:
        raise ValueError("this stream was sampled without marks")
    points = np.column_stack([stream.times, stream.marks]).tolist() if len(stream) else []
    return PointConfiguration.from_points([tuple(p) for p in points], window)


def path_functional(t: float, drift: np.ndarray):
    """``L(t)`` as a functional of a configuration of ``(s, mark)`` atoms."""

    def value(eta: PointConfiguration) -> np.ndarray:
        total = -t * drift
        for p, m in eta.atoms:
            if p[0] <= t:
                total = total + m * np.asarray(p[1:])
        return total

    return value


def levy_derivative_check(
    model: LevyModel,
    t: float,
    probe: tuple[float, Sequence[float]],
    seed: int | np.random.Generator,
    horizon: float = 1.0,
) -> IdentityReport:
    """Check ``D_{s,x} L(t) = 1_{s≤t} x`` on one sampled path."""
    rng = as_generator(seed, "levy-derivative")
    window = LevyWindow(model, horizon)
    stream = sample_jump_events(model, horizon, rng)
    eta = events_to_configuration(stream, window)
    s, x = probe
    x = np.asarray(x, dtype=float)
    point = (float(s),) + as_point(x)
    value = path_functional(t, stream.drift)
    base = value(eta)
    lhs = value(add_atom(eta, point)) - base
    rhs = x if s <= t else np.zeros_like(x)
    scale = max(float(np.max(np.abs(base))), float(np.max(np.abs(x))))
    return exact_report("levy-derivative", lhs, rhs, scale)


def levy_derivative_checks(
    model: LevyModel, n_probes: int, seed: int, horizon: float = 1.0
) -> IdentityReport:
    """Many probes: random observation time, probe time and probe mark."""
    reports = []
    for i in range(n_probes):
        rng = as_generator(seed, "levy-probe", i)
        t = float(rng.uniform(0.0, horizon))
        s = float(rng.uniform(0.0, horizon))
        x = LevyWindow(model, horizon).sample_points(rng, 1)[0][1:]
        reports.append(levy_derivative_check(model, t, (s, x), rng, horizon))
    return combine_exact("levy-derivative", reports)
