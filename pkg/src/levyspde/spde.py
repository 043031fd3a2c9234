"""Spectral heat semigroup, implicit Euler Galerkin scheme and error operators.

Everything is diagonal in the sine basis of ``(0, 1)`` with Dirichlet
conditions, so states are coefficient arrays and operator norms are
maxima of scalar symbols over modes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .levy import JumpStream, LevyModel, sample_jump_events, step_indices
from .parallel import chunk_ranges, ordered_map
from .rng import as_generator


GRID_SNAP = 1e-9  # in units of the time step


class SpectralOperator:
    """Dirichlet Laplacian on ``(0, 1)``: ``λ_j = (jπ)²``, ``e_j = √2 sin(jπ·)``."""

    def __init__(self, n_modes: int):
        if n_modes < 1:
            raise ValueError("n_modes must be at least 1")
        self.n_modes = n_modes
        self.modes = np.arange(1, n_modes + 1)
        self.eigenvalues = (self.modes * np.pi) ** 2

    def eigenfunction(self, j: int, xi: np.ndarray | float) -> np.ndarray:
        return math.sqrt(2.0) * np.sin(j * np.pi * np.asarray(xi))

    def synthesize(self, coeffs: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Point values ``Σ_j c_j e_j(ξ)``."""
        j = self.modes[: len(coeffs)]
        return math.sqrt(2.0) * np.sin(np.pi * np.outer(np.asarray(xi), j)) @ coeffs


def hdot_norm(x: np.ndarray, rho: float) -> float:
    """``‖x‖_{Ḣ^ρ} = (Σ λ_j^ρ x_j²)^{1/2}`` along the last axis."""
    x = np.asarray(x, dtype=float)
    lam = (np.arange(1, x.shape[-1] + 1) * np.pi) ** 2
    return np.sqrt(np.sum(lam**rho * x**2, axis=-1))


def u_norm(x: np.ndarray, beta: float, alpha: float) -> float:
    """Norm of the noise space ``U = Ḣ^{β-2/α}``."""
    return hdot_norm(x, beta - 2.0 / alpha)


@dataclass(frozen=True)
class SchemeGrid:
    """Spectral Galerkin with ``n_retained`` modes and time step ``k`` on ``[0, T]``.

    ``h = λ_{N+1}^{-1/2} = 1/((N+1)π)``, so the projection onto the first
    ``N`` modes has ``‖(I - P_h) A^{-σ/2}‖ = h^σ``.
    """

    n_retained: int
    k: float
    T: float = 1.0

    def __post_init__(self) -> None:
        if self.n_retained < 1:
            raise ValueError("at least one mode must be retained")
        if not 0.0 < self.k < 1.0:
            raise ValueError("k must lie in (0, 1)")
        if self.k > self.T:
            raise ValueError("k must not exceed T")

    @property
    def h(self) -> float:
        return 1.0 / ((self.n_retained + 1) * np.pi)

    @property
    def M(self) -> int:
        # Snap to the grid so that T/k landing a hair below an integer still counts.
        return int(math.floor(self.T / self.k + GRID_SNAP))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.k

    def floor_index(self, t: float) -> int:
        """``m`` with ``t_m ≤ t < t_{m+1}``, capped at ``M``."""
        m = int(math.floor(t / self.k + GRID_SNAP))
        return min(max(m, 0), self.M)

    @classmethod
    def from_h(cls, h: float, k: float, T: float = 1.0) -> "SchemeGrid":
        n = int(round(1.0 / (h * np.pi))) - 1
        return cls(max(n, 1), k, T)


def semigroup_apply(t: float, x: np.ndarray) -> np.ndarray:
    """``S(t) x = e^{-tA} x``, mode by mode."""
    if t < 0:
        raise ValueError("t must be non-negative")
    x = np.asarray(x, dtype=float)
    lam = (np.arange(1, x.shape[-1] + 1) * np.pi) ** 2
    return np.exp(-lam * t) * x


def discrete_step_operator(grid: SchemeGrid, n_modes: int | None = None) -> np.ndarray:
    """Mode-wise factors of ``S_{h,k} = (I + kA_h)^{-1} P_h``."""
    n_modes = grid.n_retained if n_modes is None else n_modes
    lam = (np.arange(1, n_modes + 1) * np.pi) ** 2
    factors = 1.0 / (1.0 + grid.k * lam)
    factors[grid.n_retained :] = 0.0
    return factors


def _log_factors(grid: SchemeGrid, n_modes: int) -> np.ndarray:
    lam = (np.arange(1, n_modes + 1) * np.pi) ** 2
    return -np.log1p(grid.k * lam)


def _retained_power(grid: SchemeGrid, m: int, n_modes: int) -> np.ndarray:
    """Factors of ``S^m_{h,k}`` with the convention ``S^0_{h,k} = P_h``."""
    logs = _log_factors(grid, n_modes)
    out = np.exp(m * logs)
    out[grid.n_retained :] = 0.0
    return out


def error_symbol(grid: SchemeGrid, m: int, n_modes: int) -> np.ndarray:
    """Mode-wise symbol of ``E^m_{h,k} = S^m_{h,k} - S(t_m)``."""
    lam = (np.arange(1, n_modes + 1) * np.pi) ** 2
    return _retained_power(grid, m, n_modes) - np.exp(-lam * m * grid.k)


def smoothing_norms(
    grid: SchemeGrid,
    m: int,
    rho: float,
    n_modes: int = 4096,
    substeps: int = 32,
) -> dict[str, float]:
    """Operator norms ``‖A^{ρ/2}S^m_{h,k}‖``, ``‖E^m_{h,k}A^{ρ/2}‖`` and
    ``sup_{t∈(t_{m-1},t_m]} ‖Ẽ_{h,k}(t)A^{ρ/2}‖``.

    The supremum over modes is exact for the first ``n_modes`` modes; the
    supremum over ``t`` inside the step uses ``substeps`` equally spaced
    times.
    """
    if m < 1 or m > grid.M:
        raise ValueError(f"m must lie in 1..{grid.M}")
    lam = (np.arange(1, n_modes + 1) * np.pi) ** 2
    weight = lam ** (rho / 2.0)
    power = _retained_power(grid, m, n_modes)
    stepped = float(np.max(weight * power))
    error = float(np.max(weight * np.abs(error_symbol(grid, m, n_modes))))
    ts = grid.k * (m - 1 + np.arange(1, substeps + 1) / substeps)
    interp = np.abs(power[None, :] - np.exp(-np.outer(ts, lam)))
    return {
        "stepped": stepped,
        "error": error,
        "interpolant_error": float(np.max(weight[None, :] * interp)),
    }


def default_steps(M: int, n_first: int = 32) -> list[int]:
    """Steps checked for time-uniform norms: the first few, powers of two, and ``M``."""
    steps = set(range(1, min(M, n_first) + 1))
    p = 1
    while p <= M:
        steps.add(p)
        p *= 2
    steps.add(M)
    return sorted(steps)


def uniform_error_norm(
    grid: SchemeGrid, rho: float, n_modes: int = 4096, steps: Sequence[int] | None = None
) -> float:
    """``max_m ‖E^m_{h,k} A^{ρ/2}‖`` over ``steps`` (see :func:`default_steps`)."""
    lam = (np.arange(1, n_modes + 1) * np.pi) ** 2
    weight = lam ** (rho / 2.0)
    steps = default_steps(grid.M) if steps is None else steps
    return max(float(np.max(weight * np.abs(error_symbol(grid, m, n_modes)))) for m in steps)


def reference_solution(
    stream: JumpStream,
    x0: np.ndarray,
    eval_times: Sequence[float],
) -> np.ndarray:
    """Mild solution at ``eval_times`` for a finite jump stream, shape ``(len(times), J)``.

    ``X_j(t) = e^{-λ_j t} x0_j + Σ_{s_i ≤ t} e^{-λ_j (t-s_i)} mark_{ij} - drift_j (1 - e^{-λ_j t})/λ_j``.
    """
    if stream.marks is None:
        raise ValueError("the reference solution needs marks")
    n_modes = stream.marks.shape[1]
    x0 = _pad(x0, n_modes)
    lam = (np.arange(1, n_modes + 1) * np.pi) ** 2
    out = np.empty((len(eval_times), n_modes))
    for i, t in enumerate(eval_times):
        n = int(np.searchsorted(stream.times, t, side="right"))
        decay = np.exp(-np.outer(t - stream.times[:n], lam))
        out[i] = np.exp(-lam * t) * x0 + np.einsum("ij,ij->j", decay, stream.marks[:n])
        out[i] -= stream.drift * (-np.expm1(-lam * t)) / lam
    return out


def _pad(x: np.ndarray, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(x) >= n:
        return x[:n].copy()
    return np.concatenate([x, np.zeros(n - len(x))])


@dataclass
class SchemeTrajectory:
    """States ``X^0..X^M`` of the scheme, each with ``n_retained`` coefficients."""

    grid: SchemeGrid
    states: np.ndarray

    def at(self, t: float) -> np.ndarray:
        """Piecewise-constant interpolant ``X̃(t) = X^{⌊t/k⌋}``."""
        return self.states[self.grid.floor_index(t)]

    def to_csv(self, path: str | Path, n_coefficients: int = 8, norm_orders: Sequence[float] = (0.0, 1.0)) -> None:
        width = min(n_coefficients, self.states.shape[1])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time"] + [f"c{j}" for j in range(1, width + 1)] + [f"norm_H{r:g}" for r in norm_orders])
            for t, x in zip(self.grid.times, self.states):
                norms = [hdot_norm(x, r) for r in norm_orders]
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in x[:width]] + [repr(float(v)) for v in norms])


def run_scheme(
    x0: np.ndarray,
    grid: SchemeGrid,
    increments: np.ndarray,
    verify: bool = False,
    rtol: float = 1e-10,
) -> SchemeTrajectory:
    """Implicit Euler Galerkin recursion ``X^m = S_{h,k}(X^{m-1} + ΔL_m)``.

    ``X^0 = P_h x0``.  ``increments`` has shape ``(M, J)`` with ``J ≥ N``;
    only the first ``N`` coefficients enter.  With ``verify=True`` the
    result is compared with :func:`scheme_closed_sum`.
    """
    n = grid.n_retained
    increments = np.asarray(increments, dtype=float)
    if increments.shape[0] < grid.M:
        raise ValueError(f"need {grid.M} increments, got {increments.shape[0]}")
    factors = discrete_step_operator(grid)
    states = np.empty((grid.M + 1, n))
    states[0] = _pad(x0, n)
    for m in range(1, grid.M + 1):
        states[m] = factors * (states[m - 1] + increments[m - 1, :n])
    if verify:
        closed = scheme_closed_sum(x0, grid, increments)
        scale = max(float(np.max(np.abs(states))), 1e-300)
        if float(np.max(np.abs(closed - states))) > rtol * scale:
            raise RuntimeError("scheme recursion and closed sum disagree")
    return SchemeTrajectory(grid, states)


def scheme_closed_sum(x0: np.ndarray, grid: SchemeGrid, increments: np.ndarray) -> np.ndarray:
    """``X^m = S^m_{h,k} x0 + Σ_{j=1}^{m} S^{m-j+1}_{h,k} ΔL_j`` for every ``m``."""
    n = grid.n_retained
    logs = _log_factors(grid, n)
    x0 = _pad(x0, n)
    states = np.empty((grid.M + 1, n))
    states[0] = x0
    for m in range(1, grid.M + 1):
        powers = np.exp(np.outer(m - np.arange(1, m + 1) + 1, logs))
        states[m] = np.exp(m * logs) * x0 + np.einsum("ij,ij->j", powers, increments[:m, :n])
    return states


def scheme_from_events(
    stream: JumpStream,
    x0: np.ndarray,
    grid: SchemeGrid,
    eval_times: Sequence[float],
) -> np.ndarray:
    """Scheme interpolant ``X̃(t)`` driven by the increments of a jump stream.

    Uses the closed sum event by event: a jump in step ``(t_{l-1}, t_l]``
    enters ``X^m`` with factor ``r^{m-l+1}``, and the drift over steps
    ``1..m`` contributes a geometric series.  The cost does not depend on
    the number of time steps, so very small ``k`` is cheap.
    """
    if stream.marks is None:
        raise ValueError("the scheme needs marks")
    n = grid.n_retained
    logs = _log_factors(grid, n)
    r = np.exp(logs)
    x0 = _pad(x0, n)
    steps = step_indices(stream.times, grid.k)
    out = np.empty((len(eval_times), n))
    for i, t in enumerate(eval_times):
        m = grid.floor_index(t)
        active = steps <= m
        powers = np.exp(np.outer(m - steps[active] + 1, logs))
        value = np.exp(m * logs) * x0 + np.einsum("ij,ij->j", powers, stream.marks[active, :n])
        if np.any(stream.drift[:n]):
            # Σ_{l=1}^{m} r^{m-l+1} = r (1 - r^m) / (1 - r)
            geometric = r * (-np.expm1(m * logs)) / (1.0 - r)
            value -= grid.k * stream.drift[:n] * geometric
        out[i] = value
    return out


def holder_regularity_probe(
    model: LevyModel,
    x0: np.ndarray,
    gaps: Sequence[float],
    n_paths: int,
    seed: int,
    start: float = 0.0,
    moment: float = 1.3,
    focus: bool = True,
    include_noise: bool = True,
    threads: int = 1,
) -> dict[str, object]:
    """Fit the exponent of ``‖X(start+Δ) - X(start)‖_{L^p}`` against ``Δ``.

    Each path shares one jump stream across all gaps.  With ``focus=True``
    (subordinated model) the jump truncation adapts to the observation
    times.  Returns the gaps, moments and fitted slope.
    """
    gaps = np.asarray(sorted(gaps), dtype=float)
    if np.any(gaps <= 0):
        raise ValueError("gaps must be positive")
    horizon = start + float(gaps[-1])
    obs = [start] + [start + g for g in gaps]

    def one_chunk(paths: range) -> np.ndarray:
        out = np.empty((len(paths), len(gaps)))
        for row, p in enumerate(paths):
            rng = as_generator(seed, "holder", p)
            if include_noise:
                focus_times = [t for t in obs if t > 0] if focus else None
                stream = sample_jump_events(model, horizon, rng, focus_times=focus_times)
            else:
                stream = JumpStream(np.zeros(0), np.zeros(0), np.zeros((0, model.n_modes)), np.zeros(model.n_modes), horizon)
            states = reference_solution(stream, x0, obs)
            out[row] = np.sqrt(np.sum((states[1:] - states[0]) ** 2, axis=1))
        return out

    chunks = chunk_ranges(n_paths, max(1, threads) * 4)
    diffs = np.concatenate(ordered_map(one_chunk, chunks, threads), axis=0)
    moments = np.mean(diffs**moment, axis=0) ** (1.0 / moment)
    slope, intercept = np.polyfit(np.log(gaps), np.log(moments), 1)
    return {"gaps": gaps.tolist(), "moments": moments.tolist(), "slope": float(slope), "intercept": float(intercept)}
