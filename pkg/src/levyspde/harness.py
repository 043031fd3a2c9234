"""Strong and weak error experiments, slope fitting and rate reports.

Scheme and reference solution are driven by the same jump stream on every
path.  Both are evaluated through time-integration weights: for a time
measure ``ζ`` and a jump at time ``s`` the reference weight of mode ``j``
is ``∫ 1_{s≤t} e^{-λ_j (t-s)} ζ(dt)`` and the scheme weight is the same
integral of the piecewise-constant factors ``r_j^{m-l+1}``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .levy import (
    JumpStream,
    LevyModel,
    LevyWindow,
    SubordinatedQWiener,
    add_atom,
    events_to_configuration,
    sample_jump_events,
    step_indices,
)
from .measure import PointConfiguration
from .parallel import chunk_ranges, ordered_map
from .reports import SCHEMA_VERSION, IdentityReport, exact_report
from .rng import as_generator, stream as rng_stream
from .spde import SchemeGrid, default_steps, holder_regularity_probe, uniform_error_norm

MODE_BLOCK = 256
DECAY_CUTOFF = 60.0
MIN_LEVELS = 4


# ---------------------------------------------------------------- time measures


@dataclass(frozen=True)
class TimeMeasure:
    """A finite measure ``ζ`` on ``[0, T]``.

    ``kind`` is ``"atoms"`` (weighted point masses; a single unit atom is a
    point mass) or ``"uniform"`` (``density`` times Lebesgue measure on
    ``[start, end]``).
    """

    kind: str
    times: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    start: float = 0.0
    end: float = 0.0
    density: float = 1.0

    @classmethod
    def point(cls, tau: float) -> "TimeMeasure":
        return cls("atoms", (float(tau),), (1.0,))

    @classmethod
    def atoms(cls, times: Sequence[float], weights: Sequence[float] | None = None) -> "TimeMeasure":
        weights = [1.0] * len(times) if weights is None else weights
        if len(weights) != len(times):
            raise ValueError("times and weights differ in length")
        return cls("atoms", tuple(float(t) for t in times), tuple(float(w) for w in weights))

    @classmethod
    def uniform(cls, start: float, end: float, density: float = 1.0) -> "TimeMeasure":
        if not end > start >= 0.0:
            raise ValueError("need 0 <= start < end")
        return cls("uniform", start=float(start), end=float(end), density=float(density))

    @property
    def total(self) -> float:
        if self.kind == "atoms":
            return float(sum(self.weights))
        return self.density * (self.end - self.start)

    @property
    def latest(self) -> float:
        return max(self.times) if self.kind == "atoms" else self.end

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "atoms":
            return {"kind": "atoms", "times": list(self.times), "weights": list(self.weights)}
        return {"kind": "uniform", "start": self.start, "end": self.end, "density": self.density}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TimeMeasure":
        kind = data["kind"]
        if kind == "point":
            return cls.point(data["time"])
        if kind == "atoms":
            return cls.atoms(data["times"], data.get("weights"))
        if kind == "uniform":
            return cls.uniform(data["start"], data["end"], data.get("density", 1.0))
        raise ValueError(f"unknown time measure kind {kind!r}")


def reference_weights(zeta: TimeMeasure, source_times: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """``∫ 1_{s≤t} e^{-λ(t-s)} ζ(dt)`` for each source time ``s`` and eigenvalue ``λ``."""
    s = np.asarray(source_times, dtype=float)[:, None]
    lam = np.asarray(lam, dtype=float)[None, :]
    out = np.zeros((s.shape[0], lam.shape[1]))
    if zeta.kind == "atoms":
        for tau, w in zip(zeta.times, zeta.weights):
            lag = tau - s
            out += np.where(lag >= 0, w * np.exp(-lam * np.maximum(lag, 0.0)), 0.0)
        return out
    a, b = zeta.start, zeta.end
    lower = np.maximum(a, s)
    inside = s < b
    upper_decay = np.exp(-lam * np.maximum(b - s, 0.0))
    lower_decay = np.exp(-lam * np.maximum(lower - s, 0.0))
    out = np.where(inside, zeta.density * (lower_decay - upper_decay) / lam, 0.0)
    return out


def _geometric_sum(logs: np.ndarray, first: np.ndarray, last: np.ndarray) -> np.ndarray:
    """``Σ_{n=first}^{last} r^n`` with ``r = exp(logs)``; zero when ``last < first``."""
    count = last - first + 1
    head = np.exp(first * logs)
    # (1 - r^count) / (1 - r), stable for r close to 1.
    ratio = np.where(logs < 0, np.expm1(count * logs) / np.expm1(logs), count)
    return np.where(count > 0, head * ratio, 0.0)


def scheme_weights(
    zeta: TimeMeasure, grid: SchemeGrid, first_steps: np.ndarray, offsets: np.ndarray
) -> np.ndarray:
    """``∫ Σ_{m≥first} 1_{m(t)=m} r^{m-offset} ζ(dt)`` per source and retained mode.

    ``m(t) = ⌊t/k⌋`` indexes the piecewise-constant interpolant.  A jump in
    step ``l`` uses ``first = l, offset = l-1``; the initial value uses
    ``first = offset = 0``.
    """
    n = grid.n_retained
    lam = (np.arange(1, n + 1) * np.pi) ** 2
    logs = -np.log1p(grid.k * lam)[None, :]
    first = np.asarray(first_steps, dtype=np.int64)[:, None]
    offset = np.asarray(offsets, dtype=np.int64)[:, None]
    out = np.zeros((first.shape[0], n))
    if zeta.kind == "atoms":
        for tau, w in zip(zeta.times, zeta.weights):
            m = grid.floor_index(tau)
            active = m >= first
            out += np.where(active, w * np.exp(np.where(active, m - offset, 0) * logs), 0.0)
        return out
    k = grid.k
    a, b = zeta.start, zeta.end
    m_a, m_b = grid.floor_index(a), grid.floor_index(b)

    def overlap(m: np.ndarray) -> np.ndarray:
        left = np.maximum(a, m * k)
        right = np.where(m >= grid.M, b, np.minimum(b, (m + 1) * k))
        return np.maximum(right - left, 0.0)

    m0 = np.maximum(first, m_a)
    single = m0 == m_b
    head = overlap(m0) * np.exp((m0 - offset) * logs)
    tail = overlap(np.full_like(m0, m_b)) * np.exp(np.maximum(m_b - offset, 0) * logs)
    interior = k * _geometric_sum(logs, m0 + 1 - offset, m_b - 1 - offset)
    total = np.where(single, head, head + interior + tail)
    out = np.where(m0 <= m_b, zeta.density * total, 0.0)
    return out


def _mode_blocks(n_modes: int, block: int = MODE_BLOCK) -> list[slice]:
    return [slice(j, min(j + block, n_modes)) for j in range(0, n_modes, block)]


def reference_integral(stream: JumpStream, x0: np.ndarray, zeta: TimeMeasure) -> np.ndarray:
    """``∫ X(t) ζ(dt)`` for the jump-exact mild solution, all ``J`` modes.

    Mode blocks skip jumps whose kernel is below ``e^{-60}`` when ``ζ``
    consists of atoms.
    """
    marks = stream.marks
    if marks is None:
        raise ValueError("the reference solution needs marks")
    n_modes = marks.shape[1]
    lam = (np.arange(1, n_modes + 1) * np.pi) ** 2
    x0 = _pad(x0, n_modes)
    out = reference_weights(zeta, np.zeros(1), lam)[0] * x0
    if np.any(stream.drift):
        out -= stream.drift * (zeta.total - reference_weights(zeta, np.zeros(1), lam)[0]) / lam
    times = stream.times
    for blk in _mode_blocks(n_modes):
        lo = _first_relevant(times, zeta, lam[blk.start])
        if lo >= len(times):
            continue
        w = reference_weights(zeta, times[lo:], lam[blk])
        out[blk] += np.einsum("ij,ij->j", w, marks[lo:, blk])
    return out


def _first_relevant(times: np.ndarray, zeta: TimeMeasure, smallest_lambda: float) -> int:
    if zeta.kind != "atoms":
        return 0
    earliest = min(zeta.times) - DECAY_CUTOFF / smallest_lambda
    return int(np.searchsorted(times, earliest, side="left"))


def scheme_integral(stream: JumpStream, x0: np.ndarray, grid: SchemeGrid, zeta: TimeMeasure) -> np.ndarray:
    """``∫ X̃_{h,k}(t) ζ(dt)`` for the scheme driven by the stream's increments."""
    marks = stream.marks
    if marks is None:
        raise ValueError("the scheme needs marks")
    n = grid.n_retained
    zero = np.zeros(1, dtype=np.int64)
    initial = scheme_weights(zeta, grid, zero, zero)[0]
    out = initial * _pad(x0, n)
    drift = stream.drift[:n]
    if np.any(drift):
        lam = (np.arange(1, n + 1) * np.pi) ** 2
        r = 1.0 / (1.0 + grid.k * lam)
        out -= grid.k * drift * r / (1.0 - r) * (zeta.total - initial)
    if len(stream):
        steps = step_indices(stream.times, grid.k)
        w = scheme_weights(zeta, grid, steps, steps - 1)
        out += np.einsum("ij,ij->j", w, marks[:, :n])
    return out


def _pad(x: np.ndarray, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(x) >= n:
        return x[:n].copy()
    return np.concatenate([x, np.zeros(n - len(x))])


def _error_norm(scheme: np.ndarray, reference: np.ndarray) -> float:
    n = len(scheme)
    diff = reference.copy()
    diff[:n] -= scheme
    return float(np.sqrt(np.dot(diff, diff)))


# ---------------------------------------------------------------- functionals


def _sqrt_one_plus_square_minus_one(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y * y / (np.sqrt(1.0 + y * y) + 1.0)


@dataclass(frozen=True)
class TestFunctional:
    """``f(x) = φ(⟨∫ x(t) ζ(dt), v⟩)``.

    ``kind="linear"`` uses ``φ(y) = y``; ``kind="bounded_smooth"`` uses
    ``φ(y) = √(1+y²) - 1``, whose first and second derivatives are bounded;
    ``kind="constant"`` uses ``φ ≡ 0`` as a sanity baseline.
    """

    __test__ = False  # not a pytest class

    kind: str
    direction: tuple[float, ...]
    zeta: TimeMeasure

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "bounded_smooth", "constant"):
            raise ValueError(f"unknown functional kind {self.kind!r}")

    @property
    def v(self) -> np.ndarray:
        return np.asarray(self.direction, dtype=float)

    def phi(self, y: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return np.asarray(y, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(np.asarray(y, dtype=float))
        return _sqrt_one_plus_square_minus_one(y)

    def project(self, x: np.ndarray) -> float:
        v = self.v
        n = min(len(v), len(x))
        return float(np.dot(v[:n], x[:n]))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "n_direction": len(self.direction), "zeta": self.zeta.to_dict()}


def local_average_direction(center: float, width: float, n_modes: int) -> np.ndarray:
    """Coefficients of ``1_D/|D|`` for ``D = [center - width/2, center + width/2]``."""
    j = np.arange(1, n_modes + 1) * np.pi
    a, b = center - width / 2.0, center + width / 2.0
    return math.sqrt(2.0) * (np.cos(j * a) - np.cos(j * b)) / (j * width)


# ---------------------------------------------------------------- slope fits and reports


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float


def fit_slope(levels: Sequence[float], errors: Sequence[float]) -> SlopeFit:
    """Ordinary least squares of ``log error`` on ``log level``.

    ``residual`` is the root-mean-square residual in log space.
    """
    levels = np.asarray(levels, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(levels) < MIN_LEVELS:
        raise ValueError(f"a slope fit needs at least {MIN_LEVELS} levels, got {len(levels)}")
    if not (np.all(levels > 0) and np.all(errors > 0) and np.all(np.isfinite(levels)) and np.all(np.isfinite(errors))):
        raise ValueError("levels and errors must be positive and finite")
    x, y = np.log(levels), np.log(errors)
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (slope * x + intercept)
    return SlopeFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))))


@dataclass
class LevelResult:
    h: float
    k: float
    n_retained: int
    error: float
    stderr: float
    n_paths: int
    seed: int
    flags: list[str] = field(default_factory=list)


@dataclass
class RateReport:
    """Errors per discretisation level plus a fitted log-log slope.

    ``sweep`` names the varied parameter (``"h"``, ``"k"`` or ``"gap"``).
    """

    name: str
    sweep: str
    levels: list[LevelResult]
    fit: SlopeFit
    parameters: dict[str, Any] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)
    wall_clock: float = 0.0
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def slope(self) -> float:
        return self.fit.slope

    @property
    def flags(self) -> list[str]:
        return sorted({f for lvl in self.levels for f in lvl.flags})

    def level_values(self) -> list[float]:
        """The swept parameter per level; gap sweeps store the gap in ``k``."""
        return [lvl.h if self.sweep == "h" else lvl.k for lvl in self.levels]

    def to_dict(self, include_timing: bool = True) -> dict[str, Any]:
        data = {
            "schema_version": SCHEMA_VERSION,
            "kind": "rate",
            "name": self.name,
            "sweep": self.sweep,
            "parameters": _jsonable(self.parameters),
            "seeds": list(self.seeds),
            "levels": [
                {
                    "h": lvl.h,
                    "k": lvl.k,
                    "n_retained": lvl.n_retained,
                    "error": lvl.error,
                    "stderr": lvl.stderr,
                    "n_paths": lvl.n_paths,
                    "seed": lvl.seed,
                    "flags": list(lvl.flags),
                }
                for lvl in self.levels
            ],
            "fit": {"slope": self.fit.slope, "intercept": self.fit.intercept, "residual": self.fit.residual},
            "flags": self.flags,
            "diagnostics": _jsonable(self.diagnostics),
        }
        if include_timing:
            data["wall_clock_seconds"] = self.wall_clock
        return data

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["level_h", "level_k", "error", "stderr", "n_paths", "seed"])
        for lvl in self.levels:
            writer.writerow([repr(lvl.h), repr(lvl.k), repr(lvl.error), repr(lvl.stderr), lvl.n_paths, lvl.seed])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RateReport":
        levels = [
            LevelResult(
                h=d["h"], k=d["k"], n_retained=d["n_retained"], error=d["error"], stderr=d["stderr"],
                n_paths=d["n_paths"], seed=d["seed"], flags=list(d.get("flags", [])),
            )
            for d in data["levels"]
        ]
        fit = SlopeFit(data["fit"]["slope"], data["fit"]["intercept"], data["fit"]["residual"])
        return cls(
            name=data["name"], sweep=data["sweep"], levels=levels, fit=fit,
            parameters=data.get("parameters", {}), seeds=list(data.get("seeds", [])),
            wall_clock=data.get("wall_clock_seconds", 0.0), diagnostics=data.get("diagnostics", {}),
        )

    def write(self, directory: str | Path, stem: str | None = None, include_timing: bool = True) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or self.name
        json_path = directory / f"{stem}.json"
        csv_path = directory / f"{stem}.csv"
        json_path.write_text(self.to_json(include_timing) + "\n")
        csv_path.write_text(self.to_csv())
        return [json_path, csv_path]


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def _sweep_axis(levels: Sequence[SchemeGrid]) -> str:
    hs = {g.n_retained for g in levels}
    ks = {g.k for g in levels}
    if len(hs) > 1 and len(ks) == 1:
        return "h"
    if len(ks) > 1 and len(hs) == 1:
        return "k"
    raise ValueError("levels must vary exactly one of h and k")


def _level_values(levels: Sequence[SchemeGrid], axis: str) -> list[float]:
    return [g.h if axis == "h" else g.k for g in levels]


def h_sweep(n_retained: Sequence[int] = (8, 16, 32, 64, 128), k: float = 2.0**-30, T: float = 1.0) -> list[SchemeGrid]:
    return [SchemeGrid(n, k, T) for n in n_retained]


def k_sweep(
    steps: Sequence[float] = tuple(2.0**-i for i in range(4, 9)), n_retained: int = 1024, T: float = 1.0
) -> list[SchemeGrid]:
    return [SchemeGrid(n_retained, k, T) for k in steps]


# ---------------------------------------------------------------- strong error


def _moment_summary(samples: np.ndarray, p: float) -> tuple[float, float, float]:
    """``(E|e|^p)^{1/p}``, its delta-method standard error, and the relative
    standard error of the ``p``-th power mean."""
    powers = samples**p
    n = len(powers)
    mean = float(powers.mean())
    se_mean = float(powers.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    value = mean ** (1.0 / p)
    se = value * se_mean / (p * mean) if mean > 0 else 0.0
    rel = se_mean / mean if mean > 0 else 0.0
    return value, se, rel


def strong_error(
    model: LevyModel,
    x0: np.ndarray,
    levels: Sequence[SchemeGrid],
    moment: float,
    n_paths: int,
    seed: int,
    obs_times: Sequence[float] | None = None,
    focus: bool = True,
    include_noise: bool = True,
    threads: int = 1,
    name: str = "strong",
    heavy_tail_ratio: float = 0.3,
) -> RateReport:
    """``max_τ ‖X̃_{h,k}(τ) - X(τ)‖_{L^p}`` over observation times, per level.

    ``obs_times`` defaults to ``{T/2, T}``; they must be grid points of every
    level.  With ``focus=True`` the subordinated model uses the
    observation-adapted jump truncation.  A level is flagged ``heavy-tail``
    when the standard error of the ``p``-th power mean exceeds
    ``heavy_tail_ratio`` of its value.
    """
    started = time.perf_counter()
    axis = _sweep_axis(levels)
    T = levels[0].T
    if not 1.0 <= moment < getattr(model, "alpha", 2.0):
        raise ValueError("the moment must lie in [1, alpha)")
    obs = tuple(float(t) for t in (obs_times if obs_times is not None else (T / 2.0, T)))
    use_focus = focus and isinstance(model, SubordinatedQWiener)
    zetas = [TimeMeasure.point(t) for t in obs]
    max_retained = max(g.n_retained for g in levels)

    def one_chunk(paths: range) -> np.ndarray:
        out = np.empty((len(paths), len(levels), len(obs)))
        for row, p in enumerate(paths):
            rng = rng_stream(seed, "strong", p)
            if include_noise:
                stream = sample_jump_events(
                    model, T, rng, focus_times=obs if use_focus else None, mark_floor=max_retained
                )
            else:
                stream = _empty_stream(model, T)
            refs = [reference_integral(stream, x0, z) for z in zetas]
            for i, grid in enumerate(levels):
                for o, z in enumerate(zetas):
                    out[row, i, o] = _error_norm(scheme_integral(stream, x0, grid, z), refs[o])
        return out

    chunks = chunk_ranges(n_paths, max(1, threads) * 4)
    errors = np.concatenate(ordered_map(one_chunk, chunks, threads), axis=0)
    results = []
    for i, grid in enumerate(levels):
        best = None
        for o in range(len(obs)):
            value, se, rel = _moment_summary(errors[:, i, o], moment)
            if best is None or value > best[0]:
                best = (value, se, rel)
        value, se, rel = best
        flags = ["heavy-tail"] if rel > heavy_tail_ratio else []
        results.append(LevelResult(grid.h, grid.k, grid.n_retained, value, se, n_paths, seed, flags))
    fit = fit_slope(_level_values(levels, axis), [r.error for r in results])
    return RateReport(
        name=name,
        sweep=axis,
        levels=results,
        fit=fit,
        parameters={
            "model": _model_dict(model),
            "moment": moment,
            "obs_times": list(obs),
            "focus_truncation": use_focus,
            "include_noise": include_noise,
            "x0_norm_H0": float(np.linalg.norm(x0)),
        },
        seeds=[seed],
        wall_clock=time.perf_counter() - started,
    )


def _empty_stream(model: LevyModel, T: float) -> JumpStream:
    return JumpStream(np.zeros(0), np.zeros(0), np.zeros((0, model.n_modes)), np.zeros(model.n_modes), T)


def _model_dict(model: LevyModel) -> dict[str, Any]:
    data = {"kind": model.kind}
    data.update({k: getattr(model, k) for k in model.__dataclass_fields__})
    return data


# ---------------------------------------------------------------- weak error

# Trapezoid nodes in x = log t for √a = (4π)^{-1/2} ∫_0^∞ (1 - e^{-ta}) t^{-3/2} dt.
_LOG_T = np.arange(-60.0, 4.0 + 1e-9, 0.05)
_T_NODES = np.exp(_LOG_T)
_T_WEIGHTS = 0.05 * np.exp(-_T_NODES) * _T_NODES ** (-0.5) / (2.0 * math.sqrt(math.pi))


def gaussian_sqrt_difference(mu_a: np.ndarray, var_a: np.ndarray, mu_b: np.ndarray, var_b: np.ndarray) -> np.ndarray:
    """``E√(1+Y_a²) - E√(1+Y_b²)`` for ``Y ~ N(μ, V)``, accurate when ``a ≈ b``.

    Uses ``E e^{-tY²} = (1+2tV)^{-1/2} exp(-tμ²/(1+2tV))`` inside the integral
    representation of the square root, and forms the difference of the two
    Laplace transforms before integrating so that nearly equal inputs do not
    cancel catastrophically.
    """
    mu_a, var_a, mu_b, var_b = (np.asarray(v, dtype=float)[..., None] for v in (mu_a, var_a, mu_b, var_b))
    t = _T_NODES
    log_b = -0.5 * np.log1p(2.0 * t * var_b) - t * mu_b**2 / (1.0 + 2.0 * t * var_b)
    # log L_a - log L_b, written so that equal inputs give exactly zero.
    dv = var_a - var_b
    d_log = -0.5 * np.log1p(2.0 * t * dv / (1.0 + 2.0 * t * var_b))
    d_log -= t * (mu_a**2 / (1.0 + 2.0 * t * var_a) - mu_b**2 / (1.0 + 2.0 * t * var_b))
    diff_laplace = np.exp(log_b) * np.expm1(d_log)
    return -(diff_laplace * _T_WEIGHTS).sum(axis=-1)


def gaussian_sqrt_mean(mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    """``E[√(1+Y²) - 1]`` for ``Y ~ N(μ, V)``."""
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    return gaussian_sqrt_difference(mu, var, np.zeros_like(mu), np.zeros_like(var))


def linear_weak_error(x0: np.ndarray, functional: TestFunctional, grid: SchemeGrid, n_modes: int) -> float:
    """``|⟨∫ (X̃ - X) ζ(dt), v⟩|`` for the mean, which is noise-free."""
    lam = (np.arange(1, n_modes + 1) * np.pi) ** 2
    zero = np.zeros(1, dtype=np.int64)
    ref = reference_weights(functional.zeta, np.zeros(1), lam)[0] * _pad(x0, n_modes)
    sch = scheme_weights(functional.zeta, grid, zero, zero)[0] * _pad(x0, grid.n_retained)
    diff = -ref
    diff[: grid.n_retained] += sch
    return abs(functional.project(diff))


def uniform_linear_weak_error(x0: np.ndarray, direction: np.ndarray, grid: SchemeGrid, steps: Sequence[int] | None = None) -> float:
    """``max_m |⟨E^m_{h,k} x0, v⟩|`` over the steps of :func:`default_steps`."""
    n_modes = len(x0)
    steps = default_steps(grid.M) if steps is None else steps
    worst = 0.0
    for m in steps:
        zeta = TimeMeasure.point(m * grid.k)
        f = TestFunctional("linear", tuple(direction), zeta)
        worst = max(worst, linear_weak_error(x0, f, grid, n_modes))
    return worst


def weak_error(
    model: LevyModel,
    x0: np.ndarray,
    functional: TestFunctional,
    levels: Sequence[SchemeGrid],
    n_paths: int,
    seed: int,
    estimator: str = "conditional",
    threads: int = 1,
    name: str = "weak",
    focus: bool = True,
    extra_points: int = 8,
    proposal_rate: float = 0.2,
    min_lag: float = 1e-8,
) -> RateReport:
    """``|E f(X̃_{h,k}) - E f(X)|`` per level with shared noise on every path.

    ``estimator="coupled"`` averages ``f(X̃) - f(X)`` over paths.
    ``estimator="conditional"`` (subordinated model) integrates out the
    Gaussian marks given the subordinator jumps: conditionally on those,
    both projections are Gaussian and the difference of expectations is
    computed by quadrature.  ``estimator="mecke"`` additionally rewrites the
    variance-driven part of the difference as a sum over jumps and applies
    the Mecke formula, so each path carries ``extra_points`` importance
    sampled jumps concentrated where the weak error lives.  All three
    estimate the same quantity.  Linear functionals need no sampling at all.
    """
    started = time.perf_counter()
    axis = _sweep_axis(levels)
    T = levels[0].T
    n_modes = model.n_modes
    v = _pad(functional.v, n_modes)
    diagnostics: dict[str, Any] = {}
    if functional.kind == "linear":
        values = [linear_weak_error(x0, functional, g, n_modes) for g in levels]
        results = [LevelResult(g.h, g.k, g.n_retained, e, 0.0, 0, seed) for g, e in zip(levels, values)]
        fit = fit_slope(_level_values(levels, axis), values)
        return RateReport(name, axis, results, fit, {"model": _model_dict(model), "functional": functional.to_dict(), "estimator": "exact"}, [seed], time.perf_counter() - started)
    zeta = functional.zeta
    focus_times = sorted(set(zeta.times)) if zeta.kind == "atoms" else None
    use_focus = focus and isinstance(model, SubordinatedQWiener) and focus_times is not None
    if estimator in ("conditional", "mecke") and not isinstance(model, SubordinatedQWiener):
        raise ValueError(f"the {estimator} estimator needs the subordinated model")
    if estimator == "mecke" and not (zeta.kind == "atoms" and len(zeta.times) == 1 and use_focus):
        raise ValueError("the mecke estimator needs a single point mass and focus truncation")
    if estimator not in ("conditional", "coupled", "mecke"):
        raise ValueError(f"unknown estimator {estimator!r}")
    lam = (np.arange(1, n_modes + 1) * np.pi) ** 2
    zero = np.zeros(1, dtype=np.int64)
    x0p = _pad(x0, n_modes)
    mu_ref = float(np.dot(v, reference_weights(zeta, np.zeros(1), lam)[0] * x0p))
    mu_sch = [
        float(np.dot(v[: g.n_retained], scheme_weights(zeta, g, zero, zero)[0] * x0p[: g.n_retained])) for g in levels
    ]

    def conditional_chunk(paths: range) -> tuple[np.ndarray, np.ndarray]:
        vq = v * v * model.q
        var_ref = np.empty(len(paths))
        var_sch = np.empty((len(paths), len(levels)))
        for row, p in enumerate(paths):
            rng = rng_stream(seed, "weak", p)
            stream = sample_jump_events(model, T, rng, focus_times=focus_times if use_focus else None, with_marks=False)
            var_ref[row] = float(np.dot(stream.sizes, _sq_reference_sum(stream.times, zeta, lam, vq)))
            for i, g in enumerate(levels):
                st = step_indices(stream.times, g.k)
                w_s = scheme_weights(zeta, g, st, st - 1)
                var_sch[row, i] = float(np.dot(stream.sizes, (w_s * w_s) @ vq[: g.n_retained]))
        return var_ref, var_sch

    def coupled_chunk(paths: range) -> tuple[np.ndarray, np.ndarray]:
        ref_vals = np.empty(len(paths))
        diffs = np.empty((len(paths), len(levels)))
        for row, p in enumerate(paths):
            rng = rng_stream(seed, "weak", p)
            stream = sample_jump_events(model, T, rng, focus_times=focus_times if use_focus else None)
            y_ref = functional.project(reference_integral(stream, x0, zeta))
            ref_vals[row] = y_ref
            for i, g in enumerate(levels):
                y = functional.project(scheme_integral(stream, x0, g, zeta))
                diffs[row, i] = functional.phi(y) - functional.phi(y_ref)
        return ref_vals, diffs

    def mecke_chunk(paths: range) -> np.ndarray:
        # Mean shift is averaged directly; the variance shift is a sum over jumps, so Mecke applies.
        vq = v * v * model.q
        tau = zeta.times[0]
        g_half = model.alpha_half
        log_span = math.log(tau / min_lag)
        out = np.empty((len(paths), len(levels)))
        for row, p in enumerate(paths):
            rng = rng_stream(seed, "weak", p)
            stream = sample_jump_events(model, T, rng, focus_times=[tau], min_lag=min_lag, with_marks=False)
            var_ref = float(np.dot(stream.sizes, _sq_reference_sum(stream.times, zeta, lam, vq)))
            var_sch = []
            for g in levels:
                st = step_indices(stream.times, g.k)
                w_s = scheme_weights(zeta, g, st, st - 1)
                var_sch.append(float(np.dot(stream.sizes, (w_s * w_s) @ vq[: g.n_retained])))
            extra = rng_stream(seed, "weak-extra", p)
            lags = min_lag * np.exp(extra.random(extra_points) * log_span)
            times = tau - lags
            w_ref = _sq_reference_sum(times, zeta, lam, vq)
            centres = -np.log(np.maximum(w_ref, 1e-300))
            log_sizes = centres + extra.laplace(0.0, 1.0 / proposal_rate, extra_points)
            sizes = np.exp(log_sizes)
            thresholds = model.jump_threshold * lags ** (1.0 / g_half)
            density_nu = np.where(sizes > thresholds, model.levy_constant * sizes ** (-1.0 - g_half), 0.0)
            density_prop = (1.0 / (lags * log_span)) * (0.5 * proposal_rate) * np.exp(
                -proposal_rate * np.abs(log_sizes - centres)
            ) / sizes
            weights = density_nu / density_prop
            for i, g in enumerate(levels):
                st = step_indices(times, g.k)
                w_s = scheme_weights(zeta, g, st, st - 1)
                w_sch = (w_s * w_s) @ vq[: g.n_retained]
                base = float(gaussian_sqrt_difference(mu_sch[i], var_ref, mu_ref, var_ref))
                a = w_sch - w_ref
                va = var_ref + sizes * w_ref
                vb = var_sch[i] + sizes * w_sch
                q = _divided_difference(mu_sch[i], vb, va)
                out[row, i] = base + float(np.mean(weights * sizes * a * q))
        return out

    chunks = chunk_ranges(n_paths, max(1, threads) * 4)
    results = []
    if estimator == "mecke":
        samples_all = np.concatenate(ordered_map(mecke_chunk, chunks, threads), axis=0)
        for i, g in enumerate(levels):
            samples = np.zeros(n_paths) if functional.kind == "constant" else samples_all[:, i]
            results.append(_weak_level(g, samples, n_paths, seed))
        diagnostics["extra_points"] = extra_points
        diagnostics["proposal_rate"] = proposal_rate
    elif estimator == "conditional":
        parts = ordered_map(conditional_chunk, chunks, threads)
        var_ref = np.concatenate([a for a, _ in parts])
        var_sch = np.concatenate([b for _, b in parts], axis=0)
        for i, g in enumerate(levels):
            if functional.kind == "constant":
                samples = np.zeros(n_paths)
            else:
                samples = gaussian_sqrt_difference(
                    np.full(n_paths, mu_sch[i]), var_sch[:, i], np.full(n_paths, mu_ref), var_ref
                )
            results.append(_weak_level(g, samples, n_paths, seed))
        diagnostics["median_reference_variance"] = float(np.median(var_ref))
    else:
        parts = ordered_map(coupled_chunk, chunks, threads)
        diffs = np.concatenate([b for _, b in parts], axis=0)
        for i, g in enumerate(levels):
            results.append(_weak_level(g, diffs[:, i], n_paths, seed))
    values = [max(abs(r.error), 1e-300) for r in results]
    fit = fit_slope(_level_values(levels, axis), values)
    return RateReport(
        name=name,
        sweep=axis,
        levels=results,
        fit=fit,
        parameters={
            "model": _model_dict(model),
            "functional": functional.to_dict(),
            "estimator": estimator,
            "focus_truncation": use_focus,
        },
        seeds=[seed],
        wall_clock=time.perf_counter() - started,
        diagnostics=diagnostics,
    )


def _sq_reference_sum(times: np.ndarray, zeta: TimeMeasure, lam: np.ndarray, vq: np.ndarray) -> np.ndarray:
    """``Σ_j v_j² q_j w_j(s)²`` per source time, with the decay cutoff per mode block."""
    out = np.zeros(len(times))
    order = np.argsort(times, kind="stable")
    sorted_times = times[order]
    acc = np.zeros(len(times))
    for blk in _mode_blocks(len(lam)):
        lo = _first_relevant(sorted_times, zeta, lam[blk.start])
        if lo < len(sorted_times):
            w = reference_weights(zeta, sorted_times[lo:], lam[blk])
            acc[lo:] += (w * w) @ vq[blk]
    out[order] = acc
    return out


def _divided_difference(mu: float, var_a: np.ndarray, var_b: np.ndarray) -> np.ndarray:
    """``(g(μ, V_a) - g(μ, V_b)) / (V_a - V_b)`` for ``g(μ,V) = E√(1+Y²)``, ``Y ~ N(μ,V)``."""
    var_a = np.asarray(var_a, dtype=float)
    var_b = np.asarray(var_b, dtype=float)
    gap = var_a - var_b
    small = np.abs(gap) <= 1e-9 * (1.0 + np.abs(var_b))
    step = 1e-6 * (1.0 + np.abs(var_b))
    safe_gap = np.where(small, step, gap)
    top = np.where(small, var_b + step, var_a)
    mu_arr = np.full_like(var_b, mu)
    return gaussian_sqrt_difference(mu_arr, top, mu_arr, var_b) / safe_gap


def _weak_level(grid: SchemeGrid, samples: np.ndarray, n_paths: int, seed: int) -> LevelResult:
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.inf
    flags = []
    if abs(mean) < 2.0 * se:
        flags.append("unresolved")
    return LevelResult(grid.h, grid.k, grid.n_retained, abs(mean), se, n_paths, seed, flags)


# ---------------------------------------------------------------- deterministic sweeps


def smoothing_sweep(sigma: float, axis: str, n_modes: int = 4096, name: str | None = None) -> RateReport:
    """Slope of ``max_m ‖E^m_{h,k} A^{-σ/2}‖`` in ``h`` (tiny ``k``) or ``k`` (tiny ``h``)."""
    started = time.perf_counter()
    if axis == "h":
        levels = h_sweep(k=1e-9)
        steps = list(range(1, 33))
    elif axis == "k":
        levels = k_sweep(n_retained=n_modes - 1)
        steps = None
    else:
        raise ValueError("axis must be 'h' or 'k'")
    values = [uniform_error_norm(g, -sigma, n_modes, steps) for g in levels]
    results = [LevelResult(g.h, g.k, g.n_retained, v, 0.0, 0, 0) for g, v in zip(levels, values)]
    fit = fit_slope(_level_values(levels, axis), values)
    return RateReport(
        name or f"smoothing-sigma{sigma:g}-{axis}",
        axis,
        results,
        fit,
        {"sigma": sigma, "n_modes": n_modes, "norm": "max over steps of ||E^m A^(-sigma/2)||"},
        [],
        time.perf_counter() - started,
    )


def weak_linear_sweep(
    axis: str,
    x0_decay: float = 2.31,
    direction_decay: float = 0.51,
    n_modes: int = 4096,
    name: str | None = None,
) -> RateReport:
    """Deterministic weak sweep ``max_m |⟨E^m_{h,k} x0, v⟩|``.

    ``x0_j = j^{-x0_decay}`` lies in ``Ḣ^ρ`` for ``ρ < x0_decay - 1/2`` and
    ``v_j = j^{-direction_decay}`` in ``H``; the defaults give
    ``x0 ∈ Ḣ^{1.8}``.
    """
    started = time.perf_counter()
    j = np.arange(1, n_modes + 1, dtype=float)
    x0 = j**-x0_decay
    v = j**-direction_decay
    if axis == "h":
        levels = h_sweep(k=1e-9)
        steps = list(range(1, 33))
    elif axis == "k":
        levels = k_sweep(n_retained=n_modes - 1)
        steps = None
    else:
        raise ValueError("axis must be 'h' or 'k'")
    values = [uniform_linear_weak_error(x0, v, g, steps) for g in levels]
    results = [LevelResult(g.h, g.k, g.n_retained, e, 0.0, 0, 0) for g, e in zip(levels, values)]
    fit = fit_slope(_level_values(levels, axis), values)
    return RateReport(
        name or f"weak-linear-{axis}",
        axis,
        results,
        fit,
        {"x0_decay": x0_decay, "direction_decay": direction_decay, "n_modes": n_modes},
        [],
        time.perf_counter() - started,
    )


# ---------------------------------------------------------------- Malliavin derivative of time integrals


def _integral_functional(x0: np.ndarray, zeta: TimeMeasure, drift: np.ndarray, horizon: float):
    def value(eta: PointConfiguration) -> np.ndarray:
        pts = [p for p in eta.points()]
        times = np.array([p[0] for p in pts])
        marks = np.array([p[1:] for p in pts]).reshape(len(pts), len(drift))
        stream = JumpStream(times, np.ones(len(pts)), marks, drift, horizon)
        return reference_integral(stream, x0, zeta)

    return value


def time_integral_derivative_check(
    model: LevyModel,
    zeta: TimeMeasure,
    probe: tuple[float, Sequence[float]],
    seed: int | np.random.Generator,
    x0: np.ndarray | None = None,
    horizon: float = 1.0,
) -> IdentityReport:
    """Check ``D_{s,x} ∫ X(t) ζ(dt) = ∫ 1_{s≤t} S(t-s) x ζ(dt)`` on one path."""
    rng = as_generator(seed, "time-integral")
    window = LevyWindow(model, horizon)
    stream = sample_jump_events(model, horizon, rng)
    eta = events_to_configuration(stream, window)
    x0 = np.zeros(model.n_modes) if x0 is None else np.asarray(x0, dtype=float)
    s, x = probe
    x = np.asarray(x, dtype=float)
    functional = _integral_functional(x0, zeta, stream.drift, horizon)
    base = functional(eta)
    lhs = functional(add_atom(eta, (float(s),) + tuple(float(v) for v in x))) - base
    lam = (np.arange(1, model.n_modes + 1) * np.pi) ** 2
    rhs = reference_weights(zeta, np.array([float(s)]), lam)[0] * x
    scale = max(float(np.max(np.abs(base))), float(np.max(np.abs(rhs))), 1e-300)
    return exact_report("time-integral-derivative", lhs, rhs, scale)


# ---------------------------------------------------------------- regularity


def regularity_report(
    model: LevyModel,
    x0: np.ndarray,
    n_paths: int,
    seed: int,
    gaps: Sequence[float] = tuple(2.0**-i for i in range(2, 9)),
    moment: float = 1.3,
    include_noise: bool = True,
    name: str = "regularity",
    threads: int = 1,
) -> RateReport:
    """Wrap :func:`holder_regularity_probe` as a rate report over time gaps.

    Each level stores its gap in ``k`` and ``h = 0`` (no spatial discretisation).
    """
    started = time.perf_counter()
    out = holder_regularity_probe(
        model, x0, gaps, n_paths, seed, moment=moment, include_noise=include_noise, threads=threads
    )
    levels = [LevelResult(0.0, g, 0, m, 0.0, n_paths, seed) for g, m in zip(out["gaps"], out["moments"])]
    fit = fit_slope(out["gaps"], out["moments"])
    return RateReport(
        name, "gap", levels, fit,
        {"model": _model_dict(model), "moment": moment, "include_noise": include_noise},
        [seed], time.perf_counter() - started,
    )
