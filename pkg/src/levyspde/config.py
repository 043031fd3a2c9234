"""Run configuration: one JSON file plus command-line overrides.

Loading validates the model parameters and the regularity of the initial
value, so inadmissible runs fail before any sampling starts.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .harness import SchemeGrid, TestFunctional, TimeMeasure, local_average_direction
from .levy import AdmissibilityError, ImpulsiveCylindrical, LevyModel, SubordinatedQWiener

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """The configuration file or an override is malformed."""


@dataclass(frozen=True)
class Tolerances:
    deterministic_slope: float = 0.15
    smoothing_slope: float = 0.1
    strong_slope: float = 0.2
    weak_slope: float = 0.3
    sigma_level: float = 3.0
    exact_rtol: float = 1e-10


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "subordinated"
    alpha: float = 1.5
    beta: float = 1.2
    beta_minus: float = 1.1
    moment: float = 1.3
    q_scale: float = 1.0
    q_decay: float = 0.75
    jump_threshold: float = 1e-2
    n_modes: int = 4096

    def build(self) -> LevyModel:
        if self.kind == "subordinated":
            return SubordinatedQWiener(self.alpha, self.q_scale, self.q_decay, self.n_modes, self.jump_threshold)
        if self.kind == "impulsive":
            return ImpulsiveCylindrical(self.alpha, self.n_modes, self.jump_threshold)
        raise ConfigError(f"unknown model kind {self.kind!r}")


@dataclass(frozen=True)
class GridConfig:
    T: float = 1.0
    h_levels: tuple[int, ...] = (8, 16, 32, 64, 128)
    h_sweep_step: float = 2.0**-30
    k_levels: tuple[float, ...] = (2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7, 2.0**-8)
    k_sweep_modes: int = 1024

    def h_grids(self) -> list[SchemeGrid]:
        return [SchemeGrid(n, self.h_sweep_step, self.T) for n in self.h_levels]

    def k_grids(self) -> list[SchemeGrid]:
        return [SchemeGrid(self.k_sweep_modes, k, self.T) for k in self.k_levels]


@dataclass(frozen=True)
class FunctionalConfig:
    kind: str = "bounded_smooth"
    center: float = 0.5
    width: float = 1.0 / 2048
    linear_decay: float = 0.51
    tau: float = 1.0

    def build(self, n_modes: int) -> TestFunctional:
        if self.kind == "linear":
            direction = np.arange(1, n_modes + 1, dtype=float) ** -self.linear_decay
        else:
            direction = local_average_direction(self.center, self.width, n_modes)
        return TestFunctional(self.kind, direction, TimeMeasure.point(self.tau))


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    functional: FunctionalConfig = field(default_factory=FunctionalConfig)
    x0_decay: float = 2.31
    n_samples: int = 100_000
    n_paths: int = 2000
    n_weak_paths: int = 10_000
    n_seeds: int = 3
    seed: int = 0
    threads: int = 1
    out: str = "out"
    profile: str = "default"
    tolerances: Tolerances = field(default_factory=Tolerances)

    def x0(self) -> np.ndarray:
        """Initial value with sine coefficients ``j^{-x0_decay}``."""
        return np.arange(1, self.model.n_modes + 1, dtype=float) ** -self.x0_decay

    def x0_regularity(self) -> float:
        """Supremum of ``ρ`` with ``X0 ∈ Ḣ^ρ``."""
        return self.x0_decay - 0.5

    def check_admissible(self) -> None:
        """Raise :class:`AdmissibilityError` when the requested ``β`` is not supported."""
        m = self.model
        if not 1.0 < m.alpha < 2.0:
            raise AdmissibilityError(f"alpha must lie in (1, 2), got {m.alpha}")
        if not 0.0 < m.beta_minus < m.beta:
            raise AdmissibilityError("beta_minus must lie in (0, beta)")
        if not 1.0 <= m.moment < m.alpha:
            raise AdmissibilityError("the moment must lie in [1, alpha)")
        m.build().check_admissible(m.beta)
        if self.x0_regularity() <= m.beta:
            raise AdmissibilityError(
                f"X0 with coefficients j^-{self.x0_decay} lies only in H^rho for rho < {self.x0_regularity():.3g};"
                f" beta = {m.beta} needs x0_decay > {m.beta + 0.5}"
            )

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["config_version"] = CONFIG_VERSION
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        data = dict(data)
        version = data.pop("config_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config_version {version}")
        try:
            kwargs: dict[str, Any] = {}
            for f in fields(cls):
                if f.name not in data:
                    continue
                value = data.pop(f.name)
                if f.name == "model":
                    value = _build(ModelConfig, value)
                elif f.name == "grid":
                    value = _build(GridConfig, value)
                elif f.name == "functional":
                    value = _build(FunctionalConfig, value)
                elif f.name == "tolerances":
                    value = _build(Tolerances, value)
                kwargs[f.name] = value
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if data:
            raise ConfigError(f"unknown config keys: {sorted(data)}")
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _build(cls: type, value: Any) -> Any:
    if not isinstance(value, dict):
        raise ConfigError(f"{cls.__name__} must be an object")
    kwargs = {}
    names = {f.name: f for f in fields(cls)}
    for key, item in value.items():
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in {cls.__name__}")
        kwargs[key] = tuple(item) if isinstance(item, list) else item
    return cls(**kwargs)


PROFILES: dict[str, dict[str, Any]] = {
    "default": {},
    "quick": {"n_samples": 5000, "n_paths": 100, "n_weak_paths": 300, "n_seeds": 1, "profile": "quick"},
}


def load_config(path: str | Path | None = None, profile: str | None = None) -> RunConfig:
    """Defaults, then the named profile, then the file's values."""
    name = profile or "default"
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    base = RunConfig().with_overrides(**PROFILES[name])
    if path is None:
        config = base
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        merged = base.to_dict()
        try:
            loaded = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        for key, value in loaded.items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = {**merged[key], **value}
            else:
                merged[key] = value
        if profile is not None:
            merged["profile"] = name
        config = RunConfig.from_dict(merged)
    config.check_admissible()
    return config
