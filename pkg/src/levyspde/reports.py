"""Identity reports shared by the measure and Malliavin verifiers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

SCHEMA_VERSION = "1.0"
EXACT_RTOL = 1e-10
DEFAULT_SIGMA_LEVEL = 3.0


class ConsistencyError(RuntimeError):
    """Two formulas for the same quantity disagreed beyond tolerance."""


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass
class IdentityReport:
    """Outcome of checking one identity, either pathwise or by Monte Carlo.

    ``lhs`` and ``rhs`` are scalars or arrays.  In Monte Carlo mode
    ``std_errors`` holds the standard errors of each side and of the paired
    difference; the verdict compares the mean difference with
    ``sigma_level`` times that last one.
    """

    name: str
    lhs: Any
    rhs: Any
    std_errors: dict[str, Any]
    n_samples: int
    verdict: str
    mode: str
    tolerance: float
    flags: list[str] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "identity",
            "name": self.name,
            "mode": self.mode,
            "verdict": self.verdict,
            "n_samples": self.n_samples,
            "tolerance": self.tolerance,
            "lhs": _plain(np.asarray(self.lhs, dtype=float)),
            "rhs": _plain(np.asarray(self.rhs, dtype=float)),
            "std_errors": _plain(self.std_errors),
            "flags": list(self.flags),
            "details": _plain(self.details),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        return f"{self.name}: {self.verdict} ({self.mode}, n={self.n_samples})"


def relative_error(lhs: Any, rhs: Any, scale: float | None = None) -> float:
    """Largest componentwise |lhs - rhs| divided by a magnitude scale.

    Without an explicit ``scale`` the larger of the two sides is used.
    Callers pass the magnitude of the constituent terms when the identity
    involves cancellation.
    """
    a = np.asarray(lhs, dtype=float)
    b = np.asarray(rhs, dtype=float)
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    if scale is None:
        scale = max(float(np.max(np.abs(a))) if a.size else 0.0, float(np.max(np.abs(b))) if b.size else 0.0)
    if diff == 0.0:
        return 0.0
    if not math.isfinite(diff):
        return math.inf
    return diff / max(scale, np.finfo(float).tiny)


def exact_report(
    name: str,
    lhs: Any,
    rhs: Any,
    scale: float | None = None,
    rtol: float = EXACT_RTOL,
    n_samples: int = 1,
    details: dict[str, Any] | None = None,
) -> IdentityReport:
    err = relative_error(lhs, rhs, scale)
    return IdentityReport(
        name=name,
        lhs=lhs,
        rhs=rhs,
        std_errors={"relative_error": err},
        n_samples=n_samples,
        verdict="pass" if err <= rtol else "fail",
        mode="exact-pathwise",
        tolerance=rtol,
        details=dict(details or {}),
    )


def combine_exact(name: str, reports: Sequence[IdentityReport]) -> IdentityReport:
    """Fold many pathwise reports into one; the worst path decides."""
    if not reports:
        return exact_report(name, 0.0, 0.0, n_samples=0)
    worst = max(reports, key=lambda r: r.std_errors["relative_error"])
    failing = sum(not r.passed for r in reports)
    return IdentityReport(
        name=name,
        lhs=worst.lhs,
        rhs=worst.rhs,
        std_errors={"relative_error": worst.std_errors["relative_error"]},
        n_samples=len(reports),
        verdict="pass" if failing == 0 else "fail",
        mode="exact-pathwise",
        tolerance=worst.tolerance,
        details={"failing_paths": failing},
    )


def _standard_error(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[0]
    if n < 2:
        return np.full(samples.shape[1:], np.inf)
    return samples.std(axis=0, ddof=1) / math.sqrt(n)


def variance_unstable(samples: np.ndarray) -> bool:
    """Flag samples whose variance is dominated by a single draw."""
    centred = samples - samples.mean(axis=0)
    total = (centred**2).sum(axis=0)
    biggest = (centred**2).max(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(total > 0, biggest / total, 0.0)
    return bool(np.any(share > 0.5)) and samples.shape[0] >= 100


def monte_carlo_report(
    name: str,
    lhs_samples: np.ndarray,
    rhs_samples: np.ndarray,
    sigma_level: float = DEFAULT_SIGMA_LEVEL,
    details: dict[str, Any] | None = None,
) -> IdentityReport:
    """Paired Monte Carlo comparison of two estimators of the same mean.

    Both sample arrays have shape ``(n, ...)`` and row ``i`` of each comes
    from the same configuration, so the test uses the standard error of the
    paired differences.
    """
    lhs_samples = np.asarray(lhs_samples, dtype=float)
    rhs_samples = np.asarray(rhs_samples, dtype=float)
    if lhs_samples.shape != rhs_samples.shape:
        raise ValueError("lhs and rhs sample arrays differ in shape")
    n = lhs_samples.shape[0]
    diff = lhs_samples - rhs_samples
    lhs = lhs_samples.mean(axis=0) if n else np.zeros(lhs_samples.shape[1:])
    rhs = rhs_samples.mean(axis=0) if n else np.zeros(rhs_samples.shape[1:])
    se_diff = _standard_error(diff) if n else np.zeros(diff.shape[1:])
    flags: list[str] = []
    finite = bool(np.all(np.isfinite(lhs_samples)) and np.all(np.isfinite(rhs_samples)))
    if not finite:
        flags.append("non-finite samples")
    if n and (variance_unstable(lhs_samples) or variance_unstable(rhs_samples)):
        flags.append("variance dominated by a single sample")
    gap = np.abs(lhs - rhs)
    if n == 0:
        ok = True
    else:
        # A zero standard error with zero gap is a pass (e.g. identically vanishing sides).
        ok = finite and bool(np.all((gap <= sigma_level * se_diff) | (gap == 0.0)))
    return IdentityReport(
        name=name,
        lhs=lhs,
        rhs=rhs,
        std_errors={
            "lhs": _standard_error(lhs_samples) if n else 0.0,
            "rhs": _standard_error(rhs_samples) if n else 0.0,
            "difference": se_diff,
        },
        n_samples=n,
        verdict="pass" if ok else "fail",
        mode="monte-carlo",
        tolerance=sigma_level,
        flags=flags,
        details=dict(details or {}),
    )
