"""Discrete Poisson Malliavin calculus and convergence-rate benchmarks for
linear parabolic SPDEs driven by α-stable Lévy noise."""

from __future__ import annotations

__version__ = "0.1.0"
