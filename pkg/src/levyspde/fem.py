"""Piecewise-linear finite elements on ``(0, 1)`` with Dirichlet conditions.

An optional second backend for the implicit Euler scheme.  Mass and
stiffness matrices are tridiagonal, so each step is one banded solve.
Noise and initial data arrive as sine coefficients, like the spectral
backend, and are loaded against the hat functions in closed form.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_banded


class FiniteElementBackend:
    """Uniform mesh with ``n_interior`` free nodes and mesh size ``1/(n_interior+1)``."""

    def __init__(self, n_interior: int):
        if n_interior < 1:
            raise ValueError("the mesh needs at least one interior node")
        self.n_interior = n_interior
        self.h = 1.0 / (n_interior + 1)
        self.nodes = self.h * np.arange(1, n_interior + 1)

    def mass_banded(self) -> np.ndarray:
        n, h = self.n_interior, self.h
        return _tridiagonal_banded(n, h / 6.0, 4.0 * h / 6.0)

    def stiffness_banded(self) -> np.ndarray:
        n, h = self.n_interior, self.h
        return _tridiagonal_banded(n, -1.0 / h, 2.0 / h)

    def discrete_eigenvalues(self) -> np.ndarray:
        """Generalized eigenvalues of ``K v = λ M v``; eigenvectors are nodal sines."""
        c = np.cos(np.arange(1, self.n_interior + 1) * np.pi * self.h)
        return 6.0 / self.h**2 * (1.0 - c) / (2.0 + c)

    def load(self, coeffs: np.ndarray) -> np.ndarray:
        """``(Σ_j c_j e_j, φ_i)`` for every hat function ``φ_i``."""
        coeffs = np.asarray(coeffs, dtype=float)
        omega = np.arange(1, coeffs.shape[-1] + 1) * np.pi
        factor = math.sqrt(2.0) * 2.0 * (1.0 - np.cos(omega * self.h)) / (omega**2 * self.h)
        basis = np.sin(np.outer(self.nodes, omega))
        return (coeffs * factor) @ basis.T

    def l2_projection(self, coeffs: np.ndarray) -> np.ndarray:
        """Nodal values of the ``L²`` projection of a sine expansion."""
        return solve_banded((1, 1), self.mass_banded(), self.load(coeffs))

    def step(self, u: np.ndarray, k: float, load: np.ndarray | None = None) -> np.ndarray:
        """One implicit Euler step ``(M + kK) u⁺ = M u + load``."""
        lhs = self.mass_banded() + k * self.stiffness_banded()
        rhs = _banded_matvec(self.mass_banded(), u)
        if load is not None:
            rhs = rhs + load
        return solve_banded((1, 1), lhs, rhs)

    def run(self, x0_coeffs: np.ndarray, k: float, increments: np.ndarray) -> np.ndarray:
        """Nodal trajectory, shape ``(M + 1, n_interior)``, for sine-coefficient increments."""
        increments = np.atleast_2d(increments)
        lhs = self.mass_banded() + k * self.stiffness_banded()
        mass = self.mass_banded()
        out = np.empty((len(increments) + 1, self.n_interior))
        out[0] = self.l2_projection(x0_coeffs)
        for m, inc in enumerate(increments):
            rhs = _banded_matvec(mass, out[m]) + self.load(inc)
            out[m + 1] = solve_banded((1, 1), lhs, rhs)
        return out

    def to_modes(self, nodal: np.ndarray, n_modes: int) -> np.ndarray:
        """Sine coefficients ``(u_h, e_j)`` of the piecewise-linear function."""
        return self.load(np.eye(n_modes)) @ np.asarray(nodal)


def _tridiagonal_banded(n: int, off: float, diag: float) -> np.ndarray:
    band = np.zeros((3, n))
    band[0, 1:] = off
    band[1, :] = diag
    band[2, :-1] = off
    return band


def _banded_matvec(band: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = band[1] * x
    out[:-1] += band[0, 1:] * x[1:]
    out[1:] += band[2, :-1] * x[:-1]
    return out
