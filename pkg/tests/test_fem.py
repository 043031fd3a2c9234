from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.linalg import eigh

from levyspde.fem import FiniteElementBackend


def dense(band: np.ndarray) -> np.ndarray:
    return np.diag(band[1]) + np.diag(band[0, 1:], 1) + np.diag(band[2, :-1], -1)


def hat(x: float, node: float, h: float) -> float:
    return max(0.0, 1.0 - abs(x - node) / h)


@pytest.fixture
def fem():
    return FiniteElementBackend(15)


def test_rejects_empty_mesh():
    with pytest.raises(ValueError):
        FiniteElementBackend(0)


def test_eigenvalues_match_dense_solver(fem):
    values = eigh(dense(fem.stiffness_banded()), dense(fem.mass_banded()), eigvals_only=True)
    assert np.allclose(np.sort(values), fem.discrete_eigenvalues(), rtol=1e-10)


def test_eigenvalues_approach_continuous():
    fine = FiniteElementBackend(255)
    assert fine.discrete_eigenvalues()[0] == pytest.approx(math.pi**2, rel=1e-4)


@pytest.mark.parametrize("j", [1, 3, 7])
def test_nodal_sine_decays_exactly(fem, j):
    u = np.sin(j * math.pi * fem.nodes)
    lam = fem.discrete_eigenvalues()[j - 1]
    k, steps = 0.01, 5
    state = u.copy()
    for _ in range(steps):
        state = fem.step(state, k)
    assert np.allclose(state, (1.0 + k * lam) ** -steps * u, rtol=1e-10)


@pytest.mark.parametrize("j", [1, 4])
def test_load_matches_quadrature(fem, j):
    coeffs = np.zeros(j)
    coeffs[-1] = 1.0
    load = fem.load(coeffs)
    for i in (0, 7, 14):
        node = fem.nodes[i]
        value = integrate.quad(
            lambda x: math.sqrt(2.0) * math.sin(j * math.pi * x) * hat(x, node, fem.h),
            node - fem.h, node + fem.h, points=[node],
        )[0]
        assert load[i] == pytest.approx(value, rel=1e-9, abs=1e-14)


def test_projection_round_trip():
    fem = FiniteElementBackend(255)
    c = np.array([1.0, 0.0, -0.5])
    assert np.allclose(fem.to_modes(fem.l2_projection(c), 3), c, atol=1e-3)


def test_run_adds_load():
    fem = FiniteElementBackend(7)
    inc = np.array([[1.0, 0.5], [0.0, -1.0]])
    out = fem.run(np.array([0.2]), 0.05, inc)
    state = fem.l2_projection(np.array([0.2]))
    for row in inc:
        state = fem.step(state, 0.05, fem.load(row))
    assert np.allclose(out[-1], state, rtol=1e-12)
    assert out.shape == (3, 7)
