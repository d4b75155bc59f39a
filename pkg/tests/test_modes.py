from math import sqrt

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linear_sum_assignment

from vpb_spectra.basis import chi
from vpb_spectra.modes import assemble_mode, field_coupling, multiplication_v1
from vpb_spectra.spectral import eigens


def cvec(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def w_inner(f, g, w):
    return np.sum(w * f * g.conj())


def test_multiplication_v1_examples(asm_small):
    b = asm_small.basis
    V = multiplication_v1(b)
    assert np.allclose(V @ chi(b, 0), chi(b, 1))
    assert np.array_equal(V, V.T)
    # oracle: int v1^2 (|v|^2 - 3) M / sqrt(6) dv = (3 + 1 + 1 - 3)/sqrt(6)
    assert chi(b, 4).real @ V @ chi(b, 1).real == pytest.approx(sqrt(2 / 3), abs=1e-14)
    assert (3 + 1 + 1 - 3) / sqrt(6) == pytest.approx(sqrt(2 / 3))


def test_special_cases(asm_small):
    for s in (0.1, 1.0, 3.0):
        a = assemble_mode("Bm_general", s, asm_small, 1.0, 1.0).matrix
        assert np.array_equal(a, assemble_mode("Bm", s, asm_small).matrix)
    assert np.array_equal(assemble_mode("E", 0.0, asm_small).matrix, asm_small.L.astype(complex))
    with pytest.raises(ValueError):
        assemble_mode("B", 0.0, asm_small)
    with pytest.raises(ValueError):
        assemble_mode("Bm_general", 1.0, asm_small, a=-1.0)
    with pytest.raises(ValueError):
        assemble_mode("X", 1.0, asm_small)
    assert field_coupling("B", 0.5) == pytest.approx(4.0)
    assert field_coupling("Bm_general", 2.0, a=0.5, b=2.0) == pytest.approx(0.25)


@pytest.mark.parametrize("kind", ["B", "Bm", "Bm_general", "E"])
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(0.01, 10.0))
def test_adjoint_identity(asm_small, kind, seed, s):
    rng = np.random.default_rng(seed)
    f, g = (cvec(rng, asm_small.basis.dim) for _ in range(2))
    A = assemble_mode(kind, s, asm_small, 0.7, 1.3)
    Am = assemble_mode(kind, -s, asm_small, 0.7, 1.3)
    w = A.weights
    lhs = w_inner(A.matrix @ f, g, w)
    rhs = w_inner(f, Am.matrix @ g, w)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@pytest.mark.parametrize("kind", ["B", "Bm", "Bm_general", "E"])
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(0.01, 10.0))
def test_dissipative(asm_small, kind, seed, s):
    f = cvec(np.random.default_rng(seed), asm_small.basis.dim)
    A = assemble_mode(kind, s, asm_small, 2.0, 0.5)
    assert w_inner(A.matrix @ f, f, A.weights).real <= 1e-8


def test_weighted_matrix_complex_symmetric(asm_small):
    for kind in ("B", "Bm", "E"):
        A = assemble_mode(kind, 0.4, asm_small)
        WA = A.weights[:, None] * A.matrix
        assert np.abs(WA - WA.T).max() <= 1e-12


def test_parity_sectors_decouple(asm_small):
    A = assemble_mode("Bm", 0.7, asm_small)
    sec = A.sectors
    off = A.matrix[sec[:, None] != sec[None, :]]
    # zero up to rounding of the isotropic projection
    assert np.abs(off).max() <= 1e-12 * np.abs(A.matrix).max()


@pytest.mark.parametrize("s", [0.3, 2.0])
def test_rotation_invariance(asm_small, s):
    direction = np.array([0.36, -0.48, 0.8])
    ref = eigens(assemble_mode("Bm", s, asm_small)).values
    rot = eigens(assemble_mode("Bm", s, asm_small, direction=direction)).values
    cost = np.abs(ref[:, None] - rot[None, :])
    i, j = linear_sum_assignment(cost)
    assert cost[i, j].max() <= 1e-8
