from math import sqrt

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from vpb_spectra import collision
from vpb_spectra.basis import build_basis, chi, invariants, multiplication, sqrt_maxwellian


def test_nu_at_origin_closed_form():
    assert collision.collision_frequency(np.zeros(3)) == pytest.approx(4 * sqrt(2 * np.pi), rel=1e-12)


def test_nu_at_origin_monte_carlo():
    # oracle: nu(0) = int int |v* . w| M(v*) dw dv*, plain pseudo-random sampling
    rng = np.random.default_rng(99)
    n = 400_000
    vs = rng.standard_normal((n, 3))
    w = rng.standard_normal((n, 3))
    w /= np.linalg.norm(w, axis=1)[:, None]
    vals = 4 * np.pi * np.abs(np.sum(vs * w, axis=1))
    est, se = vals.mean(), vals.std() / np.sqrt(n)
    assert abs(est - collision.collision_frequency(np.zeros(3))) < 3 * se


@given(seed=st.integers(0, 2**32 - 1))
def test_nu_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    v = 3 * rng.standard_normal((5, 3))
    R = Rotation.random(random_state=seed).as_matrix()
    assert np.allclose(collision.collision_frequency(v), collision.collision_frequency(v @ R.T),
                       rtol=1e-12)


def test_frequency_bounds_sandwich():
    _, _, radii = collision.spherical_rule(10)
    r = np.concatenate([[0.0], radii])
    nu0, nu1 = collision.frequency_bounds(r)
    nu = collision.collision_frequency_radial(r)
    assert 0 < nu0 <= nu1
    assert np.all(nu0 * (1 + r) <= nu * (1 + 1e-12))
    assert np.all(nu <= nu1 * (1 + r) * (1 + 1e-12))


def test_null_space_and_symmetry(asm_default):
    b = asm_default.basis
    c0 = chi(b, 0).real
    nu = asm_default.nu_diag
    op = np.linalg.norm(asm_default.L, 2)
    assert np.linalg.norm(asm_default.K @ c0 - nu @ c0) <= 1e-4 * op
    assert np.linalg.norm(asm_default.K1 @ c0 - nu @ c0) <= 1e-4 * op
    X = invariants(b)
    assert np.linalg.norm(asm_default.L @ X, axis=0).max() <= 1e-4 * op
    for A in (asm_default.K, asm_default.K1, nu):
        assert np.abs(A - A.T).max() <= 1e-12
    for A in (asm_default.L, asm_default.L1):
        assert np.linalg.eigvalsh(A).max() <= 1e-8


def test_asymmetry_within_standard_error(asm_default):
    d = asm_default.diagnostics
    assert d["max_asymmetry_before_symmetrization"] <= 10 * d["max_standard_error_L"]


def test_quadratic_form_against_independent_monte_carlo(asm_default):
    """(Kf, g) from the defining integral with a different sampler, variance and seed."""
    b = asm_default.basis
    r = np.random.default_rng(7)
    cf, cg = np.zeros(b.dim), np.zeros(b.dim)
    cf[:10], cg[:10] = r.standard_normal(10), r.standard_normal(10)
    rng = np.random.default_rng(2024)
    var, chunk, vals = 2.0, 100_000, []
    dens = lambda x: (2 * np.pi * var) ** -1.5 * np.exp(-np.sum(x * x, 1) / (2 * var))
    F = lambda x: b.evaluate(x) @ cf
    sq = sqrt_maxwellian
    for _ in range(4):
        v = sqrt(var) * rng.standard_normal((chunk, 3))
        vs = sqrt(var) * rng.standard_normal((chunk, 3))
        w = rng.standard_normal((chunk, 3))
        w /= np.linalg.norm(w, axis=1)[:, None]
        un = np.sum((v - vs) * w, axis=1)
        vp, vsp = v - un[:, None] * w, vs + un[:, None] * w
        gain = sq(vsp) * F(vp) + sq(vp) * F(vsp) - sq(v) * F(vs)
        g = b.evaluate(v) @ cg
        vals.append(g * np.abs(un) * gain * sq(vs) * 4 * np.pi / (dens(v) * dens(vs)))
    vals = np.concatenate(vals)
    est, se = vals.mean(), vals.std() / np.sqrt(len(vals))
    assert abs(est - cg @ asm_default.K @ cf) <= 3 * se


def test_coercivity(asm_default, gap_default, rng):
    mu = gap_default.mu
    assert mu > 0
    b = asm_default.basis
    P1 = np.eye(b.dim) - invariants(b) @ invariants(b).T
    for _ in range(100):
        f = rng.standard_normal(b.dim)
        p = P1 @ f
        assert f @ asm_default.L @ f / (p @ p) <= -mu + 1e-8


def test_mu_stable_under_refinement(asm_default, gap_default):
    coarse = collision.coercivity_gap(asm_default.truncate(8))
    assert abs(coarse.mu - gap_default.mu) <= 0.05 * gap_default.mu


def test_solve_restricted(asm_default):
    b = asm_default.basis
    assert np.allclose(collision.solve_restricted(asm_default, "L", chi(b, 0).real), 0)
    g = multiplication(b, 0) @ chi(b, 4).real
    x = collision.solve_restricted(asm_default, "L", g)
    assert x @ g < 0
    P1 = np.eye(b.dim) - invariants(b) @ invariants(b).T
    assert np.linalg.norm(asm_default.L @ x - P1 @ g) <= 1e-10 * np.linalg.norm(g)
    y = collision.solve_restricted(asm_default, "L1", chi(b, 1).real)
    assert -(y @ chi(b, 1).real) > 0


def test_truncation_matches_lower_degree_assembly():
    lo = collision.assemble(build_basis(6), 2**13, seed=3, stderr_tol=None)
    hi = collision.assemble(build_basis(8), 2**13, seed=3, stderr_tol=None).truncate(6)
    assert np.allclose(lo.K, hi.K, atol=1e-12)
    assert np.allclose(lo.K1, hi.K1, atol=1e-12)


def test_assembly_deterministic():
    a = collision.assemble(build_basis(5), 2**13, seed=4, stderr_tol=None)
    b = collision.assemble(build_basis(5), 2**13, seed=4, stderr_tol=None)
    assert np.array_equal(a.K, b.K) and np.array_equal(a.K1, b.K1)
    assert a.sample_count == 2**13


def test_reduced_budget_fails_loudly():
    with pytest.raises(collision.AssemblyError, match="increase the sample budget"):
        collision.assemble(build_basis(6), 2**13, seed=0)


def test_cache_round_trip(tmp_path, asm_small):
    path = collision.cache_path(tmp_path, 6, 2**16, 1)
    collision.save(asm_small, path)
    back = collision.load(path)
    assert np.array_equal(back.K, asm_small.K) and back.sample_count == asm_small.sample_count
    assert back.diagnostics == asm_small.diagnostics
