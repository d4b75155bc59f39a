from math import sqrt

import numpy as np
import pytest

from vpb_spectra import collision, spectral as sp
from vpb_spectra.basis import chi, multiplication, projector
from vpb_spectra.modes import assemble_mode


@pytest.fixture(scope="module")
def tracked(asm_default, gap_default):
    out = {}
    for kind in ("Bm", "E"):
        rep = sp.track_branches(kind, sp.default_branch_grid(), asm_default, mu=gap_default.mu)
        for br in rep.branches.values():
            br.fit = sp.fit_expansion(br)
        out[kind] = rep
    return out


@pytest.fixture(scope="module")
def coeffs(asm_default, gap_default):
    return sp.analytic_coefficients(asm_default, mu=gap_default.mu)


def test_free_operator_null_space(asm_small):
    res = sp.eigens(assemble_mode("E", 0.0, asm_small))
    zero = np.abs(res.values) < 1e-10
    assert zero.sum() == 5
    X = np.stack([chi(asm_small.basis, j) for j in range(5)], axis=1)
    Q, _ = np.linalg.qr(res.vectors[:, zero])
    assert np.allclose(X @ (X.conj().T @ Q), Q, atol=1e-10)


def test_eigenvectors_unit_weighted_norm(asm_small):
    mode = assemble_mode("B", 0.5, asm_small)
    res = sp.eigens(mode)
    norms = np.sqrt(np.einsum("ik,i,ik->k", res.vectors.conj(), mode.weights, res.vectors).real)
    assert np.allclose(norms, 1)
    assert np.allclose(mode.matrix @ res.vectors, res.vectors * res.values, atol=1e-9)


@pytest.mark.parametrize("s", [0.01, 0.1, 1.0, 5.0, 10.0])
def test_bipolar_spectrum_stable(asm_default, gap_default, s):
    res = sp.eigens(assemble_mode("B", s, asm_default), nu0=gap_default.nu0)
    assert np.all(res.values.real < 0)


@pytest.mark.parametrize("kind", ["Bm", "B", "E"])
@pytest.mark.parametrize("s", [0.05, 0.3, 1.0])
def test_eigenvalues_refinement(asm_default, gap_default, kind, s):
    fine = sp.eigens(assemble_mode(kind, s, asm_default), nu0=gap_default.nu0)
    coarse = sp.eigens(assemble_mode(kind, s, asm_default.truncate(8)), nu0=gap_default.nu0)
    for lam in fine.values[fine.resolved]:
        assert np.abs(coarse.values - lam).min() <= 1e-3


def test_branch_seeding_and_pairing(tracked, asm_default):
    rep = tracked["Bm"]
    assert min(rep.seed_overlaps.values()) >= 0.999
    br = rep.branches
    assert np.allclose(br[-1].values, br[1].values.conj(), atol=1e-8)
    assert np.allclose(br[2].values, br[3].values, atol=1e-8)
    assert np.all(rep.window_counts >= 5)
    for j in sp.LABELS:
        assert br[j].overlaps.min() >= sp.OVERLAP_THRESHOLD


def test_leading_heat_mode_closed_form(tracked, asm_default):
    b = asm_default.basis
    psi00 = sqrt(2) / 4 * chi(b, 0) - sqrt(3) / 2 * chi(b, 4)
    rep = tracked["Bm"]
    ov = sp.weighted_overlap(rep.branches[0].vectors[:, 0], psi00, rep.weights[0])
    assert ov >= 0.999


def test_biorthonormality(tracked):
    rep = tracked["Bm"]
    for k in range(len(rep.branches[0].s)):
        Psi = np.stack([rep.branches[j].vectors[:, k] for j in sp.LABELS], axis=1)
        G = Psi.T @ (rep.weights[k][:, None] * Psi)
        assert np.abs(G - np.eye(5)).max() <= 1e-6


def test_sound_speeds(tracked):
    assert tracked["Bm"].branches[1].fit.c_imag == pytest.approx(2 * sqrt(2 / 3), rel=0.02)
    assert tracked["Bm"].branches[-1].fit.c_imag == pytest.approx(-2 * sqrt(2 / 3), rel=0.02)
    assert tracked["E"].branches[1].fit.c_imag == pytest.approx(sqrt(5 / 3), rel=0.02)


def test_heat_branch_fit(tracked, coeffs):
    fit = tracked["Bm"].branches[0].fit
    assert abs(fit.c_imag) <= 1e-3
    assert fit.c_real == pytest.approx(coeffs.a_0, rel=0.05)
    for br in tracked["Bm"].branches.values():
        assert br.fit.stable and np.isfinite(br.fit.cubic_constant)


def test_boltzmann_curvatures(tracked, asm_default, gap_default):
    co = sp.analytic_coefficients(asm_default, b=np.inf, mu=gap_default.mu)
    for j in (-1, 0, 1, 2):
        assert tracked["E"].branches[j].fit.c_real == pytest.approx(co.curvature(j), rel=0.05)


def test_generalized_family_speed(asm_default, gap_default):
    rep = sp.track_branches("Bm_general", sp.default_branch_grid(), asm_default, b=2.0,
                            mu=gap_default.mu)
    c = sp.fit_expansion(rep.branches[1]).c_imag
    assert c == pytest.approx(sqrt(1 / 2 + 5 / 3), rel=0.02)


def test_first_order_eigenfunction(tracked, asm_default):
    b = asm_default.basis
    psi00 = sp.leading_vectors(b, "Bm")[0][0]
    target = 1j * collision.solve_restricted(asm_default, "L", multiplication(b, 0) @ psi00)
    br = tracked["Bm"].branches[0]
    x = projector(b, "P1") @ br.vectors[:, 0] / br.s[0]
    assert abs(np.vdot(target, x)) / (np.linalg.norm(target) * np.linalg.norm(x)) >= 0.99


def test_fit_needs_samples(tracked):
    br = tracked["Bm"].branches[0]
    with pytest.raises(ValueError):
        sp.fit_expansion(br, r0=2e-3)


def test_tracking_refinement_requested(asm_small):
    with pytest.raises(sp.BranchTrackingError, match="refine"):
        sp.track_branches("Bm", [1e-3, 0.3, 3.0], asm_small, threshold=0.9999)
    with pytest.raises(ValueError):
        sp.track_branches("B", [0.1, 0.2], asm_small)


def test_coefficient_identities(coeffs):
    assert coeffs.a_2 == coeffs.kappa1
    assert abs(coeffs.a_0 - 0.75 * coeffs.kappa2) <= 1e-10
    assert coeffs.kappa5 == coeffs.kappa1 and coeffs.kappa6 == coeffs.kappa2
    for v in (coeffs.a_plus1, coeffs.a_0, coeffs.a_2, coeffs.kappa1, coeffs.kappa2,
              coeffs.kappa3, coeffs.mu):
        assert v > 0
    assert coeffs.a0_dispersion == min(coeffs.mu, coeffs.kappa3)


def test_transport_coefficients_refinement(asm_default, coeffs):
    coarse = sp.analytic_coefficients(asm_default.truncate(8))
    for name in ("kappa1", "kappa2", "kappa3"):
        assert getattr(coarse, name) == pytest.approx(getattr(coeffs, name), rel=0.03)


def test_dispersion_at_origin(asm_default, coeffs):
    assert sp.dispersion_eval(0.0, 0.0, asm_default, coeffs.mu) == pytest.approx(-coeffs.kappa3,
                                                                              rel=1e-10)


def test_dispersion_monotone(asm_default, coeffs):
    xs = np.linspace(-coeffs.mu / 2, 1.0, 20)
    vals = np.array([sp.dispersion_eval(x, 0.0, asm_default, coeffs.mu) for x in xs])
    assert np.all(np.abs(vals.imag) < 1e-12)
    assert np.all(np.diff(vals.real) > 0)


def test_dispersion_schur_matches_direct(asm_default, coeffs):
    D = sp.DispersionFunction(asm_default, 0.2, coeffs.mu)
    for lam in (0.3 + 0.4j, -0.02 - 1.0j, 1.5):
        assert D(lam) == pytest.approx(sp.dispersion_eval(lam, 0.2, asm_default, coeffs.mu),
                                       rel=1e-10)
    with pytest.raises(ValueError):
        D(-coeffs.mu - 0.1)


@pytest.mark.parametrize("s", [0.05, 0.3, 1.0, 4.0])
def test_dispersion_consistency(asm_default, coeffs, s):
    rows = sp.dispersion_consistency(asm_default, s, coeffs.mu)
    assert rows
    assert max(r for _, r in rows) <= 1e-6


def test_winding_counts_enclosed_root():
    path = np.array([-1 - 1j, 1 - 1j, 1 + 1j, -1 + 1j, -1 - 1j])
    assert sp._winding(lambda z: z - 0.1j, path)[0] == 1
    assert sp._winding(lambda z: z - 3.0, path)[0] == 0


def test_gap_scan_examples(asm_default, gap_default):
    grid = np.array([1e-2, 0.5, 5.0, 10.0])
    B = sp.gap_scan("B", grid, asm_default, nu0=gap_default.nu0)
    assert np.all(B[:, 1] < 0)
    Bm = sp.gap_scan("Bm", grid, asm_default, nu0=gap_default.nu0)
    assert -1e-4 <= Bm[0, 1] < 0
    assert Bm[2, 1] < 0 and Bm[1, 1] < 0
