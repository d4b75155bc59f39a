"""Mode spectra, low-frequency branches, expansion coefficients and the
dispersion function of the bipolar mode operator.

Eigenvectors of every mode operator are biorthogonal in the bilinear pairing
psi^T W phi, because W B is complex symmetric (L, L1 and V1 are real
symmetric and the field term is balanced by the density weight in W).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import sqrt

import numpy as np
import scipy.linalg as sla

from .basis import BasisSet, chi, multiplication, projector
from .collision import (AssemblyError, CollisionAssembly, coercivity_gap,
                        solve_restricted)
from .modes import ModeOperator, assemble_mode

log = logging.getLogger(__name__)

LABELS = (-1, 0, 1, 2, 3)
# parity sector of each branch at xi = s e1 (see BasisSet.sectors)
BRANCH_SECTOR = {-1: 0, 0: 0, 1: 0, 2: 1, 3: 2}
OVERLAP_THRESHOLD = 0.9
RESOLVED_FRACTION = 0.1


class BranchTrackingError(RuntimeError):
    pass


# -- eigensolves ---------------------------------------------------------------

@dataclass(frozen=True)
class EigenResult:
    kind: str
    s: float
    values: np.ndarray
    vectors: np.ndarray = field(repr=False)
    sectors: np.ndarray = field(repr=False)
    resolved: np.ndarray = field(repr=False)

    def max_real(self) -> float:
        vals = self.values[self.resolved]
        return float(vals.real.max()) if len(vals) else float("-inf")


def _weighted_norms(vectors: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ik,i,ik->k", vectors.conj(), w, vectors).real)


def _eig(A: np.ndarray):
    try:
        return sla.eig(A)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise np.linalg.LinAlgError(
            f"eigensolver failed on a {A.shape[0]}x{A.shape[0]} block "
            f"(norm {np.linalg.norm(A):.3e}, finite={np.isfinite(A).all()}): {exc}"
        ) from exc


def sector_eigens(mode: ModeOperator, sector: int):
    """Eigenpairs of one parity block, embedded back into the full basis."""
    idx = np.flatnonzero(mode.sectors == sector)
    vals, sub = _eig(mode.matrix[np.ix_(idx, idx)])
    vecs = np.zeros((mode.matrix.shape[0], len(vals)), dtype=complex)
    vecs[idx] = sub
    vecs /= _weighted_norms(vecs, mode.weights)
    return vals, vecs


def eigens(mode: ModeOperator, nu0: float | None = None,
           delta: float = RESOLVED_FRACTION) -> EigenResult:
    """Full eigendecomposition, vectors of unit weighted norm.

    Eigenvalues with Re > -nu0 + delta*nu0 are flagged as resolved; below that
    line the discretized continuous spectrum sits and is not meaningful pointwise.
    """
    A = mode.matrix
    if mode.sectors is not None:
        parts = [(k, *sector_eigens(mode, k)) for k in np.unique(mode.sectors)]
        values = np.concatenate([p[1] for p in parts])
        vectors = np.concatenate([p[2] for p in parts], axis=1)
        sectors = np.concatenate([np.full(len(p[1]), p[0]) for p in parts])
    else:
        values, vectors = _eig(A)
        vectors = vectors / _weighted_norms(vectors, mode.weights)
        sectors = np.full(len(values), -1)
    if nu0 is None:
        resolved = np.ones(len(values), dtype=bool)
    else:
        resolved = values.real > -nu0 + delta * nu0
    order = np.lexsort((values.imag, -values.real))
    return EigenResult(mode.kind, mode.s, values[order], vectors[:, order],
                       sectors[order], resolved[order])


def bilinear_normalize(psi: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Scale psi so that psi^T W psi = 1."""
    return psi / np.sqrt(np.sum(w * psi * psi))


def weighted_overlap(f: np.ndarray, g: np.ndarray, w: np.ndarray) -> float:
    """|<f, g>_W| / (|f|_W |g|_W)."""
    num = abs(np.sum(w * f * g.conj()))
    return float(num / np.sqrt(np.sum(w * abs(f) ** 2) * np.sum(w * abs(g) ** 2)))


# -- leading eigenvectors -------------------------------------------------------

def limit_coupling(kind: str, a: float = 1.0, b: float = 1.0) -> float:
    """Limit of the field coupling s^2 c(s) as s -> 0 (0 for E, 1/b otherwise)."""
    if kind == "E":
        return 0.0
    if kind == "Bm":
        return 1.0
    if kind == "Bm_general":
        return 1.0 / b
    raise ValueError(f"no small-frequency branches for kind {kind!r}")


def leading_vectors(basis: BasisSet, kind: str, a: float = 1.0, b: float = 1.0):
    """s -> 0 limits psi_{j,0} of the five branches at omega = e1, and the slopes.

    On span(chi0, chi1, chi4) the first-order operator is -i s T with
    T = V1 + gamma V1 P_d restricted there; T has eigenvalues 0 and
    +-sqrt(1 + gamma + 2/3).  Branch +1 is the one with Im lambda > 0.
    Vectors are normalized by psi^T W0 psi = 1 with W0 = I + gamma P_d.
    """
    gamma = limit_coupling(kind, a, b)
    r = sqrt(2 / 3)
    T = np.array([[0.0, 1.0, 0.0],
                  [1.0 + gamma, 0.0, r],
                  [0.0, r, 0.0]])
    vals, vecs = np.linalg.eig(T)
    vals = vals.real
    X = np.stack([chi(basis, j) for j in (0, 1, 4)], axis=1)
    w = np.ones(basis.dim)
    w[0] += gamma
    out, slopes = {}, {}
    for k in np.argsort(vals):
        label = 1 if vals[k] < -1e-12 else (-1 if vals[k] > 1e-12 else 0)
        psi = X @ vecs[:, k].real.astype(complex)
        psi = bilinear_normalize(psi, w)
        if psi[0].real < 0:
            psi = -psi
        out[label] = psi
        slopes[label] = -vals[k]
    out[2] = chi(basis, 2)
    out[3] = chi(basis, 3)
    slopes[2] = slopes[3] = 0.0
    return out, slopes


# -- branch tracking ------------------------------------------------------------

@dataclass
class SpectrumBranch:
    kind: str
    label: int
    s: np.ndarray
    values: np.ndarray
    vectors: np.ndarray = field(repr=False)
    overlaps: np.ndarray = field(repr=False)
    fit: "BranchFit | None" = None


@dataclass(frozen=True)
class TrackingReport:
    branches: dict
    window_counts: np.ndarray
    seed_overlaps: dict
    weights: list = field(repr=False, default_factory=list)


def default_branch_grid(r0: float = 0.3, s_min: float = 1e-3, points: int = 40) -> np.ndarray:
    return np.geomspace(s_min, r0, points)


def track_branches(kind: str, s_grid, asm: CollisionAssembly, a: float = 1.0,
                   b: float = 1.0, threshold: float = OVERLAP_THRESHOLD,
                   mu: float | None = None) -> TrackingReport:
    """Follow the five small-frequency branches along an ascending s grid.

    Seeding at the first grid point matches eigenvectors against the analytic
    leading terms; afterwards each branch takes the eigenvector with the
    largest weighted overlap with its previous one.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(np.diff(s_grid) <= 0) or s_grid[0] <= 0:
        raise ValueError("s grid must be positive and strictly ascending")
    if mu is None:
        mu = coercivity_gap(asm).mu
    seeds, _ = leading_vectors(asm.basis, kind, a, b)
    prev = dict(seeds)
    data = {j: ([], [], []) for j in LABELS}
    seed_overlaps = {}
    counts = []
    weights = []
    for step, s in enumerate(s_grid):
        mode = assemble_mode(kind, s, asm, a, b)
        w = mode.weights
        weights.append(w)
        pairs = {k: sector_eigens(mode, k) for k in (0, 1, 2, 3)}
        counts.append(sum(int(np.sum(v.real > -mu / 2)) for v, _ in pairs.values()))
        taken = {k: set() for k in pairs}
        for j in LABELS:
            sec = BRANCH_SECTOR[j]
            vals, vecs = pairs[sec]
            ov = np.array([weighted_overlap(vecs[:, m], prev[j], w) for m in range(len(vals))])
            m = int(np.argmax(ov))
            if ov[m] < threshold:
                raise BranchTrackingError(
                    f"branch {j} of {kind}: overlap {ov[m]:.3f} < {threshold} at s={s:.4g}; "
                    "refine the s grid")
            if m in taken[sec]:
                raise BranchTrackingError(
                    f"branches collide in sector {sec} at s={s:.4g}; refine the s grid")
            taken[sec].add(m)
            psi = bilinear_normalize(vecs[:, m], w)
            # resolve the sign left open by the bilinear normalization
            if np.real(np.sum(w * psi * prev[j].conj())) < 0:
                psi = -psi
            if step == 0:
                seed_overlaps[j] = float(ov[m])
            data[j][0].append(vals[m])
            data[j][1].append(psi)
            data[j][2].append(ov[m])
            prev[j] = psi
    branches = {
        j: SpectrumBranch(kind=kind, label=j, s=s_grid.copy(), values=np.array(v),
                          vectors=np.array(p).T, overlaps=np.array(o))
        for j, (v, p, o) in data.items()
    }
    counts = np.array(counts)
    if np.any(counts < 5):
        log.warning("%s: fewer than five eigenvalues with Re > -mu/2 at s = %s",
                    kind, s_grid[counts < 5])
    return TrackingReport(branches=branches, window_counts=counts,
                          seed_overlaps=seed_overlaps, weights=weights)


# -- expansion fits -------------------------------------------------------------

@dataclass(frozen=True)
class BranchFit:
    c_imag: float
    c_real: float
    residual: float
    cubic_constant: float
    half_c_imag: float
    half_c_real: float
    stable: bool
    window: tuple
    samples: int


def _coeff_fit(s: np.ndarray, lam: np.ndarray):
    """Im = c s + d s^3 and Re = -a s^2 + e s^4, fitted as Im/s and -Re/s^2."""
    X = np.stack([np.ones_like(s), s**2], axis=1)
    ci, res_i, *_ = np.linalg.lstsq(X, lam.imag / s, rcond=None)
    X2 = np.stack([np.ones_like(s), -s**2], axis=1)
    cr, res_r, *_ = np.linalg.lstsq(X2, -lam.real / s**2, rcond=None)
    resid = np.concatenate([X @ ci - lam.imag / s, X2 @ cr + lam.real / s**2])
    return ci[0], cr[0], float(np.sqrt(np.mean(resid**2)))


def fit_expansion(branch: SpectrumBranch, r0: float = 0.3, rel_tol: float = 0.02,
                  abs_tol: float = 1e-3) -> BranchFit:
    """Least-squares slope c and curvature a of lambda(s) = i c s - a s^2 + ...

    The next odd (s^3) and even (s^4) terms are fitted alongside, and the fit is
    repeated on s <= r0/2; the two must agree within ``rel_tol`` (relative)
    or ``abs_tol`` (absolute, for coefficients that vanish).
    """
    keep = branch.s <= r0 * (1 + 1e-12)
    if keep.sum() < 6:
        raise ValueError(f"need at least 6 samples with s <= {r0}, got {keep.sum()}")
    s, lam = branch.s[keep], branch.values[keep]
    c, a, resid = _coeff_fit(s, lam)
    half = s <= r0 / 2
    if half.sum() >= 3:
        hc, ha, _ = _coeff_fit(s[half], lam[half])
    else:
        hc, ha = c, a
    ok = all(abs(x - y) <= max(rel_tol * abs(x), abs_tol) for x, y in ((c, hc), (a, ha)))
    cubic = float(max(np.max(np.abs(lam.imag - c * s) / s**3),
                      np.max(np.abs(lam.real + a * s**2) / s**3)))
    fit = BranchFit(c_imag=float(c), c_real=float(a), residual=resid, cubic_constant=cubic,
                    half_c_imag=float(hc), half_c_real=float(ha), stable=bool(ok),
                    window=(float(s.min()), float(s.max())), samples=int(keep.sum()))
    if not ok:
        log.warning("branch %s of %s: unstable fit (%s)", branch.label, branch.kind, fit)
    return fit


# -- analytic coefficients ----------------------------------------------------

@dataclass(frozen=True)
class ExpansionCoefficients:
    a_plus1: float
    a_0: float
    a_2: float
    kappa1: float
    kappa2: float
    kappa3: float
    kappa5: float
    kappa6: float
    mu: float
    a0_dispersion: float
    b: float = 1.0
    inner_11: float = 0.0
    inner_44: float = 0.0
    inner_22: float = 0.0

    def curvature(self, label: int) -> float:
        return {-1: self.a_plus1, 1: self.a_plus1, 0: self.a_0, 2: self.a_2, 3: self.a_2}[label]


def transport_inner(asm: CollisionAssembly, j: int) -> float:
    """(L^{-1} P1 (v1 chi_j), v1 chi_j)."""
    g = multiplication(asm.basis, 0) @ chi(asm.basis, j).real
    x = solve_restricted(asm, "L", g)
    return float(x @ projector(asm.basis, "P1") @ g)


def analytic_coefficients(asm: CollisionAssembly, b: float = 1.0,
                          mu: float | None = None) -> ExpansionCoefficients:
    """Curvatures of the five mVPB branches and the transport coefficients.

    ``b`` is the field constant of the generalized potential equation; b = 1 is
    the standard mVPB system and b = inf gives the pure Boltzmann operator E.
    """
    A11 = transport_inner(asm, 1)
    A44 = transport_inner(asm, 4)
    A22 = transport_inner(asm, 2)
    x = solve_restricted(asm, "L1", chi(asm.basis, 1).real)
    K3 = float(x @ chi(asm.basis, 1).real)
    if np.isinf(b):
        w_pm, w_0 = 1 / 5, 3 / 5
    else:
        w_pm, w_0 = b / (5 * b + 3), 3 * (b + 1) / (5 * b + 3)
    if mu is None:
        mu = coercivity_gap(asm).mu
    coeffs = ExpansionCoefficients(
        a_plus1=-w_pm * A44 - 0.5 * A11, a_0=-w_0 * A44, a_2=-A22,
        kappa1=-A22, kappa2=-A44, kappa3=-K3, kappa5=-A22, kappa6=-A44,
        mu=mu, a0_dispersion=min(mu, -K3), b=b, inner_11=A11, inner_44=A44, inner_22=A22,
    )
    bad = {k: v for k, v in coeffs.__dict__.items()
           if k.startswith(("a_", "kappa")) and not v > 0}
    if bad:
        raise AssemblyError(f"coefficients with the wrong sign: {bad}")
    return coeffs


# -- dispersion function --------------------------------------------------------

class DispersionFunction:
    """lambda -> D(lambda, s) = (1+s^2) (R chi1, chi1) at fixed s.

    R = [L1 - lambda P_r - i s P_r V1 P_r]^{-1} on the complement of chi0.
    Since chi0 is the first basis vector, the complement is the trailing
    block, and a Schur factorization makes each evaluation a triangular solve.
    """

    def __init__(self, asm: CollisionAssembly, s: float, mu: float | None = None):
        self.s = float(s)
        self.mu = coercivity_gap(asm).mu if mu is None else mu
        V = multiplication(asm.basis, 0)
        A = (asm.L1 - 1j * s * V)[1:, 1:]
        self.T, self.Z = sla.schur(A, output="complex")
        rhs = chi(asm.basis, 1)[1:]
        self._zr = self.Z.conj().T @ rhs
        self._zl = self.Z.conj().T @ rhs.conj()

    def __call__(self, lam: complex) -> complex:
        if not np.real(lam) > -self.mu:
            raise ValueError(f"Re lambda = {np.real(lam):.4g} outside the half-plane "
                             f"Re lambda > -mu = {-self.mu:.4g} where R exists")
        T = self.T - lam * np.eye(len(self.T))
        y = sla.solve_triangular(T, self._zr)
        return complex((1 + self.s**2) * np.vdot(self._zl, y))


def dispersion_eval(lam: complex, s: float, asm: CollisionAssembly,
                    mu: float | None = None) -> complex:
    """D(lambda, s) by a direct restricted solve."""
    if mu is None:
        mu = coercivity_gap(asm).mu
    if not np.real(lam) > -mu:
        raise ValueError(f"Re lambda = {np.real(lam):.4g} must exceed -mu = {-mu:.4g}")
    V = multiplication(asm.basis, 0)
    A = (asm.L1 - 1j * s * V)[1:, 1:] - lam * np.eye(asm.basis.dim - 1)
    rhs = chi(asm.basis, 1)[1:]
    x = np.linalg.solve(A, rhs)
    return complex((1 + s**2) * np.vdot(rhs, x))


def _winding(F, path: np.ndarray, max_depth: int = 12) -> tuple[int, float]:
    """Winding number of F around a closed polygon, refining large phase jumps."""
    total = 0.0
    fmin = np.inf
    vals = [F(z) for z in path]
    for k in range(len(path) - 1):
        stack = [(path[k], path[k + 1], vals[k], vals[k + 1], 0)]
        while stack:
            z0, z1, f0, f1, depth = stack.pop()
            fmin = min(fmin, abs(f0), abs(f1))
            step = np.angle(f1 / f0)
            if abs(step) > np.pi / 8 and depth < max_depth:
                zm = 0.5 * (z0 + z1)
                fm = F(zm)
                stack.append((zm, z1, fm, f1, depth + 1))
                stack.append((z0, zm, f0, fm, depth + 1))
            else:
                total += step
    return int(round(total / (2 * np.pi))), float(fmin)


@dataclass(frozen=True)
class RootScan:
    a0: float
    r0: float
    box: tuple
    s_values: np.ndarray
    winding: np.ndarray
    min_abs_grid: np.ndarray
    min_abs_boundary: np.ndarray

    @property
    def root_free(self) -> bool:
        return bool(np.all(self.winding == 0) and np.all(self.min_abs_grid > 0))


def root_scan(asm: CollisionAssembly, r0: float = 0.3, n_re: int = 50, n_im: int = 50,
              n_s: int = 20, coeffs: ExpansionCoefficients | None = None) -> RootScan:
    """Check that lambda = D(lambda, s) has no root with Re lambda >= -a0/4, s <= r0.

    With R dissipative, |D(lambda, s)| <= (1+s^2)/(mu + Re lambda), so roots in
    the half-plane lie in a bounded box.  For every s the winding number of
    lambda - D around that box is computed (argument principle) and |lambda - D|
    is sampled on an n_re x n_im grid inside it.
    """
    if coeffs is None:
        coeffs = analytic_coefficients(asm)
    mu, a0 = coeffs.mu, coeffs.a0_dispersion
    left = -a0 / 4
    bound = 1.1 * (1 + r0**2) / (mu + left) + 1.0
    box = (left, bound, -bound, bound)
    s_values = np.linspace(0.0, r0, n_s)
    xs = np.linspace(left, bound, n_re)
    ys = np.linspace(-bound, bound, n_im)
    corners = [left - 1j * bound, bound - 1j * bound, bound + 1j * bound, left + 1j * bound]
    path = np.concatenate([np.linspace(corners[k], corners[(k + 1) % 4], n_re, endpoint=False)
                           for k in range(4)] + [[corners[0]]])
    winding, mins, bmins = [], [], []
    for s in s_values:
        D = DispersionFunction(asm, s, mu)
        F = lambda z: z - D(z)
        wnum, bmin = _winding(F, path)
        grid = np.array([[abs(F(x + 1j * y)) for x in xs] for y in ys])
        winding.append(wnum)
        bmins.append(bmin)
        mins.append(float(grid.min()))
    return RootScan(a0=a0, r0=r0, box=box, s_values=s_values, winding=np.array(winding),
                    min_abs_grid=np.array(mins), min_abs_boundary=np.array(bmins))


def dispersion_consistency(asm: CollisionAssembly, s: float, mu: float | None = None,
                           pd_tol: float = 1e-6):
    """|lambda - D(lambda, s)| for eigenvalues of B(s) with Re > -mu/2 and a mass part."""
    if mu is None:
        mu = coercivity_gap(asm).mu
    mode = assemble_mode("B", s, asm)
    res = eigens(mode)
    D = DispersionFunction(asm, s, mu)
    out = []
    for lam, psi in zip(res.values, res.vectors.T):
        if lam.real > -mu / 2 and abs(psi[0]) > pd_tol * np.linalg.norm(psi):
            out.append((complex(lam), abs(lam - D(lam))))
    return out


# -- gap scan -------------------------------------------------------------------

def default_gap_grid(points: int = 60) -> np.ndarray:
    return np.geomspace(1e-2, 10.0, points)


def gap_scan(kind: str, s_grid, asm: CollisionAssembly, a: float = 1.0, b: float = 1.0,
             nu0: float | None = None) -> np.ndarray:
    """Rows (s, max Re lambda over resolved eigenvalues)."""
    if nu0 is None:
        nu0 = coercivity_gap(asm).nu0
    rows = []
    for s in np.asarray(s_grid, dtype=float):
        res = eigens(assemble_mode(kind, s, asm, a, b), nu0=nu0)
        rows.append((s, res.max_real()))
    return np.array(rows)
