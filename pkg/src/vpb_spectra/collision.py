"""Hard-sphere linearized collision operators L = K - nu and L1 = K1 - nu.

The quadratic forms are sampled in their symmetrized weak form.  Writing
f = sqrt(M) h, g = sqrt(M) k, with E over (v, v*) ~ M(v) M(v*) and omega
uniform on the sphere,

    (L f, g)  = -pi E[ |u.w| (h' + h'* - h - h*) (k' + k'* - k - k*) ]
    (L1 f, g) = -pi E[ |u.w| ((h' - h)(k' - k) + (h'* - h*)(k'* - k*)) ]

Every sample is symmetric and negative semidefinite and annihilates the
collision invariants exactly; samples are drawn from a wider Gaussian and
reweighted.  nu(v) is computed by deterministic quadrature
and K, K1 are recovered as L + nu, L1 + nu.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import null_space
from scipy.linalg.blas import dsyrk
from scipy.special import ndtri, roots_genlaguerre, roots_legendre
from scipy.stats import qmc

from .basis import BasisSet, build_basis, invariants, isotropic_average

log = logging.getLogger(__name__)

DEFAULT_SAMPLES = 10_000_000
BLOCK = 2**12
NULL_TOL = 1e-4
# block-to-block standard error of the forms relative to the operator norm
STDERR_TOL = 1e-2
# wider than the Maxwellian: keeps degree-10 entries at a few percent per 1e5 samples
SAMPLING_VARIANCE = 3.0


class AssemblyError(RuntimeError):
    pass


# -- collision frequency ----------------------------------------------------

_GL_X, _GL_W = roots_legendre(64)


def collision_frequency(v) -> np.ndarray:
    """nu(v) at points of shape (..., 3); see :func:`collision_frequency_radial`."""
    return collision_frequency_radial(np.linalg.norm(np.asarray(v, dtype=float), axis=-1))


def collision_frequency_radial(r) -> np.ndarray:
    """nu as a function of |v|: 2 pi E|v - Z| with Z standard normal.

    The sphere average of |v - rho n| is r + rho^2/(3r) for rho < r and
    rho + r^2/(3 rho) beyond, leaving a 1D Gauss-Legendre integral in rho
    split at the kink rho = r.
    """
    r = np.asarray(r, dtype=float)
    rr = np.abs(r).reshape(-1, 1)
    dens = lambda rho: np.sqrt(2 / np.pi) * rho**2 * np.exp(-0.5 * rho**2)
    x = 0.5 * rr * (_GL_X + 1)
    safe = np.where(rr > 0, rr, 1.0)
    inner = 0.5 * rr[:, 0] * np.sum(_GL_W * dens(x) * (rr + x**2 / (3 * safe)), axis=1)
    x = rr + 7.0 * (_GL_X + 1)
    outer = 7.0 * np.sum(_GL_W * dens(x) * (x + rr**2 / (3 * x)), axis=1)
    return (2 * np.pi * (inner + outer)).reshape(r.shape)


def spherical_rule(degree: int, n_radial: int = 48):
    """Quadrature in spherical coordinates against M(v) dv.

    Exact for polynomials of total degree <= 2*degree in the angles; the radial
    rule is generalized Gauss-Laguerre in t = |v|^2/2.
    """
    t, wt = roots_genlaguerre(n_radial, 0.5)
    r = np.sqrt(2 * t)
    wr = wt * np.sqrt(2) * (2 * np.pi) ** -1.5
    c, wc = roots_legendre(degree + 2)
    nphi = 2 * degree + 2
    phi = 2 * np.pi * np.arange(nphi) / nphi
    wphi = np.full(nphi, 2 * np.pi / nphi)
    R, C, P = np.meshgrid(r, c, phi, indexing="ij")
    S = np.sqrt(1 - C**2)
    nodes = np.stack([R * S * np.cos(P), R * S * np.sin(P), R * C], axis=-1).reshape(-1, 3)
    weights = np.einsum("i,j,k->ijk", wr, wc, wphi).ravel()
    return nodes, weights, r


def nu_matrix(basis: BasisSet, n_radial: int = 48) -> np.ndarray:
    nodes, weights, radii = spherical_rule(basis.degree, n_radial)
    nu_r = collision_frequency_radial(radii)
    nu_nodes = np.repeat(nu_r, len(weights) // len(radii))
    p = basis.poly(nodes)
    A = (p * (weights * nu_nodes)[:, None]).T @ p
    return 0.5 * (A + A.T)


def frequency_bounds(radii: np.ndarray) -> tuple[float, float]:
    """Tightest (nu0, nu1) with nu0 (1+r) <= nu(r) <= nu1 (1+r) on ``radii``."""
    ratio = collision_frequency_radial(radii) / (1 + radii)
    return float(ratio.min()), float(ratio.max())


# -- Galerkin assembly ------------------------------------------------------

@dataclass(frozen=True)
class CollisionAssembly:
    basis: BasisSet = field(repr=False)
    K: np.ndarray = field(repr=False)
    K1: np.ndarray = field(repr=False)
    nu_diag: np.ndarray = field(repr=False)
    sample_count: int
    assembly_seed: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def L(self) -> np.ndarray:
        return self.K - self.nu_diag

    @property
    def L1(self) -> np.ndarray:
        return self.K1 - self.nu_diag

    def truncate(self, degree: int) -> CollisionAssembly:
        """Same samples restricted to a lower total degree (a leading sub-block)."""
        sub = build_basis(degree)
        n = sub.dim
        return CollisionAssembly(
            basis=sub, K=self.K[:n, :n], K1=self.K1[:n, :n], nu_diag=nu_matrix(sub),
            sample_count=self.sample_count, assembly_seed=self.assembly_seed,
            diagnostics={**{k: v for k, v in self.diagnostics.items()
                            if k.startswith("max_standard_error")},
                         **null_space_diagnostics(self.L[:n, :n], self.L1[:n, :n], sub)},
        )


def _sample_block(u: np.ndarray, variance: float = SAMPLING_VARIANCE):
    """Map uniform points to (v, v*, v', v'*) and the per-sample weight.

    (v, v*) are drawn from N(0, variance I) in R^6; the weight carries
    |u.w| and the Maxwellian-to-sampling density ratio.  The ratio depends
    only on |v|^2 + |v*|^2, which collisions conserve.
    """
    u = np.clip(u, 1e-15, 1 - 1e-15)
    sigma = np.sqrt(variance)
    v = sigma * ndtri(u[:, 0:3])
    vs = sigma * ndtri(u[:, 3:6])
    cos_t = 2 * u[:, 6] - 1
    sin_t = np.sqrt(1 - cos_t**2)
    phi = 2 * np.pi * u[:, 7]
    w = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)
    un = np.sum((v - vs) * w, axis=1)
    vp = v - un[:, None] * w
    vsp = vs + un[:, None] * w
    energy = np.sum(v * v, axis=1) + np.sum(vs * vs, axis=1)
    ratio = variance**3 * np.exp(-0.5 * energy * (1 - 1 / variance))
    return v, vs, vp, vsp, np.abs(un) * ratio


def _gram(rows: np.ndarray) -> np.ndarray:
    """rows^T rows via a symmetric rank-k update."""
    upper = dsyrk(1.0, rows, trans=1)
    return np.triu(upper) + np.triu(upper, 1).T


def _block_forms(basis: BasisSet, u: np.ndarray):
    v, vs, vp, vsp, weight = _sample_block(u)
    p, ps, pp, psp = (basis.poly(x) for x in (v, vs, vp, vsp))
    n = len(u)
    root = np.sqrt(weight)[:, None]
    pp -= p
    psp -= ps
    L = -np.pi / n * _gram((pp + psp) * root)
    L1 = -np.pi / n * _gram(np.concatenate([pp * root, psp * root]))
    return L, L1


def null_space_diagnostics(L: np.ndarray, L1: np.ndarray, basis: BasisSet) -> dict:
    X = invariants(basis)
    opL = np.linalg.norm(L, 2)
    opL1 = np.linalg.norm(L1, 2)
    res = [float(np.linalg.norm(L @ X[:, j]) / opL) for j in range(5)]
    return {
        "null_residual_L": res,
        "null_residual_L1": float(np.linalg.norm(L1 @ X[:, 0]) / opL1),
        "op_norm_L": float(opL),
        "op_norm_L1": float(opL1),
        "max_eig_L": float(np.linalg.eigvalsh(L).max()),
        "max_eig_L1": float(np.linalg.eigvalsh(L1).max()),
    }


def assemble(basis: BasisSet, samples: int = DEFAULT_SAMPLES, seed: int = 0,
             check: bool = True, stderr_tol: float | None = STDERR_TOL) -> CollisionAssembly:
    """Assemble K, K1 and nu from a scrambled Sobol sample set over (v, v*, omega).

    Blocks are accumulated in a fixed order, so the result depends only on
    (degree, samples, seed).
    """
    nblocks = max(2, -(-int(samples) // BLOCK))
    engine = qmc.Sobol(d=8, scramble=True, seed=seed)
    dim = basis.dim
    acc = {k: np.zeros((dim, dim)) for k in ("L", "L1", "L_sq", "L1_sq")}
    asym = 0.0
    for b in range(nblocks):
        L, L1 = _block_forms(basis, engine.random(BLOCK))
        acc["L"] += L
        acc["L1"] += L1
        acc["L_sq"] += L * L
        acc["L1_sq"] += L1 * L1
        asym = max(asym, float(np.abs(L - L.T).max()), float(np.abs(L1 - L1.T).max()))
        if b % 50 == 0:
            log.debug("assembly block %d/%d", b + 1, nblocks)
    L = acc["L"] / nblocks
    L1 = acc["L1"] / nblocks
    stderr = np.sqrt(np.clip(acc["L_sq"] / nblocks - L**2, 0, None) / (nblocks - 1))
    stderr1 = np.sqrt(np.clip(acc["L1_sq"] / nblocks - L1**2, 0, None) / (nblocks - 1))

    L = isotropic_average(0.5 * (L + L.T), basis)
    L1 = isotropic_average(0.5 * (L1 + L1.T), basis)
    L = 0.5 * (L + L.T)
    L1 = 0.5 * (L1 + L1.T)
    nu = nu_matrix(basis)

    diag = null_space_diagnostics(L, L1, basis)
    diag.update(
        max_asymmetry_before_symmetrization=asym,
        max_standard_error_L=float(stderr.max()),
        max_standard_error_L1=float(stderr1.max()),
        degree=basis.degree,
    )
    asm = CollisionAssembly(basis=basis, K=L + nu, K1=L1 + nu, nu_diag=nu,
                            sample_count=nblocks * BLOCK, assembly_seed=seed,
                            diagnostics=diag)
    if check:
        validate(asm, stderr_tol=stderr_tol)
    return asm


def validate(asm: CollisionAssembly, tol: float = NULL_TOL,
             stderr_tol: float | None = STDERR_TOL) -> None:
    """Raise AssemblyError if the assembly is not trustworthy.

    The null space is exact per sample, so the budget shows up in the Monte
    Carlo standard error (estimated from the spread between sample blocks).
    """
    d = asm.diagnostics
    if stderr_tol is not None:
        rel = max(d["max_standard_error_L"] / d["op_norm_L"],
                  d["max_standard_error_L1"] / d["op_norm_L1"])
        if rel > stderr_tol:
            raise AssemblyError(
                f"Monte Carlo standard error {rel:.2e} of the operator norm exceeds "
                f"{stderr_tol:.0e} with {asm.sample_count} samples; increase the sample budget"
            )
    worst = max(d["null_residual_L"] + [d["null_residual_L1"]])
    if worst > tol:
        raise AssemblyError(
            f"null-space residual {worst:.2e} exceeds {tol:.0e} "
            f"with {asm.sample_count} samples; increase the sample budget"
        )
    top = max(d["max_eig_L"], d["max_eig_L1"])
    if top > 1e-8:
        raise AssemblyError(f"collision operator has a positive eigenvalue {top:.2e}")
    try:
        coercivity_gap(asm)
    except AssemblyError as exc:
        raise AssemblyError(
            f"{exc} (with {asm.sample_count} samples; increase the sample budget)"
        ) from None


# -- coercivity and restricted solves ----------------------------------------

@dataclass(frozen=True)
class GapReport:
    mu: float
    mu_L: float
    mu_L1: float
    nu0: float
    nu1: float


def _complement(asm: CollisionAssembly, which: str) -> np.ndarray:
    X = invariants(asm.basis)
    if which == "L":
        return null_space(X.T)
    if which == "L1":
        return null_space(X[:, :1].T)
    raise ValueError(f"which must be 'L' or 'L1', got {which!r}")


def coercivity_gap(asm: CollisionAssembly) -> GapReport:
    gaps = {}
    for which, A in (("L", asm.L), ("L1", asm.L1)):
        Q = _complement(asm, which)
        top = float(np.linalg.eigvalsh(Q.T @ A @ Q).max())
        if top >= 0:
            raise AssemblyError(f"{which} restricted to the null-space complement has "
                                f"a non-negative eigenvalue {top:.3e}")
        gaps[which] = -top
    _, _, radii = spherical_rule(asm.basis.degree)
    nu0, nu1 = frequency_bounds(np.concatenate([[0.0], radii]))
    return GapReport(mu=min(gaps.values()), mu_L=gaps["L"], mu_L1=gaps["L1"],
                     nu0=nu0, nu1=nu1)


def solve_restricted(asm: CollisionAssembly, which: str, rhs: np.ndarray) -> np.ndarray:
    """Solve A x = P rhs with x in the null-space complement of A (A = L or L1)."""
    A = asm.L if which == "L" else asm.L1
    Q = _complement(asm, which)
    rhs = np.asarray(rhs)
    projected = Q @ (Q.T @ rhs)
    try:
        y = np.linalg.solve(Q.T @ A @ Q, Q.T @ rhs)
    except np.linalg.LinAlgError as exc:
        raise AssemblyError(f"restricted {which} system is singular") from exc
    x = Q @ y
    scale = max(np.linalg.norm(rhs), 1e-300)
    if np.linalg.norm(A @ x - projected) > 1e-10 * scale:
        raise AssemblyError(f"restricted {which} solve residual too large")
    return x


# -- cache -------------------------------------------------------------------

def cache_path(directory: Path, degree: int, samples: int, seed: int) -> Path:
    return Path(directory) / f"collision_d{degree}_n{samples}_s{seed}.npz"


def save(asm: CollisionAssembly, path: Path) -> None:
    header = {
        "degree": asm.basis.degree,
        "sample_count": asm.sample_count,
        "assembly_seed": asm.assembly_seed,
        "diagnostics": asm.diagnostics,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)),
                 K=asm.K, K1=asm.K1, nu_diag=asm.nu_diag)


def load(path: Path) -> CollisionAssembly:
    with np.load(path) as data:
        header = json.loads(str(data["header"]))
        return CollisionAssembly(
            basis=build_basis(header["degree"]), K=data["K"], K1=data["K1"],
            nu_diag=data["nu_diag"], sample_count=header["sample_count"],
            assembly_seed=header["assembly_seed"], diagnostics=header["diagnostics"],
        )


def assemble_cached(degree: int, samples: int, seed: int, cache_dir: Path | None = None,
                    stderr_tol: float | None = STDERR_TOL) -> CollisionAssembly:
    if cache_dir is not None:
        path = cache_path(cache_dir, degree, samples, seed)
        if path.exists():
            asm = load(path)
            validate(asm, stderr_tol=stderr_tol)
            return asm
    asm = assemble(build_basis(degree), samples, seed, stderr_tol=stderr_tol)
    if cache_dir is not None:
        save(asm, path)
    return asm
