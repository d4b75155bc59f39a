"""Hermite velocity basis, projections and the three inner products.

Every velocity function is a coefficient vector in the orthonormal basis

    phi_k(v) = p_k(v) * sqrt(M(v)),   p_k = He_a(v1) He_b(v2) He_c(v3) / sqrt(a! b! c!)

truncated to total degree ``a + b + c <= degree``.  With this choice the
collision invariants are finite combinations of basis vectors and
multiplication by ``v_j`` is a three-term recurrence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb, sqrt

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

MIN_DEGREE = 4


@dataclass(frozen=True)
class ProductKind:
    """Which inner product to use on velocity functions.

    ``plain`` is (f, g); ``bvpb`` adds (1/s^2)(P_d f, P_d g); ``mvpb`` adds
    (1/(b + a s^2))(P_d f, P_d g), which is 1/(1+s^2) at the default a = b = 1.
    """

    kind: str = "plain"
    s: float = 0.0
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in ("plain", "bvpb", "mvpb"):
            raise ValueError(f"unknown product kind {self.kind!r}")
        if self.kind == "bvpb" and self.s == 0:
            raise ValueError("bvpb-weighted product needs s != 0 (1/s^2 weight)")
        if self.a <= 0 or self.b <= 0:
            raise ValueError("field constants a, b must be positive")

    @property
    def density_weight(self) -> float:
        if self.kind == "bvpb":
            return 1.0 / self.s**2
        if self.kind == "mvpb":
            return 1.0 / (self.b + self.a * self.s**2)
        return 0.0


PLAIN = ProductKind()


def hermite_table(x: np.ndarray, degree: int) -> np.ndarray:
    """Normalized probabilists' Hermite polynomials He_n(x)/sqrt(n!), n <= degree.

    Returns an array of shape ``x.shape + (degree + 1,)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = x
    for n in range(1, degree):
        # He_{n+1} = x He_n - n He_{n-1}, rescaled by 1/sqrt(n+1)!
        out[..., n + 1] = (x * out[..., n] - sqrt(n) * out[..., n - 1]) / sqrt(n + 1)
    return out


def _index_map(degree: int) -> np.ndarray:
    idx = [
        (a, b, total - a - b)
        for total in range(degree + 1)
        for a in range(total, -1, -1)
        for b in range(total - a, -1, -1)
    ]
    return np.array(idx, dtype=int)


@dataclass(frozen=True)
class BasisSet:
    degree: int
    index: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.index)

    @cached_property
    def position(self) -> dict[tuple[int, int, int], int]:
        return {tuple(int(n) for n in row): k for k, row in enumerate(self.index)}

    def poly(self, v: np.ndarray) -> np.ndarray:
        """Polynomial parts p_k at points ``v`` of shape (n, 3); returns (n, dim)."""
        v = np.atleast_2d(v)
        # per-axis tables laid out (degree, n) so the gathers copy contiguous rows
        h = [np.ascontiguousarray(hermite_table(v[:, k], self.degree).T) for k in range(3)]
        a, b, c = self.index.T
        out = h[0][a]
        out *= h[1][b]
        out *= h[2][c]
        return out.T

    def evaluate(self, v: np.ndarray) -> np.ndarray:
        """Basis functions phi_k at points ``v``; returns (n, dim)."""
        v = np.atleast_2d(v)
        return self.poly(v) * sqrt_maxwellian(v)[:, None]

    def function_values(self, coeffs: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.evaluate(v) @ coeffs

    @cached_property
    def gram(self) -> np.ndarray:
        """Gram matrix of the basis evaluated by the tensor Gauss-Hermite rule."""
        p = self.poly(self.nodes)
        return (p * self.weights[:, None]).T @ p

    def quadrature_norm(self, coeffs: np.ndarray) -> float:
        vals = self.poly(self.nodes) @ coeffs
        return float(np.sqrt(np.sum(self.weights * np.abs(vals) ** 2)))

    @cached_property
    def sectors(self) -> np.ndarray:
        """Parity class (n2 mod 2, n3 mod 2) of each basis element, encoded 0..3."""
        return (self.index[:, 1] % 2) + 2 * (self.index[:, 2] % 2)


def sqrt_maxwellian(v: np.ndarray) -> np.ndarray:
    v = np.atleast_2d(v)
    return (2 * np.pi) ** -0.75 * np.exp(-0.25 * np.sum(v * v, axis=-1))


def maxwellian(v: np.ndarray) -> np.ndarray:
    return sqrt_maxwellian(v) ** 2


def build_basis(degree: int) -> BasisSet:
    """Total-degree Hermite basis; dimension is C(degree + 3, 3)."""
    if int(degree) != degree or degree < MIN_DEGREE:
        raise ValueError(
            f"degree cutoff {degree} < {MIN_DEGREE}: the Burnett functions v1*chi_4 "
            "(degree 3) and the energy invariant chi_4 (degree 2) need slack to be "
            "represented under multiplication by v1"
        )
    degree = int(degree)
    index = _index_map(degree)
    assert len(index) == comb(degree + 3, 3)
    # per-axis order degree+4 makes products of two basis functions exact
    x, w = hermegauss(degree + 4)
    w = w / np.sqrt(2 * np.pi)
    g = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    gw = np.einsum("i,j,k->ijk", w, w, w).ravel()
    return BasisSet(degree=degree, index=index, nodes=g, weights=gw)


def chi(basis: BasisSet, j: int) -> np.ndarray:
    """Coefficient vector of the collision invariant chi_j, j = 0..4."""
    if j not in range(5):
        raise ValueError(f"collision invariant index must be 0..4, got {j}")
    out = np.zeros(basis.dim, dtype=complex)
    pos = basis.position
    if j == 0:
        out[pos[(0, 0, 0)]] = 1.0
    elif j < 4:
        e = [0, 0, 0]
        e[j - 1] = 1
        out[pos[tuple(e)]] = 1.0
    else:
        # (|v|^2 - 3)/sqrt(6) = sum_i He_2(v_i)/sqrt(6) = sum_i p_2(v_i)/sqrt(3)
        for key in ((2, 0, 0), (0, 2, 0), (0, 0, 2)):
            out[pos[key]] = 1 / sqrt(3)
    return out


def invariants(basis: BasisSet) -> np.ndarray:
    """Columns chi_0..chi_4, shape (dim, 5), real."""
    return np.stack([chi(basis, j).real for j in range(5)], axis=1)


def projector(basis: BasisSet, which: str) -> np.ndarray:
    X = invariants(basis)
    if which == "P0":
        return X @ X.T
    if which == "P1":
        return np.eye(basis.dim) - X @ X.T
    e0 = X[:, :1]
    if which == "Pd":
        return e0 @ e0.T
    if which == "Pr":
        return np.eye(basis.dim) - e0 @ e0.T
    raise ValueError(f"unknown projection {which!r}")


def project(basis: BasisSet, f: np.ndarray, which: str) -> np.ndarray:
    return projector(basis, which) @ f


def weight_matrix(basis: BasisSet, product: ProductKind = PLAIN) -> np.ndarray:
    """Gram matrix W of the product: <f, g> = g^H W f."""
    W = np.eye(basis.dim)
    W[0, 0] += product.density_weight
    return W


def inner(f: np.ndarray, g: np.ndarray, product: ProductKind = PLAIN) -> complex:
    """Sesquilinear product, conjugate-linear in ``g``."""
    value = np.vdot(g, f)
    w = product.density_weight
    if w:
        value = value + w * f[0] * np.conj(g[0])
    return complex(value)


def norm(f: np.ndarray, product: ProductKind = PLAIN) -> float:
    return float(np.sqrt(inner(f, f, product).real))


def bilinear(f: np.ndarray, g: np.ndarray, product: ProductKind = PLAIN) -> complex:
    """<f, conj(g)>: the pairing in which the mode eigenvectors are biorthonormal."""
    return inner(f, np.conj(g), product)


# -- exact one-dimensional ladder actions -----------------------------------
# v phi_n = sqrt(n+1) phi_{n+1} + sqrt(n) phi_{n-1}
# d/dv phi_n = sqrt(n)/2 phi_{n-1} - sqrt(n+1)/2 phi_{n+1}

def _mult_terms(n: int):
    return [(n + 1, sqrt(n + 1)), (n - 1, sqrt(n))] if n else [(1, 1.0)]


def _deriv_terms(n: int):
    terms = [(n + 1, -0.5 * sqrt(n + 1))]
    if n:
        terms.append((n - 1, 0.5 * sqrt(n)))
    return terms


def multiplication(basis: BasisSet, axis: int = 0) -> np.ndarray:
    """Galerkin matrix of f -> v_axis f (symmetric, from the recurrence)."""
    V = np.zeros((basis.dim, basis.dim))
    pos = basis.position
    for col, key in enumerate(basis.index):
        for n, c in _mult_terms(key[axis]):
            target = list(key)
            target[axis] = n
            row = pos.get(tuple(target))
            if row is not None:
                V[row, col] += c
    return V


def rotation_generator(basis: BasisSet, axis: int) -> np.ndarray:
    """Matrix of (v x grad_v)_axis, a real antisymmetric degree-preserving map."""
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    G = np.zeros((basis.dim, basis.dim))
    pos = basis.position
    for col, key in enumerate(basis.index):
        for a, b, sign in ((i, j, 1.0), (j, i, -1.0)):
            # sign * v_a d/dv_b
            for na, ca in _mult_terms(key[a]):
                for nb, cb in _deriv_terms(key[b]):
                    target = list(key)
                    target[a], target[b] = na, nb
                    row = pos.get(tuple(target))
                    if row is not None:
                        G[row, col] += sign * ca * cb
    return G


def _spherical_chains(basis: BasisSet) -> list[list[np.ndarray]]:
    """For each l, the list over m = l..-l of (dim, n_l) arrays of |n l m> vectors.

    Columns with the same position in every array form one copy of the
    irreducible representation, with phases fixed by the lowering operator.
    """
    J = [rotation_generator(basis, k) for k in range(3)]
    casimir = -(J[0] @ J[0] + J[1] @ J[1] + J[2] @ J[2])
    vals, vecs = np.linalg.eigh(casimir)
    ells = np.rint((-1 + np.sqrt(1 + 4 * np.clip(vals, 0, None))) / 2).astype(int)
    lz = -1j * J[2]
    lower = -1j * J[0] - J[1]
    chains = []
    for ell in np.unique(ells):
        P = vecs[:, ells == ell]
        m_vals, m_vecs = np.linalg.eigh(P.T @ lz @ P)
        top = P @ m_vecs[:, np.isclose(m_vals, ell, atol=1e-6)]
        step = lower
        if ell and np.linalg.norm(lower @ top) < 1e-8:
            step = -1j * J[0] + J[1]
        chain = [top]
        for _ in range(2 * ell):
            nxt = step @ chain[-1]
            chain.append(nxt / np.linalg.norm(nxt, axis=0))
        chains.append(chain)
    return chains


def isotropic_average(A: np.ndarray, basis: BasisSet) -> np.ndarray:
    """Orthogonal projection of ``A`` onto operators commuting with all rotations.

    Equals the Haar average of R A R^T over SO(3); by Schur's lemma it keeps,
    for every l, the m-averaged block between radial copies.
    """
    out = np.zeros((basis.dim, basis.dim), dtype=complex)
    for chain in _spherical_chains(basis):
        block = sum(E.conj().T @ A @ E for E in chain) / len(chain)
        for E in chain:
            out += E @ block @ E.conj().T
    return out.real if np.isrealobj(A) else out
