"""Fourier-mode operators at a single wavevector.

At xi = s e1 the transport term v.xi is s V1 and the field term
(v.xi)/|xi|^2 P_d reduces to (V1/s) P_d.  Rotation invariance of L lets every
spectrum be computed on this axis; :func:`assemble_mode` accepts an
arbitrary direction only to check that reduction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSet, ProductKind, multiplication, projector
from .collision import CollisionAssembly

KINDS = ("E", "B", "Bm", "Bm_general")


def multiplication_v1(basis: BasisSet) -> np.ndarray:
    return multiplication(basis, 0)


@dataclass(frozen=True)
class ModeOperator:
    kind: str
    s: float
    matrix: np.ndarray = field(repr=False)
    product: ProductKind
    a: float = 1.0
    b: float = 1.0
    # parity class per basis element when the matrix is block-diagonal in it
    sectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def weights(self) -> np.ndarray:
        """Diagonal of the product's Gram matrix W (only the chi_0 entry differs from 1)."""
        w = np.ones(self.matrix.shape[0])
        w[0] += self.product.density_weight
        return w


def field_coupling(kind: str, s: float, a: float = 1.0, b: float = 1.0) -> float:
    """Coefficient c of the field term -i s c V1 P_d at xi = s e1."""
    if kind == "E":
        return 0.0
    if kind == "B":
        return 1.0 / s**2
    if kind == "Bm":
        return 1.0 / (1.0 + s**2)
    return 1.0 / (b + a * s**2)


def product_for(kind: str, s: float, a: float = 1.0, b: float = 1.0) -> ProductKind:
    if kind == "E":
        return ProductKind()
    if kind == "B":
        return ProductKind("bvpb", s)
    if kind == "Bm":
        return ProductKind("mvpb", s)
    return ProductKind("mvpb", s, a, b)


def assemble_mode(kind: str, s: float, asm: CollisionAssembly, a: float = 1.0,
                  b: float = 1.0, direction=None) -> ModeOperator:
    """Dense matrix of the mode operator at xi = s * direction (default e1).

    E = L - i s V1;  B = L1 - i s V1 - (i/s) V1 P_d;
    Bm = L - i s V1 - i s/(1+s^2) V1 P_d;  Bm_general replaces 1+s^2 by b+a s^2.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown mode kind {kind!r}; expected one of {KINDS}")
    if kind == "B" and s == 0:
        raise ValueError("kind B needs s != 0: the field coupling carries 1/s^2")
    if kind == "Bm_general" and (a <= 0 or b <= 0):
        raise ValueError("Bm_general needs a, b > 0")
    basis = asm.basis
    if direction is None:
        V = multiplication_v1(basis)
    else:
        omega = np.asarray(direction, dtype=float)
        omega = omega / np.linalg.norm(omega)
        V = sum(omega[k] * multiplication(basis, k) for k in range(3))
    base = asm.L1 if kind == "B" else asm.L
    Pd = projector(basis, "Pd")
    c = field_coupling(kind, s, a, b)
    matrix = base - 1j * s * V - 1j * s * c * (V @ Pd)
    # on the e1 axis, v2 -> -v2 and v3 -> -v3 are symmetries, so the parity
    # classes of (n2, n3) decouple
    return ModeOperator(kind=kind, s=float(s), matrix=matrix,
                        product=product_for(kind, s, a, b), a=a, b=b,
                        sectors=basis.sectors if direction is None else None)
