"""Operator bases, index packings and reorderings between map representations.

Conventions
-----------
A d x d density matrix is vectorised row by row, ``vec(rho)[<ij>] = rho[i, j]``
with ``<ij> = d*i + j``. A superoperator ``L`` (d^2 x d^2) acts on such
vectors. For a two-part system with factor dimensions ``d1, d2`` the state
index is ``<j1 j2> = d2*j1 + j2`` and two four-index packings are used::

    <i1 i2 j1 j2> = (d2*i1 + i2) * d1*d2 + (d2*j1 + j2)     # vec of rho
    <i1 k1 i2 k2> = (d1*i1 + k1) * d2**2 + (d2*i2 + k2)    # product operator index

Reorderings are written as explicit index loops so that each line can be
checked against the corresponding element formula.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np

from .linalg import LinalgError, as_cmatrix, kron

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, X, Y, Z)


class BasisError(ValueError):
    """Raised when a basis cannot be used for the requested conversion."""


@dataclass(frozen=True)
class IndexConvention:
    d1: int = 2
    d2: int = 2

    @property
    def dim(self) -> int:
        return self.d1 * self.d2

    def state(self, j1: int, j2: int) -> int:
        return self.d2 * j1 + j2

    def vec_index(self, i1: int, i2: int, j1: int, j2: int) -> int:
        """Position of rho[<i1 i2>, <j1 j2>] in the row-major vectorisation."""
        return self.state(i1, i2) * self.dim + self.state(j1, j2)

    def product_index(self, i1: int, k1: int, i2: int, k2: int) -> int:
        """Index of |i1><k1| (x) |i2><k2| in the product elementary basis."""
        return (self.d1 * i1 + k1) * self.d2 ** 2 + (self.d2 * i2 + k2)


@dataclass(frozen=True, eq=False)
class OperatorBasis:
    """Ordered set of d^2 linearly independent d x d operators.

    ``q`` is the normalisation ``Tr(E_n^dagger E_m) = q * delta_nm``; it is
    only meaningful when ``orthogonal`` is set.
    """

    ops: np.ndarray
    q: float
    orthogonal: bool
    name: str = "custom"
    factors: Tuple["OperatorBasis", ...] = field(default=(), repr=False)

    @property
    def d(self) -> int:
        return self.ops.shape[1]

    def __len__(self) -> int:
        return self.ops.shape[0]

    def __getitem__(self, n: int) -> np.ndarray:
        return self.ops[n]

    def gram(self) -> np.ndarray:
        e = ebold_matrix(self)
        return e.conj().T @ e

    @classmethod
    def from_ops(cls, ops: Sequence, name: str = "custom", tol: float = 1e-12) -> "OperatorBasis":
        arr = np.array([as_cmatrix(o) for o in ops], dtype=complex)
        n, d, d2 = arr.shape
        if d != d2 or n != d * d:
            raise BasisError(f"need {d * d} square {d}x{d} operators, got {n} of shape {(d, d2)}")
        e = arr.reshape(n, d * d).T
        if abs(np.linalg.det(e)) < tol:
            raise BasisError("operators are linearly dependent")
        g = e.conj().T @ e
        q = float(np.real(g[0, 0]))
        orthogonal = bool(np.max(np.abs(g - q * np.eye(n))) <= tol * max(1.0, q))
        return cls(arr, q, orthogonal, name)


def pauli_basis_1q() -> OperatorBasis:
    return OperatorBasis(np.array(PAULIS), 2.0, True, "pauli")


def modified_pauli_basis_1q() -> OperatorBasis:
    """Pauli basis with Y replaced by -iY."""
    return OperatorBasis(np.array([I2, X, -1j * Y, Z]), 2.0, True, "modified_pauli")


def product_basis(b1: OperatorBasis, b2: OperatorBasis, name: str | None = None) -> OperatorBasis:
    """E_<n1 n2> = E1_n1 (x) E2_n2 with <n1 n2> = d2^2 * n1 + n2."""
    ops = np.array([kron(e1, e2) for e1 in b1.ops for e2 in b2.ops])
    orth = b1.orthogonal and b2.orthogonal
    return OperatorBasis(ops, b1.q * b2.q, orth, name or f"{b1.name}x{b2.name}", (b1, b2))


def pauli_basis_2q() -> OperatorBasis:
    return product_basis(pauli_basis_1q(), pauli_basis_1q(), "pauli")


def modified_pauli_basis_2q() -> OperatorBasis:
    return product_basis(modified_pauli_basis_1q(), modified_pauli_basis_1q(), "modified_pauli")


def elementary_basis(d: int) -> OperatorBasis:
    """F_<ij> = |i><j|."""
    if d < 2:
        raise BasisError("dimension must be at least 2")
    ops = np.zeros((d * d, d, d), dtype=complex)
    for i, j in itertools.product(range(d), repeat=2):
        ops[d * i + j, i, j] = 1.0
    return OperatorBasis(ops, 1.0, True, "elementary")


def elementary_product_basis(d1: int = 2, d2: int = 2) -> OperatorBasis:
    return product_basis(elementary_basis(d1), elementary_basis(d2), "elementary")


@lru_cache(maxsize=None)
def _named(name: str) -> Tuple[OperatorBasis, OperatorBasis]:
    if name == "pauli":
        return pauli_basis_1q(), pauli_basis_1q()
    if name == "modified_pauli":
        return modified_pauli_basis_1q(), modified_pauli_basis_1q()
    if name == "elementary":
        return elementary_basis(2), elementary_basis(2)
    raise BasisError(f"unknown basis name {name!r}")


def named_factors(name: str) -> Tuple[OperatorBasis, OperatorBasis]:
    """Single-qubit factor bases for one of 'pauli', 'modified_pauli', 'elementary'."""
    return _named(name)


def ebold_matrix(basis: OperatorBasis) -> np.ndarray:
    """d^2 x d^2 matrix whose n-th column is the row-major vectorisation of E_n."""
    n = len(basis)
    return basis.ops.reshape(n, -1).T.copy()


def reorder_L_to_J(L, d: int) -> np.ndarray:
    """J[<ij>, <kl>] = L[<ik>, <jl>]."""
    L = as_cmatrix(L)
    if L.shape != (d * d, d * d):
        raise LinalgError(f"expected {d * d}x{d * d} superoperator, got {L.shape}")
    J = np.empty_like(L)
    for i in range(d):
        for j in range(d):
            for k in range(d):
                for l in range(d):
                    J[d * i + j, d * k + l] = L[d * i + k, d * j + l]
    return J


def reorder_L_to_Jtilde(L, conv: IndexConvention = IndexConvention()) -> np.ndarray:
    """Jt[<i1 k1 i2 k2>, <j1 l1 j2 l2>] = L[<i1 i2 j1 j2>, <k1 k2 l1 l2>].

    The same reordering maps a generator matrix to its nu-matrix.
    """
    L = as_cmatrix(L)
    n = conv.dim ** 2
    if L.shape != (n, n):
        raise LinalgError(f"expected {n}x{n} superoperator, got {L.shape}")
    Jt = np.empty_like(L)
    r1, r2 = range(conv.d1), range(conv.d2)
    for i1, k1, j1, l1 in itertools.product(r1, repeat=4):
        for i2, k2, j2, l2 in itertools.product(r2, repeat=4):
            Jt[conv.product_index(i1, k1, i2, k2), conv.product_index(j1, l1, j2, l2)] = \
                L[conv.vec_index(i1, i2, j1, j2), conv.vec_index(k1, k2, l1, l2)]
    return Jt


def reorder_Jtilde_to_L(Jt, conv: IndexConvention = IndexConvention()) -> np.ndarray:
    Jt = as_cmatrix(Jt)
    n = conv.dim ** 2
    if Jt.shape != (n, n):
        raise LinalgError(f"expected {n}x{n} matrix, got {Jt.shape}")
    L = np.empty_like(Jt)
    r1, r2 = range(conv.d1), range(conv.d2)
    for i1, k1, j1, l1 in itertools.product(r1, repeat=4):
        for i2, k2, j2, l2 in itertools.product(r2, repeat=4):
            L[conv.vec_index(i1, i2, j1, j2), conv.vec_index(k1, k2, l1, l2)] = \
                Jt[conv.product_index(i1, k1, i2, k2), conv.product_index(j1, l1, j2, l2)]
    return L


def _require_orthogonal(*bases: OperatorBasis) -> None:
    for b in bases:
        if not b.orthogonal:
            raise BasisError(f"basis {b.name!r} is not orthogonal")


def chi_from_Jtilde(Jt, b1: OperatorBasis, b2: OperatorBasis) -> np.ndarray:
    """Process matrix in the product basis b1 (x) b2 from the reordered map.

    chi = (Q1 Q2)^-2 (E1^dagger (x) E2^dagger) Jt (E1 (x) E2); with Pauli
    factors Q1 Q2 = d and this is the usual d^-2 prefactor.
    """
    _require_orthogonal(b1, b2)
    e = kron(ebold_matrix(b1), ebold_matrix(b2))
    return e.conj().T @ as_cmatrix(Jt) @ e / (b1.q * b2.q) ** 2


def Jtilde_from_chi(chi, b1: OperatorBasis, b2: OperatorBasis) -> np.ndarray:
    _require_orthogonal(b1, b2)
    e = kron(ebold_matrix(b1), ebold_matrix(b2))
    return e @ as_cmatrix(chi) @ e.conj().T


def chi_from_superop(L, b1: OperatorBasis, b2: OperatorBasis) -> np.ndarray:
    conv = IndexConvention(b1.d, b2.d)
    return chi_from_Jtilde(reorder_L_to_Jtilde(L, conv), b1, b2)


def superop_from_chi(chi, b1: OperatorBasis, b2: OperatorBasis) -> np.ndarray:
    conv = IndexConvention(b1.d, b2.d)
    return reorder_Jtilde_to_L(Jtilde_from_chi(chi, b1, b2), conv)


def chi_from_J(J, basis: OperatorBasis) -> np.ndarray:
    """Single-system conversion chi = E^-1 J (E^-1)^dagger, any basis with d <= 4."""
    if basis.d > 4:
        raise BasisError("general (oblique) conversion is limited to d <= 4")
    e = ebold_matrix(basis)
    if basis.orthogonal:
        einv = e.conj().T / basis.q
    else:
        einv = np.linalg.inv(e)
    return einv @ as_cmatrix(J) @ einv.conj().T


def chi_identity(basis: OperatorBasis) -> np.ndarray:
    """Process matrix of the identity map in ``basis``."""
    e = ebold_matrix(basis)
    d = basis.d
    if basis.orthogonal:
        tr = np.trace(basis.ops, axis1=1, axis2=2)
        return np.outer(tr.conj(), tr) / basis.q ** 2
    einv = np.linalg.inv(e)
    diag = [d * i + i for i in range(d)]
    col = einv[:, diag].sum(axis=1)
    return np.outer(col, col.conj())


def basis_change(chi, src: OperatorBasis, dst: OperatorBasis, tol: float = 1e-12) -> np.ndarray:
    """chi' = V chi V^dagger where E_m = sum_n V[n, m] E'_n."""
    if src.d != dst.d:
        raise BasisError("bases act on different dimensions")
    e_src = ebold_matrix(src)
    e_dst = ebold_matrix(dst)
    if dst.orthogonal:
        v = e_dst.conj().T @ e_src / dst.q
    else:
        if abs(np.linalg.det(e_dst)) < tol:
            raise BasisError("target basis is singular")
        v = np.linalg.solve(e_dst, e_src)
    if abs(np.linalg.det(v)) < tol:
        raise BasisError("singular basis transformation")
    return v @ as_cmatrix(chi) @ v.conj().T
