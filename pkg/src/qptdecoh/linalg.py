"""Dense complex linear algebra used throughout the package.

Everything here works on plain ``numpy`` arrays of dtype ``complex128``.
Matrices are tiny (4x4 density matrices, 16x16 superoperators and process
matrices), so the routines favour accuracy and transparency over speed.
"""
from __future__ import annotations

import math
from typing import Tuple

import numpy as np

HERMITIAN_TOL = 1e-10
ZERO_TOL = 1e-12


class LinalgError(ValueError):
    """Raised for shape or structure violations of matrix arguments."""


def as_cmatrix(a) -> np.ndarray:
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 2:
        raise LinalgError(f"expected a 2-d matrix, got shape {arr.shape}")
    return arr


def _require_square(a: np.ndarray, what: str = "matrix") -> None:
    if a.shape[0] != a.shape[1]:
        raise LinalgError(f"{what} must be square, got shape {a.shape}")


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    a = as_cmatrix(a)
    if a.shape[0] != a.shape[1]:
        return False
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


def is_psd(a, tol: float = 1e-9) -> bool:
    """True if ``a`` is Hermitian and its smallest eigenvalue is >= -tol."""
    a = as_cmatrix(a)
    if not is_hermitian(a, max(tol, HERMITIAN_TOL)):
        return False
    w, _ = hermitian_eig(0.5 * (a + a.conj().T))
    return bool(w[0] >= -tol)


def kron(a, b) -> np.ndarray:
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    ra, ca = a.shape
    rb, cb = b.shape
    out = a[:, None, :, None] * b[None, :, None, :]
    return out.reshape(ra * rb, ca * cb)


# Pade coefficients and theta bounds from Higham, SIAM J. Matrix Anal. Appl. 26 (2005).
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
         960960.0, 16380.0, 182.0, 1.0),
}
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade_low(a: np.ndarray, m: int) -> Tuple[np.ndarray, np.ndarray]:
    b = _PADE[m]
    n = a.shape[0]
    ident = np.eye(n, dtype=complex)
    powers = [ident, a @ a]
    while len(powers) < (m + 1) // 2:
        powers.append(powers[-1] @ powers[1])
    u = sum(b[2 * k + 1] * powers[k] for k in range(len(powers)))
    v = sum(b[2 * k] * powers[k] for k in range(len(powers)))
    return a @ u, v


def _pade13(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    b = _PADE[13]
    ident = np.eye(a.shape[0], dtype=complex)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    return u, v


def expm(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with Pade approximants.

    Degree 3 to 9 approximants are used when the 1-norm is small enough,
    otherwise the matrix is scaled by ``2**-s`` so that the degree-13
    approximant is accurate, and the result is squared ``s`` times.
    """
    a = as_cmatrix(a)
    _require_square(a)
    if a.shape[0] == 0:
        return a.copy()
    norm1 = float(np.max(np.sum(np.abs(a), axis=0)))
    for m in (3, 5, 7, 9):
        if norm1 <= _THETA[m]:
            u, v = _pade_low(a, m)
            return np.linalg.solve(v - u, v + u)
    s = max(0, int(math.ceil(math.log2(norm1 / _THETA[13]))))
    scaled = a / (2.0 ** s)
    u, v = _pade13(scaled)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


def hermitian_eig(a, tol: float = HERMITIAN_TOL, max_sweeps: int = 100):
    """Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi.

    Returns ``(w, v)`` with real eigenvalues ``w`` in ascending order and a
    unitary ``v`` whose columns are the eigenvectors, ``a @ v == v @ diag(w)``.
    """
    a = as_cmatrix(a)
    _require_square(a)
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    if not is_hermitian(a, tol * scale):
        raise LinalgError("hermitian_eig requires a Hermitian matrix")
    n = a.shape[0]
    work = 0.5 * (a + a.conj().T)
    vecs = np.eye(n, dtype=complex)
    eps = np.finfo(float).eps
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(np.triu(work, 1)) ** 2))
        if off <= eps * max(np.linalg.norm(work), 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = work[p, q]
                mag = abs(apq)
                if mag == 0.0:
                    continue
                phase = apq / mag
                tau = (work[q, q].real - work[p, p].real) / (2.0 * mag)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                idx = [p, q]
                work[:, idx] = work[:, idx] @ rot
                work[idx, :] = rot.conj().T @ work[idx, :]
                work[p, q] = work[q, p] = 0.0
                vecs[:, idx] = vecs[:, idx] @ rot
    w = np.real(np.diag(work))
    order = np.argsort(w, kind="stable")
    return w[order], vecs[:, order]


def trace_norm(a) -> float:
    """Tr sqrt(A^dagger A): sum of |eigenvalues| for Hermitian input, else of singular values."""
    a = as_cmatrix(a)
    _require_square(a)
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    if is_hermitian(a, 1e-13 * scale):
        w, _ = hermitian_eig(0.5 * (a + a.conj().T))
        return float(np.sum(np.abs(w)))
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def partial_trace(chi, subsystem: int, dims: Tuple[int, int]) -> np.ndarray:
    """Trace out ``subsystem`` (1 or 2) of a matrix on a product index space.

    ``dims`` are the index ranges of the two factors, e.g. ``(4, 4)`` for a
    two-qubit process matrix in a product operator basis. With
    ``subsystem=2`` the result has entries ``sum_m2 chi[<m1 m2>, <n1 m2>]``.
    """
    chi = as_cmatrix(chi)
    n1, n2 = dims
    if chi.shape != (n1 * n2, n1 * n2):
        raise LinalgError(f"matrix of shape {chi.shape} does not match dims {dims}")
    t = chi.reshape(n1, n2, n1, n2)
    if subsystem == 2:
        return np.einsum("ajbj->ab", t)
    if subsystem == 1:
        return np.einsum("iaib->ab", t)
    raise LinalgError(f"subsystem must be 1 or 2, got {subsystem}")
