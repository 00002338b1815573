"""Markovian decoherence generators for two qubits and their lambda-matrices.

All rates are in 1/s. Generators are 16x16 matrices acting on the row-major
vectorised two-qubit density matrix (see :mod:`qptdecoh.bases`).

The models rest on the usual Markovian assumptions (noise correlation times
short compared to 1/rate and 1/S); these are documented, not checked.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .bases import (IndexConvention, OperatorBasis, chi_from_Jtilde, pauli_basis_1q,
                    reorder_L_to_Jtilde)
from .linalg import LinalgError, as_cmatrix


class ModelError(ValueError):
    """Invalid decoherence parameters."""


def superop_from_action(action: Callable[[np.ndarray], np.ndarray], d: int) -> np.ndarray:
    """Matrix of a linear map on d x d matrices, built column by column."""
    out = np.zeros((d * d, d * d), dtype=complex)
    for k, l in itertools.product(range(d), repeat=2):
        unit = np.zeros((d, d), dtype=complex)
        unit[k, l] = 1.0
        out[:, d * k + l] = np.asarray(action(unit), dtype=complex).reshape(-1)
    return out


def local_bloch_generator_1q(gamma_d: float, gamma_u: float, t2: float) -> np.ndarray:
    """One-qubit Bloch-equation generator on (rho00, rho01, rho10, rho11)."""
    if gamma_d < 0 or gamma_u < 0:
        raise ModelError("energy relaxation rates must be non-negative")
    inv_t2 = 0.0 if math.isinf(t2) else 1.0 / t2
    if inv_t2 < (gamma_d + gamma_u) / 2 * (1 - 1e-12):
        raise ModelError(
            f"1/T2 = {inv_t2:g} is below (gamma_d + gamma_u)/2 = {(gamma_d + gamma_u) / 2:g}: "
            "negative pure-dephasing rate")
    return np.array([
        [-gamma_u, 0, 0, gamma_d],
        [0, -inv_t2, 0, 0],
        [0, 0, -inv_t2, 0],
        [gamma_u, 0, 0, -gamma_d],
    ], dtype=complex)


def lift_local(L1, L2) -> np.ndarray:
    """Two-qubit generator for independent decoherence of each qubit."""
    L1, L2 = as_cmatrix(L1), as_cmatrix(L2)
    if L1.shape != (4, 4) or L2.shape != (4, 4):
        raise LinalgError("single-qubit generators must be 4x4")
    out = np.zeros((16, 16), dtype=complex)
    r = range(2)
    for i1, i2, j1, j2, k1, k2, l1, l2 in itertools.product(r, repeat=8):
        val = 0.0
        if i2 == k2 and j2 == l2:
            val += L1[2 * i1 + j1, 2 * k1 + l1]
        if i1 == k1 and j1 == l1:
            val += L2[2 * i2 + j2, 2 * k2 + l2]
        if val != 0.0:
            out[8 * i1 + 4 * i2 + 2 * j1 + j2, 8 * k1 + 4 * k2 + 2 * l1 + l2] = val
    return out


@dataclass(frozen=True)
class LocalBloch:
    """Independent Bloch-equation decoherence of the two qubits."""

    gamma_d1: float = 0.0
    gamma_u1: float = 0.0
    t2_1: float = math.inf
    gamma_d2: float = 0.0
    gamma_u2: float = 0.0
    t2_2: float = math.inf

    kind = "local"
    detuned_only = False

    def __post_init__(self):
        local_bloch_generator_1q(self.gamma_d1, self.gamma_u1, self.t2_1)
        local_bloch_generator_1q(self.gamma_d2, self.gamma_u2, self.t2_2)

    @classmethod
    def from_t1_t2(cls, t1: float, t2: float, gamma_u: float = 0.0,
                   t1_2: float | None = None, t2_2: float | None = None,
                   gamma_u_2: float | None = None) -> "LocalBloch":
        """Parameters as T1 = 1/(gamma_d + gamma_u) and T2; qubit 2 defaults to qubit 1."""
        t1_2 = t1 if t1_2 is None else t1_2
        t2_2 = t2 if t2_2 is None else t2_2
        gamma_u_2 = gamma_u if gamma_u_2 is None else gamma_u_2
        return cls(1.0 / t1 - gamma_u, gamma_u, t2, 1.0 / t1_2 - gamma_u_2, gamma_u_2, t2_2)

    @classmethod
    def energy_relaxation(cls, gamma_d1: float, gamma_u1: float = 0.0,
                          gamma_d2: float | None = None, gamma_u2: float | None = None) -> "LocalBloch":
        """Pure energy relaxation: T2 = 2 T1 on each qubit."""
        gamma_d2 = gamma_d1 if gamma_d2 is None else gamma_d2
        gamma_u2 = gamma_u1 if gamma_u2 is None else gamma_u2

        def t2(gd, gu):
            return math.inf if gd + gu == 0 else 2.0 / (gd + gu)
        return cls(gamma_d1, gamma_u1, t2(gamma_d1, gamma_u1), gamma_d2, gamma_u2, t2(gamma_d2, gamma_u2))

    @classmethod
    def pure_dephasing(cls, gamma1: float, gamma2: float | None = None) -> "LocalBloch":
        gamma2 = gamma1 if gamma2 is None else gamma2
        return cls(0.0, 0.0, math.inf if gamma1 == 0 else 1.0 / gamma1,
                   0.0, 0.0, math.inf if gamma2 == 0 else 1.0 / gamma2)

    def dephasing_rates(self) -> tuple[float, float]:
        """Pure-dephasing part 1/T2 - (gamma_d + gamma_u)/2 for each qubit."""
        def rate(gd, gu, t2):
            return max(0.0, (0.0 if math.isinf(t2) else 1.0 / t2) - (gd + gu) / 2)
        return (rate(self.gamma_d1, self.gamma_u1, self.t2_1),
                rate(self.gamma_d2, self.gamma_u2, self.t2_2))

    def generator(self) -> np.ndarray:
        return lift_local(local_bloch_generator_1q(self.gamma_d1, self.gamma_u1, self.t2_1),
                          local_bloch_generator_1q(self.gamma_d2, self.gamma_u2, self.t2_2))


@dataclass(frozen=True)
class CorrelatedDephasing:
    """Pure dephasing with rates gamma1, gamma2 and correlation kappa in [-1, 1]."""

    gamma1: float
    gamma2: float
    kappa: float = 0.0

    kind = "correlated_dephasing"
    detuned_only = False

    def __post_init__(self):
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ModelError("dephasing rates must be non-negative")
        if abs(self.kappa) > 1:
            raise ModelError(f"kappa must lie in [-1, 1], got {self.kappa}")

    @property
    def gamma_bar(self) -> float:
        return 2.0 * self.kappa * math.sqrt(self.gamma1 * self.gamma2)

    def decay_rates(self) -> np.ndarray:
        """4x4 array G with d(rho_jk)/dt = -G[j, k] rho_jk."""
        g1, g2, gb = self.gamma1, self.gamma2, self.gamma_bar
        gp, gm = g1 + g2 + gb, g1 + g2 - gb
        return np.array([
            [0, g2, g1, gp],
            [g2, 0, gm, g1],
            [g1, gm, 0, g2],
            [gp, g1, g2, 0],
        ], dtype=float)

    def generator(self) -> np.ndarray:
        return np.diag(-self.decay_rates().reshape(-1)).astype(complex)


def _nc_action(gamma: float, exchange: bool) -> Callable[[np.ndarray], np.ndarray]:
    def action(rho: np.ndarray) -> np.ndarray:
        out = np.zeros((4, 4), dtype=complex)
        out[0, 1], out[0, 2] = -rho[0, 1], -rho[0, 2]
        out[1, 0], out[2, 0] = -rho[1, 0], -rho[2, 0]
        out[1, 3], out[2, 3] = -rho[1, 3], -rho[2, 3]
        out[3, 1], out[3, 2] = -rho[3, 1], -rho[3, 2]
        out[1, 1] = -2 * rho[1, 1] + 2 * rho[2, 2]
        out[2, 2] = 2 * rho[1, 1] - 2 * rho[2, 2]
        out[1, 2] = -2 * rho[1, 2] + (2 * rho[2, 1] if exchange else 0)
        out[2, 1] = -2 * rho[2, 1] + (2 * rho[1, 2] if exchange else 0)
        return gamma * out
    return action


@dataclass(frozen=True)
class NoisyCoupling:
    """Fluctuating coupling strength S + s(t) on resonant qubits."""

    gamma_s: float

    kind = "noisy_coupling"
    detuned_only = False

    def __post_init__(self):
        if self.gamma_s < 0:
            raise ModelError("gamma_s must be non-negative")

    def generator(self) -> np.ndarray:
        return superop_from_action(_nc_action(self.gamma_s, exchange=True), 4)


@dataclass(frozen=True)
class DetunedNoisyCoupling:
    """Noisy coupling of strongly detuned qubits (secular form, rate gamma_s')."""

    gamma_s_prime: float

    kind = "detuned_noisy_coupling"
    detuned_only = True

    def __post_init__(self):
        if self.gamma_s_prime < 0:
            raise ModelError("gamma_s_prime must be non-negative")

    def generator(self) -> np.ndarray:
        return superop_from_action(_nc_action(self.gamma_s_prime, exchange=False), 4)


DecoherenceModel = Union[LocalBloch, CorrelatedDephasing, NoisyCoupling, DetunedNoisyCoupling]


def cd_generator(model: CorrelatedDephasing) -> np.ndarray:
    return model.generator()


def nc_generator(model: NoisyCoupling) -> np.ndarray:
    return model.generator()


def total_generator(models) -> np.ndarray:
    out = np.zeros((16, 16), dtype=complex)
    for m in models:
        out += m.generator()
    return out


@dataclass(frozen=True, eq=False)
class LambdaMatrix:
    """Decoherence generator expressed in a product operator basis."""

    mat: np.ndarray
    basis: str = "pauli"
    source: str = ""

    def check(self, tol: float = 1e-12) -> None:
        scale = max(1.0, float(np.max(np.abs(self.mat))))
        if np.max(np.abs(self.mat - self.mat.conj().T)) > tol * scale:
            raise ModelError("lambda-matrix is not Hermitian")
        if abs(np.trace(self.mat)) > tol * scale:
            raise ModelError("lambda-matrix is not traceless")


def lambda_from_generator(L, b1: OperatorBasis | None = None, b2: OperatorBasis | None = None,
                          source: str = "") -> LambdaMatrix:
    """lambda-matrix of a 16x16 generator in the product basis b1 (x) b2 (Pauli by default)."""
    b1 = b1 or pauli_basis_1q()
    b2 = b2 or b1
    nu = reorder_L_to_Jtilde(L, IndexConvention(b1.d, b2.d))
    name = b1.name if b1.name == b2.name else f"{b1.name}x{b2.name}"
    return LambdaMatrix(chi_from_Jtilde(nu, b1, b2), name, source)


def nu_from_generator(L) -> np.ndarray:
    """lambda-matrix in the elementary product basis (equal to the reordered generator)."""
    return reorder_L_to_Jtilde(L, IndexConvention(2, 2))


def detuned_nc_lambda(gamma_s_prime: float) -> LambdaMatrix:
    """Pauli-basis lambda-matrix for noisy coupling of strongly detuned qubits."""
    model = DetunedNoisyCoupling(gamma_s_prime)
    return lambda_from_generator(model.generator(), source=model.kind)


def detuned_coherent_correction(s: float, dw_tilde: float, averaged: bool = True,
                                t: float | None = None, min_ratio: float = 10.0) -> np.ndarray:
    """First-order (in S) coherent chi correction for detuned qubits, Pauli basis.

    ``averaged`` returns the time-averaged correction. Otherwise ``t`` is
    required and the oscillating terms are included.
    """
    if s != 0 and abs(dw_tilde) < min_ratio * abs(s):
        raise ModelError(f"detuning {dw_tilde:g} too small for coupling {s:g} (need ratio >= {min_ratio})")
    out = np.zeros((16, 16), dtype=complex)
    if s == 0:
        return out
    a = 1j * s / (4.0 * dw_tilde)
    factor = 1.0
    if not averaged:
        if t is None:
            raise ModelError("time t is required for the unaveraged correction")
        factor = 1.0 - math.cos(dw_tilde * t)
        b = a * math.sin(dw_tilde * t)
        out[0, 5] = out[0, 10] = b
        out[5, 0] = out[10, 0] = -b
    out[0, 9] = out[6, 0] = a * factor
    out[0, 6] = out[9, 0] = -a * factor
    return out


def nonzero_count(mat, tol: float = 1e-12) -> int:
    return int(np.count_nonzero(np.abs(np.asarray(mat)) > tol))
