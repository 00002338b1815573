"""Gate Hamiltonians, evolution maps and the simulated standard-QPT pipeline.

Units: Hamiltonians are returned divided by hbar (rad/s), times in seconds.
The two-qubit computational basis is ordered |00>, |01>, |10>, |11>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import decoherence as deco
from .bases import (IndexConvention, OperatorBasis, chi_from_Jtilde, pauli_basis_1q,
                    product_basis, reorder_L_to_Jtilde)
from .linalg import (LinalgError, as_cmatrix, expm, hermitian_eig, is_hermitian, kron)


class ChannelError(ValueError):
    """Invalid gate specification or model combination."""


class ConsistencyError(ValueError):
    """Tomography data that no valid linear map can explain."""


IDENTITY = "identity"
SQRT_ISWAP = "sqrt_iswap"
XY = "xy"
DETUNED_IDLE = "detuned_idle"
GATE_KINDS = (IDENTITY, SQRT_ISWAP, XY, DETUNED_IDLE)


@dataclass(frozen=True)
class GateSpec:
    """Which two-qubit operation is performed.

    ``s`` is the coupling strength S and ``delta_omega`` the bare detuning,
    both in rad/s; ``t`` is the duration in seconds.
    """

    kind: str
    s: float = 0.0
    t: float = 0.0
    delta_omega: float = 0.0
    min_detuning_ratio: float = 10.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ChannelError(f"unknown gate kind {self.kind!r}")
        if self.t < 0:
            raise ChannelError("duration must be non-negative")
        if self.kind == SQRT_ISWAP:
            if self.s <= 0:
                raise ChannelError("sqrt(iSWAP) needs a positive coupling S")
            if not math.isclose(self.t, math.pi / (2 * self.s), rel_tol=1e-12):
                raise ChannelError("sqrt(iSWAP) duration is fixed at pi/(2S)")
        if self.kind == DETUNED_IDLE and abs(self.delta_omega) < self.min_detuning_ratio * abs(self.s):
            raise ChannelError(
                f"detuned idle needs |delta_omega| >= {self.min_detuning_ratio:g}|S|")

    @classmethod
    def identity(cls, t: float) -> "GateSpec":
        return cls(IDENTITY, 0.0, t)

    @classmethod
    def sqrt_iswap(cls, s: float) -> "GateSpec":
        return cls(SQRT_ISWAP, s, math.pi / (2 * s))

    @classmethod
    def xy(cls, s: float, t: float) -> "GateSpec":
        return cls(XY, s, t)

    @classmethod
    def detuned_idle(cls, s: float, delta_omega: float, t: float,
                     min_detuning_ratio: float = 10.0) -> "GateSpec":
        return cls(DETUNED_IDLE, s, t, delta_omega, min_detuning_ratio)

    @property
    def dw_tilde(self) -> float:
        """Eigenfrequency difference sqrt(dw^2 + S^2), with the sign of dw."""
        return math.copysign(math.hypot(self.delta_omega, self.s), self.delta_omega)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "s": self.s, "t": self.t, "delta_omega": self.delta_omega}


def hamiltonian(spec: GateSpec) -> np.ndarray:
    h = np.zeros((4, 4), dtype=complex)
    if spec.kind in (SQRT_ISWAP, XY):
        h[1, 2] = h[2, 1] = spec.s / 2
    elif spec.kind == DETUNED_IDLE:
        # level-repulsion term only; the oscillating coupling enters via the chi correction
        shift = 0.5 * (spec.delta_omega - spec.dw_tilde)
        h += shift * np.diag([0.0, -1.0, 1.0, 0.0])
    return h


def coherent_generator(h) -> np.ndarray:
    """Generator of -i[H, rho] on the vectorised density matrix."""
    h = as_cmatrix(h)
    if not is_hermitian(h, 1e-10 * max(1.0, float(np.max(np.abs(h))))):
        raise ChannelError("Hamiltonian must be Hermitian")
    d = h.shape[0]
    out = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            for k in range(d):
                for l in range(d):
                    val = 0.0
                    if i == k:
                        val += h[l, j]
                    if j == l:
                        val -= h[i, k]
                    out[d * i + j, d * k + l] = 1j * val
    return out


def unitary(spec: GateSpec) -> np.ndarray:
    """Closed-form U(t) = exp(-iHt) of the XY coupling."""
    if spec.kind == DETUNED_IDLE:
        raise ChannelError("detuned idle has a time-dependent Hamiltonian; no single unitary")
    u = np.eye(4, dtype=complex)
    if spec.kind == IDENTITY:
        return u
    phi = spec.s * spec.t / 2
    u[1, 1] = u[2, 2] = math.cos(phi)
    u[1, 2] = u[2, 1] = -1j * math.sin(phi)
    return u


def unitary_superop(u) -> np.ndarray:
    """Superoperator of rho -> U rho U^dagger in row-major vectorisation."""
    u = as_cmatrix(u)
    return kron(u, u.conj())


def chi_from_kraus(k, basis: OperatorBasis) -> np.ndarray:
    """Rank-one process matrix of rho -> K rho K^dagger."""
    if not basis.orthogonal:
        raise LinalgError("chi_from_kraus needs an orthogonal basis")
    k = as_cmatrix(k)
    coeffs = np.array([np.trace(e.conj().T @ k) for e in basis.ops]) / basis.q
    return np.outer(coeffs, coeffs.conj())


@dataclass(frozen=True, eq=False)
class EvolutionMap:
    lmat: np.ndarray
    spec: GateSpec
    models: tuple = ()
    convention: IndexConvention = IndexConvention()

    def apply(self, rho) -> np.ndarray:
        rho = as_cmatrix(rho)
        return (self.lmat @ rho.reshape(-1)).reshape(rho.shape)

    def jtilde(self) -> np.ndarray:
        return reorder_L_to_Jtilde(self.lmat, self.convention)

    def chi(self, b1: OperatorBasis | None = None, b2: OperatorBasis | None = None) -> np.ndarray:
        b1 = b1 or pauli_basis_1q()
        return chi_from_Jtilde(self.jtilde(), b1, b2 or b1)


def generator(spec: GateSpec, models: Sequence = ()) -> np.ndarray:
    """Full generator L_coh + sum of the decoherence generators."""
    for m in models:
        if getattr(m, "detuned_only", False) and spec.kind != DETUNED_IDLE:
            raise ChannelError(f"model {m.kind!r} is only valid for detuned qubits")
    return coherent_generator(hamiltonian(spec)) + deco.total_generator(models)


def evolution_map(spec: GateSpec, models: Sequence = ()) -> EvolutionMap:
    models = tuple(models)
    return EvolutionMap(expm(generator(spec, models) * spec.t), spec, models)


def ideal_chi(spec: GateSpec, b1: OperatorBasis | None = None,
              b2: OperatorBasis | None = None) -> np.ndarray:
    """Decoherence-free process matrix (the identity map for detuned idle)."""
    b1 = b1 or pauli_basis_1q()
    b2 = b2 or b1
    basis = product_basis(b1, b2)
    if spec.kind == DETUNED_IDLE:
        return chi_from_kraus(np.eye(4), basis)
    return chi_from_kraus(unitary(spec), basis)


def detuned_chi(spec: GateSpec, models: Sequence = (), averaged: bool = True) -> np.ndarray:
    """Approximate Pauli-basis chi for detuned qubits: exponentiated map plus coherent correction."""
    if spec.kind != DETUNED_IDLE:
        raise ChannelError("detuned_chi needs a detuned_idle gate")
    chi = evolution_map(spec, models).chi()
    return chi + deco.detuned_coherent_correction(
        spec.s, spec.dw_tilde, averaged, spec.t, spec.min_detuning_ratio)


def to_interaction_picture(lmat, u) -> np.ndarray:
    """Map for rho_int = U^dagger rho U given the Schroedinger-picture map."""
    return unitary_superop(as_cmatrix(u).conj().T) @ as_cmatrix(lmat)


def interaction_to_schrodinger(chi_int, u, basis: OperatorBasis) -> np.ndarray:
    """chi = V chi_int V^dagger with V[n, m] = Tr(E_n^dagger U E_m)/Q."""
    u = as_cmatrix(u)
    v = np.array([[np.trace(en.conj().T @ u @ em) for em in basis.ops] for en in basis.ops]) / basis.q
    return v @ as_cmatrix(chi_int) @ v.conj().T


# --- simulated standard QPT -------------------------------------------------

_PSI = (
    np.array([1, 0], dtype=complex),
    np.array([0, 1], dtype=complex),
    np.array([1, 1], dtype=complex) / math.sqrt(2),
    np.array([1, 1j], dtype=complex) / math.sqrt(2),
)

# closed-form inverse of the single-qubit input-state matrix for |0>, |1>, |+>, |+i>
R0_INV_1Q = np.array([
    [1, -(1 + 1j) / 2, (-1 + 1j) / 2, 0],
    [0, -(1 + 1j) / 2, (-1 + 1j) / 2, 1],
    [0, 1, 1, 0],
    [0, 1j, -1j, 0],
], dtype=complex)


def qpt_states_1q() -> list:
    return [np.outer(p, p.conj()) for p in _PSI]


def r0_matrix_1q() -> np.ndarray:
    """Columns are the vectorised single-qubit input states."""
    return np.array([rho.reshape(-1) for rho in qpt_states_1q()]).T


def qpt_initial_states() -> list:
    """The 16 product inputs rho_<n1 n2> = rho_n1 (x) rho_n2."""
    one = qpt_states_1q()
    return [kron(a, b) for a in one for b in one]


def simulate_outputs(emap: EvolutionMap, noise: float = 0.0, seed: int | None = None) -> list:
    """Apply a map to the 16 QPT inputs, optionally adding Hermitian traceless Gaussian noise."""
    outs = [emap.apply(rho) for rho in qpt_initial_states()]
    if noise > 0:
        rng = np.random.default_rng(seed)
        noisy = []
        for rho in outs:
            g = rng.normal(0, noise, (4, 4)) + 1j * rng.normal(0, noise, (4, 4))
            g = (g + g.conj().T) / 2
            g -= np.trace(g) / 4 * np.eye(4)
            noisy.append(rho + g)
        outs = noisy
    return outs


@dataclass(eq=False)
class ProcessMatrix:
    """A chi-matrix with its basis and gate context."""

    chi: np.ndarray
    basis: str = "pauli"
    gate: GateSpec | None = None
    chi_ideal: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def physicality(self, tol: float = 1e-9) -> dict:
        chi = self.chi
        herm = float(np.max(np.abs(chi - chi.conj().T)))
        w, _ = hermitian_eig(0.5 * (chi + chi.conj().T))
        tr = complex(np.trace(chi))
        return {
            "hermiticity_residual": herm,
            "trace": tr.real,
            "trace_imag": tr.imag,
            "min_eigenvalue": float(w[0]),
            "hermitian": herm <= tol,
            "trace_ok": tr.real <= 1 + tol,
            "psd": float(w[0]) >= -tol,
        }


def superop_from_outputs(outputs: Sequence, conv: IndexConvention = IndexConvention()) -> tuple:
    """Reconstruct the superoperator from the 16 product-state outputs.

    Returns ``(L, residual)`` where residual is max|L R0 - R|.
    """
    r = np.array([as_cmatrix(o).reshape(-1) for o in outputs]).T
    lprime = r @ kron(R0_INV_1Q, R0_INV_1Q)
    lmat = np.empty_like(lprime)
    for i1 in range(2):
        for j1 in range(2):
            for i2 in range(2):
                for j2 in range(2):
                    lmat[:, conv.vec_index(i1, i2, j1, j2)] = lprime[:, 8 * i1 + 4 * j1 + 2 * i2 + j2]
    r0 = np.array([rho.reshape(-1) for rho in qpt_initial_states()]).T
    residual = float(np.max(np.abs(lmat @ r0 - r)))
    return lmat, residual


def qpt_extract(outputs: Sequence, b1: OperatorBasis | None = None, b2: OperatorBasis | None = None,
                tol: float = 1e-9, gate: GateSpec | None = None) -> ProcessMatrix:
    """Standard QPT: chi-matrix from the measured outputs of the 16 product inputs.

    Raises :class:`ConsistencyError` when an output is malformed, not
    Hermitian, has trace above one, or the reconstructed map does not
    reproduce the data. Negative eigenvalues of chi are reported, not fixed.
    """
    b1 = b1 or pauli_basis_1q()
    b2 = b2 or b1
    if len(outputs) != 16:
        raise ConsistencyError(f"expected 16 output density matrices, got {len(outputs)}")
    clean = []
    for n, rho in enumerate(outputs):
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (4, 4):
            raise ConsistencyError(f"output {n} has shape {rho.shape}, expected (4, 4)")
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise ConsistencyError(f"output {n} is not Hermitian")
        if np.trace(rho).real > 1 + tol:
            raise ConsistencyError(f"output {n} has trace {np.trace(rho).real:.12g} > 1")
        clean.append(rho)
    lmat, residual = superop_from_outputs(clean)
    if residual > tol:
        raise ConsistencyError(f"linear reconstruction residual {residual:g} exceeds {tol:g}")
    chi = chi_from_Jtilde(reorder_L_to_Jtilde(lmat), b1, b2)
    name = b1.name if b1.name == b2.name else f"{b1.name}x{b2.name}"
    pm = ProcessMatrix(chi, name, gate)
    pm.diagnostics = {"linear_residual": residual, **pm.physicality(tol)}
    return pm

