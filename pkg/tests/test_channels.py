import math

import numpy as np
import pytest

from qptdecoh import channels as ch
from qptdecoh import decoherence as de
from qptdecoh.bases import (elementary_basis, modified_pauli_basis_1q, pauli_basis_1q,
                            pauli_basis_2q, product_basis)
from qptdecoh.linalg import expm

import oracles
from conftest import RATE_FIG, S_FIG, random_density

R2 = math.sqrt(2)


def ideal_entries():
    return {
        (0, 0): (3 + 2 * R2) / 8, (15, 15): (3 - 2 * R2) / 8,
        (5, 5): 1 / 8, (10, 10): 1 / 8, (5, 10): 1 / 8, (10, 5): 1 / 8, (0, 15): 1 / 8, (15, 0): 1 / 8,
        (0, 5): 1j * (R2 + 1) / 8, (0, 10): 1j * (R2 + 1) / 8,
        (5, 0): -1j * (R2 + 1) / 8, (10, 0): -1j * (R2 + 1) / 8,
        (15, 5): 1j * (R2 - 1) / 8, (15, 10): 1j * (R2 - 1) / 8,
        (5, 15): -1j * (R2 - 1) / 8, (10, 15): -1j * (R2 - 1) / 8,
    }


def test_ideal_sqrt_iswap_chi():
    chi = ch.chi_from_kraus(ch.unitary(ch.GateSpec.sqrt_iswap(S_FIG)), pauli_basis_2q())
    want = np.zeros((16, 16), dtype=complex)
    for p, v in ideal_entries().items():
        want[p] = v
    assert np.max(np.abs(chi - want)) < 1e-12


def test_gate_spec_validation():
    with pytest.raises(ch.ChannelError):
        ch.GateSpec("cnot")
    with pytest.raises(ch.ChannelError):
        ch.GateSpec(ch.SQRT_ISWAP, 1.0, 1.0)
    with pytest.raises(ch.ChannelError):
        ch.GateSpec.sqrt_iswap(-1.0)
    with pytest.raises(ch.ChannelError):
        ch.GateSpec.identity(-1e-9)
    with pytest.raises(ch.ChannelError):
        ch.GateSpec.detuned_idle(1.0, 5.0, 1.0)
    g = ch.GateSpec.detuned_idle(1.0, -20.0, 1.0)
    assert g.dw_tilde == pytest.approx(-math.sqrt(401))
    assert ch.GateSpec.sqrt_iswap(2.0).t == pytest.approx(math.pi / 4)
    assert g.to_dict()["kind"] == ch.DETUNED_IDLE


def test_unitary_matches_expm_of_hamiltonian():
    spec = ch.GateSpec.xy(3.0, 0.41)
    h = ch.hamiltonian(spec)
    assert np.allclose(ch.unitary(spec), expm(-1j * h * spec.t), atol=1e-14)
    assert np.allclose(ch.unitary(ch.GateSpec.identity(1.0)), np.eye(4))
    with pytest.raises(ch.ChannelError):
        ch.unitary(ch.GateSpec.detuned_idle(1.0, 20.0, 1.0))


def test_coherent_generator_against_commutator(rng):
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = g + g.conj().T
    want = oracles.superop_of(lambda r: -1j * (h @ r - r @ h))
    assert np.allclose(ch.coherent_generator(h), want)
    with pytest.raises(ch.ChannelError):
        ch.coherent_generator(g)


def test_unitary_superop(rng):
    u = ch.unitary(ch.GateSpec.xy(1.0, 0.9))
    rho = random_density(rng)
    got = (ch.unitary_superop(u) @ rho.reshape(-1)).reshape(4, 4)
    assert np.allclose(got, u @ rho @ u.conj().T)
    spec = ch.GateSpec.xy(1.0, 0.9)
    assert np.allclose(ch.evolution_map(spec).lmat, ch.unitary_superop(u), atol=1e-13)


def test_evolution_map_against_rk4(rng):
    spec = ch.GateSpec.sqrt_iswap(S_FIG)
    models = [de.LocalBloch.from_t1_t2(90e-9, 60e-9), de.NoisyCoupling(RATE_FIG / 3),
              de.CorrelatedDephasing(RATE_FIG / 4, RATE_FIG / 5, 0.4)]
    m = ch.generator(spec, models)
    h = ch.hamiltonian(spec)
    lgen = de.total_generator(models)

    def deriv(rho):
        return -1j * (h @ rho - rho @ h) + (lgen @ rho.reshape(-1)).reshape(4, 4)
    rho0 = random_density(rng)
    want = oracles.rk4_evolve(deriv, rho0, spec.t, steps=3000)
    got = ch.evolution_map(spec, models).apply(rho0)
    assert np.max(np.abs(got - want)) < 1e-10
    assert np.allclose(m, ch.coherent_generator(h) + lgen)


def test_semigroup_composition():
    models = [de.LocalBloch.from_t1_t2(50e-9, 40e-9), de.NoisyCoupling(1e7)]
    a = ch.evolution_map(ch.GateSpec.xy(S_FIG, 3e-9), models).lmat
    b = ch.evolution_map(ch.GateSpec.xy(S_FIG, 5e-9), models).lmat
    c = ch.evolution_map(ch.GateSpec.xy(S_FIG, 8e-9), models).lmat
    assert np.max(np.abs(a @ b - c)) < 1e-12


def test_detuned_only_model_rejected_for_resonant_gate():
    with pytest.raises(ch.ChannelError):
        ch.generator(ch.GateSpec.identity(1e-9), [de.DetunedNoisyCoupling(1.0)])


def test_ideal_chi_and_detuned_chi():
    idle = ch.GateSpec.detuned_idle(S_FIG, 20 * S_FIG, 10e-9)
    assert np.allclose(ch.ideal_chi(idle)[0, 0], 1)
    chi = ch.detuned_chi(idle, [de.DetunedNoisyCoupling(RATE_FIG)])
    assert np.allclose(chi, chi.conj().T, atol=1e-14)
    corr = de.detuned_coherent_correction(S_FIG, idle.dw_tilde)
    base = ch.evolution_map(idle, [de.DetunedNoisyCoupling(RATE_FIG)]).chi()
    assert np.allclose(chi - base, corr)
    with pytest.raises(ch.ChannelError):
        ch.detuned_chi(ch.GateSpec.identity(1e-9))


def test_interaction_picture_round_trip():
    spec = ch.GateSpec.sqrt_iswap(S_FIG)
    emap = ch.evolution_map(spec, [de.LocalBloch.from_t1_t2(90e-9, 60e-9)])
    u = ch.unitary(spec)
    lint = ch.to_interaction_picture(emap.lmat, u)
    p = pauli_basis_1q()
    from qptdecoh.bases import chi_from_superop
    chi_int = chi_from_superop(lint, p, p)
    back = ch.interaction_to_schrodinger(chi_int, u, pauli_basis_2q())
    assert np.max(np.abs(back - emap.chi())) < 1e-13


def test_chi_from_kraus_needs_orthogonal_basis():
    from qptdecoh.bases import OperatorBasis, X, Y, Z
    nb = OperatorBasis.from_ops([np.eye(2), X, Y, Z + X])
    with pytest.raises(Exception):
        ch.chi_from_kraus(np.eye(2), nb)


def test_r0_inverse_closed_form():
    assert np.allclose(ch.R0_INV_1Q @ ch.r0_matrix_1q(), np.eye(4), atol=1e-15)
    states = ch.qpt_initial_states()
    assert len(states) == 16
    assert np.allclose(states[4 * 2 + 3], np.kron(ch.qpt_states_1q()[2], ch.qpt_states_1q()[3]))


@pytest.mark.parametrize("name", ["pauli", "modified_pauli", "elementary"])
def test_qpt_pipeline_equals_direct(name):
    from qptdecoh.bases import named_factors
    b1, b2 = named_factors(name)
    spec = ch.GateSpec.sqrt_iswap(S_FIG)
    emap = ch.evolution_map(spec, [de.LocalBloch.from_t1_t2(90e-9, 60e-9), de.NoisyCoupling(RATE_FIG)])
    pm = ch.qpt_extract(ch.simulate_outputs(emap), b1, b2, gate=spec)
    assert np.max(np.abs(pm.chi - emap.chi(b1, b2))) < 1e-12
    assert pm.diagnostics["linear_residual"] < 1e-13
    assert pm.basis == name


def test_qpt_identity_outputs():
    pm = ch.qpt_extract(ch.qpt_initial_states())
    want = np.zeros((16, 16))
    want[0, 0] = 1
    assert np.max(np.abs(pm.chi - want)) < 1e-13


def test_qpt_errors():
    outs = ch.qpt_initial_states()
    with pytest.raises(ch.ConsistencyError, match="16"):
        ch.qpt_extract(outs[:15])
    bad = list(outs)
    bad[7] = bad[7] + np.triu(np.ones((4, 4)), 1) * 1e-3
    with pytest.raises(ch.ConsistencyError, match="output 7 is not Hermitian"):
        ch.qpt_extract(bad)
    bad = list(outs)
    bad[3] = bad[3] * 1.01
    with pytest.raises(ch.ConsistencyError, match="output 3 has trace"):
        ch.qpt_extract(bad)
    bad = list(outs)
    bad[0] = np.eye(3)
    with pytest.raises(ch.ConsistencyError, match="shape"):
        ch.qpt_extract(bad)


def test_noisy_outputs_are_seeded_and_reported():
    emap = ch.evolution_map(ch.GateSpec.sqrt_iswap(S_FIG))
    a = ch.simulate_outputs(emap, 1e-3, seed=5)
    b = ch.simulate_outputs(emap, 1e-3, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    for rho in a:
        assert np.allclose(rho, rho.conj().T) and abs(np.trace(rho) - 1) < 1e-12
    pm = ch.qpt_extract(a)
    d = pm.physicality()
    assert d["min_eigenvalue"] < 0 and not d["psd"]  # reported, not corrected
    assert d["hermitian"]


def test_physicality_of_clean_map():
    emap = ch.evolution_map(ch.GateSpec.sqrt_iswap(S_FIG), [de.NoisyCoupling(RATE_FIG)])
    d = ch.ProcessMatrix(emap.chi()).physicality()
    assert d["hermitian"] and d["psd"] and abs(d["trace"] - 1) < 1e-12


def test_chi_in_product_of_mixed_bases():
    p, e = pauli_basis_1q(), elementary_basis(2)
    emap = ch.evolution_map(ch.GateSpec.xy(S_FIG, 4e-9), [de.NoisyCoupling(RATE_FIG)])
    chi = emap.chi(p, e)
    basis = product_basis(p, e)
    rho = random_density(np.random.default_rng(3))
    want = emap.apply(rho)
    got = oracles.chi_action(chi, basis.ops)(rho)
    assert np.allclose(got, want, atol=1e-13)
    mp = modified_pauli_basis_1q()
    assert np.isclose(np.trace(emap.chi(mp, mp)), 1)
