import numpy as np
from hypothesis import given, settings, strategies as st

from qptdecoh import channels as ch
from qptdecoh import decoherence as de
from qptdecoh.bases import named_factors
from qptdecoh.linalg import expm, hermitian_eig

from cases import random_case

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=100, deadline=None)
@given(seeds, st.sampled_from(["pauli", "modified_pauli", "elementary"]))
def test_chi_is_a_density_like_matrix(seed, basis):
    spec, models = random_case(seed)
    b1, b2 = named_factors(basis)
    chi = ch.evolution_map(spec, models).chi(b1, b2)
    assert np.max(np.abs(chi - chi.conj().T)) < 1e-12
    # sum_mn chi_mn E_n^dag E_m = I fixes Tr chi = d / Q (1 for Pauli-type bases)
    assert abs(np.trace(chi) - 4 / (b1.q * b2.q)) < 1e-10
    w, _ = hermitian_eig(0.5 * (chi + chi.conj().T))
    assert w[0] >= -1e-9


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_lambda_hermitian_traceless(seed):
    spec, models = random_case(seed)
    lam = de.lambda_from_generator(de.total_generator(models))
    lam.check(1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(0.05, 0.95))
def test_semigroup_composition(seed, frac):
    spec, models = random_case(seed)
    t = spec.t
    m = ch.generator(spec, models)
    whole = expm(m * t)
    a = expm(m * t * frac)
    b = expm(m * t * (1 - frac))
    assert np.max(np.abs(a @ b - whole)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_trace_preservation_of_map(seed):
    spec, models = random_case(seed)
    lmat = ch.evolution_map(spec, models).lmat
    tr = np.eye(4).reshape(-1)
    assert np.max(np.abs(tr @ lmat - tr)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_qpt_round_trip(seed):
    spec, models = random_case(seed)
    emap = ch.evolution_map(spec, models)
    pm = ch.qpt_extract(ch.simulate_outputs(emap))
    assert np.max(np.abs(pm.chi - emap.chi())) < 1e-12
