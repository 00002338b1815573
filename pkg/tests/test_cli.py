import json
import math

import numpy as np
import pytest

from qptdecoh import analysis as an
from qptdecoh import channels as ch
from qptdecoh import decoherence as de
from qptdecoh import documents as docs
from qptdecoh.cli import main

from conftest import RATE_FIG, S_FIG


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def chi_of(path):
    return docs.read_chi_document(json.loads(open(path).read()))[0]


FIG2 = {"gate": {"kind": "sqrt_iswap", "s_mhz": 20},
        "decoherence": {"t1_q1_ns": 90, "t2_q1_ns": 60, "t1_q2_ns": 90, "t2_q2_ns": 60}}
FIG3 = {"gate": {"kind": "sqrt_iswap", "s_mhz": 20},
        "decoherence": {"gamma_pd_q1_per_us": 1e3 / 90, "gamma_pd_q2_per_us": 1e3 / 90, "kappa": 0.5}}
FIG4 = {"gate": {"kind": "sqrt_iswap", "s_mhz": 20}, "decoherence": {"gamma_s_per_us": 1e3 / 90}}


def test_simulate_ideal(tmp_path):
    cfg = write(tmp_path, "c.json", {"gate": {"kind": "sqrt_iswap", "s_mhz": 20}})
    out = str(tmp_path / "chi.json")
    assert main(["simulate", "--config", cfg, "--out", out]) == 0
    doc = json.loads(open(out).read())
    assert doc["basis"] == "pauli" and doc["gate"]["s_mhz"] == 20
    assert np.max(np.abs(chi_of(out) - ch.ideal_chi(ch.GateSpec.sqrt_iswap(S_FIG)))) < 1e-12
    assert doc["diagnostics"]["psd"] is True


def test_simulate_fig2_and_fig4(tmp_path):
    out = str(tmp_path / "chi.json")
    assert main(["simulate", "--config", write(tmp_path, "f2.json", FIG2), "--out", out]) == 0
    want = ch.evolution_map(ch.GateSpec.sqrt_iswap(S_FIG), [de.LocalBloch.from_t1_t2(90e-9, 60e-9)]).chi()
    assert np.max(np.abs(chi_of(out) - want)) < 1e-12
    assert main(["simulate", "--config", write(tmp_path, "f4.json", FIG4), "--out", out]) == 0
    assert np.max(np.abs(chi_of(out) - an.exact_nc_chi(RATE_FIG, S_FIG))) < 1e-9


def test_qpt_matches_simulate(tmp_path):
    chi_out, outs = str(tmp_path / "chi.json"), str(tmp_path / "outs.json")
    assert main(["simulate", "--config", write(tmp_path, "c.json", FIG2), "--out", chi_out,
                 "--outputs", outs]) == 0
    q_out = str(tmp_path / "q.json")
    assert main(["qpt", outs, "--out", q_out]) == 0
    assert np.max(np.abs(chi_of(q_out) - chi_of(chi_out))) < 1e-12
    assert json.loads(open(q_out).read())["diagnostics"]["linear_residual"] < 1e-12


def test_qpt_identity_and_errors(tmp_path, capsys):
    ident = write(tmp_path, "id.json", json.loads(docs.dumps(docs.outputs_document(ch.qpt_initial_states()))))
    out = str(tmp_path / "q.json")
    assert main(["qpt", ident, "--out", out]) == 0
    assert abs(chi_of(out)[0, 0] - 1) < 1e-13
    outs = ch.qpt_initial_states()
    outs[11] = outs[11] + np.triu(np.ones((4, 4)), 1) * 0.01
    bad = write(tmp_path, "bad.json", json.loads(docs.dumps(docs.outputs_document(outs))))
    assert main(["qpt", bad]) == 3
    assert "output 11 is not Hermitian" in capsys.readouterr().err
    mal = write(tmp_path, "mal.json", {"kind": "qpt_outputs", "outputs": []})
    assert main(["qpt", mal]) == 2


def test_fingerprint_fig3(tmp_path):
    chi_out = str(tmp_path / "chi.json")
    assert main(["simulate", "--config", write(tmp_path, "c.json", FIG3), "--out", chi_out]) == 0
    rep_out = str(tmp_path / "rep.json")
    assert main(["fingerprint", chi_out, "--out", rep_out]) == 0
    rep = json.loads(open(rep_out).read())
    assert "CD" in rep["flagged"]
    assert 0.35 <= rep["mechanisms"]["CD"]["estimated_rates"]["kappa"] <= 0.65


def test_fingerprint_ideal_and_mixture(tmp_path):
    chi_out, rep_out = str(tmp_path / "chi.json"), str(tmp_path / "rep.json")
    main(["simulate", "--config", write(tmp_path, "i.json", {"gate": {"kind": "sqrt_iswap", "s_mhz": 20}}),
          "--out", chi_out])
    assert main(["fingerprint", chi_out, "--out", rep_out]) == 0
    assert json.loads(open(rep_out).read())["flagged"] == []
    mix = {"gate": {"kind": "sqrt_iswap", "s_mhz": 20},
           "decoherence": {"t1_q1_ns": 90, "t1_q2_ns": 90, "gamma_s_per_us": 1e3 / 90}}
    main(["simulate", "--config", write(tmp_path, "m.json", mix), "--out", chi_out])
    assert main(["fingerprint", chi_out, "--out", rep_out, "--refine"]) == 0
    rep = json.loads(open(rep_out).read())
    assert {"ER", "NC"} <= set(rep["flagged"])
    assert rep["mechanisms"]["LPD"]["evidence"] < 0.1 and rep["mechanisms"]["CD"]["evidence"] < 0.1
    assert abs(rep["mechanisms"]["NC"]["estimated_rates"]["gamma_s"] / RATE_FIG - 1) < 0.01
    assert "refined" in rep


def test_fingerprint_basis_mismatch(tmp_path):
    cfg = dict(FIG2, basis="elementary")
    chi_out = str(tmp_path / "chi.json")
    assert main(["simulate", "--config", write(tmp_path, "c.json", cfg), "--out", chi_out]) == 0
    assert main(["fingerprint", chi_out]) == 2
    nogate = docs.chi_document(np.eye(16), "pauli", None)
    assert main(["fingerprint", write(tmp_path, "n.json", json.loads(docs.dumps(nogate)))]) == 2


def test_table1(tmp_path, capsys):
    out = str(tmp_path / "t.json")
    assert main(["table1", "--out", out]) == 0
    text = capsys.readouterr().out
    assert text.count("PASS") == 4 and "FAIL" not in text
    assert json.loads(open(out).read())["computed"]["chi"] == [64, 64, 4, 64, 64, 8, 8, 8]


@pytest.mark.parametrize("name", ["fig1", "fig2", "fig3", "fig4"])
def test_figure(tmp_path, name):
    assert main(["figure", name, "--out", str(tmp_path)]) == 0
    side = json.loads((tmp_path / f"{name}.json").read_text())
    re = np.loadtxt(tmp_path / f"{name}_re.csv", delimiter=",", skiprows=1)[:, 1:]
    im = np.loadtxt(tmp_path / f"{name}_im.csv", delimiter=",", skiprows=1)[:, 1:]
    spec, models, marks = an.figure_case(name)
    chi = ch.evolution_map(spec, models).chi()
    assert np.array_equal(re + 1j * im, chi)
    if name == "fig2":
        assert [3, 3] in side["marked_positions"]["LPD (long arrows)"]
    if name == "fig4":
        assert side["marked_positions"]["NC"] == [[5, 15], [10, 15], [15, 5], [15, 10]]
    if name == "fig1":
        assert side["marked_positions"] == {}


def test_figure_unknown(tmp_path):
    assert main(["figure", "fig7", "--out", str(tmp_path)]) == 2


def test_config_errors_exit_2(tmp_path, capsys):
    bad = write(tmp_path, "b.json", {"gate": {"kind": "sqrt_iswap", "s_mhz": 20},
                                     "decoherence": {"t1_q1_ns": 10, "t2_q1_ns": 50}})
    assert main(["simulate", "--config", bad]) == 2
    assert "decoherence.t2_q1_ns" in capsys.readouterr().err
    assert main(["simulate"]) == 2
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2


def test_noise_needs_seed_and_is_deterministic(tmp_path):
    cfg = write(tmp_path, "c.json", FIG2)
    assert main(["simulate", "--config", cfg, "--noise", "1e-3"]) == 2
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    assert main(["simulate", "--config", cfg, "--noise", "1e-3", "--seed", "7", "--out", a]) == 0
    assert main(["simulate", "--config", cfg, "--noise", "1e-3", "--seed", "7", "--out", b]) == 0
    assert open(a, "rb").read() == open(b, "rb").read()
    doc = json.loads(open(a).read())
    assert doc["diagnostics"]["psd"] is False  # noise makes chi slightly unphysical; reported only


def test_simulate_csv_and_detuned(tmp_path):
    out = str(tmp_path / "chi.csv")
    assert main(["simulate", "--config", write(tmp_path, "c.json", FIG2), "--format", "csv", "--out", out]) == 0
    assert open(out).readline().strip() == "m,n,re,im"
    det = {"gate": {"kind": "detuned_idle", "s_mhz": 20, "delta_omega_mhz": 400, "t_ns": 10},
           "decoherence": {"gamma_s_prime_per_us": 5}}
    js = str(tmp_path / "d.json")
    assert main(["simulate", "--config", write(tmp_path, "d_cfg.json", det), "--out", js]) == 0
    rep = str(tmp_path / "r.json")
    assert main(["fingerprint", js, "--out", rep]) == 0
    r = json.loads(open(rep).read())
    assert r["mechanisms"]["NC"]["flagged"]
    assert main(["simulate", "--config", str(tmp_path / "d_cfg.json"), "--outputs", str(tmp_path / "o.json")]) == 2


def test_chi_document_cli_round_trip(tmp_path):
    out = str(tmp_path / "chi.json")
    main(["simulate", "--config", write(tmp_path, "c.json", FIG2), "--out", out])
    text = open(out).read()
    chi, basis, gate, whole = docs.read_chi_document(json.loads(text))
    again = docs.dumps(docs.chi_document(chi, basis, gate, whole["diagnostics"], whole["metadata"]))
    assert again == text


def test_sweep(tmp_path):
    cfg = write(tmp_path, "c.json", FIG2)
    out = str(tmp_path / "s.json")
    assert main(["sweep", "--config", cfg, "--param", "decoherence.t1_q1_ns", "--values", "60,90,150",
                 "--out", out]) == 0
    rows = json.loads(open(out).read())["rows"]
    assert [r["value"] for r in rows] == [60, 90, 150]
    assert all(r["top_mechanism"] == "ER" and abs(r["trace"] - 1) < 1e-12 for r in rows)
    assert main(["sweep", "--config", cfg, "--param", "decoherence.t1_q1_ns", "--values", "x"]) == 2
    assert main(["sweep", "--config", cfg, "--param", "decoherence.t1_q1_ns", "--values", "10"]) == 2
    csv_out = str(tmp_path / "s.csv")
    assert main(["sweep", "--config", cfg, "--param", "gate.s_mhz", "--values", "10,20", "--format", "csv",
                 "--out", csv_out]) == 0
    assert open(csv_out).readline().startswith("value,trace")


def test_sweep_matches_direct(tmp_path):
    cfg = write(tmp_path, "c.json", FIG2)
    out = str(tmp_path / "s.json")
    main(["sweep", "--config", cfg, "--param", "decoherence.t2_q1_ns", "--values", "40", "--out", out])
    row = json.loads(open(out).read())["rows"][0]
    m = de.LocalBloch.from_t1_t2(90e-9, 40e-9, 0.0, 90e-9, 60e-9)
    chi = ch.evolution_map(ch.GateSpec.sqrt_iswap(S_FIG), [m]).chi()
    rep = an.fingerprint(ch.ProcessMatrix(chi, gate=ch.GateSpec.sqrt_iswap(S_FIG)))
    assert row["evidence_ER"] == pytest.approx(rep.mechanisms["ER"].evidence, abs=1e-12)
    assert math.isclose(row["trace"], 1, abs_tol=1e-12)
