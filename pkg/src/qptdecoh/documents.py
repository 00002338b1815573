"""Run configurations and JSON/CSV documents for chi matrices and tomography data.

CLI units: S/2pi and detunings in MHz, times in ns, decoherence rates in
1/us (a rate of 1/us is 1e6 1/s, no factor 2pi). Everything is converted to
rad/s and seconds once, when a config is turned into model objects.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from . import channels as ch
from . import decoherence as deco
from .channels import GateSpec, ProcessMatrix

MHZ = 2 * math.pi * 1e6
NS = 1e-9
PER_US = 1e6

UNITS = {
    "s_mhz": "S/2pi in MHz",
    "delta_omega_mhz": "delta_omega/2pi in MHz",
    "t_ns": "ns",
    "*_ns": "ns",
    "*_per_us": "1/us",
    "kappa": "dimensionless",
}

DECOHERENCE_FIELDS = (
    "t1_q1_ns", "t2_q1_ns", "gamma_u_q1_per_us",
    "t1_q2_ns", "t2_q2_ns", "gamma_u_q2_per_us",
    "gamma_pd_q1_per_us", "gamma_pd_q2_per_us", "kappa",
    "gamma_s_per_us", "gamma_s_prime_per_us",
)
BASES = ("pauli", "modified_pauli", "elementary")
FORMATS = ("json", "csv")


class ConfigError(ValueError):
    """A config or input document that cannot be used; the message names the field."""


def _number(value, name: str, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name}: must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{name}: must be > 0, got {value:g}")
    if nonneg and value < 0:
        raise ConfigError(f"{name}: must be >= 0, got {value:g}")
    return value


def _check_keys(d: dict, allowed, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(extra)}")


@dataclass(frozen=True)
class GateConfig:
    kind: str
    s_mhz: Optional[float] = None
    t_ns: Optional[float] = None
    delta_omega_mhz: Optional[float] = None

    @classmethod
    def from_dict(cls, d: dict) -> "GateConfig":
        _check_keys(d, ("kind", "s_mhz", "t_ns", "delta_omega_mhz"), "gate")
        kind = d.get("kind")
        if kind not in ch.GATE_KINDS:
            raise ConfigError(f"gate.kind: expected one of {', '.join(ch.GATE_KINDS)}, got {kind!r}")
        vals = {}
        for key in ("s_mhz", "t_ns", "delta_omega_mhz"):
            if d.get(key) is not None:
                vals[key] = _number(d[key], f"gate.{key}")
        need = {ch.IDENTITY: ("t_ns",), ch.SQRT_ISWAP: ("s_mhz",), ch.XY: ("s_mhz", "t_ns"),
                ch.DETUNED_IDLE: ("s_mhz", "t_ns", "delta_omega_mhz")}[kind]
        for key in need:
            if key not in vals:
                raise ConfigError(f"gate.{key}: required for {kind}")
        if "t_ns" in vals and vals["t_ns"] < 0:
            raise ConfigError("gate.t_ns: must be >= 0")
        if kind == ch.SQRT_ISWAP:
            if vals["s_mhz"] <= 0:
                raise ConfigError("gate.s_mhz: must be > 0 for sqrt_iswap")
            if "t_ns" in vals:
                raise ConfigError("gate.t_ns: fixed at pi/(2S) for sqrt_iswap; omit it")
        cfg = cls(kind, **vals)
        cfg.to_spec()
        return cfg

    def to_spec(self) -> GateSpec:
        try:
            if self.kind == ch.IDENTITY:
                return GateSpec.identity(self.t_ns * NS)
            if self.kind == ch.SQRT_ISWAP:
                return GateSpec.sqrt_iswap(self.s_mhz * MHZ)
            if self.kind == ch.XY:
                return GateSpec.xy(self.s_mhz * MHZ, self.t_ns * NS)
            return GateSpec.detuned_idle(self.s_mhz * MHZ, self.delta_omega_mhz * MHZ, self.t_ns * NS)
        except ch.ChannelError as exc:
            raise ConfigError(f"gate: {exc}") from exc

    def to_dict(self) -> dict:
        return {"kind": self.kind, "s_mhz": self.s_mhz, "t_ns": self.t_ns,
                "delta_omega_mhz": self.delta_omega_mhz}


@dataclass(frozen=True)
class DecoherenceConfig:
    values: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict | None) -> "DecoherenceConfig":
        d = d or {}
        _check_keys(d, DECOHERENCE_FIELDS, "decoherence")
        vals = {}
        for key, raw in d.items():
            if raw is None:
                continue
            name = f"decoherence.{key}"
            if key == "kappa":
                v = _number(raw, name)
                if abs(v) > 1:
                    raise ConfigError(f"{name}: must lie in [-1, 1], got {v:g}")
            elif key.endswith("_ns"):
                v = _number(raw, name, positive=True)
            else:
                v = _number(raw, name, nonneg=True)
            vals[key] = v
        cfg = cls(vals)
        cfg.to_models()
        return cfg

    def get(self, key: str) -> Optional[float]:
        return self.values.get(key)

    def _local(self) -> Optional[deco.LocalBloch]:
        args = []
        any_set = False
        for q in ("q1", "q2"):
            t1, t2 = self.get(f"t1_{q}_ns"), self.get(f"t2_{q}_ns")
            gu = (self.get(f"gamma_u_{q}_per_us") or 0.0) * PER_US
            any_set |= t1 is not None or t2 is not None or gu > 0
            total = 0.0 if t1 is None else 1.0 / (t1 * NS)
            if gu > total:
                raise ConfigError(f"decoherence.gamma_u_{q}_per_us: exceeds 1/T1")
            gd = total - gu
            if t2 is not None:
                t2s = t2 * NS
            else:
                t2s = math.inf if total == 0 else 2.0 / total
            if t2 is not None and 1.0 / t2s < total / 2 - 1e-12 * total:
                raise ConfigError(f"decoherence.t2_{q}_ns: T2 must not exceed 2 T1")
            args += [gd, gu, t2s]
        if not any_set:
            return None
        try:
            return deco.LocalBloch(*args)
        except deco.ModelError as exc:
            raise ConfigError(f"decoherence: {exc}") from exc

    def to_models(self) -> list:
        models = []
        local = self._local()
        if local is not None:
            models.append(local)
        g1, g2 = self.get("gamma_pd_q1_per_us"), self.get("gamma_pd_q2_per_us")
        kappa = self.get("kappa")
        if g1 is not None or g2 is not None:
            g1 = g1 if g1 is not None else g2
            g2 = g2 if g2 is not None else g1
            models.append(deco.CorrelatedDephasing(g1 * PER_US, g2 * PER_US, kappa or 0.0))
        elif kappa is not None:
            raise ConfigError("decoherence.kappa: needs gamma_pd_q1_per_us / gamma_pd_q2_per_us")
        if self.get("gamma_s_per_us") is not None:
            models.append(deco.NoisyCoupling(self.get("gamma_s_per_us") * PER_US))
        if self.get("gamma_s_prime_per_us") is not None:
            models.append(deco.DetunedNoisyCoupling(self.get("gamma_s_prime_per_us") * PER_US))
        return models

    def to_dict(self) -> dict:
        return {k: self.values.get(k) for k in DECOHERENCE_FIELDS}


@dataclass(frozen=True)
class RunConfig:
    gate: GateConfig
    decoherence: DecoherenceConfig = DecoherenceConfig()
    basis: str = "pauli"
    format: str = "json"
    tol: float = 1e-9
    noise: float = 0.0
    seed: Optional[int] = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _check_keys(d, ("gate", "decoherence", "basis", "format", "tol", "noise", "seed"), "config")
        if "gate" not in d:
            raise ConfigError("gate: required")
        basis = d.get("basis", "pauli")
        if basis not in BASES:
            raise ConfigError(f"basis: expected one of {', '.join(BASES)}, got {basis!r}")
        fmt = d.get("format", "json")
        if fmt not in FORMATS:
            raise ConfigError(f"format: expected json or csv, got {fmt!r}")
        tol = _number(d.get("tol", 1e-9), "tol", positive=True)
        noise = _number(d.get("noise", 0.0), "noise", nonneg=True)
        seed = d.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            raise ConfigError(f"seed: expected a non-negative integer, got {seed!r}")
        if noise > 0 and seed is None:
            raise ConfigError("seed: required when noise > 0")
        gate = GateConfig.from_dict(d["gate"])
        dec = DecoherenceConfig.from_dict(d.get("decoherence"))
        models = dec.to_models()
        spec = gate.to_spec()
        for m in models:
            if m.detuned_only and spec.kind != ch.DETUNED_IDLE:
                raise ConfigError("decoherence.gamma_s_prime_per_us: only valid for detuned_idle")
        return cls(gate, dec, basis, fmt, tol, noise, seed)

    def to_dict(self) -> dict:
        return {"gate": self.gate.to_dict(), "decoherence": self.decoherence.to_dict(),
                "basis": self.basis, "format": self.format, "tol": self.tol,
                "noise": self.noise, "seed": self.seed}

    def spec(self) -> GateSpec:
        return self.gate.to_spec()

    def models(self) -> list:
        return self.decoherence.to_models()


def normalize_config(d: dict) -> dict:
    """Canonical form of a config document: every field present, numbers as floats."""
    return RunConfig.from_dict(d).to_dict()


def load_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def load_config(path: str) -> RunConfig:
    return RunConfig.from_dict(load_json(path))


def dumps(doc: dict) -> str:
    return json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n"


def _plain(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def encode_matrix(m: np.ndarray) -> List[List[List[float]]]:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]


def decode_matrix(data, shape: tuple, where: str) -> np.ndarray:
    try:
        arr = np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: entries must be [re, im] number pairs") from exc
    if arr.shape != shape + (2,):
        raise ConfigError(f"{where}: expected shape {shape} of [re, im] pairs, got {arr.shape[:-1]}")
    return arr[..., 0] + 1j * arr[..., 1]


def chi_document(chi: np.ndarray, basis: str, gate: GateConfig | None,
                 diagnostics: dict | None = None, metadata: dict | None = None) -> dict:
    return {
        "kind": "chi",
        "basis": basis,
        "gate": gate.to_dict() if gate is not None else None,
        "units": dict(UNITS),
        "index": "<n1 n2> = 4*n1 + n2, row-major",
        "chi": encode_matrix(chi),
        "diagnostics": diagnostics or {},
        "metadata": metadata or {},
    }


def read_chi_document(doc: dict) -> tuple:
    """(chi, basis, gate config or None, whole document)."""
    if not isinstance(doc, dict) or doc.get("kind") != "chi":
        raise ConfigError("input: not a chi document (missing kind = 'chi')")
    chi = decode_matrix(doc.get("chi"), (16, 16), "chi")
    basis = doc.get("basis")
    if basis not in BASES:
        raise ConfigError(f"basis: unknown basis {basis!r}")
    gate = GateConfig.from_dict(doc["gate"]) if doc.get("gate") else None
    return chi, basis, gate, doc


def outputs_document(outputs, gate: GateConfig | None = None) -> dict:
    return {
        "kind": "qpt_outputs",
        "gate": gate.to_dict() if gate is not None else None,
        "inputs": "product states |psi_n1> (x) |psi_n2>, psi = (|0>, |1>, |+>, |+i>), index 4*n1 + n2",
        "outputs": [encode_matrix(rho) for rho in outputs],
    }


def read_outputs_document(doc: dict) -> tuple:
    if not isinstance(doc, dict) or doc.get("kind") != "qpt_outputs":
        raise ConfigError("input: not a qpt_outputs document")
    outs = doc.get("outputs")
    if not isinstance(outs, list) or len(outs) != 16:
        raise ConfigError("outputs: expected a list of 16 density matrices")
    mats = [decode_matrix(o, (4, 4), f"outputs[{n}]") for n, o in enumerate(outs)]
    gate = GateConfig.from_dict(doc["gate"]) if doc.get("gate") else None
    return mats, gate


def chi_long_csv(chi: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "n", "re", "im"])
    for m in range(chi.shape[0]):
        for n in range(chi.shape[1]):
            w.writerow([m, n, repr(float(chi[m, n].real)), repr(float(chi[m, n].imag))])
    return buf.getvalue()


def grid_csv(values: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + list(range(values.shape[1])))
    for m, row in enumerate(values):
        w.writerow([m] + [repr(float(v)) for v in row])
    return buf.getvalue()


def process_matrix(chi: np.ndarray, basis: str, gate: GateConfig | None) -> ProcessMatrix:
    spec = gate.to_spec() if gate is not None else None
    ideal = ch.ideal_chi(spec) if spec is not None and basis == "pauli" else None
    return ProcessMatrix(chi, basis, spec, ideal)
