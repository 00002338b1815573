"""Command-line interface: simulate, qpt, fingerprint, table1, figure, sweep.

Exit codes: 0 success, 2 config or input error, 3 physicality/consistency failure.
"""
from __future__ import annotations

import argparse
import copy
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

from . import analysis as an
from . import channels as ch
from . import documents as docs
from .bases import basis_change, named_factors, pauli_basis_2q, product_basis
from .documents import ConfigError, RunConfig

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICAL = 0, 2, 3


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _write(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config: required")
    raw = docs.load_json(args.config)
    if not isinstance(raw, dict):
        raise ConfigError("config: expected an object")
    raw = dict(raw)
    # command-line flags override the file
    for key in ("tol", "noise", "seed", "format"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    return RunConfig.from_dict(raw)


def simulate_chi(cfg: RunConfig) -> tuple:
    """(chi in the configured basis, diagnostics, 16 outputs or None)."""
    spec, models = cfg.spec(), cfg.models()
    b1, b2 = named_factors(cfg.basis)
    outputs = None
    if spec.kind == ch.DETUNED_IDLE:
        if cfg.noise > 0:
            raise ConfigError("noise: not supported for detuned_idle (chi includes an analytic correction)")
        chi = ch.detuned_chi(spec, models)
        if cfg.basis != "pauli":
            chi = basis_change(chi, pauli_basis_2q(), product_basis(b1, b2))
        pm = ch.ProcessMatrix(chi, cfg.basis, spec)
        diag = pm.physicality(cfg.tol)
    else:
        emap = ch.evolution_map(spec, models)
        if cfg.noise > 0:
            outputs = ch.simulate_outputs(emap, cfg.noise, cfg.seed)
            pm = ch.qpt_extract(outputs, b1, b2, cfg.tol, spec)
            chi, diag = pm.chi, pm.diagnostics
        else:
            outputs = ch.simulate_outputs(emap)
            chi = emap.chi(b1, b2)
            diag = ch.ProcessMatrix(chi, cfg.basis, spec).physicality(cfg.tol)
    return chi, diag, outputs


def _emit_chi(chi, basis, gate, diag, meta, fmt, out) -> None:
    if fmt == "csv":
        _write(docs.chi_long_csv(chi), out)
    else:
        _write(docs.dumps(docs.chi_document(chi, basis, gate, diag, meta)), out)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    chi, diag, outputs = simulate_chi(cfg)
    meta = {"command": "simulate", "config": cfg.to_dict()}
    _emit_chi(chi, cfg.basis, cfg.gate, diag, meta, cfg.format, args.out)
    if args.outputs:
        if outputs is None:
            raise ConfigError("--outputs: not available for detuned_idle")
        _write(docs.dumps(docs.outputs_document(outputs, cfg.gate)), args.outputs)
    return EXIT_OK


def cmd_qpt(args) -> int:
    outputs, gate = docs.read_outputs_document(docs.load_json(args.input))
    basis = args.basis or "pauli"
    b1, b2 = named_factors(basis)
    tol = args.tol if args.tol is not None else 1e-9
    try:
        pm = ch.qpt_extract(outputs, b1, b2, tol, gate.to_spec() if gate else None)
    except ch.ConsistencyError as exc:
        raise CliFailure(EXIT_PHYSICAL, str(exc)) from exc
    meta = {"command": "qpt", "source": os.path.basename(args.input)}
    _emit_chi(pm.chi, basis, gate, pm.diagnostics, meta, args.format or "json", args.out)
    return EXIT_OK


def cmd_fingerprint(args) -> int:
    chi, basis, gate, _ = docs.read_chi_document(docs.load_json(args.input))
    if basis != "pauli":
        raise ConfigError(f"basis: fingerprint needs a Pauli-basis chi, got {basis!r}")
    if args.config:
        gate = _config(args).gate
    if gate is None:
        raise ConfigError("gate: the chi document has no gate block; pass --config")
    pm = docs.process_matrix(chi, basis, gate)
    try:
        report = an.fingerprint(pm, noise_sigma=args.noise or 0.0, refine=args.refine)
    except an.AnalysisError as exc:
        raise ConfigError(str(exc)) from exc
    doc = {"kind": "fingerprint", "gate": gate.to_dict(), **report.to_dict()}
    _write(docs.dumps(doc), args.out)
    return EXIT_OK


def cmd_table1(args) -> int:
    result = an.table1()
    lines = []
    for row in ("lambda", "nu", "chi", "Jtilde"):
        status = "PASS" if result["match"][row] else "FAIL"
        lines.append(f"{status} {row:7s} computed={result['computed'][row]} reference={result['reference'][row]}")
    if args.out:
        _write(docs.dumps({"kind": "table1", **result}), args.out)
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if all(result["match"].values()) else EXIT_PHYSICAL


def cmd_figure(args) -> int:
    try:
        spec, models, marks = an.figure_case(args.name)
    except an.AnalysisError as exc:
        raise ConfigError(str(exc)) from exc
    chi = ch.evolution_map(spec, models).chi()
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    stem = os.path.join(outdir, args.name)
    _write(docs.grid_csv(chi.real), stem + "_re.csv")
    _write(docs.grid_csv(chi.imag), stem + "_im.csv")
    side = {"kind": "figure", "name": args.name,
            "gate": {"kind": spec.kind, "s_mhz": an.FIG_S_MHZ, "t_ns": None, "delta_omega_mhz": None},
            "models": [type(m).__name__ for m in models],
            "marked_positions": {k: [list(p) for p in v] for k, v in marks.items()},
            "files": [os.path.basename(stem + "_re.csv"), os.path.basename(stem + "_im.csv")]}
    _write(docs.dumps(side), stem + ".json")
    return EXIT_OK


def _set_path(d: dict, path: str, value: float) -> dict:
    out = copy.deepcopy(d)
    node = out
    keys = path.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--param: {path} does not name a config field")
    node[keys[-1]] = value
    return out


def _sweep_point(base: dict, param: str, value: float, tol: float) -> dict:
    raw = _set_path(base, param, value)
    raw["tol"] = tol
    cfg = RunConfig.from_dict(raw)
    chi, diag, _ = simulate_chi(cfg)
    row = {"value": value, "trace": diag["trace"], "min_eigenvalue": diag["min_eigenvalue"]}
    spec = cfg.spec()
    if cfg.basis == "pauli" and spec.kind != ch.XY:
        rep = an.fingerprint(ch.ProcessMatrix(chi, "pauli", spec))
        row["top_mechanism"] = rep.top()
        for k, v in rep.mechanisms.items():
            row[f"evidence_{k}"] = v.evidence
    return row


def cmd_sweep(args) -> int:
    base = docs.load_json(args.config) if args.config else None
    if not isinstance(base, dict):
        raise ConfigError("--config: required for sweep")
    if not args.param or not args.values:
        raise ConfigError("--param and --values: required for sweep")
    try:
        values = [float(v) for v in args.values.split(",")]
    except ValueError as exc:
        raise ConfigError(f"--values: {exc}") from exc
    tol = args.tol if args.tol is not None else 1e-9
    _sweep_point(base, args.param, values[0], tol)  # fail fast on a bad config
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(lambda v: _sweep_point(base, args.param, v, tol), values))
    if (args.format or "json") == "csv":
        keys = list(rows[0])
        lines = [",".join(keys)] + [",".join(str(r.get(k, "")) for k in keys) for r in rows]
        _write("\n".join(lines) + "\n", args.out)
    else:
        _write(docs.dumps({"kind": "sweep", "param": args.param, "rows": rows}), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--out", help="output path (default stdout; directory for figure)")
    common.add_argument("--format", choices=docs.FORMATS)
    common.add_argument("--tol", type=float)
    common.add_argument("--refine", action="store_true", help="run the best-fit pass (fingerprint)")
    common.add_argument("--seed", type=int)
    common.add_argument("--noise", type=float)

    p = argparse.ArgumentParser(prog="qptdecoh", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="chi of a configured gate and decoherence")
    s.add_argument("--outputs", help="also write the 16 QPT output states here")
    s.set_defaults(func=cmd_simulate)
    q = sub.add_parser("qpt", parents=[common], help="chi from 16 output density matrices")
    q.add_argument("input")
    q.add_argument("--basis", choices=docs.BASES)
    q.set_defaults(func=cmd_qpt)
    f = sub.add_parser("fingerprint", parents=[common], help="identify mechanisms in a chi document")
    f.add_argument("input")
    f.set_defaults(func=cmd_fingerprint)
    t = sub.add_parser("table1", parents=[common], help="recompute the nonzero-element counts")
    t.set_defaults(func=cmd_table1)
    g = sub.add_parser("figure", parents=[common], help="Re/Im chi grids for fig1..fig4")
    g.add_argument("name")
    g.set_defaults(func=cmd_figure)
    w = sub.add_parser("sweep", parents=[common], help="simulate over a list of parameter values")
    w.add_argument("--param", help="dotted config field, e.g. decoherence.t1_q1_ns")
    w.add_argument("--values", help="comma-separated values")
    w.add_argument("--workers", type=int, default=4)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ch.ConsistencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICAL
    except (ch.ChannelError, an.AnalysisError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
