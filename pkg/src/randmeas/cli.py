"""Command-line surface: acquisition, estimation, oracles, and protocols.

Every command is a pure function of its configuration; seeds are mandatory,
so reruns produce byte-identical datasets and result records.  Machine-
readable single-line JSON records go to stdout, human summaries to stderr.

Exit codes: 0 ok, 2 configuration or usage, 3 size cap, 4 file I/O or
format, 5 protocol violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

import numpy as np

from . import __version__, dataset as dsmod, shadows
from .ensembles import EnsembleSpec
from .errors import (
    ConfigError,
    DatasetIOError,
    ProtocolViolationError,
    RandmeasError,
    SizeCapError,
    NoCompatibleSettingsError,
)
from .hamlearn import chain_ansatz, AnsatzBasis, learn_from_dataset
from .hammodels import hamiltonian_from_spec
from .pauli import PauliString
from .protocols import (
    cross_overlap,
    dfe_estimate,
    dfe_plan,
    fmax,
    otoc_estimate,
    otoc_run,
    purity_hamming,
)
from .sim import (
    State,
    apply_noise,
    evolve,
    oracle_expectation,
    oracle_otoc,
    oracle_pt_moments,
    oracle_purity,
    oracle_reflection,
    prepare,
)

RESULT_SCHEMA = "rmres/1"


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise DatasetIOError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _prepare_state(cfg: dict) -> State:
    if "state" not in cfg:
        raise ConfigError("config is missing the state spec")
    state = prepare(cfg["state"])
    if "evolve" in cfg:
        ev = cfg["evolve"]
        h = hamiltonian_from_spec(ev["hamiltonian"])
        state = evolve(state, h, float(ev["t"]))
    for channel in cfg.get("noise", []):
        state = apply_noise(state, channel)
    return state


def _emit(record: dict, summary: str) -> None:
    record = {"schema": RESULT_SCHEMA, "tool": f"randmeas {__version__}", **record}
    sys.stdout.write(json.dumps(record, separators=(",", ":"), sort_keys=True) + "\n")
    sys.stderr.write(summary + "\n")


def _estimate_fields(est: shadows.EstimateWithError) -> dict:
    return {
        "value": est.value,
        "std_error": est.std_error,
        "n_samples": est.n_samples,
        "method": est.method,
        "flags": list(est.flags),
    }


def _parse_subsys(text: Optional[str], default=None):
    if text is None:
        if default is None:
            raise ConfigError("missing required qubit subset")
        return default
    try:
        return [int(x) for x in text.split(",") if x != ""]
    except ValueError as exc:
        raise ConfigError(f"bad qubit list {text!r}") from exc


# ----------------------------------------------------------------------
# subcommands


def cmd_measure(args) -> None:
    cfg = _load_config(args.config)
    for field in ("m", "k", "seed", "out", "device"):
        val = getattr(args, field, None)
        if val is not None:
            cfg[field] = val
    if "seed" not in cfg:
        raise ConfigError("a master seed is required (no wall-clock default)")
    for field in ("m", "k", "out"):
        if field not in cfg:
            raise ConfigError(f"config is missing {field!r}")
    if int(cfg["m"]) < 1 or int(cfg["k"]) < 1:
        raise ConfigError("m and k must be at least 1")
    state = _prepare_state(cfg)
    e = EnsembleSpec(cfg.get("ensemble", {}).get("kind", "single_qubit_clifford"),
                     state.n_qubits)
    ds = dsmod.acquire(
        state, e, m=int(cfg["m"]), k=int(cfg["k"]), master_seed=int(cfg["seed"]),
        state_description=json.dumps(cfg["state"], sort_keys=True),
        threads=args.threads, device=int(cfg.get("device", 0)),
    )
    dsmod.write(ds, cfg["out"])
    digest = dsmod.file_digest(cfg["out"])
    _emit(
        {"command": "measure", "params": {k: cfg[k] for k in
                                          ("m", "k", "seed", "out", "device")
                                          if k in cfg},
         "n_qubits": ds.n_qubits, "dataset_digest": digest, "value": None,
         "path": cfg["out"]},
        f"measure: wrote {cfg['out']} N={ds.n_qubits} M={ds.m_settings} "
        f"K={ds.k_shots} {digest[:23]}…",
    )


def _estimator_record(args, ds, est, name: str, extra: Optional[dict] = None) -> dict:
    rec = {
        "command": "estimate",
        "estimator": name,
        "params": {k: v for k, v in vars(args).items()
                   if k not in ("func", "threads") and v is not None},
        "dataset_digest": ds.digest(),
        **_estimate_fields(est),
    }
    if extra:
        rec.update(extra)
    return rec


def cmd_estimate(args) -> None:
    ds = dsmod.read(args.dataset)
    name = args.estimator
    full = list(range(ds.n_qubits))
    if name == "pauli":
        if not args.pauli:
            raise ConfigError("--pauli is required for the pauli estimator")
        p = PauliString.from_string(args.pauli, ds.n_qubits)
        est = shadows.predict_pauli(ds, p, batches=args.mom or 1)
        rec = _estimator_record(args, ds, est, name)
    elif name == "observable":
        if not args.observable_file:
            raise ConfigError("--observable-file is required")
        spec = _load_config(args.observable_file)
        mat = np.array([[complex(re, im) for re, im in row]
                        for row in spec["matrix"]])
        qubits = spec.get("qubits", _parse_subsys(args.subsys, full))
        est = shadows.predict_observable(ds, mat, qubits)
        rec = _estimator_record(args, ds, est, name)
    elif name == "purity-shadow":
        est = shadows.purity_shadow(ds, _parse_subsys(args.subsys, full))
        rec = _estimator_record(args, ds, est, name)
    elif name == "purity-hamming":
        est = purity_hamming(ds, _parse_subsys(args.subsys, full))
        rec = _estimator_record(args, ds, est, name)
    elif name == "renyi2":
        est = shadows.renyi2(ds, _parse_subsys(args.subsys, full),
                             estimator=args.backend)
        rec = _estimator_record(args, ds, est, name)
    elif name == "renyi2-sweep":
        rows = []
        for size in range(1, ds.n_qubits + 1):
            est = shadows.renyi2(ds, list(range(size)), estimator=args.backend)
            rows.append((size, est))
            rec = _estimator_record(args, ds, est, name,
                                    extra={"subsystem_size": size})
            _emit(rec, f"renyi2 [0..{size - 1}]: {est.value:.4f} ± {est.std_error:.4f}")
        if args.csv:
            with open(args.csv, "w", encoding="utf-8") as f:
                f.write("subsystem_size,value,std_error\n")
                for size, est in rows:
                    f.write(f"{size},{est.value:.10g},{est.std_error:.10g}\n")
        return
    elif name == "pt-moments":
        est = shadows.pt_moments(ds, _parse_subsys(args.part_a),
                                 _parse_subsys(args.part_b), args.order)
        rec = _estimator_record(args, ds, est, name)
    elif name == "p3-test":
        verdict = shadows.p3_ppt_test(ds, _parse_subsys(args.part_a),
                                      _parse_subsys(args.part_b), z=args.z)
        rec = {
            "command": "estimate", "estimator": name,
            "params": {"part_a": args.part_a, "part_b": args.part_b, "z": args.z},
            "dataset_digest": ds.digest(),
            "value": {"entangled": verdict.entangled,
                      "margin_sigma": verdict.margin_sigma,
                      "p2": verdict.p2.value, "p3": verdict.p3.value},
            "std_error": None, "method": "p3-vs-p2sq", "n_samples": verdict.p2.n_samples,
            "flags": [],
        }
        _emit(rec, f"p3-test: {'entangled' if verdict.entangled else 'inconclusive'}"
                   f" (margin {verdict.margin_sigma:.2f} sigma)")
        return
    elif name == "reflection":
        z_r, z_tilde = shadows.reflection_invariant(ds, _parse_subsys(args.window))
        rec = _estimator_record(args, ds, z_tilde, name,
                                extra={"z_r": _estimate_fields(z_r)})
    elif name == "topo-entropy":
        est = shadows.topological_entropy(
            ds, _parse_subsys(args.part_a), _parse_subsys(args.part_b),
            _parse_subsys(args.part_c), estimator=args.backend,
        )
        rec = _estimator_record(args, ds, est, name)
    else:
        raise ConfigError(f"unknown estimator {name!r}")
    _emit(rec, f"{name}: {rec['value']} ± {rec.get('std_error')}")


def cmd_oracle(args) -> None:
    cfg = _load_config(args.config)
    state = _prepare_state(cfg)
    q = args.quantity
    if q == "purity":
        value = oracle_purity(state, _parse_subsys(args.subsys,
                                                   list(range(state.n_qubits))))
    elif q == "expectation":
        value = oracle_expectation(state,
                                   PauliString.from_string(args.pauli, state.n_qubits))
    elif q == "pt-moments":
        value = oracle_pt_moments(state, _parse_subsys(args.part_a),
                                  _parse_subsys(args.part_b), args.order)
    elif q == "reflection":
        value = oracle_reflection(state, _parse_subsys(args.window))
    elif q == "otoc-curve":
        h = hamiltonian_from_spec(cfg["hamiltonian"])
        w = PauliString.from_string(cfg["w"], h.n_qubits)
        v = PauliString.from_string(cfg["v"], h.n_qubits)
        rows = [(t, oracle_otoc(h, w, v, float(t))) for t in cfg["times"]]
        if args.csv:
            with open(args.csv, "w", encoding="utf-8") as f:
                f.write("t,otoc\n")
                for t, val in rows:
                    f.write(f"{t:.10g},{val:.10g}\n")
        for t, val in rows:
            _emit({"command": "oracle", "quantity": q, "params": {"t": t},
                   "value": val, "std_error": 0.0, "method": "exact",
                   "n_samples": 0, "flags": []},
                  f"oracle otoc t={t}: {val:.6f}")
        return
    else:
        raise ConfigError(f"unknown oracle quantity {q!r}")
    _emit({"command": "oracle", "quantity": q,
           "params": {k: v for k, v in vars(args).items()
                      if k not in ("func", "threads") and v is not None},
           "value": float(value), "std_error": 0.0, "method": "exact",
           "n_samples": 0, "flags": []},
          f"oracle {q}: {value:.8f}")


def cmd_compare(args) -> None:
    ds1 = dsmod.read(args.dataset1)
    ds2 = dsmod.read(args.dataset2)
    qubits = _parse_subsys(args.subsys, list(range(ds1.n_qubits)))
    est = fmax(ds1, ds2, qubits)
    overlap = cross_overlap(ds1, ds2, qubits)
    rec = {
        "command": "compare",
        "params": {"subsys": qubits},
        "dataset_digest": ds1.digest(),
        "dataset_digest_2": ds2.digest(),
        "overlap": _estimate_fields(overlap),
        **_estimate_fields(est),
    }
    _emit(rec, f"fmax: {est.value:.4f} ± {est.std_error:.4f}")


def cmd_dfe(args) -> None:
    cfg = _load_config(args.target_config)
    target = _prepare_state(cfg)
    from .sim import PureState

    if not isinstance(target, PureState):
        raise ConfigError("DFE target must be a pure state")
    ds = dsmod.read(args.dataset)
    plan = dfe_plan(target, l_samples=args.samples, seed=args.plan_seed,
                    label=json.dumps(cfg["state"], sort_keys=True))
    if args.plan_out:
        with open(args.plan_out, "w", encoding="utf-8") as f:
            f.write(plan.to_json() + "\n")
    est = dfe_estimate(plan, ds)
    rec = {
        "command": "dfe",
        "params": {"samples": args.samples, "plan_seed": args.plan_seed},
        "dataset_digest": ds.digest(),
        **_estimate_fields(est),
    }
    _emit(rec, f"dfe fidelity: {est.value:.4f} ± {est.std_error:.4f} "
               f"(effective draws {est.n_samples})")


def cmd_otoc(args) -> None:
    cfg = _load_config(args.config)
    h = hamiltonian_from_spec(cfg["hamiltonian"])
    w = PauliString.from_string(cfg["w"], h.n_qubits)
    v = PauliString.from_string(cfg["v"], h.n_qubits)
    ensemble = None
    if cfg.get("initial", "global_haar") == "local":
        ensemble = EnsembleSpec(cfg.get("ensemble", {}).get("kind", "single_qubit_haar"),
                                h.n_qubits)
    run = otoc_run(h, w, v, [float(t) for t in cfg["times"]], m=int(cfg["m"]),
                   seed=int(cfg["seed"]), ensemble=ensemble)
    if args.run_out:
        with open(args.run_out, "w", encoding="utf-8") as f:
            f.write(run.to_json() + "\n")
    ests = otoc_estimate(run)
    rows = []
    for t, est in zip(run.times, ests):
        rows.append((t, est))
        _emit({"command": "otoc",
               "params": {"t": t, "m": run.m_settings, "seed": run.seed,
                          "initial": run.initial, "w": str(w), "v": str(v)},
               **_estimate_fields(est)},
              f"otoc t={t}: {est.value:.4f} ± {est.std_error:.4f}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as f:
            f.write("t,value,std_error\n")
            for t, est in rows:
                f.write(f"{t:.10g},{est.value:.10g},{est.std_error:.10g}\n")


def cmd_hamlearn(args) -> None:
    ds = dsmod.read(args.dataset)
    if args.basis_file:
        spec = _load_config(args.basis_file)
        terms = tuple(PauliString.from_string(s, ds.n_qubits) for s in spec["terms"])
        basis = AnsatzBasis(terms, locality=int(spec.get("locality", 2)),
                            geometry=spec.get("geometry", "file"))
    else:
        basis = chain_ansatz(ds.n_qubits, locality=args.locality,
                             reach=args.reach, family=args.family)
    result = learn_from_dataset(ds, basis, gap_threshold=args.gap_threshold)
    couplings = {p.letters(): float(c)
                 for p, c in zip(basis.terms, result.coefficients)}
    rec = {
        "command": "hamlearn",
        "params": {"family": args.family, "locality": args.locality,
                   "reach": args.reach, "gap_threshold": args.gap_threshold},
        "dataset_digest": ds.digest(),
        "value": couplings,
        "gap": result.gap if np.isfinite(result.gap) else "inf",
        "flagged": result.flagged,
        "missing": list(result.missing),
        "std_error": None,
        "method": "kernel-svd",
        "n_samples": ds.m_settings,
        "flags": ["ill-conditioned"] if result.flagged else [],
    }
    _emit(rec, f"hamlearn: gap={result.gap:.3g} flagged={result.flagged}")


# ----------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="randmeas",
                description="randomized-measurement simulation and estimation")
    p.add_argument("--version", action="version", version=f"randmeas {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("measure", help="acquire a randomized-measurement dataset")
    m.add_argument("--config", required=True)
    m.add_argument("--m", type=int)
    m.add_argument("--k", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--device", type=int)
    m.add_argument("--out")
    m.add_argument("--threads", type=int, default=1)
    m.set_defaults(func=cmd_measure)

    e = sub.add_parser("estimate", help="run an estimator over a dataset")
    e.add_argument("dataset")
    e.add_argument("--estimator", required=True,
                   choices=["pauli", "observable", "purity-shadow", "purity-hamming",
                            "renyi2", "renyi2-sweep", "pt-moments", "p3-test",
                            "reflection", "topo-entropy"])
    e.add_argument("--pauli")
    e.add_argument("--subsys")
    e.add_argument("--window")
    e.add_argument("--part-a")
    e.add_argument("--part-b")
    e.add_argument("--part-c")
    e.add_argument("--order", type=int, default=3)
    e.add_argument("--z", type=float, default=3.0)
    e.add_argument("--mom", type=int)
    e.add_argument("--backend", choices=["shadow", "hamming"], default="shadow")
    e.add_argument("--observable-file")
    e.add_argument("--csv")
    e.add_argument("--threads", type=int, default=1)
    e.set_defaults(func=cmd_estimate)

    o = sub.add_parser("oracle", help="exact values from the simulator")
    o.add_argument("--config", required=True)
    o.add_argument("--quantity", required=True,
                   choices=["purity", "expectation", "pt-moments", "reflection",
                            "otoc-curve"])
    o.add_argument("--pauli")
    o.add_argument("--subsys")
    o.add_argument("--window")
    o.add_argument("--part-a")
    o.add_argument("--part-b")
    o.add_argument("--order", type=int, default=3)
    o.add_argument("--csv")
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("compare", help="cross-platform fidelity of two datasets")
    c.add_argument("dataset1")
    c.add_argument("dataset2")
    c.add_argument("--subsys")
    c.set_defaults(func=cmd_compare)

    d = sub.add_parser("dfe", help="direct fidelity estimation against a pure target")
    d.add_argument("dataset")
    d.add_argument("--target-config", required=True)
    d.add_argument("--samples", type=int, default=200)
    d.add_argument("--plan-seed", type=int, required=True)
    d.add_argument("--plan-out")
    d.set_defaults(func=cmd_dfe)

    t = sub.add_parser("otoc", help="twin-experiment OTOC protocol")
    t.add_argument("--config", required=True)
    t.add_argument("--csv")
    t.add_argument("--run-out")
    t.set_defaults(func=cmd_otoc)

    h = sub.add_parser("hamlearn", help="recover couplings from a steady-state dataset")
    h.add_argument("dataset")
    h.add_argument("--family", choices=["full", "balanced"], default="balanced")
    h.add_argument("--locality", type=int, default=2)
    h.add_argument("--reach", type=int, default=1)
    h.add_argument("--gap-threshold", type=float, default=10.0)
    h.add_argument("--basis-file")
    h.set_defaults(func=cmd_hamlearn)
    return p


_EXIT_CODES = [
    (ProtocolViolationError, 5),
    (SizeCapError, 3),
    (DatasetIOError, 4),
    (NoCompatibleSettingsError, 2),
    (ConfigError, 2),
    (RandmeasError, 2),
]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except RandmeasError as exc:
        for cls, code in _EXIT_CODES:
            if isinstance(exc, cls):
                sys.stderr.write(f"randmeas: {exc}\n")
                return code
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
