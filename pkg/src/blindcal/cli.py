"""Command-line entry point: ``blindcal simulate | calibrate | benchmark``.

Exit codes: 0 success, 2 solver did not converge, 3 malformed input,
4 numerical abort. Every output carries a provenance block (tool version,
input hashes, seed, wall-clock seconds) so a run can be reproduced from its
outputs alone.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, analysis
from .error_models import XI_ACTUAL, CalibrationVector, ErrorModelSpec, PhysicalParams
from .measurement_map import DataFormatError, DataVector, build_map
from .simulator import NAMED_STATES, CircuitSpec, Experiment, NoiseSpec, target_state
from .solver import TOMOGRAPHY_CONFIG, SolverConfig, SolverError, blind_calibrate, calibrated_tomography

log = logging.getLogger("blindcal")

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_SCHEMA = 3
EXIT_NUMERICAL = 4

BENCHMARKS = ("shot_scaling", "param_count", "projective_vs_expectation", "normalization_methods", "td_validity")


class SchemaError(Exception):
    """An input file is missing, unreadable or malformed."""


# ---------------------------------------------------------------------------
# inputs
# ---------------------------------------------------------------------------

def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc


def _doc_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _load_config(path) -> dict:
    doc = _read_json(path) if path else {}
    if not isinstance(doc, dict):
        raise SchemaError("config must be a JSON object")
    return doc


def _load_model(path, n: int | None, config: dict) -> tuple[ErrorModelSpec, dict]:
    doc = _read_json(path) if path else config.get("model")
    try:
        if doc is None:
            return ErrorModelSpec(n or 3), {"n": n or 3, "errors": "nine_parameter"}
        return ErrorModelSpec.from_json(doc), doc
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad model spec: {exc}") from exc


def _load_state(arg, config: dict) -> tuple[CircuitSpec, object]:
    """A circuit from a JSON file, a named state, or the config's "state" entry."""
    doc = config.get("state", "GHZ")
    if arg:
        doc = arg if arg in NAMED_STATES else _read_json(arg)
    try:
        if isinstance(doc, str):
            return NAMED_STATES[doc], doc
        return CircuitSpec.from_json(doc), doc
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad state spec: {exc}") from exc


def _load_zeta(config: dict) -> PhysicalParams:
    doc = config.get("zeta", "xi_actual")
    try:
        if doc == "xi_actual":
            return XI_ACTUAL
        if doc in (None, "ideal"):
            return PhysicalParams()
        return PhysicalParams.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad zeta: {exc}") from exc


def _solver_config(config: dict, base: SolverConfig) -> SolverConfig:
    try:
        return replace(base, **config.get("solver", {}))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad solver settings: {exc}") from exc


def _load_xi(path, spec: ErrorModelSpec) -> CalibrationVector:
    doc = _read_json(path)
    values = doc.get("xi", doc) if isinstance(doc, dict) else None
    if not isinstance(values, dict):
        raise SchemaError(f"{path} has no calibration entries")
    names = spec.coefficient_names
    missing = set(names) - set(values)
    if missing:
        raise SchemaError(f"calibration file lacks {sorted(missing)}")
    try:
        return CalibrationVector.for_spec(spec, [float(values[k]) for k in names])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad calibration values: {exc}") from exc


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

def _provenance(seed, hashes: dict, started: float) -> dict:
    return {"tool": "blindcal", "version": __version__, "seed": seed, "hashes": hashes,
            "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
            "wall_clock_s": round(time.time() - started, 3)}


def _write_json(path: Path, doc: dict) -> None:
    # write-then-rename so a failed run never leaves a partial file
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1, sort_keys=True))
    tmp.replace(path)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    started = time.time()
    config = _load_config(args.config)
    circuit, state_doc = _load_state(args.state, config)
    zeta = _load_zeta(config)
    shots = args.shots if args.shots is not None else int(config.get("shots", 1000))
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    try:
        noise = NoiseSpec(float(config.get("noise", 0.0)))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    if shots < 0:
        raise SchemaError("shots must be >= 0")
    data = Experiment(circuit, zeta, noise).sample(shots, seed)
    hashes = {"state": _doc_hash(state_doc), "config": _doc_hash(config)}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(seed, hashes, started)
    _write_json(out / "counts.json", {**data.to_json(), "provenance": prov})
    _write_json(out / "counts.meta.json", {"zeta": zeta.to_dict(), "noise": noise.pauli_noise_per_gate,
                                           "circuit": circuit.to_json(), "shots": shots, "provenance": prov})
    print(out / "counts.json")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    started = time.time()
    config = _load_config(args.config)
    try:
        data = DataVector.from_json(Path(args.counts).read_text())
    except OSError as exc:
        raise SchemaError(f"cannot read {args.counts}: {exc}") from exc
    except DataFormatError as exc:
        raise SchemaError(str(exc)) from exc
    spec, model_doc = _load_model(args.model, data.n, config)
    if spec.n != data.n:
        raise SchemaError(f"model is for n={spec.n} but data has n={data.n}")
    circuit, state_doc = _load_state(args.state, config)
    if circuit.n != data.n:
        raise SchemaError(f"state has n={circuit.n} but data has n={data.n}")
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    mmap = build_map(spec)
    hashes = {"counts": _doc_hash(data.to_json()), "model": _doc_hash(model_doc),
              "state": _doc_hash(state_doc), "config": _doc_hash(config)}
    out = Path(args.out)
    if args.mode == "tomography":
        if not args.xi:
            raise SchemaError("--mode tomography needs --xi")
        xi = _load_xi(args.xi, spec)
        cfg = _solver_config(config, TOMOGRAPHY_CONFIG)
        rho = calibrated_tomography(mmap, data, xi, cfg)
        doc = {"mode": "tomography", "xi": xi.as_dict(),
               "rho": [[[float(z.real), float(z.imag)] for z in row] for row in rho], "converged": True}
        code = EXIT_OK
    else:
        cfg = _solver_config(config, SolverConfig())
        res = blind_calibrate(mmap, data, cfg, target_psi=target_state(circuit), seed=seed)
        doc = {"mode": "blind", **res.to_json()}
        code = EXIT_OK if res.converged else EXIT_NOT_CONVERGED
    if not all(np.isfinite(v) for v in doc["xi"].values()):
        raise FloatingPointError("non-finite calibration estimate")
    out.mkdir(parents=True, exist_ok=True)
    doc["solver"] = cfg.to_json()
    doc["provenance"] = _provenance(seed, hashes, started)
    _write_json(out / "result.json", doc)
    print(out / "result.json")
    if code == EXIT_NOT_CONVERGED:
        log.warning("solver stopped after %d iterations without converging", doc["iterations"])
    return code


def cmd_benchmark(args) -> int:
    started = time.time()
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    circuit, state_doc = _load_state(args.state, config)
    zeta = _load_zeta(config)
    cfg = _solver_config(config, analysis.BENCHMARK_CONFIG)
    trials = int(config.get("trials", 10))
    shots = args.shots if args.shots is not None else int(config.get("shots", 1000))
    name = args.name
    try:
        if name == "shot_scaling":
            grid = config.get("shot_grid", [100, 1000, 10_000, 100_000])
            tables = analysis.shot_scaling_benchmark(circuit, zeta, grid, trials, config=cfg, seed=seed,
                                                     jobs=args.jobs)
        elif name == "param_count":
            tables = (analysis.param_count_benchmark(circuit, zeta, shots, trials, config=cfg, seed=seed,
                                                     jobs=args.jobs),)
        elif name == "projective_vs_expectation":
            tables = (analysis.projective_vs_expectation(circuit, zeta, shots, trials, config=cfg, seed=seed,
                                                         jobs=args.jobs),)
        elif name == "normalization_methods":
            tables = (analysis.normalization_methods(circuit, zeta, shots, trials,
                                                     noise=float(config.get("noise", 0.01)), config=cfg,
                                                     seed=seed),)
        else:
            tables = (analysis.td_validity_sweep(circuit, zeta, shots, trials,
                                                 noise=float(config.get("noise", 0.01)), seed=seed),)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad benchmark settings: {exc}") from exc
    hashes = {"state": _doc_hash(state_doc), "config": _doc_hash(config)}
    for table in tables:
        meta = {"provenance": _provenance(seed, hashes, started), "solver": cfg.to_json()}
        for path in table.write(args.out, meta):
            print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed (u64)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--state", help="circuit JSON file or a named state such as GHZ or OS1")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="blindcal", description="Blind calibration of Pauli measurements.")
    parser.add_argument("--version", action="version", version=f"blindcal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="simulate measurement counts")
    sim.add_argument("--shots", type=int, help="shots per basis; 0 writes exact probabilities")
    sim.set_defaults(func=cmd_simulate)

    cal = sub.add_parser("calibrate", parents=[common], help="blind calibration or calibrated tomography")
    cal.add_argument("counts", help="counts JSON written by simulate")
    cal.add_argument("--model", help="error-model spec JSON")
    cal.add_argument("--mode", choices=("blind", "tomography"), default="blind")
    cal.add_argument("--xi", help="calibration JSON (result of a blind run) for tomography mode")
    cal.set_defaults(func=cmd_calibrate)

    bench = sub.add_parser("benchmark", parents=[common], help="run a simulation benchmark")
    bench.add_argument("name", choices=BENCHMARKS)
    bench.add_argument("--shots", type=int)
    bench.add_argument("--jobs", type=int, default=1, help="worker processes for independent trials")
    bench.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
