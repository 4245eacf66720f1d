"""Command-line front end: ``qpe {construct,approximate,verify,evolve,analyze} --config FILE --out DIR``.

Every command validates its JSON config against a schema, writes its outputs
into the output directory together with ``manifest.json`` (the exact config,
the package version and a SHA-256 for every file) and prints a one-line JSON
summary.  Exit codes: 0 success, 1 failed check, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import tempfile
import warnings
from importlib import metadata
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np
from scipy.ndimage import map_coordinates

from . import qpf
from .density2d.locally_radial import (ScalarFunction, TrigTest, measured_error,
                                       pairing, psi0_from_name, reference_integral)
from .density2d.packing import PackingError, VerticalLines
from .density2d.theorem import build_theorem_family
from .fields import TWO_PI, SampledField, grid_points
from .gluing import (ConfigError, EmbeddingSpec, GluedSolution, GluingConfig, embedded_solution,
                     non_symmetry_check, orbit_coverage)
from .verify.compare import compare_exact_vs_evolved
from .verify.frequency import frequency_analysis, probe_signal
from .verify.residual import STENCIL, residual_from_samples
from .verify.solver import energy, enstrophy, random_vorticity, solve_euler_2d
from .verify.spectral import SpectralWorkspace, grid_shape

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
STENCIL_STEP = 1e-3
OFFSETS = (-2, -1, 0, 1, 2)


class InputError(Exception):
    """Bad config or missing input; maps to exit code 2."""


# schemas -----------------------------------------------------------------------

_NUMBER_LIST = {"type": "array", "items": {"type": "number"}}
_GLUING = {
    "type": "object",
    "required": ["d", "m", "eps", "speeds"],
    "properties": {
        "d": {"type": "integer", "minimum": 2},
        "m": {"type": "integer", "minimum": 1},
        "J": {"type": "integer", "minimum": 1},
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "centers": {"type": "array", "items": _NUMBER_LIST},
        "speeds": {"type": "array", "items": _NUMBER_LIST},
        "sharpness": {"type": "number", "exclusiveMinimum": 0},
        "amplitude": {"type": "number"},
    },
}
_EMBEDDING = {
    "type": "object",
    "required": ["matrix", "nu"],
    "properties": {"matrix": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
                   "nu": _NUMBER_LIST},
}
_FREQUENCY = {
    "type": "object",
    "properties": {
        "T": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "max_order": {"type": "integer", "minimum": 1},
        "harmonics_only": {"type": "boolean"},
        "random_probes": {"type": "integer", "minimum": 0},
    },
}
_ORBIT = {
    "type": "object",
    "properties": {
        "T": {"oneOf": [{"type": "number"}, _NUMBER_LIST]},
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "min_coverage": {"type": "number"},
    },
}
SCHEMAS = {
    "construct": {
        "type": "object",
        "required": ["gluing"],
        "properties": {
            "gluing": _GLUING,
            "embedding": _EMBEDDING,
            "theta": {"type": "array", "items": _NUMBER_LIST},
            "times": _NUMBER_LIST,
            "resolution": {"type": "integer", "minimum": 16},
            "stencil": {"type": "boolean"},
        },
    },
    "approximate": {
        "type": "object",
        "required": ["psi0", "q", "n"],
        "properties": {
            "psi0": {"type": "string"},
            "psi0_file": {"type": "string"},
            "q": {"oneOf": [{"type": "number", "minimum": 1}, {"enum": ["inf"]}]},
            "n": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            "N": {"type": "integer", "minimum": 1},
            "nu": _NUMBER_LIST,
            "resolution": {"type": "integer", "minimum": 16},
            "measure": {"type": "boolean"},
            "g": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                             "minItems": 2, "maxItems": 3}},
        },
    },
    "verify": {
        "type": "object",
        "required": ["bundle"],
        "properties": {
            "bundle": {"type": "string"},
            "residual_tol": {"type": "number"},
            "solver": {"type": "object", "properties": {
                "T": {"type": "number"}, "dt": {"type": "number"}, "resolution": {"type": "integer"},
                "rel_tol": {"type": "number"}}},
            "frequency": _FREQUENCY,
            "orbit": _ORBIT,
        },
    },
    "evolve": {
        "type": "object",
        "required": ["T", "dt"],
        "properties": {
            "omega0": {"type": "object", "properties": {
                "kind": {"enum": ["random", "bundle"]}, "seed": {"type": "integer"},
                "kmax": {"type": "number"}, "bundle": {"type": "string"}, "theta": _NUMBER_LIST}},
            "resolution": {"type": "integer", "minimum": 16},
            "T": {"type": "number", "exclusiveMinimum": 0},
            "dt": {"type": "number", "exclusiveMinimum": 0},
            "snapshots": _NUMBER_LIST,
        },
    },
    "analyze": {
        "type": "object",
        "required": ["bundle"],
        "properties": {"bundle": {"type": "string"}, "frequency": _FREQUENCY, "orbit": _ORBIT},
    },
}


# small helpers -----------------------------------------------------------------

def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "__dataclass_fields__"):
        return {k: getattr(obj, k) for k in obj.__dataclass_fields__}
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    path.write_text(buf.getvalue())


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_bundle(directory) -> tuple[Path, dict]:
    root = Path(directory)
    doc_path = root / "solution.json"
    if not doc_path.exists():
        raise InputError(f"no solution bundle at {root}")
    return root, json.loads(doc_path.read_text())


def _solution_from_doc(doc: dict, theta) -> GluedSolution:
    config = GluingConfig.from_dict(doc["gluing"])
    if doc.get("embedding"):
        return embedded_solution(theta, config, EmbeddingSpec.from_dict(doc["embedding"]))
    return GluedSolution(config)


def _nu(doc: dict) -> np.ndarray:
    """Frequency vector of the bundle: the embedding's, else the distinct nonzero tube speeds."""
    if doc.get("embedding"):
        return np.asarray(doc["embedding"]["nu"], dtype=float)
    speeds = np.asarray(doc["gluing"]["speeds"], dtype=float).ravel()
    return np.unique(speeds[speeds != 0])


def _probe_points(doc: dict, count: int, seed: int | None) -> np.ndarray:
    """Tube centres (x'' = 0), plus ``count`` random probes drawn with ``seed``."""
    g = doc["gluing"]
    d, m = g["d"], g["m"]
    pts = [list(c) + [0.0] * (d - m) for c in GluingConfig.from_dict(g).centers]
    if count:
        rng = np.random.default_rng(seed)
        pts += (rng.random((count, d)) * TWO_PI).tolist()
    return np.asarray(pts, dtype=float)


def _frequency_check(doc: dict, opts: dict, seed: int | None) -> dict:
    nu = _nu(doc)
    sol = _solution_from_doc(doc, np.zeros(nu.size))
    T = float(opts.get("T", 200 * np.pi))
    dt = float(opts.get("dt", 0.02))
    t = np.arange(0.0, T, dt)
    g = probe_signal(sol.velocity, t, _probe_points(doc, int(opts.get("random_probes", 0)), seed))
    if nu.size == 0:
        nu = np.zeros(1)
    res = frequency_analysis(t, g, nu, max_order=int(opts.get("max_order", 64)),
                             harmonics_only=bool(opts.get("harmonics_only", True)))
    res["peaks"] = [_jsonable(p) for p in res["peaks"]]
    return res


def _orbit_check(doc: dict, opts: dict) -> dict:
    nu = _nu(doc)
    delta = float(opts.get("delta", 0.2))
    horizons = np.atleast_1d(opts.get("T", [250.0, 500.0, 1000.0, 2000.0])).astype(float)
    if nu.size == 0:
        return {"N": 0, "coverage": [], "pass": True}
    cov = [orbit_coverage(nu, np.zeros(nu.size), float(T), delta) for T in horizons]
    threshold = opts.get("min_coverage")
    ok = bool(np.all(np.diff(cov) >= 0)) and (threshold is None or cov[-1] >= threshold)
    return {"N": int(nu.size), "delta": delta, "T": horizons.tolist(), "coverage": cov,
            "min_coverage": threshold, "pass": ok}


# commands ----------------------------------------------------------------------

def cmd_construct(cfg: dict, out: Path, args) -> int:
    try:
        config = GluingConfig.from_dict(cfg["gluing"])
        report = config.validate()
        if not report.valid:
            raise ConfigError(report)
        spec = EmbeddingSpec.from_dict(cfg["embedding"]) if "embedding" in cfg else None
    except (ConfigError, ValueError, KeyError) as exc:
        raise InputError(str(exc)) from exc
    N = spec.N if spec else 0
    thetas = [np.asarray(th, dtype=float) for th in cfg.get("theta", [[0.0] * N])]
    times = [float(t) for t in cfg.get("times", [0.0])]
    res = int(cfg.get("resolution", 128 if config.d == 2 else 24))
    stencil = bool(cfg.get("stencil", config.d == 2))
    shape = grid_shape(res, config.d)
    pts = grid_points(shape)
    _dump(out / "solution.json", {"gluing": config.to_dict(), "embedding": spec.to_dict() if spec else None,
                                  "theta": [th.tolist() for th in thetas], "times": times,
                                  "resolution": res, "stencil": stencil,
                                  "warnings": [w.message for w in report.warnings]})
    verdicts = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, th in enumerate(thetas):
            try:
                sol = embedded_solution(th, config, spec) if spec else GluedSolution(config)
            except ValueError as exc:
                raise InputError(str(exc)) from exc
            u0 = np.moveaxis(sol.velocity(0.0, pts), -1, 0)
            verdicts.append({"theta": th.tolist(), **non_symmetry_check(SampledField(u0))})
            for k, t in enumerate(times):
                offsets = OFFSETS if stencil else (0,)
                values = np.concatenate([np.moveaxis(sol.velocity(t + s * STENCIL_STEP, pts), -1, 0)
                                         for s in offsets])
                meta = {"kind": "velocity", "theta": th.tolist(), "t": t, "offsets": list(offsets),
                        "step": STENCIL_STEP, "d": config.d}
                qpf.write(out / f"u_theta{i}_t{k}.qpf", SampledField(values, meta))
    _dump(out / "nonsymmetry.json", verdicts)
    print(json.dumps({"command": "construct", "snapshots": len(thetas) * len(times),
                      "verdicts": [v["verdict"] for v in verdicts]}))
    return EXIT_OK


def _psi0(cfg: dict) -> ScalarFunction:
    if cfg.get("psi0_file"):
        path = Path(cfg["psi0_file"])
        if not path.exists():
            raise InputError(f"psi0 file {path} not found")
        field = qpf.read(path)
        if field.dim != 2 or field.components != 1:
            raise InputError("psi0 file must hold a scalar field on T^2")
        data = field.values[0]
        shape = np.array(data.shape)

        def fn(x):
            idx = np.moveaxis(np.asarray(x) / TWO_PI, -1, 0) * shape.reshape(-1, *([1] * (np.ndim(x) - 1)))
            return map_coordinates(data, idx, order=3, mode="grid-wrap")

        return ScalarFunction(fn, path.stem)
    try:
        return psi0_from_name(cfg["psi0"])
    except (KeyError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def cmd_approximate(cfg: dict, out: Path, args) -> int:
    psi0 = _psi0(cfg)
    q = np.inf if cfg["q"] == "inf" else float(cfg["q"])
    N = int(cfg.get("N", 2))
    nu = cfg.get("nu", [1.0 + j * (np.sqrt(2) - 1.0) for j in range(N)])
    res = int(cfg.get("resolution", 256))
    measure = bool(cfg.get("measure", True))
    pts = grid_points((res, res))
    lines = VerticalLines.uniform(N)
    conv, pairs, families = [], [], []
    tests = [TrigTest((g[0], g[1]), g[2] if len(g) > 2 else 0.0) for g in cfg.get("g", [])]
    for n in cfg["n"]:
        try:
            fam = build_theorem_family(psi0, n, N, nu, q)
        except (PackingError, ValueError) as exc:
            raise InputError(str(exc)) from exc
        phi, rep = fam.phi, fam.phi.report
        _dump(out / f"packing_n{n}.json", phi.packing.to_dict())
        qpf.write(out / f"phi_n{n}.qpf", SampledField.scalar(phi(pts), {"n": n, "kind": "phi"}))
        qpf.write(out / f"psi0n_n{n}.qpf", SampledField.scalar(fam.initial_datum(pts), {"n": n, "kind": "psi0n"}))
        families.append(fam.parameters())
        if not np.isinf(q):
            err = measured_error(phi, q) if measure else float("nan")
            conv.append([n, phi.packing.n_disks, phi.packing.max_radius, phi.packing.uncovered_area,
                         err, rep["certified_bound"]])
        for g in tests:
            ref = reference_integral(lambda x: psi0(x) * g(x))
            val = pairing(phi, g)
            pairs.append([n, g.k[0], g.k[1], g.phase, val, ref, val - ref])
    _dump(out / "family.json", families)
    if conv:
        _write_csv(out / "convergence.csv", ["n", "L", "max_radius", "uncovered_area", "error", "certified_bound"],
                   conv)
    if pairs:
        _write_csv(out / "pairings.csv", ["n", "k1", "k2", "phase", "pairing", "reference", "difference"], pairs)
    print(json.dumps({"command": "approximate", "n": cfg["n"], "q": cfg["q"],
                      "errors": [r[4] for r in conv], "pairings": len(pairs)}))
    return EXIT_OK


def _residual_checks(root: Path, doc: dict, tol: float) -> list[dict]:
    rows = []
    for path in sorted(root.glob("u_theta*_t*.qpf")):
        try:
            field = qpf.read(path)
        except (qpf.QPFFormatError, ValueError) as exc:
            rows.append({"file": path.name, "error": str(exc), "pass": False})
            continue
        meta = field.metadata
        offsets, d = meta.get("offsets", [0]), int(meta.get("d", field.dim))
        if len(offsets) != len(OFFSETS) or field.components != d * len(OFFSETS):
            continue
        parts = {s: field.values[i * d:(i + 1) * d] for i, s in enumerate(offsets)}
        ut = sum(w * parts[s] for s, w in STENCIL) / float(meta["step"])
        r = residual_from_samples(ut, parts[0], SpectralWorkspace(field.shape))
        r.update({"file": path.name, "t": meta.get("t"),
                  "pass": r["max_div"] <= tol and r["max_momentum"] <= tol})
        rows.append(r)
    return rows


def _solver_check(doc: dict, opts: dict) -> dict:
    nu = _nu(doc)
    sol = _solution_from_doc(doc, np.zeros(nu.size))
    T, dt = float(opts.get("T", 0.1)), float(opts.get("dt", 1e-3))
    res = int(opts.get("resolution", 256))
    rows = compare_exact_vs_evolved(sol, T, res, dt, [T])
    scale = float(np.abs(sol.vorticity(0.0, grid_points((res, res)))).max()) or 1.0
    rel = rows[-1]["sup"] / scale
    tol = float(opts.get("rel_tol", 1e-3))
    return {"rows": rows, "scale": scale, "relative_sup": rel, "rel_tol": tol, "pass": rel <= tol}


def cmd_verify(cfg: dict, out: Path, args) -> int:
    root, doc = _load_bundle(cfg["bundle"])
    tol = float(cfg.get("residual_tol", 1e-6))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = {"bundle": str(root), "residual": _residual_checks(root, doc, tol)}
        if doc["gluing"]["d"] == 2 and cfg.get("solver", {}) is not None:
            report["solver"] = _solver_check(doc, cfg.get("solver", {}))
        report["frequency"] = _frequency_check(doc, cfg.get("frequency", {}), args.seed)
        report["orbit"] = _orbit_check(doc, cfg.get("orbit", {}))
    checks = [r["pass"] for r in report["residual"]]
    checks += [report[k]["pass"] for k in ("solver", "frequency", "orbit") if k in report]
    report["pass"] = bool(all(checks))
    _dump(out / "report.json", report)
    print(json.dumps({"command": "verify", "pass": report["pass"], "checks": len(checks)}))
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_evolve(cfg: dict, out: Path, args) -> int:
    res = int(cfg.get("resolution", 256))
    shape = (res, res)
    init = cfg.get("omega0", {"kind": "random"})
    mean = np.zeros(2)
    if init.get("kind", "random") == "bundle":
        if "bundle" not in init:
            raise InputError("omega0 of kind 'bundle' needs a bundle directory")
        _, doc = _load_bundle(init["bundle"])
        if doc["gluing"]["d"] != 2:
            raise InputError("the solver is two-dimensional")
        nu = _nu(doc)
        theta = np.asarray(init.get("theta", np.zeros(nu.size)), dtype=float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = _solution_from_doc(doc, theta)
        ws = SpectralWorkspace(shape)
        w = sol.vorticity(0.0, grid_points(shape))
        omega0 = SampledField(ws.ifft(ws.fft(w) * ws.dealias_mask * (ws.k2 > 0))[None])
        mean = sol.mean_velocity()
    else:
        omega0 = random_vorticity(shape, int(init.get("seed", 0)), float(init.get("kmax", 8)))
    T, dt = float(cfg["T"]), float(cfg["dt"])
    snaps = [float(t) for t in cfg.get("snapshots", [0.0, T])]
    try:
        states = solve_euler_2d(omega0, T, dt, snapshot_times=snaps, mean_velocity=mean)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    rows = []
    for k, s in enumerate(states):
        qpf.write(out / f"omega_{k}.qpf", s.omega)
        rows.append([s.t, energy(s.omega, mean), enstrophy(s.omega)])
    _write_csv(out / "conservation.csv", ["t", "energy", "enstrophy"], rows)
    e0, z0 = rows[0][1], rows[0][2]
    drift = max(max(abs(r[1] - e0) / abs(e0), abs(r[2] - z0) / abs(z0)) for r in rows) if e0 and z0 else 0.0
    print(json.dumps({"command": "evolve", "snapshots": len(rows), "relative_drift": drift}))
    return EXIT_OK


def cmd_analyze(cfg: dict, out: Path, args) -> int:
    _, doc = _load_bundle(cfg["bundle"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        freq = _frequency_check(doc, cfg.get("frequency", {}), args.seed)
    orbit = _orbit_check(doc, cfg.get("orbit", {}))
    _dump(out / "analysis.json", {"frequency": freq, "orbit": orbit})
    _write_csv(out / "peaks.csv", ["frequency", "magnitude", "combination", "predicted", "deviation", "matched"],
               [[p["frequency"], p["magnitude"], " ".join(map(str, p["combination"] or [])), p["predicted"],
                 p["deviation"], p["matched"]] for p in freq["peaks"]])
    print(json.dumps({"command": "analyze", "peaks": freq["nonzero_peaks"], "frequency_pass": freq["pass"],
                      "orbit_pass": orbit["pass"]}))
    return EXIT_OK


COMMANDS: dict[str, Callable[[dict, Path, argparse.Namespace], int]] = {
    "construct": cmd_construct,
    "approximate": cmd_approximate,
    "verify": cmd_verify,
    "evolve": cmd_evolve,
    "analyze": cmd_analyze,
}


# driver ------------------------------------------------------------------------

def _read_config(args) -> dict:
    path = Path(args.config)
    if not path.exists():
        raise InputError(f"config file {path} not found")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(cfg, SCHEMAS[args.command])
    except jsonschema.ValidationError as exc:
        raise InputError(f"config rejected: {exc.message}") from exc
    if args.resolution is not None:
        if args.command == "verify":
            cfg.setdefault("solver", {})["resolution"] = args.resolution
        elif args.command != "analyze":
            cfg["resolution"] = args.resolution
    base = path.parent
    for key in ("bundle", "psi0_file"):
        if key in cfg:
            cfg[key] = str((base / cfg[key]).resolve())
    if "bundle" in cfg.get("omega0", {}):
        cfg["omega0"]["bundle"] = str((base / cfg["omega0"]["bundle"]).resolve())
    return cfg


def _run(args, out: Path) -> int:
    cfg = _read_config(args)
    out.mkdir(parents=True, exist_ok=True)
    code = COMMANDS[args.command](cfg, out, args)
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    _dump(out / "manifest.json", {
        "command": args.command,
        "config": cfg,
        "seed": args.seed,
        "version": _version(),
        "exit_code": code,
        "files": {str(p.relative_to(out)): _sha256(p) for p in files},
    })
    return code


def _check(args, out: Path) -> int:
    """Re-run into a scratch directory and compare every hash with the stored manifest."""
    stored_path = out / "manifest.json"
    if not stored_path.exists():
        raise InputError(f"no manifest in {out}")
    stored = json.loads(stored_path.read_text())
    with tempfile.TemporaryDirectory() as tmp:
        _run(args, Path(tmp))
        fresh = json.loads((Path(tmp) / "manifest.json").read_text())
    diff = sorted(set(stored["files"].items()) ^ set(fresh["files"].items()))
    names = sorted({name for name, _ in diff})
    print(json.dumps({"command": "check", "identical": not names, "differing": names}))
    return EXIT_OK if not names else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpe", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--resolution", type=int, default=None, help="override the grid resolution")
    parser.add_argument("--seed", type=int, default=None, help="seed for random probe placement")
    parser.add_argument("--check", action="store_true", help="re-run and compare against the stored manifest")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        return _check(args, out) if args.check else _run(args, out)
    except InputError as exc:
        print(json.dumps({"command": args.command, "error": str(exc)}), file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
