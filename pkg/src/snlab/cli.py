"""Command-line driver: ``snlab {solve,ground-state,symmetry,geometry,group}``.

Runs are described by a JSON config file with nested blocks; ``--set a.b=v``
overrides scalar fields.  Every command writes its artifacts to ``--out`` and a
report in ``--format`` (csv or json), and prints a one-line summary.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import fieldio
from .errors import ConfigError, ConstraintViolation, ExpressionError, SNLabError, SolverError
from .expr import compile_expr, parse
from .geometry import (
    AnalyticBrinkmann,
    TimeReparam,
    analytic_from_expressions,
    conformal_ricci_shift,
    curvature_report,
    expected_ricci_shift,
    harmonic_U,
    random_brinkmann,
    rigid_rotation,
    schwarzian,
)
from .grid import GridSpec, PhysicalConstants, VectorField, WaveFunction, gaussian
from .group import axiom_suite, dynamical_exponent, measured_dilation_exponents, validate
from .radial import RadialGrid, ground_state_radial, radial_residual
from .representation import covariance_check
from .solver import SolverConfig, evolve, sn_residual, trajectory_residual

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_TOLERANCE = 0, 2, 3, 4
_REQUIRED = object()

EPILOG = """exit codes:
  0  success, all tolerances met
  2  configuration error (unreadable file, bad JSON, invalid or missing field)
  3  solver failure (non-convergence, non-finite values, domain errors)
  4  tolerance failure (a check ran but missed its tolerance)
"""


# ---------------------------------------------------------------------------
# config access

class Config:
    """Read-only view of a JSON block that reports dotted field paths in errors."""

    def __init__(self, data, path=""):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'}: expected an object")
        self.data = data
        self.path = path

    def _name(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.data

    def block(self, key, required=False):
        if key not in self.data:
            if required:
                raise ConfigError(f"{self._name(key)}: required block is missing")
            return Config({}, self._name(key))
        return Config(self.data[key], self._name(key))

    def get(self, key, kind=float, default=_REQUIRED, choices=None):
        name = self._name(key)
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(f"{name}: required field is missing")
            return default
        val = self.data[key]
        try:
            if kind is bool:
                if not isinstance(val, bool):
                    raise TypeError
                out = val
            elif kind is int:
                if isinstance(val, bool) or int(val) != val:
                    raise TypeError
                out = int(val)
            elif kind is float:
                if isinstance(val, bool):
                    raise TypeError
                out = float(val)
                if not math.isfinite(out):
                    raise ValueError
            elif kind is list:
                if not isinstance(val, list):
                    raise TypeError
                out = val
            else:
                out = kind(val)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected {kind.__name__}, got {val!r}") from None
        if choices is not None and out not in choices:
            raise ConfigError(f"{name}: must be one of {sorted(choices)}, got {out!r}")
        return out

    def vector(self, key, dim, default=None):
        val = self.get(key, list, default=None)
        if val is None:
            return None if default is None else np.asarray(default, float)
        if len(val) != dim:
            raise ConfigError(f"{self._name(key)}: expected {dim} entries, got {len(val)}")
        try:
            return np.array([float(v) for v in val])
        except (TypeError, ValueError):
            raise ConfigError(f"{self._name(key)}: entries must be numbers") from None


def load_config(path, overrides=()):
    if path is None:
        data = {}
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError("config line 1: the top level must be an object")
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key.path=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {p} is not a block")
        node[parts[-1]] = value
    return Config(data)


def build_grid(cfg: Config) -> GridSpec:
    g = cfg.block("grid", required=True)
    try:
        return GridSpec(g.get("dim", int), g.get("extent"), g.get("points", int),
                        g.get("boundary", str, "periodic"))
    except ConfigError:
        raise
    except (SNLabError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from None


def build_constants(cfg: Config, dim: int) -> PhysicalConstants:
    c = cfg.block("constants")
    try:
        return PhysicalConstants(c.get("hbar", float, 1.0), c.get("G", float, 1.0), dim)
    except ConfigError:
        raise
    except (SNLabError, ValueError) as exc:
        raise ConfigError(f"constants: {exc}") from None


def build_solver(cfg: Config, pc: PhysicalConstants) -> SolverConfig:
    s = cfg.block("scheme", required=True)
    return SolverConfig(
        dt=s.get("dt"), steps=s.get("steps", int),
        scheme=s.get("scheme", str, "strang-spectral"),
        self_consistency=s.get("self_consistency", str, "midpoint-recompute"),
        constants=pc, Lambda=s.get("Lambda", float, 0.0), kernel=s.get("kernel", str, "auto"),
        record_every=s.get("record_every", int, 1))


def build_initial(cfg: Config, grid: GridSpec, pc: PhysicalConstants) -> WaveFunction:
    ini = cfg.block("initial", required=True)
    kind = ini.get("kind", str, "gaussian", choices={"gaussian", "ground-state"})
    mass = ini.get("mass")
    if not mass > 0:
        raise ConfigError("initial.mass: must be positive")
    if kind == "gaussian":
        return gaussian(grid, ini.get("width", float, 1.0), ini.vector("center", grid.dim),
                        ini.vector("momentum", grid.dim), hbar=pc.hbar, mass=mass)
    if grid.dim != 3:
        raise ConfigError("initial.kind: ground-state needs grid.dim = 3")
    stretch = ini.get("stretch", float, 1.0)
    rg = RadialGrid(ini.get("radius", float, 6 * grid.extent), ini.get("points", int, 2000))
    state = ground_state_radial(pc, rg, mass=mass)
    wide = GridSpec(3, grid.extent * stretch, grid.points, grid.boundary)
    return WaveFunction(grid, state.to_grid(wide).psi, mass)


def build_omega(cfg: Config, grid: GridSpec):
    if not cfg.has("omega"):
        return None
    om = cfg.block("omega")
    kind = om.get("kind", str, "rigid-rotation", choices={"rigid-rotation", "expression"})
    nodes = grid.nodes()
    if kind == "rigid-rotation":
        W = rigid_rotation(om.get("Omega0"), grid.dim)(nodes, 0.0)
    else:
        exprs = om.get("components", list)
        if len(exprs) != grid.dim:
            raise ConfigError(f"omega.components: expected {grid.dim} expressions")
        names = [f"x{i + 1}" for i in range(grid.dim)]
        W = np.stack([compile_expr(parse(e, names), names)(*nodes.T) for e in exprs], axis=1)
    return VectorField(grid, W.T.reshape((grid.dim,) + grid.shape))


def build_external(cfg: Config, grid: GridSpec):
    if not cfg.has("external"):
        return None
    text = cfg.get("external", str)
    names = [f"x{i + 1}" for i in range(grid.dim)]
    if text == "harmonic":
        text = "(" + "+".join(f"{n}^2" for n in names) + ")/2"
    return compile_expr(parse(text, names), names)(*grid.nodes().T).reshape(grid.shape)


# ---------------------------------------------------------------------------
# output

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _flatten(row, prefix=""):
    out = {}
    for k, v in row.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple, np.ndarray)):
            out[key] = json.dumps(_jsonable(v))
        else:
            out[key] = _jsonable(v)
    return out


def rows_csv(rows) -> str:
    flat = [_flatten(r) for r in rows]
    cols = []
    for r in flat:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"# {fieldio.CSV_VERSION}"])
    w.writerow(cols)
    for r in flat:
        w.writerow([repr(r[c]) if isinstance(r.get(c), float) else r.get(c, "") for c in cols])
    return buf.getvalue()


def write_report(out: Path, name: str, fmt: str, rows, summary) -> Path:
    if fmt == "json":
        path = out / f"{name}.json"
        path.write_text(dumps({"rows": rows, "summary": summary}))
    else:
        path = out / f"{name}.csv"
        path.write_text(rows_csv(rows))
        (out / f"{name}_summary.json").write_text(dumps(summary))
    return path


def prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"--out {path}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"--out {path}: directory is not writable")
    return out


def _tol(cfg: Config, key, default, scale):
    return cfg.block("tolerances").get(key, float, default) * scale


# ---------------------------------------------------------------------------
# commands

def cmd_solve(cfg: Config, args, out: Path) -> int:
    grid = build_grid(cfg)
    pc = build_constants(cfg, grid.dim)
    scfg = build_solver(cfg, pc)
    wf0 = build_initial(cfg, grid, pc)
    omega = build_omega(cfg, grid)
    external = build_external(cfg, grid)
    traj = evolve(wf0, scfg, omega=omega, external=external)
    last = sn_residual((traj.states[-2], traj.states[-1]), traj.brinkmann([-2, -1]), scfg) \
        if len(traj) > 1 else None
    total = trajectory_residual(traj, scfg) if len(traj) > 1 else None
    summary = {
        "norm_drift": traj.norm_drift(),
        "final_residual": None if last is None else last.to_dict(),
        "trajectory_residual": None if total is None else total.to_dict(),
        "steps": scfg.steps, "dt": scfg.dt, "final_time": float(traj.times[-1]),
    }
    ok = traj.norm_drift() < _tol(cfg, "norm_drift", 1e-8, args.tolerance_scale)
    if cfg.block("scheme").get("convergence", bool, False):
        # both runs over the same interval, residual pairs one step apart
        fine = scfg.with_(dt=scfg.dt / 2, steps=2 * scfg.steps)
        t2 = evolve(wf0, fine, omega=omega, external=external)
        r1 = float(trajectory_residual(traj, scfg))
        r2 = float(trajectory_residual(t2, fine))
        order = math.log2(r1 / r2) if r2 > 0 else math.inf
        summary["convergence"] = {"dt": [scfg.dt, fine.dt], "residual": [r1, r2], "order": order}
        ok = ok and order >= cfg.block("tolerances").get("order", float, 1.8) / args.tolerance_scale
    summary["pass"] = bool(ok)
    (out / "trajectory.csv").write_text(fieldio.trajectory_csv(traj))
    fieldio.write_field(out / "psi_final.snlf", traj.states[-1])
    fieldio.write_field(out / "U_final.snlf", traj.potentials[-1])
    (out / "summary.json").write_text(dumps(summary))
    write_report(out, "solve", args.format, [summary], summary)
    print(f"solve: norm drift {summary['norm_drift']:.3e}, residual "
          f"{float(total) if total is not None else float('nan'):.3e}, pass={ok}")
    return EXIT_OK if ok else EXIT_TOLERANCE


def cmd_ground_state(cfg: Config, args, out: Path) -> int:
    pc = build_constants(cfg, 3)
    rb = cfg.block("radial")
    rg = RadialGrid(rb.get("radius", float, 20.0), rb.get("points", int, 2000))
    mass = cfg.block("initial").get("mass", float, 1.0)
    ext = None
    if cfg.has("external"):
        text = cfg.get("external", str)
        fn = compile_expr(parse("r^2/2" if text == "harmonic" else text, ["r"]), ["r"])
        ext = fn
    state = ground_state_radial(pc, rg, tol=rb.get("tol", float, 1e-10), mass=mass, external=ext,
                                max_iterations=rb.get("max_iterations", int, 500))
    res = radial_residual(state, ext)
    tol = _tol(cfg, "residual", 1e-8, args.tolerance_scale)
    summary = {"mu": state.mu, "energy": state.energy, "iterations": state.iterations,
               "residual": res, "pass": bool(res < tol)}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"# {fieldio.CSV_VERSION}"])
    w.writerow(["r", "psi", "U"])
    for r, p, u in zip(rg.r, state.psi, state.U):
        w.writerow([repr(float(r)), repr(float(p)), repr(float(u))])
    (out / "profile.csv").write_text(buf.getvalue())
    (out / "summary.json").write_text(dumps(summary))
    write_report(out, "ground_state", args.format, [summary], summary)
    print(f"ground-state: mu {state.mu:.10g}, energy {state.energy:.10g}, residual {res:.2e}")
    return EXIT_OK if summary["pass"] else EXIT_TOLERANCE


def cmd_symmetry(cfg: Config, args, out: Path) -> int:
    grid = build_grid(cfg)
    pc = build_constants(cfg, grid.dim)
    scfg = build_solver(cfg, pc)
    elements = cfg.get("elements", list)
    pf = _tol(cfg, "pass_factor", 2.0, args.tolerance_scale)
    cf = cfg.block("tolerances").get("control_factor", float, 10.0) / args.tolerance_scale
    parsed = []
    for i, raw in enumerate(elements):
        expect = raw.get("expect", "pass") if isinstance(raw, dict) else "pass"
        if expect not in ("pass", "fail", "reject"):
            raise ConfigError(f"elements[{i}].expect: must be pass, fail or reject")
        spec = {k: v for k, v in raw.items() if k not in ("expect", "name")} \
            if isinstance(raw, dict) else raw
        if isinstance(spec, dict):
            spec.setdefault("dim", grid.dim)
        name = raw.get("name", raw.get("type", f"element{i}")) if isinstance(raw, dict) else str(i)
        try:
            parsed.append((name, expect, validate(spec), None))
        except ConstraintViolation as exc:
            parsed.append((name, expect, None, str(exc)))
    traj = evolve(build_initial(cfg, grid, pc), scfg, omega=build_omega(cfg, grid),
                  external=build_external(cfg, grid))
    rows = []
    for name, expect, el, err in parsed:
        if el is None:
            rows.append({"name": name, "status": "rejected", "expect": expect, "message": err,
                         "ok": expect == "reject"})
            continue
        rep = covariance_check(el, traj, scfg)
        rep = dataclasses.replace(rep, pass_factor=pf, control_factor=cf)
        status = "pass" if (rep.covariant and rep.control_fails) else "fail"
        ok = status == expect if expect != "fail" else rep.ratio >= cf
        rows.append({"name": name, "status": status, "expect": expect, "ok": bool(ok),
                     **rep.to_dict()})
    summary = {"rows": len(rows), "all_ok": all(r["ok"] for r in rows),
               "base_residual": rows[0].get("residual_before") if rows else None}
    write_report(out, "symmetry", args.format, rows, summary)
    for r in rows:
        extra = r.get("message") or f"ratio {r['ratio']:.3g} control {r['control_ratio']:.3g}"
        print(f"symmetry: {r['name']:<16} {r['status']:<9} expect {r['expect']:<7} {extra}")
    return EXIT_OK if summary["all_ok"] else EXIT_TOLERANCE


GEOMETRY_CASES = ("harmonic-U", "rigid-rotation", "polynomial-gaussian")
REPARAM_CASES = ("moebius-phi", "cubic-phi", "affine-phi")


def _geometry_case(spec, dim, rng, i):
    if isinstance(spec, str):
        if spec == "harmonic-U":
            return spec, AnalyticBrinkmann(dim, harmonic_U)
        if spec == "rigid-rotation":
            return spec, AnalyticBrinkmann(dim, harmonic_U, rigid_rotation(0.7, dim))
        if spec == "polynomial-gaussian":
            return spec, random_brinkmann(rng, dim)
        raise ConfigError(f"cases[{i}]: unknown catalog case {spec!r}")
    if not isinstance(spec, dict) or "U" not in spec:
        raise ConfigError(f"cases[{i}]: expected a catalog name or an object with 'U'")
    return spec.get("name", f"case{i}"), analytic_from_expressions(dim, spec["U"], spec.get("omega"))


def _reparam_case(spec, i):
    if isinstance(spec, str):
        if spec == "moebius-phi":
            return spec, TimeReparam.moebius(2.0, 0.0, 1.0, 0.5)
        if spec == "cubic-phi":
            return spec, TimeReparam.power(3)
        if spec == "affine-phi":
            return spec, TimeReparam.affine(2.0, 0.3)
        raise ConfigError(f"reparams[{i}]: unknown catalog case {spec!r}")
    if not isinstance(spec, dict) or "phi" not in spec:
        raise ConfigError(f"reparams[{i}]: expected a catalog name or an object with 'phi'")
    return spec.get("name", f"phi{i}"), TimeReparam.from_expression(spec["phi"])


def cmd_geometry(cfg: Config, args, out: Path) -> int:
    dim = cfg.get("dim", int, 3)
    rng = np.random.default_rng(args.seed)
    points = cfg.get("points", int, 4)
    tol_ric = _tol(cfg, "ricci", 1e-5, args.tolerance_scale)
    tol_R = _tol(cfg, "scalar", 1e-6, args.tolerance_scale)
    tol_shift = _tol(cfg, "shift", 1e-4, args.tolerance_scale)
    rows = []
    for i, spec in enumerate(cfg.get("cases", list, list(GEOMETRY_CASES))):
        name, bd = _geometry_case(spec, dim, rng, i)
        pts = np.concatenate([rng.uniform(-1, 1, (points, dim)), rng.uniform(-0.5, 0.5, (points, 1)),
                              rng.uniform(-1, 1, (points, 1))], axis=1)
        rep = curvature_report(bd, pts)
        err = rep.residual_norms["oracle_vs_closed_max"]
        scale = max(1.0, float(np.max(np.abs(rep.ricci))))
        Rmax = rep.residual_norms["scalar_max"]
        rows.append({"kind": "curvature", "name": name, "ricci_error": err,
                     "ricci_scale": scale, "scalar_max": Rmax,
                     "ok": bool(err <= tol_ric * scale and Rmax <= tol_R)})
    base = AnalyticBrinkmann(dim, harmonic_U)
    for i, spec in enumerate(cfg.get("reparams", list, list(REPARAM_CASES))):
        name, tp = _reparam_case(spec, i)
        errs, S = [], []
        for t in (0.9, 1.0, 1.1):
            p = np.r_[rng.uniform(-0.5, 0.5, dim), t, 0.2]
            shift = conformal_ricci_shift(base, tp, p)
            errs.append(float(np.max(np.abs(shift - expected_ricci_shift(dim, tp, t)))))
            S.append(schwarzian(tp, t))
        rows.append({"kind": "schwarzian", "name": name, "schwarzian": S,
                     "shift_error": max(errs), "ok": bool(max(errs) <= tol_shift)})
    summary = {"rows": len(rows), "all_ok": all(r["ok"] for r in rows), "dim": dim}
    write_report(out, "geometry", args.format, rows, summary)
    for r in rows:
        val = r.get("ricci_error", r.get("shift_error"))
        print(f"geometry: {r['kind']:<10} {r['name']:<20} error {val:.2e} ok={r['ok']}")
    return EXIT_OK if summary["all_ok"] else EXIT_TOLERANCE


def cmd_group(cfg: Config, args, out: Path) -> int:
    dim = cfg.get("dim", int, 3)
    triples = cfg.get("triples", int, 1000)
    tol = _tol(cfg, "axioms", 1e-10, args.tolerance_scale)
    tol_conf = _tol(cfg, "conformality", 1e-6, args.tolerance_scale)
    res = axiom_suite(dim, triples, np.random.default_rng(args.seed), tol)
    ax, at = measured_dilation_exponents(dim)
    z = dynamical_exponent(dim)
    res["measured_exponents"] = [str(ax), str(at)]
    res["measured_z"] = str(at / ax)
    hom = res["matrix_homomorphism_error"]
    res["matrix_homomorphism"] = "not applicable" if hom is None else hom
    ok = (all(v == triples for v in res["passed"].values())
          and (hom is None or hom <= tol) and res["conformality_defect"] <= tol_conf)
    res["ok"] = bool(ok)
    rows = [{"axiom": k, "passed": v, "of": triples, "max_error": res["max_error"][k]}
            for k, v in res["passed"].items()]
    write_report(out, "group", args.format, rows, res)
    print(f"group: dim {dim}, {triples} triples, passes {res['passed']}, matrix "
          f"{res['matrix_homomorphism']}, conformality {res['conformality_defect']:.2e}, z = {z}")
    return EXIT_OK if ok else EXIT_TOLERANCE


COMMANDS = {"solve": cmd_solve, "ground-state": cmd_ground_state, "symmetry": cmd_symmetry,
            "geometry": cmd_geometry, "group": cmd_group}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default .)")
    common.add_argument("--seed", metavar="N", type=int, default=0, help="random seed")
    common.add_argument("--tolerance-scale", metavar="X", type=float, default=1.0,
                        help="multiply every tolerance by X")
    common.add_argument("--format", choices=("csv", "json"), default="json",
                        help="report format")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="override a config field, e.g. scheme.dt=0.01")
    parser = argparse.ArgumentParser(
        prog="snlab", description="Schrodinger-Newton numerical laboratory",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {"solve": "evolve a wave function self-consistently",
             "ground-state": "radial ground state (d = 3)",
             "symmetry": "covariance of a run under group elements",
             "geometry": "curvature and Schwarzian checks on analytic data",
             "group": "group-axiom property suite"}
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if not (args.tolerance_scale > 0 and math.isfinite(args.tolerance_scale)):
            raise ConfigError("--tolerance-scale must be a positive number")
        if args.command in ("solve", "symmetry") and args.config is None:
            raise ConfigError(f"{args.command} needs --config")
        cfg = load_config(args.config, args.set)
        out = prepare_out(args.out)
        return COMMANDS[args.command](cfg, args, out)
    except (ConfigError, ExpressionError) as exc:
        print(f"snlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, SNLabError, FloatingPointError) as exc:
        print(f"snlab: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
