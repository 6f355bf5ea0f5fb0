"""``renvol`` command line.

Every subcommand is a thin wrapper over library calls. ``--config file.json``
supplies option values (keys are option names with dashes or underscores);
unknown keys are rejected before any computation. Exit codes: 0 success,
1 computation error, 2 validation error, 3 acceptance tolerance failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import acceptance as acc
from . import bounds as bd
from . import conformal as cf
from . import end_geometry as eg
from . import fixtures as fx
from . import grafting as gr
from . import riccati as rc
from . import tensorfield as tf
from . import variation as vr
from .io import read_json, write_csv, write_json
from .mesh import MeshError, MetricError, angle_defect_curvature, load_mesh, save_mesh

log = logging.getLogger("renvol")

EXIT_OK, EXIT_COMPUTE, EXIT_VALIDATION, EXIT_ACCEPTANCE = 0, 1, 2, 3


class ValidationError(ValueError):
    pass


class AcceptanceFailure(RuntimeError):
    pass


COMPUTE_ERRORS = (cf.ConvergenceError, eg.QuadratureError, tf.DegenerateKernelError,
                  gr.ShorteningError, gr.DegenerateLoopError)
VALIDATION_ERRORS = (ValidationError, eg.DataError, eg.NonConvexLeafError, rc.DomainError,
                     bd.DomainError, MeshError, MetricError, gr.LoopError, ValueError,
                     KeyError, FileNotFoundError, json.JSONDecodeError)


def resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("RENVOL_SEED")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ValidationError(f"RENVOL_SEED must be an integer, got {env!r}") from exc
    return acc.DEFAULT_SEED


def _envelope(command: str, body: dict) -> dict:
    return {"command": command, "version": __version__, "conventions": eg.CONVENTIONS, **body}


def _emit(args, command, body, default_out=None):
    out = getattr(args, "report", None) or getattr(args, "out", None) or default_out
    report = _envelope(command, body)
    if out:
        write_json(out, report)
    else:
        sys.stdout.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def parse_range(text: str) -> list[float]:
    """``a:b:step`` (inclusive) or a comma list."""
    text = str(text).strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise ValidationError(f"range must be start:stop:step with step > 0, got {text!r}")
        n = int(math.floor((parts[1] - parts[0]) / parts[2] + 1e-9))
        return [round(parts[0] + i * parts[2], 12) for i in range(n + 1)]
    return [float(x) for x in text.split(",") if x.strip()]


# -- data files ------------------------------------------------------------------

def load_data(path) -> eg.DataAtInfinity:
    """``{"mesh": m.json, "I_star": f.json, "II_star": f.json, "tolerances": {...}}``.

    File references are relative to the data file.
    """
    path = Path(path)
    spec = read_json(path)
    known = {"mesh", "I_star", "II_star", "tolerances"}
    unknown = set(spec) - known
    if unknown:
        raise ValidationError(f"unknown keys in data file: {sorted(unknown)}")
    base = path.parent
    mesh, metric = load_mesh(base / spec["mesh"])
    I = tf.tensor_from_dict(read_json(base / spec["I_star"]), mesh.n_faces)
    II = tf.tensor_from_dict(read_json(base / spec["II_star"]), mesh.n_faces)
    return eg.data_from_fields(mesh, metric, I, II, spec.get("tolerances"))


def save_data(path, data: eg.DataAtInfinity, mesh_file: str) -> None:
    path = Path(path)
    stem = path.stem
    I, II = eg.data_to_dicts(data)
    write_json(path.parent / f"{stem}.I_star.json", I)
    write_json(path.parent / f"{stem}.II_star.json", II)
    write_json(path, {"mesh": mesh_file, "I_star": f"{stem}.I_star.json",
                      "II_star": f"{stem}.II_star.json",
                      "tolerances": {"gauss_tol": data.gauss_tol,
                                     "codazzi_tol": data.codazzi_tol,
                                     "convexity_eps": data.convexity_eps}})


def load_tangent(path, data: eg.DataAtInfinity):
    """``{"kind": "scaling"}`` or ``{"dI": field.json, "dB": field.json}``."""
    path = Path(path)
    spec = read_json(path)
    unknown = set(spec) - {"kind", "dI", "dB", "reproject"}
    if unknown:
        raise ValidationError(f"unknown keys in tangent file: {sorted(unknown)}")
    kind = spec.get("kind", "linear")
    if kind == "scaling":
        return vr.ScalingPath(data)
    if kind != "linear":
        raise ValidationError(f"tangent kind must be 'scaling' or 'linear', got {kind!r}")
    n = data.mesh.n_faces

    def field_(key):
        ref = spec[key]
        raw = read_json(path.parent / ref) if isinstance(ref, str) else ref
        return tf.tensor_from_dict(raw, n)

    return vr.DeformationPath(data, field_("dI"), field_("dB"),
                              reproject=bool(spec.get("reproject", True)))


# -- commands ------------------------------------------------------------------------

def cmd_fixture(args):
    kwargs = {}
    if args.name == "disk_k":
        kwargs = {"k": args.k, "radius": args.radius}
    f = fx.make_fixture(args.name, args.level, **kwargs)
    metric = cf.hyperbolize(f.mesh, f.metric) if args.hyperbolize else f.metric
    save_mesh(args.out, f.mesh, metric)
    if args.data_out:
        if not args.hyperbolize:
            raise ValidationError("--data-out needs --hyperbolize (Fuchsian data live on a "
                                  "hyperbolic metric)")
        out = Path(args.out).resolve()
        target = Path(args.data_out).resolve()
        save_data(target, eg.fuchsian_data(f.mesh, metric),
                  os.path.relpath(out, target.parent))
    if args.loop_out and "systole_loop" in f.tags:
        write_json(args.loop_out, {"loop": [int(v) for v in f.tags["systole_loop"]]})
    defect = float(np.sum(angle_defect_curvature(f.mesh, f.metric)))
    body = {"fixture": args.name, "level": f.level, "n_vertices": f.mesh.n_vertices,
            "n_faces": f.mesh.n_faces, "euler_characteristic": f.mesh.euler_characteristic,
            "total_defect": defect}
    if "geometry" in f.tags:
        body["geometry"] = {k: float(v) for k, v in f.tags["geometry"].items()}
    if args.report:
        write_json(args.report, _envelope("fixture", body))
    return body


def cmd_uniformize(args):
    mesh, metric = load_mesh(args.mesh)
    report = cf.NewtonReport()
    u = cf.uniformize(mesh, metric, tol=args.tol, report=report)
    ids = mesh.vertex_ids
    write_json(args.out, {str(ids[i]): float(x) for i, x in enumerate(u)})
    body = {"iterations": report.iterations, "residuals": report.residuals,
            "min_u": float(u.min()), "max_u": float(u.max()), "tol": args.tol}
    if args.report:
        write_json(args.report, _envelope("uniformize", body))
    return body


def cmd_sweep(args):
    data = load_data(args.data)
    check = data.validate()
    radii = parse_range(args.radii)
    sw = eg.sweep(data, radii, anchor=args.anchor)
    write_csv(args.out, sw.HEADER, sw.rows())
    body = {"validation": check, **sw.to_dict()}
    if args.report:
        write_json(args.report, _envelope("sweep", body))
    return body


def cmd_variation(args):
    data = load_data(args.data)
    path = load_tangent(args.tangent, data)
    radii = parse_range(args.r)
    inner = args.r_inner if args.r_inner is not None else min(radii) - 1.0
    reports = [vr.boundary_term(path, r, inner).to_dict() for r in radii]
    prof = vr.convergence_profile(path, tuple(radii))
    body = {"r_inner": inner, "boundary_term": reports, "convergence_profile": prof,
            "infinity_term": vr.path_infinity_term(path)}
    write_json(args.out, _envelope("variation", body))
    return body


def _riccati_out(args, body):
    body["table_version"] = rc.TABLE_VERSION
    if args.out:
        write_json(args.out, body)
    else:
        sys.stdout.write(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return body


def cmd_phi(args):
    sol = rc.solve_y0(args.r_max)
    return _riccati_out(args, {"value": sol.phi(args.delta), "argument": args.delta})


def cmd_disk_bound(args):
    sol = rc.solve_y0()
    return _riccati_out(args, {"value": rc.disk_radius_bound(args.k, args.genus, sol),
                               "argument": rc.disk_argument(args.k, args.genus)})


def cmd_ball_check(args):
    rep = rc.ball_profile_check(args.k, args.rmax, n_rings=args.rings)
    body = {"value": rep, "argument": {"k": args.k, "r_max": args.rmax}}
    _riccati_out(args, body)
    if not rep["passed"]:
        raise AcceptanceFailure("ball_profile_check failed")
    return body


_BOUNDS_FIELDS = {"genus": "genus", "dwp": "d_wp", "vc": "V_C", "vr": "V_R", "lml": "L_ml",
                  "kg": "bridgeman_Kg", "cg": "C_g"}


def cmd_bounds(args):
    if args.csv:
        import csv
        with open(args.csv, newline="") as fh:
            rows = list(csv.DictReader(fh))
        audits = [bd.audit_compare(bd.BoundsInput.from_dict(r)) for r in rows]
        body = {"audits": audits, "passed": all(a["passed"] for a in audits)}
    else:
        if args.genus is None or args.dwp is None:
            raise ValidationError("bounds needs --genus and --dwp (or --csv)")
        values = {_BOUNDS_FIELDS[k]: getattr(args, k) for k in _BOUNDS_FIELDS
                  if getattr(args, k) is not None}
        body = bd.audit_compare(bd.BoundsInput.from_dict(values))
    _emit(args, "bounds", body)
    return body


def cmd_graft(args):
    mesh, metric = load_mesh(args.mesh)
    raw = read_json(args.loop)
    loop = raw["loop"] if isinstance(raw, dict) else raw
    index = {v: i for i, v in enumerate(mesh.vertex_ids)}
    try:
        loop = [index[int(v)] for v in loop]
    except KeyError as exc:
        raise ValidationError(f"loop vertex {exc.args[0]} is not in the mesh") from exc
    spec = gr.shorten_to_geodesic(mesh, metric, loop, tol=args.tol)
    spec = replace(spec, w=args.w)
    res = gr.graft(mesh, metric, spec, columns=args.columns)
    save_mesh(args.out, res.mesh, res.metric)
    body = {"loop": [int(mesh.vertex_ids[v]) for v in spec.loop], "length": spec.length,
            "turning_residual": spec.residual, "w": args.w, "columns": res.columns,
            "area_before": res.area_before, "area_after": res.area_after,
            "area_identity_defect": gr.area_identity_defect(res),
            "curvature": gr.curvature_strata(res)}
    if args.dominate:
        dom = gr.domination_check(res)
        dom.pop("u")
        body["domination"] = dom
    if args.report:
        write_json(args.report, _envelope("graft", body))
    return body


def cmd_acceptance(args):
    seed = resolve_seed(args.seed)
    criteria = [int(x) for x in parse_range(args.criteria)] if args.criteria else list(range(1, 10))
    bad = [k for k in criteria if k not in acc.CRITERIA]
    if bad:
        raise ValidationError(f"unknown criteria {bad}; choose from 1-9")
    reports, timings = acc.run_pipeline(seed, criteria)
    if not args.skip_determinism:
        reports[10] = {"criterion": 10, "name": acc.NAMES[10],
                       **acc.criterion_10(seed, reports)}
    out = Path(args.out_dir)
    for k, rep in reports.items():
        write_json(out / f"criterion_{k:02d}.json", rep)
    write_json(out / "acceptance.json", {"seed": seed, "conventions": eg.CONVENTIONS,
                                         "criteria": {str(k): reports[k]["passed"]
                                                      for k in sorted(reports)}})
    lines = acc.summary_lines(reports, timings)
    print("\n".join(lines))
    failed = [k for k in sorted(reports) if not reports[k]["passed"]
              or timings.get(k, 0) >= acc.RUNTIME_LIMITS[k]]
    if failed:
        raise AcceptanceFailure(f"first failing stage: criterion {failed[0]} "
                                f"({acc.NAMES[failed[0]]})")
    return {"passed": True}


# -- run / config -----------------------------------------------------------------

PIPELINES = ("uniformize", "sweep", "variation", "riccati", "bounds", "graft", "acceptance")


@dataclass
class ExperimentConfig:
    """Configuration for ``renvol run``.

    ``fixture`` builds a mesh into ``output_dir`` when the pipeline needs one
    and ``params`` does not name it; ``params`` are the options of the
    pipeline's subcommand; ``tolerances`` override tolerance options.
    """

    pipeline: str
    params: dict = field(default_factory=dict)
    fixture: dict | None = None
    output_dir: str = "renvol-out"
    tolerances: dict = field(default_factory=dict)
    seed: int | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "pipeline" not in data:
            raise ValidationError("config needs a 'pipeline'")
        cfg = cls(**data)
        if cfg.pipeline not in PIPELINES:
            raise ValidationError(f"pipeline must be one of {PIPELINES}, got {cfg.pipeline!r}")
        if cfg.fixture is not None:
            extra = set(cfg.fixture) - {"name", "level", "k", "radius"}
            if extra or "name" not in cfg.fixture:
                raise ValidationError(f"fixture block needs 'name' and accepts level, k, radius;"
                                      f" got {sorted(cfg.fixture)}")
        return cfg


def cmd_run(args):
    if not args.config:
        raise ValidationError("run needs --config")
    cfg = ExperimentConfig.from_dict(read_json(args.config))
    sub = "phi" if cfg.pipeline == "riccati" else cfg.pipeline
    out = Path(cfg.output_dir)
    params = dict(cfg.params)
    params.update(cfg.tolerances)
    if sub == "acceptance":
        params.setdefault("out_dir", str(out))
        params.setdefault("seed", resolve_seed(cfg.seed))
    if sub in ("uniformize", "graft") and "mesh" not in params:
        if cfg.fixture is None:
            raise ValidationError(f"pipeline {sub} needs params.mesh or a fixture block")
        fargs = _namespace("fixture", {**cfg.fixture, "out": str(out / "mesh.json"),
                                       "loop_out": str(out / "loop.json")})
        _stage("fixture", cmd_fixture, fargs)
        params["mesh"] = str(out / "mesh.json")
        if sub == "graft":
            params.setdefault("loop", str(out / "loop.json"))
    for key, default in (("out", f"{sub}.json"), ("report", f"{sub}.report.json")):
        if key in _dests(sub) and key not in params:
            params[key] = str(out / (default if sub != "sweep" or key != "out" else "sweep.csv"))
    ns = _namespace(sub, params)
    return _stage(cfg.pipeline, COMMANDS[sub], ns)


def _stage(name, fn, ns):
    try:
        return fn(ns)
    except AcceptanceFailure:
        raise
    except Exception as exc:
        exc.stage = getattr(exc, "stage", name)
        raise


# -- parser ---------------------------------------------------------------------------

COMMANDS = {"fixture": cmd_fixture, "uniformize": cmd_uniformize, "sweep": cmd_sweep,
            "variation": cmd_variation, "phi": cmd_phi, "disk-bound": cmd_disk_bound,
            "ball-check": cmd_ball_check, "bounds": cmd_bounds, "graft": cmd_graft,
            "acceptance": cmd_acceptance, "run": cmd_run}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="renvol", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"renvol {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON file of option values")
        return s

    s = add("fixture", "write a test surface")
    s.add_argument("--name", required=True, choices=fx.FIXTURES)
    s.add_argument("--level", type=int)
    s.add_argument("--k", type=float, default=1.0)
    s.add_argument("--radius", type=float, default=2.0)
    s.add_argument("--out", required=True)
    s.add_argument("--loop-out")
    s.add_argument("--hyperbolize", action="store_true",
                   help="write the discretely hyperbolic metric in the same conformal class")
    s.add_argument("--data-out", help="also write Fuchsian data at infinity (needs --hyperbolize)")
    s.add_argument("--report")

    s = add("uniformize", "hyperbolic conformal factor of a mesh metric")
    s.add_argument("--mesh", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--report")

    s = add("sweep", "W-relative values along the equidistant foliation")
    s.add_argument("--data", required=True)
    s.add_argument("--radii", default="0.5:4.0:0.25")
    s.add_argument("--anchor", type=float)
    s.add_argument("--out", required=True)
    s.add_argument("--report")

    s = add("variation", "finite-difference check of the first-variation formulas")
    s.add_argument("--data", required=True)
    s.add_argument("--tangent", required=True)
    s.add_argument("--r", default="2.0,3.0,4.0")
    s.add_argument("--r-inner", type=float)
    s.add_argument("--out", required=True)

    s = add("phi", "inverse of the Riccati solution y0")
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--r-max", type=float, default=rc.R_MAX)
    s.add_argument("--out")

    s = add("disk-bound", "radius bound for almost-flat holomorphic disks")
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--genus", type=int, required=True)
    s.add_argument("--out")

    s = add("ball-check", "geodesic-ball profile audit on a constant-curvature disk")
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--rmax", type=float, required=True)
    s.add_argument("--rings", type=int, default=24)
    s.add_argument("--out")

    s = add("bounds", "evaluate volume inequalities from supplied numbers")
    s.add_argument("--genus", type=int)
    s.add_argument("--dwp", type=float)
    s.add_argument("--vc", type=float)
    s.add_argument("--vr", type=float)
    s.add_argument("--lml", type=float)
    s.add_argument("--kg", type=float)
    s.add_argument("--cg", type=float)
    s.add_argument("--csv", help="batch mode: CSV rows with BoundsInput columns")
    s.add_argument("--out")

    s = add("graft", "insert a flat strip along a closed geodesic")
    s.add_argument("--mesh", required=True)
    s.add_argument("--loop", required=True)
    s.add_argument("--w", type=float, required=True)
    s.add_argument("--columns", type=int)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--dominate", action="store_true", help="also run the domination check")
    s.add_argument("--out", required=True)
    s.add_argument("--report")

    s = add("acceptance", "run the acceptance criteria")
    s.add_argument("--seed", type=int)
    s.add_argument("--criteria", help="comma list, default all")
    s.add_argument("--skip-determinism", action="store_true")
    s.add_argument("--out-dir", default="acceptance-out")

    add("run", "run a pipeline from an experiment config")
    return p


def _subparser(name):
    parser = build_parser()
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices[name]


def _dests(name) -> set:
    return {a.dest for a in _subparser(name)._actions if a.dest not in ("help", "config")}


def _namespace(name, values: dict) -> argparse.Namespace:
    """Build a subcommand namespace from a mapping, applying defaults and types."""
    sp = _subparser(name)
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    norm = {str(k).replace("-", "_"): v for k, v in values.items()}
    unknown = set(norm) - set(actions)
    if unknown:
        raise ValidationError(f"unknown options for {name}: {sorted(unknown)}")
    ns = argparse.Namespace(command=name, config=None)
    for dest, a in actions.items():
        if dest in norm:
            v = norm[dest]
            if a.type is not None and v is not None:
                v = a.type(v)
            if a.choices is not None and v not in a.choices:
                raise ValidationError(f"{name}: {dest} must be one of {list(a.choices)}")
        elif a.required:
            raise ValidationError(f"{name}: missing required option {dest}")
        else:
            v = a.default
        setattr(ns, dest, v)
    return ns


def _parse(argv):
    parser = build_parser()
    # config files may supply options that are otherwise required
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command in COMMANDS and known.command != "run":
        cfg = read_json(known.config)
        if not isinstance(cfg, dict):
            raise ValidationError("config must be a JSON object")
        flags = _cli_flags(argv)
        values = {**cfg, **flags}
        return _namespace(known.command, values), parser
    return parser.parse_args(argv), parser


def _cli_flags(argv) -> dict:
    """Options given explicitly on the command line, parsed with the subparser."""
    name = argv[0] if argv and not argv[0].startswith("-") else None
    if name is None:
        return {}
    sp = _subparser(name)
    for a in sp._actions:
        a.required = False
    args = sp.parse_args(argv[1:])
    defaults = {a.dest: a.default for a in sp._actions}
    return {k: v for k, v in vars(args).items()
            if k not in ("config", "help") and v != defaults.get(k)}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args, _ = _parse(argv)
    except VALIDATION_ERRORS as exc:
        print(f"renvol: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except AcceptanceFailure as exc:
        print(f"renvol: {exc}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except COMPUTE_ERRORS as exc:
        print(f"renvol: {_where(exc, args)}computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except VALIDATION_ERRORS as exc:
        print(f"renvol: {_where(exc, args)}validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"renvol: {_where(exc, args)}computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


def _where(exc, args):
    return f"stage {getattr(exc, 'stage', args.command)}: "


if __name__ == "__main__":
    sys.exit(main())
