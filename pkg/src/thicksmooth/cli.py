"""Command-line entry point.

Subcommands::

    triangulate   mesh a domain and report mesh statistics
    fields        build mass/velocity/stress fields from floe snapshots
    smooth        smooth those fields onto a uniform grid
    convergence   error table of the smoothed field against the exact one
    thickness     ball-density scan of a region
    synthesize    write a seeded synthetic floe snapshot

Every option can also come from a TOML file given with ``--config``.  Top-level
keys apply to all subcommands, a table named after a subcommand to that
subcommand only, and flags given on the command line win.  Each run writes a
``manifest.json`` with the resolved configuration, its SHA-256 and the hashes
of all inputs and outputs.

Exit codes: 0 success, 2 validation error, 3 numeric guard, 1 anything else.
Failures print a JSON object with the error details on stdout.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import math
import sys
import time
from fractions import Fraction
from importlib import metadata
from pathlib import Path

import numpy as np
import tomli

from . import dem_fields, geometry, operators, quadrature, thickness
from ._io import atomic_write, save_npz, sha256_file
from .errors import (DegreeBelowFloor, NonFiniteIntegrand, NumericGuardError, SchemaError,
                     ThickSmoothError, ValidationError)
from .kernels import ScaledKernel

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

FIELD_NAMES = ("mass", "velocity", "stress")
COMMANDS = ("triangulate", "fields", "smooth", "convergence", "thickness", "synthesize")
GLOBAL_DEFAULTS = {"config": None, "seed": 0, "threads": 1, "out": ".", "verbose": 0}
# refuse meshes or sample sets that would not fit in memory
MAX_NODES = 5_000_000
# keys that are bookkeeping rather than run configuration
_META_KEYS = {"command", "config", "verbose", "func"}


# -------------------------------------------------------------------- helpers
def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _float_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(",", " ").split()]


def _grid_shape(value) -> tuple:
    if isinstance(value, (list, tuple)):
        vals = [int(v) for v in value]
    elif isinstance(value, int):
        vals = [value]
    else:
        vals = [int(v) for v in str(value).replace("x", ",").split(",")]
    nx, ny = (vals[0], vals[0]) if len(vals) == 1 else vals[:2]
    if nx < 2 or ny < 2:
        raise ValidationError("grid resolution must be at least 2")
    return nx, ny


def _positive(name, value):
    if value is None or not (isinstance(value, (int, float)) and value > 0
                             and math.isfinite(value)):
        raise ValidationError(f"{name} must be a positive number, got {value!r}")
    return float(value)


def _existing(name, path) -> Path:
    if path is None:
        raise ValidationError(f"--{name.replace('_', '-')} is required")
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{name} file {str(p)!r} does not exist")
    return p


def _min_angle(args):
    return None if args.min_angle is None else math.radians(args.min_angle)


def _kernel(args) -> ScaledKernel:
    eps = _positive("epsilon", args.epsilon)
    if args.kernel == "gaussian":
        return ScaledKernel.gaussian(eps)
    return ScaledKernel.tophat(eps)


def _load_domain(args) -> geometry.PolygonalDomain:
    if args.domain is None and getattr(args, "square", None) is not None:
        side = _positive("square", args.square)
        return geometry.rectangle(0.0, side, 0.0, side)
    return geometry.load_domain(_existing("domain", args.domain))


def _is_rectangle(domain) -> bool:
    xy = domain.outer.xy
    box = geometry.bounding_rectangle(domain)
    return (not domain.holes and len(xy) == 4
            and bool(np.all(np.isin(xy[:, 0], (box.xmin, box.xmax))))
            and bool(np.all(np.isin(xy[:, 1], (box.ymin, box.ymax)))))


def _region_rule(region, args, max_area, seed):
    """Quadrature rule for one region according to the chosen backend."""
    estimate = region.area / max_area
    if estimate > MAX_NODES:
        raise ValidationError(
            f"region of area {region.area:.4g} needs about {estimate:.3g} nodes at "
            f"max_area {max_area:.4g}; the limit is {MAX_NODES:.0e}")
    if args.quadrature == "mc":
        n = args.mc_n
        if n is None:
            n = max(2, math.ceil(region.area / max_area))
        return quadrature.rule_monte_carlo(region, int(n), seed)
    method = args.method
    if method == "auto":
        method = "structured" if _is_rectangle(region) else "ruppert"
    return quadrature.rule_for_region(region, max_area, _min_angle(args), method)


def _check_finite(values, points, what):
    bad = ~np.isfinite(values).all(axis=-1)
    if np.any(bad):
        loc = np.asarray(points)[bad]
        raise NonFiniteIntegrand(
            f"{what} is not finite at {int(bad.sum())} point(s), first at {loc[0].tolist()}")


def grid_csv(result: operators.GridResult) -> str:
    """CSV with columns ``x, y, inside, v_1..v_d``; outside points have empty values."""
    g = result.grid
    d = result.d
    pts = g.points
    inside = g.mask.ravel()
    vals = result.values.reshape(-1, d)
    buf = io.StringIO()
    buf.write(",".join(["x", "y", "inside"] + [f"v_{i + 1}" for i in range(d)]) + "\n")
    for (x, y), ok, row in zip(pts, inside, vals):
        cells = [repr(float(x)), repr(float(y)), "1" if ok else "0"]
        cells += [repr(float(v)) for v in row] if ok else [""] * d
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def _write_grid(out: Path, stem: str, result, fmt: str, outputs: dict):
    g = result.grid
    if fmt in ("csv", "both"):
        path = atomic_write(out / f"{stem}.csv", grid_csv(result))
        outputs[path.name] = sha256_file(path)
    if fmt in ("npz", "both"):
        path = save_npz(out / f"{stem}.npz", values=result.values, degree=result.degree,
                        mask=g.mask, extent=np.array([g.xmin, g.xmax, g.ymin, g.ymax]))
        outputs[path.name] = sha256_file(path)


def _config_dict(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _META_KEYS}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}


def _write_manifest(args, out: Path, inputs: dict, outputs: dict, results: dict) -> dict:
    cfg = _config_dict(args)
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    manifest = {
        "command": args.command,
        "version": _version(),
        "config": cfg,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "inputs": {str(k): sha256_file(k) for k in inputs},
        "outputs": outputs,
        "results": results,
    }
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# ------------------------------------------------------------------- commands
def cmd_triangulate(args) -> dict:
    domain = _load_domain(args)
    max_area = _positive("max_area", args.max_area)
    method = args.method
    if method == "auto":
        method = "structured" if _is_rectangle(domain) else "ruppert"
    t = geometry.triangulate(domain, max_area, _min_angle(args), method=method)
    stats = t.stats()
    out = Path(args.out)
    outputs = {}
    path = out / "mesh.npz"
    t.save(path)
    outputs[path.name] = sha256_file(path)
    stats_out = {"triangles": int(stats["N"]) if "N" in stats else len(t),
                 "min_angle_deg": math.degrees(float(t.min_angles.min())),
                 "max_area": float(t.areas.max()),
                 "area_sum": float(math.fsum(t.areas)),
                 "domain_area": float(domain.area)}
    path = atomic_write(out / "mesh_stats.json", json.dumps(stats_out, indent=2) + "\n")
    outputs[path.name] = sha256_file(path)
    inputs = [args.domain] if args.domain else []
    _write_manifest(args, out, inputs, outputs, stats_out)
    return stats_out


def _snapshot_fields(snap, args, max_area, seed_base):
    rules = []
    for k, f in enumerate(snap.floes):
        region = geometry.PolygonalDomain(f.polygon)
        rules.append(_region_rule(region, args, max_area, seed_base + 1 + k))
    built = {}
    for name in args.fields:
        if name == "mass":
            built[name] = dem_fields.mass_density_field(snap, _positive("rho", args.rho), rules)
        elif name == "velocity":
            built[name] = dem_fields.velocity_field(snap, rules)
        else:
            built[name] = dem_fields.stress_field(snap, rules, args.area_normalize)
    return rules, built


def _parse_fields(args):
    names = args.fields
    if isinstance(names, str):
        names = [n.strip() for n in names.split(",") if n.strip()]
    bad = [n for n in names if n not in FIELD_NAMES]
    if bad or not names:
        raise ValidationError(f"fields must be drawn from {FIELD_NAMES}, got {names}")
    if "mass" in names and args.rho is None:
        raise ValidationError("the mass field needs --rho (kg/m^3)")
    args.fields = list(dict.fromkeys(names))


def cmd_fields(args) -> dict:
    _parse_fields(args)
    snap_path = _existing("snapshots", args.snapshots)
    snaps = dem_fields.load_snapshots(snap_path)
    max_area = _positive("max_area", args.max_area)
    out = Path(args.out)
    outputs = {}
    summary = []
    for i, snap in enumerate(snaps):
        rules, built = _snapshot_fields(snap, args, max_area, args.seed + 1000 * i)
        offsets = np.cumsum([0] + [len(r) for r in rules])
        row = {"index": i, "time": snap.time, "floes": len(snap.floes), "nodes": int(offsets[-1])}
        for name, fld in built.items():
            _check_finite(fld.values, fld.nodes, f"{name} field")
            path = save_npz(out / f"snap{i:04d}_{name}_field.npz", nodes=fld.nodes,
                            weights=fld.weights, values=fld.values, offsets=offsets,
                            time=np.float64(snap.time))
            outputs[path.name] = sha256_file(path)
            row[f"{name}_integral"] = fld.integral().tolist()
        summary.append(row)
    results = {"snapshots": summary}
    _write_manifest(args, out, [snap_path], outputs, results)
    return results


def cmd_smooth(args) -> dict:
    _parse_fields(args)
    snap_path = _existing("snapshots", args.snapshots)
    domain = _load_domain(args)
    kernel = _kernel(args)
    max_area = _positive("max_area", args.max_area)
    nx, ny = _grid_shape(args.grid)
    snaps = dem_fields.load_snapshots(snap_path)
    t0 = time.perf_counter()
    domain_rule = _region_rule(domain, args, max_area, args.seed)
    ctx = operators.SmoothingContext(domain, domain_rule, kernel, args.degree_floor,
                                     args.threads)
    grid = operators.EvaluationGrid.covering(domain, nx, ny)
    results = {"domain_nodes": len(domain_rule), "grid": [nx, ny], "snapshots": []}
    if domain_rule.diameters is not None and args.kernel == "gaussian":
        results["quadrature_bound"] = quadrature.triangulation_error_bound(domain_rule, kernel)
    else:
        results["quadrature_bound"] = None
        if domain_rule.bounding_area is not None:
            results["mc_area_estimate"] = domain_rule.total_weight
    out = Path(args.out)
    outputs = {}
    min_deg = math.inf
    for i, snap in enumerate(snaps):
        bad = snap.check_domain(domain)
        _, built = _snapshot_fields(snap, args, max_area, args.seed + 1000 * (i + 1))
        # one pass over all fields: they share nodes, so stack the columns
        names = list(built)
        first = built[names[0]]
        pieces = tuple(
            operators.FieldPiece(p.polygon, p.rule,
                                 np.hstack([built[n].pieces[j].values for n in names]))
            for j, p in enumerate(first.pieces))
        combined = operators.PiecewiseField(pieces, sum(built[n].d for n in names))
        res = operators.evaluate_grid(ctx, combined, grid, args.operator)
        inside = grid.mask.ravel()
        _check_finite(res.values.reshape(-1, combined.d)[inside], grid.points[inside],
                      "smoothed field")
        row = {"index": i, "time": snap.time, "floes": len(snap.floes),
               "floes_outside_domain": bad, "min_degree": res.min_degree}
        min_deg = min(min_deg, res.min_degree)
        col = 0
        for n in names:
            d = built[n].d
            part = operators.GridResult(grid, res.values[..., col:col + d], res.degree,
                                        args.operator)
            col += d
            _write_grid(out, f"snap{i:04d}_{n}", part, args.format, outputs)
        if args.operator == operators.BISTOCHASTIC:
            after, before = operators.bistochastic_mass(ctx, combined)
            scale = np.maximum(combined.weights @ np.abs(combined.values), np.finfo(float).tiny)
            resid = np.abs(after - before) / scale
            row["mass_residual"] = float(resid.max()) if len(resid) else 0.0
            row["mass_residual_by_field"] = {}
            col = 0
            for n in names:
                d = built[n].d
                row["mass_residual_by_field"][n] = float(resid[col:col + d].max())
                col += d
        results["snapshots"].append(row)
    results["min_degree"] = min_deg if snaps else None
    if args.operator == operators.BISTOCHASTIC and snaps:
        results["mass_residual"] = max(r["mass_residual"] for r in results["snapshots"])
    inputs = [snap_path] + ([args.domain] if args.domain else [])
    _write_manifest(args, out, inputs, outputs, results)
    logger.info("smoothed %d snapshot(s) in %.1f s", len(snaps), time.perf_counter() - t0)
    return results


def step_problem(domain, epsilons, mesh_factor, args):
    """Contexts, fields and exact solution for the step ``1{x < x_mid}``.

    The domain must be an axis-aligned rectangle.  Each epsilon gets its own
    mesh of the left and right halves with triangle diameters about
    ``mesh_factor * epsilon``; the domain rule is their union so that field
    and domain share nodes.
    """
    if not _is_rectangle(domain):
        raise ValidationError("the step field needs an axis-aligned rectangular domain")
    box = geometry.bounding_rectangle(domain)
    xm = 0.5 * (box.xmin + box.xmax)
    left = geometry.rectangle(box.xmin, xm, box.ymin, box.ymax)
    right = geometry.rectangle(xm, box.xmax, box.ymin, box.ymax)
    contexts, fields = [], []
    for eps in epsilons:
        max_area = min(args.max_area or math.inf, (mesh_factor * eps) ** 2 / 4.0)
        rl = _region_rule(left, args, max_area, args.seed)
        rr = _region_rule(right, args, max_area, args.seed + 1)
        kernel = ScaledKernel.gaussian(eps) if args.kernel == "gaussian" else ScaledKernel.tophat(eps)
        contexts.append(operators.SmoothingContext(domain, rl.union(rr), kernel,
                                                   args.degree_floor, args.threads))
        fields.append(operators.PiecewiseField(
            (operators.FieldPiece(left.outer, rl, np.ones((len(rl), 1))),
             operators.FieldPiece(right.outer, rr, np.zeros((len(rr), 1)))), 1))

    def exact(pts):
        return (np.asarray(pts)[:, 0] < xm).astype(float)

    return contexts, fields, exact


def constant_problem(domain, epsilons, mesh_factor, args):
    contexts, fields = [], []
    for eps in epsilons:
        max_area = min(args.max_area or math.inf, (mesh_factor * eps) ** 2 / 4.0)
        rule = _region_rule(domain, args, max_area, args.seed)
        kernel = ScaledKernel.gaussian(eps) if args.kernel == "gaussian" else ScaledKernel.tophat(eps)
        contexts.append(operators.SmoothingContext(domain, rule, kernel, args.degree_floor,
                                                   args.threads))
        fields.append(operators.PiecewiseField.constant(domain.outer, rule, 1.0))
    return contexts, fields, lambda pts: np.ones(len(pts))


def cmd_convergence(args) -> dict:
    domain = _load_domain(args) if (args.domain or args.square) else geometry.unit_square()
    eps = sorted(set(_float_list(args.eps)), reverse=True)
    if len(eps) < 2:
        raise ValidationError("--eps needs at least two values")
    for e in eps:
        _positive("epsilon", e)
    nx, ny = _grid_shape(args.grid)
    factor = _positive("mesh_factor", args.mesh_factor)
    build = {"step": step_problem, "constant": constant_problem}.get(args.field)
    if build is None:
        raise ValidationError(f"unknown field {args.field!r}; choose step or constant")
    check = args.check_quadrature and args.quadrature == "tri" and args.kernel == "gaussian"
    contexts, fields, exact = build(domain, eps, factor, args)
    grid = operators.EvaluationGrid.covering(domain, nx, ny, square=False)
    table = operators.convergence_study(contexts, fields, exact, grid, args.p,
                                        operator=args.operator, check_quadrature=check)
    out = Path(args.out)
    lines = ["epsilon,l1,l2,linf,quadrature_bound,min_degree"]
    lines += [",".join(repr(float(v)) for v in row) for row in table.rows()]
    path = atomic_write(out / "convergence.csv", "\n".join(lines) + "\n")
    outputs = {path.name: sha256_file(path)}
    results = {"epsilons": table.epsilons, "l1": table.l1, "l2": table.l2,
               "linf": table.linf, "quadrature_bound": table.bounds,
               "min_degree": table.min_degrees, "slopes": table.slopes}
    path = atomic_write(out / "slopes.json", json.dumps(table.slopes, indent=2) + "\n")
    outputs[path.name] = sha256_file(path)
    inputs = [args.domain] if args.domain else []
    _write_manifest(args, out, inputs, outputs, results)
    return results


def triangle30() -> geometry.PolygonalDomain:
    """Right triangle with angles 30, 60 and 90 degrees."""
    return geometry.PolygonalDomain.from_polygon(
        [(0.0, 0.0), (1.0, 0.0), (1.0, math.tan(math.radians(30.0)))])


NON_THICK_LEVELS = (5, 10, 20, 50)
NON_THICK_MAX = 100


def cmd_thickness(args) -> dict:
    fixture = args.fixture
    probes = None
    if fixture == "non-thick":
        s = thickness.non_thick_example(NON_THICK_MAX)
        default_eps = [thickness.non_thick_probe(n)[1] for n in NON_THICK_LEVELS]
    else:
        if fixture == "square":
            s = geometry.unit_square()
        elif fixture == "triangle30":
            s = triangle30()
        elif fixture in (None, "domain"):
            s = _load_domain(args)
        else:
            raise ValidationError(f"unknown fixture {fixture!r}")
        side = math.sqrt(s.area)
        default_eps = [side * f for f in (0.1, 0.05, 0.02, 0.01)]
    if args.eps is None:
        eps = default_eps
    else:
        eps = _float_list(args.eps)
        if fixture == "non-thick":
            eps = [Fraction(e).limit_denominator(10**12) for e in eps]
    for e in eps:
        _positive("epsilon", float(e))
    report = thickness.thickness_scan(s, eps, probes, count=args.probes, seed=args.seed,
                                      samples=args.samples)
    out = Path(args.out)
    data = report.to_json()
    data["fixture"] = fixture or "domain"
    path = atomic_write(out / "thickness.json", json.dumps(data, indent=2) + "\n")
    inputs = [args.domain] if (fixture in (None, "domain") and args.domain) else []
    _write_manifest(args, out, inputs, {path.name: sha256_file(path)}, data)
    return data


def cmd_synthesize(args) -> dict:
    domain = _load_domain(args)
    snaps = [dem_fields.synthesize_floes(domain, args.count, args.seed + k, args.packing,
                                         time=float(k))
             for k in range(args.snapshot_count)]
    out = Path(args.out)
    path = out / "snapshots.jsonl"
    dem_fields.save_snapshots(path, snaps)
    results = {"snapshots": len(snaps), "floes": [len(s.floes) for s in snaps],
               "contact_force_sum": [dem_fields.total_contact_force(s).tolist() for s in snaps]}
    inputs = [args.domain] if args.domain else []
    _write_manifest(args, out, inputs, {path.name: sha256_file(path)}, results)
    return results


# --------------------------------------------------------------------- parser
def _add_mesh_options(p, max_area=None):
    p.add_argument("--max-area", type=float, default=max_area,
                   help="largest triangle area (m^2); also sizes Monte Carlo rules")
    p.add_argument("--min-angle", type=float, default=None,
                   help="smallest triangle angle in degrees (default 20 or the sharpest corner)")
    p.add_argument("--method", choices=("auto", "ruppert", "structured"), default="auto",
                   help="auto uses the structured mesher for axis-aligned rectangles")


def _add_domain_options(p):
    p.add_argument("--domain", default=None, help="domain JSON file")
    p.add_argument("--square", type=float, default=None,
                   help="use the square [0, L]^2 instead of a domain file")


def _add_smoothing_options(p):
    p.add_argument("--kernel", choices=("gaussian", "tophat"), default="gaussian")
    p.add_argument("--epsilon", type=float, default=None, help="kernel length scale (m)")
    p.add_argument("--quadrature", choices=("tri", "mc"), default="tri")
    p.add_argument("--mc-n", type=int, default=None, help="Monte Carlo sample count")
    p.add_argument("--operator", choices=operators.OPERATORS, default=operators.MARKOV)
    p.add_argument("--degree-floor", type=float, default=operators.DEFAULT_DEGREE_FLOOR)


def _add_field_options(p):
    p.add_argument("--snapshots", default=None, help="JSON Lines floe snapshot file")
    p.add_argument("--fields", default=",".join(FIELD_NAMES),
                   help="comma-separated subset of mass,velocity,stress")
    p.add_argument("--rho", type=float, default=None, help="ice density (kg/m^3)")
    p.add_argument("--area-normalize", action="store_true",
                   help="divide the stress resultant by the floe area")


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; defaults are
    # filled in after parsing so a subparser cannot clobber an earlier value
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--threads", type=int, help="worker threads (default 1)")
    common.add_argument("--out", help="output directory (default .)")
    common.add_argument("-v", "--verbose", action="count", help="more logging")

    parser = argparse.ArgumentParser(prog="thicksmooth", description=__doc__.split("\n")[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("triangulate", parents=[common], help="mesh a domain")
    _add_domain_options(p)
    _add_mesh_options(p)
    p.set_defaults(func=cmd_triangulate)

    p = sub.add_parser("fields", parents=[common], help="build floe fields")
    _add_field_options(p)
    _add_mesh_options(p)
    p.add_argument("--quadrature", choices=("tri", "mc"), default="tri")
    p.add_argument("--mc-n", type=int, default=None)
    p.set_defaults(func=cmd_fields)

    p = sub.add_parser("smooth", parents=[common], help="smooth floe fields onto a grid")
    _add_domain_options(p)
    _add_field_options(p)
    _add_mesh_options(p)
    _add_smoothing_options(p)
    p.add_argument("--grid", default="200", help="grid resolution N or NX,NY")
    p.add_argument("--format", choices=("csv", "npz", "both"), default="csv")
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("convergence", parents=[common], help="convergence table")
    _add_domain_options(p)
    _add_mesh_options(p)
    _add_smoothing_options(p)
    p.add_argument("--field", choices=("step", "constant"), default="step")
    p.add_argument("--eps", default="0.1,0.05,0.025,0.0125", help="comma-separated epsilons")
    p.add_argument("--grid", default="400,20")
    p.add_argument("--p", type=lambda s: math.inf if s == "inf" else int(s), default=1)
    p.add_argument("--mesh-factor", type=float, default=1.0,
                   help="triangle diameter as a multiple of epsilon")
    p.add_argument("--no-check-quadrature", dest="check_quadrature", action="store_false")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("thickness", parents=[common], help="thickness scan")
    _add_domain_options(p)
    p.add_argument("--fixture", choices=("domain", "square", "triangle30", "non-thick"),
                   default=None)
    p.add_argument("--eps", default=None, help="comma-separated ball radii")
    p.add_argument("--probes", type=int, default=20, help="random probes per family")
    p.add_argument("--samples", type=int, default=thickness.DEFAULT_DISC_SAMPLES)
    p.set_defaults(func=cmd_thickness)

    p = sub.add_parser("synthesize", parents=[common], help="synthetic floe snapshots")
    _add_domain_options(p)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--packing", choices=("dense", "sparse"), default="dense")
    p.add_argument("--snapshot-count", type=int, default=1)
    p.set_defaults(func=cmd_synthesize)
    return parser


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise ValidationError(f"unknown command {name!r}")


def _apply_config(parser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    values = {}
    config = getattr(args, "config", None)
    if config:
        path = _existing("config", config)
        try:
            data = tomli.loads(path.read_text())
        except tomli.TOMLDecodeError as exc:
            raise SchemaError(f"invalid TOML: {exc}", line=getattr(exc, "lineno", None),
                              field=None) from exc
        for key, val in data.items():
            if key in COMMANDS:
                if key == args.command:
                    if not isinstance(val, dict):
                        raise SchemaError("command section must be a table", line=None,
                                          field=key)
                    values.update({k.replace("-", "_"): v for k, v in val.items()})
                continue
            values[key.replace("-", "_")] = val
    sub = _subparser(parser, args.command)
    dests = {a.dest for a in sub._actions} - _META_KEYS - {"help"}
    unknown = sorted(set(values) - dests)
    if unknown:
        raise SchemaError(f"unknown configuration keys {unknown}", line=None, field=unknown[0])
    local = {k: v for k, v in values.items() if k not in GLOBAL_DEFAULTS}
    if local:
        sub.set_defaults(**local)
        args = parser.parse_args(argv)
    for key, default in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, values.get(key, default))
    return args


def _error_payload(exc: BaseException, code: int) -> dict:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, DegreeBelowFloor):
        locs = np.asarray(exc.locations, dtype=float).reshape(-1, 2)
        payload.update(count=exc.count, min_degree=exc.min_degree,
                       locations=locs[:100].tolist())
    if isinstance(exc, SchemaError):
        payload.update(line=exc.line, field=exc.field)
    return payload


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except ThickSmoothError as exc:
        code = EXIT_NUMERIC if isinstance(exc, NumericGuardError) else EXIT_VALIDATION
        print(json.dumps(_error_payload(exc, code)))
        return code
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        results = args.func(args)
    except ThickSmoothError as exc:
        code = EXIT_NUMERIC if isinstance(exc, NumericGuardError) else EXIT_VALIDATION
        print(json.dumps(_error_payload(exc, code)))
        return code
    except (OSError, ValueError) as exc:
        print(json.dumps(_error_payload(exc, EXIT_VALIDATION)))
        return EXIT_VALIDATION
    print(json.dumps({"status": "ok", "command": args.command, "out": str(args.out),
                      "results": results}, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
