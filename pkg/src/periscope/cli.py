"""Command-line surface: build, trace, verify, invert, and export scenes.

Exit codes are a stable contract: 0 success, 1 verification failure or a
principled construction rejection, 2 usage or schema error, 3 numerical
failure. All outputs are deterministic for fixed inputs; ``--seed-free``
is accepted for forward compatibility but changes nothing because no
subcommand consumes randomness.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .composer import (
    _mixed_orientation_message,
    invert_system,
    realize_orientation_preserving,
    realize_orientation_reversing,
)
from .decomposition import decompose_local
from .domains import ConvexPolygon, Disc
from .ellipse import EllipseConfig, mobius_fit, pencil_table
from .errors import (
    ConstructionError,
    MixedOrientationError,
    NumericalFailure,
    UsageError,
    VerificationError,
)
from .exports import ellipse_csv, report_json, trace_csv, write_obj
from .fields import PolynomialField
from .maps import AnalyticMap, CallableMap, GradientMap, LinearMap, orientation
from .scene import SceneDocument, load_scene, save_scene, _enc_field
from .synthesis import synthesize_two_mirror
from .tracing import trace_rays
from .verify import halton_labels, verify_system

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

__all__ = ["main"]


# ---------------------------------------------------------------- spec parsing

def _parse_floats(text, n, what):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise UsageError(f"{what} needs {n} comma-separated numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"{what} has a non-numeric entry in {text!r}") from None


def parse_potential(text) -> PolynomialField:
    """Polynomial in x1, x2 from an expression string; ``^`` means power."""
    import sympy

    x1, x2 = sympy.symbols("x1 x2")
    try:
        expr = sympy.sympify(
            text.replace("^", "**"), locals={"x1": x1, "x2": x2}, rational=True
        )
        poly = sympy.Poly(sympy.expand(expr), x1, x2)
    except (sympy.SympifyError, sympy.PolynomialError, TypeError) as exc:
        raise UsageError(f"cannot parse polynomial {text!r}: {exc}") from None
    shape = [0, 0]
    for mono, _ in poly.terms():
        shape = [max(shape[0], mono[0]), max(shape[1], mono[1])]
    tab = np.zeros((shape[0] + 1, shape[1] + 1))
    for mono, coef in poly.terms():
        tab[mono[0], mono[1]] = float(coef)
    return PolynomialField(tab)


def parse_domain(text):
    """``disc:cx,cy,r`` or ``polygon:x1,y1;x2,y2;...`` (counterclockwise)."""
    kind, _, rest = text.partition(":")
    if kind == "disc":
        cx, cy, r = _parse_floats(rest, 3, "disc")
        try:
            return Disc((cx, cy), r)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if kind == "polygon":
        rows = [p for p in rest.split(";") if p.strip()]
        if len(rows) < 3:
            raise UsageError("polygon needs at least 3 vertices")
        verts = [_parse_floats(row, 2, "polygon vertex") for row in rows]
        try:
            return ConvexPolygon(np.asarray(verts))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    raise UsageError(f"unknown domain syntax {text!r} (expected disc:... or polygon:...)")


def _exp_scale_map():
    """e^(x2) * (x1, x2): smooth, orientation-preserving near the axis,
    with hyperbolicity discriminant (tr J)^2 - 4 det J = (x2 e^(x2))^2,
    which vanishes identically on the x1-axis."""

    def fn(x):
        return np.exp(x[:, 1])[:, None] * x

    def jac(x):
        e = np.exp(x[:, 1])
        J = np.zeros((x.shape[0], 2, 2))
        J[:, 0, 0] = e
        J[:, 0, 1] = e * x[:, 0]
        J[:, 1, 1] = e * (1.0 + x[:, 1])
        return J

    return CallableMap(fn, jac)


def parse_map(text):
    """Map specs: ``linear:a,b,c,d[,tx,ty]``, ``gradient:EXPR`` (x -> grad G),
    ``displacement:EXPR`` (x -> x + grad G), ``poly:E1;E2`` (components),
    or the builtin ``exp-scale`` degenerate example."""
    if text == "exp-scale":
        return _exp_scale_map()
    kind, _, rest = text.partition(":")
    if kind == "linear":
        vals = [p.strip() for p in rest.split(",")]
        if len(vals) not in (4, 6):
            raise UsageError("linear map needs 4 matrix entries (plus optional tx,ty)")
        nums = _parse_floats(rest, len(vals), "linear map")
        mat = np.array(nums[:4]).reshape(2, 2)
        offset = np.array(nums[4:6]) if len(nums) == 6 else None
        return LinearMap(mat, offset=offset)
    if kind == "gradient":
        return GradientMap(parse_potential(rest), flavor="pure")
    if kind == "displacement":
        return GradientMap(parse_potential(rest), flavor="displacement")
    if kind == "poly":
        comps = rest.split(";")
        if len(comps) != 2:
            raise UsageError("poly map needs two ;-separated component expressions")
        return AnalyticMap(parse_potential(comps[0]), parse_potential(comps[1]))
    raise UsageError(f"unknown map syntax {text!r}")


def _parse_point(text):
    return np.array(_parse_floats(text, 2, "point"))


# ---------------------------------------------------------------- subcommands

def _emit_scene(path, system, command, source):
    doc = SceneDocument(
        systems=[system],
        metadata={"generator": "periscope", "command": command, "source": source},
    )
    save_scene(path, doc)


def _pick_system(doc, index):
    if not doc.systems:
        raise UsageError("scene contains no systems")
    if not 0 <= index < len(doc.systems):
        raise UsageError(
            f"system index {index} out of range (scene has {len(doc.systems)})"
        )
    return doc.systems[index]


def cmd_synthesize(args):
    G = parse_potential(args.potential)
    D1 = parse_domain(args.domain)
    tol = args.tol if args.tol is not None else 1e-8
    system = synthesize_two_mirror(
        G, D1, c=args.c, verify_samples=args.samples, tol=tol, backend=args.backend
    )
    report = verify_system(
        system,
        expected=GradientMap(G),
        samples=args.samples,
        tol=tol,
        backend=args.backend,
    )
    out = args.out or "scene.json"
    _emit_scene(out, system, "synthesize",
                {"potential": args.potential, "domain": args.domain})
    if args.report:
        report_json(args.report, report)
    print(report.summary())
    print(f"scene written to {out}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_realize(args):
    f = parse_map(args.map)
    D1 = parse_domain(args.domain)
    kwargs = dict(
        partition=args.partition,
        verify=True,
        tol=args.tol,
        backend=args.backend,
    )
    if args.force_4:
        system = realize_orientation_reversing(f, D1, orientation_gate=False, **kwargs)
    elif args.force_6:
        system = realize_orientation_preserving(f, D1, flip_c=args.flip_c, **kwargs)
    else:
        sense = orientation(f, D1)
        if sense == "mixed":
            raise MixedOrientationError(_mixed_orientation_message(f, D1))
        if sense == "reversing":
            system = realize_orientation_reversing(f, D1, **kwargs)
        else:
            system = realize_orientation_preserving(f, D1, flip_c=args.flip_c, **kwargs)
    verification = system.metadata.get("verification", {})
    out = args.out or "scene.json"
    _emit_scene(out, system, "realize", {"map": args.map, "domain": args.domain})
    if args.report:
        report_json(args.report, verification)
    print(
        f"{system.expected_reflections} reflections, "
        f"{len(system.patches)} mirrors, "
        f"map error {verification.get('max_map_error', float('nan')):.3e}"
    )
    print(f"scene written to {out}")
    return EXIT_PASS


def cmd_decompose(args):
    f = parse_map(args.map)
    x0 = _parse_point(args.center)
    tol = args.tol if args.tol is not None else 1e-6
    res = decompose_local(f, x0, tol=tol, degree=args.degree)
    print(
        f"factored on a disc of radius {res.radius:.6g} about {x0.tolist()}: "
        f"residual {res.residual:.3e}, Hessian condition {res.hessian_condition:.6g}"
    )
    if args.report:
        report_json(
            args.report,
            {
                "center": [float(v) for v in res.center],
                "radius": float(res.radius),
                "residual": float(res.residual),
                "hessian_condition": float(res.hessian_condition),
                "degree": int(res.degree),
                "outer_potential": _enc_field(res.u, "outer_potential"),
                "inner_potential": _enc_field(res.phi, "inner_potential"),
            },
        )
    return EXIT_PASS


def cmd_trace(args):
    doc = load_scene(args.scene, strict=args.strict_schema)
    system = _pick_system(doc, args.system)
    labels = halton_labels(system.entry_domain, args.rays)
    out = trace_rays(system, labels, backend=args.backend)
    path = args.out or "paths.csv"
    rows = trace_csv(path, labels, out)
    vals, counts = np.unique(out["status"], return_counts=True)
    statuses = {int(v): int(c) for v, c in zip(vals, counts)}
    print(f"traced {len(labels)} rays ({rows} rows) -> {path}; status codes {statuses}")
    return EXIT_PASS


def cmd_verify(args):
    doc = load_scene(args.scene, strict=args.strict_schema)
    systems = (
        doc.systems if args.system is None else [_pick_system(doc, args.system)]
    )
    tol = args.tol if args.tol is not None else 1e-8
    reports = []
    for i, system in enumerate(systems):
        report = verify_system(system, samples=args.samples, tol=tol, backend=args.backend)
        reports.append(report)
        print(f"system {i}:")
        print("  " + report.summary().replace("\n", "\n  "))
    if args.report:
        payload = [r.to_dict() for r in reports]
        report_json(args.report, payload[0] if len(payload) == 1 else {"systems": payload})
    return EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL


def cmd_invert(args):
    doc = load_scene(args.scene, strict=args.strict_schema)
    flipped = SceneDocument(
        systems=[invert_system(s) for s in doc.systems],
        dimension=doc.dimension,
        metadata={**doc.metadata, "inverted_from": str(args.scene)},
    )
    out = args.out or "inverted.json"
    save_scene(out, flipped)
    print(f"inverted {len(flipped.systems)} system(s) -> {out}")
    return EXIT_PASS


def cmd_export(args):
    doc = load_scene(args.scene, strict=args.strict_schema)
    system = _pick_system(doc, args.system)
    out = args.out or "mesh.obj"
    groups = write_obj(out, system, grid=args.grid)
    print(f"wrote {groups} mesh group(s) -> {out}")
    return EXIT_PASS


def cmd_ellipse(args):
    cfg = EllipseConfig(args.c)
    table = pencil_table(cfg, args.samples)
    out = args.out or "ellipse.csv"
    rows = ellipse_csv(out, table)
    mean, dev = mobius_fit(cfg, args.samples)
    print(
        f"{rows} rows -> {out}; tan-half-angle product mean {mean!r} "
        f"(target {cfg.half_angle_coefficient!r}, max deviation {dev:.3e})"
    )
    return EXIT_PASS


# ---------------------------------------------------------------- wiring

def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None,
                        help="verification / decomposition tolerance")
    common.add_argument("--seed-free", action="store_true",
                        help="reserved; all numerics are already deterministic")
    common.add_argument("--strict-schema", action="store_true",
                        help="reject unknown keys when reading scene files")
    common.add_argument("--out", default=None, help="primary output path")
    common.add_argument("--backend", choices=("auto", "pure", "compiled"),
                        default=None, help="ray-tracing backend")

    parser = argparse.ArgumentParser(
        prog="periscope",
        description="Mirror systems that steer vertical light beams.",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synthesize", parents=[common],
                       help="two-mirror system for x -> x + grad G")
    p.add_argument("--potential", required=True, help="polynomial G in x1, x2")
    p.add_argument("--domain", required=True, help="entry domain (disc:cx,cy,r)")
    p.add_argument("--c", type=float, default=None, help="path constant override")
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--report", default=None, help="verification report JSON path")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("realize", parents=[common],
                       help="4- or 6-reflection system for a plane map")
    p.add_argument("--map", required=True, help="map spec (see parse_map)")
    p.add_argument("--domain", required=True)
    p.add_argument("--partition", type=int, default=1, help="cells per axis")
    p.add_argument("--flip-c", type=float, default=None,
                   help="path parameter of the reversing stage (6-reflection)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--force-4", action="store_true",
                   help="attempt the 4-reflection pipeline regardless of orientation")
    g.add_argument("--force-6", action="store_true",
                   help="attempt the 6-reflection pipeline regardless of orientation")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_realize)

    p = sub.add_parser("decompose", parents=[common],
                       help="factor a map into two gradient maps near a point")
    p.add_argument("--map", required=True)
    p.add_argument("--center", required=True, help="expansion point 'x,y'")
    p.add_argument("--degree", type=int, default=8)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("trace", parents=[common], help="trace rays, write CSV paths")
    p.add_argument("--scene", required=True)
    p.add_argument("--system", type=int, default=0)
    p.add_argument("--rays", type=int, default=256)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("verify", parents=[common], help="re-verify a scene file")
    p.add_argument("--scene", required=True)
    p.add_argument("--system", type=int, default=None, help="verify one system only")
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("invert", parents=[common],
                       help="write the scene realizing the inverse maps")
    p.add_argument("--scene", required=True)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("export", parents=[common], help="tessellate mirrors to OBJ")
    p.add_argument("--scene", required=True)
    p.add_argument("--system", type=int, default=0)
    p.add_argument("--grid", type=int, default=65, help="samples per axis")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("ellipse", parents=[common],
                       help="focal-pencil angle table for an ellipse")
    p.add_argument("--c", type=float, default=0.5, help="focal half-distance in [0, 1)")
    p.add_argument("--samples", type=int, default=100)
    p.set_defaults(func=cmd_ellipse)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.backend == "auto":
        args.backend = None
    try:
        return args.func(args)
    except UsageError as exc:  # includes scene format errors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConstructionError, VerificationError) as exc:
        kind = getattr(exc, "classification", None)
        tag = f" [{kind}]" if kind else ""
        print(f"rejected{tag}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
