"""Command-line entry point: ``python -m sympose <command> ...``.

Exit codes: 0 success, 1 spurious minima found (``validate``), 2 bad input
(unparsable or missing files, bad flags), 3 unmet precondition.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import RigidTransform, is_rotation
from .landscape import (
    build_neighbor_graph,
    descend_to_minima,
    evaluate_landscape,
    landscape_csv,
    landscape_report,
    minima_csv,
    sample_so3,
    slice_1d,
)
from .metrics import METRIC_KINDS, auc, make_batch_loss
from .pipeline import load_object
from .primitives import GroupedPrimitives, build_gp
from .shapes import EmptyModelError, ModelParseError
from .symmetry import DetectorConfig, SymmetrySet


class InputError(Exception):
    """Unreadable or malformed input (exit 2)."""


class PreconditionError(Exception):
    """Input is well-formed but unusable (exit 3)."""


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def header(seed, cfg: dict) -> str:
    return f"# sympose {__version__} seed={seed} config={config_hash(cfg)}\n"


def meta(seed, cfg: dict) -> dict:
    return {"tool": f"sympose {__version__}", "seed": seed, "config_hash": config_hash(cfg), "config": cfg}


def _write(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise InputError(f"cannot write {out}: {exc}") from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"{path}: no such file") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _detector(args) -> DetectorConfig:
    return DetectorConfig(epsilon=args.epsilon, rho=args.rho, max_order=args.max_order,
                          axis_candidates=args.axis_candidates, bandwidth=args.bandwidth)


def _object(args, source=None):
    src = source or args.shape or getattr(args, "model", None)
    if src is None:
        raise InputError("give a model file or --shape")
    if args.shape is None and not Path(src).exists():
        raise InputError(f"{src}: no such file")
    try:
        return load_object(src, _detector(args), samples=args.samples, seed=args.seed)
    except (ModelParseError, EmptyModelError) as exc:
        raise InputError(str(exc)) from exc


def _gp_from_input(args):
    """GP plus (optionally) the object it came from.

    ``args.input`` may be a GP JSON, a symmetry JSON or a model file;
    ``--shape`` generates a fixture instead.
    """
    src = getattr(args, "input", None)
    if src and str(src).endswith(".json"):
        d = _read_json(src)
        if "groups" in d:
            return GroupedPrimitives.from_dict(d), None
        if "axes" in d:
            sym = SymmetrySet.from_dict(d)
            r = sym.radius if args.radius in (None, "auto") else float(args.radius)
            return build_gp(sym, r), None
        raise InputError(f"{src}: neither a GP nor a symmetry report")
    model = _object(args, src)
    gp = model.gp
    if getattr(args, "radius", None) not in (None, "auto"):
        gp = build_gp(model.sym, float(args.radius), model.group)
    return gp, model


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_detect(args):
    model = _object(args, args.model)
    cfg = {"command": "detect", "source": args.shape or args.model, "samples": args.samples,
           **_detector(args).as_dict()}
    d = model.sym.to_dict()
    d["object"] = model.name
    d["scale"] = model.scale
    d["meta"] = meta(args.seed, cfg)
    _write(_dump(d), args.output)
    return 0


def cmd_gp(args):
    gp, model = _gp_from_input(args)
    cfg = {"command": "gp", "source": args.input or args.shape, "radius": args.radius,
           "samples": args.samples}
    d = gp.to_dict()
    if model is not None:
        d["object"] = model.name
        d["scale"] = model.scale
    d["meta"] = meta(args.seed, cfg)
    _write(_dump(d), args.output)
    return 0


def _pose(obj, what):
    try:
        if isinstance(obj, dict):
            R = np.asarray(obj["R"], dtype=float).reshape(3, 3)
            t = np.asarray(obj.get("t", [0, 0, 0]), dtype=float).reshape(3)
        else:
            M = np.asarray(obj, dtype=float).reshape(4, 4)
            R, t = M[:3, :3], M[:3, 3]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad pose for {what}: {exc}") from exc
    if not is_rotation(R, tol=1e-6):
        raise InputError(f"{what}: rotation is not orthonormal")
    # re-orthonormalize values that are only good to a few digits
    U, _, Vt = np.linalg.svd(R)
    return RigidTransform(U @ Vt, t)


def read_pairs(path):
    pairs = []
    try:
        fh = open(path)
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
            oid = rec.get("object_id", rec.get("object-id", str(lineno)))
            pairs.append((str(oid), _pose(rec["T_hat"], f"{path}:{lineno}"), _pose(rec["T_dot"], f"{path}:{lineno}")))
    return pairs


def cmd_dist(args):
    gp = GroupedPrimitives.from_dict(_read_json(args.gp))
    kinds = list(METRIC_KINDS) if args.metric == "all" else [args.metric]
    points = None
    if any(k in ("add", "adds") for k in kinds):
        if not (args.shape or args.model):
            raise PreconditionError("add/adds need the object points (--model or --shape)")
        points = _object(args, args.model).points.points
    pairs = read_pairs(args.pairs)
    losses = {k: make_batch_loss(k, gp, points) for k in kinds}
    scale = 1.0
    if args.units == "metric":
        d = _read_json(args.gp)
        if "scale" not in d:
            raise PreconditionError("metric units need a GP file that records its scale")
        scale = float(d["scale"])
    cfg = {"command": "dist", "gp": args.gp, "pairs": args.pairs, "metric": args.metric, "units": args.units}
    buf = io.StringIO()
    buf.write(header(args.seed, cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["object_id"] + kinds)
    cols = {k: [] for k in kinds}
    for oid, T_hat, T_dot in pairs:
        row = [oid]
        for k in kinds:
            v = float(losses[k](T_hat, T_dot.rotation, T_dot.translation)[0]) * scale
            cols[k].append(v)
            row.append(format(v, ".17g"))
        w.writerow(row)
    _write(buf.getvalue(), args.output)
    if pairs:
        summary = io.StringIO()
        summary.write(header(args.seed, cfg))
        sw = csv.writer(summary, lineterminator="\n")
        sw.writerow(["metric", "auc", "max_threshold"])
        for k in kinds:
            sw.writerow([k, format(auc(cols[k], args.auc_max).area, ".17g"), args.auc_max])
        if args.output in (None, "-"):
            sys.stderr.write(summary.getvalue())
        else:
            out = Path(args.output)
            _write(summary.getvalue(), out.with_name(out.stem + "_auc.csv"))
    return 0


def _metric_for(args, gp):
    m = args.metric
    return gp.metric_kind if m == "amgpd" else m


def cmd_validate(args):
    gp, model = _gp_from_input(args)
    metric = _metric_for(args, gp)
    if metric in ("add", "adds") and model is None:
        raise PreconditionError("add/adds landscapes need the object points (model file or --shape)")
    if args.N < 100:
        raise PreconditionError("N must be at least 100")
    Rs = sample_so3(args.N, args.seed)
    graph = build_neighbor_graph(Rs, args.k)
    pts = None if model is None else model.points.points
    queries = None if model is None else model.queries
    L = evaluate_landscape(metric, Rs, gp=gp, points=pts, graph=graph, queries=queries)
    group = model.group if model is not None else gp.group
    rep = descend_to_minima(L, group)
    name = args.shape or args.input or ""
    cfg = {"command": "validate", "source": name, "metric": metric, "N": args.N, "k": args.k,
           "samples": args.samples}
    h = header(args.seed, cfg)
    _write(landscape_csv(L, h), args.output)
    report = landscape_report(L, rep, name)
    report["meta"] = meta(args.seed, cfg)
    if args.report:
        _write(_dump(report), args.report)
    if args.minima:
        _write(minima_csv(rep, h), args.minima)
    verdict = "all minima correct" if rep.all_correct else "spurious minima found"
    print(f"{name} {metric}: {len(rep.minima)} minima, {verdict}", file=sys.stderr)
    return 0 if rep.all_correct else 1


def _parse_axis(text, model):
    if text in (None, "sym"):
        if model is None or not model.sym.geometric_axes():
            raise PreconditionError("no detected symmetry axis; pass --axis x,y,z")
        return model.sym.geometric_axes()[0].axis
    named = {"x": (1, 0, 0), "y": (0, 1, 0), "z": (0, 0, 1)}
    try:
        v = np.array(named[text] if text in named else [float(c) for c in text.split(",")], dtype=float)
    except ValueError as exc:
        raise InputError(f"bad axis {text!r}") from exc
    if v.shape != (3,) or not np.linalg.norm(v) > 0:
        raise InputError(f"bad axis {text!r}")
    return v / np.linalg.norm(v)


def cmd_slice(args):
    gp, model = _gp_from_input(args)
    metric = _metric_for(args, gp)
    if metric in ("add", "adds") and model is None:
        raise PreconditionError("add/adds slices need the object points (model file or --shape)")
    if args.steps < 36:
        raise PreconditionError("steps must be at least 36")
    axis = _parse_axis(args.axis, model)
    deg, d = slice_1d(metric, axis, args.steps, gp=gp, points=None if model is None else model.points.points)
    cfg = {"command": "slice", "source": args.shape or args.input, "metric": metric,
           "axis": [float(x) for x in axis], "steps": args.steps}
    buf = io.StringIO()
    buf.write(header(args.seed, cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["angle_deg", "d"])
    for a, v in zip(deg, d):
        w.writerow([format(a, ".17g"), format(v, ".17g")])
    _write(buf.getvalue(), args.output)
    return 0


def cmd_fit(args):
    from .fitting import FitConfig, batch_fit, rows_csv

    shapes = args.shape_list or ([args.shape] if args.shape else [])
    if not shapes:
        raise InputError("give at least one --shape")
    models = [_object(args, s) if Path(s).exists() else load_object(s, _detector(args), args.samples, args.seed)
              for s in shapes]
    losses = [s.strip() for s in args.loss.split(",")]
    for l in losses:
        if l not in METRIC_KINDS:
            raise InputError(f"unknown loss {l!r}")
    fcfg = FitConfig(max_iter=args.max_iter)
    kw = {}
    if args.init == "flip":
        kw["flip_axis"] = _parse_axis(args.flip_axis, None)
    rows, summary = batch_fit(models, losses, args.trials, args.seed, fcfg, args.init, **kw)
    cfg = {"command": "fit", "shapes": shapes, "losses": losses, "trials": args.trials, "init": args.init,
           "flip_axis": args.flip_axis, "max_iter": args.max_iter, "samples": args.samples}
    _write(rows_csv(rows, header=header(args.seed, cfg)), args.output)
    for s in summary:
        print(f"{s['shape']} {s['loss']}: {s['success_rate'] * 100:.1f}% correct over {s['trials']} trials",
              file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p, model_arg=True):
    if model_arg:
        p.add_argument("model", nargs="?", help="mesh or point file (OBJ, PLY, CSV)")
    p.add_argument("--shape", help="generated fixture, e.g. cube, pyramid:4, clamp")
    p.add_argument("--samples", type=int, default=2000, help="surface samples for --shape")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--rho", type=int, default=6)
    p.add_argument("--max-order", type=int, default=9)
    p.add_argument("--axis-candidates", type=int, default=1000)
    p.add_argument("--bandwidth", type=float, default=0.1)
    p.add_argument("-o", "--output", default="-")


def build_parser():
    ap = argparse.ArgumentParser(prog="sympose", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"sympose {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect rotational symmetries")
    _common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("gp", help="build grouped primitives")
    p.add_argument("input", nargs="?", help="symmetry JSON or model file")
    _common(p, model_arg=False)
    p.add_argument("--radius", default="auto")
    p.set_defaults(func=cmd_gp)

    p = sub.add_parser("dist", help="score pose pairs")
    p.add_argument("gp", help="GP JSON")
    p.add_argument("pairs", help="JSON lines with object_id, T_hat, T_dot")
    p.add_argument("--metric", default="amgpd", choices=list(METRIC_KINDS) + ["all"])
    p.add_argument("--model", help="object points for add/adds")
    p.add_argument("--units", default="normalized", choices=["normalized", "metric"])
    p.add_argument("--auc-max", type=float, default=0.1)
    _common(p, model_arg=False)
    p.set_defaults(func=cmd_dist)

    for name, func, helptext in (("validate", cmd_validate, "SO(3) landscape and its minima"),
                                 ("slice", cmd_slice, "metric along one rotation axis")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("input", nargs="?", help="GP JSON, symmetry JSON or model file")
        _common(p, model_arg=False)
        p.add_argument("--metric", default="amgpd", choices=list(METRIC_KINDS))
        p.add_argument("--radius", default="auto")
        if name == "validate":
            p.add_argument("-N", type=int, default=10000)
            p.add_argument("-k", type=int, default=12)
            p.add_argument("--report", help="minima JSON report path")
            p.add_argument("--minima", help="minima CSV path")
        else:
            p.add_argument("--axis", default="sym", help="x,y,z or 'sym' for the first detected axis")
            p.add_argument("--steps", type=int, default=360)
        p.set_defaults(func=func)

    p = sub.add_parser("fit", help="pose descent trials")
    _common(p, model_arg=False)
    p.add_argument("--shapes", dest="shape_list", nargs="+", help="several fixtures")
    p.add_argument("--loss", default="amgpd", help="comma list of " + ", ".join(METRIC_KINDS))
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--init", default="uniform", choices=["uniform", "flip"])
    p.add_argument("--flip-axis", default="x")
    p.add_argument("--max-iter", type=int, default=300)
    p.set_defaults(func=cmd_fit)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return int(args.func(args))
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ModelParseError, EmptyModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PreconditionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
