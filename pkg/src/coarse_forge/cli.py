"""Command-line experiment runner.

Function expressions::

    id | affine:A,B | pl:PATH | sqrt:N | sq:N | log1p:N

``sqrt``, ``sq`` and ``log1p`` are chordal encodings exact at the integer
nodes 0..N.  Space expressions::

    lattice:N,R | csv:PATH | product:SPACE+SPACE+...

Exit status: 0 success, 1 verification failure, 2 parse/usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import covers, flatten, hyperbolicity, qirepair, spaces
from .plfun import TOL, PiecewiseLinearFn
from .reporting import write_csv, write_json

SEED_ENV = "COARSE_FORGE_SEED"


class FnParseError(ValueError):
    def __init__(self, expr: str, position: int, reason: str):
        self.expr, self.position, self.reason = expr, position, reason
        super().__init__(f"{reason} at position {position} in {expr!r}")


class VerificationFailed(Exception):
    pass


def _number(expr: str, start: int, end: int) -> float:
    text = expr[start:end]
    try:
        v = float(text)
    except ValueError:
        raise FnParseError(expr, start, f"expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise FnParseError(expr, start, "number must be finite")
    return v


def _count(expr: str, start: int) -> int:
    text = expr[start:]
    if not text.isdigit() or int(text) < 1:
        raise FnParseError(expr, start, f"expected a positive node count, got {text!r}")
    return int(text)


def parse_fn(expr: str) -> PiecewiseLinearFn:
    expr = expr.strip()
    if expr == "id":
        return PiecewiseLinearFn.identity()
    head, sep, _ = expr.partition(":")
    if not sep:
        raise FnParseError(expr, 0, "expected 'kind:args' or 'id'")
    start = len(head) + 1
    if head == "affine":
        comma = expr.find(",", start)
        if comma < 0:
            raise FnParseError(expr, len(expr), "expected ',' between A and B")
        A, B = _number(expr, start, comma), _number(expr, comma + 1, len(expr))
        if A < 0 or B < 0:
            raise FnParseError(expr, start, "A and B must be nonnegative")
        return PiecewiseLinearFn.affine(A, B)
    if head == "pl":
        path = expr[start:]
        try:
            return PiecewiseLinearFn.from_dict(_load_fn_json(path))
        except (OSError, ValueError) as exc:
            raise FnParseError(expr, start, f"cannot load {path!r}: {exc}") from None
    if head in ("sqrt", "sq", "log1p"):
        nodes = range(_count(expr, start) + 1)
        fn = {"sqrt": math.sqrt, "sq": lambda x: x * x, "log1p": math.log1p}[head]
        return PiecewiseLinearFn.chordal(fn, nodes)
    raise FnParseError(expr, 0, f"unknown function kind {head!r}")


def _load_fn_json(path: str) -> dict:
    data = json.loads(Path(path).read_text())
    # a schedule file carries its function under "c"
    return data["c"] if "c" in data and "breakpoints" not in data else data


def parse_space(expr: str) -> spaces.MetricSpace:
    expr = expr.strip()
    head, sep, rest = expr.partition(":")
    if not sep:
        raise FnParseError(expr, 0, "expected 'kind:args'")
    start = len(head) + 1
    if head == "lattice":
        parts = rest.split(",")
        if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
            raise FnParseError(expr, start, "expected lattice:N,R with integers")
        n, R = (int(p) for p in parts)
        if n < 1:
            raise FnParseError(expr, start, "dimension must be positive")
        return spaces.Lattice(n, R)
    if head == "csv":
        try:
            return spaces.load_csv_matrix(rest)
        except (OSError, ValueError) as exc:
            raise FnParseError(expr, start, f"cannot load {rest!r}: {exc}") from None
    if head == "product":
        return spaces.SupProduct([parse_space(p) for p in rest.split("+")])
    raise FnParseError(expr, 0, f"unknown space kind {head!r}")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    return int(env, 0) if env else spaces.DEFAULT_SEED


def _scales(rmax: float, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.sort(rmax * (1.0 - rng.random(count)))


def cmd_flatten(args):
    Ds = [parse_fn(e) for e in args.control]
    source = " ; ".join(args.control)
    sched = flatten.build_schedule_multi(Ds, args.steps, source=source)
    write_json(args.out, sched.to_dict())


def cmd_verify_flatten(args):
    sched = flatten.FlatteningSchedule.from_dict(json.loads(Path(args.schedule).read_text()))
    D = parse_fn(args.control)
    seed = _seed(args)
    r = _scales(args.rmax, args.samples, seed)
    r_log = _scales(args.log_rmax, args.samples, seed + 1) if args.log_rmax else None
    rep = flatten.verify_flattening(sched, D, r, r_log, node_count=args.node_count, tol=args.tol)
    write_csv(args.out, ["r_prime", "D_tilde", "excess"], rep.rows())
    msg = f"max excess {rep.max_excess:.12g} (bound 2)"
    if rep.max_log_excess is not None:
        msg += f"; log-corrected max excess {rep.max_log_excess:.12g} (bound {rep.log_bound:.12g})"
    print(msg, file=sys.stderr)
    if not rep.passed:
        raise VerificationFailed(msg)


def _cover_report(args, space, scale, bound, gap_window):
    cover = covers.brick_cover(args.n, args.r)
    rep = covers.verify_cover(space, cover, scale, bound, gap_window=gap_window)
    write_csv(args.out, ["color", "cell_id", "diameter", "min_same_color_gap"], rep.rows())
    return rep


def _cover_failure(rep) -> str:
    parts = []
    for name in ("uncovered", "misassigned", "separation_violations", "diameter_violations"):
        items = getattr(rep, name)
        if items:
            parts.append(f"{name}: {items[0]}")
    return "; ".join(parts)


def cmd_cover(args):
    bound = 2 * (args.n + 1) * args.r
    rep = _cover_report(args, spaces.Lattice(args.n, args.box), args.r, bound, 2 * args.r + 1)
    print(f"{len(rep.cells)} cells, max diameter {rep.max_diameter:.12g}", file=sys.stderr)
    if args.verify and not rep.passed:
        raise VerificationFailed(_cover_failure(rep))


def cmd_verify_cover(args):
    space = spaces.Lattice(args.n, args.box)
    for t in args.transform or []:
        space = spaces.Transformed(space, parse_fn(t))
    scale = args.scale if args.scale is not None else args.r
    bound = args.bound if args.bound is not None else 2 * (args.n + 1) * args.r
    rep = _cover_report(args, space, scale, bound, None)
    if not rep.passed:
        raise VerificationFailed(_cover_failure(rep))


def cmd_metric_check(args):
    space = parse_space(args.space)
    for t in args.transform or []:
        space = spaces.Transformed(space, parse_fn(t))
    plan = spaces.EnumerationPlan.auto(len(space), spaces.EXHAUSTIVE_TRIPLE_LIMIT,
                                       samples=args.samples, seed=_seed(args))
    rep = spaces.verify_metric_axioms(space, plan)
    write_csv(args.out, ["x", "y", "z", "defect"], rep.violations)
    print(rep.summary(), file=sys.stderr)
    if not rep.passed:
        raise VerificationFailed(rep.summary())


def cmd_qi(args):
    phi = parse_fn(args.phi)
    Phi = parse_fn(args.Phi) if args.Phi else phi
    metric = parse_fn(args.metric) if args.metric else Phi
    profile = qirepair.CoarseProfile(phi, Phi)
    pair = (qirepair.build_qi_schedules(profile, args.steps) if args.steps
            else qirepair.qi_steps_for(profile, 2 * args.box))
    if args.out_schedule:
        write_json(args.out_schedule, pair.to_dict())
    fmap = qirepair.SampledMap(spaces.Lattice(1, args.box),
                               spaces.Transformed(spaces.Lattice(1, args.box), metric), lambda p: p)
    plan = spaces.EnumerationPlan(True)
    checks = [("repaired", pair.c_X, pair.c_Y, -2.0, 1.0)]
    if args.log_nodes:
        lx, ly = qirepair.log_corrected_pair(pair, args.log_nodes)
        checks.append(("log", lx, ly, -2.0, 1.0))
        if args.eps:
            sx, sy = qirepair.scaled_pair(lx, ly, args.eps)
            checks.append((f"log*{args.eps:g}", sx, sy, -2.0 * args.eps, args.eps))
    rows, failed = [], []
    for name, cx, cy, lo, hi in checks:
        rep = qirepair.verify_qi_additive(fmap, cx, cy, plan, lower=lo, upper=hi)
        print(f"{name}: diff in [{rep.min_diff:.12g}, {rep.max_diff:.12g}], "
              f"allowed [{lo:g}, {hi:g}]", file=sys.stderr)
        rows += [(name, *w) for w in rep.witnesses]
        if not rep.passed:
            failed.append(name)
    write_csv(args.out, ["check", "x", "x_prime", "d_prime_X", "d_prime_Y", "diff"], rows)
    defects = qirepair.interleaving_defects(profile, pair)
    if defects or failed:
        raise VerificationFailed("; ".join(defects + failed))


def cmd_lsl(args):
    Phi = parse_fn(args.Phi)
    steps = args.steps or max(1, math.ceil(args.rmax))
    cY = qirepair.build_lsl_schedule(Phi, steps)
    rs = np.linspace(0.0, args.rmax, args.samples)
    exc = qirepair.lsl_excess(cY, Phi, rs)
    write_csv(args.out, ["r", "c_Y_Phi", "excess"], zip(rs.tolist(), (exc + rs).tolist(), exc.tolist()))
    worst = float(exc.max())
    print(f"max c_Y(Phi(r)) - r = {worst:.12g} (bound 1)", file=sys.stderr)
    if worst > 1.0 + args.tol:
        raise VerificationFailed(f"excess {worst}")


def _transform(name: str):
    if name == "raw":
        return None
    if name == "log1p":
        return spaces.Log1p()
    return parse_fn(name)


def cmd_delta(args):
    radii = [int(v) for v in args.m.split(",")]
    seed = _seed(args)
    rows, deltas = [], []
    for m in radii:
        space = spaces.Lattice(args.n, m)
        t = _transform(args.transform)
        if t is not None:
            space = spaces.Transformed(space, t)
        plan = spaces.EnumerationPlan.auto(len(space), hyperbolicity.EXHAUSTIVE_LIMIT,
                                           samples=args.samples, seed=seed)
        rep = hyperbolicity.four_point_delta(space, plan)
        deltas.append(rep.delta)
        rows.append((m, args.transform, rep.quadruples_checked, rep.delta,
                     " | ".join(",".join(map(str, p)) for p in rep.witness)))
    write_csv(args.out, ["box_radius", "transform", "quadruples", "delta", "witness"], rows)
    if args.check_saturation:
        bad = [(radii[i], radii[i + 1], radii[i + 2]) for i in range(len(deltas) - 2)
               if deltas[i + 2] - deltas[i + 1] > deltas[i + 1] - deltas[i] + args.tol]
        if bad:
            raise VerificationFailed(f"saturation fails for radii {bad[0]}")


def cmd_product_demo(args):
    Ds = [PiecewiseLinearFn.linear(6.0), PiecewiseLinearFn.linear(4.0), PiecewiseLinearFn.linear(4.0)]
    names = ["Z^2 (6r)", "Z factor 1 (4r)", "Z factor 2 (4r)"]
    sched = flatten.build_schedule_multi(Ds, args.steps, source="6r ; 4r ; 4r")
    r = _scales(args.rmax, args.samples, _seed(args))
    rows, ok = [], True
    for name, D in zip(names, Ds):
        rep = flatten.verify_flattening(sched, D, r, tol=args.tol)
        rows.append((f"flattening excess {name}", rep.max_excess, 2.0, rep.passed))
        ok &= rep.passed
    c = sched.c
    line = spaces.Lattice(1, args.box)
    lhs = spaces.Transformed(spaces.SupProduct([line, line]), c).distance_matrix()
    rhs = spaces.SupProduct([spaces.Transformed(line, c)] * 2).distance_matrix()
    direct = spaces.Transformed(spaces.Lattice(2, args.box), c).distance_matrix()
    gap = float(max(np.abs(lhs - rhs).max(), np.abs(direct - rhs).max()))
    rows.append(("max |c(sup d_i) - sup c(d_i)|", gap, args.tol, gap <= args.tol))
    ok &= gap <= args.tol
    write_csv(args.out, ["check", "value", "bound", "passed"], rows)
    if not ok:
        raise VerificationFailed("product demo failed")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coarse-forge", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                   help=f"random seed (default ${SEED_ENV} or {spaces.DEFAULT_SEED:#x})")
    p.add_argument("--tol", type=float, default=TOL)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("flatten", help="build a flattening schedule")
    s.add_argument("--control", action="append", required=True)
    s.add_argument("--steps", type=int, default=12)
    s.add_argument("--out")
    s.set_defaults(func=cmd_flatten)

    s = sub.add_parser("verify-flatten", help="measure D~(r') - r'")
    s.add_argument("--schedule", required=True)
    s.add_argument("--control", required=True)
    s.add_argument("--rmax", type=float, default=10.0)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--log-rmax", type=float, default=None)
    s.add_argument("--node-count", type=int, default=64)
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify_flatten)

    for name, func in (("cover", cmd_cover), ("verify-cover", cmd_verify_cover)):
        s = sub.add_parser(name, help="brick cover of a lattice box")
        s.add_argument("--n", type=int, required=True)
        s.add_argument("--r", type=int, required=True)
        s.add_argument("--box", type=int, required=True)
        s.add_argument("--out")
        if name == "cover":
            s.add_argument("--verify", action="store_true")
        else:
            s.add_argument("--scale", type=float, default=None)
            s.add_argument("--bound", type=float, default=None)
            s.add_argument("--transform", action="append")
        s.set_defaults(func=func)

    s = sub.add_parser("metric-check", help="triangle/symmetry/identity checks")
    s.add_argument("--space", required=True)
    s.add_argument("--transform", action="append")
    s.add_argument("--samples", type=int, default=200_000)
    s.add_argument("--out")
    s.set_defaults(func=cmd_metric_check)

    s = sub.add_parser("qi", help="repair a coarse equivalence of Z into a quasi-isometry")
    s.add_argument("--phi", required=True)
    s.add_argument("--Phi", default=None)
    s.add_argument("--metric", default=None, help="codomain metric profile (default Phi)")
    s.add_argument("--box", type=int, default=200)
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--log-nodes", type=int, default=0)
    s.add_argument("--eps", type=float, default=None)
    s.add_argument("--out-schedule")
    s.add_argument("--out")
    s.set_defaults(func=cmd_qi)

    s = sub.add_parser("lsl", help="large-scale Lipschitz repair")
    s.add_argument("--Phi", required=True)
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--rmax", type=float, default=50.0)
    s.add_argument("--samples", type=int, default=5001)
    s.add_argument("--out")
    s.set_defaults(func=cmd_lsl)

    s = sub.add_parser("delta", help="four-point delta sweep over lattice boxes")
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--m", default="4,8,16")
    s.add_argument("--transform", default="log1p", help="raw | log1p | function expression")
    s.add_argument("--samples", type=int, default=1_000_000)
    s.add_argument("--check-saturation", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_delta)

    s = sub.add_parser("product-demo", help="one c for Z^2 and both Z factors")
    s.add_argument("--box", type=int, default=10)
    s.add_argument("--steps", type=int, default=8)
    s.add_argument("--rmax", type=float, default=6.0)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--out")
    s.set_defaults(func=cmd_product_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except FnParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VerificationFailed as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
