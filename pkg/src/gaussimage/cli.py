"""Command line: ``check``, ``sweep``, ``eval`` and ``list``.

Exit codes: 0 when every check passes, 1 on a check failure, 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness as H
from .expr import ExprError


def _cmd_check(args) -> int:
    sc = H.load_scenario(args.scenario)
    report = H.run_checks(sc, seed=args.seed, tol_scale=args.tol_scale, threads=args.threads)
    if args.json:
        Path(args.json).write_text(report.dumps())
    summary = report.summary()
    for name, s in summary["checks"].items():
        print(f"  {name:32s} max {s['max_residual']!s:>24}  tol {s['tolerance']!s:>8}  pass {s['pass']:3d} fail {s['fail']:3d} skip {s['skip']:3d}")
    if report.expected_check:
        ef = summary["expected_failure"]
        print(f"expected failure {ef['tag']} ({ef['check']}) fired at {ef['fired_at']}/{summary['points']} points")
    print(f"{sc.name}: {'PASS' if report.passed else 'FAIL'} ({summary['points']} points)")
    return 0 if report.passed else 1


def _cmd_sweep(args) -> int:
    sc = H.load_scenario(args.scenario)
    grid = H.parse_grid(args.grid, sc.n)
    quantities = [q.strip() for q in args.quantities.split(",") if q.strip()]
    text = H.sweep(sc, grid, quantities, seed=args.seed, threads=args.threads)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


def _cmd_eval(args) -> int:
    sc = H.load_scenario(args.scenario)
    out = H.eval_tensor(sc, H.parse_point(args.point, sc.n), args.tensor, literal_p=args.literal_p)
    print(json.dumps(out, indent=2))
    return 0


def _cmd_list(args) -> int:
    for e in H.list_builtins():
        tag = f"  [expected failure: {e['expect_failure']}]" if e["expect_failure"] else ""
        print(f"{e['name']:26s} {e['ambient']:10s} n={e['n']} m={e['m']}  {e['description']}{tag}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaussimage", description="Verify Gauss-image curvature identities on scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="run every check on a scenario")
    p.add_argument("scenario", help="scenario JSON file or built-in name")
    p.add_argument("--tol-scale", type=float, default=1.0, help="multiply all residual tolerances")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--json", metavar="PATH", help="write the full JSON report")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("sweep", help="tabulate quantities over a grid as CSV")
    p.add_argument("scenario")
    p.add_argument("--grid", required=True, help="resolution per axis, e.g. 16x16")
    p.add_argument("--quantities", required=True, help="comma separated: " + ",".join(H.SWEEP_QUANTITIES[:4]) + ", or check names")
    p.add_argument("--out", default="-", help="CSV path (default stdout)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("eval", help="print one tensor at one point as JSON")
    p.add_argument("scenario")
    p.add_argument("--point", required=True, help="comma separated coordinates, e.g. pi/3,pi/4")
    p.add_argument("--tensor", required=True, choices=H.TENSORS)
    p.add_argument("--literal-p", action="store_true", help="debug: compose A R A literally instead of the commutator action")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("list", help="list built-in scenarios")
    p.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (H.ScenarioError, ExprError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
