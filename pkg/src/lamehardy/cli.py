"""Command line entry point ``lamehardy``.

Exit status: 0 when every check passes, 1 when any check fails, 2 for a
configuration error (bad parameters, unreadable input, mesh mismatch).
"""

import argparse
import sys

from . import harness
from .errors import ConfigError


def _add_params(ap, level=3):
    ap.add_argument("--m", type=int, default=3, help="dimension (default 3)")
    ap.add_argument("--mu", type=float, default=1.0, help="Lame constant mu > 0")
    ap.add_argument("--lambda", dest="lam", type=float, default=1.0, help="Lame constant lambda > -2/3 mu")
    ap.add_argument("--level", type=int, default=level, help="surface refinement level")
    ap.add_argument("--alpha", type=float, default=1.0, help="Hoelder exponent in (0, 1]")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--out", default=None, help="JSON report path")
    ap.add_argument("--timings", action="store_true", help="include wall-clock times in the report")


def build_parser():
    ap = argparse.ArgumentParser(prog="lamehardy", description="Verification harness for Lame-Navier Hardy projections.")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run one verification suite")
    v.add_argument("--suite", required=True, choices=harness.SUITES)
    _add_params(v)

    d = sub.add_parser("decompose", help="split a jet file into its Hardy parts")
    d.add_argument("--jet", required=True, help="input jet JSON")
    d.add_argument("--out-prefix", required=True, help="prefix for <prefix>_plus.json, _minus.json, _report.json")
    _add_params(d, level=4)

    c = sub.add_parser("converge", help="refinement study written as CSV")
    c.add_argument("--suite", required=True, choices=harness.CONVERGE_SUITES)
    c.add_argument("--levels", default="2,3,4", help="comma separated levels")
    c.add_argument("--csv", default=None, help="CSV output path")
    _add_params(c)
    return ap


def _config(args):
    return harness.RunConfig(m=args.m, mu=args.mu, lam=args.lam, level=args.level,
                             alpha=args.alpha, seed=args.seed, out=None)


def _emit(rep, args, default_out=None):
    for line in rep.summary_lines():
        print(line)
    path = args.out or default_out
    text = rep.dumps(timings=args.timings)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(("PASS" if rep.passed else "FAIL") + f" {rep.suite}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "verify":
            rep = harness.run_suite(cfg, args.suite)
            _emit(rep, args)
        elif args.command == "converge":
            try:
                levels = [int(v) for v in args.levels.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"cannot parse levels {args.levels!r}") from exc
            rep, rows = harness.converge(cfg, args.suite, levels, args.csv)
            for r in rows:
                print(f"level {r['level']}: max residual {r['max_residual']:.3e}")
            _emit(rep, args)
        else:
            rep, _, _ = harness.decompose(cfg, args.jet, args.out_prefix)
            _emit(rep, args, default_out=f"{args.out_prefix}_report.json")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
