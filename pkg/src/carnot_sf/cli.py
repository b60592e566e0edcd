"""Command line entry point: ``carnot-sf run|suite|extremal``."""

from __future__ import annotations

import argparse
import sys

from .experiments import ExperimentSpec, dump_report, run_experiment


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carnot-sf",
        description="Extremals, blowdowns and geodesy checks on step-2 sub-Finsler Carnot groups.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment described by a JSON spec")
    run.add_argument("spec", help="path to the experiment spec (JSON)")
    run.add_argument("-o", "--output", help="override the spec's output directory")

    suite = sub.add_parser("suite", help="run the acceptance criteria and invariant suite")
    suite.add_argument("--seed", type=int, default=0)
    suite.add_argument("--only", nargs="+", metavar="CHECK", help="run only these checks")
    suite.add_argument("-o", "--output", help="directory for report.json")

    ext = sub.add_parser("extremal", help="integrate one extremal and export CSV/JSON")
    ext.add_argument("--group", default="heisenberg:1")
    ext.add_argument("--norm", default="euclidean")
    ext.add_argument("--a0", type=_floats, required=True, help="initial horizontal covector")
    ext.add_argument("--b", type=_floats, required=True, help="vertical covector")
    ext.add_argument("-T", type=float, default=10.0)
    ext.add_argument("--dt", type=float, default=1e-3)
    ext.add_argument("--selection", help="selection rule for set-valued feedback")
    ext.add_argument("--residual-tol", type=float, default=1e-6)
    ext.add_argument("-o", "--output", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "suite":
            from .acceptance import run_suite

            params = {"only": args.only} if args.only else {}
            code, report, timings = run_suite(ExperimentSpec("suite", params=params, seed=args.seed,
                                                             output=args.output))
            for name in sorted(report["checks"]):
                status = "PASS" if report["checks"][name]["passed"] else "FAIL"
                print(f"{status}  {name}  ({timings[name]:.1f}s)", file=sys.stderr)
            if not args.output:
                sys.stdout.write(dump_report(report))
            return code
        if args.command == "run":
            spec = ExperimentSpec.load(args.spec)
            if args.output:
                spec.output = args.output
        else:
            params = {"a0": args.a0, "b": args.b, "T": args.T, "dt": args.dt,
                      "residual_tol": args.residual_tol}
            if args.selection:
                params["selection"] = args.selection
            spec = ExperimentSpec("extremal", args.group, args.norm, params, args.output)
        report = run_experiment(spec)
    except (ValueError, KeyError, OSError) as exc:
        print(f"carnot-sf: error: {exc}", file=sys.stderr)
        return 2
    if not spec.output:
        sys.stdout.write(dump_report(report))
    return 0 if report.get("passed", True) else 1


if __name__ == "__main__":
    sys.exit(main())
