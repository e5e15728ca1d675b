"""``sedpf-lab`` command line.

Exit status: 0 on success, 2 when a bound validation fails, 1 on any error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import expctl

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2


def _report(report: expctl.BoundReport) -> int:
    sys.stdout.write(report.to_csv())
    if not report.passed:
        bad = ", ".join(str(c.point) for c in report.failures())
        print(f"bound violated at grid points: {bad}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def _finish(spec: expctl.ExperimentSpec, result: expctl.ExperimentOutput) -> int:
    print(f"wrote {result.results}")
    print(f"wrote {result.summary}")
    if spec.bounds:
        return _report(expctl.validate_file(result.results))
    return EXIT_OK


def cmd_run(args) -> int:
    spec = expctl.load_spec(args.spec_file)
    return _finish(spec, expctl.run_experiment(spec, args.out, args.workers))


def cmd_scenario(args) -> int:
    seeds = None if args.seeds is None else list(range(1, args.seeds + 1))
    spec = expctl.scenario(args.tag, seeds=seeds, packets=args.packets)
    return _finish(spec, expctl.run_experiment(spec, args.out, args.workers))


def cmd_sgrid(args) -> int:
    text = expctl.sgrid_csv(expctl.load_grid(args.spec_file))
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    return _report(expctl.validate_file(args.results))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sedpf-lab", description="Multipath scheduling and coding experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec file (YAML or JSON)")
    r.add_argument("spec_file")
    r.add_argument("--out", help="output directory (default: the spec's outputs)")
    r.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("scenario", help="run a canned scenario")
    s.add_argument("tag", choices=expctl.SCENARIOS)
    s.add_argument("--out", default=".", help="output directory")
    s.add_argument("--seeds", type=int, help="use seeds 1..n (default 5)")
    s.add_argument("--packets", type=int, help="packets per run")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_scenario)

    g = sub.add_parser("sgrid", help="evaluate the analytic S-process grid")
    g.add_argument("spec_file")
    g.add_argument("--out", help="write the CSV here instead of stdout")
    g.set_defaults(func=cmd_sgrid)

    v = sub.add_parser("validate", help="check simulated buffering against the bound")
    v.add_argument("results")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; keep 2 for failed validations
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    if args.command == "scenario" and args.seeds is not None and args.seeds < 1:
        print("error: --seeds must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except (expctl.SpecError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
