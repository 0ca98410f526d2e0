"""Command line entry point ``rsrm``.

Subcommands::

    rsrm synth  --kind pca --n 2000 --d 50 --r 5 --out data.mat
    rsrm run    --config syn1.cfg [--out DIR] [--threads N] [--seed N] [--audit]
    rsrm grid   --config syn1.cfg ...        (run, then report best eta0 per method)
    rsrm plot   TRACE_OR_DIR ... --out fig.svg [--x sfo|time]
    rsrm verify [--suite all|gradients|manifolds|estimators|error_bound] [--seed N]

``--threads`` falls back to ``RSRM_THREADS`` and then the CPU count. Exit
status is 0 on success, 1 on a runtime error and 2 on a usage error.
"""
import argparse
import os
import sys

from .exceptions import RSRMError

__all__ = ["main", "build_parser"]


def build_parser():
    p = argparse.ArgumentParser(prog="rsrm", description="Riemannian stochastic optimization experiments")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("synth", help="write a synthetic dataset file")
    s.add_argument("--config", help="take the [problem] section from this config")
    s.add_argument("--kind", choices=("pca", "ica", "rc"))
    s.add_argument("--n", type=int)
    s.add_argument("--d", type=int)
    s.add_argument("--r", type=int)
    s.add_argument("--cond", type=float, default=20.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output file")

    for name, text in (("run", "execute an experiment config"), ("grid", "eta0 sweep; report best per method")):
        r = sub.add_parser(name, help=text)
        r.add_argument("--config", required=True)
        r.add_argument("--out", help="output directory (overrides the config)")
        r.add_argument("--threads", type=int)
        r.add_argument("--seed", type=int, help="master seed (overrides the config)")
        r.add_argument("--audit", action="store_true", help="re-derive the summary from traces")

    pl = sub.add_parser("plot", help="plot traces")
    pl.add_argument("traces", nargs="+", help="trace files or directories")
    pl.add_argument("--x", dest="x_axis", choices=("sfo", "time"), default="sfo")
    pl.add_argument("--out", required=True)
    pl.add_argument("--title")

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--suite", default="all")
    v.add_argument("--seed", type=int, default=0)
    return p


def _synth(args, parser):
    from .harness.config import ProblemSpec, load_config
    from .harness.io import write_matrices
    from .harness.runner import build_dataset

    if args.config:
        spec = load_config(args.config).problem
    else:
        if args.kind is None or args.n is None or args.d is None:
            parser.error("synth needs --config or all of --kind, --n, --d")
        spec = ProblemSpec(kind=args.kind, n=args.n, d=args.d, r=args.r, cond=args.cond, seed=args.seed)
    data = build_dataset(spec)
    write_matrices(args.out, data)
    print(f"wrote {data.kind} dataset n={data.n} d={data.d} to {args.out}")


def _run(args, grid=False):
    from dataclasses import replace

    from .harness.config import load_config
    from .harness.runner import run_experiment

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    base = os.path.dirname(os.path.abspath(args.config))
    res = run_experiment(cfg, out=args.out, threads=args.threads, base_dir=base, audit=args.audit)
    print(f"{len(res.trace_paths)} traces, summary at {res.summary_path}")
    for line in res.failures:
        print(f"FAILED {line}", file=sys.stderr)
    if args.audit:
        print("audit: summary consistent with traces")
    if grid:
        from .harness.runner import read_summary

        finals = {(r["method"], r["eta0"]): r for r in read_summary(res.summary_path) if r["kind"] == "final"}
        print("method        eta0       median final gap")
        for label, eta in res.selected.items():
            row = finals[(label, repr(eta))]
            print(f"{label:<12}  {eta:<9g}  {float(row['gap']):.6e}")


def _plot(args):
    from .harness.plotting import emit_plot

    out, labels, _ = emit_plot(args.traces, args.x_axis, args.out, title=args.title)
    print(f"wrote {out} ({len(labels)} series)")


def _verify(args):
    from .verification import SUITES, run_suite

    if args.suite != "all" and args.suite not in SUITES:
        raise _Usage(f"unknown suite {args.suite!r}; choose from all, {', '.join(SUITES)}")
    reports = run_suite(args.suite, seed=args.seed)
    for rep in reports:
        print(rep)
    return 0 if all(r.passed for r in reports) else 1


class _Usage(Exception):
    pass


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    try:
        if args.command == "synth":
            _synth(args, parser)
        elif args.command in ("run", "grid"):
            _run(args, grid=args.command == "grid")
        elif args.command == "plot":
            _plot(args)
        else:
            return _verify(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"rsrm: error: {exc}", file=sys.stderr)
        return 2
    except (RSRMError, OSError, RuntimeError) as exc:
        print(f"rsrm: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
