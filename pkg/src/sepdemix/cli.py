"""Command-line entry point: ``sepdemix {simulate,sweep,check,report}``."""
import argparse
import json
import sys
import warnings

from .errors import ConfigurationError
from .harness import SweepConfig, SweepResult, default_jobs, format_report, load_csv, run_sweep
from .model import ProblemConfig
from .pipeline import TrialOptions, run_trial


def _cmd_simulate(args):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cfg = ProblemConfig(
            L=args.L, K=args.K, N=args.N, S=args.S, R=args.R if args.R is not None else args.S,
            tau=args.tau, mode=args.mode, seed=args.seed,
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    opts = TrialOptions(oracle_restarts=not args.no_oracle, rank_slack=args.rank_slack)
    rec = run_trial(cfg, options=opts)
    out = {
        "config": cfg.to_dict(),
        "success": rec.success,
        "failure_category": rec.failure_category,
        "matrix_resid": rec.matrix_resid,
        "matrix_err": rec.matrix_err,
        "transform_converged": rec.transform_converged,
        "transform_resid": rec.transform_resid,
        "transform_attempts": rec.transform_attempts,
        "spurious_rejections": rec.spurious_rejections,
        "wall_ms": round(rec.wall_ms, 3),
        "report": rec.report.to_dict() if rec.report is not None else None,
    }
    print(json.dumps(out, indent=2))
    return 0 if rec.success else 1


def _cmd_sweep(args):
    sweep = SweepConfig.from_json(args.config)
    out = args.out or sweep.output
    if out is None:
        raise ConfigurationError("no output path: pass --out or set 'output' in the config")
    jobs = args.jobs or sweep.jobs or default_jobs()
    if sweep.long_running:
        print(f"note: {sweep.experiment_id} is a long-running preset", file=sys.stderr)
    total = len(sweep.cells()) * sweep.trials
    count = [0]

    def progress(rec):
        count[0] += 1
        if not args.quiet:
            print(
                f"[{count[0]}/{total}] L={rec.L} K={rec.K} N={rec.N} S={rec.S} R={rec.R} "
                f"trial={rec.trial} success={rec.success}",
                file=sys.stderr,
            )

    result = run_sweep(sweep, output=out, resume=args.resume, jobs=jobs, progress=progress)
    print(format_report(result, axis=args.axis, level=args.level))
    return 0


def _cmd_check(args):
    from .selfcheck import run_checks

    results = run_checks(seed=args.seed)
    ok = True
    for name, passed, detail in results:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return 0 if ok else 1


def _cmd_report(args):
    rows = load_csv(args.input)
    if args.experiment:
        rows = [r for r in rows if r["experiment_id"] == args.experiment]
    if not rows:
        print("no rows", file=sys.stderr)
        return 1
    for exp in sorted({r["experiment_id"] for r in rows}):
        result = SweepResult.from_rows([r for r in rows if r["experiment_id"] == exp])
        print(format_report(result, axis=args.axis, level=args.level))
        print()
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="sepdemix", description="Separable blind deconvolution and demixing")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one trial and print its error report as JSON")
    s.add_argument("--L", type=int, default=64)
    s.add_argument("--K", type=int, default=5)
    s.add_argument("--N", type=int, default=6)
    s.add_argument("--S", type=int, default=1)
    s.add_argument("--R", type=int, default=None, help="receivers (default: S)")
    s.add_argument("--tau", type=float, default=0.0, help="noise norm per receiver")
    s.add_argument("--mode", choices=("one_sided", "two_sided"), default="two_sided")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rank-slack", type=int, default=0)
    s.add_argument("--no-oracle", action="store_true", help="accept the first converged transform root")
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("sweep", help="run a Monte-Carlo sweep from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--resume", action="store_true")
    s.add_argument("--jobs", type=int, default=None)
    s.add_argument("--axis", default="L", help="axis for threshold detection")
    s.add_argument("--level", type=float, default=0.9)
    s.add_argument("-q", "--quiet", action="store_true")
    s.set_defaults(func=_cmd_sweep)

    s = sub.add_parser("check", help="run the oracle self-test battery")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_check)

    s = sub.add_parser("report", help="summarize a sweep CSV")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--axis", default="L")
    s.add_argument("--level", type=float, default=0.9)
    s.add_argument("--experiment", default=None)
    s.set_defaults(func=_cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
