"""
Command line entry point.

    python -m cliqueadmm run --config cfg.json [--force] [--paper-scale]
    python -m cliqueadmm validate --config cfg.json
    python -m cliqueadmm selftest

Exit codes: 0 success, 1 self-test failure, 2 parameter validation failure,
3 divergence, 4 I/O or configuration error.
"""

import argparse
import json
import logging
import sys

from .experiment import ConfigError, ExperimentConfig, generate_instance, run_experiment, validate_methods
from .graph import GraphError
from .selftest import run_selftest

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_INVALID = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _load(args):
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "paper_scale", False):
        cfg = cfg.paper_scale()
    if getattr(args, "output_dir", None):
        cfg.output_dir = args.output_dir
    return cfg


def _print_reports(reports, out):
    for name, rep in reports.items():
        tag = "ok" if rep["ok"] else "FAILED"
        detail = ", ".join(f"{k}={v:.3g}" for k, v in rep.items() if isinstance(v, float))
        out(f"validate {name}: {tag} ({detail})")


def cmd_validate(args, out):
    cfg = _load(args)
    reports = validate_methods(cfg, generate_instance(cfg))
    _print_reports(reports, out)
    return EXIT_OK if all(r["ok"] for r in reports.values()) else EXIT_INVALID


def cmd_run(args, out):
    cfg = _load(args)
    reports = validate_methods(cfg, generate_instance(cfg))
    _print_reports(reports, out)
    if not all(r["ok"] for r in reports.values()) and not args.force:
        out("parameter validation failed; rerun with --force to run anyway")
        return EXIT_INVALID
    records, summary = run_experiment(cfg, force=args.force)
    out(f"obj* = {summary['obj_star']!r} on a graph with {summary['edges']} edges")
    for rec in records:
        last = rec.rows[-1] if rec.rows else {}
        steps = "  ".join(f"{lev}:{k}" for lev, k in summary["methods"][rec.method]["iterations_to"].items())
        out(f"{rec.method:<14} {rec.status:<9} k={last.get('k')}  "
            f"rel={last.get('rel_obj_residual', float('nan')):.2e}  settled {steps}")
    if "lyapunov" in summary:
        lyap = summary["lyapunov"]
        out(f"lyapunov ({lyap['method']}): max increase {lyap['max_increase']:.2e}")
    out(f"results written to {cfg.output_dir}")
    return EXIT_DIVERGED if any(r.status == "diverged" for r in records) else EXIT_OK


def cmd_selftest(args, out):
    return EXIT_OK if run_selftest(args.seed, out) else EXIT_SELFTEST


def build_parser():
    ap = argparse.ArgumentParser(prog="cliqueadmm", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the consensus experiment")
    run.add_argument("--config", required=True, help="JSON experiment configuration")
    run.add_argument("--force", action="store_true", help="run even if parameter validation fails")
    run.add_argument("--paper-scale", action="store_true", help="use n=50, p=0.1")
    run.add_argument("--output-dir", help="override the configured output directory")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check step-size conditions without running")
    val.add_argument("--config", required=True)
    val.add_argument("--paper-scale", action="store_true")
    val.set_defaults(func=cmd_validate)
    st = sub.add_parser("selftest", help="quick property checks against independent oracles")
    st.add_argument("--seed", type=int, default=0)
    st.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None, out=print):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out)
    except (OSError, json.JSONDecodeError, ConfigError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
