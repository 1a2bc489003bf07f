"""Command line entry point: ``dasha-pp {run,tune,params,verify,data}``."""

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace

from dasha_pp.data import load_libsvm
from dasha_pp.errors import DashaError
from dasha_pp.harness import ExperimentConfig, default_output_dir, load_config, run_experiment, setup
from dasha_pp.theory import params_pl
from dasha_pp.verification import default_battery


def _config(args):
    config = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seeds=(args.seed,))
    return config


def cmd_run(args):
    config = _config(args)
    if args.gamma is not None:
        config = replace(config, gamma=args.gamma)
    summary = run_experiment(config, args.out or default_output_dir())
    print(json.dumps({k: summary[k] for k in ("variant", "gamma", "final_grad_norm_sq")}, indent=2))
    return 0


def cmd_tune(args):
    config = replace(_config(args), gamma="grid")
    summary = run_experiment(config, args.out or default_output_dir())
    for row in summary["grid"]:
        status = "diverged" if row["diverged"] else f"{row['final_grad_norm_sq']:.6e}"
        print(f"gamma={row['gamma']:<12.6g} {status}")
    print(f"best gamma: {summary['gamma']:.6g}")
    return 0


def cmd_params(args):
    su = setup(_config(args))
    out = {"inputs": asdict(su.inputs), "params": asdict(su.params)}
    if args.mu is not None:
        out["pl"] = asdict(params_pl(replace(su.inputs, mu=args.mu), su.config.variant))
    print(json.dumps(out, indent=2, default=str))
    return 0


def cmd_verify(args):
    reports = default_battery(args.seed or 0)
    for report in reports:
        print(report.line())
    failed = sum(not r.passed for r in reports)
    print(f"{len(reports) - failed}/{len(reports)} passed")
    return 1 if failed else 0


def cmd_data_stats(args):
    stats = load_libsvm(args.path).stats()
    print(json.dumps(stats, indent=2, default=float))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="dasha-pp", description="DASHA-PP simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="INI experiment config")
        p.add_argument("--seed", type=int, help="override the seed list with one seed")
        if out:
            p.add_argument("--out", help=f"output directory (default ${{DASHA_PP_OUTPUT_DIR}} or ./dasha_pp_runs)")

    p = sub.add_parser("run", help="run an experiment and write CSV metrics")
    common(p)
    p.add_argument("--gamma", type=float, help="fixed step size")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("tune", help="grid-search the step size over 2^i, i in [-10, 10]")
    common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("params", help="print theory parameters for a config")
    common(p, out=False)
    p.add_argument("--mu", type=float, help="also report the P-L step size for this mu")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("verify", help="run the brute-force identity checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("data", help="dataset utilities")
    data_sub = p.add_subparsers(dest="data_command", required=True)
    q = data_sub.add_parser("stats", help="summary statistics of a LIBSVM file")
    q.add_argument("path")
    q.set_defaults(func=cmd_data_stats)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (DashaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
