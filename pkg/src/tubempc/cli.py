"""Command-line entry point.

Commands: generate-data, estimate, compare, sweep-naive, selftest.
Exit codes: 0 success, 1 usage error, 2 property/acceptance failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import sys as _sys

from .config import BUILTIN_CONFIGS, ExperimentConfig
from .errors import UsageError
from . import runner

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PROPERTY = 2
EXIT_IO = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tubempc",
        description="Robust learning-based MPC experiments",
    )
    parser.add_argument("--config", help="JSON config file; omit for the "
                        "builtin cube-root benchmark")
    parser.add_argument("--builtin", choices=sorted(BUILTIN_CONFIGS),
                        default="cuberoot",
                        help="builtin config when --config is not given")
    parser.add_argument("--out", help="output directory (default: config's "
                        "output_dir)")
    parser.add_argument("--seed", type=int, help="override: run only this "
                        "seed (and reseed the dataset for generate-data)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel runs for compare/sweep-naive")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate-data", help="sample a transition dataset")
    est = sub.add_parser("estimate", help="estimation diagnostics over a grid")
    est.add_argument("--dataset", help="existing dataset CSV (else sampled)")
    sub.add_parser("compare", help="run the configured controllers over the "
                   "configured seeds with paired noise")
    sub.add_parser("sweep-naive", help="naive-controller tolerance sweep")
    sub.add_parser("selftest", help="module property suites")
    return parser


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json_file(args.config)
    else:
        cfg = BUILTIN_CONFIGS[args.builtin]()
    if args.seed is not None:
        cfg.run.seeds = [int(args.seed)]
        if args.command == "generate-data":
            cfg.dataset.seed = int(args.seed)
    return cfg


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        out = args.out if args.out else cfg.output_dir
        if args.command == "generate-data":
            res = runner.cmd_generate_data(cfg, out)
            print(f"wrote {res['records']} records to {res['dataset']}")
        elif args.command == "estimate":
            res = runner.cmd_estimate(cfg, out, dataset_path=args.dataset)
            print(f"wrote {res['csv']} and {res['svg']}")
        elif args.command == "compare":
            res = runner.cmd_compare(cfg, out, jobs=args.jobs)
            print("controller, runs, success_rate, mean_cost, "
                  "mean_steps_to_goal, safety_fallbacks")
            for row in res["summary"]:
                print(", ".join(str(v) for v in row))
            print(f"outputs in {res['out']}")
        elif args.command == "sweep-naive":
            res = runner.cmd_sweep_naive(cfg, out, jobs=args.jobs)
            print(f"proposed mean cost: {res['proposed_mean_cost']:.2f}")
            print("tol, runs, success_rate, mean_cost, cost_ratio_vs_proposed")
            for row in res["rows"]:
                print(", ".join(f"{v:.4g}" if isinstance(v, float) else str(v)
                                for v in row))
            print(f"outputs in {res['out']}")
        elif args.command == "selftest":
            res = runner.cmd_selftest(cfg, out if args.out else None)
            print(res["report"], end="")
            if not res["passed"]:
                return EXIT_PROPERTY
    except UsageError as exc:
        print(f"usage error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=_sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
