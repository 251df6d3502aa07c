"""Command-line entry point: ``brokensample <command> [options]``.

Exit codes: 0 success, 1 usage or config error, 2 oracle-check failure,
3 numeric failure during a run.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import (BrokenSampleError, ConfigError, DegenerateCV, MissingInput,
                     NonFiniteLoss, NonFiniteObjective)
from .experiments.config import DEFAULT_CONFIGS, ExperimentConfig, load_config
from .experiments.oracles import run_oracle_checks
from .experiments.plotting import render_svg
from .experiments.runners import (run_cv_sweep, run_limit_convergence, run_loss_curves,
                                  run_simulate)

EXIT_OK, EXIT_USAGE, EXIT_ORACLE, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("brokensample")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    # Global flags are accepted both before and after the subcommand.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS,
                        help="JSON experiment config (default: built-in per command)")
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS,
                        help="master seed, overrides the config")
    common.add_argument("--out-dir", type=Path, default=argparse.SUPPRESS,
                        help="output directory, overrides the config")
    common.add_argument("--threads", type=_nonneg, default=argparse.SUPPRESS,
                        help="worker threads for replicates, 0 = all cores (default 1)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="brokensample", parents=[common],
                     description="Broken-sample pseudo-likelihood experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("simulate", parents=[common], help="estimate on one (M, N) cell")
    p.add_argument("-M", type=_positive, help="batch size (default: first of M_list)")
    p.add_argument("-N", type=_positive, help="batch count (default: first of N_list)")
    sub.add_parser("loss-curve", parents=[common], help="pseudo-loss curves and limit curve")
    sub.add_parser("cv", parents=[common], help="coefficient-of-variation sweep")
    sub.add_parser("limit-convergence", parents=[common],
                   help="exact expected loss vs. its large-M limit")
    sub.add_parser("oracle-check", parents=[common], help="run the self-consistency checks")
    sub.add_parser("render", parents=[common], help="draw SVG figures from existing CSV files")
    return parser


def _config(args) -> ExperimentConfig:
    path = getattr(args, "config", None)
    cfg = load_config(path) if path else ExperimentConfig.from_dict(
        DEFAULT_CONFIGS.get(args.command, DEFAULT_CONFIGS["simulate"]))
    return cfg.with_overrides(seed=getattr(args, "seed", None),
                              out_dir=getattr(args, "out_dir", None))


def _maybe_render(cfg: ExperimentConfig, kind: str):
    if "svg" in cfg.formats:
        for f in render_svg(cfg.out_dir, kinds=[kind]):
            log.info("wrote %s", f)


def run(args) -> int:
    cfg = _config(args)
    threads = getattr(args, "threads", 1)
    cmd = args.command
    if cmd == "simulate":
        res = run_simulate(cfg, M=args.M, N=args.N, threads=threads)
        for s in res.summary:
            print(f"theta*={s.theta_star:g} M={s.M} N={s.N}: mean={s.mean:.6g} "
                  f"median_abs_err={s.median_abs_err:.3g}")
        _maybe_render(cfg, "simulate")
    elif cmd == "loss-curve":
        run_loss_curves(cfg, threads=threads)
        _maybe_render(cfg, "loss_curve")
    elif cmd == "cv":
        res = run_cv_sweep(cfg, threads=threads)
        for s in res.summary:
            print(f"theta*={s.theta_star:g} M={s.M} N={s.N}: cv={s.cv:.4g}")
        _maybe_render(cfg, "cv")
    elif cmd == "limit-convergence":
        table = run_limit_convergence(cfg)
        for th in table.thetas:
            print(f"theta={th:g}: slope={table.slopes[th]:.3f}")
        _maybe_render(cfg, "limit_convergence")
    elif cmd == "oracle-check":
        results = run_oracle_checks(cfg)
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.check}: "
                  f"max_deviation={r.max_deviation:.3g} tolerance={r.tolerance:g}")
        if not all(r.passed for r in results):
            return EXIT_ORACLE
    elif cmd == "render":
        for f in render_svg(cfg.out_dir):
            print(f)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (NonFiniteLoss, NonFiniteObjective, DegenerateCV) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, MissingInput, BrokenSampleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
