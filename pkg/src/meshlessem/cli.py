"""Command-line interface.

Subcommands: run, stability, sweep-alpha, report-sparsity.  Exit codes:
0 success, 1 configuration error, 2 numerical divergence, 3 solver failure.
"""

import argparse
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, DivergenceError, MeshlessEmError, SolverError
from .reports import (
    alpha_sweep,
    sparsity_report,
    sparsity_table_lines,
    stability_report_for,
    sweep_table_lines,
)
from .runner import run_scenario


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg.override("discretization", "seed", args.seed)
    if getattr(args, "dt_factor", None) is not None:
        cfg.override("solver", "dt_factor", args.dt_factor)
    if getattr(args, "solver", None) is not None:
        cfg.override("solver", "type", args.solver)
    if getattr(args, "sign_mode", None) is not None:
        cfg.override("solver", "sign_mode", args.sign_mode)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="meshlessem",
                                     description="Meshless time-domain Maxwell solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--dt-factor", dest="dt_factor", type=float)
    p_run.add_argument("--solver", choices=["explicit-spem", "laf-spem", "fdtd"])
    p_run.add_argument("--sign-mode", dest="sign_mode",
                       choices=["standard-plus", "literal-paper"])

    p_st = sub.add_parser("stability", help="print the stability report of a scenario")
    p_st.add_argument("--config", required=True)
    p_st.add_argument("--seed", type=int)
    p_st.add_argument("--dt-factor", dest="dt_factor", type=float)
    p_st.add_argument("--solver", choices=["explicit-spem", "laf-spem", "fdtd"])

    p_sw = sub.add_parser("sweep-alpha", help="L2 error against FDTD for a list of alphas")
    p_sw.add_argument("--config", required=True)
    p_sw.add_argument("--alphas", required=True, help="comma-separated list")
    p_sw.add_argument("--seed", type=int)

    p_sp = sub.add_parser("report-sparsity", help="sparsity of the implicit E-block vs N")
    p_sp.add_argument("--sizes", required=True, help="comma-separated particle counts")
    p_sp.add_argument("--alpha", type=float, default=0.7075)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            _apply_overrides(cfg, args)
            art = run_scenario(cfg, out_dir=args.out, want_stability=True)
            print(f"completed {art.steps} steps; artifacts in {args.out}")
            return 0
        if args.command == "stability":
            cfg = load_config(args.config)
            _apply_overrides(cfg, args)
            rep, dt, warn = stability_report_for(cfg)
            for line in rep.lines():
                print(line)
            if warn:
                print("WARNING: explicit solver configured with dt above the stability bound")
            return 0
        if args.command == "sweep-alpha":
            cfg = load_config(args.config)
            _apply_overrides(cfg, args)
            alphas = [float(tok) for tok in args.alphas.split(",") if tok]
            rows = alpha_sweep(cfg, alphas)
            for line in sweep_table_lines(rows):
                print(line)
            return 0
        if args.command == "report-sparsity":
            sizes = [int(tok) for tok in args.sizes.split(",") if tok]
            rows = sparsity_report(sizes, alpha=args.alpha)
            for line in sparsity_table_lines(rows):
                print(line)
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 2
    except (SolverError, MeshlessEmError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
