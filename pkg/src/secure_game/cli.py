"""Command-line entry point: ``secure-game {compare,bench,kernel,solve}``.

Exit codes: 0 success, 1 numerical failure, 2 invalid input, 3 budget overrun.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

EXIT_OK, EXIT_NUMERIC, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2, 3

log = logging.getLogger("secure_game")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    p = argparse.ArgumentParser(prog="secure-game", description="Hybrid stochastic game for attack-aware subsystem switching.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="scenario JSON (default: built-in batch reactor)")
        sp.add_argument("--out", help="output directory (default: output_dir from the scenario)")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--backend", choices=["python", "compiled"], help="matrix-game kernel backend")

    c = sub.add_parser("compare", help="solve the game and compare policies")
    common(c, config_required=False)
    c.add_argument("--alg", choices=["mh", "subopt", "both"], help="algorithms to run")
    c.add_argument("--budget", type=int, help="pure-history budget for the exhaustive algorithm")
    c.add_argument("--rollouts", type=int, help="Monte Carlo rollouts per policy")
    c.add_argument("--kernel", help="transition kernel CSV to use instead of estimating one")

    b = sub.add_parser("bench", help="wall-clock scaling of both algorithms")
    common(b, config_required=False)
    b.add_argument("--k-list", type=_int_list, default=[20, 50, 100, 500])
    b.add_argument("--k-list-subopt", type=_int_list, default=[2, 3, 4, 5])
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--budget", type=int)

    k = sub.add_parser("kernel", help="estimate the transition kernel and write it as CSV")
    common(k, config_required=False)
    k.add_argument("--trials", type=int, help="Monte Carlo trials per action pair")

    s = sub.add_parser("solve", help="solve one zero-sum matrix game (row player maximizes)")
    s.add_argument("matrix", help="CSV file with the payoff matrix, one row per line")
    s.add_argument("--backend", choices=["python", "compiled"])
    return p


def _load_config(args):
    from .scenario import builtin_scenario_path, load_scenario

    cfg = load_scenario(args.config or builtin_scenario_path())
    overrides = {"seed": args.seed}
    for key in ("budget", "algorithm"):
        val = getattr(args, "alg" if key == "algorithm" else key, None)
        overrides[key] = val
    return cfg.with_overrides(**overrides)


def _outdir(args, cfg):
    out = args.out or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def cmd_compare(args):
    from .detection import TransitionKernel
    from .experiments import emit_plot_data, run_comparison, write_summary
    from .scenario import build_scenario

    cfg = _load_config(args)
    kernel = TransitionKernel.from_csv(args.kernel) if args.kernel else None
    scn = build_scenario(cfg, kernel)
    out = _outdir(args, cfg)
    report = run_comparison(scn, n_rollouts=args.rollouts, backend=args.backend)
    scn.game.kernel.to_csv(os.path.join(out, "kernel.csv"))
    emit_plot_data(report, out)
    write_summary(report, os.path.join(out, "summary.json"))
    for name, pol in report.policies.items():
        print(f"{name:16s} total={pol.total:.6g} se={pol.total_se:.3g} final_p_safe={pol.final_p_safe:.4f}")
    if report.skipped and cfg.algorithm == "subopt":
        for msg in report.skipped.values():
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_bench(args):
    from .experiments import run_scaling_benchmark, write_scaling
    from .scenario import build_scenario

    cfg = _load_config(args)
    scn = build_scenario(cfg)
    rows = run_scaling_benchmark(scn, args.k_list, args.k_list_subopt, repeats=args.repeats, budget=args.budget)
    write_scaling(rows, os.path.join(_outdir(args, cfg), "scaling.csv"))
    for alg, K, t, n in rows:
        print(f"{alg:16s} K={K:<4d} time={t:.4g}s solves={n}")
    return EXIT_OK


def cmd_kernel(args):
    from .scenario import build_scenario

    cfg = _load_config(args)
    if args.trials:
        cfg = cfg.with_overrides(mc={**cfg.mc, "kernel_trials": args.trials})
    scn = build_scenario(cfg)
    out = _outdir(args, cfg)
    path = os.path.join(out, "kernel.csv")
    scn.game.kernel.to_csv(path)
    print(path)
    return EXIT_OK


def cmd_solve(args):
    import numpy as np

    from .errors import ParseError
    from .matrix_game import solve_zero_sum

    try:
        Q = np.loadtxt(args.matrix, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{args.matrix}: {exc}") from exc
    sol = solve_zero_sum(Q, backend=args.backend)
    print(f"value {sol.value!r}")
    print("attacker " + ",".join(repr(float(x)) for x in sol.f_star))
    print("system " + ",".join(repr(float(x)) for x in sol.g_star))
    return EXIT_OK


COMMANDS = {"compare": cmd_compare, "bench": cmd_bench, "kernel": cmd_kernel, "solve": cmd_solve}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    from .errors import BudgetExceeded, DimensionMismatch, NumericalFailure, ScenarioError

    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, DimensionMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
