#!/usr/bin/env python3
"""
Command line front end for the regret toolkit.

Subcommands:
  solve    exact Q*/V* for an environment
  run      run a configured experiment and write raw + aggregate CSVs
  compare  regret summary across aggregate CSVs
  gen-env  write an environment to the MDP JSON format
  plot     SVG of mean per-episode regret with CI bands

Exit codes: 0 success, 2 user/input error, 3 internal invariant violation.
"""

import argparse
import logging
import os
import sys
from datetime import datetime

import numpy as np
from dotenv import load_dotenv

from envs import EnvKind, build_env, parse_recipe
from exact_solver import DEFAULT_BRUTE_FORCE_CAP, OracleCapExceeded, brute_force_optimal, save_tables, solve_optimal
from harness import (ConfigError, ExperimentConfig, aggregate_by_variant, export_csv,
                     read_aggregate_csv, regret_summary, resolve_spec, run_experiment, theoretical_bounds)
from mdp_core import InvariantViolation, MdpStructureError, MdpValidationError, save_mdp, validate_mdp
from plotting import write_svg

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USER_ERROR = 2
EXIT_INVARIANT = 3

USER_ERRORS = (ConfigError, MdpStructureError, MdpValidationError, OracleCapExceeded,
               OSError, ValueError)


def setup_logging():
    """Console logging, plus a log file when RL_LOG_FILE is set"""
    handlers = [logging.StreamHandler()]
    log_file = os.getenv('RL_LOG_FILE')
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, os.getenv('RL_LOG_LEVEL', 'INFO').upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def banner(title):
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def format_values(values):
    return "(" + ", ".join(f"{v:.6g}" for v in values) + ")"


class ExperimentPipeline:
    def __init__(self, config: ExperimentConfig, config_name: str, out_dir: str, jobs: int = 1):
        self.config = config
        self.config_name = config_name
        self.out_dir = out_dir
        self.jobs = jobs
        self.spec = None
        self.results = None
        self.aggregates = None

    def run_setup_phase(self):
        """Build and validate the environment"""
        banner("PHASE 1: ENVIRONMENT")
        self.spec = resolve_spec(self.config)
        S, A, H = self.spec.dims
        print(f"Environment: {self.config.env} (S={S}, A={A}, H={H})")
        print(f"Initial distribution: {format_values(self.spec.initial_dist)}")

    def run_learning_phase(self):
        """Run every variant for num_runs seeded runs"""
        banner("PHASE 2: LEARNING")
        print(f"Variants: {', '.join(self.config.variants)}")
        print(f"K={self.config.K}, runs={self.config.num_runs}, p={self.config.p}, c={self.config.c}, "
              f"base_seed={self.config.base_seed}")
        self.results = run_experiment(self.config, self.spec, jobs=self.jobs)

    def run_aggregation_phase(self):
        """Aggregate runs and write both CSVs"""
        banner("PHASE 3: AGGREGATION")
        self.aggregates = aggregate_by_variant(self.results)
        os.makedirs(self.out_dir, exist_ok=True)
        raw_path = os.path.join(self.out_dir, f"{self.config_name}_raw.csv")
        aggregate_path = os.path.join(self.out_dir, f"{self.config_name}_aggregate.csv")
        export_csv(self.results, raw_path, kind="raw")
        export_csv(self.aggregates, aggregate_path, kind="aggregate")
        for variant, agg in self.aggregates.items():
            print(f"  {variant:<14} total regret {agg.total_regret_mean:10.4f} +/- {agg.total_regret_ci:.4f}")
        print(f"\nOutput files:")
        print(f"  - Raw runs:   {raw_path}")
        print(f"  - Aggregates: {aggregate_path}")
        return raw_path, aggregate_path

    def run_full_pipeline(self):
        start_time = datetime.now()
        print("Starting regret experiment")
        print(f"Started at: {start_time}")
        self.run_setup_phase()
        self.run_learning_phase()
        paths = self.run_aggregation_phase()
        print(f"\nTotal execution time: {datetime.now() - start_time}")
        return paths


def cmd_solve(args) -> int:
    spec = build_env(args.env)
    report = validate_mdp(spec)
    if not report.ok:
        print(f"Invalid MDP ({len(report.violations)} violation(s)):")
        for violation in report.violations:
            print(f"  - {violation}")
        return EXIT_USER_ERROR

    tables = solve_optimal(spec)
    print(f"V*_1 = {format_values(tables.V[0])}")
    for x in range(spec.num_states):
        print(f"  Q*_1(x{x + 1}, .) = {format_values(tables.Q[0, x])}")

    if args.check:
        oracle = brute_force_optimal(spec, cap=int(os.getenv('RL_BRUTE_FORCE_CAP', DEFAULT_BRUTE_FORCE_CAP)))
        gap = float(np.max(np.abs(oracle.V - tables.V)))
        print(f"Brute-force oracle max |dV| = {gap:.3e}")
        if gap > 1e-9:
            raise InvariantViolation(f"backward induction disagrees with enumeration by {gap}")

    if args.out:
        save_tables(tables, args.out)
        print(f"Wrote Q*/V* to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    if not os.path.exists(args.config):
        print(f"Config file not found: {args.config}")
        return EXIT_USER_ERROR
    config = ExperimentConfig.from_json(args.config)
    if args.runs is not None:
        config.num_runs = args.runs
    if args.K is not None:
        config.K = args.K
    if args.seed is not None:
        config.base_seed = args.seed
    config.validate()

    name = os.path.splitext(os.path.basename(args.config))[0]
    out_dir = args.out_dir or os.getenv('RL_RESULTS_DIR', 'results')
    jobs = args.jobs if args.jobs is not None else int(os.getenv('RL_JOBS', '1'))
    ExperimentPipeline(config, name, out_dir, jobs=jobs).run_full_pipeline()
    return EXIT_OK


def cmd_compare(args) -> int:
    aggregates = {}
    for path in args.csv:
        for variant, agg in read_aggregate_csv(path).items():
            if variant in aggregates:
                raise ConfigError(f"variant {variant} appears in more than one CSV")
            aggregates[variant] = agg

    lengths = {agg.K for agg in aggregates.values()}
    if len(lengths) != 1:
        raise ConfigError(f"CSVs disagree on K: {sorted(lengths)}")

    summary = regret_summary(aggregates, threshold=args.threshold)
    banner("REGRET SUMMARY")
    print(f"{'variant':<14} {'total regret':>14} {'PER < ' + str(summary.threshold) + ' from':>18}")
    for variant in aggregates:
        episode = summary.first_converged_episode[variant]
        print(f"{variant:<14} {summary.total_regret_mean[variant]:>14.4f} "
              f"{(str(episode) if episode is not None else 'never'):>18}")
    if len(aggregates) > 1:
        print(f"\nOrdering by total regret: {' < '.join(summary.ordering)}")

    if args.config:
        config = ExperimentConfig.from_json(args.config)
        bounds = theoretical_bounds(resolve_spec(config), config)
        print("\nRegret-bound scales (constants omitted):")
        for variant, value in bounds.items():
            print(f"  {variant:<14} {value:12.2f}")
    return EXIT_OK


def cmd_gen_env(args) -> int:
    recipe = parse_recipe(args.env)
    spec = build_env(recipe)
    decimals = 6 if recipe.kind is EnvKind.RANDOM else None
    save_mdp(spec, args.out, decimals=decimals)
    print(f"Wrote {recipe.describe()} (S={spec.num_states}, A={spec.num_actions}, H={spec.horizon}) to {args.out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    aggregates = read_aggregate_csv(args.csv)
    write_svg(aggregates, args.out, smooth=args.smooth)
    print(f"Wrote {args.out} ({len(aggregates)} curve(s))")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(description='Tabular UCB-Hoeffding Q-learning regret toolkit')
    subparsers = parser.add_subparsers(dest='command', required=True)

    solve = subparsers.add_parser('solve', help='Exact Q*/V* by backward induction')
    solve.add_argument('--env', required=True, help="Recipe (gridworld3, chain:S=5,H=6, random:seed=7,S=3,A=2,H=3) "
                                                    "or MDP JSON path")
    solve.add_argument('--out', help='Write Q*/V* JSON here')
    solve.add_argument('--check', action='store_true', help='Cross-check against the brute-force oracle')
    solve.set_defaults(handler=cmd_solve)

    run = subparsers.add_parser('run', help='Run an experiment config')
    run.add_argument('--config', required=True, help='Experiment config JSON')
    run.add_argument('--runs', type=int, help='Override num_runs')
    run.add_argument('--K', type=int, help='Override the episode count')
    run.add_argument('--seed', type=int, help='Override base_seed')
    run.add_argument('--jobs', type=int, help='Worker processes (default RL_JOBS or 1)')
    run.add_argument('--out-dir', help='Output directory (default RL_RESULTS_DIR or ./results)')
    run.set_defaults(handler=cmd_run)

    compare = subparsers.add_parser('compare', help='Regret summary of aggregate CSVs')
    compare.add_argument('--csv', nargs='+', required=True, help='Aggregate CSV files')
    compare.add_argument('--threshold', type=float, default=0.05, help='Convergence threshold on mean PER')
    compare.add_argument('--config', help='Experiment config, to print the regret-bound scales')
    compare.set_defaults(handler=cmd_compare)

    gen_env = subparsers.add_parser('gen-env', help='Write an environment as MDP JSON')
    gen_env.add_argument('--env', required=True, help='Environment recipe')
    gen_env.add_argument('--out', required=True, help='Output JSON path')
    gen_env.set_defaults(handler=cmd_gen_env)

    plot = subparsers.add_parser('plot', help='SVG of mean PER curves with 95% CI bands')
    plot.add_argument('--csv', required=True, help='Aggregate CSV file')
    plot.add_argument('--out', required=True, help='Output SVG path')
    plot.add_argument('--smooth', type=int, help='Trailing moving-average window')
    plot.set_defaults(handler=cmd_plot)

    return parser


def main(argv=None) -> int:
    """Main function with command line interface"""
    load_dotenv()
    setup_logging()
    args = build_parser().parse_args(argv)

    try:
        return args.handler(args)
    except KeyboardInterrupt:
        print("\nInterrupted by user.")
        return EXIT_USER_ERROR
    except InvariantViolation as e:
        logger.error(f"Invariant violation: {e}")
        return EXIT_INVARIANT
    except USER_ERRORS as e:
        print(f"Error: {e}")
        return EXIT_USER_ERROR


if __name__ == "__main__":
    sys.exit(main())
