"""
Command-line entry point for the Rexp3 non-stationary bandit lab

    python main.py run --config configs/stage_one_sinusoidal_desk.json
    python main.py sweep-beta --config configs/stage_two_desk.json --workers 4
    python main.py analyze --input results/stage_one_sinusoidal/grid.csv
"""
import argparse
import os
import sys
from typing import List, Optional

from loguru import logger
from pydantic import ValidationError

# Add current directory to Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from config import Settings, get_settings
from services.analysis import published_slope_table, slope_of_slopes, slope_table_text
from services.experiment_runner import (
    ExperimentRunner, analyze_file, config_error, format_report, load_experiment_config, resolve_runtime,
)
from utils.errors import BudgetRangeError, InvalidConfigError
from utils.logger import setup_logging

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rexp3-lab",
        description="Rexp3 regret experiments under a variation budget",
    )
    parser.add_argument("--workers", type=_positive_int, default=None,
                        help="Worker processes for replications (overrides REXP3_WORKERS and the config)")
    parser.add_argument("--seed", type=_seed, default=None, help="Override the config's master seed")
    parser.add_argument("--output-dir", default=None,
                        help="Override the output directory (overrides REXP3_OUTPUT_DIR and the config)")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    parser.add_argument("--no-progress", action="store_true", help="Disable progress bars")

    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Stage one: regret over a horizon grid")
    run.add_argument("--config", required=True, help="Experiment config (JSON)")

    sweep_beta = commands.add_parser("sweep-beta", help="Stage two: slope table over a beta grid")
    sweep_beta.add_argument("--config", required=True, help="Experiment config with beta_grid (JSON)")

    analyze = commands.add_parser("analyze", help="Log-log fit of a stored grid or slope table CSV")
    analyze.add_argument("--input", default=None, help="grid.csv or slope_table.csv")
    analyze.add_argument("--output", default=None, help="JSON report path (default <input>_analysis.json)")
    analyze.add_argument("--published", action="store_true",
                         help="Report the published stage-two slope table and its slope of slopes")
    return parser


def load_settings() -> Settings:
    """Environment overrides (REXP3_*), validated like the config file"""
    try:
        return get_settings()
    except ValidationError as e:
        error = config_error(e)
        raise InvalidConfigError(f"REXP3_{(error.field or '').upper()}: {error}", field=error.field) from e


def _prepare(args: argparse.Namespace, settings: Settings) -> ExperimentRunner:
    config = load_experiment_config(args.config)
    config, workers = resolve_runtime(config, settings, workers=args.workers, seed=args.seed,
                                      output_dir=args.output_dir)
    logger.info(f"Experiment '{config.name}': {config.instance.kind}, horizons={config.horizons}, "
                f"R={config.replications}, seed={config.master_seed}, workers={workers}")
    return ExperimentRunner(config, workers=workers, progress=settings.progress and not args.no_progress)


def cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    runner = _prepare(args, settings)
    points = runner.run()
    for point in points:
        print(f"T={point.horizon:>7d}  V_T={point.budget:<10.6g} final_regret={point.curve.final_regret:.6f} "
              f"+/- {point.curve.final_regret_stderr:.6f}")
    print(f"outputs: {runner.output_dir}")
    return EXIT_OK


def cmd_sweep_beta(args: argparse.Namespace, settings: Settings) -> int:
    runner = _prepare(args, settings)
    report = runner.sweep_beta()
    sos = report["slope_of_slopes"]
    print(report["table"])
    print(f"slope of slopes: {sos if isinstance(sos, str) else format(sos, '.4f')}")
    print(f"outputs: {runner.output_dir}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace, settings: Settings) -> int:
    if args.published:
        rows = published_slope_table()
        print(slope_table_text(rows))
        print(f"slope of slopes: {slope_of_slopes(rows):.4f}")
        if args.input is None:
            return EXIT_OK
    if args.input is None:
        raise InvalidConfigError("analyze needs --input (or --published)", field="input")
    report = analyze_file(args.input, args.output)
    print(format_report(report))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep-beta": cmd_sweep_beta,
    "analyze": cmd_analyze,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run one command and map failures to exit codes

    Returns:
        0 on success, 2 on a config error, 3 on a runtime error
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        settings = load_settings()
        setup_logging(level=args.log_level or settings.log_level, log_file=settings.log_file)
        return COMMANDS[args.command](args, settings)
    except ValidationError as e:
        error = config_error(e)
        logger.error(f"Config error: {error}")
        print(f"error: {error}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (InvalidConfigError, BudgetRangeError) as e:
        logger.error(f"Config error: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except Exception as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
