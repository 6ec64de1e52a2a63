import argparse
import sys
from typing import Optional, Sequence

from config.logging_config import PipelineLogger, setup_logging
from config.settings import LOG_COLORS, LOG_DIR, LOG_LEVEL, OUTPUT_DIR, THREADS, load_run_config
from pipeline import COMMANDS, GofPipeline, report_error
from utils.exceptions import GofError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='gof',
        description="Residual diagnostics and goodness-of-fit tests for stationary marked Gibbs point processes.")
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--config', required=True, help="run config file (key=value lines)")
    parser.add_argument('--input', help="observed pattern CSV (x,y[,z][,mark])")
    parser.add_argument('--output', default=OUTPUT_DIR, help="directory for JSON/CSV artifacts")
    parser.add_argument('--threads', type=int, default=THREADS)
    parser.add_argument('--test', choices=('t1', 't1tilde', 't2tilde'))
    parser.add_argument('--h', dest='h', help="test functions, e.g. 'inverse' or 'empty:0.02,0.04+pearson'")
    parser.add_argument('--subdomains', type=int)
    parser.add_argument('--alpha', type=float)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--replicates', type=int)
    parser.add_argument('--log-level', default=LOG_LEVEL)
    return parser


def config_overrides(args: argparse.Namespace) -> dict:
    return {
        'input': args.input,
        'test': args.test,
        'h': args.h,
        'cov.subdomains': args.subdomains,
        'alpha': args.alpha,
        'sampler.seed': args.seed,
        'sampler.replicates': args.replicates,
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Command-line entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)

    # Setup logging first
    setup_logging(level=args.log_level, use_colors=LOG_COLORS, log_dir=LOG_DIR)
    logger = PipelineLogger(__name__)

    try:
        run_config = load_run_config(args.config, config_overrides(args))
    except GofError as e:
        logger.error("load run config", e, args.config)
        report_error(e, args.output, args.command)
        return e.exit_code

    pipeline = GofPipeline(run_config, args.output, args.threads)
    return pipeline.run(args.command, run_config.input)


if __name__ == "__main__":
    sys.exit(main())
