import argparse
import atexit
import signal
import sys

from modules import artifacts
from modules.config import apply_overrides, get_config, read_config
from modules.errors import ConfigError
from modules.experiment import EXIT_CONFIG, experiment_config_from_dict, run_experiment
from modules.logger import setup_logger

logger = setup_logger()


def cleanup_resources():
    """Remove half-written artifact directories."""
    try:
        artifacts.cleanup_staging()
    except Exception as e:
        logger.error(f"Error removing staging directories: {e}", exc_info=True)


def signal_handler(sig, frame):
    logger.info("Received shutdown signal. Exiting...")
    cleanup_resources()
    sys.exit(128 + sig)


# Register cleanup function to be called on normal exit
atexit.register(cleanup_resources)


def _alpha(text):
    return text if text.strip().lower() == 'auto' else float(text)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="semtrack",
        description="Track a time-varying sparse SEM topology online and measure its dynamic regret.",
    )
    parser.add_argument("--config", help="JSON or KEY=value configuration file")

    gen = parser.add_argument_group("generator")
    gen.add_argument("--n", dest="N", type=int, help="number of nodes")
    gen.add_argument("--c", dest="C", type=int, help="samples per step")
    gen.add_argument("--t", dest="T", type=int, help="number of steps")
    gen.add_argument("--pe", dest="PE", type=float, help="edge probability")
    gen.add_argument("--sigma", dest="SIGMA", type=float, help="noise covariance scale")
    gen.add_argument("--regime", dest="REGIME", choices=("smooth", "abrupt", "both"))
    gen.add_argument("--seed", dest="SEED", type=int)
    gen.add_argument("--repeat", dest="REPEAT", type=int, help="runs per regime, seeds seed..seed+repeat-1")

    algo = parser.add_argument_group("algorithm")
    algo.add_argument("--lambda", dest="LAMBDA", type=float, help="l1 weight")
    algo.add_argument("--gamma", dest="GAMMA", type=float, help="forgetting factor in (0, 1)")
    algo.add_argument("--alpha", dest="ALPHA", type=_alpha, help="'auto' or a positive step size")
    algo.add_argument("--tol", dest="SOLVER_TOL", type=float, help="hindsight solver tolerance")
    algo.add_argument("--max-iter", dest="SOLVER_MAX_ITER", type=int, help="hindsight solver iteration cap")
    algo.add_argument("--stride-eig", dest="STRIDE_EIG", type=int, help="eigen-decompose every k-th step")
    algo.add_argument("--t-burn", dest="T_BURN", type=int, help="burn-in length (0 = automatic)")
    algo.add_argument("--workers", dest="WORKERS", type=int, help="threads across nodes")

    io = parser.add_argument_group("input/output")
    io.add_argument("--out", dest="OUTPUT_DIR", help="artifact directory")
    io.add_argument("--emit-svg", dest="EMIT_SVG", action="store_true", default=None)
    io.add_argument("--no-svg", dest="EMIT_SVG", action="store_false")
    io.add_argument("--emit-png", dest="EMIT_PNG", action="store_true", default=None)
    io.add_argument("--data-y", dest="DATA_Y", help="directory of Y_tNNNN.csv files")
    io.add_argument("--data-x", dest="DATA_X", help="X.csv")
    io.add_argument("--data-truth", dest="DATA_TRUTH", help="ground_truth.csv of the ingested stream")
    io.add_argument("--checkpoint", dest="CHECKPOINT", action="store_true", default=None,
                    help="save the final tracker state to checkpoint.json")
    io.add_argument("--resume", dest="RESUME_FROM", help="checkpoint.json to continue from")
    io.add_argument("--log-level", dest="LOG_LEVEL")
    io.add_argument("--log-file", dest="LOG_FILE")
    return parser


def main(argv=None):
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)

    args = vars(build_parser().parse_args(argv))
    config_path = args.pop("config")
    try:
        config = apply_overrides(read_config(config_path), args)
        setup_logger(
            log_level=get_config(config, 'LOG_LEVEL'),
            log_file=get_config(config, 'LOG_FILE') or None,
            max_bytes=get_config(config, 'LOG_MAX_BYTES'),
            backup_count=get_config(config, 'LOG_BACKUP_COUNT'),
        )
        experiment = experiment_config_from_dict(config)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    logger.info("semtrack starting...")
    return run_experiment(experiment)


if __name__ == '__main__':
    sys.exit(main())
