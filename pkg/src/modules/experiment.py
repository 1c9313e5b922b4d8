"""
End-to-end experiment runner: generate (or ingest) -> track -> hindsight -> report -> plots.
"""
import platform
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from modules import artifacts
from modules.config import get_config
from modules.errors import ArtifactError, ConfigError, DegenerateData, DimensionMismatch, NonFiniteValue
from modules.hindsight import DEFAULT_MAX_ITER, DEFAULT_TOL, comparator_trace
from modules.logger import get_logger
from modules.metrics import build_report, moment_spectrum
from modules.model import PRNG_ALGORITHM, GeneratorConfig, GroundTruth, Regime, generate_run
from modules.plots import emit_plots
from modules.tracker import (
    AlgoConfig, TopologyTracker, accumulate_moments, assemble_snapshot, load_checkpoint, save_checkpoint,
)

logger = get_logger(__name__)

AUTO_ALPHA = "auto"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NON_FINITE = 3
EXIT_IO = 4


@dataclass(frozen=True)
class ExperimentConfig:
    generator: Optional[GeneratorConfig]
    gamma: float = 0.9
    lambda_: float = 15.0
    alpha: Union[float, str] = AUTO_ALPHA
    output_dir: Path = Path("runs/latest")
    emit_svg: bool = True
    emit_png: bool = False
    data_in: Optional[Tuple[Path, Path]] = None
    truth_in: Optional[Path] = None
    checkpoint: bool = False
    resume_from: Optional[Path] = None
    stride_eig: int = 1
    regimes: Tuple[Regime, ...] = (Regime.SMOOTH,)
    repeat: int = 1
    t_burn: Optional[int] = None
    solver_tol: float = DEFAULT_TOL
    solver_max_iter: int = DEFAULT_MAX_ITER
    workers: int = 1

    def __post_init__(self):
        if (self.generator is None) == (self.data_in is None):
            raise ConfigError("Exactly one of generator settings or --data-y/--data-x must drive observations")
        if self.resume_from is not None and self.data_in is None:
            raise ConfigError("--resume continues an ingested stream; pass --data-y/--data-x")
        if self.alpha == AUTO_ALPHA and self.data_in is not None and self.resume_from is None:
            raise ConfigError("alpha=auto needs the full synthetic stream; pass --alpha <value> with --data-y")
        if self.alpha != AUTO_ALPHA:
            AlgoConfig(gamma=self.gamma, lambda_=self.lambda_, alpha=float(self.alpha))
        else:
            AlgoConfig(gamma=self.gamma, lambda_=self.lambda_, alpha=1.0)
        if self.stride_eig < 1:
            raise ConfigError(f"stride_eig must be >= 1, got {self.stride_eig}")
        if self.repeat < 1:
            raise ConfigError(f"repeat must be >= 1, got {self.repeat}")
        if not self.solver_tol > 0.0 or self.solver_max_iter < 1:
            raise ConfigError("solver tolerance must be > 0 and max_iter >= 1")
        if self.data_in is not None and (self.repeat > 1 or len(self.regimes) > 1):
            raise ConfigError("repeat and regime=both apply to synthetic runs only")
        if self.truth_in is not None and self.data_in is None:
            raise ConfigError("--data-truth replays ground truth for --data-y/--data-x runs only")

    @property
    def multi_run(self):
        return self.repeat > 1 or len(self.regimes) > 1

    def run_configs(self):
        """Generator configs of every run, regimes outermost, seeds innermost."""
        if self.generator is None:
            return [None]
        base = self.generator
        return [replace(base, regime=regime, seed=base.seed + k)
                for regime in self.regimes for k in range(self.repeat)]

    def algo_config(self, alpha):
        return AlgoConfig(gamma=self.gamma, lambda_=self.lambda_, alpha=alpha)

    def describe(self):
        """Plain-JSON description for metadata.json."""
        return {
            "generator": None if self.generator is None else {
                **asdict(self.generator), "regime": self.generator.regime.value},
            "gamma": self.gamma, "lambda": self.lambda_, "alpha": self.alpha,
            "emit_svg": self.emit_svg, "emit_png": self.emit_png,
            "data_in": None if self.data_in is None else [str(p) for p in self.data_in],
            "truth_in": None if self.truth_in is None else str(self.truth_in),
            "checkpoint": self.checkpoint,
            "resume_from": None if self.resume_from is None else str(self.resume_from),
            "stride_eig": self.stride_eig, "regimes": [r.value for r in self.regimes],
            "repeat": self.repeat, "t_burn": self.t_burn, "solver_tol": self.solver_tol,
            "solver_max_iter": self.solver_max_iter,
        }


def experiment_config_from_dict(config):
    """
    Build a validated ExperimentConfig from a flat configuration dictionary.

    Args:
        config: dict as returned by read_config / apply_overrides

    Returns:
        ExperimentConfig
    """
    data_y = get_config(config, 'DATA_Y')
    data_x = get_config(config, 'DATA_X')
    if bool(data_y) != bool(data_x):
        raise ConfigError("--data-y and --data-x must be given together")
    data_in = (Path(data_y), Path(data_x)) if data_y else None
    data_truth = get_config(config, 'DATA_TRUTH')
    resume_from = get_config(config, 'RESUME_FROM')

    regime = str(get_config(config, 'REGIME')).lower()
    if regime == 'both':
        regimes = (Regime.SMOOTH, Regime.ABRUPT)
    else:
        try:
            regimes = (Regime(regime),)
        except ValueError:
            raise ConfigError(f"Unknown regime: {regime!r}") from None

    generator = None
    if data_in is None:
        generator = GeneratorConfig(
            N=get_config(config, 'N'), C=get_config(config, 'C'), T=get_config(config, 'T'),
            p_e=get_config(config, 'PE'), sigma=get_config(config, 'SIGMA'),
            regime=regimes[0], seed=get_config(config, 'SEED'),
        )

    t_burn = get_config(config, 'T_BURN')
    return ExperimentConfig(
        generator=generator,
        gamma=get_config(config, 'GAMMA'),
        lambda_=get_config(config, 'LAMBDA'),
        alpha=get_config(config, 'ALPHA'),
        output_dir=Path(get_config(config, 'OUTPUT_DIR')),
        emit_svg=get_config(config, 'EMIT_SVG'),
        emit_png=get_config(config, 'EMIT_PNG'),
        data_in=data_in,
        truth_in=Path(data_truth) if data_truth else None,
        checkpoint=get_config(config, 'CHECKPOINT'),
        resume_from=Path(resume_from) if resume_from else None,
        stride_eig=get_config(config, 'STRIDE_EIG'),
        regimes=regimes,
        repeat=get_config(config, 'REPEAT'),
        t_burn=t_burn if t_burn > 0 else None,
        solver_tol=get_config(config, 'SOLVER_TOL'),
        solver_max_iter=get_config(config, 'SOLVER_MAX_ITER'),
        workers=get_config(config, 'WORKERS'),
    )


def resolve_alpha(moments):
    """
    Step size 1/L_f from a complete moment history (two-pass mode).

    Raises:
        DegenerateData: every moment matrix is zero
    """
    _, _, lam_max = moment_spectrum(moments)
    L_f = float(lam_max.max(initial=0.0))
    if not L_f > 0.0:
        raise DegenerateData("L_f = 0: the observation stream carries no energy")
    logger.info(f"Resolved alpha = 1/L_f = {1.0 / L_f:.6g} (L_f={L_f:.6g})")
    return 1.0 / L_f


@dataclass
class RunResult:
    label: str
    alpha: float
    estimates: np.ndarray
    report: object
    trace: object
    truth: object = None


class ExperimentRunner:
    """Executes every run of an ExperimentConfig and writes the artifact set."""

    def __init__(self, config):
        self.config = config

    def _load(self, gen_config):
        if gen_config is None:
            X, batches = artifacts.read_observations(*self.config.data_in)
            truth = None
            if self.config.truth_in is not None:
                truth = GroundTruth(artifacts.read_snapshots_csv(self.config.truth_in))
                if truth.T != len(batches) or truth.snapshots[0].N != X.shape[0]:
                    raise DimensionMismatch(f"{self.config.truth_in}: {truth.T} snapshots of {truth.snapshots[0].N} "
                                            f"nodes do not match {len(batches)} batches of {X.shape[0]} nodes")
            return truth, X, batches
        return generate_run(gen_config)

    def run_one(self, gen_config, out_dir):
        cfg = self.config
        truth, X, batches = self._load(gen_config)
        label = "ingested" if gen_config is None else f"{gen_config.regime.value}-seed{gen_config.seed}"

        if cfg.resume_from is not None:
            state = load_checkpoint(cfg.resume_from)
            alpha = state.config.alpha
            logger.info(f"Resuming from {cfg.resume_from} at t={state.t} with the checkpoint's gamma, lambda and alpha")
            tracker = TopologyTracker(X, state.config, workers=cfg.workers, state=state)
        else:
            if cfg.alpha == AUTO_ALPHA:
                alpha = resolve_alpha(accumulate_moments(batches, X, cfg.gamma))
            else:
                alpha = float(cfg.alpha)
            tracker = TopologyTracker(X, cfg.algo_config(alpha), workers=cfg.workers)
        estimate_snapshots = tracker.run(batches)
        moments = tracker.moments
        estimates = tracker.estimates

        trace = comparator_trace(moments, tracker.config.lambda_, tol=cfg.solver_tol,
                                 max_iter=cfg.solver_max_iter, workers=cfg.workers)
        v_true = None if truth is None else truth.v_true
        report = build_report(batches, X, moments, estimates, trace, tracker.config,
                              truth=v_true, t_burn=cfg.t_burn, stride=cfg.stride_eig)

        out_dir.mkdir(parents=True, exist_ok=True)
        if truth is not None:
            artifacts.write_snapshots_csv(truth.snapshots, out_dir / "ground_truth.csv")
        artifacts.write_observations(batches, X, out_dir / "observations")
        artifacts.write_snapshots_csv(estimate_snapshots, out_dir / "estimates.csv")
        predictions = [assemble_snapshot(tracker.predictions[:, k], t=snap.t)
                       for k, snap in enumerate(estimate_snapshots)]
        artifacts.write_snapshots_csv(predictions, out_dir / "predictions.csv")
        artifacts.write_comparators_csv(trace, out_dir / "comparators.csv")
        artifacts.write_traces_csv(report, out_dir / "traces.csv")
        artifacts.write_json(report.to_dict(), out_dir / "report.json")
        if cfg.checkpoint:
            save_checkpoint(tracker.state, out_dir / "checkpoint.json")

        return RunResult(label=label, alpha=alpha, estimates=estimates, report=report,
                         trace=trace, truth=truth)

    def _summary(self, results, path):
        """Seed-averaged MSE and regret per regime."""
        frames = []
        for regime in self.config.regimes:
            group = [r for r in results if r.label.startswith(regime.value)]
            if not group:
                continue
            T = group[0].report.regret_trace.shape[0]
            frames.append(pd.DataFrame({
                "regime": regime.value,
                "t": np.arange(1, T + 1),
                "mse_mean": np.mean([r.report.mse_trace for r in group], axis=0),
                "regret_mean": np.mean([r.report.regret_trace for r in group], axis=0),
                "runs": len(group),
            }))
        artifacts.write_frame(pd.concat(frames, ignore_index=True), path)

    def _plot_traces(self, results):
        traces = {}
        if self.config.repeat > 1:
            for regime in self.config.regimes:
                group = [r for r in results if r.label.startswith(regime.value)]
                traces[regime.value] = {
                    "t": np.arange(1, group[0].report.regret_trace.shape[0] + 1),
                    "mse": np.mean([r.report.mse_trace for r in group], axis=0),
                    "regret": np.mean([r.report.regret_trace for r in group], axis=0),
                }
            return traces
        for r in results:
            key = r.label.split("-seed")[0]
            traces[key] = {
                "t": np.arange(1, r.report.regret_trace.shape[0] + 1),
                "mse": r.report.mse_trace,
                "regret": r.report.window_regret_trace if r.report.bound_applicable else r.report.regret_trace,
                "bound": r.report.bound_trace,
            }
        return traces

    def run(self):
        """
        Execute all runs inside a staging directory.

        Returns:
            list of RunResult
        """
        cfg = self.config
        results = []
        with artifacts.staged_output(cfg.output_dir) as staging:
            for gen_config in cfg.run_configs():
                run_dir = staging
                if cfg.multi_run:
                    run_dir = staging / "runs" / f"{gen_config.regime.value}-seed{gen_config.seed}"
                results.append(self.run_one(gen_config, run_dir))

            if cfg.multi_run:
                self._summary(results, staging / "summary.csv")
            if cfg.emit_svg or cfg.emit_png:
                written = emit_plots(self._plot_traces(results), staging, emit_png=cfg.emit_png)
                if not cfg.emit_svg:
                    for path in written:
                        if path.suffix == ".svg":
                            path.unlink()

            metadata = {
                "seed": None if cfg.generator is None else cfg.generator.seed,
                "prng": {"algorithm": PRNG_ALGORITHM, "numpy": np.__version__,
                         "seeding": "SeedSequence(seed).spawn(4)"},
                "python": platform.python_version(),
                "config": cfg.describe(),
                "alpha": {r.label: r.alpha for r in results},
                "artifacts": artifacts.checksums(staging),
            }
            artifacts.write_json(metadata, staging / "metadata.json")
        return results


def run_experiment(config):
    """
    Run an experiment and map failures to exit codes.

    Returns:
        int exit status (0 ok, 2 config, 3 non-finite, 4 I/O, 1 other)
    """
    try:
        ExperimentRunner(config).run()
    except (ConfigError, DegenerateData) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except NonFiniteValue as e:
        logger.error(f"Tracker diverged: {e}")
        return EXIT_NON_FINITE
    except (ArtifactError, DimensionMismatch, OSError) as e:
        logger.error(f"I/O failure: {e}", exc_info=True)
        return EXIT_IO
    except Exception as e:
        logger.error(f"Experiment failed: {e}", exc_info=True)
        return EXIT_FAILURE
    return EXIT_OK
