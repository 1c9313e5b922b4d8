import numpy as np
import pytest

from modules.hindsight import comparator_trace
from modules.model import GeneratorConfig, generate_run
from modules.tracker import AlgoConfig, TopologyTracker, accumulate_moments
from modules.experiment import resolve_alpha


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    return GeneratorConfig(N=4, C=3, T=24, p_e=0.4, sigma=0.1, regime="smooth", seed=7)


@pytest.fixture
def small_run(small_config):
    """A complete small synthetic run: data, tracker output and hindsight trace."""
    truth, X, batches = generate_run(small_config)
    alpha = resolve_alpha(accumulate_moments(batches, X, 0.9))
    config = AlgoConfig(gamma=0.9, lambda_=1.0, alpha=alpha)
    tracker = TopologyTracker(X, config)
    tracker.run(batches)
    trace = comparator_trace(tracker.moments, config.lambda_, tol=1e-10, max_iter=200_000)
    return {
        "truth": truth, "X": X, "batches": batches, "config": config,
        "tracker": tracker, "trace": trace,
    }


def random_spd(rng, n, shift=0.5):
    M = rng.standard_normal((n, n))
    return M @ M.T / n + shift * np.eye(n)
