"""
Dynamic structural equation model: domain types and seeded synthetic data.

The generative model is

    Y^t = A^t Y^t + B^t X + E^t,    B^t = diag(b^t),  diag(A^t) = 0,

with N nodes and C contagions. Two topology-evolution regimes are provided:
a smooth one where every edge follows a fixed function of t, and an abrupt
one where the weights are redrawn once at t = ceil(T/2).
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from modules.errors import ConfigError, DimensionMismatch, SingularSystem
from modules.logger import get_logger

logger = get_logger(__name__)

PRNG_ALGORITHM = "numpy.random.PCG64"
MAX_SPECTRAL_RADIUS = 0.9
MAX_CONDITION = 1e12

# Edge-weight functions of the smooth regime, indexed 0..3
EDGE_FUNCTIONS = (
    lambda t: 0.5 + 0.5 * np.sin(0.1 * t),
    lambda t: 0.5 + 0.5 * np.cos(0.1 * t),
    lambda t: np.exp(-0.01 * t),
    lambda t: 0.0 * t,
)


class Regime(str, Enum):
    SMOOTH = "smooth"
    ABRUPT = "abrupt"


@dataclass(frozen=True)
class TopologySnapshot:
    """Adjacency A (zero diagonal) and exogenous gains b at time t.

    ``scale`` is the stability factor applied by the generator (1.0 when no
    rescaling was needed, and for estimates).
    """
    t: int
    A: np.ndarray
    b: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise DimensionMismatch(f"Snapshot t={self.t}: A {A.shape} and b {b.shape} disagree")
        if np.any(np.diag(A) != 0.0):
            raise ValueError(f"Snapshot t={self.t}: diagonal of A must be zero")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError(f"Snapshot t={self.t}: non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def N(self):
        return self.A.shape[0]

    def stacked(self, i):
        """Per-node vector v_i = [a_{-i}; b_ii]."""
        return np.append(np.delete(self.A[i], i), self.b[i])


@dataclass(frozen=True)
class ObservationBatch:
    """Endogenous Y^t (N x C) with the static exogenous X (N x C).

    ``noise`` holds E^t when the batch was synthesised, None for ingested data.
    """
    t: int
    Y: np.ndarray
    X: np.ndarray
    noise: Optional[np.ndarray] = None

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if Y.ndim != 2 or Y.shape != X.shape:
            raise DimensionMismatch(f"Batch t={self.t}: Y {Y.shape} and X {X.shape} disagree")
        if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(X))):
            raise ValueError(f"Batch t={self.t}: non-finite entries")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)

    @property
    def shape(self):
        return self.Y.shape

    def max_square(self):
        """Largest squared entry of Y and X."""
        return float(max(np.max(self.Y ** 2, initial=0.0), np.max(self.X ** 2, initial=0.0)))


@dataclass(frozen=True)
class GeneratorConfig:
    N: int = 10
    C: int = 5
    T: int = 300
    p_e: float = 0.15
    sigma: float = 0.1
    regime: Regime = Regime.SMOOTH
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "regime", Regime(self.regime))
        except ValueError:
            raise ConfigError(f"Unknown regime: {self.regime!r}") from None
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError(f"N must be an integer >= 2, got {self.N}")
        if int(self.C) != self.C or self.C < 1:
            raise ConfigError(f"C must be an integer >= 1, got {self.C}")
        if int(self.T) != self.T or self.T < 1:
            raise ConfigError(f"T must be an integer >= 1, got {self.T}")
        if not 0.0 <= self.p_e <= 1.0:
            raise ConfigError(f"p_e must lie in [0, 1], got {self.p_e}")
        if not (self.sigma >= 0.0 and math.isfinite(self.sigma)):
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def breakpoint(self):
        """First time index of the second abrupt segment."""
        return math.ceil(self.T / 2)


@dataclass(frozen=True)
class GroundTruth:
    snapshots: Sequence[TopologySnapshot]
    assignment: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def T(self):
        return len(self.snapshots)

    @property
    def v_true(self):
        """Stacked true vectors, array of shape (N, T, N)."""
        N = self.snapshots[0].N
        out = np.empty((N, self.T, N))
        for k, snap in enumerate(self.snapshots):
            for i in range(N):
                out[i, k] = snap.stacked(i)
        return out


def spectral_radius(A):
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(linalg.eigvals(A))))


def stabilize(A):
    """
    Rescale A so that its spectral radius is at most 0.9.

    Returns:
        (rescaled matrix, scale factor)
    """
    rho = spectral_radius(A)
    if rho > MAX_SPECTRAL_RADIUS:
        scale = MAX_SPECTRAL_RADIUS / rho
        return A * scale, scale
    return A, 1.0


def seed_streams(seed):
    """Independent generators for support, topology, exogenous input and noise."""
    children = np.random.SeedSequence(seed).spawn(4)
    return tuple(np.random.Generator(np.random.PCG64(child)) for child in children)


def generate_binary_support(config, rng):
    """Erdos-Renyi directed support with edge probability p_e and no self-loops."""
    support = (rng.random((config.N, config.N)) < config.p_e).astype(np.int8)
    np.fill_diagonal(support, 0)
    return support


def _smooth_sequence(config, mask, rng):
    assignment = rng.integers(0, len(EDGE_FUNCTIONS), size=mask.shape)
    assignment = np.where(mask, assignment, -1)
    raw = []
    for t in range(1, config.T + 1):
        A = np.zeros(mask.shape)
        for k, fn in enumerate(EDGE_FUNCTIONS):
            sel = assignment == k
            A[sel] = fn(float(t))
        raw.append(A)
    return raw, assignment


def _abrupt_sequence(config, mask, rng):
    first = np.where(mask, rng.standard_normal(mask.shape), 0.0)
    second = np.where(mask, rng.standard_normal(mask.shape), 0.0)
    raw = [first if t < config.breakpoint else second for t in range(1, config.T + 1)]
    return raw, None


def generate_topology_sequence(config, support, rng):
    """
    Build A^1..A^T on the given support and a constant b.

    Args:
        config: GeneratorConfig
        support: N x N binary matrix with zero diagonal
        rng: numpy Generator

    Returns:
        GroundTruth
    """
    support = np.asarray(support)
    if support.shape != (config.N, config.N):
        raise DimensionMismatch(f"Support shape {support.shape} != ({config.N}, {config.N})")
    if np.any(np.diag(support) != 0):
        raise ValueError("Support must have a zero diagonal")
    mask = support != 0

    if config.regime is Regime.SMOOTH:
        raw, assignment = _smooth_sequence(config, mask, rng)
    else:
        raw, assignment = _abrupt_sequence(config, mask, rng)
    b = rng.standard_normal(config.N)

    snapshots = []
    rescaled = 0
    for t, A in enumerate(raw, start=1):
        A, scale = stabilize(A)
        if scale != 1.0:
            rescaled += 1
        A = np.array(A, dtype=float)
        np.fill_diagonal(A, 0.0)
        snapshots.append(TopologySnapshot(t=t, A=A, b=b.copy(), scale=scale))

    logger.debug(f"Generated {config.T} {config.regime.value} snapshots, "
                 f"{int(mask.sum())} edges, {rescaled} rescaled")
    return GroundTruth(snapshots=tuple(snapshots), assignment=assignment)


def generate_exogenous(config, rng):
    """Static exogenous matrix X with i.i.d. standard normal entries."""
    return rng.standard_normal((config.N, config.C))


def generate_observations(snapshot, X, sigma, rng):
    """
    Draw E^t and solve (I - A) Y = diag(b) X + E for Y.

    Args:
        snapshot: TopologySnapshot at time t
        X: N x C exogenous matrix
        sigma: noise covariance scale
        rng: numpy Generator

    Returns:
        ObservationBatch with the noise retained
    """
    X = np.asarray(X, dtype=float)
    N = snapshot.N
    if X.shape[0] != N:
        raise DimensionMismatch(f"X has {X.shape[0]} rows, snapshot has N={N}")

    E = math.sqrt(sigma) * rng.standard_normal(X.shape)
    M = np.eye(N) - snapshot.A
    if np.linalg.cond(M) > MAX_CONDITION:
        raise SingularSystem(f"I - A is singular at t={snapshot.t}")

    rhs = snapshot.b[:, None] * X + E
    Y = linalg.lu_solve(linalg.lu_factor(M), rhs)
    return ObservationBatch(t=snapshot.t, Y=Y, X=X, noise=E)


def generate_run(config):
    """
    Generate ground truth, X and the full observation stream from one seed.

    Returns:
        (GroundTruth, X, list of ObservationBatch)
    """
    support_rng, topology_rng, exogenous_rng, noise_rng = seed_streams(config.seed)
    support = generate_binary_support(config, support_rng)
    truth = generate_topology_sequence(config, support, topology_rng)
    X = generate_exogenous(config, exogenous_rng)
    batches = [generate_observations(snap, X, config.sigma, noise_rng) for snap in truth.snapshots]
    logger.info(f"Generated {config.regime.value} run: N={config.N} C={config.C} "
                f"T={config.T} seed={config.seed}")
    return truth, X, batches
