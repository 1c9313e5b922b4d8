"""
Online proximal-gradient tracker for dynamic SEM topologies.

Each node i keeps v_i = [a_{-i}; b_ii] and the exponentially weighted moments

    Phi_i^t = gamma Phi_i^{t-1} + Z_i^t Z_i^t^T
    r_i^t   = gamma r_i^{t-1}   + Z_i^t y_i^t
    c_i^t   = gamma c_i^{t-1}   + ||y_i^t||^2

and takes one forward step on f_t^i followed by the prox of lambda ||a_{-i}||_1.
"""
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Tuple

import numpy as np

from modules.errors import ArtifactError, ConfigError, DimensionMismatch, NonFiniteValue
from modules.logger import get_logger
from modules.model import TopologySnapshot

logger = get_logger(__name__)

CHECKPOINT_FORMAT = "semtrack-checkpoint/1"


@dataclass(frozen=True)
class AlgoConfig:
    gamma: float = 0.9
    lambda_: float = 15.0
    alpha: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not (self.lambda_ >= 0.0 and math.isfinite(self.lambda_)):
            raise ConfigError(f"lambda must be >= 0, got {self.lambda_}")
        if not (self.alpha > 0.0 and math.isfinite(self.alpha)):
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class NodeState:
    v: np.ndarray
    Phi: np.ndarray
    r: np.ndarray
    c: float = 0.0
    t: int = 0

    @classmethod
    def zeros(cls, N):
        return cls(v=np.zeros(N), Phi=np.zeros((N, N)), r=np.zeros(N), c=0.0, t=0)


@dataclass(frozen=True)
class TrackerState:
    nodes: Tuple[NodeState, ...]
    config: AlgoConfig
    X: np.ndarray

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def C(self):
        return self.X.shape[1]

    @property
    def t(self):
        return self.nodes[0].t


def init(N, C, config, X):
    """
    Create the zero tracker state.

    Args:
        N: Number of nodes
        C: Number of contagions
        config: AlgoConfig
        X: N x C exogenous matrix

    Returns:
        TrackerState with v = 0, Phi = 0, r = 0, c = 0, t = 0 for every node
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (N, C):
        raise DimensionMismatch(f"X has shape {X.shape}, expected ({N}, {C})")
    return TrackerState(nodes=tuple(NodeState.zeros(N) for _ in range(N)), config=config, X=X)


def build_regressor(Y, X, i):
    """Z_i: Y with row i removed, followed by row i of X (shape N x C)."""
    return np.vstack([np.delete(Y, i, axis=0), X[i][None, :]])


def update_moments(node, Z, y, gamma):
    """One recursive update of (Phi, r, c) and the step counter."""
    return replace(
        node,
        Phi=gamma * node.Phi + Z @ Z.T,
        r=gamma * node.r + Z @ y,
        c=gamma * node.c + float(y @ y),
        t=node.t + 1,
    )


def gradient(node, v):
    return node.Phi @ v - node.r


def soft_threshold(w, kappa):
    """Componentwise sign(w) max(|w| - kappa, 0); |w| == kappa maps to exactly 0."""
    w = np.asarray(w, dtype=float)
    out = np.sign(w) * np.maximum(np.abs(w) - kappa, 0.0)
    out[np.abs(w) <= kappa] = 0.0
    return out


def prox_partial_l1(v, alpha, lambda_):
    """Soft-threshold the a-part with alpha * lambda, pass b_ii through."""
    v = np.asarray(v, dtype=float)
    out = v.copy()
    out[:-1] = soft_threshold(v[:-1], alpha * lambda_)
    return out


def evaluate_objective(node, v, lambda_):
    """
    Exact h_t^i(v) = 1/2 v'Phi v - r'v + 1/2 c + lambda ||v_{1:N-1}||_1.

    Args:
        node: NodeState holding the time-t moments
        v: Point of evaluation
        lambda_: l1 weight

    Returns:
        float objective value
    """
    v = np.asarray(v, dtype=float)
    quad = 0.5 * float(v @ node.Phi @ v) - float(node.r @ v) + 0.5 * node.c
    return quad + lambda_ * float(np.sum(np.abs(v[:-1])))


def _node_step(node, i, Y, X, config):
    Z = build_regressor(Y, X, i)
    node = update_moments(node, Z, Y[i], config.gamma)
    forward = node.v - config.alpha * gradient(node, node.v)
    v_next = prox_partial_l1(forward, config.alpha, config.lambda_)
    if not np.all(np.isfinite(v_next)):
        raise NonFiniteValue(f"Node {i} diverged at t={node.t}; alpha={config.alpha} is too large")
    return replace(node, v=v_next)


def assemble_snapshot(vectors, t):
    """Scatter per-node vectors [a_{-i}; b_ii] into (A, b) with a zero diagonal."""
    vectors = np.asarray(vectors, dtype=float)
    N = vectors.shape[0]
    A = np.zeros((N, N))
    off = ~np.eye(N, dtype=bool)
    A[off] = vectors[:, :-1].reshape(-1)
    return TopologySnapshot(t=t, A=A, b=vectors[:, -1].copy())


def step(state, batch, executor=None):
    """
    Run one online proximal-gradient step on every node.

    Args:
        state: TrackerState holding v_i[t]
        batch: ObservationBatch (or raw N x C array) with Y^t
        executor: Optional concurrent.futures executor for the per-node loop

    Returns:
        (new TrackerState holding v_i[t+1], TopologySnapshot built from v_i[t])
    """
    Y = np.asarray(getattr(batch, "Y", batch), dtype=float)
    if Y.shape != state.X.shape:
        raise DimensionMismatch(f"Y has shape {Y.shape}, expected {state.X.shape}")
    if not np.all(np.isfinite(Y)):
        raise NonFiniteValue(f"Observation batch at t={state.t + 1} holds non-finite values")

    estimate = assemble_snapshot([node.v for node in state.nodes], t=state.t + 1)
    args = [(node, i, Y, state.X, state.config) for i, node in enumerate(state.nodes)]
    if executor is None:
        nodes = tuple(_node_step(*a) for a in args)
    else:
        nodes = tuple(executor.map(lambda a: _node_step(*a), args))
    return replace(state, nodes=nodes), estimate


@dataclass
class MomentHistory:
    """Phi, r, c for every (t, i); arrays indexed [t-1, i, ...]."""
    Phi: np.ndarray
    r: np.ndarray
    c: np.ndarray

    @property
    def T(self):
        return self.Phi.shape[0]

    @property
    def N(self):
        return self.Phi.shape[1]

    def node_state(self, i, t, v=None):
        """NodeState view of node i at time t (1-based)."""
        N = self.N
        return NodeState(v=np.zeros(N) if v is None else v, Phi=self.Phi[t - 1, i],
                         r=self.r[t - 1, i], c=float(self.c[t - 1, i]), t=t)


def accumulate_moments(batches, X, gamma):
    """
    Moments-only forward pass over a whole stream.

    Args:
        batches: Iterable of ObservationBatch or N x C arrays
        X: N x C exogenous matrix
        gamma: Forgetting factor

    Returns:
        MomentHistory
    """
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    nodes = [NodeState.zeros(N) for _ in range(N)]
    Phi, r, c = [], [], []
    for batch in batches:
        Y = np.asarray(getattr(batch, "Y", batch), dtype=float)
        if Y.shape != X.shape:
            raise DimensionMismatch(f"Y has shape {Y.shape}, expected {X.shape}")
        nodes = [update_moments(n, build_regressor(Y, X, i), Y[i], gamma) for i, n in enumerate(nodes)]
        Phi.append(np.stack([n.Phi for n in nodes]))
        r.append(np.stack([n.r for n in nodes]))
        c.append([n.c for n in nodes])
    return MomentHistory(Phi=np.array(Phi), r=np.array(r), c=np.array(c, dtype=float))


class TopologyTracker:
    """
    Drives the online tracker over a stream and records what the analysis needs.

    After ``run``: ``estimates[i, t-1]`` is v_i[t] (reported for time t),
    ``predictions[i, t-1]`` is v_i[t+1] and ``moments`` holds Phi, r, c.
    """

    def __init__(self, X, config, workers=1, state=None):
        X = np.asarray(X, dtype=float)
        if state is None:
            state = init(X.shape[0], X.shape[1], config, X)
        elif state.X.shape != X.shape or not np.array_equal(state.X, X):
            raise DimensionMismatch("Checkpoint was taken on a different exogenous matrix X")
        self.state = state
        self.workers = max(1, int(workers))
        self._estimates = []
        self._predictions = []
        self._Phi, self._r, self._c = [], [], []

    @property
    def config(self):
        return self.state.config

    def _record(self, estimate_vectors):
        nodes = self.state.nodes
        self._estimates.append(estimate_vectors)
        self._predictions.append(np.stack([n.v for n in nodes]))
        self._Phi.append(np.stack([n.Phi for n in nodes]))
        self._r.append(np.stack([n.r for n in nodes]))
        self._c.append([n.c for n in nodes])

    def update(self, batch, executor=None):
        before = np.stack([n.v for n in self.state.nodes])
        self.state, estimate = step(self.state, batch, executor=executor)
        self._record(before)
        return estimate

    def run(self, batches):
        """
        Track a whole stream.

        Returns:
            list of TopologySnapshot estimates, one per batch
        """
        snapshots = []
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                for batch in batches:
                    snapshots.append(self.update(batch, executor=pool))
        else:
            for batch in batches:
                snapshots.append(self.update(batch))
        logger.info(f"Tracked {len(snapshots)} steps (gamma={self.config.gamma}, "
                    f"lambda={self.config.lambda_}, alpha={self.config.alpha:.6g})")
        return snapshots

    @property
    def estimates(self):
        """v_i[t] as an array (N, T, N)."""
        return np.transpose(np.array(self._estimates), (1, 0, 2))

    @property
    def predictions(self):
        """v_i[t+1] as an array (N, T, N)."""
        return np.transpose(np.array(self._predictions), (1, 0, 2))

    @property
    def moments(self):
        return MomentHistory(Phi=np.array(self._Phi), r=np.array(self._r),
                             c=np.array(self._c, dtype=float))


def save_checkpoint(state, path):
    """Write config, t and every node's (v, Phi, r, c) to a JSON file."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "config": {"gamma": state.config.gamma, "lambda": state.config.lambda_,
                   "alpha": state.config.alpha},
        "t": state.t,
        "X": state.X.tolist(),
        "nodes": [{"v": n.v.tolist(), "Phi": n.Phi.tolist(), "r": n.r.tolist(), "c": n.c}
                  for n in state.nodes],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path):
    """Inverse of save_checkpoint; floats round-trip exactly through repr."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactError(f"Cannot read checkpoint {path}: {e}") from e
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ArtifactError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    cfg = doc["config"]
    config = AlgoConfig(gamma=cfg["gamma"], lambda_=cfg["lambda"], alpha=cfg["alpha"])
    nodes = tuple(NodeState(v=np.array(n["v"], dtype=float), Phi=np.array(n["Phi"], dtype=float),
                            r=np.array(n["r"], dtype=float), c=float(n["c"]), t=int(doc["t"]))
                  for n in doc["nodes"])
    return TrackerState(nodes=nodes, config=config, X=np.array(doc["X"], dtype=float))
