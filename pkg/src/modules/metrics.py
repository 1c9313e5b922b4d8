"""
Dynamic regret, path length, MSE, empirical constants and the regret bound.

All functions are pure: they read run artifacts (observations, moment history,
estimates, comparator trace) and never mutate them.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from modules.errors import AssumptionViolated, DimensionMismatch
from modules.hindsight import DEGENERATE_RTOL
from modules.logger import get_logger

logger = get_logger(__name__)

BOUND_RTOL = 1e-6
STEP_RTOL = 1e-12


def default_burn_in(N, C):
    return math.ceil(N / C) * 3


def moment_spectrum(moments, stride=1):
    """
    Extreme eigenvalues of every stride-th Phi_i^t.

    Returns:
        (times, lam_min, lam_max); times are 1-based, the eigenvalue arrays are (N, len(times))
    """
    stride = max(1, int(stride))
    times = np.arange(1, moments.T + 1, stride)
    lam_min = np.empty((moments.N, times.size))
    lam_max = np.empty((moments.N, times.size))
    for k, t in enumerate(times):
        for i in range(moments.N):
            w = linalg.eigvalsh(moments.Phi[t - 1, i])
            lam_min[i, k] = w[0]
            lam_max[i, k] = w[-1]
    return times, lam_min, lam_max


def objective_values(moments, vectors, lambda_):
    """h_t^i(vectors[i, t-1]) for every (i, t), shape (N, T)."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.shape != (moments.N, moments.T, moments.N):
        raise DimensionMismatch(f"vectors {vectors.shape} do not match moments "
                                f"({moments.N}, {moments.T}, {moments.N})")
    v = np.transpose(vectors, (1, 0, 2))  # (T, N, N)
    quad = 0.5 * np.einsum("tij,tijk,tik->ti", v, moments.Phi, v)
    lin = np.einsum("tij,tij->ti", moments.r, v)
    l1 = lambda_ * np.sum(np.abs(v[:, :, :-1]), axis=2)
    return (quad - lin + 0.5 * moments.c + l1).T


@dataclass(frozen=True)
class RegretTrace:
    per_step: np.ndarray  # (N, T) h_t^i(v_i[t]) - h_t^i(v_i*[t])
    cumulative: np.ndarray  # (T,) R_d[t]
    per_node: np.ndarray  # (N,) R_d^i[T]


def dynamic_regret(h_estimates, h_comparators):
    """
    Dynamic regret from objective values on the same (i, t) grid.

    Args:
        h_estimates: (N, T) values at the online estimates
        h_comparators: (N, T) values at the hindsight optima

    Returns:
        RegretTrace
    """
    h_estimates = np.asarray(h_estimates, dtype=float)
    h_comparators = np.asarray(h_comparators, dtype=float)
    if h_estimates.shape != h_comparators.shape:
        raise DimensionMismatch(f"{h_estimates.shape} != {h_comparators.shape}")
    per_step = h_estimates - h_comparators
    return RegretTrace(per_step=per_step,
                       cumulative=np.cumsum(per_step.sum(axis=0)),
                       per_node=per_step.sum(axis=1))


def path_length_trace(v_star):
    """Cumulative W[t] for t = 1..T of one node's sequence (T, N)."""
    v_star = np.asarray(v_star, dtype=float)
    steps = np.linalg.norm(np.diff(v_star, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def path_length(v_star):
    """W[T] = sum_{t>=2} ||v*[t] - v*[t-1]||."""
    return float(path_length_trace(v_star)[-1])


def mse(estimates, truth):
    """Per-t mean-square error 1/N^2 sum_i ||v_i[t] - v_i^true[t]||^2."""
    estimates = np.asarray(estimates, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimates.shape != truth.shape:
        raise DimensionMismatch(f"{estimates.shape} != {truth.shape}")
    N = estimates.shape[0]
    return np.sum((estimates - truth) ** 2, axis=(0, 2)) / N ** 2


def tracking_gaps(estimates, v_star):
    """||v_i[t] - v_i*[t]|| for every (i, t)."""
    return np.linalg.norm(np.asarray(estimates) - np.asarray(v_star), axis=2)


def cumulative_gap_bound(rho, initial_gaps, path_lengths):
    """Upper bound on sum_t ||v_i[t] - v_i*[t]|| given the contraction factor."""
    if not rho < 1.0:
        raise AssumptionViolated(f"Contraction factor rho={rho} is not below 1")
    return (np.asarray(initial_gaps) + np.asarray(path_lengths)) / (1.0 - rho)


@dataclass(frozen=True)
class EmpiricalConstants:
    B_xy: float
    beta: float
    beta_burn: float
    L_f: float
    d: float
    mu: float
    rho: float
    rho_burn: float
    t_burn: int


def _strong_convexity(lam_min, L_f):
    """Smallest eigenvalue, with round-off on rank-deficient moments clipped to 0."""
    beta = float(lam_min.min())
    return beta if beta > DEGENERATE_RTOL * max(L_f, 1.0) else 0.0


def empirical_constants(batches, X, moments, trace, gamma, alpha, t_burn=None, stride=1):
    """
    Measure B_xy, beta, L_f and d on a finished run.

    Args:
        batches: ObservationBatch sequence
        X: Exogenous matrix
        moments: MomentHistory
        trace: ComparatorTrace
        gamma: Forgetting factor
        alpha: Step size used by the tracker
        t_burn: First step of the post-burn-in window (default ceil(N/C) * 3)
        stride: Eigen-decompose every stride-th step

    Returns:
        EmpiricalConstants
    """
    X = np.asarray(X, dtype=float)
    N, C = X.shape
    if t_burn is None or t_burn < 1:
        t_burn = default_burn_in(N, C)
    t_burn = min(int(t_burn), moments.T)

    B_xy = max((batch.max_square() for batch in batches), default=float(np.max(X ** 2, initial=0.0)))

    times, lam_min, lam_max = moment_spectrum(moments, stride)
    L_f = float(lam_max.max())
    beta = _strong_convexity(lam_min, L_f)
    late = times >= t_burn
    beta_burn = _strong_convexity(lam_min[:, late], L_f) if np.any(late) else 0.0

    if trace.T > 1:
        d = float(np.max(np.linalg.norm(np.diff(trace.v_star, axis=1), axis=2)))
    else:
        d = 0.0

    return EmpiricalConstants(B_xy=B_xy, beta=beta, beta_burn=beta_burn, L_f=L_f, d=d,
                              mu=1.0 - gamma, rho=1.0 - alpha * beta,
                              rho_burn=1.0 - alpha * beta_burn, t_burn=t_burn)


def regret_constant(B_xy, beta, L_f, lambda_, alpha, C, N, gamma):
    """
    D_h = (1/(alpha beta)) (B_xy C sqrt(N)/(1-gamma) (1 + L_f/beta) + lambda sqrt(N-1)).

    Raises:
        AssumptionViolated: beta <= 0, alpha > 1/L_f or gamma == 1
    """
    if not beta > 0.0:
        raise AssumptionViolated(f"beta={beta} is not positive")
    if alpha * L_f > 1.0 + STEP_RTOL:
        raise AssumptionViolated(f"alpha={alpha} exceeds 1/L_f={1.0 / L_f}")
    mu = 1.0 - gamma
    if not mu > 0.0:
        raise AssumptionViolated("gamma = 1 leaves the bound on ||r|| unbounded")
    drift = B_xy * C * math.sqrt(N) / mu * (1.0 + L_f / beta)
    return (drift + lambda_ * math.sqrt(max(N - 1, 0))) / (alpha * beta)


@dataclass(frozen=True)
class RegretBound:
    D_h: float
    per_node: np.ndarray  # (N,)
    total: float
    trace: Optional[np.ndarray] = None  # (T,) when path-length traces were given


def regret_bound(B_xy, beta, L_f, lambda_, alpha, C, N, gamma, initial_gaps, path_lengths,
                 path_length_traces=None):
    """
    Per-node bound D_h (||v_i[t0] - v_i*[t0]|| + W_i) and its total over nodes.

    With v_i[1] = 0 and t0 = 1 the initial gap is ||v_i*[1]||.

    Args:
        initial_gaps: (N,) initial distances to the comparator
        path_lengths: (N,) W_i over the horizon
        path_length_traces: Optional (N, T) cumulative W_i[t] for the per-t bound trace

    Returns:
        RegretBound
    """
    D_h = regret_constant(B_xy, beta, L_f, lambda_, alpha, C, N, gamma)
    initial_gaps = np.asarray(initial_gaps, dtype=float)
    per_node = D_h * (initial_gaps + np.asarray(path_lengths, dtype=float))
    bound_trace = None
    if path_length_traces is not None:
        bound_trace = D_h * np.sum(initial_gaps[:, None] + np.asarray(path_length_traces), axis=0)
    return RegretBound(D_h=D_h, per_node=per_node, total=float(per_node.sum()), trace=bound_trace)


@dataclass
class RegretReport:
    regret_trace: np.ndarray  # (T,) R_d[t] over the full horizon
    per_node_regret: np.ndarray  # (N,) R_d^i[T]
    path_lengths: np.ndarray  # (N,) W_i[T]
    constants: EmpiricalConstants
    lambda_: float
    alpha: float
    gamma: float
    t0: int  # first step of the window the bound is evaluated on
    window_regret_trace: np.ndarray  # (T,) cumulative regret from t0, NaN before
    window_per_node_regret: np.ndarray
    window_path_lengths: np.ndarray
    initial_gaps: np.ndarray
    gap_sums: np.ndarray  # (N,) sum_t ||v_i[t] - v_i*[t]|| from t0
    gap_bounds: Optional[np.ndarray] = None  # (N,) (initial gap + W_i) / (1 - rho) on the window
    D_h: Optional[float] = None
    bound_trace: Optional[np.ndarray] = None  # (T,) NaN before t0
    per_node_bound: Optional[np.ndarray] = None
    bound_reason: str = ""
    mse_trace: Optional[np.ndarray] = None
    converged_fraction: float = 1.0
    degenerate_fraction: float = 0.0

    @property
    def mu(self):
        return self.constants.mu

    @property
    def rho(self):
        return self.constants.rho

    @property
    def bound_applicable(self):
        return self.D_h is not None

    @property
    def bound_holds(self):
        """Per-node and total regret within the bound (relative slack 1e-6)."""
        if not self.bound_applicable:
            return None
        slack = BOUND_RTOL * np.maximum(np.abs(self.per_node_bound), 1.0)
        per_node_ok = np.all(self.window_per_node_regret <= self.per_node_bound + slack)
        total = float(self.window_per_node_regret.sum())
        total_bound = float(self.per_node_bound.sum())
        return bool(per_node_ok and total <= total_bound + BOUND_RTOL * max(abs(total_bound), 1.0))

    @property
    def gap_bound_holds(self):
        if self.gap_bounds is None:
            return None
        slack = BOUND_RTOL * np.maximum(self.gap_bounds, 1.0)
        return bool(np.all(self.gap_sums <= self.gap_bounds + slack))

    def assumptions(self):
        c = self.constants
        return {
            "strong_convexity_global": c.beta > 0.0,
            "strong_convexity_post_burn_in": c.beta_burn > 0.0,
            "step_size": self.alpha * c.L_f <= 1.0 + STEP_RTOL,
            "forgetting": self.gamma < 1.0,
            "comparators_converged": self.converged_fraction == 1.0,
            "bound_applicable": self.bound_applicable,
            "bound_holds": self.bound_holds,
            "gap_bound_holds": self.gap_bound_holds,
        }

    def to_dict(self):
        """JSON-ready summary; non-finite floats become None."""
        c = self.constants
        N = self.per_node_regret.shape[0]
        per_node = []
        for i in range(N):
            per_node.append({
                "node": i,
                "regret": _num(self.per_node_regret[i]),
                "path_length": _num(self.path_lengths[i]),
                "window_regret": _num(self.window_per_node_regret[i]),
                "window_path_length": _num(self.window_path_lengths[i]),
                "initial_gap": _num(self.initial_gaps[i]),
                "bound": None if self.per_node_bound is None else _num(self.per_node_bound[i]),
                "gap_sum": _num(self.gap_sums[i]),
                "gap_bound": None if self.gap_bounds is None else _num(self.gap_bounds[i]),
            })
        totals = {
            "regret": _num(self.regret_trace[-1]),
            "window_regret": _num(self.window_per_node_regret.sum()),
            "bound": None if self.per_node_bound is None else _num(self.per_node_bound.sum()),
            "mse_final": None if self.mse_trace is None else _num(self.mse_trace[-1]),
            "converged_fraction": _num(self.converged_fraction),
            "degenerate_fraction": _num(self.degenerate_fraction),
        }
        return {
            "constants": {
                "B_xy": _num(c.B_xy), "beta": _num(c.beta), "beta_burn_in": _num(c.beta_burn),
                "L_f": _num(c.L_f), "d": _num(c.d), "mu": _num(c.mu), "rho": _num(c.rho),
                "rho_burn_in": _num(c.rho_burn), "t_burn": c.t_burn, "t0": self.t0,
                "lambda": _num(self.lambda_), "alpha": _num(self.alpha), "gamma": _num(self.gamma),
            },
            "D_h": None if self.D_h is None else _num(self.D_h),
            "bound_note": self.bound_reason,
            "per_node": per_node,
            "totals": totals,
            "assumptions_ok": self.assumptions(),
        }


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def build_report(batches, X, moments, estimates, trace, config, truth=None, t_burn=None, stride=1):
    """
    Assemble the full RegretReport of a run.

    The bound is evaluated from t0 = 1 when beta > 0 over the whole run, otherwise
    from the burn-in step, using the window's beta.

    Args:
        batches: Observation batches
        X: Exogenous matrix
        moments: MomentHistory of the run
        estimates: (N, T, N) online estimates v_i[t]
        trace: ComparatorTrace
        config: AlgoConfig used by the tracker
        truth: Optional (N, T, N) ground-truth vectors for the MSE trace
        t_burn: Burn-in step (default ceil(N/C) * 3)
        stride: Eigen-decomposition stride

    Returns:
        RegretReport
    """
    X = np.asarray(X, dtype=float)
    N, C = X.shape
    T = moments.T
    lambda_, alpha, gamma = config.lambda_, config.alpha, config.gamma

    h_est = objective_values(moments, estimates, lambda_)
    h_star = objective_values(moments, trace.v_star, lambda_)
    regret = dynamic_regret(h_est, h_star)
    path_lengths = np.array([path_length(trace.v_star[i]) for i in range(N)])

    constants = empirical_constants(batches, X, moments, trace, gamma, alpha, t_burn, stride)
    if constants.beta > 0.0:
        t0, beta_window = 1, constants.beta
    else:
        t0, beta_window = constants.t_burn, constants.beta_burn

    k0 = t0 - 1
    window = regret.per_step[:, k0:]
    window_trace = np.full(T, np.nan)
    window_trace[k0:] = np.cumsum(window.sum(axis=0))
    W_traces = np.stack([path_length_trace(trace.v_star[i, k0:]) for i in range(N)])
    gaps = tracking_gaps(estimates[:, k0:], trace.v_star[:, k0:])
    initial_gaps = gaps[:, 0]

    report = RegretReport(
        regret_trace=regret.cumulative, per_node_regret=regret.per_node, path_lengths=path_lengths,
        constants=constants, lambda_=lambda_, alpha=alpha, gamma=gamma, t0=t0,
        window_regret_trace=window_trace, window_per_node_regret=window.sum(axis=1),
        window_path_lengths=W_traces[:, -1], initial_gaps=initial_gaps,
        gap_sums=gaps.sum(axis=1),
        mse_trace=None if truth is None else mse(estimates, truth),
        converged_fraction=float(np.mean(trace.converged)),
        degenerate_fraction=float(np.mean(trace.degenerate)),
    )

    if beta_window > 0.0 and alpha * constants.L_f <= 1.0 + STEP_RTOL:
        # every step in the window contracts by at most 1 - alpha * beta_window
        report.gap_bounds = cumulative_gap_bound(1.0 - alpha * beta_window, initial_gaps, W_traces[:, -1])
        if not report.gap_bound_holds:
            logger.warning("Tracking gaps exceed their contraction bound")

    try:
        bound = regret_bound(constants.B_xy, beta_window, constants.L_f, lambda_, alpha, C, N, gamma,
                             initial_gaps, W_traces[:, -1], path_length_traces=W_traces)
    except AssumptionViolated as e:
        report.bound_reason = f"not applicable: {e}"
        logger.warning(f"Regret bound not applicable: {e}")
    else:
        report.D_h = bound.D_h
        report.per_node_bound = bound.per_node
        report.bound_trace = np.full(T, np.nan)
        report.bound_trace[k0:] = bound.trace
        report.bound_reason = f"evaluated on t >= {t0}"
        logger.info(f"D_h={bound.D_h:.6g}, window regret={report.window_per_node_regret.sum():.6g}, "
                    f"bound={bound.total:.6g}, holds={report.bound_holds}")
    return report
