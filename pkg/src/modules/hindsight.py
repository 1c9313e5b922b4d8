"""
Clairvoyant comparator: v_i*[t] = argmin_v f_t^i(v) + lambda ||v_{1:N-1}||_1.

``solve_comparator`` is plain batch proximal gradient with step 1/lambda_max(Phi);
``exact_oracle`` enumerates sign patterns of the a-part for small instances.
"""
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from modules.errors import DimensionMismatch, NoConsistentPattern
from modules.logger import get_logger
from modules.tracker import prox_partial_l1

logger = get_logger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
ORACLE_MAX_DIM = 6
DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True)
class ComparatorSolution:
    v: np.ndarray
    converged: bool
    iterations: int
    residual: float


@dataclass
class ComparatorTrace:
    """Hindsight optima; arrays indexed [i, t-1]."""
    v_star: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    degenerate: np.ndarray

    @property
    def N(self):
        return self.v_star.shape[0]

    @property
    def T(self):
        return self.v_star.shape[1]

    @property
    def all_converged(self):
        return bool(np.all(self.converged))


def extreme_eigenvalues(Phi):
    """(lambda_min, lambda_max) of a symmetric matrix."""
    w = linalg.eigvalsh(Phi)
    return float(w[0]), float(w[-1])


def solve_comparator(Phi, r, lambda_, step=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, v0=None):
    """
    Minimise 1/2 v'Phi v - r'v + lambda ||v_{1:N-1}||_1 by proximal gradient.

    Args:
        Phi: N x N symmetric PSD moment matrix
        r: length-N cross moment
        lambda_: l1 weight on the a-part
        step: Step size; defaults to 1/lambda_max(Phi)
        tol: Bound on the fixed-point residual ||v - prox(v - step grad f(v))||
        max_iter: Iteration cap
        v0: Warm start (zeros when None)

    Returns:
        ComparatorSolution (converged is False when max_iter was hit)
    """
    Phi = np.asarray(Phi, dtype=float)
    r = np.asarray(r, dtype=float)
    N = r.shape[0]
    if Phi.shape != (N, N):
        raise DimensionMismatch(f"Phi {Phi.shape} and r {r.shape} disagree")

    v = np.zeros(N) if v0 is None else np.array(v0, dtype=float)
    if step is None:
        L = extreme_eigenvalues(Phi)[1]
        if L <= 0.0:
            # Phi = 0 only before any data arrived; the objective is then linear in v
            v = np.zeros(N)
            residual = float(np.linalg.norm(r))
            return ComparatorSolution(v=v, converged=residual <= tol, iterations=0, residual=residual)
        step = 1.0 / L

    residual = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        v_next = prox_partial_l1(v - step * (Phi @ v - r), step, lambda_)
        residual = float(np.linalg.norm(v_next - v))
        v = v_next
        if residual <= tol:
            break

    converged = residual <= tol
    return ComparatorSolution(v=v, converged=converged, iterations=iterations, residual=residual)


def exact_oracle(Phi, r, lambda_):
    """
    Exact minimiser by enumerating the 3^(N-1) sign patterns of the a-part.

    Args:
        Phi: N x N positive definite matrix, N <= 6
        r: length-N vector
        lambda_: l1 weight

    Returns:
        v_star
    """
    Phi = np.asarray(Phi, dtype=float)
    r = np.asarray(r, dtype=float)
    N = r.shape[0]
    if N > ORACLE_MAX_DIM:
        raise DimensionMismatch(f"exact_oracle supports N <= {ORACLE_MAX_DIM}, got {N}")

    scale = 1.0 + float(np.max(np.abs(r))) + lambda_
    feas_tol = 1e-9 * scale
    best = None
    for signs in itertools.product((-1, 0, 1), repeat=N - 1):
        s = np.array(signs + (0,), dtype=float)
        active = np.array([sg != 0 for sg in signs] + [True])
        v = np.zeros(N)
        rhs = r[active] - lambda_ * s[active]
        try:
            v[active] = linalg.solve(Phi[np.ix_(active, active)], rhs, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            continue

        a_active = active[:-1]
        if np.any(v[:-1][a_active] * s[:-1][a_active] <= 0.0):
            continue
        grad = Phi @ v - r
        if np.any(np.abs(grad[:-1][~a_active]) > lambda_ + feas_tol):
            continue
        # Prefer the pattern with the smallest dual violation
        violation = float(np.max(np.abs(grad[:-1][~a_active]), initial=0.0))
        if best is None or violation < best[0]:
            best = (violation, v)

    if best is None:
        raise NoConsistentPattern(f"No sign pattern satisfies the KKT conditions (N={N}, lambda={lambda_})")
    return best[1]


def _node_sweep(moments, i, lambda_, tol, max_iter, warm_start):
    T, N = moments.T, moments.N
    v_star = np.zeros((T, N))
    converged = np.zeros(T, dtype=bool)
    iterations = np.zeros(T, dtype=np.int64)
    degenerate = np.zeros(T, dtype=bool)
    previous = None
    for k in range(T):
        Phi = moments.Phi[k, i]
        lam_min, lam_max = extreme_eigenvalues(Phi)
        degenerate[k] = lam_min <= DEGENERATE_RTOL * max(lam_max, 1.0)
        sol = solve_comparator(Phi, moments.r[k, i], lambda_, tol=tol, max_iter=max_iter,
                               v0=previous if warm_start else None)
        v_star[k] = sol.v
        converged[k] = sol.converged
        iterations[k] = sol.iterations
        previous = sol.v
    return v_star, converged, iterations, degenerate


def comparator_trace(moments, lambda_, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                     warm_start=True, workers=1):
    """
    Solve every (i, t) subproblem of a MomentHistory.

    Args:
        moments: MomentHistory covering t = 1..T
        lambda_: l1 weight
        tol: Solver tolerance
        max_iter: Solver iteration cap
        warm_start: Start each solve from v_i*[t-1]
        workers: Thread-pool width across nodes

    Returns:
        ComparatorTrace
    """
    nodes = range(moments.N)
    sweep = lambda i: _node_sweep(moments, i, lambda_, tol, max_iter, warm_start)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(sweep, nodes))
    else:
        results = [sweep(i) for i in nodes]

    trace = ComparatorTrace(
        v_star=np.stack([res[0] for res in results]),
        converged=np.stack([res[1] for res in results]),
        iterations=np.stack([res[2] for res in results]),
        degenerate=np.stack([res[3] for res in results]),
    )

    failed = int(np.sum(~trace.converged))
    if failed:
        logger.warning(f"{failed} comparator solves hit max_iter={max_iter} before tol={tol:g}")
    degenerate = int(np.sum(trace.degenerate))
    if degenerate:
        logger.warning(f"{degenerate} subproblems have lambda_min(Phi) = 0; "
                       f"minimisers may be non-unique and path lengths are indicative only")
    logger.info(f"Comparator trace: {moments.N} nodes x {moments.T} steps, "
                f"{int(trace.iterations.sum())} iterations")
    return trace
