"""Smoothed-l1 objective machinery and the reweighted-least-squares main loop.

The solver minimizes the l1 norm subject to A x = y by repeatedly solving
weighted least-squares problems. Coordinates are weighted by
1 / max(|x_i|, eps) with a smoothing level eps that shrinks with the best
s-term approximation error of the iterate, so the surrogate objective
tightens onto the l1 norm as the iterate becomes sparse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyActiveSetError, ExactSolution
from .linalg import as_matrix, as_vector, thin_factorization
from .wls import WoodburyWarmStart, active_set, select_path, wls_direct, wls_woodbury


@dataclass
class Problem:
    """Measurement matrix, data vector, target sparsity and optional ground truth.

    The ground truth, when given, must be consistent with the data:
    ||A x_star - y|| <= 1e-8 * max(1, ||y||).
    """

    a: np.ndarray
    y: np.ndarray
    s: int
    x_star: np.ndarray | None = None

    def __post_init__(self):
        self.a = as_matrix(self.a, "A")
        self.y = as_vector(self.y, "y")
        m, n = self.a.shape
        if m > n:
            raise ValueError(f"A must have m <= N, got {m}x{n}")
        if self.y.shape[0] != m:
            raise ValueError(f"y has length {self.y.shape[0]}, expected {m}")
        if not 1 <= self.s < n:
            raise ValueError(f"target sparsity must satisfy 1 <= s < N, got s={self.s}, N={n}")
        if self.x_star is not None:
            self.x_star = as_vector(self.x_star, "x_star")
            if self.x_star.shape[0] != n:
                raise ValueError(f"x_star has length {self.x_star.shape[0]}, expected {n}")
            resid = float(np.linalg.norm(self.a @ self.x_star - self.y))
            if resid > 1e-8 * max(1.0, float(np.linalg.norm(self.y))):
                raise ValueError(f"x_star is not consistent with the data (residual {resid:.3e})")

    @property
    def m(self):
        return self.a.shape[0]

    @property
    def n(self):
        return self.a.shape[1]


@dataclass
class SolverConfig:
    """Stopping rule, WLS path selection and CG controls.

    cg_max_iters defaults to 4m when left as None. In auto mode the
    small-system path is taken once the active set is at most
    woodbury_active_fraction * m coordinates.
    """

    max_iters: int = 500
    rel_change_tol: float = 1e-10
    eps_floor: float = 1e-14
    wls_path: str = "auto"
    woodbury_active_fraction: float = 0.5
    cg_rel_tol: float = 1e-12
    cg_max_iters: int | None = None
    record_trace: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_change_tol <= 0 or self.eps_floor <= 0 or self.cg_rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.wls_path not in ("direct", "woodbury", "auto"):
            raise ValueError(f"unknown wls_path {self.wls_path!r}")
        if not 0.0 < self.woodbury_active_fraction <= 1.0:
            raise ValueError("woodbury_active_fraction must lie in (0, 1]")
        if self.cg_max_iters is not None and self.cg_max_iters < 1:
            raise ValueError("cg_max_iters must be >= 1")


@dataclass
class IterateState:
    """Current iterate, smoothing level, weights and warm-start data.

    x is None before the first step when no initial iterate was supplied.
    warm_gamma holds (active indices, coefficients) of the previous
    small-system solution.
    """

    x: np.ndarray | None
    eps: float
    w: np.ndarray
    k: int
    warm_gamma: tuple[np.ndarray, np.ndarray] | None = None


@dataclass
class IterationRecord:
    """Per-iteration metrics; optional entries are None when not computable."""

    k: int
    eps: float
    J: float | None = None
    gap: float | None = None
    l1_err: float | None = None
    mu: float | None = None
    mu_l1: float | None = None
    zeta: float | None = None
    support_ok: bool | None = None
    path: str | None = None
    cg_iters: int = 0
    feas_residual: float | None = None


def best_s_term_error(x, s):
    """l1 mass of x outside its s largest-magnitude entries.

    Ties among equal magnitudes keep the smaller index in the top-s set,
    so the result is deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if not 0 <= s <= n:
        raise ValueError(f"s must lie in [0, {n}], got {s}")
    if s >= n:
        return 0.0
    mags = np.abs(x)
    if s == 0:
        return float(np.sum(mags))
    order = np.argsort(-mags, kind="stable")
    return float(np.sum(mags[order[s:]]))


def top_magnitude_indices(x, s):
    """Indices of the s largest-magnitude entries, ties broken toward smaller index."""
    order = np.argsort(-np.abs(np.asarray(x, dtype=np.float64)), kind="stable")
    return np.sort(order[:s])


def smoothed_objective(x, eps):
    """Huber-type surrogate for the l1 norm at smoothing level eps > 0.

    Each coordinate contributes |x_i| if |x_i| > eps and
    (x_i^2 / eps + eps) / 2 otherwise, so the total lies between ||x||_1 and
    ||x||_1 + N * eps.
    """
    if not (np.isfinite(eps) and eps > 0):
        raise ValueError(f"eps must be positive and finite, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    mags = np.abs(x)
    return float(np.sum(np.where(mags > eps, mags, 0.5 * (x * x / eps + eps))))


def objective_gradient(x, eps):
    """Gradient of the smoothed objective: sign(x_i) above eps, x_i / eps below."""
    if not (np.isfinite(eps) and eps > 0):
        raise ValueError(f"eps must be positive and finite, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) > eps, np.sign(x), x / eps)


def weights(x, eps):
    """Reweighting vector 1 / max(|x_i|, eps); diag(w) x equals the objective gradient."""
    if not (np.isfinite(eps) and eps > 0):
        raise ValueError(f"eps must be positive and finite, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    return 1.0 / np.maximum(np.abs(x), eps)


def quadratic_majorizer(z, x, eps):
    """Value at z of the quadratic model around x.

    Equals the smoothed objective at z = x and dominates it everywhere,
    which is what makes each weighted-least-squares step a descent step.
    """
    z = np.asarray(z, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    w = weights(x, eps)
    return smoothed_objective(x, eps) + 0.5 * float(z @ (w * z)) - 0.5 * float(x @ (w * x))


def smoothing_update(eps_prev, x_next, s, n):
    """New smoothing level: min of the previous one and best_s_term_error / N.

    Returns 0 exactly when x_next is s-sparse, which signals an exact solution.
    """
    if not eps_prev > 0:
        raise ValueError(f"eps_prev must be positive (or inf), got {eps_prev}")
    if s >= n:
        raise ValueError(f"s must be < N, got s={s}, N={n}")
    return min(eps_prev, best_s_term_error(x_next, s) / n)


def support_identified(x_k, x_star, s):
    """Whether the s largest-magnitude coordinates of x_k match the reference support.

    The reference support is supp(x_star) when x_star has at most s nonzeros,
    and the s largest-magnitude coordinates of x_star otherwise (ties toward
    the smaller index). Comparison is exact set equality.
    """
    x_star = np.asarray(x_star, dtype=np.float64)
    ref = ground_truth_support(x_star, s)
    if ref.size != s:
        return False
    return bool(np.array_equal(top_magnitude_indices(x_k, s), ref))


def ground_truth_support(x_star, s):
    """Reference support: the nonzeros, or the s largest magnitudes if there are more."""
    x_star = np.asarray(x_star, dtype=np.float64)
    nnz = np.flatnonzero(x_star)
    if nnz.size <= s:
        return nnz
    return top_magnitude_indices(x_star, s)


def initial_state(problem, w0=None, eps0=math.inf, x0=None):
    """Build the starting state: uniform weights and infinite smoothing by default."""
    n = problem.n
    if w0 is None:
        w = np.ones(n)
    else:
        w = as_vector(w0, "w0")
        if w.shape[0] != n:
            raise ValueError(f"w0 has length {w.shape[0]}, expected {n}")
        if np.any(w <= 0.0):
            raise ValueError("w0 must be strictly positive")
    if not eps0 > 0:
        raise ValueError(f"eps0 must be positive (or inf), got {eps0}")
    x = None
    if x0 is not None:
        x = as_vector(x0, "x0")
        if x.shape[0] != n:
            raise ValueError(f"x0 has length {x.shape[0]}, expected {n}")
    return IterateState(x=x, eps=float(eps0), w=w, k=0)


def _l1(v):
    return float(np.sum(np.abs(v)))


def _objective_value(x, eps):
    # at eps = 0 or eps = inf the surrogate is reported as the plain l1 norm
    if eps == 0.0 or math.isinf(eps):
        return _l1(x)
    return smoothed_objective(x, eps)


def _make_record(problem, x, eps, k, path, cg_iters):
    rec = IterationRecord(k=k, eps=eps, path=path, cg_iters=cg_iters)
    rec.J = _objective_value(x, eps)
    y_norm = float(np.linalg.norm(problem.y))
    rec.feas_residual = float(np.linalg.norm(problem.a @ x - problem.y)) / max(y_norm, 1.0)
    if problem.x_star is not None:
        rec.gap = rec.J - _l1(problem.x_star)
        rec.l1_err = _l1(x - problem.x_star)
        supp = ground_truth_support(problem.x_star, problem.s)
        if supp.size > 0:
            rec.zeta = rec.l1_err / float(np.min(np.abs(problem.x_star[supp])))
        rec.support_ok = support_identified(x, problem.x_star, problem.s)
    return rec


def irls_step(state, problem, config, factors):
    """One solver step: WLS solve, smoothing update, reweighting.

    Returns the next state and its iteration record (rate ratios are filled
    by the run loop). Raises ExactSolution when the new smoothing level is
    exactly zero, carrying the terminal iterate; weights are never formed at
    zero smoothing.
    """
    m, n = problem.m, problem.n
    cg_max = config.cg_max_iters if config.cg_max_iters is not None else 4 * m

    # the small-system path needs an iterate whose weights match (x, eps)
    woodbury_ready = (
        state.x is not None
        and np.isfinite(state.eps)
        and np.allclose(state.w, weights(state.x, state.eps), rtol=1e-12, atol=0.0)
    )
    act_size = active_set(state.x, state.eps).size if woodbury_ready else n
    path = select_path(config, state.eps, act_size, m)
    if path == "woodbury" and not woodbury_ready:
        path = "direct"

    cg_iters = 0
    warm_out = None
    x_next = None
    if path == "woodbury":
        warm = WoodburyWarmStart(*state.warm_gamma) if state.warm_gamma is not None else None
        try:
            x_next, gamma, cg_iters = wls_woodbury(
                factors, state.x, state.eps, warm, config.cg_rel_tol, cg_max
            )
            warm_out = (active_set(state.x, state.eps), gamma)
        except EmptyActiveSetError:
            path = "direct"
    if path == "direct":
        x_next = wls_direct(problem.a, problem.y, state.w)

    eps_next = smoothing_update(state.eps, x_next, problem.s, n)
    k_next = state.k + 1
    record = _make_record(problem, x_next, eps_next, k_next, path, cg_iters)
    if eps_next == 0.0:
        raise ExactSolution(x_next, record)
    state_next = IterateState(
        x=x_next,
        eps=eps_next,
        w=weights(x_next, eps_next),
        k=k_next,
        warm_gamma=warm_out,
    )
    return state_next, record


def _fill_ratios(rec, prev):
    if prev is None or rec.k < 1:
        return
    if rec.k >= 2 and prev.gap is not None and prev.gap > 0 and rec.gap is not None and rec.gap >= 0:
        rec.mu = rec.gap / prev.gap
    if prev.l1_err is not None and prev.l1_err > 0 and rec.l1_err is not None:
        rec.mu_l1 = rec.l1_err / prev.l1_err


def irls_run(problem, config=None, w0=None, eps0=math.inf, x0=None):
    """Run the solver until an exact sparse iterate, convergence, or max_iters.

    Returns (x_final, trace, status) with status one of "exact_sparse"
    (smoothing level hit zero), "converged" (l1 change below
    rel_change_tol and smoothing level below the floor) or "max_iters".
    The trace is a list of IterationRecord, populated when
    config.record_trace; ground-truth columns are filled only when the
    problem carries x_star.
    """
    if config is None:
        config = SolverConfig()
    factors = thin_factorization(problem.a, problem.y)
    state = initial_state(problem, w0=w0, eps0=eps0, x0=x0)
    n = problem.n
    eps_stop = config.eps_floor * max(1.0, _l1(problem.y)) / n

    records = []
    prev_record = None
    if state.x is not None:
        prev_record = _make_record(problem, state.x, state.eps, 0, None, 0)
    else:
        prev_record = IterationRecord(k=0, eps=state.eps)
    if config.record_trace:
        records.append(prev_record)

    x_final = state.x
    status = "max_iters"
    for _ in range(config.max_iters):
        try:
            state_next, rec = irls_step(state, problem, config, factors)
        except ExactSolution as signal:
            _fill_ratios(signal.record, prev_record)
            if config.record_trace:
                records.append(signal.record)
            return signal.x, records, "exact_sparse"
        _fill_ratios(rec, prev_record)
        if config.record_trace:
            records.append(rec)
        prev_record = rec
        x_final = state_next.x
        if state.x is not None:
            change = _l1(state_next.x - state.x)
            if change <= config.rel_change_tol * max(1.0, _l1(state.x)) and state_next.eps <= eps_stop:
                status = "converged"
                state = state_next
                break
        state = state_next
    return x_final, records, status
