"""Weighted-least-squares step: direct normal equations and the low-rank small-system path.

The direct path solves the m x m normal equations. The small-system path
rewrites the solve, for a finite smoothing level, as an |I| x |I| system over
the active coordinates (those whose magnitude exceeds the smoothing level),
which stays well conditioned as the smoothing level shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyActiveSetError
from .linalg import RangeFactors, as_matrix, as_vector, cg_solve, solve_spd

# above this active-set size the small system is applied as an operator
DENSE_ASSEMBLY_LIMIT = 256


@dataclass(frozen=True)
class WoodburyWarmStart:
    """Previous small-system solution, projected onto the new active set before reuse."""

    prev_active: np.ndarray
    prev_gamma: np.ndarray

    def __post_init__(self):
        if self.prev_active.shape != self.prev_gamma.shape:
            raise ValueError("active indices and coefficients must have equal length")


def active_set(x, eps):
    """Indices i with |x_i| strictly greater than eps, in increasing order."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    return np.flatnonzero(np.abs(x) > eps)


def wls_direct(a, y, w):
    """Minimize <z, diag(w) z> subject to A z = y via the m x m normal equations.

    Computes diag(w)^-1 A^T (A diag(w)^-1 A^T)^-1 y. Weights must be strictly
    positive and finite; raises NotPositiveDefiniteError on rank deficiency.
    """
    a = as_matrix(a, "A")
    y = as_vector(y, "y")
    w = as_vector(w, "w")
    if np.any(w <= 0.0):
        raise ValueError("weights must be strictly positive")
    w_inv = 1.0 / w
    gram = (a * w_inv) @ a.T
    z = solve_spd(gram, y)
    return w_inv * (a.T @ z)


def wls_woodbury(factors, x_prev, eps, warm=None, cg_rel_tol=1e-12, cg_max_iters=None):
    """Weighted-least-squares step through the active-set small system.

    With I the active set of (x_prev, eps) and V the row-space basis, solves

        (eps * diag(1 / (|x_i| - eps)) + V_I V_I^T) gamma = y_tilde_I

    by conjugate gradients, warm-started from the previous solution projected
    onto I, then assembles the new iterate from y_tilde, V and gamma. The
    result equals the direct-path solution for weights 1/max(|x_prev|, eps).

    Returns (x, gamma, cg_iterations). Raises EmptyActiveSetError when no
    coordinate exceeds eps; callers fall back to the direct path.
    """
    if not np.isfinite(eps) or eps <= 0:
        raise ValueError(f"eps must be positive and finite, got {eps}")
    x_prev = as_vector(x_prev, "x_prev")
    idx = active_set(x_prev, eps)
    if idx.size == 0:
        raise EmptyActiveSetError("no coordinate exceeds the smoothing level")
    if cg_max_iters is None:
        cg_max_iters = 4 * factors.m

    d = np.abs(x_prev[idx])
    diag_g = eps / (d - eps)
    v_rows = factors.v[idx, :]
    if idx.size <= DENSE_ASSEMBLY_LIMIT:
        g = v_rows @ v_rows.T
        g[np.diag_indices_from(g)] += diag_g

        def apply(z):
            return g @ z

    else:

        def apply(z):
            return diag_g * z + v_rows @ (v_rows.T @ z)

    gamma0 = np.zeros(idx.size)
    if warm is not None and warm.prev_active.size > 0:
        pos = np.searchsorted(warm.prev_active, idx)
        pos = np.clip(pos, 0, warm.prev_active.size - 1)
        shared = warm.prev_active[pos] == idx
        gamma0[shared] = warm.prev_gamma[pos[shared]]

    gamma, iters = cg_solve(apply, factors.y_tilde[idx], gamma0, cg_rel_tol, cg_max_iters)
    x = factors.y_tilde - factors.v @ (v_rows.T @ gamma)
    x[idx] += gamma
    return x, gamma, iters


def select_path(config, eps, active_size, m):
    """Pick the WLS path for one step.

    In auto mode the small-system path is used iff the smoothing level is
    finite and the active set is at most woodbury_active_fraction * m;
    explicit direct/woodbury settings are forced.
    """
    if config.wls_path == "direct":
        return "direct"
    if config.wls_path == "woodbury":
        return "woodbury"
    if np.isfinite(eps) and active_size <= config.woodbury_active_fraction * m:
        return "woodbury"
    return "direct"


def condition_diagnostics(a, w, x_prev, eps):
    """2-norm condition numbers of the small-system matrix and of A diag(w)^-1 A^T.

    Both are computed from dense spectral factorizations. The active set of
    (x_prev, eps) must be nonempty.
    """
    a = as_matrix(a, "A")
    w = as_vector(w, "w")
    x_prev = as_vector(x_prev, "x_prev")
    idx = active_set(x_prev, eps)
    if idx.size == 0:
        raise EmptyActiveSetError("no coordinate exceeds the smoothing level")

    gram = (a * (1.0 / w)) @ a.T
    sv_full = np.linalg.svd(gram, compute_uv=False)
    kappa_full = float(sv_full[0] / sv_full[-1])

    _, _, vt = np.linalg.svd(a, full_matrices=False)
    v_rows = vt.T[idx, :]
    g = v_rows @ v_rows.T
    g[np.diag_indices_from(g)] += eps / (np.abs(x_prev[idx]) - eps)
    sv_g = np.linalg.svd(g, compute_uv=False)
    kappa_g = float(sv_g[0] / sv_g[-1])
    return kappa_g, kappa_full
