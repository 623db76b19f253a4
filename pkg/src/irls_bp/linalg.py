"""Dense linear-algebra kernels: SPD solves, thin orthogonal factorization, warm-started CG."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import CgBreakdownError, NotPositiveDefiniteError, RankDeficientError

RANK_TOL = 1e-12


def as_matrix(a, name="matrix"):
    """Validate and return a 2-D float64 array with finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a nonempty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_vector(a, name="vector"):
    """Validate and return a 1-D float64 array with finite entries."""
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ValueError(f"{name} must be a nonempty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


@dataclass(frozen=True)
class RangeFactors:
    """Precomputed orthogonal factorization of the measurement matrix.

    v has orthonormal columns spanning the row space of A (N x m), u is
    orthogonal (m x m), sigma holds the singular values in nonincreasing
    order, and y_tilde is the minimum-norm solution of A z = y, reusable
    across iterations.
    """

    v: np.ndarray
    u: np.ndarray
    sigma: np.ndarray
    y_tilde: np.ndarray

    @property
    def m(self):
        return self.v.shape[1]

    @property
    def n(self):
        return self.v.shape[0]


def solve_spd(mat, b):
    """Solve M x = b for symmetric positive-definite M by Cholesky.

    One or two steps of iterative refinement keep the relative residual near
    machine precision even for moderately ill-conditioned systems.

    Raises NotPositiveDefiniteError if the factorization meets a nonpositive
    pivot (rank-deficient or indefinite input).
    """
    mat = as_matrix(mat, "M")
    b = as_vector(b, "b")
    n = mat.shape[0]
    if mat.shape[1] != n or b.shape[0] != n:
        raise ValueError(f"shape mismatch: M is {mat.shape}, b has length {b.shape[0]}")
    scale = max(1.0, float(np.max(np.abs(mat))))
    if float(np.max(np.abs(mat - mat.T))) > 1e-12 * scale:
        raise ValueError("M is not symmetric")
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(n)
    try:
        chol = scipy.linalg.cho_factor(mat, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    x = scipy.linalg.cho_solve(chol, b, check_finite=False)
    for _ in range(2):
        r = b - mat @ x
        if float(np.linalg.norm(r)) <= 1e-14 * b_norm:
            break
        x = x + scipy.linalg.cho_solve(chol, r, check_finite=False)
    return x


def thin_factorization(a, y):
    """Factor A = U diag(sigma) V^T (thin SVD) and precompute the minimum-norm solution.

    Requires m <= N and full row rank (smallest singular value above
    RANK_TOL times the largest); raises RankDeficientError otherwise.
    """
    a = as_matrix(a, "A")
    y = as_vector(y, "y")
    m, n = a.shape
    if m > n:
        raise ValueError(f"A must have m <= N, got {m}x{n}")
    if y.shape[0] != m:
        raise ValueError(f"y has length {y.shape[0]}, expected {m}")
    u, sigma, vt = np.linalg.svd(a, full_matrices=False)
    if sigma[-1] <= RANK_TOL * sigma[0]:
        raise RankDeficientError(
            f"smallest singular value {sigma[-1]:.3e} below {RANK_TOL:.0e} x largest {sigma[0]:.3e}"
        )
    v = vt.T
    y_tilde = v @ ((u.T @ y) / sigma)
    return RangeFactors(v=v, u=u, sigma=sigma, y_tilde=y_tilde)


def cg_solve(apply, b, x0, rel_tol, max_iters):
    """Conjugate gradients for an SPD operator, warm-started at x0.

    Stops at the first iterate whose true residual satisfies
    ||apply(x) - b|| <= rel_tol * ||b||, or after max_iters iterations.
    Returns (x, iterations used).

    Raises CgBreakdownError when a search direction has curvature <= 0,
    which signals a non-SPD operator.
    """
    b = as_vector(b, "b")
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b), 0
    x = np.array(x0, dtype=np.float64, copy=True)
    r = b - apply(x)
    threshold = rel_tol * b_norm
    if float(np.linalg.norm(r)) <= threshold:
        return x, 0
    p = r.copy()
    rs = float(r @ r)
    for it in range(1, max_iters + 1):
        ap = apply(p)
        curvature = float(p @ ap)
        if curvature <= 0.0:
            raise CgBreakdownError(f"nonpositive curvature {curvature:.3e} at iteration {it}")
        alpha = rs / curvature
        x += alpha * p
        r -= alpha * ap
        rs_next = float(r @ r)
        if rs_next**0.5 <= threshold:
            # recurrence residual can drift; confirm against the true residual
            true_res = float(np.linalg.norm(b - apply(x)))
            if true_res <= threshold:
                return x, it
        p = r + (rs_next / rs) * p
        rs = rs_next
    return x, max_iters
