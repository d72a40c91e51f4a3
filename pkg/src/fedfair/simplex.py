"""Probability-simplex geometry.

The server's decision space is the probability simplex
``{p in R^K : p_i >= 0, sum(p) = 1}``. This module provides the exact
Euclidean projection, a generalized (Mahalanobis) projection used by the
second-order aggregator, and renormalization of a decision onto a sampled
subset of coordinates.

All functions are pure and thread-safe.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError, DegenerateSubsetError, InvalidInputError, InvalidMatrixError

SIMPLEX_SUM_TOL = 1e-9


def uniform(k: int) -> np.ndarray:
    """Uniform point of the (k-1)-simplex."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    return np.full(k, 1.0 / k)


def is_simplex(v: np.ndarray, tol: float = SIMPLEX_SUM_TOL) -> bool:
    """True if ``v`` is entrywise nonnegative and sums to 1 within ``tol``."""
    v = np.asarray(v, dtype=float)
    return bool(
        v.ndim == 1
        and v.size >= 1
        and np.all(np.isfinite(v))
        and np.all(v >= -tol)
        and abs(v.sum() - 1.0) <= tol
    )


def project_euclidean(v: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection onto the probability simplex.

    Sort-and-threshold algorithm, O(K log K): find the largest support size
    rho such that the water level theta = (sum of the rho largest entries - 1)/rho
    leaves those entries positive, then clip ``v - theta`` at zero.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise InvalidInputError("expected a nonempty 1-d vector")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("projection input must be finite")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _check_psd(b: np.ndarray) -> np.ndarray:
    """Validate symmetry and positive definiteness; return eigenvalues."""
    b = np.asarray(b, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise InvalidMatrixError("metric must be a square matrix")
    if not np.all(np.isfinite(b)):
        raise InvalidMatrixError("metric must be finite")
    if np.max(np.abs(b - b.T)) > 1e-12 * max(1.0, np.max(np.abs(b))):
        raise InvalidMatrixError("metric must be symmetric")
    eigs = np.linalg.eigvalsh(b)
    if eigs[0] <= 0.0:
        raise InvalidMatrixError(f"metric must be positive definite (min eigenvalue {eigs[0]:.3e})")
    return eigs


def project_mahalanobis(
    v: np.ndarray,
    b: np.ndarray,
    start: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int | None = None,
) -> np.ndarray:
    """argmin over the simplex of (x - v)^T B (x - v) for positive definite B.

    Solved by projected-gradient descent in the Euclidean metric with a
    Barzilai-Borwein trial step and Armijo backtracking, stopping when the
    iterate moves less than ``tol`` in sup norm. ``start`` warm-starts the
    iteration (callers stepping a slowly-moving decision benefit a lot).

    Raises ConvergenceError (carrying the best iterate and its movement
    residual) if the cap ``max_iter`` (default 10*K*(-log10 tol)) is hit.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("projection input must be finite")
    eigs = _check_psd(b)
    k = v.size
    if b.shape[0] != k:
        raise InvalidInputError("metric dimension does not match vector")
    if max_iter is None:
        max_iter = int(10 * k * max(1.0, -np.log10(tol)))
    if max_iter < 1:
        raise InvalidInputError("max_iter must be >= 1")

    lam_max = eigs[-1]
    x = project_euclidean(v if start is None else np.asarray(start, dtype=float))

    def fval(y):
        d = y - v
        return float(d @ (b @ d))

    f_x = fval(x)
    grad = 2.0 * (b @ (x - v))
    step = 1.0 / (2.0 * lam_max)
    prev_x = None
    prev_grad = None
    for _ in range(max_iter):
        # Barzilai-Borwein trial step, safeguarded to a sane range.
        if prev_x is not None:
            dx = x - prev_x
            dg = grad - prev_grad
            denom = float(dx @ dg)
            if denom > 0:
                step = float(dx @ dx) / denom
        step = float(np.clip(step, 1.0 / (20.0 * lam_max), 1e6 / lam_max))

        # Armijo backtracking on the proximal-gradient decrease condition.
        for _ in range(60):
            x_new = project_euclidean(x - step * grad)
            d = x_new - x
            f_new = fval(x_new)
            if f_new <= f_x + grad @ d + (d @ d) / (2.0 * step) + 1e-18:
                break
            step *= 0.5
        move = float(np.max(np.abs(x_new - x)))
        prev_x, prev_grad = x, grad
        x, f_x = x_new, f_new
        grad = 2.0 * (b @ (x - v))
        if move <= tol:
            return x
    raise ConvergenceError(
        f"simplex projection did not converge in {max_iter} iterations",
        iterate=x,
        residual=move,
    )


def normalize_subset(p: np.ndarray, subset: np.ndarray) -> np.ndarray:
    """Renormalize selected decision entries so they sum to 1.

    Returns the |S|-length vector p_i / sum_{j in S} p_j in the order given
    by ``subset`` (0-based indices). Ratios among the selected entries are
    preserved.

    Raises DegenerateSubsetError on an empty subset or zero subset mass;
    callers typically fall back to uniform weights over the subset.
    """
    p = np.asarray(p, dtype=float)
    subset = np.asarray(subset, dtype=int)
    if subset.size == 0:
        raise DegenerateSubsetError("subset is empty")
    if subset.min() < 0 or subset.max() >= p.size:
        raise InvalidInputError("subset index out of range")
    if len(np.unique(subset)) != subset.size:
        raise InvalidInputError("subset contains duplicate indices")
    sel = p[subset]
    mass = sel.sum()
    if mass <= 0.0:
        raise DegenerateSubsetError("selected entries carry zero mass")
    return sel / mass
