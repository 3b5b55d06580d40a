"""Weighted least-absolute-deviations regression.

The solver smooths ``|r|`` as ``sqrt(r^2 + eps^2)`` and runs iteratively
reweighted least squares while shrinking ``eps`` from 1e-4 down to 1e-10,
then polishes by enumerating exact-interpolation candidates built from the
observations with the smallest residuals.  An LAD optimum always sits at a
vertex (it interpolates at least ``d`` observations when the design has
full rank), so the polish step both sharpens the solution and certifies
the vertex property.  The contract is the objective value, not the
iteration path.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from ..exceptions import ConvergenceError
from .wls import LinearFit, _as_design, weighted_least_squares

EPS_LEVELS = (1e-4, 1e-6, 1e-8, 1e-10)


def lad_objective(X, y, w, theta) -> float:
    """``sum_j w_j |y_j - x_j' theta|``."""
    r = np.asarray(y, float) - np.asarray(X, float) @ np.asarray(theta, float)
    return float(np.dot(np.asarray(w, float), np.abs(r)))


def _irls_batch(Xb, yb, w, inner=25, eps_levels=EPS_LEVELS):
    """Smoothed-LAD IRLS on a stack of problems.

    Xb: (B, n, d), yb: (B, n), w: (n,) shared positive weights.
    Returns (theta (B, d), iterations, last max coefficient change).
    """
    B, n, d = Xb.shape
    wrow = w[None, :, None]
    # Plain weighted LS start.
    Xw = Xb * wrow
    A = np.matmul(Xb.transpose(0, 2, 1), Xw)
    b = np.matmul(Xw.transpose(0, 2, 1), yb[:, :, None])
    theta = np.linalg.solve(A, b)[:, :, 0]
    iters = 0
    delta = np.inf
    for eps in eps_levels:
        for _ in range(inner):
            r = yb - np.matmul(Xb, theta[:, :, None])[:, :, 0]
            wi = w[None, :] / np.sqrt(r * r + eps * eps)
            Xw = Xb * wi[:, :, None]
            A = np.matmul(Xb.transpose(0, 2, 1), Xw)
            b = np.matmul(Xw.transpose(0, 2, 1), yb[:, :, None])
            new = np.linalg.solve(A, b)[:, :, 0]
            delta = float(np.max(np.abs(new - theta)))
            theta = new
            iters += 1
            if delta <= 1e-2 * eps * (1.0 + float(np.max(np.abs(theta)))):
                break
    return theta, iters, delta


def _snap_batch(Xb, yb, w, theta):
    """Replace each stacked solution by the exact fit through its d
    smallest-residual observations whenever that lowers the objective."""
    B, n, d = Xb.shape
    r = yb - np.matmul(Xb, theta[:, :, None])[:, :, 0]
    idx = np.argsort(np.abs(r), axis=1)[:, :d]
    rows = np.arange(B)[:, None]
    Xs = Xb[rows, idx, :]
    ys = yb[rows, idx]
    try:
        cand = np.linalg.solve(Xs, ys[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        cand = theta.copy()
        for bi in range(B):
            try:
                cand[bi] = np.linalg.solve(Xs[bi], ys[bi])
            except np.linalg.LinAlgError:
                pass
    obj_old = np.abs(yb - np.matmul(Xb, theta[:, :, None])[:, :, 0]) @ w
    obj_new = np.abs(yb - np.matmul(Xb, cand[:, :, None])[:, :, 0]) @ w
    better = obj_new < obj_old
    out = np.where(better[:, None], cand, theta)
    return out, np.where(better, obj_new, obj_old)


def _polish(X, y, w, theta, objective):
    """Exhaustive vertex search over interpolating subsets of the active set."""
    n, d = X.shape
    r = np.abs(y - X @ theta)
    best_theta, best_obj, found = theta, objective, False
    accept = objective * (1 + 1e-12) + 1e-15
    for size in (min(n, 2 * d + 2), min(n, 4 * d + 8), n if n <= 20 else 0):
        if size < d:
            continue
        active = np.argsort(r)[:size]
        for subset in combinations(active, d):
            sub = np.array(subset)
            try:
                cand = np.linalg.solve(X[sub], y[sub])
            except np.linalg.LinAlgError:
                continue
            obj = lad_objective(X, y, w, cand)
            if (found and obj < best_obj) or (not found and obj <= accept):
                best_theta, best_obj, found = cand, obj, True
        if found:
            break
    return best_theta, best_obj, found


def weighted_lad(X, y, w, inner=25) -> LinearFit:
    """Minimize ``sum_j w_j |y_j - x_j' theta|``.

    Returns a vertex solution (it interpolates at least ``d`` observations)
    with the objective value attained.  No covariance is produced; callers
    needing standard errors should bootstrap.

    Raises
    ------
    ModelError
        If the design is rank deficient.
    ConvergenceError
        If the iteration cap is reached without a certified vertex.
    """
    X, y, w = _as_design(X, y, w)
    # Full-rank check (raises ModelError on deficiency).
    weighted_least_squares(X, y, w)
    theta, iters, delta = _irls_batch(X[None], y[None], w, inner=inner)
    theta = theta[0]
    obj = lad_objective(X, y, w, theta)
    vertex, vobj, found = _polish(X, y, w, theta, obj)
    converged = found or delta <= 1e-8 * (1.0 + float(np.max(np.abs(theta))))
    if not converged:
        raise ConvergenceError(
            f"LAD solver did not converge: {iters} iterations, last step {delta:.3e}, "
            f"objective {obj:.6e}"
        )
    return LinearFit(vertex if found else theta, None, vobj if found else obj, iters, True)
