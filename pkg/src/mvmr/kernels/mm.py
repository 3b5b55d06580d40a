"""MM-estimation: a high-breakdown S-estimate refined by an efficient
M-step, both built on Tukey's bisquare function.

The pipeline is the classical two-stage scheme: (i) elemental-set
subsampling proposes coefficient candidates, each scored by the M-estimate
of residual scale at 50% breakdown; the best few are refined with
scale-improving reweighting steps, yielding the S-estimate of coefficients
and scale.  (ii) Holding that scale fixed, iteratively reweighted least
squares with the bisquare psi at the 95%-efficiency constant polishes the
coefficients.  Standard errors come from the usual M-estimation sandwich
with the small-sample correction factor.

Subsampling is driven by a fixed internal seed applied after sorting the
observations into a canonical order, so results are deterministic and
exactly invariant to permutations of the input rows.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import DegeneracyError, ModelError
from .wls import LinearFit, _as_design, weighted_least_squares

TUKEY_EFFICIENCY_C = 4.685  # 95% Gaussian efficiency for the M-step
TUKEY_BREAKDOWN_C = 1.548  # 50% breakdown point for the S-scale
MSCALE_TARGET = 0.5
N_SUBSAMPLES = 500
N_REFINE = 5
_SUBSAMPLE_SEED = 0x6D766D72_6D6D  # fixed: subsampling is internal, not user-seeded


def bisquare_rho(u, c):
    """Bisquare loss, standardized so rho(inf) = 1."""
    u = np.asarray(u, float)
    t = np.clip(u / c, -1.0, 1.0)
    return 1.0 - (1.0 - t * t) ** 3


def bisquare_psi(u, c):
    """Derivative of the unstandardized bisquare loss: u (1 - (u/c)^2)^2 inside [-c, c]."""
    u = np.asarray(u, float)
    t = u / c
    out = u * (1.0 - t * t) ** 2
    return np.where(np.abs(u) < c, out, 0.0)


def bisquare_psi_prime(u, c):
    u = np.asarray(u, float)
    t2 = (u / c) ** 2
    out = (1.0 - t2) * (1.0 - 5.0 * t2)
    return np.where(np.abs(u) < c, out, 0.0)


def bisquare_weight(u, c):
    """psi(u)/u with the limit 1 at u = 0; exactly zero for |u| >= c."""
    u = np.asarray(u, float)
    t = u / c
    out = (1.0 - t * t) ** 2
    return np.where(np.abs(u) < c, out, 0.0)


def mscale(resid, c=TUKEY_BREAKDOWN_C, b=MSCALE_TARGET, tol=1e-12, max_iter=100):
    """M-estimate of scale solving mean(rho(r/s)) = b along the last axis.

    Returns 0 where at least half the residuals vanish (exact-fit case).
    """
    r = np.abs(np.asarray(resid, float))
    s = np.median(r, axis=-1) / 0.6745
    s = np.atleast_1d(np.asarray(s, float))
    exact = s <= 0.0
    s[exact] = 1.0  # placeholder, reset below
    rr = np.atleast_2d(r)
    for _ in range(max_iter):
        safe = np.where(s > 0, s, 1.0)
        m = np.mean(bisquare_rho(rr / safe[..., None], c), axis=-1)
        new = np.where(s > 0, s * np.sqrt(m / b), 0.0)
        done = np.abs(new - s) <= tol * np.maximum(s, 1e-300)
        s = new
        if np.all(done):
            break
    s[exact] = 0.0
    if np.ndim(resid) == 1:
        return float(s[0])
    return s.reshape(np.asarray(resid).shape[:-1])


def _candidate_sets(n, d, n_subsamples, rng):
    """(n_subsamples, d) index sets, distinct indices within each row."""
    u = rng.random((n_subsamples, n))
    return np.argsort(u, axis=1)[:, :d]


def _solve_candidates(X, y, sets):
    """m exact fits through d-point subsets; singular subsets are dropped."""
    Xs = X[sets, :]
    ys = y[sets]
    try:
        theta = np.linalg.solve(Xs, ys[:, :, None])[:, :, 0]
        keep = np.all(np.isfinite(theta), axis=1)
    except np.linalg.LinAlgError:
        m, d = sets.shape
        theta = np.zeros((m, d))
        keep = np.zeros(m, dtype=bool)
        for i in range(m):
            try:
                theta[i] = np.linalg.solve(Xs[i], ys[i])
                keep[i] = np.all(np.isfinite(theta[i]))
            except np.linalg.LinAlgError:
                pass
    return theta[keep]


def _s_refine(X, y, theta, c, b, max_iter=50, tol=1e-9):
    """Scale-improving reweighting steps from one candidate; returns (theta, scale)."""
    r = y - X @ theta
    s = mscale(r, c, b)
    if s == 0.0:
        return theta, 0.0
    for _ in range(max_iter):
        wgt = bisquare_weight(r / s, c)
        if np.count_nonzero(wgt) <= X.shape[1]:
            break
        try:
            new = weighted_least_squares(X, y, np.maximum(wgt, 1e-300)).coefficients
        except (ModelError, np.linalg.LinAlgError):
            break
        r = y - X @ new
        s_new = mscale(r, c, b)
        step = float(np.max(np.abs(new - theta)))
        theta = new
        if s_new == 0.0:
            return theta, 0.0
        moved = abs(s_new - s) > tol * s
        s = s_new
        if not moved and step <= tol * (1.0 + float(np.max(np.abs(theta)))):
            break
    return theta, s


def mm_regression(
    X,
    y,
    n_subsamples: int = N_SUBSAMPLES,
    max_iter: int = 50,
    tol: float = 1e-7,
) -> LinearFit:
    """Robust regression of ``y`` on ``X`` (no intercept added).

    Returns the M-step coefficients, the sandwich covariance, the bisquare
    objective ``sum(rho(r/s))`` at the efficiency constant, and a
    convergence flag.

    Raises
    ------
    DegeneracyError
        If there are too few distinct observations to subsample.
    """
    X, y, _ = _as_design(X, y)
    n, d = X.shape
    rows = np.column_stack([y, X])
    if np.unique(rows, axis=0).shape[0] <= d:
        raise DegeneracyError("too few distinct observations for subsampling")

    # Canonical order makes subsampling permutation invariant.
    order = np.lexsort(rows.T[::-1])
    Xs, ys = X[order], y[order]

    rng = np.random.default_rng(np.random.SeedSequence(_SUBSAMPLE_SEED))
    sets = _candidate_sets(n, d, n_subsamples, rng)
    cand = _solve_candidates(Xs, ys, sets)
    if cand.shape[0] == 0:
        raise DegeneracyError("all elemental subsets were singular")

    # Screen candidates by a few scale iterations, refine the best few.
    resid = ys[None, :] - cand @ Xs.T
    scr = mscale(resid, TUKEY_BREAKDOWN_C, MSCALE_TARGET, max_iter=10)
    best = np.argsort(scr)[:N_REFINE]
    theta_s, s_s = None, np.inf
    for i in best:
        t, s = _s_refine(Xs, ys, cand[i], TUKEY_BREAKDOWN_C, MSCALE_TARGET)
        if s < s_s:
            theta_s, s_s = t, s
    if s_s == 0.0:
        # Exact fit on a majority of points: coefficients are exact.
        coef = theta_s
        cov = np.zeros((d, d))
        return LinearFit(coef, cov, 0.0, 0, True)

    # M-step: IRLS at the efficiency constant, scale held fixed.
    theta = theta_s
    converged = False
    iters = 0
    for iters in range(1, max_iter + 1):
        u = (ys - Xs @ theta) / s_s
        wgt = bisquare_weight(u, TUKEY_EFFICIENCY_C)
        if np.count_nonzero(wgt) <= d:
            break
        new = weighted_least_squares(Xs, ys, np.maximum(wgt, 1e-300)).coefficients
        step = float(np.max(np.abs(new - theta)))
        theta = new
        if step <= tol * (1.0 + float(np.max(np.abs(theta)))):
            converged = True
            break

    u = (ys - Xs @ theta) / s_s
    objective = float(np.sum(bisquare_rho(u, TUKEY_EFFICIENCY_C)))

    # Sandwich covariance with the standard small-sample correction.
    psi = bisquare_psi(u, TUKEY_EFFICIENCY_C)
    psip = bisquare_psi_prime(u, TUKEY_EFFICIENCY_C)
    mean_psip = float(np.mean(psip))
    if mean_psip <= 0:
        cov = None
    else:
        corr = 1.0 + d / n * float(np.var(psip)) / mean_psip**2
        mid = float(np.sum(psi * psi)) / (n - d) / mean_psip**2
        xtx_inv = np.linalg.inv(Xs.T @ Xs)
        cov = corr**2 * s_s**2 * mid * xtx_inv
        cov = (cov + cov.T) / 2.0
    return LinearFit(theta, cov, objective, iters, converged)
