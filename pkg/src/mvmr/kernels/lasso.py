"""Partially-penalized lasso giving each variant its own shrinkable intercept.

The joint problem

    min over (theta0 in R^p, theta in R^K) of
        sum_j w_j (beta_y[j] - theta0[j] - beta_x[j,:] @ theta)^2
        + lam * sum_j |theta0[j]|,       w_j = 1 / se_y[j]^2,

penalizes only the per-variant intercepts.  It splits exactly into two
steps.  Writing D = diag(sqrt(w)) and P for the orthogonal projection onto
the column space of D @ beta_x:

  step 1: theta0 solves a standard lasso with response (I-P) D beta_y and
          design (I-P) D, which depends only on the Gram matrix
          D (I-P) D and the correlation vector D (I-P) D beta_y;
  step 2: theta is the weighted least squares fit of (beta_y - theta0) on
          beta_x.

Step 1 runs cyclic coordinate descent with covariance updates and a
duality-gap stopping rule at 1e-9.  The inner loop is compiled with numba
when available and falls back to an identical pure-Python implementation
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ConvergenceError, ModelError
from .wls import RANK_RTOL

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

GAP_TOL = 1e-9
MAX_SWEEPS = 20_000


def _cd_body(gram, avec, lam_half, x, zz, tol, max_sweeps):
    """Cyclic coordinate descent for min x'Gx - 2a'x + zz + 2*lam_half*|x|_1.

    Mutates ``x`` in place; returns (sweeps, gap, converged-as-int).
    For lam_half == 0 the gap column reports the gradient sup-norm instead.
    """
    p = gram.shape[0]
    gx = gram @ x
    gap = np.inf
    for sweep in range(max_sweeps):
        for j in range(p):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            rho = avec[j] - gx[j] + gjj * x[j]
            if rho > lam_half:
                xj = (rho - lam_half) / gjj
            elif rho < -lam_half:
                xj = (rho + lam_half) / gjj
            else:
                xj = 0.0
            dx = xj - x[j]
            if dx != 0.0:
                x[j] = xj
                gx += dx * gram[:, j]
        # Duality gap from Gram quantities only: r = z - A x,
        # ||r||^2 = zz - 2 a'x + x'Gx, A'r = a - Gx, r'z = zz - a'x.
        ax = float(avec @ x)
        rr = zz - 2.0 * ax + float(x @ gx)
        if rr < 0.0:
            rr = 0.0
        atr_inf = float(np.max(np.abs(avec - gx))) if p > 0 else 0.0
        lam = 2.0 * lam_half
        if lam > 0.0:
            scale = 1.0
            if 2.0 * atr_inf > lam:
                scale = lam / (2.0 * atr_inf)
            rz = zz - ax
            dual = 2.0 * scale * rz - scale * scale * rr
            l1 = float(np.sum(np.abs(x)))
            gap = rr + lam * l1 - dual
        else:
            gap = atr_inf
        if gap <= tol:
            return sweep + 1, gap, 1
    return max_sweeps, gap, 0


if _HAVE_NUMBA:
    _cd_fast = njit(cache=True)(_cd_body)
else:
    _cd_fast = _cd_body


@dataclass(frozen=True)
class PartialLassoProblem:
    """Precomputed quantities for one dataset, reusable across a lambda path."""

    beta_x: np.ndarray
    beta_y: np.ndarray
    se_y: np.ndarray
    gram: np.ndarray  # D (I-P) D
    avec: np.ndarray  # D (I-P) D beta_y
    zz: float  # ||(I-P) D beta_y||^2
    svd_u: np.ndarray
    svd_s: np.ndarray
    svd_vt: np.ndarray

    @classmethod
    def build(cls, beta_x, beta_y, se_y) -> "PartialLassoProblem":
        beta_x = np.asarray(beta_x, float)
        beta_y = np.asarray(beta_y, float)
        se_y = np.asarray(se_y, float)
        p, k = beta_x.shape
        if p <= k:
            raise ModelError(f"need more variants than risk factors (p={p}, K={k})")
        if np.any(se_y <= 0):
            raise ValueError("outcome standard errors must be positive")
        s = 1.0 / se_y
        xs = beta_x * s[:, None]
        u, sv, vt = np.linalg.svd(xs, full_matrices=False)
        if sv[0] <= 0 or sv[-1] <= RANK_RTOL * sv[0]:
            raise ModelError("weighted design is rank deficient; projection undefined")
        sy = beta_y * s
        v = sy - u @ (u.T @ sy)  # (I - P) D beta_y
        avec = s * v
        zz = float(sy @ v)
        m = -(u @ u.T)
        m[np.diag_indices(p)] += 1.0
        gram = m * s[:, None] * s[None, :]
        gram = (gram + gram.T) / 2.0
        np.fill_diagonal(gram, np.maximum(np.diagonal(gram), 0.0))
        return cls(beta_x, beta_y, se_y, gram, avec, zz, u, sv, vt)

    def lambda_max(self) -> float:
        """Smallest penalty at which step 1 returns the all-zero vector."""
        return 2.0 * float(np.max(np.abs(self.avec)))

    def solve_step1(self, lam: float, theta0_init=None) -> np.ndarray:
        if lam < 0:
            raise ValueError("penalty must be non-negative")
        p = self.gram.shape[0]
        x = np.zeros(p) if theta0_init is None else np.array(theta0_init, float)
        tol = GAP_TOL * max(1.0, self.zz)
        sweeps, gap, ok = _cd_fast(self.gram, self.avec, lam / 2.0, x, self.zz, tol, MAX_SWEEPS)
        if not ok:
            raise ConvergenceError(
                f"lasso coordinate descent stalled: gap {gap:.3e} after {sweeps} sweeps"
            )
        return x

    def step2(self, theta0) -> np.ndarray:
        """Weighted LS of the intercept-adjusted outcome on the risk-factor matrix."""
        rhs = (self.beta_y - theta0) / self.se_y
        return self.svd_vt.T @ ((self.svd_u.T @ rhs) / self.svd_s)

    def objective(self, theta0, theta, lam: float) -> float:
        r = self.beta_y - theta0 - self.beta_x @ theta
        w = 1.0 / self.se_y**2
        return float(np.dot(w * r, r) + lam * np.sum(np.abs(theta0)))


def lasso_lambda_max(beta_x, beta_y, se_y) -> float:
    return PartialLassoProblem.build(beta_x, beta_y, se_y).lambda_max()


def partial_penalized_lasso(beta_x, beta_y, se_y, lam: float):
    """Solve the partially-penalized problem at one penalty value.

    Returns ``(theta0, theta)``: the per-variant intercepts (exact zeros mark
    variants treated as valid) and the causal-effect coefficients.
    """
    prob = PartialLassoProblem.build(beta_x, beta_y, se_y)
    theta0 = prob.solve_step1(lam)
    theta = prob.step2(theta0)
    return theta0, theta
