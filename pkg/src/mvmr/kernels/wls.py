"""Weighted least squares on small dense designs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ModelError

# Smallest/largest singular value below this ratio counts as rank deficient.
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class LinearFit:
    """Solution of one regression problem.

    Attributes
    ----------
    coefficients : ndarray, shape (d,)
    covariance : ndarray or None
        (d, d) covariance of the coefficients, symmetric PSD when present.
    objective : float
        Value of the solver's objective at the optimum.
    iterations : int
    converged : bool
    """

    coefficients: np.ndarray
    covariance: np.ndarray | None
    objective: float
    iterations: int
    converged: bool


def _as_design(X, y, w=None):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("design matrix must be two-dimensional")
    n, d = X.shape
    if y.shape != (n,):
        raise ValueError("response length does not match design")
    if n <= d:
        raise ModelError(f"need more observations than coefficients (n={n}, d={d})")
    if w is None:
        return X, y, None
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ValueError("weight length does not match design")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    return X, y, w


def weighted_least_squares(X, y, w, dispersion: str = "fixed") -> LinearFit:
    """Minimize ``sum_j w_j (y_j - x_j' theta)^2``.

    The covariance is ``(X' W X)^{-1}``, optionally inflated by the
    multiplicative overdispersion factor ``max(1, RSS_w / (n - d))`` when
    ``dispersion == "multiplicative"`` (``"fixed"`` keeps unit scale).

    Raises
    ------
    ModelError
        If the weighted design is rank deficient.
    """
    if dispersion not in ("fixed", "multiplicative"):
        raise ValueError(f"unknown dispersion mode {dispersion!r}")
    X, y, w = _as_design(X, y, w)
    n, d = X.shape
    sw = np.sqrt(w)
    U, s, Vt = np.linalg.svd(X * sw[:, None], full_matrices=False)
    if s[0] <= 0 or s[-1] <= RANK_RTOL * s[0]:
        raise ModelError("singular weighted design (rank deficient)")
    coef = Vt.T @ ((U.T @ (y * sw)) / s)
    resid = y - X @ coef
    rss = float(np.dot(w * resid, resid))
    scale = 1.0 if dispersion == "fixed" else max(1.0, rss / (n - d))
    cov = (Vt.T / (s * s)) @ Vt * scale
    cov = (cov + cov.T) / 2.0
    return LinearFit(coef, cov, rss, 1, True)
