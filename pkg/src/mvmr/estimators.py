"""The six multivariable Mendelian randomization estimators.

Every method maps a :class:`~mvmr.data.SummaryDataset` to an
:class:`EstimationResult` holding, per risk factor, the causal-effect
estimate, its standard error, a 95% normal confidence interval and a
two-sided normal p-value.  Unless noted otherwise the inverse-variance
weighted fits use multiplicative random-effects dispersion floored at one;
fixed-effect (unit) dispersion is available by flag.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .data import SummaryDataset, orient_to_risk_factor
from .exceptions import DegeneracyError
from .kernels.lad import _irls_batch, _snap_batch, weighted_lad
from .kernels.lasso import PartialLassoProblem
from .kernels.mm import mm_regression
from .kernels.rng import RandomSource
from .kernels.wls import weighted_least_squares

METHOD_NAMES = ("ivw", "egger", "presso", "robust", "median", "lasso")
Z975 = float(stats.norm.ppf(0.975))
RESULTS_HEADER = (
    "method",
    "risk_factor",
    "estimate",
    "se",
    "ci_lower",
    "ci_upper",
    "p_value",
    "n_variants",
)

DEFAULT_PRESSO_M = 1000
DEFAULT_BOOTSTRAP_B = 1000
DEFAULT_ALPHA = 0.05
LAMBDA_GRID_SIZE = 100
LAMBDA_GRID_SPAN = 0.01


def _p_two_sided(est, se):
    est = np.asarray(est, float)
    se = np.asarray(se, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(est) / se
    p = 2.0 * stats.norm.sf(z)
    p = np.where(se == 0, np.where(est == 0, 1.0, 0.0), p)
    return p


@dataclass(frozen=True)
class EstimationResult:
    """Causal-effect estimates of one method on one dataset."""

    method: str
    estimates: np.ndarray
    standard_errors: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    p_values: np.ndarray
    variants_used: tuple
    q_statistic: float | None = None
    notes: dict = field(default_factory=dict)

    @classmethod
    def from_estimates(cls, method, estimates, standard_errors, variants_used,
                       q_statistic=None, notes=None):
        est = np.asarray(estimates, float)
        se = np.asarray(standard_errors, float)
        if np.any(se < 0):
            raise ValueError("standard errors must be non-negative")
        return cls(
            method=method,
            estimates=est,
            standard_errors=se,
            ci_lower=est - Z975 * se,
            ci_upper=est + Z975 * se,
            p_values=_p_two_sided(est, se),
            variants_used=tuple(variants_used),
            q_statistic=q_statistic,
            notes=dict(notes or {}),
        )

    @property
    def k(self) -> int:
        return len(self.estimates)

    def to_rows(self):
        """One flat record per risk factor, in the results-CSV schema."""
        return [
            {
                "method": self.method,
                "risk_factor": i + 1,
                "estimate": float(self.estimates[i]),
                "se": float(self.standard_errors[i]),
                "ci_lower": float(self.ci_lower[i]),
                "ci_upper": float(self.ci_upper[i]),
                "p_value": float(self.p_values[i]),
                "n_variants": len(self.variants_used),
            }
            for i in range(self.k)
        ]

    def to_record(self) -> dict:
        """JSON-serializable summary including method-specific notes."""
        rec = {
            "method": self.method,
            "estimates": [float(v) for v in self.estimates],
            "standard_errors": [float(v) for v in self.standard_errors],
            "ci_lower": [float(v) for v in self.ci_lower],
            "ci_upper": [float(v) for v in self.ci_upper],
            "p_values": [float(v) for v in self.p_values],
            "n_variants": len(self.variants_used),
            "variants_used": list(self.variants_used),
        }
        if self.q_statistic is not None:
            rec["q_statistic"] = float(self.q_statistic)
        if self.notes:
            rec["notes"] = {
                k: (float(v) if isinstance(v, (int, float, np.floating, np.integer)) else v)
                for k, v in self.notes.items()
            }
        return rec


def write_results_csv(results, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for res in results:
            for row in res.to_rows():
                writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c]
                                 for c in RESULTS_HEADER])


@dataclass(frozen=True)
class OutlierReport:
    """Per-variant outlier test from the resampling-based global check."""

    variant_ids: tuple
    observed_rss: np.ndarray
    p_values: np.ndarray
    adjusted_p_values: np.ndarray
    outliers: np.ndarray
    global_rss: float
    global_p_value: float
    m: int


@dataclass(frozen=True)
class LassoSelection:
    """Trace of the penalized pleiotropy-intercept path and the chosen set.

    ``lambdas`` holds the descending penalties actually evaluated (the
    descent stops at the chosen one); ``theta0_path`` the matching
    intercept vectors; ``q_path`` the heterogeneity of each candidate valid
    set (NaN where the set was too small to fit).
    """

    variant_ids: tuple
    lambdas: np.ndarray
    theta0_path: np.ndarray
    valid_sizes: np.ndarray
    q_path: np.ndarray
    chosen_lambda: float
    chosen_index: int
    valid_mask: np.ndarray
    flagged: np.ndarray
    lambda_max: float

    @property
    def valid_ids(self) -> tuple:
        return tuple(v for v, ok in zip(self.variant_ids, self.valid_mask) if ok)

    @property
    def flagged_ids(self) -> tuple:
        return tuple(v for v, bad in zip(self.variant_ids, self.flagged) if bad)


def q_statistic(ds: SummaryDataset, theta, subset=None) -> float:
    """Heterogeneity: weighted residual sum of squares at the given effects.

    ``subset`` restricts to a variant subset (bool mask or index array over
    rows); it must be nonempty.
    """
    theta = np.asarray(theta, float)
    r = ds.beta_y - ds.beta_x @ theta
    w = 1.0 / ds.se_y**2
    if subset is not None:
        subset = np.asarray(subset)
        if subset.dtype == bool:
            subset = np.flatnonzero(subset)
        if subset.size == 0:
            raise ValueError("subset must be nonempty")
        r = r[subset]
        w = w[subset]
    return float(np.dot(w * r, r))


def mvmr_ivw(ds: SummaryDataset, dispersion: str = "multiplicative") -> EstimationResult:
    """Inverse-variance weighted regression of outcome on risk-factor associations.

    Minimizes ``sum_j (beta_y[j] - beta_x[j,:] theta)^2 / se_y[j]^2``;
    invariant to per-variant orientation flips.
    """
    fit = weighted_least_squares(ds.beta_x, ds.beta_y, 1.0 / ds.se_y**2, dispersion)
    return EstimationResult.from_estimates(
        "ivw",
        fit.coefficients,
        np.sqrt(np.diagonal(fit.covariance)),
        ds.variant_ids,
        q_statistic=fit.objective,
        notes={"dispersion": dispersion},
    )


def mvmr_egger(ds: SummaryDataset, primary_k: int = 1,
               dispersion: str = "multiplicative") -> EstimationResult:
    """IVW with an unpenalized common intercept absorbing directional pleiotropy.

    Variants are first oriented to a positive association with risk factor
    ``primary_k``; the intercept estimate and its standard error are
    reported in ``notes``.
    """
    oriented = orient_to_risk_factor(ds, primary_k)
    design = np.column_stack([np.ones(oriented.p), oriented.beta_x])
    fit = weighted_least_squares(design, oriented.beta_y, 1.0 / oriented.se_y**2, dispersion)
    se = np.sqrt(np.diagonal(fit.covariance))
    return EstimationResult.from_estimates(
        "egger",
        fit.coefficients[1:],
        se[1:],
        ds.variant_ids,
        q_statistic=fit.objective,
        notes={
            "intercept": float(fit.coefficients[0]),
            "intercept_se": float(se[0]),
            "primary_k": primary_k,
            "dispersion": dispersion,
        },
    )


def _leave_one_out_ivw(ds: SummaryDataset) -> np.ndarray:
    """(p, K) matrix whose j-th row is the IVW fit excluding variant j."""
    w = 1.0 / ds.se_y**2
    X, y = ds.beta_x, ds.beta_y
    A = (X * w[:, None]).T @ X
    b = (X * w[:, None]).T @ y
    Aj = A[None, :, :] - np.einsum("j,jk,jl->jkl", w, X, X)
    bj = b[None, :] - w[:, None] * X * y[:, None]
    try:
        theta = np.linalg.solve(Aj, bj[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        theta = np.empty((ds.p, ds.k))
        idx = np.arange(ds.p)
        for j in range(ds.p):
            mask = idx != j
            theta[j] = np.linalg.lstsq(
                X[mask] * np.sqrt(w[mask])[:, None], y[mask] * np.sqrt(w[mask]), rcond=None
            )[0]
    return theta


def mvmr_presso(
    ds: SummaryDataset,
    m: int = DEFAULT_PRESSO_M,
    alpha: float = DEFAULT_ALPHA,
    rs: RandomSource = RandomSource(0),
    dispersion: str = "multiplicative",
):
    """Resampling-based outlier search with IVW refit on the retained variants.

    Leave-one-out IVW fits define observed residual contributions; ``m``
    simulated datasets (X-associations resampled with their standard
    errors, outcome associations around the leave-one-out predictions)
    supply the reference distribution.  A variant is an outlier when its
    per-variant empirical p-value times p (Bonferroni) falls below
    ``alpha``.  With no outliers the estimate is exactly the IVW one.

    Returns ``(EstimationResult, OutlierReport)``.
    """
    if ds.p <= ds.k + 1:
        raise DegeneracyError("need at least K+2 variants for leave-one-out fits")
    if m < 100:
        raise ValueError("at least 100 replications are required")
    loo = _leave_one_out_ivw(ds)
    w = 1.0 / ds.se_y**2
    mu = np.sum(ds.beta_x * loo, axis=1)  # leave-one-out predicted outcome association
    obs = w * (ds.beta_y - mu) ** 2
    rss_obs = float(obs.sum())

    gen = rs.generator()
    x_star = ds.beta_x + ds.se_x * gen.standard_normal((m, ds.p, ds.k))
    y_star = mu + ds.se_y * gen.standard_normal((m, ds.p))
    exp_contrib = w * (y_star - np.einsum("mjk,jk->mj", x_star, loo)) ** 2
    global_p = float(np.mean(exp_contrib.sum(axis=1) > rss_obs))
    p_vals = np.mean(exp_contrib > obs, axis=0)
    adj = np.minimum(1.0, p_vals * ds.p)
    outliers = adj < alpha

    report = OutlierReport(
        ds.variant_ids, obs, p_vals, adj, outliers, rss_obs, global_p, m
    )
    if not np.any(outliers):
        result = mvmr_ivw(ds, dispersion)
    else:
        keep = ~outliers
        if keep.sum() <= ds.k:
            raise DegeneracyError(
                f"outlier removal left {int(keep.sum())} variants for K={ds.k}"
            )
        result = mvmr_ivw(ds.take(keep), dispersion)
    result = EstimationResult.from_estimates(
        "presso",
        result.estimates,
        result.standard_errors,
        result.variants_used,
        q_statistic=result.q_statistic,
        notes={
            "global_p_value": global_p,
            "n_outliers": int(outliers.sum()),
            "dispersion": dispersion,
        },
    )
    return result, report


def mvmr_robust(ds: SummaryDataset) -> EstimationResult:
    """MM-estimation on the outcome-error standardized system (no intercept)."""
    scale = 1.0 / ds.se_y
    fit = mm_regression(ds.beta_x * scale[:, None], ds.beta_y * scale)
    return EstimationResult.from_estimates(
        "robust",
        fit.coefficients,
        np.sqrt(np.diagonal(fit.covariance)),
        ds.variant_ids,
        notes={"converged": float(fit.converged)},
    )


def mvmr_median(
    ds: SummaryDataset,
    b: int = DEFAULT_BOOTSTRAP_B,
    rs: RandomSource = RandomSource(0),
) -> EstimationResult:
    """Weighted least-absolute-deviations fit with a parametric bootstrap SE.

    The point estimate minimizes ``sum_j |beta_y[j] - beta_x[j,:] theta| / se_y[j]^2``;
    with one risk factor this equals the weighted-empirical-distribution
    median of the ratio estimates.  Each bootstrap replication redraws the
    associations from normal distributions centered at the observed values
    and refits; the standard error is the standard deviation across
    replications.
    """
    if b < 100:
        raise ValueError("at least 100 bootstrap replications are required")
    w = 1.0 / ds.se_y**2
    point = weighted_lad(ds.beta_x, ds.beta_y, w)

    gen = rs.generator()
    x_star = ds.beta_x + ds.se_x * gen.standard_normal((b, ds.p, ds.k))
    y_star = ds.beta_y + ds.se_y * gen.standard_normal((b, ds.p))
    theta_b, _, _ = _irls_batch(x_star, y_star, w, inner=8)
    theta_b, _ = _snap_batch(x_star, y_star, w, theta_b)
    se = np.std(theta_b, axis=0, ddof=1)
    return EstimationResult.from_estimates(
        "median",
        point.coefficients,
        se,
        ds.variant_ids,
        notes={"bootstrap_replications": b, "objective": point.objective},
    )


def _lambda_grid(lambda_max: float) -> np.ndarray:
    return np.geomspace(lambda_max, LAMBDA_GRID_SPAN * lambda_max, LAMBDA_GRID_SIZE)


def mvmr_lasso(
    ds: SummaryDataset,
    primary_k: int = 1,
    lambda_grid=None,
    alpha_het: float = 0.05,
):
    """Per-variant pleiotropy intercepts shrunk by an L1 penalty, then a
    post-selection IVW fit on the variants whose intercepts are exactly zero.

    Variants are oriented to a positive association with risk factor
    ``primary_k`` before penalization.  The penalty descends a log-spaced
    grid from the smallest all-zero value; the first (largest) penalty
    whose valid set has heterogeneity below the 1 - ``alpha_het`` quantile
    of chi-square with ``|V| - K`` degrees of freedom is chosen.  If no
    penalty qualifies, the smallest grid value whose valid set still
    exceeds K variants is used.  The final fit always uses multiplicative
    random-effects dispersion.

    Returns ``(EstimationResult, LassoSelection)``.

    Raises
    ------
    DegeneracyError
        If every candidate valid set has K or fewer variants; retry with a
        larger penalty.
    """
    oriented = orient_to_risk_factor(ds, primary_k)
    prob = PartialLassoProblem.build(oriented.beta_x, oriented.beta_y, oriented.se_y)
    lam_max = prob.lambda_max()
    if lambda_grid is None:
        grid = _lambda_grid(lam_max)
    else:
        grid = np.asarray(lambda_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) > 0):
            raise ValueError("lambda_grid must be a non-empty descending vector")

    lambdas, theta0s, sizes, qs = [], [], [], []
    chosen = None
    x0 = None
    fallback = None
    for idx, lam in enumerate(grid):
        theta0 = prob.solve_step1(float(lam), x0)
        x0 = theta0
        valid = theta0 == 0.0
        nv = int(valid.sum())
        q = np.nan
        if nv > ds.k:
            sub = ds.take(valid)
            fit = weighted_least_squares(sub.beta_x, sub.beta_y, 1.0 / sub.se_y**2, "fixed")
            q = fit.objective
            fallback = (idx, valid)
            if q <= stats.chi2.ppf(1.0 - alpha_het, nv - ds.k):
                chosen = (idx, valid)
        lambdas.append(float(lam))
        theta0s.append(theta0.copy())
        sizes.append(nv)
        qs.append(q)
        if chosen is not None:
            break
    if chosen is None:
        if fallback is None:
            raise DegeneracyError(
                "no penalty left more than K valid variants; use a larger lambda"
            )
        chosen = fallback

    idx, valid = chosen
    selection = LassoSelection(
        variant_ids=ds.variant_ids,
        lambdas=np.asarray(lambdas),
        theta0_path=np.asarray(theta0s),
        valid_sizes=np.asarray(sizes),
        q_path=np.asarray(qs),
        chosen_lambda=lambdas[idx],
        chosen_index=idx,
        valid_mask=valid,
        flagged=~valid,
        lambda_max=lam_max,
    )
    sub = ds.take(valid)
    fit = mvmr_ivw(sub, dispersion="multiplicative")
    result = EstimationResult.from_estimates(
        "lasso",
        fit.estimates,
        fit.standard_errors,
        fit.variants_used,
        q_statistic=fit.q_statistic,
        notes={
            "chosen_lambda": lambdas[idx],
            "lambda_max": lam_max,
            "n_valid": int(valid.sum()),
            "primary_k": primary_k,
        },
    )
    return result, selection
