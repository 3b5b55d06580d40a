"""Monte Carlo study harness.

Individual-level data follow the linear instrumental-variable model

    U_i = sum_j delta_j G_ij + w_i
    X_ik = sum_j beta_x[j,k] G_ij + gamma_x[k] U_i + v_x[i,k]
    Y_i  = theta0_y + sum_k theta[k] X_ik + sum_j alpha_j G_ij + gamma_y U_i + v_y[i]

with genotypes G_ij ~ Binomial(2, maf), standard-normal error terms, and
per-variant effects redrawn each replication: beta_x[j,k] uniform on the
configured interval, and a fixed leading fraction of variants made invalid
through alpha_j (direct pleiotropy, balanced or directional) or delta_j
(a confounder path).  Summary statistics come from per-variant simple
linear regressions with an intercept, computed on one sample for the risk
factors and an independent sample for the outcome (two-sample design) or
on a single shared sample.

Scenario configs can be read from a flat ``key = value`` text file whose
keys mirror the :class:`ScenarioConfig` fields (``theta`` and ``gamma_x``
as comma-separated lists); see :func:`load_scenario_config`.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import SummaryDataset
from .estimators import (
    METHOD_NAMES,
    Z975,
    mvmr_egger,
    mvmr_ivw,
    mvmr_lasso,
    mvmr_median,
    mvmr_presso,
    mvmr_robust,
)
from .exceptions import DataError, DegeneracyError, MvmrError
from .kernels.rng import RandomSource

THETA_SETS = {
    "A": (0.2, 0.1, 0.3, 0.4),
    "B": (0.0, -0.1, 0.1, 0.2),
}
PLEIOTROPY_KINDS = ("none", "balanced_alpha", "directional_alpha", "confounded_delta")
SCENARIO_KINDS = {1: "balanced_alpha", 2: "directional_alpha", 3: "confounded_delta"}
VARIANTS = ("base", "p20", "corr", "one-sample")
METRICS_HEADER = (
    "scenario",
    "prop_invalid",
    "method",
    "mean",
    "sd",
    "mean_se",
    "rejection",
    "mse",
    "log_mse",
)

# Sub-stream tags (spawn-key components) for the independent draws of one
# replication.  Data generation and method-level resampling never share a
# stream.
_TAG_EFFECTS = 0
_TAG_SAMPLE_X = 1
_TAG_SAMPLE_Y = 2
_TAG_PRESSO = 3
_TAG_MEDIAN = 4
# Stream reserved for effects shared across replications (redraw_per_rep=False).
_SHARED_EFFECTS_STREAM = 2**31


@dataclass(frozen=True)
class ScenarioConfig:
    """Full parameterization of one simulation scenario.

    Defaults reproduce the base setting: 100 variants, 4 risk factors,
    two independent samples of 20 000 individuals, uniform variant effects
    on (0, 0.1), allele frequency 0.3, confounder loadings 1/K on the risk
    factors and 1 on the outcome.
    """

    p: int = 100
    k: int = 4
    n: int = 20_000
    theta: tuple = THETA_SETS["A"]
    theta0_y: float = 0.0
    gamma_x: tuple | None = None  # None means 1/K for every risk factor
    gamma_y: float = 1.0
    beta_x_low: float = 0.0
    beta_x_high: float = 0.1
    maf: float = 0.3
    prop_invalid: float = 0.1
    pleiotropy_kind: str = "balanced_alpha"
    alpha_mean: float = 0.0
    alpha_sd: float = 0.2
    delta_low: float = 0.0
    delta_high: float = 0.1
    rho_x: float = 0.0
    sample_design: str = "two_sample"
    n_reps: int = 1000
    seed: int = 0
    redraw_per_rep: bool = True
    label: str = ""

    def __post_init__(self):
        if self.p <= self.k:
            raise ValueError("need more variants than risk factors")
        if len(self.theta) != self.k:
            raise ValueError("theta must have length K")
        if self.gamma_x is not None and len(self.gamma_x) != self.k:
            raise ValueError("gamma_x must have length K")
        if not 0 < self.maf < 1:
            raise ValueError("allele frequency must be in (0, 1)")
        if not abs(self.rho_x) < 1:
            raise ValueError("risk-factor error correlation must satisfy |rho| < 1")
        if not 0 <= self.prop_invalid < 1:
            raise ValueError("prop_invalid must be in [0, 1)")
        if self.pleiotropy_kind not in PLEIOTROPY_KINDS:
            raise ValueError(f"unknown pleiotropy kind {self.pleiotropy_kind!r}")
        if self.sample_design not in ("two_sample", "one_sample"):
            raise ValueError(f"unknown sample design {self.sample_design!r}")
        if self.n_reps < 1:
            raise ValueError("n_reps must be positive")

    @property
    def gamma_x_vector(self) -> np.ndarray:
        if self.gamma_x is None:
            return np.full(self.k, 1.0 / self.k)
        return np.asarray(self.gamma_x, dtype=float)

    @property
    def n_invalid(self) -> int:
        return int(round(self.prop_invalid * self.p))


def scenario_config(
    scenario: int,
    prop_invalid: float,
    theta_set: str = "A",
    variant: str = "base",
    n_reps: int = 1000,
    seed: int = 0,
) -> ScenarioConfig:
    """Preset for one cell of the scenario tables.

    ``scenario`` 1 = balanced pleiotropy, 2 = directional pleiotropy, 3 =
    directional pleiotropy through the confounder; ``variant`` selects the
    supplementary settings (``p20``: 20 variants with Uniform(0, 0.22)
    effects; ``corr``: risk-factor error correlation 0.5; ``one-sample``).
    """
    if scenario not in SCENARIO_KINDS:
        raise ValueError("scenario must be 1, 2 or 3")
    if theta_set not in THETA_SETS:
        raise ValueError("theta_set must be 'A' or 'B'")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    kind = SCENARIO_KINDS[scenario]
    cfg = ScenarioConfig(
        theta=THETA_SETS[theta_set],
        prop_invalid=prop_invalid,
        pleiotropy_kind=kind,
        alpha_mean=0.1 if kind == "directional_alpha" else 0.0,
        n_reps=n_reps,
        seed=seed,
        label=f"scenario{scenario}" + ("" if variant == "base" else f"-{variant}"),
    )
    if variant == "p20":
        cfg = replace(cfg, p=20, beta_x_high=0.22)
    elif variant == "corr":
        cfg = replace(cfg, rho_x=0.5)
    elif variant == "one-sample":
        cfg = replace(cfg, sample_design="one_sample")
    return cfg


@dataclass(frozen=True)
class Effects:
    """Per-variant parameters of one replication."""

    beta_x: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray


def _draw_effects(config: ScenarioConfig, gen: np.random.Generator) -> Effects:
    beta = gen.uniform(config.beta_x_low, config.beta_x_high, (config.p, config.k))
    alpha = np.zeros(config.p)
    delta = np.zeros(config.p)
    m = config.n_invalid
    if m and config.pleiotropy_kind in ("balanced_alpha", "directional_alpha"):
        alpha[:m] = gen.normal(config.alpha_mean, config.alpha_sd, m)
    elif m and config.pleiotropy_kind == "confounded_delta":
        delta[:m] = gen.uniform(config.delta_low, config.delta_high, m)
    return Effects(beta, alpha, delta)


def _simulate_sample(config: ScenarioConfig, eff: Effects, gen: np.random.Generator):
    """One individual-level sample (G, X, Y) under the given effects."""
    n, k = config.n, config.k
    # Binomial(2, maf) by inverse CDF on a single uniform per genotype.
    u = gen.random((n, config.p))
    G = (u >= (1.0 - config.maf) ** 2).astype(np.float64)
    G += u >= 1.0 - config.maf**2
    w = gen.standard_normal(n)
    vx = gen.standard_normal((n, k))
    if config.rho_x != 0.0:
        corr = np.full((k, k), config.rho_x)
        np.fill_diagonal(corr, 1.0)
        vx = vx @ np.linalg.cholesky(corr).T
    vy = gen.standard_normal(n)
    U = G @ eff.delta + w if np.any(eff.delta) else w
    X = G @ eff.beta_x + U[:, None] * config.gamma_x_vector + vx
    Y = config.theta0_y + X @ np.asarray(config.theta) + config.gamma_y * U + vy
    if np.any(eff.alpha):
        Y = Y + G @ eff.alpha
    return G, X, Y


def generate_individual(config: ScenarioConfig, rs: RandomSource):
    """Individual-level arrays ``(G, X, Y)`` for one replication.

    Effects are drawn once from a dedicated sub-stream, then a single
    sample is generated; the same effects underlie the X- and Y-samples
    produced by :func:`make_summary_dataset` under the same source.
    """
    eff = _draw_effects(config, rs.derive(_TAG_EFFECTS).generator())
    return _simulate_sample(config, eff, rs.derive(_TAG_SAMPLE_X).generator())


def _regress_on_variants(G: np.ndarray, traits: np.ndarray):
    """Per-variant simple OLS (with intercept) of each trait column on each
    genotype column; returns (slopes (p, m), standard errors (p, m))."""
    n = G.shape[0]
    col_mean = G.sum(axis=0) / n
    sxx = np.einsum("ij,ij->j", G, G) - n * col_mean**2
    if np.any(sxx <= 0):
        j = int(np.argmax(sxx <= 0))
        raise DegeneracyError(f"variant column {j} has zero genotype variance")
    t_mean = traits.mean(axis=0)
    syy = np.einsum("ij,ij->j", traits, traits) - n * t_mean**2
    sxy = G.T @ traits - np.outer(col_mean, t_mean) * n
    slope = sxy / sxx[:, None]
    rss = np.maximum(syy[None, :] - slope * sxy, 0.0)
    se = np.sqrt(rss / (n - 2) / sxx[:, None])
    return slope, se


def summarize_associations(G, trait):
    """Per-variant (estimate, standard error) from simple linear regression
    of ``trait`` on each genotype column, with an intercept."""
    G = np.asarray(G, dtype=float)
    trait = np.asarray(trait, dtype=float)
    if trait.shape != (G.shape[0],):
        raise ValueError("trait length does not match genotype rows")
    slope, se = _regress_on_variants(G, trait[:, None])
    return slope[:, 0], se[:, 0]


def make_summary_dataset(
    config: ScenarioConfig, rs: RandomSource, effects: Effects | None = None
) -> SummaryDataset:
    """Summary statistics for one replication.

    Under the two-sample design the risk-factor and outcome associations
    come from independent samples sharing the same per-variant effects; the
    one-sample design estimates both on a single sample.
    """
    eff = effects if effects is not None else _draw_effects(
        config, rs.derive(_TAG_EFFECTS).generator()
    )
    Gx, X, Y = _simulate_sample(config, eff, rs.derive(_TAG_SAMPLE_X).generator())
    if config.sample_design == "two_sample":
        Gy, _, Y = _simulate_sample(config, eff, rs.derive(_TAG_SAMPLE_Y).generator())
    else:
        Gy = Gx
    beta_x, se_x = _regress_on_variants(Gx, X)
    by, sy = _regress_on_variants(Gy, Y[:, None])
    ids = tuple(f"v{j + 1:04d}" for j in range(config.p))
    return SummaryDataset(ids, beta_x, se_x, by[:, 0], sy[:, 0])


def r_squared(G, X) -> np.ndarray:
    """Multiple-regression R^2 of each risk factor on all genotype columns."""
    G = np.asarray(G, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = G.shape[0]
    design = np.column_stack([np.ones(n), G])
    coef, _, rank, _ = np.linalg.lstsq(design, X, rcond=None)
    if rank < design.shape[1]:
        raise DegeneracyError("genotype matrix is rank deficient")
    resid = X - design @ coef
    rss = np.einsum("ij,ij->j", resid, resid)
    tss = np.einsum("ij,ij->j", X - X.mean(axis=0), X - X.mean(axis=0))
    return 1.0 - rss / tss


@dataclass(frozen=True)
class MetricsRow:
    """Aggregate of one method over the replications of one scenario cell.

    ``sd`` is the sample standard deviation (ddof=1, NaN for a single
    replication); ``mse`` is the mean squared error against the configured
    effect and ``log_mse`` its natural logarithm; ``rejection`` is the rate
    of |estimate/SE| > z(0.975), i.e. power when the true effect is nonzero
    and the type-I error rate when it is zero.  Failed replications are
    excluded from the aggregates and counted in ``n_failed``.
    """

    scenario: str
    prop_invalid: float
    method: str
    target_k: int
    mean: float
    sd: float
    mean_se: float
    rejection: float
    mse: float
    log_mse: float
    n_reps: int
    n_failed: int


def _replicate(config: ScenarioConfig, methods, target_k: int, rep: int,
               effects: Effects | None):
    """One replication: build a dataset, run each method, return (est, se) pairs."""
    rs = RandomSource(config.seed, stream=rep)
    ds = make_summary_dataset(config, rs, effects)
    out = {}
    for name in methods:
        try:
            if name == "ivw":
                res = mvmr_ivw(ds)
            elif name == "egger":
                res = mvmr_egger(ds, primary_k=target_k)
            elif name == "presso":
                res, _ = mvmr_presso(ds, rs=rs.derive(_TAG_PRESSO))
            elif name == "robust":
                res = mvmr_robust(ds)
            elif name == "median":
                res = mvmr_median(ds, rs=rs.derive(_TAG_MEDIAN))
            elif name == "lasso":
                res, _ = mvmr_lasso(ds, primary_k=target_k)
            else:
                raise ValueError(f"unknown method {name!r}")
            out[name] = (
                float(res.estimates[target_k - 1]),
                float(res.standard_errors[target_k - 1]),
            )
        except (MvmrError, np.linalg.LinAlgError) as exc:
            out[name] = ("failed", f"{type(exc).__name__}: {exc}")
    return out


def _replicate_star(args):
    return _replicate(*args)


def run_study(config: ScenarioConfig, methods=METHOD_NAMES, target_k: int = 1,
              n_jobs: int = 1):
    """Run the Monte Carlo study and aggregate one row per method.

    Replications use distinct random streams keyed by their index, so
    results are identical for any ``n_jobs``; aggregation folds in
    replication order.
    """
    methods = tuple(methods)
    if not methods:
        raise ValueError("at least one method is required")
    unknown = set(methods) - set(METHOD_NAMES)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    if not 1 <= target_k <= config.k:
        raise ValueError(f"target_k must be in 1..{config.k}")
    effects = None
    if not config.redraw_per_rep:
        shared_rs = RandomSource(config.seed, stream=_SHARED_EFFECTS_STREAM)
        effects = _draw_effects(config, shared_rs.derive(_TAG_EFFECTS).generator())

    args = [(config, methods, target_k, rep, effects) for rep in range(config.n_reps)]
    if n_jobs > 1:
        chunk = max(1, config.n_reps // (8 * n_jobs))
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_replicate_star, args, chunksize=chunk))
    else:
        results = [_replicate(*a) for a in args]

    theta_true = config.theta[target_k - 1]
    rows = []
    for name in methods:
        est, ses, failed = [], [], 0
        for rep_out in results:
            val = rep_out[name]
            if val[0] == "failed":
                failed += 1
            else:
                est.append(val[0])
                ses.append(val[1])
        est = np.asarray(est)
        ses = np.asarray(ses)
        n_ok = est.size
        if n_ok == 0:
            rows.append(MetricsRow(config.label, config.prop_invalid, name, target_k,
                                   math.nan, math.nan, math.nan, math.nan, math.nan,
                                   math.nan, 0, failed))
            continue
        mean = float(est.mean())
        sd = float(est.std(ddof=1)) if n_ok > 1 else math.nan
        mean_se = float(ses.mean())
        with np.errstate(divide="ignore", invalid="ignore"):
            rejection = float(np.mean(np.abs(est / ses) > Z975))
        mse = float(np.mean((est - theta_true) ** 2))
        rows.append(MetricsRow(
            scenario=config.label,
            prop_invalid=config.prop_invalid,
            method=name,
            target_k=target_k,
            mean=mean,
            sd=sd,
            mean_se=mean_se,
            rejection=rejection,
            mse=mse,
            log_mse=math.log(mse) if mse > 0 else -math.inf,
            n_reps=n_ok,
            n_failed=failed,
        ))
    return rows


def _cell(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "NA"
    return repr(float(x))


def write_metrics_csv(rows, path) -> None:
    """Write metrics rows in the flat schema
    ``scenario,prop_invalid,method,mean,sd,mean_se,rejection,mse,log_mse``."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow([
                row.scenario,
                _cell(row.prop_invalid),
                row.method,
                _cell(row.mean),
                _cell(row.sd),
                _cell(row.mean_se),
                _cell(row.rejection),
                _cell(row.mse),
                _cell(row.log_mse),
            ])


_INT_KEYS = {"p", "k", "n", "n_reps", "seed"}
_FLOAT_KEYS = {
    "theta0_y", "gamma_y", "beta_x_low", "beta_x_high", "maf", "prop_invalid",
    "alpha_mean", "alpha_sd", "delta_low", "delta_high", "rho_x",
}
_TUPLE_KEYS = {"theta", "gamma_x"}
_STR_KEYS = {"pleiotropy_kind", "sample_design", "label"}
_BOOL_KEYS = {"redraw_per_rep"}


def load_scenario_config(path) -> ScenarioConfig:
    """Read a config from a flat ``key = value`` text file.

    Keys mirror the :class:`ScenarioConfig` fields; unknown keys are
    rejected.  ``theta`` and ``gamma_x`` take comma-separated numbers,
    ``redraw_per_rep`` takes true/false, blank lines and ``#`` comments are
    ignored.
    """
    kwargs = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}: expected 'key = value', line {lineno}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(value)
            elif key in _TUPLE_KEYS:
                kwargs[key] = tuple(float(v) for v in value.split(","))
            elif key in _STR_KEYS:
                kwargs[key] = value
            elif key in _BOOL_KEYS:
                if value.lower() not in ("true", "false"):
                    raise ValueError(value)
                kwargs[key] = value.lower() == "true"
            else:
                raise DataError(f"{path}: unknown key {key!r}, line {lineno}")
        except ValueError:
            raise DataError(f"{path}: bad value for {key!r}, line {lineno}") from None
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
