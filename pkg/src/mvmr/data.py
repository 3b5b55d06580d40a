"""Summary-statistics data model, CSV ingestion, orientation, diagnostics.

The canonical interchange format is a CSV with header

    variant_id,beta_x_1,...,beta_x_K,se_x_1,...,se_x_K,beta_y,se_y

holding, per genetic variant, the estimated associations with each of the
K risk factors and with the outcome, plus their standard errors.  Standard
errors are treated as known constants throughout.  ``se_x`` columns may be
all zero (the no-measurement-error convention); only resampling-based
procedures consume them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .exceptions import DataError, ModelError
from .kernels.wls import RANK_RTOL

DIAGNOSTICS_HEADER = ("variant_id", "fitted", "residual", "se_y", "flag")


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips to the same float."""
    return repr(float(x))


@dataclass(frozen=True)
class SummaryDataset:
    """Per-variant association estimates for K risk factors and one outcome.

    Immutable after construction; all arrays are read-only float64 copies.

    Attributes
    ----------
    variant_ids : tuple of str, length p
    beta_x : ndarray (p, K)
        Variant-risk-factor association estimates.
    se_x : ndarray (p, K)
        Their standard errors, >= 0 (zero = treated as known exactly).
    beta_y : ndarray (p,)
        Variant-outcome association estimates.
    se_y : ndarray (p,)
        Their standard errors, > 0.
    """

    variant_ids: tuple
    beta_x: np.ndarray
    se_x: np.ndarray
    beta_y: np.ndarray
    se_y: np.ndarray

    def __post_init__(self):
        ids = tuple(str(v) for v in self.variant_ids)
        beta_x = np.array(self.beta_x, dtype=float)
        se_x = np.array(self.se_x, dtype=float)
        beta_y = np.array(self.beta_y, dtype=float)
        se_y = np.array(self.se_y, dtype=float)
        if beta_x.ndim != 2:
            raise DataError("beta_x must be a p-by-K matrix")
        p, k = beta_x.shape
        if se_x.shape != (p, k) or beta_y.shape != (p,) or se_y.shape != (p,):
            raise DataError("shapes of beta_x, se_x, beta_y, se_y do not agree")
        if len(ids) != p:
            raise DataError("number of variant ids does not match beta_x")
        if len(set(ids)) != p:
            raise DataError("variant ids must be unique")
        for name, arr in (("beta_x", beta_x), ("se_x", se_x), ("beta_y", beta_y), ("se_y", se_y)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite value in {name}")
        if np.any(se_y <= 0):
            row = int(np.argmax(se_y <= 0)) + 2  # file-style numbering, header = row 1
            raise DataError(f"non-positive outcome standard error, row {row}")
        if np.any(se_x < 0):
            raise DataError("negative risk-factor standard error")
        if p <= k:
            raise ModelError(f"need more variants than risk factors (p={p}, K={k})")
        sv = np.linalg.svd(beta_x / se_y[:, None], compute_uv=False)
        if sv[0] <= 0 or sv[-1] <= RANK_RTOL * sv[0]:
            raise ModelError("variant-risk-factor matrix is rank deficient")
        for arr in (beta_x, se_x, beta_y, se_y):
            arr.setflags(write=False)
        object.__setattr__(self, "variant_ids", ids)
        object.__setattr__(self, "beta_x", beta_x)
        object.__setattr__(self, "se_x", se_x)
        object.__setattr__(self, "beta_y", beta_y)
        object.__setattr__(self, "se_y", se_y)

    @property
    def p(self) -> int:
        return self.beta_x.shape[0]

    @property
    def k(self) -> int:
        return self.beta_x.shape[1]

    def take(self, which) -> "SummaryDataset":
        """New dataset restricted to the given variants (mask or index array).

        The subset is revalidated, so removing too many variants raises.
        """
        which = np.asarray(which)
        if which.dtype == bool:
            which = np.flatnonzero(which)
        ids = tuple(self.variant_ids[i] for i in which)
        return SummaryDataset(
            ids, self.beta_x[which], self.se_x[which], self.beta_y[which], self.se_y[which]
        )

    def subset_by_ids(self, ids) -> "SummaryDataset":
        """Restrict to the named variants, preserving this dataset's row order."""
        wanted = set(ids)
        missing = wanted - set(self.variant_ids)
        if missing:
            raise DataError(f"variant ids not present in dataset: {sorted(missing)[:5]}")
        mask = np.array([v in wanted for v in self.variant_ids])
        return self.take(mask)


def expected_header(k: int):
    return (
        ["variant_id"]
        + [f"beta_x_{i}" for i in range(1, k + 1)]
        + [f"se_x_{i}" for i in range(1, k + 1)]
        + ["beta_y", "se_y"]
    )


def load_summary_csv(path, k: int) -> SummaryDataset:
    """Read and validate a summary CSV with K risk-factor columns.

    Row numbers in error messages count lines in the file, header included
    (the first data row is row 2).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    path = Path(path)
    header = expected_header(k)
    ids, rows = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [c.strip() for c in got] != header:
            raise DataError(
                f"{path}: header mismatch; expected {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: wrong field count, row {lineno}")
            ids.append(row[0])
            values = []
            for col, cell in zip(header[1:], row[1:]):
                cell = cell.strip()
                if cell == "":
                    raise DataError(f"{path}: missing value, row {lineno}, column {col}")
                try:
                    val = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: unparseable value {cell!r}, row {lineno}, column {col}"
                    ) from None
                if np.isnan(val):
                    raise DataError(f"{path}: NaN value, row {lineno}, column {col}")
                values.append(val)
            if values[2 * k + 1] <= 0:
                raise DataError(f"non-positive outcome standard error, row {lineno}")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return SummaryDataset(
        tuple(ids),
        arr[:, 0:k],
        arr[:, k : 2 * k],
        arr[:, 2 * k],
        arr[:, 2 * k + 1],
    )


def write_summary_csv(ds: SummaryDataset, path) -> None:
    """Write a dataset in the canonical schema.

    Numbers are emitted as shortest round-trip decimals, so loading the file
    back reproduces the dataset bit for bit.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(expected_header(ds.k))
        for j in range(ds.p):
            writer.writerow(
                [ds.variant_ids[j]]
                + [_fmt(v) for v in ds.beta_x[j]]
                + [_fmt(v) for v in ds.se_x[j]]
                + [_fmt(ds.beta_y[j]), _fmt(ds.se_y[j])]
            )


def orient_to_risk_factor(ds: SummaryDataset, k: int) -> SummaryDataset:
    """Flip variants so column ``k`` (1-based) of beta_x is non-negative.

    For every variant with a negative association with risk factor ``k``,
    the outcome association and the variant's entire beta_x row change
    sign; standard errors never change.  Variants with an exactly zero
    association are left as they are (there is nothing to orient by).
    Applying the operation twice equals applying it once.
    """
    if not 1 <= k <= ds.k:
        raise IndexError(f"risk-factor index {k} out of range 1..{ds.k}")
    flip = ds.beta_x[:, k - 1] < 0
    if not np.any(flip):
        return ds
    sign = np.where(flip, -1.0, 1.0)
    return SummaryDataset(
        ds.variant_ids,
        ds.beta_x * sign[:, None],
        ds.se_x,
        ds.beta_y * sign,
        ds.se_y,
    )


@dataclass(frozen=True)
class DiagnosticsTable:
    """Residual-vs-fitted data for one fitted model, ready for plotting.

    ``fitted + residual`` equals the outcome associations exactly.  The
    ``flagged`` column marks variants a method excluded or identified as
    pleiotropic.  ``beta_x`` is carried along so pairwise risk-factor
    scatter data can be emitted without the original dataset.
    """

    variant_ids: tuple
    fitted: np.ndarray
    residual: np.ndarray
    se_y: np.ndarray
    flagged: np.ndarray
    beta_x: np.ndarray

    def pairwise_associations(self):
        """Yield ((a, b), x, y) for every 1-based risk-factor pair a < b."""
        k = self.beta_x.shape[1]
        for a, b in combinations(range(1, k + 1), 2):
            yield (a, b), self.beta_x[:, a - 1], self.beta_x[:, b - 1]

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(DIAGNOSTICS_HEADER)
            for j, vid in enumerate(self.variant_ids):
                writer.writerow(
                    [
                        vid,
                        _fmt(self.fitted[j]),
                        _fmt(self.residual[j]),
                        _fmt(self.se_y[j]),
                        int(self.flagged[j]),
                    ]
                )


def residual_diagnostics(ds: SummaryDataset, estimates, flagged=None) -> DiagnosticsTable:
    """Fitted values and residuals of the dataset under the given effects.

    ``estimates`` is the length-K causal-effect vector; ``flagged``
    optionally names variants (by id) to mark in the flag column.
    """
    theta = np.asarray(estimates, dtype=float)
    if theta.shape != (ds.k,):
        raise ValueError(f"estimates must have length {ds.k}")
    fitted = ds.beta_x @ theta
    residual = ds.beta_y - fitted
    if flagged is None:
        mask = np.zeros(ds.p, dtype=bool)
    else:
        flagged = set(flagged)
        mask = np.array([v in flagged for v in ds.variant_ids])
    return DiagnosticsTable(ds.variant_ids, fitted, residual, ds.se_y.copy(), mask, ds.beta_x.copy())
