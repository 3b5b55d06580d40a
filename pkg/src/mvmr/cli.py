"""Command-line interface: estimate, simulate, diagnose.

Every command is a pure function of its input files, flags and seed; rerun
with the same inputs it produces byte-identical result files.  Each output
directory receives exactly one ``manifest.json`` recording the command,
resolved parameters, seed, input digests, toolkit version and wall-clock
duration (the duration is the only field that varies between identical
reruns).

Exit codes: 0 success, 2 usage or validation error, 3 at least one method
failed (results of the others are still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .data import load_summary_csv, residual_diagnostics
from .estimators import (
    EstimationResult,
    METHOD_NAMES,
    mvmr_egger,
    mvmr_ivw,
    mvmr_lasso,
    mvmr_median,
    mvmr_presso,
    mvmr_robust,
    write_results_csv,
)
from .exceptions import DataError, MvmrError
from .kernels.rng import RandomSource
from .simulation import (
    THETA_SETS,
    VARIANTS,
    load_scenario_config,
    run_study,
    scenario_config,
    write_metrics_csv,
)

# Method-level resampling streams; estimate and diagnose share these tags
# so flags and estimates agree between the two commands.
_TAG_PRESSO = 3
_TAG_MEDIAN = 4

_SEEDED_METHODS = ("presso", "median")


def _fmt(x: float) -> str:
    return repr(float(x))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, params: dict, seed, inputs, started: float):
    manifest = {
        "command": command,
        "parameters": params,
        "seed": seed,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "version": __version__,
        "duration_seconds": round(time.monotonic() - started, 3),
    }
    with (out_dir / "manifest.json").open("w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_strict(args, needs_seed: bool):
    if args.strict and needs_seed and args.seed is None:
        raise DataError("--strict requires an explicit --seed for resampling commands")


def _run_method(name, ds, primary_k, rs, selection_ds=None):
    """Run one estimator; returns (result, lasso_selection or None)."""
    if name == "ivw":
        return mvmr_ivw(ds), None
    if name == "egger":
        return mvmr_egger(ds, primary_k=primary_k), None
    if name == "presso":
        res, _report = mvmr_presso(ds, rs=rs.derive(_TAG_PRESSO))
        return res, None
    if name == "robust":
        return mvmr_robust(ds), None
    if name == "median":
        return mvmr_median(ds, rs=rs.derive(_TAG_MEDIAN)), None
    if name == "lasso":
        if selection_ds is not None:
            # Three-sample mode: select on one dataset, estimate on the other.
            _sel_res, selection = mvmr_lasso(selection_ds, primary_k=primary_k)
            sub = ds.subset_by_ids(selection.valid_ids)
            ivw = mvmr_ivw(sub, dispersion="multiplicative")
            res = EstimationResult.from_estimates(
                "lasso", ivw.estimates, ivw.standard_errors, ivw.variants_used,
                q_statistic=ivw.q_statistic,
                notes={**selection_notes(selection), "three_sample": 1.0},
            )
            return res, selection
        res, selection = mvmr_lasso(ds, primary_k=primary_k)
        return res, selection
    raise DataError(f"unknown method {name!r}")


def selection_notes(selection) -> dict:
    return {
        "chosen_lambda": selection.chosen_lambda,
        "lambda_max": selection.lambda_max,
        "n_valid": int(selection.valid_mask.sum()),
    }


def _write_selection_csv(selection, path: Path):
    theta0 = selection.theta0_path[selection.chosen_index]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant_id", "theta0", "flagged", "chosen_lambda"])
        for vid, t0, bad in zip(selection.variant_ids, theta0, selection.flagged):
            writer.writerow([vid, _fmt(t0), int(bad), _fmt(selection.chosen_lambda)])


def cmd_estimate(args) -> int:
    started = time.monotonic()
    out = _out_dir(args)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    unknown = set(methods) - set(METHOD_NAMES)
    if not methods or unknown:
        raise DataError(f"bad --methods list: unknown {sorted(unknown)}" if unknown
                        else "--methods must name at least one method")
    _check_strict(args, any(m in _SEEDED_METHODS for m in methods))
    seed = 0 if args.seed is None else args.seed
    rs = RandomSource(seed)

    ds = load_summary_csv(args.input, args.k)
    selection_ds = None
    inputs = [args.input]
    if args.selection_input:
        selection_ds = load_summary_csv(args.selection_input, args.k)
        inputs.append(args.selection_input)

    results, failures, selection = [], [], None
    for name in methods:
        try:
            res, sel = _run_method(name, ds, args.primary, rs, selection_ds)
            results.append(res)
            if sel is not None:
                selection = sel
        except MvmrError as exc:
            failures.append((name, str(exc)))
            print(f"method {name} failed: {exc}", file=sys.stderr)

    write_results_csv(results, out / "results.csv")

    # Diagnostics always describe the IVW fit; flags mark the variants the
    # lasso (preferred) or the outlier search excluded.
    ivw_res = next((r for r in results if r.method == "ivw"), None) or mvmr_ivw(ds)
    flagged = ()
    if selection is not None:
        flagged = selection.flagged_ids
    else:
        presso_res = next((r for r in results if r.method == "presso"), None)
        if presso_res is not None:
            used = set(presso_res.variants_used)
            flagged = tuple(v for v in ds.variant_ids if v not in used)
    residual_diagnostics(ds, ivw_res.estimates, flagged).to_csv(out / "diagnostics.csv")
    if selection is not None:
        _write_selection_csv(selection, out / "lasso_selection.csv")

    params = {
        "input": str(args.input),
        "k": args.k,
        "methods": ",".join(methods),
        "primary": args.primary,
        "selection_input": str(args.selection_input) if args.selection_input else None,
        "strict": bool(args.strict),
    }
    _write_manifest(out, "estimate", params, seed, inputs, started)
    if failures:
        return 3
    return 0


def cmd_simulate(args) -> int:
    started = time.monotonic()
    out = _out_dir(args)
    _check_strict(args, True)
    seed = 0 if args.seed is None else args.seed
    if args.config:
        config = load_scenario_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=seed)
        inputs = [args.config]
    else:
        if args.scenario is None or args.prop_invalid is None or args.theta_set is None:
            raise DataError("either --config or all of --scenario/--prop-invalid/--theta-set are required")
        config = scenario_config(
            args.scenario, args.prop_invalid, args.theta_set,
            variant=args.variant, n_reps=args.reps, seed=seed,
        )
        inputs = []
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    rows = run_study(config, methods, target_k=args.target_k, n_jobs=args.jobs)
    write_metrics_csv(rows, out / "metrics.csv")
    with (out / "log_mse.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "prop_invalid", "method", "log_mse"])
        for row in rows:
            writer.writerow([row.scenario, _fmt(row.prop_invalid), row.method, _fmt(row.log_mse)])
    failed = sum(r.n_failed for r in rows)
    if failed:
        print(f"{failed} replication-method failures were excluded", file=sys.stderr)
    params = {
        "scenario": args.scenario,
        "prop_invalid": args.prop_invalid,
        "theta_set": args.theta_set,
        "variant": args.variant,
        "reps": config.n_reps,
        "target_k": args.target_k,
        "methods": ",".join(methods),
        "config": str(args.config) if args.config else None,
        "jobs": args.jobs,
        "strict": bool(args.strict),
    }
    _write_manifest(out, "simulate", params, config.seed, inputs, started)
    return 0


def cmd_diagnose(args) -> int:
    started = time.monotonic()
    out = _out_dir(args)
    _check_strict(args, args.method in _SEEDED_METHODS)
    seed = 0 if args.seed is None else args.seed
    rs = RandomSource(seed)
    ds = load_summary_csv(args.input, args.k)
    res, selection = _run_method(args.method, ds, args.primary, rs)
    flagged = ()
    if selection is not None:
        flagged = selection.flagged_ids
    elif args.method == "presso":
        used = set(res.variants_used)
        flagged = tuple(v for v in ds.variant_ids if v not in used)
    table = residual_diagnostics(ds, res.estimates, flagged)
    table.to_csv(out / "diagnostics.csv")
    for (a, b), xv, yv in table.pairwise_associations():
        with (out / f"scatter_{a}_{b}.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"beta_x_{a}", f"beta_x_{b}"])
            for xi, yi in zip(xv, yv):
                writer.writerow([_fmt(xi), _fmt(yi)])
    params = {
        "input": str(args.input),
        "k": args.k,
        "method": args.method,
        "primary": args.primary,
        "strict": bool(args.strict),
    }
    _write_manifest(out, "diagnose", params, seed, [args.input], started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvmr",
        description="Pleiotropy-robust multivariable Mendelian randomization "
                    "from GWAS summary statistics.",
    )
    parser.add_argument("--version", action="version", version=f"mvmr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="run estimators on a summary CSV")
    est.add_argument("--input", required=True, help="summary CSV path")
    est.add_argument("--k", type=int, required=True, help="number of risk factors")
    est.add_argument("--methods", default=",".join(METHOD_NAMES),
                     help="comma-separated subset of: " + ",".join(METHOD_NAMES))
    est.add_argument("--primary", type=int, default=1,
                     help="primary risk factor (1-based) used for orientation")
    est.add_argument("--selection-input", default=None,
                     help="separate summary CSV for lasso variant selection (three-sample mode)")
    est.add_argument("--seed", type=int, default=None, help="seed for resampling methods")
    est.add_argument("--out", default=".", help="output directory")
    est.add_argument("--strict", action="store_true",
                     help="require an explicit --seed for resampling methods")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run a Monte Carlo scenario study")
    sim.add_argument("--scenario", type=int, choices=(1, 2, 3), default=None)
    sim.add_argument("--prop-invalid", type=float, choices=(0.1, 0.3, 0.5), default=None,
                     dest="prop_invalid")
    sim.add_argument("--theta-set", choices=tuple(THETA_SETS), default=None, dest="theta_set")
    sim.add_argument("--variant", choices=VARIANTS, default="base")
    sim.add_argument("--reps", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--target-k", type=int, default=1, dest="target_k")
    sim.add_argument("--methods", default=",".join(METHOD_NAMES))
    sim.add_argument("--config", default=None, help="flat key=value scenario file")
    sim.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sim.add_argument("--out", default=".")
    sim.add_argument("--strict", action="store_true",
                     help="require an explicit --seed")
    sim.set_defaults(func=cmd_simulate)

    dia = sub.add_parser("diagnose", help="emit residual-vs-fitted and scatter data")
    dia.add_argument("--input", required=True)
    dia.add_argument("--k", type=int, required=True)
    dia.add_argument("--method", choices=METHOD_NAMES, default="ivw")
    dia.add_argument("--primary", type=int, default=1)
    dia.add_argument("--seed", type=int, default=None)
    dia.add_argument("--out", default=".")
    dia.add_argument("--strict", action="store_true")
    dia.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
