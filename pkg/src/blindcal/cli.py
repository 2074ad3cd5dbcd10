"""Experiment command line: simulate, calibrate, sweep and imaging.

Exit codes: 0 on success, 2 for invalid configuration or input files,
3 for numeric failures raised by the solvers.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import algebraic, music, optim
from .core import diagonal_means, toeplitz
from .diagnostics import rank_condition
from .errors import BlindCalError, InvalidConfig
from .metrics import align, success_indicator
from .model import exact_covariance, make_instance, sample_snapshots
from .serialization import (
    FORMAT_VERSION,
    TRIAL_COLUMNS,
    ExperimentConfig,
    TrialRecord,
    complex_to_pairs,
    read_config,
    read_instance,
    write_instance,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3
THREADS_ENV = "BLINDCAL_THREADS"


def parse_L(value):
    if isinstance(value, str):
        if value.strip().lower() == "inf":
            return "inf"
        try:
            value = int(value)
        except ValueError:
            raise InvalidConfig("L", f"expected a positive integer or 'inf', got {value!r}") from None
    if not isinstance(value, (int, np.integer)) or value < 1:
        raise InvalidConfig("L", f"expected a positive integer or 'inf', got {value!r}")
    return int(value)


def _methods(method):
    return ("algebraic", "optim") if method == "both" else (method,)


def observe(inst, L, rng):
    """Solver input for one draw: ``(data, kind)``.

    ``L == "inf"`` gives the population covariance ``R^y + sigma^2 I``.
    """
    if L == "inf":
        cov = exact_covariance(inst) + inst.sigma**2 * np.eye(inst.N)
        return cov, "covariance"
    return sample_snapshots(inst, L, rng), "snapshots"


def snapshot_rng(seed, *cell):
    return np.random.default_rng([int(seed), *(int(c) for c in cell)])


def solve(method, data, kind, s, grid_size=None):
    """Run one method; returns a dict with the estimates and solver diagnostics."""
    if method == "algebraic":
        alg = algebraic.run_partial_algebraic(data, s, kind)
        peaks, _ = music.music(alg.f_matrix, s, grid_size=grid_size)
        return {
            "g_hat": alg.g_hat,
            "omegas": peaks.omegas,
            "f_hat": diagonal_means(alg.f_matrix),
            "f_matrix": alg.f_matrix,
            "peaks": peaks,
            "sigma_hat": alg.sigma_hat,
            "n0": optim.estimate_n0(alg.r_hat),
            "iterations": None,
            "final_objective": None,
        }
    if method == "optim":
        res = optim.run_optimizer(data, s, optim.OptimConfig(grid_size=grid_size), kind)
        return {
            "g_hat": res.g_hat,
            "omegas": res.omegas,
            "f_hat": res.f_hat,
            "peaks": res.peaks,
            "sigma_hat": res.algebraic_output.sigma_hat,
            "n0": res.n0,
            "rho": res.rho,
            "iterations": res.iterations,
            "final_objective": res.final_objective,
            "stop_reason": res.stop_reason,
            "trace": res.trace,
        }
    raise InvalidConfig("method", f"unknown method {method!r}")


def result_entry(inst, out):
    rc = rank_condition(out["f_hat"])
    al = align(inst.freq, out["omegas"], inst.cal.g, out["g_hat"])
    entry = {
        "g_hat": complex_to_pairs(out["g_hat"]),
        "omegas": [float(w) for w in out["omegas"]],
        "f_hat": complex_to_pairs(out["f_hat"]),
        "metrics": {
            "supp_error": al.supp_error,
            "c2_star": al.c2_star,
            "c_star": [al.c_star.real, al.c_star.imag],
            "cal_error_mean": al.cal_error_mean,
            "cal_error_per_sensor": [float(v) for v in al.cal_error_per_sensor],
            "success": success_indicator(al.supp_error, inst.N),
        },
        "diagnostics": {
            "sigma_hat": float(out["sigma_hat"]),
            "n0": float(out["n0"]),
            "rank_condition": {"Lambda": list(rc.Lambda), "rank": rc.rank, "satisfied": rc.satisfied},
            "peaks_found": out["peaks"].found,
            "peaks_degraded": out["peaks"].degraded,
        },
    }
    if out["iterations"] is not None:
        entry["optimizer"] = {
            "iterations": out["iterations"],
            "final_objective": out["final_objective"],
            "stop_reason": out["stop_reason"],
            "rho": out["rho"],
        }
    return entry


def cmd_simulate(config, out_path, seed=None):
    seed = config.master_seed if seed is None else seed
    inst = make_instance(
        config.N,
        config.s,
        config.separation,
        config.DR_gamma,
        config.DR_g,
        sigma=float(config.sigma_list[0]),
        seed=seed,
    )
    write_instance(inst, out_path)
    return inst


def cmd_calibrate(instance_path, L, method="both", seed=None, grid_size=None, trace_path=None):
    """Calibrate one draw from a stored instance; returns the result dict."""
    inst = read_instance(instance_path)
    L = parse_L(L)
    seed = inst.seed if seed is None else seed
    data, kind = observe(inst, L, snapshot_rng(seed, 0 if L == "inf" else L))
    result = {
        "format_version": FORMAT_VERSION,
        "kind": "result",
        "N": inst.N,
        "s": inst.freq.s,
        "L": L,
        "sigma": inst.sigma,
        "seed": seed,
        "methods": {},
    }
    for m in _methods(method):
        out = solve(m, data, kind, inst.freq.s, grid_size)
        result["methods"][m] = result_entry(inst, out)
        if trace_path and m == "optim":
            with open(trace_path, "w", encoding="utf-8", newline="") as fh:
                optim.write_trace_csv(out["trace"], fh)
    return result


def imaging_table(inst, L, method="optim", grid_size=None, seed=None):
    """Translated imaging functions on a uniform grid.

    Returns ``(grid, {method: J}, marker)``; each method's ``J`` is shifted by
    its own aligning translation so the peaks sit on the true frequencies,
    and ``marker`` flags the grid point nearest each true frequency.
    """
    L = parse_L(L)
    seed = inst.seed if seed is None else seed
    grid_size = grid_size or music.default_grid_size(inst.N)
    if grid_size < 8 * inst.N:
        raise InvalidConfig("grid_size", f"must be >= 8N = {8 * inst.N}")
    data, kind = observe(inst, L, snapshot_rng(seed, 0 if L == "inf" else L))
    grid = np.arange(grid_size) / grid_size
    columns = {}
    for m in _methods(method):
        out = solve(m, data, kind, inst.freq.s, grid_size)
        F = out.get("f_matrix")
        if F is None:
            F = toeplitz(out["f_hat"])
        sub = music.noise_subspace(F, inst.freq.s)
        al = align(inst.freq, out["omegas"], inst.cal.g, out["g_hat"])
        shift = al.c2_star / (2 * np.pi)
        columns[m] = music.imaging_function(sub, np.mod(grid - shift, 1.0))
    marker = np.zeros(grid_size, dtype=int)
    marker[np.mod(np.rint(inst.freq.omegas * grid_size).astype(int), grid_size)] = 1
    return grid, columns, marker


def write_imaging_csv(grid, columns, marker, fh):
    w = csv.writer(fh, lineterminator="\n")
    names = list(columns)
    w.writerow(["omega", *(f"J_{m}" for m in names), "true_marker"])
    for k in range(grid.size):
        w.writerow([repr(float(grid[k])), *(repr(float(columns[m][k])) for m in names), int(marker[k])])


def run_trial(config, trial_index, timing=True):
    """All records for one trial: every (L, sigma) cell and method.

    The instance depends only on ``master_seed + trial_index``; methods in a
    cell share one draw of snapshots.
    """
    trial_seed = config.master_seed + trial_index
    base = make_instance(config.N, config.s, config.separation, config.DR_gamma, config.DR_g, seed=trial_seed)
    records = []
    for li, L in enumerate(config.L_list):
        for si, sigma in enumerate(config.sigma_list):
            inst = replace(base, sigma=float(sigma))
            data, kind = observe(inst, L, snapshot_rng(trial_seed, li, si))
            for m in _methods(config.method):
                rec = TrialRecord(trial_index=trial_index, method=m, L=L, sigma=float(sigma))
                t0 = time.perf_counter()
                try:
                    out = solve(m, data, kind, config.s, config.grid_size)
                    al = align(inst.freq, out["omegas"], inst.cal.g, out["g_hat"])
                    rec.cal_error_mean = al.cal_error_mean
                    rec.supp_error = al.supp_error
                    rec.success = int(success_indicator(al.supp_error, inst.N))
                    rec.iterations = out["iterations"]
                    rec.final_objective = out["final_objective"]
                except BlindCalError as exc:
                    rec.error_code = exc.code
                except np.linalg.LinAlgError:
                    rec.error_code = "linalg_error"
                rec.runtime_ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
                records.append(rec)
    return records


def _worker_count(trials):
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise InvalidConfig(THREADS_ENV, f"must be an integer, got {env!r}") from None
        if cap < 1:
            raise InvalidConfig(THREADS_ENV, "must be >= 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, trials))


def run_sweep(config, timing=True):
    """Records for every trial, ordered by trial index."""
    workers = _worker_count(config.trials)
    indices = range(config.trials)
    if workers == 1:
        per_trial = [run_trial(config, i, timing) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(run_trial, [config] * config.trials, indices, [timing] * config.trials))
    return [r for recs in per_trial for r in recs]


def _loglog_slope(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log10(x[ok]), np.log10(y[ok]), 1)[0])


def summarize(config, records):
    """Per-cell means and success rates, plus log-log slopes across cells."""
    cells = []
    for m in _methods(config.method):
        for L in config.L_list:
            for sigma in config.sigma_list:
                rows = [r for r in records if r.method == m and r.L == L and r.sigma == float(sigma)]
                ok = [r for r in rows if not r.error_code]
                cell = {
                    "method": m,
                    "L": L,
                    "sigma": float(sigma),
                    "trials": len(rows),
                    "n_ok": len(ok),
                    "n_failed": len(rows) - len(ok),
                    "cal_error_mean": float(np.mean([r.cal_error_mean for r in ok])) if ok else None,
                    "supp_error_mean": float(np.mean([r.supp_error for r in ok])) if ok else None,
                    "success_rate": float(np.mean([r.success for r in rows])) if rows else None,
                }
                if m == "optim" and ok:
                    cell["iterations_mean"] = float(np.mean([r.iterations for r in ok]))
                cells.append(cell)

    def lookup(m, L, sigma):
        for c in cells:
            if c["method"] == m and c["L"] == L and c["sigma"] == float(sigma):
                return c["cal_error_mean"]
        return None

    slopes = {"cal_error_vs_L": [], "cal_error_vs_sigma": []}
    finite_L = [L for L in config.L_list if L != "inf"]
    for m in _methods(config.method):
        for sigma in config.sigma_list:
            ys = [lookup(m, L, sigma) for L in finite_L]
            if len(finite_L) >= 2 and None not in ys:
                slopes["cal_error_vs_L"].append({"method": m, "sigma": float(sigma), "slope": _loglog_slope(finite_L, ys)})
        for L in config.L_list:
            sig = [float(x) for x in config.sigma_list if x > 0]
            ys = [lookup(m, L, x) for x in sig]
            if len(sig) >= 2 and None not in ys:
                slopes["cal_error_vs_sigma"].append({"method": m, "L": L, "slope": _loglog_slope(sig, ys)})
    return {
        "format_version": FORMAT_VERSION,
        "kind": "sweep_summary",
        "config": config.to_dict(),
        "cells": cells,
        "slopes": slopes,
    }


def write_records_csv(records, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for r in records:
        w.writerow(r.row())


def summary_path_for(csv_path):
    root, _ = os.path.splitext(csv_path)
    return root + ".summary.json"


def cmd_sweep(config, out_path, timing=True):
    records = run_sweep(config, timing)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        write_records_csv(records, fh)
    summary = summarize(config, records)
    with open(summary_path_for(out_path), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return records, summary


def _dump_json(obj, out_path):
    text = json.dumps(obj, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_config(args):
    config = read_config(args.config) if args.config else ExperimentConfig().validate()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "method", None) is not None:
        overrides["method"] = args.method
    if getattr(args, "grid_size", None) is not None:
        overrides["grid_size"] = args.grid_size
    return replace(config, **overrides).validate() if overrides else config


def build_parser():
    p = argparse.ArgumentParser(prog="blindcal", description="Blind gain/phase calibration with off-grid frequency recovery.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="write a random instance as JSON")
    sp.add_argument("--config", help="experiment config JSON (defaults used when omitted)")
    sp.add_argument("--out", required=True, help="instance JSON path")
    sp.add_argument("--seed", type=int, help="instance seed (default: master_seed)")

    sp = sub.add_parser("calibrate", help="calibrate one draw from an instance")
    sp.add_argument("instance", help="instance JSON path")
    sp.add_argument("--L", default="500", help="snapshot count, or 'inf' for the exact covariance")
    sp.add_argument("--method", choices=("algebraic", "optim", "both"), default="both")
    sp.add_argument("--seed", type=int, help="snapshot seed (default: the instance seed)")
    sp.add_argument("--grid-size", type=int, help="MUSIC grid size (default max(4096, 16N))")
    sp.add_argument("--out", help="result JSON path (default stdout)")
    sp.add_argument("--trace", help="optimizer trace CSV path")

    sp = sub.add_parser("sweep", help="Monte Carlo sweep over L and sigma")
    sp.add_argument("--config", help="experiment config JSON")
    sp.add_argument("--out", help="trial table CSV path (default: config output_path)")
    sp.add_argument("--seed", type=int, help="master seed override")
    sp.add_argument("--method", choices=("algebraic", "optim", "both"))
    sp.add_argument("--grid-size", type=int)
    sp.add_argument("--no-timing", action="store_true", help="write runtime_ms as 0 for byte-identical tables")

    sp = sub.add_parser("imaging", help="translated imaging function on a grid as CSV")
    sp.add_argument("instance", help="instance JSON path")
    sp.add_argument("--L", default="500")
    sp.add_argument("--method", choices=("algebraic", "optim", "both"), default="optim")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--grid-size", type=int)
    sp.add_argument("--out", help="CSV path (default stdout)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            config = _load_config(args)
            cmd_simulate(config, args.out, args.seed)
        elif args.command == "calibrate":
            result = cmd_calibrate(args.instance, args.L, args.method, args.seed, args.grid_size, args.trace)
            _dump_json(result, args.out)
        elif args.command == "sweep":
            config = _load_config(args)
            out = args.out or config.output_path
            if not out:
                raise InvalidConfig("output_path", "give --out or set output_path in the config")
            cmd_sweep(config, out, timing=not args.no_timing)
        elif args.command == "imaging":
            inst = read_instance(args.instance)
            grid, cols, marker = imaging_table(inst, args.L, args.method, args.grid_size, args.seed)
            if args.out:
                with open(args.out, "w", encoding="utf-8", newline="") as fh:
                    write_imaging_csv(grid, cols, marker, fh)
            else:
                write_imaging_csv(grid, cols, marker, sys.stdout)
    except InvalidConfig as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BlindCalError as exc:
        print(f"numeric failure [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"numeric failure [linalg_error]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
