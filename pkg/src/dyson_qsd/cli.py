"""Command-line experiment runner.

    dyson-qsd <subcommand> [--config FILE] [--workers N] [--output-dir DIR] [--KEY VALUE ...]

Every config key has a flag (``--gamma 0.3``, ``--T-burn 2``, region keys as
``--region-L 4``); flags beat the file, the file beats defaults. The output
directory is ``--output-dir``, else ``$DYSON_QSD_OUTPUT_DIR``, else
``output_dir`` from the file.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .collision import besq_hitting_law, besq_hitting_oracle, ks_censored, ks_two_sample
from .config import EXPERIMENTS, SCHEMA, ExperimentConfig, build_config, raw_values
from .errors import DysonQSDError, InvalidParameter
from .integrator import map_chunks, simulate_ensemble, simulate_path
from .outputs import OutputSet
from .qsd.fleming_viot import fv_run
from .qsd.measures import EmpiricalMeasure, statistic_values, tv_distance, uniform_edges
from .qsd.oracles import MOMENTS, beta_ensemble_moment_oracle, ou_killed_oracle
from .qsd.survival import curve_from_exit_times, estimate_lambda, sample_exit_times, surviving_states
from .rng import NoiseStream, host_generator

ENV_OUTPUT_DIR = "DYSON_QSD_OUTPUT_DIR"


def _default_x0(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.run["x0"] is not None:
        return np.asarray(cfg.run["x0"], dtype=float)
    n = cfg.model.n_particles
    return np.arange(n, dtype=float) - (n - 1) / 2.0


def _edges(cfg: ExperimentConfig, values=None) -> np.ndarray:
    run = cfg.run
    lo, hi, w = run["bin_lo"], run["bin_hi"], run["bin_width"]
    r = cfg.region
    if lo is None:
        if run["statistic"] == "min_gap":
            lo = 0.0
        elif r is not None and r.kind == "box":
            lo = min(r.lo)
        elif values is not None and len(values):
            lo = math.floor(np.min(values) / w) * w
        else:
            lo = -1.0
    if hi is None:
        if run["statistic"] == "min_gap" and r is not None and r.kind == "gap_cap":
            hi = r.L
        elif r is not None and r.kind == "box":
            hi = max(r.hi)
        elif values is not None and len(values):
            hi = math.floor(np.max(values) / w) * w + w
        else:
            hi = 1.0
    # round the range out to whole bins
    nb = max(1, math.ceil((hi - lo) / w - 1e-9))
    return uniform_edges(lo, lo + nb * w, w)


# ---------------------------------------------------------------------------
# subcommands


def _simulate_chunk(args):
    x0, T, scheme, model, seed, ids, thin = args
    rows = []
    for pid in ids:
        path = simulate_path(x0, T, scheme, model, NoiseStream(seed, int(pid)))
        for k in range(0, path.states.shape[0], thin):
            rows.append((path.times[k], int(pid), *path.states[k]))
    return rows


def run_simulate(cfg, out: OutputSet, workers: int) -> dict:
    n = cfg.run["n_paths"]
    ids = np.arange(n)
    jobs = [(_default_x0(cfg), cfg.run["T"], cfg.scheme, cfg.model, cfg.run["seed"], part, cfg.run["thin"])
            for part in np.array_split(ids, max(1, min(n, workers)))]
    rows = [r for part in map_chunks(_simulate_chunk, jobs, workers) for r in part]
    header = ["time", "path_id"] + [f"x{i + 1}" for i in range(cfg.model.n_particles)]
    out.csv("trajectories.csv", header, rows)
    return {"rows": len(rows)}


def run_collide(cfg, out: OutputSet, workers: int) -> dict:
    p = cfg.model
    if p.n_particles < 2:
        raise InvalidParameter("collisions need at least two particles")
    x0 = _default_x0(cfg)
    n, T = cfg.run["n_paths"], cfg.run["T"]
    res = simulate_ensemble(np.tile(x0, (n, 1)), T, cfg.scheme, p, cfg.run["seed"],
                            collision_threshold=cfg.run["threshold"], bridge=cfg.run["bridge"],
                            stop_on_collision=True, workers=workers)
    tau = res.collision_times()
    out.csv("collisions.csv", ["path_id", "collision_time"], zip(res.path_ids, tau))
    report = {
        "n_paths": n,
        "horizon": T,
        "collided_fraction": float(np.mean(np.isfinite(tau))),
        "threshold": cfg.run["threshold"],
        "bridge": cfg.run["bridge"],
        "p_value_note": "KS p-values are not reported: samples are censored at the horizon",
    }
    if p.n_particles == 2 and p.vspec.kind == "zero" and p.gamma < 0.5:
        # the squared gap is a BESQ(2 gamma + 1) run at twice the speed
        delta = 2.0 * p.gamma + 1.0
        g0sq = float(x0[1] - x0[0]) ** 2
        law = besq_hitting_law(delta, g0sq)
        oracle = 0.5 * besq_hitting_oracle(delta, g0sq, n, dt=cfg.run["oracle_dt"], horizon=2.0 * T,
                                           seed=cfg.run["seed"])
        report.update({
            "oracle_delta": delta,
            "ks_stat": ks_two_sample(tau, oracle),
            "ks_oracle_vs_closed_form": ks_censored(2.0 * oracle, law.cdf, 2.0 * T),
            "ks_model_vs_closed_form": ks_censored(2.0 * tau, law.cdf, 2.0 * T),
        })
    out.json("ks.json", report)
    return report


def _ou_interval(cfg):
    r = cfg.region
    if r is None:
        raise InvalidParameter("the one-particle oracle needs a region")
    if r.kind == "box":
        return (r.lo[0], r.hi[0])
    if r.kind == "half_below":
        return (-math.inf, r.b)
    raise InvalidParameter("gap_cap is not an interval for one particle")


def run_survival(cfg, out: OutputSet, workers: int) -> dict:
    T = cfg.run["T"]
    times = np.asarray(cfg.run["times"] if cfg.run["times"] is not None else np.linspace(0.0, T, 101))
    tau = sample_exit_times(_default_x0(cfg), cfg.region, T, cfg.run["n_paths"], cfg.scheme, cfg.model,
                            cfg.run["seed"], workers=workers)
    curve = curve_from_exit_times(tau, times)
    out.csv("survival.csv", ["t", "survival", "stderr"], zip(curve.times, curve.survival, curve.stderr))
    window = cfg.run["fit_window"] or (T / 3.0, 2.0 * T / 3.0)
    lam, r2 = estimate_lambda(curve, tuple(window))
    report = {"lambda": lam, "r2": r2, "fit_window": list(window), "n_paths": cfg.run["n_paths"],
              "exited_fraction": float(np.mean(np.isfinite(tau))),
              "max_isotonic_correction": curve.max_correction}
    if cfg.model.n_particles == 1 and cfg.region.kind in ("box", "half_below"):
        report["oracle_lambda"] = ou_killed_oracle(_ou_interval(cfg), cfg.model.vspec.a, cfg.run["grid_size"]).lam
    out.json("lambda.json", report)
    return report


def run_fv(cfg, out: OutputSet, workers: int) -> dict:
    run = cfg.run
    res = fv_run(_default_x0(cfg), cfg.region, run["M"], run["T_burn"], run["T_avg"], cfg.scheme, cfg.model,
                 run["seed"])
    vals = statistic_values(res.measure.samples, run["statistic"])
    edges = _edges(cfg, vals)
    h = EmpiricalMeasure.from_values(vals, run["statistic"], edges)
    out.csv("qsd_hist.csv", ["statistic", "bin_lo", "bin_hi", "mass"],
            [(run["statistic"], lo, hi, m) for lo, hi, m in zip(edges[:-1], edges[1:], h.masses)])
    report = {"lambda_resample_rate": res.lambda_rate, "M": run["M"], "T_burn": run["T_burn"],
              "T_avg": run["T_avg"], "resample_count": res.ensemble.resample_count,
              "snapshots": int(res.measure.samples.shape[0] // run["M"])}
    if cfg.model.n_particles == 1 and cfg.region.kind in ("box", "half_below") and run["statistic"] == "coord:1":
        o = ou_killed_oracle(_ou_interval(cfg), cfg.model.vspec.a, run["grid_size"])
        report["oracle_lambda"] = o.lam
        report["tv_vs_oracle"] = tv_distance(
            h, EmpiricalMeasure(statistic=run["statistic"], edges=edges, masses=o.qsd_masses(edges)))
    out.json("fv_stats.json", report)
    return report


def tv_bootstrap_stderr(a, b, statistic, edges, rng, n_boot: int = 200) -> float:
    va = statistic_values(a, statistic)
    vb = statistic_values(b, statistic)
    reps = np.empty(n_boot)
    for i in range(n_boot):
        ha = EmpiricalMeasure.from_values(va[rng.integers(0, va.size, va.size)], statistic, edges)
        hb = EmpiricalMeasure.from_values(vb[rng.integers(0, vb.size, vb.size)], statistic, edges)
        reps[i] = tv_distance(ha, hb)
    return float(reps.std(ddof=1))


def tv_decay(x0, y0, r, times, n_paths, statistic, edges, scheme, model, seed, workers=1, n_boot=200):
    """TV between the conditioned laws from two starts on ``times``; rows ``(t, tv, stderr, sx, sy)``."""
    times = np.asarray(times, dtype=float)
    T = float(times.max())
    recs = []
    for i, x in enumerate((x0, y0)):
        res = simulate_ensemble(np.tile(np.asarray(x, dtype=float), (n_paths, 1)), T, scheme, model, seed,
                                first_path=i * n_paths, region=r, stop_on_exit=True, record_times=times,
                                workers=workers)
        recs.append(res.records)
    rng = host_generator(seed, 3)
    rows = []
    for k, t in enumerate(times):
        a = recs[0][:, k][~np.isnan(recs[0][:, k, 0])]
        b = recs[1][:, k][~np.isnan(recs[1][:, k, 0])]
        ha = EmpiricalMeasure.from_values(statistic_values(a, statistic), statistic, edges)
        hb = EmpiricalMeasure.from_values(statistic_values(b, statistic), statistic, edges)
        se = tv_bootstrap_stderr(a, b, statistic, edges, rng, n_boot) if n_boot else math.nan
        rows.append((t, tv_distance(ha, hb), se, a.shape[0] / n_paths, b.shape[0] / n_paths))
    return rows


def run_converge(cfg, out: OutputSet, workers: int) -> dict:
    run = cfg.run
    if run["y0"] is None:
        raise InvalidParameter("converge needs a second start y0")
    T = run["T"]
    times = np.asarray(run["times"] if run["times"] is not None else T * np.arange(1, 9) / 8.0)
    rows = tv_decay(_default_x0(cfg), run["y0"], cfg.region, times, run["n_paths"], run["statistic"],
                    _edges(cfg), cfg.scheme, cfg.model, run["seed"], workers)
    out.csv("tv_decay.csv", ["t", "tv", "stderr"], [r[:3] for r in rows])
    rows = np.array(rows)
    ok = (rows[:, 3] > 0.01) & (rows[:, 4] > 0.01) & (rows[:, 1] > 0)
    report = {"n_paths": run["n_paths"], "statistic": run["statistic"]}
    if ok.sum() >= 3:
        fit = stats.linregress(rows[ok, 0], np.log(rows[ok, 1]))
        report.update({"slope": fit.slope, "r2": fit.rvalue**2, "points": int(ok.sum())})
    out.json("converge.json", report)
    return report


def run_oracle(cfg, out: OutputSet, workers: int) -> dict:
    p = cfg.model
    if p.n_particles == 1:
        o = ou_killed_oracle(_ou_interval(cfg), p.vspec.a, cfg.run["grid_size"])
        report = {"kind": "ou_killed", "lambda": o.lam, "interval": list(o.interval),
                  "grid_size": cfg.run["grid_size"]}
        if cfg.run["x0"] is not None:
            report["mean_exit_time"] = o.mean_exit_time(cfg.run["x0"][0])
    elif p.n_particles == 2:
        names = sorted(set(["gap", "sum_sq", cfg.run["moment"]]))
        for m in names:
            if m not in MOMENTS:
                raise InvalidParameter(f"unknown moment {m!r}")
        report = {"kind": "beta_ensemble", "gamma": p.gamma, "a": p.vspec.a,
                  "moments": {m: beta_ensemble_moment_oracle(p.gamma, p.vspec.a, m) for m in names}}
    else:
        raise InvalidParameter("oracles exist for one or two particles only")
    out.json("oracle.json", report)
    return report


def run_validate(cfg, out: OutputSet, workers: int) -> dict:
    from .validation import run_checks

    results = run_checks(seed=cfg.run["seed"])
    out.json("validate.json", {"checks": results, "passed": all(r["passed"] for r in results.values())})
    return results


RUNNERS = {
    "simulate": run_simulate,
    "collide": run_collide,
    "survival": run_survival,
    "fv": run_fv,
    "converge": run_converge,
    "oracle": run_oracle,
    "validate": run_validate,
}


def run_experiment(cfg: ExperimentConfig, output_dir, workers: int = 1) -> int:
    """Run ``cfg.experiment``, write its files and the manifest; returns the exit status."""
    t0 = time.time()
    out = OutputSet(output_dir)
    result = RUNNERS[cfg.experiment](cfg, out, workers)
    out.manifest(cfg.echo(), __version__, cfg.run["seed"], time.time() - t0)
    if cfg.experiment == "validate":
        return 0 if all(r["passed"] for r in result.values()) else 1
    return 0


# ---------------------------------------------------------------------------
# argument handling


def _flag(section: str, key: str) -> str:
    name = key.replace("_", "-")
    return f"--region-{name}" if section == "region" else f"--{name}"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dyson-qsd", description="Simulation runner for ordered particle systems.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="configuration file")
        sp.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
        sp.add_argument("--output-dir", dest="cli_output_dir", type=Path)
        for section, keys in SCHEMA.items():
            if section == "experiment":
                continue
            for key in keys:
                if section == "run" and key == "output_dir":
                    continue
                sp.add_argument(_flag(section, key), dest=f"{section}.{key}", metavar="VALUE")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        values = raw_values(args.config.read_text(encoding="utf-8")) if args.config else {}
        overrides = {("experiment", "name"): args.experiment}
        for dest, val in vars(args).items():
            if "." in dest and val is not None:
                overrides[tuple(dest.split(".", 1))] = val
        if args.workers < 1:
            raise InvalidParameter("--workers must be >= 1")
        cfg = build_config(values, overrides)
        outdir = args.cli_output_dir or os.environ.get(ENV_OUTPUT_DIR) or cfg.run["output_dir"]
        return run_experiment(cfg, outdir, args.workers)
    except (DysonQSDError, OSError) as exc:
        print(f"dyson-qsd: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
