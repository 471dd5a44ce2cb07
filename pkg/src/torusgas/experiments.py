"""The named experiments behind the CLI.

Each runner consumes a validated RunConfig and returns results, pass/fail
verdicts and tabular series; file writing lives here too so reports are
byte-reproducible (wall-clock telemetry goes to a separate unhashed file).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time as _time
from dataclasses import dataclass, field, is_dataclass, asdict
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, kernels
from .config import RunConfig, build_test_function
from .dynamics import (DynamicsSpec, run_glauber, run_kawasaki,
                       stationarity_audit)
from .gibbs import (GNZFunctional, boltzmann_average_series, double_gnz_residual,
                    estimate_k1, estimate_ursell2, exp_moment,
                    gnz_battery_residuals, ruelle_probe, sample_gibbs)
from .model import ModelSpec, alpha_from_k1, lahht_check
from .recordio import write_records
from .scaling import (energy_shift_limit_check, fdd_compare, scaling_sweep,
                      spectral_gap_probe)
from .stats import Estimate, batch_means
from .testfunctions import TestFunction


@dataclass
class ExperimentOutput:
    results: dict
    verdicts: dict[str, bool]
    series: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    records: dict[str, dict] = field(default_factory=dict)
    telemetry: dict = field(default_factory=dict)


def _jsonable(obj):
    if isinstance(obj, Estimate):
        return {"value": obj.value, "std_error": obj.std_error,
                "n_samples": obj.n_samples, "n_eff": obj.n_eff}
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def default_phi_test(model: ModelSpec) -> TestFunction:
    dom = model.dom
    radius = min(1.0, dom.L / 8.0)
    return TestFunction.bump(np.full(dom.d, 0.5 * dom.L), radius, 1.0)


def default_gnz_battery(model: ModelSpec) -> list[GNZFunctional]:
    """Six functionals mixing step/bump supports and the two g families."""
    c = 0.5 * model.dom.L
    b = TestFunction.bump
    st = TestFunction.step
    return [
        GNZFunctional(st([c - 1.0], [c + 1.0], 1.0), None, ("poly", (1.0,)),
                      "step_plain"),
        GNZFunctional(b([c], 1.0, 1.0), b([c + 2.5], 1.0, 0.5), ("exp",),
                      "bump_exp_offset"),
        GNZFunctional(st([c - 2.0], [c], 1.0), st([c], [c + 2.0], 0.8),
                      ("poly", (1.0, 0.5)), "steps_linear"),
        GNZFunctional(b([c - 3.0], 1.5, -0.7), None, ("poly", (1.0,)),
                      "negative_bump"),
        GNZFunctional(st([c - 0.5], [c + 0.5], 1.0), b([c], 1.0, 1.0),
                      ("poly", (0.0, 0.0, 1.0)), "overlap_quadratic"),
        GNZFunctional(b([c + 3.0], 1.0, 1.0), b([c + 3.0], 1.0, 0.6), ("exp",),
                      "same_support_exp"),
    ]


def _estimate_alpha(model: ModelSpec, samples) -> tuple[float, Estimate]:
    k1 = estimate_k1(samples)
    return alpha_from_k1(k1.value, model.z, model.a), k1


def _sigma(rc: RunConfig) -> float:
    return float((rc.raw.get("verdicts") or {}).get("sigma", 3.0))


def _ks_level(rc: RunConfig) -> float:
    return float((rc.raw.get("verdicts") or {}).get("ks_level", 0.01))


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def run_sample_gibbs(rc: RunConfig) -> ExperimentOutput:
    model = rc.model
    sp = rc.sampler
    samples = sample_gibbs(model, sp["n_samples"], thin=sp["thin"],
                           burn_in=sp["burn_in"], seed=sp["seed"])
    k1 = estimate_k1(samples) if len(samples) >= 100 else None
    lhs, rhs, ok = lahht_check(model)
    counts = [len(s) for s in samples]
    results = {
        "k1": k1, "lahht": {"lhs": lhs, "rhs": rhs, "satisfied": ok},
        "mean_count": float(np.mean(counts)),
        "n_samples": len(samples),
    }
    series = {"counts": (["sample", "n_points"],
                         [[i, c] for i, c in enumerate(counts)])}
    records = {"samples": {"configs": samples, "times": None,
                           "seed": sp["seed"]}}
    return ExperimentOutput(results, {}, series, records,
                            {"n_samples": len(samples)})


def run_validate_gnz(rc: RunConfig) -> ExperimentOutput:
    model = rc.model
    sp = rc.sampler
    sigma = _sigma(rc)
    samples = sample_gibbs(model, sp["n_samples"], thin=sp["thin"],
                           burn_in=sp["burn_in"], seed=sp["seed"])
    battery = default_gnz_battery(model)

    singles = gnz_battery_residuals(model, samples, battery)
    n_two = min(len(samples), int(sp.get("two_point_samples") or 20_000))
    doubles = [double_gnz_residual(model, samples[:n_two], fl)
               for fl in battery]

    # death-rate consistency: k1 * mass / z against mass * E[e^{-E}]
    bavg = boltzmann_average_series(model, samples)
    k1_series = np.array([len(s) / model.dom.volume for s in samples])
    mass = model.a.mass
    diff = batch_means(mass * (k1_series / model.z - bavg))
    alpha_z = diff.z_against(0.0)
    alpha1, k1 = _estimate_alpha(model, samples)
    alpha2 = mass * float(np.mean(bavg))

    edges, ursell = estimate_ursell2(samples, bins=40)
    centers = 0.5 * (edges[:-1] + edges[1:])
    R = model.phi.range
    far_ok, near_sig = True, False
    u_rows = []
    for ctr, est in zip(centers, ursell):
        if est is None:
            u_rows.append([float(ctr), None, None, None])
            continue
        zsc = est.z_against(0.0)
        u_rows.append([float(ctr), est.value, est.std_error, zsc])
        if R > 0 and ctr >= 10.0 * R and abs(zsc) >= sigma:
            far_ok = False
        if R > 0 and ctr < R and abs(zsc) > sigma:
            near_sig = True

    probe = ruelle_probe(samples)
    moment = exp_moment(model, samples, default_phi_test(model),
                        series_bins=40, xi_hat=probe.xi_hat)

    verdicts = {
        "gnz_single_within": all(abs(r.z_score) < sigma for r in singles),
        "gnz_double_within": all(abs(r.z_score) < sigma for r in doubles),
        "alpha_consistent": abs(alpha_z) < sigma,
        "ruelle_ok": probe.ok,
        "ursell_far_zero": far_ok,
        "exp_moment_series_ok": moment.series.consistent,
    }
    if model.phi.kind != "zero":
        verdicts["ursell_near_nonzero"] = near_sig

    results = {
        "gnz_single": [{"label": r.label, "lhs": r.lhs, "rhs": r.rhs,
                        "z": r.z_score} for r in singles],
        "gnz_double": [{"label": r.label, "lhs": r.lhs, "rhs": r.rhs,
                        "z": r.z_score} for r in doubles],
        "alpha_from_k1": alpha1,
        "alpha_from_boltzmann": alpha2,
        "alpha_consistency_z": alpha_z,
        "k1": k1,
        "ruelle": {"xi_hat": probe.xi_hat, "violations": probe.violations},
        "exp_moment": {"mc": moment.estimate,
                       "series": moment.series.series_value,
                       "difference": moment.series.difference,
                       "combined_se": moment.series.combined_se,
                       "truncation_budget": moment.series.truncation_budget},
    }
    series = {
        "gnz": (["label", "kind", "lhs", "rhs", "z"],
                [[r.label, "single", r.lhs.value, r.rhs.value, r.z_score]
                 for r in singles]
                + [[r.label, "double", r.lhs.value, r.rhs.value, r.z_score]
                   for r in doubles]),
        "ursell2": (["r", "u2", "std_error", "z"], u_rows),
    }
    return ExperimentOutput(results, verdicts, series, {},
                            {"n_samples": len(samples)})


def _run_dynamics(rc: RunConfig, engine: str) -> ExperimentOutput:
    model = rc.model
    sp, dy = rc.sampler, rc.dynamics
    sigma = _sigma(rc)
    replicas = int(dy["replicas"])
    horizon = float(dy["T"])
    snap_times = tuple(float(t) for t in dy["snapshot_times"])
    record = dy.get("record", "events")

    root = np.random.SeedSequence(dy["seed"])
    s_dyn = root.spawn(replicas)
    starts = sample_gibbs(model, replicas, thin=sp["thin"],
                          burn_in=sp["burn_in"], seed=sp["seed"])
    alpha = dy["alpha"]
    alpha_info = None
    if engine == "glauber" and alpha is None:
        extra = sample_gibbs(model, max(200, replicas),
                             burn_in=sp["burn_in"], seed=sp["seed"] + 1)
        alpha, alpha_info = _estimate_alpha(model, extra)

    trajs = []
    event_rows = []
    n_events = 0
    conserved = True
    replay_ok = True
    for r, (gamma0, sd) in enumerate(zip(starts, s_dyn)):
        spec = DynamicsSpec(model, engine, horizon, alpha=alpha,
                            record=record, snapshot_times=snap_times)
        traj = (run_kawasaki(gamma0, spec, sd) if engine == "kawasaki"
                else run_glauber(gamma0, spec, sd))
        trajs.append(traj)
        if traj.events is not None:
            n_events += len(traj.events)
            try:
                final = traj.replay()
                if engine == "kawasaki" and len(final) != len(gamma0):
                    conserved = False
            except AssertionError:
                replay_ok = False
            for ev in traj.events:
                event_rows.append([r, f"{ev.time:.9g}", ev.kind,
                                   " ".join(f"{c:.9g}" for c in ev.x),
                                   "" if ev.y is None else
                                   " ".join(f"{c:.9g}" for c in ev.y)])

    verdicts = {}
    if record == "events":
        verdicts["trajectory_replay_valid"] = replay_ok
        if engine == "kawasaki":
            verdicts["particle_number_conserved"] = conserved

    results = {
        "engine": engine, "replicas": replicas, "horizon": horizon,
        "alpha": alpha, "total_events": n_events,
        "alpha_k1": alpha_info,
    }

    if dy.get("audit"):
        audit = stationarity_audit(model, engine, horizon, dy["seed"] + 100,
                                   alpha=alpha, n_replicas=min(replicas, 64))
        results["stationarity"] = [
            {"name": e.name, "dynamics": e.dynamics, "gibbs": e.gibbs,
             "z": e.z_score} for e in audit.entries]
        verdicts["stationarity_within"] = all(
            abs(e.z_score) < sigma for e in audit.entries)

    series = {}
    if event_rows:
        series["events"] = (["replica", "time", "kind", "x", "y"], event_rows)
    records = {}
    if snap_times:
        flat_cfgs, flat_times = [], []
        for traj in trajs:
            for t, cfg in traj.snapshots:
                flat_cfgs.append(cfg)
                flat_times.append(t)
        records["snapshots"] = {"configs": flat_cfgs, "times": flat_times,
                                "seed": dy["seed"]}
    return ExperimentOutput(results, verdicts, series, records,
                            {"total_events": n_events})


def run_kawasaki_experiment(rc: RunConfig) -> ExperimentOutput:
    return _run_dynamics(rc, "kawasaki")


def run_glauber_experiment(rc: RunConfig) -> ExperimentOutput:
    return _run_dynamics(rc, "glauber")


def run_scaling_sweep(rc: RunConfig) -> ExperimentOutput:
    model = rc.model
    sp = rc.sampler
    obs = rc.raw.get("observables") or {}
    phi_test = (build_test_function(obs["phi_test"], "observables.phi_test")
                if "phi_test" in obs else default_phi_test(model))
    ratio_max = float((rc.raw.get("verdicts") or {}).get("ratio", 0.25))

    samples = sample_gibbs(model, sp["n_samples"], thin=sp["thin"],
                           burn_in=sp["burn_in"], seed=sp["seed"])
    sweep = scaling_sweep(model, rc.eps_grid, phi_test, samples,
                          seeds={"sampler": sp["seed"]})
    totals = sweep.totals
    minus = [d.minus_part.value for d in sweep.distances]
    plus = [d.plus_part.value for d in sweep.distances]

    shift = energy_shift_limit_check(
        None, [1.3], [0.0], [-1.1], [0.0], rc.eps_grid, samples, model)

    sigma = _sigma(rc)
    verdicts = {
        "distance_strictly_decreasing": sweep.strictly_decreasing(),
        "distance_ratio_ok": totals[-1] < ratio_max * totals[0],
        "minus_part_decreasing": all(b < a for a, b in zip(minus, minus[1:])),
        "plus_part_decreasing": all(b < a for a, b in zip(plus, plus[1:])),
    }
    try:
        best = shift.smallest_admissible()
        verdicts["energy_shift_pair_within"] = abs(best.z_pair) < sigma
        verdicts["energy_shift_single_within"] = abs(best.z_single) < sigma
    except ValueError:
        pass

    results = {
        "eps_grid": rc.eps_grid,
        "alpha": sweep.alpha, "alpha_se": sweep.alpha_se,
        "model_hash": sweep.model_hash,
        "seeds": sweep.seeds,
        "richardson_max": sweep.richardson_max,
        "distances": [{"eps": e, "total": d.total, "minus": d.minus_part,
                       "plus": d.plus_part}
                      for e, d in zip(sweep.eps_list, sweep.distances)],
        "energy_shift": [{"eps": c.eps, "admissible": c.admissible,
                          "separation": c.separation,
                          "pair": c.pair, "single": c.single,
                          "z_pair": c.z_pair, "z_single": c.z_single}
                         for c in shift.cases],
    }
    series = {"sweep": (
        ["eps", "l2_total", "total_se", "l2_minus", "minus_se",
         "l2_plus", "plus_se"],
        [[e, d.total.value, d.total.std_error, d.minus_part.value,
          d.minus_part.std_error, d.plus_part.value, d.plus_part.std_error]
         for e, d in zip(sweep.eps_list, sweep.distances)])}
    return ExperimentOutput(results, verdicts, series, {},
                            {"n_samples": len(samples)})


def run_fdd_compare(rc: RunConfig) -> ExperimentOutput:
    model = rc.model
    sp, dy = rc.sampler, rc.dynamics
    alpha = dy["alpha"]
    if alpha is None:
        pilot = sample_gibbs(model, 2000, burn_in=sp["burn_in"],
                             seed=sp["seed"] + 1)
        alpha, _ = _estimate_alpha(model, pilot)

    if dy.get("times"):
        times = [float(t) for t in dy["times"]]
    else:
        rel = dy.get("times_in_relaxations", [0.5, 1.0])
        times = [float(t) / alpha for t in rel]

    obs = rc.raw.get("observables") or {}
    if "phi_tests" in obs:
        phi_tests = [build_test_function(b, f"observables.phi_tests[{i}]")
                     for i, b in enumerate(obs["phi_tests"])]
    else:
        phi_tests = [default_phi_test(model) for _ in times]

    report = fdd_compare(model, alpha, times, phi_tests, rc.eps_grid,
                         int(dy["replicas"]), dy["seed"],
                         burn_in=sp["burn_in"],
                         n_perm=int(dy.get("n_perm", 1000)))
    big = report.case(max(rc.eps_grid))
    small = report.case(min(rc.eps_grid))
    level = _ks_level(rc)
    ratio_max = float((rc.raw.get("verdicts") or {}).get("ratio", 0.5))

    verdicts = {
        "ks_ratio_ok": all(s < ratio_max * b for s, b in
                           zip(small.ks_stats, big.ks_stats)),
        "energy_ratio_ok": small.energy_dist < ratio_max * big.energy_dist,
        "t0_shared_law_ok": all(c.t0_ks_pvalue >= level for c in report.cases),
    }
    results = {
        "alpha": alpha, "times": times, "replicas": report.n_replicas,
        "cases": [{"eps": c.eps, "ks_stats": c.ks_stats,
                   "ks_pvalues": c.ks_pvalues,
                   "static_marginal_pvalues": c.static_ks_pvalues,
                   "energy_distance": c.energy_dist,
                   "energy_pvalue": c.energy_pvalue,
                   "t0_ks_pvalue": c.t0_ks_pvalue} for c in report.cases],
    }
    series = {"fdd": (
        ["eps", "energy_distance", "energy_pvalue", "t0_ks_pvalue"]
        + [f"ks_t{k}" for k in range(len(times))],
        [[c.eps, c.energy_dist, c.energy_pvalue, c.t0_ks_pvalue, *c.ks_stats]
         for c in report.cases])}
    return ExperimentOutput(results, verdicts, series, {},
                            {"replicas_per_engine": report.n_replicas})


def run_gap_probe(rc: RunConfig) -> ExperimentOutput:
    model = rc.model
    sp, dy = rc.sampler, rc.dynamics
    alpha = dy["alpha"]
    if alpha is None:
        pilot = sample_gibbs(model, 2000, burn_in=sp["burn_in"],
                             seed=sp["seed"] + 1)
        alpha, _ = _estimate_alpha(model, pilot)
    obs = rc.raw.get("observables") or {}
    phi_test = (build_test_function(obs["phi_test"], "observables.phi_test")
                if "phi_test" in obs else default_phi_test(model))

    report = spectral_gap_probe(model, alpha, float(dy["T"]),
                                int(dy["replicas"]), dy["seed"],
                                phi_test=phi_test, burn_in=sp["burn_in"])
    verdicts = {"gap_above_bound": report.passed}
    if model.phi.kind == "zero":
        verdicts["gap_matches_alpha_10pct"] = (
            abs(report.gap_hat.value - alpha) <= 0.1 * alpha)
    results = {
        "alpha": alpha,
        "gap_hat": report.gap_hat,
        "paper_bound": report.paper_bound,
    }
    series = {"autocov": (["lag", "autocovariance"],
                          [[float(l), float(c)] for l, c in
                           zip(report.lags, report.autocov)])}
    return ExperimentOutput(results, verdicts, series, {}, {})


RUNNERS: dict[str, Callable[[RunConfig], ExperimentOutput]] = {
    "sample-gibbs": run_sample_gibbs,
    "validate-gnz": run_validate_gnz,
    "run-kawasaki": run_kawasaki_experiment,
    "run-glauber": run_glauber_experiment,
    "scaling-sweep": run_scaling_sweep,
    "fdd-compare": run_fdd_compare,
    "gap-probe": run_gap_probe,
}


# ---------------------------------------------------------------------------
# Output writing
# ---------------------------------------------------------------------------

def write_outputs(rc: RunConfig, out: ExperimentOutput, out_dir,
                  wall_clock_s: float) -> Path:
    """Write report.json (deterministic, hashed), CSV series, record files and
    telemetry.json (unhashed; holds the wall clock)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    payload = {
        "experiment": rc.experiment,
        "version": __version__,
        "backend": kernels.BACKEND,
        "config": _jsonable(rc.raw),
        "model_hash": rc.model.model_hash,
        "results": _jsonable(out.results),
        "verdicts": {k: bool(v) for k, v in out.verdicts.items()},
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    payload["content_hash"] = hashlib.sha256(blob).hexdigest()
    with open(out_dir / "report.json", "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")

    if "csv" in rc.output.get("formats", ["csv"]):
        for name, (header, rows) in out.series.items():
            with open(out_dir / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)

    for name, rec in out.records.items():
        write_records(out_dir / f"{name}.txt", rec["configs"],
                      rc.model.model_hash, rec["seed"], rec["times"])

    telemetry = dict(out.telemetry)
    telemetry["wall_clock_s"] = wall_clock_s
    telemetry["timestamp"] = _time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(out_dir / "telemetry.json", "w") as fh:
        json.dump(telemetry, fh, indent=2)
        fh.write("\n")
    return out_dir / "report.json"
