"""CLI front end: runs, sweeps, Monte Carlo orchestration, verification.

Trace CSV columns (fixed order):
    seed, scheme, N, J, slot, user, rate_bps_hz, is_failure_slot, phase
Summary CSV columns:
    scheme, N, J, trials, r_abs_mean, r_abs_std, r_ada_mean, r_ada_std,
    mean_init_seconds, mean_recovery_seconds

Verification suites implement the acceptance criteria; each check prints one
pass/fail line with the measured value. The test suite drives the same
functions, so `resbeam verify <suite>` and pytest agree by construction.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from resbeam import lmi, protocol
from resbeam.absorption import absorption_optimize, exhaustive_best_configuration
from resbeam.adaptation import adaptation_optimize
from resbeam.rates import sample_eve_leakage_max, sample_user_rate_min
from resbeam.scenario import Scenario, default_paper_scenario, desk_scenario, stream

log = logging.getLogger(__name__)

TRACE_COLUMNS = ["seed", "scheme", "N", "J", "slot", "user",
                 "rate_bps_hz", "is_failure_slot", "phase"]
SUMMARY_COLUMNS = ["scheme", "N", "J", "trials", "r_abs_mean", "r_abs_std",
                   "r_ada_mean", "r_ada_std", "mean_init_seconds", "mean_recovery_seconds"]

MONOTONE_BAND = 1e-6


@dataclass
class ExperimentPlan:
    """A sweep: base scenario, axes, trials per point, schemes, output."""

    base: Scenario
    sweep: list[tuple[str, list]] = field(default_factory=list)
    trials: int = 1
    schemes: tuple[str, ...] = ("proposed",)
    out_dir: Path = Path(".")
    jobs: int = 1

    def __post_init__(self) -> None:
        valid = {f.name for f in dc_fields(Scenario)}
        for name, values in self.sweep:
            if name not in valid:
                raise ValueError(f"unknown sweep field {name!r}")
            if not values:
                raise ValueError(f"sweep axis {name!r} has no values")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for scheme in self.schemes:
            if scheme not in protocol.SCHEMES:
                raise ValueError(f"unknown scheme {scheme!r}")
        self.out_dir = Path(self.out_dir)


def _run_point_trial(args) -> list[dict]:
    """One (sweep point, trial): all schemes on shared channels."""
    base_kwargs, point, trial, schemes = args
    scenario = Scenario(**base_kwargs).replace(**point)
    scenario = scenario.replace(seed=scenario.seed + trial)
    channels = protocol.draw_channels(scenario)
    records = []
    for scheme in schemes:
        trace = protocol.simulate_scheme(scenario, scheme, channels)
        records.append({
            "seed": scenario.seed,
            "scheme": scheme,
            "N": scenario.N,
            "J": scenario.J,
            "point": dict(point),
            "trace": trace,
        })
    return records


def run_plan(plan: ExperimentPlan) -> tuple[Path, Path]:
    """Execute the sweep and write the trace and summary CSVs."""
    plan.out_dir.mkdir(parents=True, exist_ok=True)
    axes = [[(name, value) for value in values] for name, values in plan.sweep]
    points = [dict(combo) for combo in itertools.product(*axes)] if axes else [{}]
    base_kwargs = {f.name: getattr(plan.base, f.name) for f in dc_fields(Scenario)}

    tasks = [(base_kwargs, point, trial, plan.schemes)
             for point in points for trial in range(plan.trials)]
    if plan.jobs > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            results = list(pool.map(_run_point_trial, tasks))
    else:
        results = [_run_point_trial(t) for t in tasks]

    trace_path = plan.out_dir / "trace.csv"
    summary_path = plan.out_dir / "summary.csv"
    records = [rec for group in results for rec in group]

    with open(trace_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for rec in records:
            trace = rec["trace"]
            for slot in range(trace.rates.shape[0]):
                for user in range(trace.rates.shape[1]):
                    writer.writerow([
                        rec["seed"], rec["scheme"], rec["N"], rec["J"], slot, user,
                        repr(float(trace.rates[slot, user])),
                        int(slot == trace.t_fail and trace.failure_detected),
                        trace.phases[slot],
                    ])

    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for point in points:
            for scheme in plan.schemes:
                group = [r["trace"] for r in records
                         if r["scheme"] == scheme and r["point"] == point]
                if not group:
                    continue
                r_abs = np.array([t.r_abs for t in group])
                r_ada = np.array([t.r_ada for t in group])
                sc_point = plan.base.replace(**point)
                writer.writerow([
                    scheme, sc_point.N, sc_point.J, len(group),
                    repr(float(r_abs.mean())), repr(float(r_abs.std())),
                    repr(float(r_ada.mean())), repr(float(r_ada.std())),
                    repr(float(np.mean([t.init_seconds for t in group]))),
                    repr(float(np.mean([t.recovery_seconds for t in group]))),
                ])
    return trace_path, summary_path


# --- verification suites (the acceptance criteria) -----------------------------


@dataclass
class Check:
    name: str
    passed: bool
    measured: str


def _block_history_monotone(history: list[tuple[str, float]]) -> float:
    """Largest decrease beyond the tolerance band (<= 0 means monotone)."""
    worst = -np.inf
    for (_, a), (_, b) in zip(history, history[1:]):
        worst = max(worst, (a - b) - MONOTONE_BAND * (1.0 + abs(a)))
    return worst


_CRITERION1_CACHE: dict = {}


def criterion1_runs(seeds: int = 20, jobs: int = 1) -> list[dict]:
    """Converged desk-scale initializations reused by criteria 1-3, 6, 7."""
    key = (seeds,)
    if key in _CRITERION1_CACHE:
        return _CRITERION1_CACHE[key]
    tasks = list(range(seeds))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_criterion1_single, tasks))
    else:
        runs = [_criterion1_single(seed) for seed in tasks]
    _CRITERION1_CACHE[key] = runs
    return runs


def _criterion1_single(seed: int) -> dict:
    scenario = desk_scenario(seed=seed)
    channels = protocol.draw_channels(scenario)
    result = absorption_optimize(scenario, channels.users, channels.eve_estimates)
    return {"seed": seed, "scenario": scenario, "channels": channels, "result": result}


def suite_monotonicity(seeds: int = 20, jobs: int = 1) -> list[Check]:
    """Ascent per update block, convergence budget, and per-seed runtime."""
    checks = []
    for run in criterion1_runs(seeds, jobs):
        res = run["result"]
        slack = _block_history_monotone(res.diagnostics["block_history"])
        checks.append(Check(
            name=f"seed {run['seed']}: objective ascent per block",
            passed=slack <= 0,
            measured=f"worst band excess {slack:.3e}",
        ))
        checks.append(Check(
            name=f"seed {run['seed']}: converged within 50 outer iterations",
            passed=res.converged and res.outer_iterations <= 50,
            measured=f"{res.outer_iterations} iterations, converged={res.converged}",
        ))
        checks.append(Check(
            name=f"seed {run['seed']}: runtime within 10 minutes",
            passed=res.wall_time <= 600.0,
            measured=f"{res.wall_time:.1f} s",
        ))
    return checks


def suite_secrecy_certification(seeds: int = 20, samples: int = 10_000,
                                jobs: int = 1) -> list[Check]:
    """Sampled Eve perturbations stay below the leakage threshold."""
    checks = []
    for run in criterion1_runs(seeds, jobs):
        sc: Scenario = run["scenario"]
        ch: protocol.ChannelSet = run["channels"]
        res = run["result"]
        rng = stream(sc.seed, 901)
        worst = -np.inf
        for j in range(sc.J):
            for k in range(sc.K):
                leak = sample_eve_leakage_max(
                    ch.eve_estimates[j].matrix, ch.eps_eve[j], res.irs.v,
                    res.beam.w[k], sc.noise_eve[j], samples, rng)
                worst = max(worst, leak - sc.R_leak[k, j])
        checks.append(Check(
            name=f"seed {run['seed']}: sampled leakage within threshold",
            passed=worst <= 1e-3,
            measured=f"worst excess {worst:.3e} bits",
        ))
    return checks


def suite_rate_certification(seeds: int = 20, samples: int = 10_000,
                             jobs: int = 1) -> list[Check]:
    """Sampled user perturbations never fall below the certified rate."""
    checks = []
    for run in criterion1_runs(seeds, jobs):
        sc: Scenario = run["scenario"]
        ch: protocol.ChannelSet = run["channels"]
        res = run["result"]
        rng = stream(sc.seed, 902)
        worst = -np.inf
        for k in range(sc.K):
            bound = np.log2(1.0 + res.eta_star[k] / (res.zeta_star[k] + sc.noise_user[k]))
            low = sample_user_rate_min(
                ch.users[k].matrix, ch.eps_user[k], res.irs.v, res.beam.w, k,
                sc.noise_user[k], samples, rng)
            worst = max(worst, bound - low)
        checks.append(Check(
            name=f"seed {run['seed']}: sampled rates above certified bound",
            passed=worst <= 1e-3,
            measured=f"worst shortfall {worst:.3e} bits",
        ))
    return checks


def _sphere_extremum(kernel, gbar, radius, sense, samples, rng, polish=200):
    """Grid search over the ball boundary with local refinement (the oracle)."""
    d = gbar.size
    g = rng.standard_normal((samples, d)) + 1j * rng.standard_normal((samples, d))
    g /= np.linalg.norm(g, axis=1)[:, None]
    pts = gbar[None, :] + radius * g
    vals = np.real(np.einsum("si,ij,sj->s", pts.conj(), kernel, pts))
    best_idx = int(np.argmax(vals) if sense == "max" else np.argmin(vals))
    best_dir = g[best_idx]
    best_val = vals[best_idx]
    step = 0.5
    for _ in range(polish):
        cand = best_dir[None, :] + step * (
            rng.standard_normal((8, d)) + 1j * rng.standard_normal((8, d)))
        cand /= np.linalg.norm(cand, axis=1)[:, None]
        pts = gbar[None, :] + radius * cand
        vals = np.real(np.einsum("si,ij,sj->s", pts.conj(), kernel, pts))
        idx = int(np.argmax(vals) if sense == "max" else np.argmin(vals))
        better = (vals[idx] > best_val) if sense == "max" else (vals[idx] < best_val)
        if better:
            best_val = vals[idx]
            best_dir = cand[idx]
        else:
            step *= 0.7
    return float(best_val)


def _lmi_certified_bound(gbar, radius, kernel, sense) -> float:
    """Tightest bound certifiable by the S-procedure block (small dims)."""
    from resbeam import conic

    prog = conic.ConicProgram()
    prog.add_variable("c")
    prog.add_variable("q", nonneg=True)
    coeffs = [(("c", 0), np.ones((1, 1)))]
    sign = "upper" if sense == "max" else "lower"
    bound = lmi.AffineScalar(0.0, [(("c", 0), 1.0)])
    block = lmi._sprocedure_block(gbar, radius, kernel, [], bound, ("q", 0), sign, "oracle")
    prog.add_hermitian_psd(block)
    prog.set_objective("minimize" if sense == "max" else "maximize", [(("c", 0), 1.0)])
    sol = conic.solve(prog, tol=1e-10)
    if sol.status != "optimal":
        raise RuntimeError(f"bound certification failed: {sol.status}")
    return float(sol.value("c")[0])


def suite_sproc_oracle(instances: int = 12, samples: int = 10_000) -> list[Check]:
    """LMI-certified bounds match boundary grid search on small dimensions."""
    rng = np.random.default_rng(7)
    checks = []
    for i in range(instances):
        d = 1 + (i % 2)
        A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        kernel = A @ A.conj().T
        gbar = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        radius = 0.2 + 0.5 * rng.uniform()
        for sense in ("max", "min"):
            certified = _lmi_certified_bound(gbar, radius, kernel, sense)
            sampled = _sphere_extremum(kernel, gbar, radius, sense, samples, rng)
            scale = 1.0 + abs(sampled)
            gap = abs(certified - sampled) / scale
            checks.append(Check(
                name=f"instance {i} dim {d} {sense}: LMI bound matches grid oracle",
                passed=gap <= 1e-3,
                measured=f"certified {certified:.6f} vs sampled {sampled:.6f} (rel gap {gap:.2e})",
            ))
    return checks


def suite_discrete_gap(instances: int = 5) -> list[Check]:
    """Tiny-instance objective within 1% of exhaustive IRS enumeration."""
    checks = []
    for seed in range(instances):
        scenario = desk_scenario(M=2, K=1, N=2, L=2, J=1, seed=100 + seed)
        channels = protocol.draw_channels(scenario)
        result = absorption_optimize(scenario, channels.users, channels.eve_estimates)
        achieved = float(np.mean(
            np.log2(1.0 + result.eta_star / (result.zeta_star + scenario.noise_user))
            / scenario.R_des))
        _, best = exhaustive_best_configuration(scenario, channels.users,
                                                channels.eve_estimates)
        checks.append(Check(
            name=f"seed {scenario.seed}: objective within 1% of exhaustive best",
            passed=achieved >= (1.0 - 1e-2) * best - 1e-12,
            measured=f"achieved {achieved:.6f} vs exhaustive {best:.6f}",
        ))
    return checks


def suite_rank_one(seeds: int = 20, jobs: int = 1) -> list[Check]:
    """Returned covariances rank-one tight in at least 95% of runs."""
    runs = criterion1_runs(seeds, jobs)
    tight = 0
    worst = 0.0
    for run in runs:
        ratio = max(run["result"].beam.rank_ratio, default=0.0)
        worst = max(worst, ratio)
        if ratio <= 1e-4:
            tight += 1
    fraction = tight / max(len(runs), 1)
    return [Check(
        name="rank-one tightness across initialization runs",
        passed=fraction >= 0.95,
        measured=f"{tight}/{len(runs)} runs tight (worst ratio {worst:.2e})",
    )]


def suite_binary(seeds: int = 20, jobs: int = 1) -> list[Check]:
    """Selection binarity: residual, one-hot columns, rounding change."""
    checks = []
    for run in criterion1_runs(seeds, jobs):
        res = run["result"]
        residual = res.diagnostics["sca"].get("penalty_residual", np.nan)
        B = res.irs.B
        one_hot = bool(np.all(np.sort(B, axis=0)[-1] == 1.0)
                       and np.allclose(B.sum(axis=0), 1.0)
                       and np.all((B == 0.0) | (B == 1.0)))
        checks.append(Check(
            name=f"seed {run['seed']}: pre-rounding residual and exact one-hot selection",
            passed=bool(residual <= 1e-6 and one_hot),
            measured=f"residual {residual:.2e}, one-hot={one_hot}",
        ))
    return checks


def suite_recovery(seeds: int = 10, jobs: int = 1) -> list[Check]:
    """Recovery dominance and the single-user closed form."""
    checks = []
    for seed in range(seeds):
        scenario = desk_scenario(seed=300 + seed)
        trace = protocol.run_proposed(scenario)
        checks.append(Check(
            name=f"seed {scenario.seed}: adaptation metric dominates absorption metric",
            passed=trace.r_ada >= trace.r_abs - 1e-6,
            measured=f"r_ada {trace.r_ada:.6f} vs r_abs {trace.r_abs:.6f}",
        ))
    # single-user, no Eve: recovery is full-power maximum-ratio transmission
    scenario = desk_scenario(K=1, J=1, seed=42).replace(kappa_eve=0.0, R_leak=30.0)
    rng = stream(scenario.seed, 903)
    h = (rng.standard_normal(scenario.M) + 1j * rng.standard_normal(scenario.M)) * 1e-5
    from resbeam.rates import IrsConfiguration
    from resbeam.scenario import build_codebook
    irs = IrsConfiguration.from_indices([0] * scenario.N, build_codebook(scenario.L))
    eve_est = [np.zeros((scenario.N + 1, scenario.M), complex)] * scenario.J
    warm = [h / np.linalg.norm(h) * np.sqrt(scenario.P_max / 4)]
    ada = adaptation_optimize(scenario, [h], eve_est, irs, warm)
    w = ada.beam.w[0]
    mrt = np.sqrt(scenario.P_max) * h / np.linalg.norm(h)
    aligned = np.abs(np.vdot(mrt, w)) / (np.linalg.norm(mrt) * np.linalg.norm(w) + 1e-300)
    power_ok = abs(np.linalg.norm(w) ** 2 - scenario.P_max) <= 1e-5 * scenario.P_max
    checks.append(Check(
        name="single-user recovery matches full-power MRT",
        passed=bool(aligned >= 1 - 1e-5 and power_ok and ada.iterations <= 3),
        measured=f"alignment {aligned:.8f}, power {np.linalg.norm(w)**2:.6f}, "
                 f"iterations {ada.iterations}",
    ))
    return checks


_ORDERING_CACHE: dict = {}


def ordering_experiment(trials: int = 50, jobs: int = 1) -> dict:
    """Mean resilience metrics per scheme at desk scale (criterion 9 data)."""
    key = (trials,)
    if key in _ORDERING_CACHE:
        return _ORDERING_CACHE[key]
    plan = ExperimentPlan(base=desk_scenario(seed=0), trials=trials,
                          schemes=protocol.SCHEMES, out_dir=Path("/tmp"), jobs=jobs)
    base_kwargs = {f.name: getattr(plan.base, f.name) for f in dc_fields(Scenario)}
    tasks = [(base_kwargs, {}, trial, plan.schemes) for trial in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point_trial, tasks))
    else:
        results = [_run_point_trial(t) for t in tasks]
    stats = {}
    for scheme in protocol.SCHEMES:
        r_abs = np.array([rec["trace"].r_abs for group in results
                          for rec in group if rec["scheme"] == scheme])
        r_ada = np.array([rec["trace"].r_ada for group in results
                          for rec in group if rec["scheme"] == scheme])
        stats[scheme] = {
            "r_abs_mean": float(r_abs.mean()),
            "r_abs_se": float(r_abs.std(ddof=1) / np.sqrt(len(r_abs))),
            "r_ada_mean": float(r_ada.mean()),
            "r_ada_se": float(r_ada.std(ddof=1) / np.sqrt(len(r_ada))),
            "n": int(len(r_abs)),
        }
    _ORDERING_CACHE[key] = stats
    return stats


def suite_ordering(trials: int = 50, jobs: int = 1) -> list[Check]:
    """Scheme ordering on both metrics with one-standard-error margins."""
    stats = ordering_experiment(trials, jobs)
    checks = []
    for metric in ("r_abs", "r_ada"):
        for hi, lo in (("proposed", "baseline2"), ("baseline2", "baseline1")):
            a, b = stats[hi], stats[lo]
            margin = a[f"{metric}_mean"] - b[f"{metric}_mean"]
            se = float(np.hypot(a[f"{metric}_se"], b[f"{metric}_se"]))
            checks.append(Check(
                name=f"mean {metric}: {hi} above {lo} beyond one standard error",
                passed=margin > se,
                measured=f"margin {margin:.4f} vs combined se {se:.4f}",
            ))
    return checks


_TREND_CACHE: dict = {}


def irs_trend_experiment(n_values=(4, 8, 16), trials: int = 50, jobs: int = 1) -> dict:
    """Mean metrics of the proposed scheme versus IRS size (criterion 10)."""
    key = (tuple(n_values), trials)
    if key in _TREND_CACHE:
        return _TREND_CACHE[key]
    out = {}
    for n in n_values:
        base = desk_scenario(N=n, seed=0)
        base_kwargs = {f.name: getattr(base, f.name) for f in dc_fields(Scenario)}
        tasks = [(base_kwargs, {}, trial, ("proposed",)) for trial in range(trials)]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_point_trial, tasks))
        else:
            results = [_run_point_trial(t) for t in tasks]
        r_abs = np.array([rec["trace"].r_abs for group in results for rec in group])
        r_ada = np.array([rec["trace"].r_ada for group in results for rec in group])
        out[n] = {"r_abs_mean": float(r_abs.mean()), "r_ada_mean": float(r_ada.mean())}
    _TREND_CACHE[key] = out
    return out


def suite_irs_trend(n_values=(4, 8, 16), trials: int = 50, jobs: int = 1) -> list[Check]:
    stats = irs_trend_experiment(n_values, trials, jobs)
    checks = []
    ns = sorted(stats)
    for metric in ("r_abs_mean", "r_ada_mean"):
        values = [stats[n][metric] for n in ns]
        non_decreasing = all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
        checks.append(Check(
            name=f"{metric} non-decreasing in IRS size",
            passed=non_decreasing,
            measured=", ".join(f"N={n}: {v:.4f}" for n, v in zip(ns, values)),
        ))
    return checks


def suite_full_scale() -> list[Check]:
    """Single full-scale spot check (multi-hour; excluded from CI)."""
    scenario = default_paper_scenario().replace(N=48, seed=0)
    trace = protocol.run_proposed(scenario)
    return [Check(
        name="full-scale absorption metric near failure-free",
        passed=trace.r_abs >= 0.95,
        measured=f"r_abs {trace.r_abs:.4f}",
    )]


SUITES = {
    "monotonicity": suite_monotonicity,
    "secrecy-cert": suite_secrecy_certification,
    "rate-cert": suite_rate_certification,
    "sproc-oracle": suite_sproc_oracle,
    "discrete-gap": suite_discrete_gap,
    "rank-one": suite_rank_one,
    "binary": suite_binary,
    "recovery": suite_recovery,
    "ordering": suite_ordering,
    "irs-trend": suite_irs_trend,
    "full-scale": suite_full_scale,
}


def verify(suite_id: str, **kwargs) -> bool:
    """Run one named suite, print per-check lines, return overall pass."""
    if suite_id not in SUITES:
        raise KeyError(suite_id)
    checks = SUITES[suite_id](**kwargs)
    all_ok = True
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"[{status}] {suite_id}: {check.name} -- {check.measured}")
        all_ok &= check.passed
    return all_ok


# --- CLI ------------------------------------------------------------------------


def _scenario_from_args(args) -> Scenario:
    if getattr(args, "config", None):
        scenario = Scenario.from_config_file(args.config)
    else:
        scenario = default_paper_scenario()
    overrides = {}
    if getattr(args, "n_irs", None) is not None:
        overrides["N"] = args.n_irs
    if getattr(args, "eves", None) is not None:
        overrides["J"] = args.eves
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "t_failure", None) is not None:
        overrides["t_failure"] = args.t_failure
    return scenario.replace(**overrides) if overrides else scenario


def _add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key=value scenario file")
    parser.add_argument("--n-irs", type=int, help="number of IRS elements")
    parser.add_argument("--eves", type=int, help="number of eavesdroppers")
    parser.add_argument("--seed", type=int, help="RNG seed")
    parser.add_argument("--t-failure", type=int, help="failure slot (0 = default)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resbeam",
        description="Resilient secure beamforming simulator for IRS-assisted downlinks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_scn = sub.add_parser("scenario", help="scenario utilities")
    scn_sub = p_scn.add_subparsers(dest="action", required=True)
    p_print = scn_sub.add_parser("print", help="print the resolved configuration")
    _add_scenario_flags(p_print)

    p_run = sub.add_parser("run", help="one protocol trace")
    _add_scenario_flags(p_run)
    p_run.add_argument("--scheme", choices=protocol.SCHEMES, default="proposed")
    p_run.add_argument("--desk", action="store_true", help="use the small desk configuration")
    p_run.add_argument("--out", type=Path, help="write trace/summary CSVs here")

    p_sweep = sub.add_parser("sweep", help="experiment sweep to CSV")
    _add_scenario_flags(p_sweep)
    p_sweep.add_argument("--desk", action="store_true")
    p_sweep.add_argument("--sweep-n", type=str, help="comma list of IRS sizes")
    p_sweep.add_argument("--sweep-eves", type=str, help="comma list of Eve counts")
    p_sweep.add_argument("--schemes", type=str, default="proposed",
                         help="comma list of schemes")
    p_sweep.add_argument("--trials", type=int, default=1)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--out", type=Path, required=True)

    p_verify = sub.add_parser("verify", help="run a named acceptance suite")
    p_verify.add_argument("suite", choices=sorted(SUITES))
    p_verify.add_argument("--trials", type=int, help="Monte Carlo trials where applicable")
    p_verify.add_argument("--seeds", type=int, help="seed count where applicable")
    p_verify.add_argument("--jobs", type=int, default=1)

    p_dump = sub.add_parser("dump-channels", help="serialize the drawn channels")
    _add_scenario_flags(p_dump)
    p_dump.add_argument("--desk", action="store_true")
    p_dump.add_argument("--out", type=Path, required=True)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RESBEAM_LOGLEVEL", "WARNING"),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "scenario" and args.action == "print":
        print(_scenario_from_args(args).to_config_text(), end="")
        return 0

    if args.command == "run":
        scenario = desk_scenario() if args.desk else _scenario_from_args(args)
        if args.desk:
            scenario = _apply_desk_overrides(scenario, args)
        trace = protocol.simulate_scheme(scenario, args.scheme)
        print(f"scheme={trace.scheme} r_abs={trace.r_abs:.6f} r_ada={trace.r_ada:.6f} "
              f"failure_detected={trace.failure_detected}")
        if args.out:
            plan = ExperimentPlan(base=scenario, trials=1, schemes=(args.scheme,),
                                  out_dir=args.out)
            run_plan(plan)
            print(f"wrote {args.out / 'trace.csv'} and {args.out / 'summary.csv'}")
        return 0

    if args.command == "sweep":
        scenario = desk_scenario() if args.desk else _scenario_from_args(args)
        if args.desk:
            scenario = _apply_desk_overrides(scenario, args)
        sweep = []
        if args.sweep_n:
            sweep.append(("N", [int(x) for x in args.sweep_n.split(",")]))
        if args.sweep_eves:
            sweep.append(("J", [int(x) for x in args.sweep_eves.split(",")]))
        plan = ExperimentPlan(
            base=scenario, sweep=sweep, trials=args.trials,
            schemes=tuple(args.schemes.split(",")), out_dir=args.out, jobs=args.jobs)
        trace_path, summary_path = run_plan(plan)
        print(f"wrote {trace_path} and {summary_path}")
        return 0

    if args.command == "verify":
        kwargs = {}
        fn = SUITES[args.suite]
        import inspect
        accepted = inspect.signature(fn).parameters
        if args.trials is not None and "trials" in accepted:
            kwargs["trials"] = args.trials
        if args.seeds is not None and "seeds" in accepted:
            kwargs["seeds"] = args.seeds
        if "jobs" in accepted:
            kwargs["jobs"] = args.jobs
        return 0 if verify(args.suite, **kwargs) else 1

    if args.command == "dump-channels":
        scenario = desk_scenario() if args.desk else _scenario_from_args(args)
        if args.desk:
            scenario = _apply_desk_overrides(scenario, args)
        channels = protocol.draw_channels(scenario)
        named = {f"user_{k}": ch.matrix for k, ch in enumerate(channels.users)}
        named.update({f"eve_{j}": ch.matrix for j, ch in enumerate(channels.eve_estimates)})
        from resbeam.channel import dump_channels
        dump_channels(args.out, named)
        print(f"wrote {args.out}")
        return 0

    parser.error("unknown command")
    return 2


def _apply_desk_overrides(scenario: Scenario, args) -> Scenario:
    overrides = {}
    if getattr(args, "n_irs", None) is not None:
        overrides["N"] = args.n_irs
    if getattr(args, "eves", None) is not None:
        overrides["J"] = args.eves
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "t_failure", None) is not None:
        overrides["t_failure"] = args.t_failure
    return scenario.replace(**overrides) if overrides else scenario


if __name__ == "__main__":
    sys.exit(main())
