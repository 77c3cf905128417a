"""Slot-by-slot transmission protocol: monitor, fail, detect, recover.

One run covers a long frame of T_s short slots. Channels are drawn once at
initialization, held static until the configured failure slot, perturbed
adversarially there (boundary of the uncertainty ball, worst of a sampled
set of directions per user), and frozen afterwards. Detection compares the
achieved rates at the failure slot against the desired rates; on detection
the effective channels are re-estimated perfectly and only the beamformers
are re-optimized. True Eve channels are redrawn around the time-invariant
estimate every slot, so the leakage columns of the trace exercise the
robust secrecy design at every step.

Three schemes share the machinery: the proposed robust initialization plus
recovery, a no-resilience baseline with random IRS phases, and a non-robust
initialization (user uncertainty ignored) with the same recovery path.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from resbeam import channel, lmi
from resbeam.absorption import absorption_optimize
from resbeam.adaptation import adaptation_optimize
from resbeam.rates import IrsConfiguration, resilience_metrics
from resbeam.scenario import Layout, Scenario, build_codebook, make_layout, stream

__all__ = ["ResilienceTrace", "ChannelSet", "draw_channels", "simulate_scheme",
           "run_proposed", "run_baseline1", "run_baseline2", "SCHEMES"]

log = logging.getLogger(__name__)

SCHEMES = ("proposed", "baseline1", "baseline2")


@dataclass
class ResilienceTrace:
    """Everything one protocol run produced, metrics recomputable from rates."""

    scheme: str
    rates: np.ndarray          # (T_s + 1, K); row 0 is the initialization slot
    leakage: np.ndarray        # (T_s + 1, K, J)
    phases: list[str]          # per slot: init | monitor | failed | recovered
    t_fail: int
    t_recover: int
    failure_detected: bool
    r_abs: float
    r_ada: float
    init_seconds: float
    recovery_seconds: float
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ChannelSet:
    """All links of one instance: user channels, Eve estimates, and radii."""

    users: list[channel.OverallChannel]
    eve_estimates: list[channel.OverallChannel]
    eps_user: np.ndarray
    eps_eve: np.ndarray


def draw_channels(scenario: Scenario, layout: Layout | None = None) -> ChannelSet:
    """Draw every link at the initialization slot (deterministic per seed)."""
    layout = layout or make_layout(scenario)
    seed = scenario.seed
    F = channel.rician_link(
        scenario.L0, layout.bs_irs_distance(), scenario.alpha_bi, scenario.beta_bi,
        scenario.N, scenario.M,
        (layout.angle_from(layout.irs, layout.bs), layout.angle_from(layout.bs, layout.irs)),
        stream(seed, 0), kind="bs_irs")
    users = []
    for k in range(scenario.K):
        pos = layout.users[k]
        d = channel.rician_link(
            scenario.L0, layout.bs_point_distance(pos), scenario.alpha_bu, scenario.beta_bu,
            scenario.M, 1, (layout.angle_from(layout.bs, pos), 0.0),
            stream(seed, 1, k), kind="bs_user")
        h = channel.rician_link(
            scenario.L0, layout.irs_point_distance(pos), scenario.alpha_iu, scenario.beta_iu,
            scenario.N, 1, (layout.angle_from(layout.irs, pos), 0.0),
            stream(seed, 2, k), kind="irs_user")
        users.append(channel.compose_overall(h, F, d))
    eves = []
    for j in range(scenario.J):
        pos = layout.eves[j]
        d = channel.rician_link(
            scenario.L0, layout.bs_point_distance(pos), scenario.alpha_be, scenario.beta_be,
            scenario.M, 1, (layout.angle_from(layout.bs, pos), 0.0),
            stream(seed, 3, j), kind="bs_eve")
        h = channel.rician_link(
            scenario.L0, layout.irs_point_distance(pos), scenario.alpha_ie, scenario.beta_ie,
            scenario.N, 1, (layout.angle_from(layout.irs, pos), 0.0),
            stream(seed, 4, j), kind="irs_eve")
        eves.append(channel.compose_overall(h, F, d))
    eps_user = np.array([scenario.kappa_user[k] * np.linalg.norm(users[k].matrix)
                         for k in range(scenario.K)])
    eps_eve = np.array([scenario.kappa_eve[j] * np.linalg.norm(eves[j].matrix)
                        for j in range(scenario.J)])
    return ChannelSet(users=users, eve_estimates=eves, eps_user=eps_user, eps_eve=eps_eve)


def _mrt_beams(scenario: Scenario, irs: IrsConfiguration, channels: ChannelSet) -> list[np.ndarray]:
    """Maximum-ratio beams, power-scaled into the exact leakage caps."""
    v = irs.v
    beams = []
    for k in range(scenario.K):
        h = channels.users[k].matrix.conj().T @ v
        norm = np.linalg.norm(h)
        if norm < 1e-300:
            beams.append(np.zeros(scenario.M, complex))
            continue
        w = np.sqrt(scenario.P_max / scenario.K) * h / norm
        scale = 1.0
        for j in range(scenario.J):
            a_e, radius = lmi.phase_reduced_uncertainty(
                channels.eve_estimates[j].matrix, channels.eps_eve[j], v)
            cap = scenario.noise_eve[j] * (2.0 ** scenario.R_leak[k, j] - 1.0)
            worst = lmi.max_quadratic_on_ball(np.outer(w, w.conj()), a_e, radius)
            if worst > cap:
                scale = min(scale, cap / worst)
        beams.append(w * np.sqrt(scale))
    return beams


def _user_rate(H: np.ndarray, v: np.ndarray, beams, k: int, noise: float) -> float:
    u = np.conj(v) @ H
    powers = np.array([np.abs(u @ w) ** 2 for w in beams])
    signal = powers[k]
    return float(np.log2(1.0 + signal / (powers.sum() - signal + noise)))


def _slot_rates(channels_now, v, beams, scenario) -> np.ndarray:
    return np.array([
        _user_rate(channels_now[k], v, beams, k, scenario.noise_user[k])
        for k in range(scenario.K)
    ])


def _slot_leakage(scenario, channels: ChannelSet, v, beams, slot: int) -> np.ndarray:
    out = np.zeros((scenario.K, scenario.J))
    for j in range(scenario.J):
        truth = channel.perturb_within_ball(
            channels.eve_estimates[j], channels.eps_eve[j],
            stream(scenario.seed, 6, j, slot))
        u = np.conj(v) @ truth.matrix
        for k in range(scenario.K):
            power = np.abs(u @ beams[k]) ** 2
            out[k, j] = np.log2(1.0 + power / scenario.noise_eve[j])
    return out


def simulate_scheme(scenario: Scenario, scheme: str,
                    channels: ChannelSet | None = None) -> ResilienceTrace:
    """Run one full protocol trace for the given scheme."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    channels = channels or draw_channels(scenario)
    codebook = build_codebook(scenario.L)
    diagnostics: dict = {}

    t_init = time.perf_counter()
    if scheme == "proposed" or scheme == "baseline2":
        design_scenario = scenario if scheme == "proposed" else scenario.replace(kappa_user=0.0)
        result = absorption_optimize(design_scenario, channels.users, channels.eve_estimates,
                                     codebook=codebook)
        irs = result.irs
        beams = result.beam.w
        diagnostics["certified_rates"] = result.certified_rates
        diagnostics["eta_star"] = result.eta_star
        diagnostics["zeta_star"] = result.zeta_star
        diagnostics["init"] = {
            "objective_history": result.objective_history,
            "outer_iterations": result.outer_iterations,
            "converged": result.converged,
            "rank_ratios": result.beam.rank_ratio,
        }
    else:
        irs = IrsConfiguration.random(scenario.N, codebook, stream(scenario.seed, 7))
        warm = _mrt_beams(scenario, irs, channels)
        nominal_eff = [ch.matrix.conj().T @ irs.v for ch in channels.users]
        ada = adaptation_optimize(scenario, nominal_eff, channels.eve_estimates, irs, warm)
        beams = ada.beam.w
        diagnostics["init"] = {"iterations": ada.iterations, "converged": ada.converged}
    init_seconds = time.perf_counter() - t_init

    T_s, K = scenario.T_s, scenario.K
    t0 = scenario.failure_slot
    v = irs.v
    rates = np.zeros((T_s + 1, K))
    leakage = np.zeros((T_s + 1, K, scenario.J))
    phases = ["init"] + ["monitor"] * T_s

    nominal = [ch.matrix for ch in channels.users]
    rates[0] = _slot_rates(nominal, v, beams, scenario)
    leakage[0] = _slot_leakage(scenario, channels, v, beams, 0)
    for t in range(1, t0):
        rates[t] = rates[0]
        leakage[t] = _slot_leakage(scenario, channels, v, beams, t)

    # failure event: every user's channel moves to the ball boundary along
    # the sampled direction that hurts its rate the most
    failed_channels = list(nominal)
    for k in range(K):
        if channels.eps_user[k] > 0:
            adv = channel.adversarial_failure(
                channels.users[k], channels.eps_user[k], v, beams, k,
                scenario.noise_user[k], scenario.failure_samples,
                stream(scenario.seed, 5, k))
            failed_channels[k] = adv.matrix
    rates[t0] = _slot_rates(failed_channels, v, beams, scenario)
    leakage[t0] = _slot_leakage(scenario, channels, v, beams, t0)

    detected = bool(np.any(rates[t0] < scenario.R_des))
    recovered = False
    recovery_seconds = 0.0
    t_n = min(t0 + 1, T_s)
    if detected:
        phases[t0] = "failed"
    if detected and scheme in ("proposed", "baseline2") and t0 < T_s:
        t_rec = time.perf_counter()
        effective = [failed_channels[k].conj().T @ v for k in range(K)]
        try:
            ada = adaptation_optimize(scenario, effective, channels.eve_estimates, irs,
                                      list(beams))
            beams = ada.beam.w
            recovered = True
            diagnostics["recovery"] = {
                "iterations": ada.iterations,
                "converged": ada.converged,
                "rate_history": ada.rate_history,
            }
        except Exception as exc:  # optimizer failure: record, keep old beams
            log.warning("recovery failed: %s", exc)
            diagnostics["recovery_error"] = str(exc)
        recovery_seconds = time.perf_counter() - t_rec

    post_rates = _slot_rates(failed_channels, v, beams, scenario)
    for t in range(t0 + 1, T_s + 1):
        rates[t] = post_rates
        leakage[t] = _slot_leakage(scenario, channels, v, beams, t)
        phases[t] = "recovered" if recovered else phases[t0]

    r_abs, r_ada = resilience_metrics(rates[t0], rates[t_n], scenario.R_des)
    return ResilienceTrace(
        scheme=scheme,
        rates=rates,
        leakage=leakage,
        phases=phases,
        t_fail=t0,
        t_recover=t_n,
        failure_detected=detected,
        r_abs=r_abs,
        r_ada=r_ada,
        init_seconds=init_seconds,
        recovery_seconds=recovery_seconds,
        diagnostics=diagnostics,
    )


def run_proposed(scenario: Scenario, channels: ChannelSet | None = None) -> ResilienceTrace:
    """Robust initialization plus beamforming-only recovery."""
    return simulate_scheme(scenario, "proposed", channels)


def run_baseline1(scenario: Scenario, channels: ChannelSet | None = None) -> ResilienceTrace:
    """Random IRS phases, recovery-style beam design at t=0, no resilience."""
    return simulate_scheme(scenario, "baseline1", channels)


def run_baseline2(scenario: Scenario, channels: ChannelSet | None = None) -> ResilienceTrace:
    """Non-robust initialization (user uncertainty ignored), full recovery."""
    return simulate_scheme(scenario, "baseline2", channels)
