"""Fast recovery: beamforming-only re-optimization after a detected failure.

With the IRS configuration frozen, each user's channel collapses to the
effective vector the BS re-estimates after an outage. The weighted sum-rate
is maximized by alternating closed-form fractional-programming auxiliaries
with one convex covariance program per iteration; the secrecy caps keep the
robust form from the initialization (the Eve estimates and radii do not
change during recovery).

The auxiliary update formulas are calibrated the same way as in
:mod:`resbeam.absorption`: the noise term stays inside the quadratic-
transform denominator and log-base factors are matched, so each update is an
exact coordinate maximizer and the outer loop ascends monotonically.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from resbeam import conic, lmi
from resbeam.absorption import SubproblemInfeasible, _add_sqrt_terms, extract_rank_one
from resbeam.rates import BeamformingSolution, IrsConfiguration
from resbeam.scenario import Scenario

__all__ = [
    "EffectiveChannel",
    "AdaptationResult",
    "update_gamma_hat",
    "update_t_hat",
    "solve_recovery_subproblem",
    "adaptation_optimize",
]

log = logging.getLogger(__name__)

LN2 = float(np.log(2.0))
MONOTONE_BAND = 1e-6


@dataclass(frozen=True)
class EffectiveChannel:
    """Per-user effective vector seen once the IRS phases are frozen."""

    h_eff: np.ndarray   # length M
    outer: np.ndarray   # h h^H

    def __post_init__(self) -> None:
        h = np.asarray(self.h_eff, dtype=complex).reshape(-1)
        outer = np.asarray(self.outer, dtype=complex)
        object.__setattr__(self, "h_eff", h)
        object.__setattr__(self, "outer", outer)
        if outer.shape != (h.size, h.size):
            raise ValueError("outer must be M x M")
        if np.abs(outer - np.outer(h, h.conj())).max() > 1e-12 * max(1.0, np.abs(outer).max()):
            raise ValueError("outer must equal h h^H")

    @classmethod
    def from_vector(cls, h: np.ndarray) -> "EffectiveChannel":
        h = np.asarray(h, dtype=complex).reshape(-1)
        return cls(h_eff=h, outer=np.outer(h, h.conj()))


def _vectors(channels) -> list[np.ndarray]:
    out = []
    for ch in channels:
        out.append(ch.h_eff if isinstance(ch, EffectiveChannel) else np.asarray(ch, complex).reshape(-1))
    return out


def _pair_powers(h: np.ndarray, W_list) -> np.ndarray:
    """Received powers h^H W_k' h for every covariance."""
    return np.array([max(float(np.real(h.conj() @ Wk @ h)), 0.0) for Wk in W_list])


def update_gamma_hat(W_list, channels, noise) -> np.ndarray:
    """Closed-form SINR auxiliaries at the current covariances."""
    hs = _vectors(channels)
    noise = np.asarray(noise, float)
    gamma = np.zeros(len(hs))
    for k, h in enumerate(hs):
        p = _pair_powers(h, W_list)
        gamma[k] = p[k] / (p.sum() - p[k] + noise[k])
    return gamma


def update_t_hat(gamma_hat, W_list, channels, noise, r_des) -> np.ndarray:
    """Closed-form quadratic-transform auxiliaries.

    t_k = sqrt((1+gamma_k) s_k) / (R_k (sum_k' s_k' + sigma^2)) with
    s_k' = h_k^H W_k' h_k; zero when the own-signal power vanishes.
    """
    hs = _vectors(channels)
    gamma_hat = np.asarray(gamma_hat, float)
    noise = np.asarray(noise, float)
    r_des = np.asarray(r_des, float)
    t = np.zeros(len(hs))
    for k, h in enumerate(hs):
        p = _pair_powers(h, W_list)
        denom = r_des[k] * (p.sum() + noise[k])
        if denom > 0 and p[k] > 0:
            t[k] = np.sqrt((1.0 + gamma_hat[k]) * p[k]) / denom
    return t


def weighted_rate(W_list, channels, noise, r_des) -> float:
    """Mean of log2(1+SINR_k)/R_k at the given covariances."""
    hs = _vectors(channels)
    noise = np.asarray(noise, float)
    r_des = np.asarray(r_des, float)
    total = 0.0
    for k, h in enumerate(hs):
        p = _pair_powers(h, W_list)
        sinr = p[k] / (p.sum() - p[k] + noise[k])
        total += np.log2(1.0 + sinr) / r_des[k]
    return total / len(hs)


@dataclass
class _AdaInstance:
    """Recovery problem data, channels normalized to unit vectors."""

    M: int
    K: int
    J: int
    h: list[np.ndarray]          # unit-norm effective vectors
    noise_u: np.ndarray          # sigma_k^2 / ||h_k||^2, power-unit scaled
    a_e: list[np.ndarray]        # reduced Eve nominals (unit norm)
    eps_e: np.ndarray            # reduced Eve radii after normalization
    leak_cap: np.ndarray         # K x J caps, rescaled
    P_max: float
    r_des: np.ndarray
    power_unit: float


def _build_ada_instance(scenario: Scenario, channels, eve_estimates,
                        irs: IrsConfiguration, power_unit: float) -> _AdaInstance:
    hs = _vectors(channels)
    if len(hs) != scenario.K:
        raise ValueError("need one effective channel per user")
    M = hs[0].size
    s_u = np.array([max(np.linalg.norm(h), 1e-300) for h in hs])
    h_n = [h / s for h, s in zip(hs, s_u)]
    noise_u = scenario.noise_user / s_u ** 2 / power_unit

    a_e: list[np.ndarray] = []
    eps_e = np.zeros(scenario.J)
    caps = np.zeros((scenario.K, scenario.J))
    for j in range(scenario.J):
        est = eve_estimates[j]
        est = est.matrix if hasattr(est, "matrix") else np.asarray(est, complex)
        radius = scenario.kappa_eve[j] * np.linalg.norm(est)
        a, radius = lmi.phase_reduced_uncertainty(est, radius, irs.v)
        s = max(np.linalg.norm(a), 1e-300)
        a_e.append(a / s)
        eps_e[j] = radius / s
        caps[:, j] = (scenario.noise_eve[j] * (2.0 ** scenario.R_leak[:, j] - 1.0)
                      / s ** 2 / power_unit)
    return _AdaInstance(M=M, K=scenario.K, J=scenario.J, h=h_n, noise_u=noise_u,
                        a_e=a_e, eps_e=eps_e, leak_cap=caps,
                        P_max=scenario.P_max / power_unit,
                        r_des=scenario.R_des.copy(), power_unit=power_unit)


def _build_recovery_program(inst: _AdaInstance, gamma_hat: np.ndarray, t_hat: np.ndarray):
    K, M, J = inst.K, inst.M, inst.J
    prog = conic.ConicProgram()
    wnames = [f"W{k}" for k in range(K)]
    for name in wnames:
        prog.add_variable(name, lmi.herm_param_count(M))
    prog.add_variable("eta", K, nonneg=True)   # own-signal powers s_k
    _add_sqrt_terms(prog, K)
    if J:
        prog.add_variable("q_e", K * J, nonneg=True)

    basis = lmi.herm_basis(M)
    quad = {k: [float(np.real(inst.h[k].conj() @ E @ inst.h[k])) for E in basis]
            for k in range(K)}

    terms: list[tuple[lmi.ParamRef, float]] = []
    for k in range(K):
        terms.append((("t", k), 2.0 * t_hat[k] * np.sqrt(1.0 + gamma_hat[k]) / (K * LN2)))
        coef = -t_hat[k] ** 2 * inst.r_des[k] / (K * LN2)
        for name in wnames:
            for p in range(M * M):
                c = coef * quad[k][p]
                if c != 0.0:
                    terms.append(((name, p), c))
    const = float(np.mean(np.log2(1.0 + gamma_hat) / inst.r_des
                          - gamma_hat / (inst.r_des * LN2)
                          - t_hat ** 2 * inst.r_des * inst.noise_u / LN2))

    # own-signal power slack: eta_k == h_k^H W_k h_k
    for k, name in enumerate(wnames):
        row = [((name, p), quad[k][p]) for p in range(M * M) if quad[k][p] != 0.0]
        prog.add_equality(lmi.AffineScalar(0.0, row + [(("eta", k), -1.0)]))

    prog.add_nonneg(lmi.AffineScalar(
        inst.P_max, [((name, p), -1.0) for name in wnames for p in range(M)]))
    for name in wnames:
        prog.add_hermitian_psd(lmi.LmiBlock(
            const=np.zeros((M, M), complex),
            coeffs=[((name, p), B) for p, B in enumerate(basis)],
            name=f"psd_{name}",
        ))
    for j in range(J):
        for k in range(K):
            own = lmi.hermitian_kernel_coeffs([wnames[k]], M)
            cap = inst.leak_cap[k, j]
            if inst.eps_e[j] > 0:
                prog.add_hermitian_psd(lmi._sprocedure_block(
                    inst.a_e[j], inst.eps_e[j], None, own, lmi.AffineScalar.of(cap),
                    ("q_e", k * J + j), "upper", name=f"eve_{k}_{j}"))
            else:
                row = [(ref, -float(np.real(inst.a_e[j].conj() @ Kp @ inst.a_e[j])))
                       for ref, Kp in own]
                prog.add_nonneg(lmi.AffineScalar(cap, row))
    return prog, wnames, terms, const


def solve_recovery_subproblem(inst: _AdaInstance, gamma_hat: np.ndarray,
                              t_hat: np.ndarray, tol: float = 1e-8) -> list[np.ndarray]:
    """One convex covariance update at fixed auxiliaries.

    A purification re-solve picks the minimum-power point of the optimal face
    (within 1e-7 of the optimum), keeping the covariances essentially rank
    one even when the face is degenerate.
    """
    M = inst.M
    prog, wnames, terms, const = _build_recovery_program(inst, gamma_hat, t_hat)
    prog.set_objective("maximize", terms, const=const)
    sol = conic.solve(prog, tol=tol)
    if sol.status != "optimal":
        raise SubproblemInfeasible(f"recovery subproblem: {sol.status} ({sol.detail})")

    prog2, wnames, terms2, const2 = _build_recovery_program(inst, gamma_hat, t_hat)
    floor = sol.objective - 1e-7 * (1.0 + abs(sol.objective))
    prog2.add_nonneg(lmi.AffineScalar(const2 - floor, list(terms2)))
    prog2.set_objective("minimize", [((name, p), 1.0) for name in wnames for p in range(M)])
    sol2 = conic.solve(prog2, tol=tol)
    if sol2.status == "optimal":
        sol = sol2
    return [lmi.psd_project(lmi.params_to_herm(sol.value(name), M)) for name in wnames]


@dataclass
class AdaptationResult:
    beam: BeamformingSolution
    gamma_history: list[np.ndarray]
    rate_history: list[float]        # mean weighted rates at each iterate
    iterations: int
    converged: bool
    wall_time: float
    diagnostics: dict = field(default_factory=dict)


def adaptation_optimize(
    scenario: Scenario,
    channels,
    eve_estimates,
    irs: IrsConfiguration,
    warm_beams: list[np.ndarray],
    max_outer: int = 50,
    rng: np.random.Generator | None = None,
) -> AdaptationResult:
    """Recover the beamformers on re-estimated effective channels.

    Warm-starts from the pre-failure beamformers (power-rescaled into the
    leakage caps if needed), alternates the closed-form auxiliaries with the
    convex covariance program until the SINR auxiliaries stabilize, and
    returns rank-one beamformers that never perform worse than the warm start
    on the given channels.
    """
    start = time.perf_counter()
    hs = _vectors(channels)
    p0 = max(sum(float(np.linalg.norm(w) ** 2) for w in warm_beams), 1e-12 * scenario.P_max)
    inst = _build_ada_instance(scenario, channels, eve_estimates, irs, p0)

    def caps_scale(W_list) -> np.ndarray:
        scale = np.ones(inst.K)
        for k in range(inst.K):
            for j in range(inst.J):
                worst = lmi.max_quadratic_on_ball(W_list[k], inst.a_e[j], inst.eps_e[j])
                if worst > inst.leak_cap[k, j]:
                    scale[k] = min(scale[k], inst.leak_cap[k, j] / worst)
        return scale

    W = [np.outer(w, w.conj()) / p0 for w in warm_beams]
    W = [s * Wk for s, Wk in zip(caps_scale(W), W)]

    gamma = update_gamma_hat(W, inst.h, inst.noise_u)
    gamma_history = [gamma.copy()]
    rate_history = [weighted_rate(W, inst.h, inst.noise_u, inst.r_des)]

    converged = False
    iterations = 0
    for iterations in range(1, max_outer + 1):
        gamma = update_gamma_hat(W, inst.h, inst.noise_u)
        t_hat = update_t_hat(gamma, W, inst.h, inst.noise_u, inst.r_des)
        W_new = solve_recovery_subproblem(inst, gamma, t_hat, tol=scenario.solver_tol)
        rate_new = weighted_rate(W_new, inst.h, inst.noise_u, inst.r_des)
        if rate_new >= rate_history[-1] - MONOTONE_BAND * (1.0 + abs(rate_history[-1])):
            W = W_new
            rate_history.append(rate_new)
        else:
            rate_history.append(rate_history[-1])
            log.info("recovery iteration %d regressed (%.6f < %.6f); keeping previous",
                     iterations, rate_new, rate_history[-2])
        gamma_new = update_gamma_hat(W, inst.h, inst.noise_u)
        gamma_history.append(gamma_new.copy())
        denom = np.linalg.norm(gamma)
        if denom > 0 and np.linalg.norm(gamma_new - gamma) / denom <= scenario.delta_ada:
            converged = True
            break
        gamma = gamma_new

    # rank-one extraction with exact leakage validation; never return a
    # solution worse than the warm start on these channels
    beams: list[np.ndarray] = []
    ratios: list[float] = []
    total = max(sum(float(np.real(np.trace(Wk))) for Wk in W), 1e-300)
    for k in range(inst.K):
        if float(np.real(np.trace(W[k]))) <= 1e-9 * total:
            beams.append(np.zeros(inst.M, complex))
            ratios.append(0.0)
            continue
        w_k, ratio = extract_rank_one(W[k])
        scale = 1.0
        Wk1 = np.outer(w_k, w_k.conj())
        for j in range(inst.J):
            worst = lmi.max_quadratic_on_ball(Wk1, inst.a_e[j], inst.eps_e[j])
            if worst > inst.leak_cap[k, j]:
                scale = min(scale, inst.leak_cap[k, j] / worst)
        beams.append(w_k * np.sqrt(scale))
        ratios.append(ratio)

    warm_n = [w / np.sqrt(p0) for w in warm_beams]
    final_rate = weighted_rate([np.outer(w, w.conj()) for w in beams],
                               inst.h, inst.noise_u, inst.r_des)
    warm_rate = weighted_rate([np.outer(w, w.conj()) for w in warm_n],
                              inst.h, inst.noise_u, inst.r_des)
    if warm_rate > final_rate:
        log.info("recovery kept the warm-start beams (%.6f vs %.6f)", warm_rate, final_rate)
        beams = warm_n
        ratios = [0.0] * inst.K
        final_rate = warm_rate
    rate_history.append(final_rate)

    unit = np.sqrt(p0)
    beam = BeamformingSolution(
        W=[Wk * p0 for Wk in W],
        w=[w * unit for w in beams],
        rank_ratio=ratios,
    )
    return AdaptationResult(
        beam=beam,
        gamma_history=gamma_history,
        rate_history=rate_history,
        iterations=iterations,
        converged=converged,
        wall_time=time.perf_counter() - start,
    )
