"""Robust initialization: joint beamforming and discrete IRS phase design.

Alternating optimization of the worst-case weighted-rate surrogate under
secrecy caps. Each outer iteration updates the fractional-programming
auxiliaries in closed form, re-optimizes the transmit covariances by a conic
program, then re-optimizes the discrete IRS selection through an inner
penalized successive-convex-approximation loop, rounding the relaxed
selection back to exact one-hot columns.

All solver-facing quantities are normalized so the smallest noise power
becomes 1; rates and beamformers are invariant under this scaling and the
certified power surrogates are mapped back to watts on exit.

The surrogate objective is calibrated so that the closed-form auxiliary
updates are exact coordinate maximizers (noise term included in the
quadratic-transform denominator, log-base factors matched); without this the
outer loop loses its monotone-ascent guarantee.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from resbeam import conic, lmi
from resbeam.channel import OverallChannel
from resbeam.rates import BeamformingSolution, IrsConfiguration
from resbeam.scenario import PhaseCodebook, Scenario, build_codebook, stream

__all__ = [
    "AbsorptionState",
    "AbsorptionResult",
    "InitializationError",
    "SubproblemInfeasible",
    "RoundingFailure",
    "objective_r_abs_tilde",
    "update_gamma",
    "update_alpha",
    "extract_rank_one",
    "solve_W_subproblem",
    "solve_V_subproblem",
    "absorption_optimize",
    "exhaustive_best_configuration",
]

log = logging.getLogger(__name__)

LN2 = float(np.log(2.0))
MONOTONE_BAND = 1e-6


class InitializationError(RuntimeError):
    """No feasible starting point after repair attempts."""


class SubproblemInfeasible(RuntimeError):
    """A convex subproblem reported infeasible or failed numerically."""


class RoundingFailure(RuntimeError):
    """Rounded IRS selection violates a constraint beyond tolerance."""


# --- closed-form pieces -------------------------------------------------------


def objective_r_abs_tilde(eta, zeta, gamma, alpha, r_des, noise) -> float:
    """Transformed absorption surrogate (bits/s/Hz per unit desired rate).

    Per user: log2(1+gamma)/R - gamma/(R ln2)
              + [2 alpha sqrt((1+gamma) eta) - alpha^2 R (eta+zeta+sigma^2)] / ln2,
    averaged over users. At the closed-form (gamma, alpha) updates this equals
    the mean of log2(1 + eta/(zeta+sigma^2))/R.
    """
    eta = np.asarray(eta, float)
    zeta = np.asarray(zeta, float)
    gamma = np.asarray(gamma, float)
    alpha = np.asarray(alpha, float)
    r_des = np.asarray(r_des, float)
    noise = np.asarray(noise, float)
    logs = np.log2(1.0 + gamma) / r_des - gamma / (r_des * LN2)
    quad = (2.0 * alpha * np.sqrt((1.0 + gamma) * eta)
            - alpha ** 2 * r_des * (eta + zeta + noise)) / LN2
    return float(np.mean(logs + quad))


def update_gamma(eta, zeta, noise) -> np.ndarray:
    """Closed-form SINR auxiliary, gamma = eta / (zeta + sigma^2)."""
    return np.asarray(eta, float) / (np.asarray(zeta, float) + np.asarray(noise, float))


def update_alpha(gamma, eta, zeta, noise, r_des) -> np.ndarray:
    """Closed-form quadratic-transform auxiliary.

    alpha = sqrt((1+gamma) eta) / (R (eta + zeta + sigma^2)); defined as 0
    when the denominator power vanishes.
    """
    gamma = np.asarray(gamma, float)
    eta = np.asarray(eta, float)
    denom = np.asarray(r_des, float) * (eta + np.asarray(zeta, float) + np.asarray(noise, float))
    out = np.zeros_like(denom)
    mask = denom > 0
    out[mask] = np.sqrt((1.0 + gamma[mask]) * eta[mask]) / denom[mask]
    return out


def _bounded_rate(eta, zeta, noise, r_des) -> float:
    return float(np.mean(np.log2(1.0 + np.asarray(eta) / (np.asarray(zeta) + noise)) / np.asarray(r_des)))


_psd_project = lmi.psd_project


# --- normalized problem data ----------------------------------------------------


@dataclass
class _Instance:
    """Channel data with every channel scaled to unit Frobenius norm.

    SINRs are invariant under scaling one user's channel while dividing that
    user's noise power by the squared scale, and the leakage constraint is
    invariant under scaling an Eve channel while dividing its cap. With unit
    channel norms all quadratic-form data is O(1), which the solvers need.
    """

    M: int
    K: int
    J: int
    n1: int
    H: list[np.ndarray]          # nominal user channels, unit Frobenius norm
    eps_u: np.ndarray            # user radii (= kappa_user after scaling)
    He: list[np.ndarray]         # Eve channel estimates, unit Frobenius norm
    eps_e: np.ndarray
    noise_u: np.ndarray          # per-user sigma_k^2 / ||H_k||_F^2
    leak_cap: np.ndarray         # K x J received-power caps, rescaled
    P_max: float
    r_des: np.ndarray
    u_scale: np.ndarray          # ||H_k||_F^2: converts eta/zeta back to watts
    power_unit: float = 1.0      # watts per internal power unit

    def with_power_unit(self, p0: float) -> "_Instance":
        """Express transmit powers in units of p0 (SINRs invariant).

        Covariances, slacks, caps, the budget, and noise all divide by p0;
        u_scale picks up the factor so eta/zeta still map back to watts.
        """
        from dataclasses import replace
        p0 = float(max(p0, 1e-300))
        return replace(
            self,
            noise_u=self.noise_u / p0,
            leak_cap=self.leak_cap / p0,
            P_max=self.P_max / p0,
            u_scale=self.u_scale * p0,
            power_unit=self.power_unit * p0,
        )


def _as_matrix(ch) -> np.ndarray:
    return ch.matrix if isinstance(ch, OverallChannel) else np.asarray(ch, dtype=complex)


def build_instance(scenario: Scenario, user_channels, eve_estimates) -> _Instance:
    H_raw = [_as_matrix(ch) for ch in user_channels]
    He_raw = [_as_matrix(ch) for ch in eve_estimates]
    if len(H_raw) != scenario.K or len(He_raw) != scenario.J:
        raise ValueError("channel counts must match scenario K and J")
    n1, M = H_raw[0].shape
    s_u = np.array([max(np.linalg.norm(Hk), 1e-300) for Hk in H_raw])
    s_e = np.array([max(np.linalg.norm(He), 1e-300) for He in He_raw]) if scenario.J else np.zeros(0)
    H = [Hk / s for Hk, s in zip(H_raw, s_u)]
    He = [Hk / s for Hk, s in zip(He_raw, s_e)]
    noise_u = scenario.noise_user / s_u ** 2
    leak_cap = (scenario.noise_eve[None, :] * (2.0 ** scenario.R_leak - 1.0)
                / s_e[None, :] ** 2) if scenario.J else np.zeros((scenario.K, 0))
    return _Instance(M=M, K=scenario.K, J=scenario.J, n1=n1, H=H,
                     eps_u=scenario.kappa_user.copy(),
                     He=He, eps_e=scenario.kappa_eve.copy(),
                     noise_u=noise_u, leak_cap=leak_cap,
                     P_max=scenario.P_max, r_des=scenario.R_des.copy(),
                     u_scale=s_u ** 2)


def _exact_slacks(inst: _Instance, v: np.ndarray, W: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Certified worst-case signal floor and interference ceiling per user."""
    eta = np.zeros(inst.K)
    zeta = np.zeros(inst.K)
    for k in range(inst.K):
        a_bar, radius = lmi.phase_reduced_uncertainty(inst.H[k], inst.eps_u[k], v)
        eta[k] = lmi.min_quadratic_on_ball(W[k], a_bar, radius)
        others = sum((W[kk] for kk in range(inst.K) if kk != k), np.zeros((inst.M, inst.M), complex))
        if np.linalg.norm(others) > 0:
            zeta[k] = lmi.max_quadratic_on_ball(others, a_bar, radius)
    return eta, zeta


def _eve_worst_powers(inst: _Instance, v: np.ndarray, W: list[np.ndarray]) -> np.ndarray:
    worst = np.zeros((inst.K, inst.J))
    for j in range(inst.J):
        a_e, radius = lmi.phase_reduced_uncertainty(inst.He[j], inst.eps_e[j], v)
        for k in range(inst.K):
            worst[k, j] = lmi.max_quadratic_on_ball(W[k], a_e, radius)
    return worst


def _book_objective(inst: _Instance, v, W, gamma, alpha) -> tuple[float, np.ndarray, np.ndarray]:
    """Objective at the best feasible slacks for the given point.

    zeta takes its exact ceiling; eta takes the exact floor capped at the
    1-D stationary point of the concave quadratic term so the evaluation
    matches what the solver would choose.
    """
    eta_x, zeta_x = _exact_slacks(inst, v, W)
    cap = np.full(inst.K, np.inf)
    mask = alpha > 0
    cap[mask] = (1.0 + gamma[mask]) / (alpha[mask] * inst.r_des[mask]) ** 2
    eta_b = np.minimum(eta_x, cap)
    return objective_r_abs_tilde(eta_b, zeta_x, gamma, alpha, inst.r_des, inst.noise_u), eta_x, zeta_x


# --- state -----------------------------------------------------------------------


@dataclass
class AbsorptionState:
    """Mutable loop state of the alternating optimization."""

    eta: np.ndarray
    zeta: np.ndarray
    gamma: np.ndarray
    alpha: np.ndarray
    W: list[np.ndarray]
    irs: IrsConfiguration
    q_e: np.ndarray
    q_S: np.ndarray
    q_I: np.ndarray
    objective_history: list[float] = field(default_factory=list)


@dataclass
class AbsorptionResult:
    beam: BeamformingSolution
    irs: IrsConfiguration
    eta_star: np.ndarray          # watts
    zeta_star: np.ndarray         # watts
    certified_rates: np.ndarray   # bits/s/Hz per user
    objective_history: list[float]
    outer_iterations: int
    converged: bool
    wall_time: float
    diagnostics: dict = field(default_factory=dict)


# --- W subproblem -----------------------------------------------------------------


def _add_sqrt_terms(prog: conic.ConicProgram, count: int):
    """Auxiliary t with t_k^2 <= eta_k, shared by both algorithms."""
    prog.add_variable("t", count, nonneg=True)
    for k in range(count):
        prog.add_soc([
            lmi.AffineScalar(1.0, [(("eta", k), 1.0)]),
            lmi.AffineScalar(-1.0, [(("eta", k), 1.0)]),
            lmi.AffineScalar(0.0, [(("t", k), 2.0)]),
        ])


def _scalar_quadratic(gbar: np.ndarray, coeffs) -> list[tuple[lmi.ParamRef, float]]:
    """Affine terms of gbar^H Q gbar for an affine kernel (radius-0 case)."""
    return [(ref, float(np.real(gbar.conj() @ K @ gbar))) for ref, K in coeffs]


def _build_w_program(inst: _Instance, irs: IrsConfiguration, gamma: np.ndarray,
                     alpha: np.ndarray):
    """Covariance program pieces shared by the solve and its purification."""
    v = irs.v
    K, M, J = inst.K, inst.M, inst.J
    prog = conic.ConicProgram()
    wnames = [f"W{k}" for k in range(K)]
    for name in wnames:
        prog.add_variable(name, lmi.herm_param_count(M))
    prog.add_variable("eta", K, nonneg=True)
    prog.add_variable("zeta", K, nonneg=True)
    _add_sqrt_terms(prog, K)
    if J:
        prog.add_variable("q_e", K * J, nonneg=True)
    prog.add_variable("q_S", K, nonneg=True)
    prog.add_variable("q_I", K, nonneg=True)

    basis = lmi.herm_basis(M)
    diag_refs = [[(name, p) for p in range(M)] for name in wnames]

    terms: list[tuple[lmi.ParamRef, float]] = []
    for k in range(K):
        terms.append((("t", k), 2.0 * alpha[k] * np.sqrt(1.0 + gamma[k]) / (K * LN2)))
        terms.append((("eta", k), -alpha[k] ** 2 * inst.r_des[k] / (K * LN2)))
        terms.append((("zeta", k), -alpha[k] ** 2 * inst.r_des[k] / (K * LN2)))
    const = float(np.mean(np.log2(1.0 + gamma) / inst.r_des - gamma / (inst.r_des * LN2)
                          - alpha ** 2 * inst.r_des * inst.noise_u / LN2))

    # power budget
    power_terms = [(ref, -1.0) for refs in diag_refs for ref in refs]
    prog.add_nonneg(lmi.AffineScalar(inst.P_max, power_terms))

    for k, name in enumerate(wnames):
        prog.add_hermitian_psd(lmi.LmiBlock(
            const=np.zeros((M, M), complex),
            coeffs=[((name, p), B) for p, B in enumerate(basis)],
            name=f"psd_{name}",
        ))

    for k in range(K):
        a_bar, radius = lmi.phase_reduced_uncertainty(inst.H[k], inst.eps_u[k], v)
        own = lmi.hermitian_kernel_coeffs([wnames[k]], M)
        other_names = [wnames[kk] for kk in range(K) if kk != k]
        if radius > 0:
            prog.add_hermitian_psd(lmi.user_signal_lmi(
                a_bar, radius, own, ("eta", k), ("q_S", k), name=f"sig_{k}"))
            if other_names:
                others = lmi.hermitian_kernel_coeffs(other_names, M)
                prog.add_hermitian_psd(lmi.user_interference_lmi(
                    a_bar, radius, others, ("zeta", k), ("q_I", k), name=f"int_{k}"))
        else:
            quad = _scalar_quadratic(a_bar, own)
            prog.add_nonneg(lmi.AffineScalar(0.0, quad + [(("eta", k), -1.0)]))
            if other_names:
                others = lmi.hermitian_kernel_coeffs(other_names, M)
                quad_i = [(ref, -c) for ref, c in _scalar_quadratic(a_bar, others)]
                prog.add_nonneg(lmi.AffineScalar(0.0, quad_i + [(("zeta", k), 1.0)]))

    for j in range(J):
        a_e, radius_e = lmi.phase_reduced_uncertainty(inst.He[j], inst.eps_e[j], v)
        for k in range(K):
            own = lmi.hermitian_kernel_coeffs([wnames[k]], M)
            cap = inst.leak_cap[k, j]
            if radius_e > 0:
                block = lmi._sprocedure_block(
                    a_e, radius_e, None, own, lmi.AffineScalar.of(cap),
                    ("q_e", k * J + j), "upper", name=f"eve_{k}_{j}")
                prog.add_hermitian_psd(block)
            else:
                quad = [(ref, -c) for ref, c in _scalar_quadratic(a_e, own)]
                prog.add_nonneg(lmi.AffineScalar(cap, quad))
    return prog, wnames, terms, const, diag_refs


def solve_W_subproblem(
    inst: _Instance,
    irs: IrsConfiguration,
    gamma: np.ndarray,
    alpha: np.ndarray,
    tol: float = 1e-8,
) -> dict:
    """Re-optimize covariances and slacks for a fixed IRS configuration.

    With V = v v^H fixed, each robust quadratic form collapses onto the
    effective M-dimensional channel a = H^H v with an exactly matched ball,
    so every S-procedure block has side M+1. A purification re-solve picks
    the minimum-power point of the optimal face (within 1e-7 of the optimum),
    which keeps the returned covariances essentially rank one even when the
    face is flat.
    """
    prog, wnames, terms, const, diag_refs = _build_w_program(inst, irs, gamma, alpha)
    prog.set_objective("maximize", terms, const=const)
    sol = conic.solve(prog, tol=tol)
    if sol.status != "optimal":
        raise SubproblemInfeasible(f"beamforming subproblem: {sol.status} ({sol.detail})")

    surrogate = sol.objective
    prog2, wnames, terms2, const2, diag_refs = _build_w_program(inst, irs, gamma, alpha)
    floor = surrogate - 1e-7 * (1.0 + abs(surrogate))
    prog2.add_nonneg(lmi.AffineScalar(const2 - floor, list(terms2)))
    prog2.set_objective("minimize", [(ref, 1.0) for refs in diag_refs for ref in refs])
    sol2 = conic.solve(prog2, tol=tol)
    if sol2.status == "optimal":
        sol = sol2
        surrogate = const2 + sum(c * float(sol.value(ref[0])[ref[1]]) for ref, c in terms2)

    K, M, J = inst.K, inst.M, inst.J
    W = [_psd_project(lmi.params_to_herm(sol.value(name), M)) for name in wnames]
    return {
        "W": W,
        "eta": sol.value("eta").copy(),
        "zeta": sol.value("zeta").copy(),
        "q_e": sol.value("q_e").reshape(K, J).copy() if J else np.zeros((K, 0)),
        "q_S": sol.value("q_S").copy(),
        "q_I": sol.value("q_I").copy(),
        "objective": surrogate,
        "solution": sol,
    }


# --- V subproblem (inner SCA loop) --------------------------------------------------


def _dominant_vectors(W: list[np.ndarray]) -> list[np.ndarray]:
    """Scaled dominant eigenvectors of each covariance (possibly zero)."""
    vecs = []
    for Wk in W:
        lam, U = np.linalg.eigh(Wk)
        if lam[-1] <= 0:
            vecs.append(np.zeros(Wk.shape[0], complex))
        else:
            vecs.append(np.sqrt(lam[-1]) * U[:, -1])
    return vecs


def _stacked_reduction(Hmat: np.ndarray, eps: float, beams: list[np.ndarray]):
    """Collapse Tr(H^H V H Sum w w^H) onto the span of the beams.

    With C = [w_1 ... w_r] and the thin QR C = Q R (Q orthonormal columns),
    the form equals Tr(Y^H V Y R R^H) with Y = H Q, and Delta -> Delta Q maps
    the Frobenius eps-ball exactly onto the Frobenius eps-ball in Y-space.
    Returns (g, radius, kernel transform) in the fixed vec convention; the
    transform is None when the form reduces to a plain vector quadratic.
    """
    C = np.column_stack(beams)
    Q, R = np.linalg.qr(C)
    keep = np.abs(np.diag(R)).max(initial=0.0)
    if keep < 1e-300:
        return np.zeros(0, complex), 0.0, None
    Y = Hmat @ Q
    Wt = R @ R.conj().T
    if Wt.shape == (1, 1):
        # scalar weight: kernel is w-norm^2 * V over b = H w / ||w||
        scale = float(np.real(Wt[0, 0]))
        return Y[:, 0] * np.sqrt(scale), eps * np.sqrt(scale), None
    g = np.conj(Y).reshape(-1)
    return g, eps, (lambda E, Wm=Wt: np.kron(E.T, Wm))


def _v_kernel_setups(inst: _Instance, W: list[np.ndarray]):
    """Per-constraint (nominal, radius, kernel transform) for the V step.

    Covariances enter through their dominant rank-one beams: signal and
    leakage kernels collapse onto (N+1)-vectors, and the interference kernel
    onto a (K-1)(N+1)-dimensional stacked form, all with exactly matched
    uncertainty balls. With tight covariances (the usual case) this is exact;
    otherwise it is a surrogate and the caller's accept/reject bookkeeping
    protects monotonicity.
    """
    K, J = inst.K, inst.J
    w_vecs = _dominant_vectors(W)
    sig, inter, eve = [], [], []
    for k in range(K):
        sig.append(_stacked_reduction(inst.H[k], inst.eps_u[k], [w_vecs[k]]))
        others = [w_vecs[kk] for kk in range(K) if kk != k and np.linalg.norm(w_vecs[kk]) > 0]
        inter.append(_stacked_reduction(inst.H[k], inst.eps_u[k], others) if others else None)
        eve.append([_stacked_reduction(inst.He[j], inst.eps_e[j], [w_vecs[k]]) for j in range(J)])
    return sig, inter, eve


def solve_V_subproblem(
    inst: _Instance,
    W: list[np.ndarray],
    gamma: np.ndarray,
    alpha: np.ndarray,
    irs_prev: IrsConfiguration,
    codebook: PhaseCodebook,
    mu: float,
    delta_sca: float,
    tol: float = 1e-7,
    max_sca: int = 12,
) -> dict:
    """Inner SCA loop over the relaxed binary selection, then rounding.

    Solves the penalized convex program around the previous selection until
    the relative change of B drops below delta_sca, rounds each column to
    one-hot, and validates the rounded point; on a broken constraint the
    penalty factor is halved (up to 3 times) before reporting failure.
    """
    K, J, n1, L = inst.K, inst.J, inst.n1, codebook.L
    N = n1 - 1

    # exploration: selection-free relaxation, quantized to candidate configs
    sig, inter, eve = _v_kernel_setups(inst, W)
    vbasis = lmi.herm_basis(n1)
    prog = _build_v_program(inst, gamma, alpha, codebook.phasors, None, irs_prev.B,
                            sig, inter, eve, vbasis)
    # reduced accuracy only degrades the candidate, which is checked exactly
    sol = conic.solve(prog, tol=tol, max_iters=20_000, allow_inaccurate=True,
                      time_limit=max(10.0, 0.5 * inst.n1))
    if sol.status != "optimal":
        raise SubproblemInfeasible(f"IRS relaxation: {sol.status} ({sol.detail})")
    V_star = lmi.params_to_herm(sol.value("V"), n1)
    candidates = [
        _quantize_lifted(V_star, codebook),
        np.argmax(irs_prev.B[:, :N], axis=0),
    ]

    # pick the best candidate after exact leakage repair
    best = None
    for indices in candidates:
        irs_c = IrsConfiguration.from_indices(indices, codebook)
        scale_c = _repair_scale(inst, irs_c.v, W)
        val, _, _ = _book_objective(inst, irs_c.v, [s * Wk for s, Wk in zip(scale_c, W)],
                                    gamma, alpha)
        if best is None or val > best[0]:
            best = (val, irs_c, scale_c)
    _, irs_start, scale_start = best
    W_eff = [s * Wk for s, Wk in zip(scale_start, W)]

    # penalized SCA from the selected binary point, retrying with a halved
    # penalty factor if the rounded outcome breaks a leakage cap
    mu_now = mu
    out = None
    for attempt in range(4):
        out = _run_sca(inst, W_eff, gamma, alpha, irs_start, codebook, mu_now,
                       delta_sca, tol, max_sca)
        indices = np.argmax(out["B_relaxed"][:, :N], axis=0)
        irs_new = IrsConfiguration.from_indices(indices, codebook)
        worst = _eve_worst_powers(inst, irs_new.v, W_eff)
        margin = worst - inst.leak_cap
        if margin.size == 0 or margin.max() <= 1e-6 * (1.0 + inst.leak_cap.max()):
            out.update(irs=irs_new, mu_used=mu_now, attempts=attempt + 1,
                       eve_scale=scale_start)
            return out
        log.warning("rounded selection overshoots a leakage cap by %.3e; "
                    "halving penalty factor to %g", margin.max(), mu_now / 2)
        mu_now /= 2.0
    if out["penalty_residual"] > 1e-4:
        raise RoundingFailure(
            f"selection failed to binarize (residual {out['penalty_residual']:.3e})")
    # final repair: shrink each user's power into its caps; the caller's
    # accept/reject bookkeeping decides whether the repaired pair wins
    scale_fin = _repair_scale(inst, irs_new.v, W_eff)
    out.update(irs=irs_new, mu_used=mu_now, attempts=4, eve_scale=scale_start * scale_fin)
    return out


def _repair_scale(inst: _Instance, v: np.ndarray, W: list[np.ndarray]) -> np.ndarray:
    """Per-user power multipliers bringing worst-case leakage inside the caps."""
    scale = np.ones(inst.K)
    if inst.J == 0:
        return scale
    worst = _eve_worst_powers(inst, v, W)
    for k in range(inst.K):
        for j in range(inst.J):
            if worst[k, j] > inst.leak_cap[k, j]:
                scale[k] = min(scale[k], inst.leak_cap[k, j] / worst[k, j])
    return np.clip(scale, 0.0, 1.0)


def _quantize_lifted(V: np.ndarray, codebook: PhaseCodebook) -> np.ndarray:
    """Codebook indices from the dominant eigenvector of a lifted V."""
    lam, U = np.linalg.eigh(V)
    u = U[:, -1]
    ref = u[-1]
    if np.abs(ref) > 1e-12:
        u = u * np.conj(ref) / np.abs(ref)
    return np.array([codebook.quantize(float(np.angle(z)) % (2 * np.pi)) for z in u[:-1]])


def _run_sca(inst, W, gamma, alpha, irs_start, codebook, mu, delta_sca, tol, max_sca) -> dict:
    """Penalized SCA loop from a binary-feasible starting selection.

    With the penalty weight 1/mu far above the objective scale, each
    linearization pulls the selection onto a vertex; the loop certifies the
    fixed point and drives the binarity residual to zero. The penalized true
    objective is non-decreasing across iterations (majorization).
    """
    K, J, n1 = inst.K, inst.J, inst.n1
    theta = codebook.phasors
    L = theta.size
    N = n1 - 1
    sig, inter, eve = _v_kernel_setups(inst, W)
    vbasis = lmi.herm_basis(n1)

    def unpack(sol) -> np.ndarray:
        Bfree = sol.value("B").reshape(N, L).T  # params column-major over (L, N)
        B = np.zeros((L, n1))
        B[:, :N] = np.clip(Bfree, 0.0, 1.0)
        B[0, N] = 1.0
        return B

    B_prev = irs_start.B.copy()
    penalized_history: list[float] = []
    iterations = 0
    B_new = B_prev
    warm = None
    for _ in range(max_sca - 1):
        iterations += 1
        prog = _build_v_program(inst, gamma, alpha, theta, mu, B_prev,
                                sig, inter, eve, vbasis)
        prog.warm_start = warm
        # near the vertex the program has no interior; reduced-accuracy
        # solutions are fine because the iterate snaps and is checked exactly
        sol = conic.solve(prog, tol=tol, max_iters=20_000, allow_inaccurate=True,
                          time_limit=max(6.0, 0.5 * inst.n1))
        if sol.status != "optimal":
            raise SubproblemInfeasible(f"IRS subproblem: {sol.status} ({sol.detail})")
        warm = sol.raw if sol.backend == "scs" else None
        B_new = unpack(sol)
        # interior-point iterates sit O(sqrt(tol)) inside the box; once the
        # iterate is essentially a vertex, snap to it (every binary selection
        # is feasible for the penalized program, so this stays in-model)
        snapped = IrsConfiguration.from_indices(np.argmax(B_new[:, :N], axis=0), codebook).B
        if np.linalg.norm(B_new - snapped) <= 0.05 * np.sqrt(N):
            B_new = snapped
        residual = float(np.sum(B_new[:, :N] - B_new[:, :N] ** 2))
        # solver objective carries the linearized penalty; swap in the true one
        lin_pen = float(np.sum(B_new[:, :N] - 2 * B_prev[:, :N] * B_new[:, :N]
                               + B_prev[:, :N] ** 2)) / mu
        penalized_history.append(sol.objective + lin_pen - residual / mu)
        changed = np.linalg.norm(B_prev - B_new)
        rel = changed / max(np.linalg.norm(B_prev), 1e-300)
        B_prev = B_new
        if (changed == 0.0 or rel <= delta_sca) and residual <= 1e-6:
            break
    residual = float(np.sum(B_new[:, :N] - B_new[:, :N] ** 2))
    return {
        "B_relaxed": B_new,
        "penalty_residual": residual,
        "sca_iterations": iterations,
        "penalized_history": penalized_history,
    }


def _build_v_program(inst, gamma, alpha, theta, mu, B_prev, sig, inter, eve, vbasis):
    """One convex program of the IRS step.

    ``mu`` None builds the selection-free relaxation over the lifted matrix
    alone (V PSD with unit diagonal): this is the exploration pass whose
    solution seeds a feasible binary selection. Otherwise the program carries
    the full selection machinery (B simplex rows, the Schur lift with its
    trace cap, and the penalty linearized around ``B_prev``).
    """
    K, J, n1 = inst.K, inst.J, inst.n1
    L = theta.size
    N = n1 - 1
    explore = mu is None
    prog = conic.ConicProgram()
    nv = lmi.herm_param_count(n1)
    prog.add_variable("V", nv)
    if not explore:
        prog.add_variable("S", nv)
        prog.add_variable("Taux", nv)
        prog.add_variable("B", L * N, nonneg=True)
    prog.add_variable("eta", K, nonneg=True)
    prog.add_variable("zeta", K, nonneg=True)
    _add_sqrt_terms(prog, K)
    if J:
        prog.add_variable("q_e", K * J, nonneg=True)
    prog.add_variable("q_S", K, nonneg=True)
    prog.add_variable("q_I", K, nonneg=True)

    terms: list[tuple[lmi.ParamRef, float]] = []
    for k in range(K):
        terms.append((("t", k), 2.0 * alpha[k] * np.sqrt(1.0 + gamma[k]) / (K * LN2)))
        terms.append((("eta", k), -alpha[k] ** 2 * inst.r_des[k] / (K * LN2)))
        terms.append((("zeta", k), -alpha[k] ** 2 * inst.r_des[k] / (K * LN2)))
    pen_const = 0.0
    if not explore:
        # linearized penalty: (1/mu) sum b (1 - 2 b_prev) + const
        pen_const = -float(np.sum(B_prev[:, :N] ** 2)) / mu
        for n in range(N):
            for l in range(L):
                terms.append((("B", n * L + l), -(1.0 - 2.0 * B_prev[l, n]) / mu))
    const = float(np.mean(np.log2(1.0 + gamma) / inst.r_des - gamma / (inst.r_des * LN2)
                          - alpha ** 2 * inst.r_des * inst.noise_u / LN2)) + pen_const
    prog.set_objective("maximize", terms, const=const)

    if explore:
        # every binary selection lifts to V with unit diagonal
        for i in range(n1):
            prog.add_equality(lmi.AffineScalar(-1.0, [(("V", i), 1.0)]))
    else:
        # one-hot relaxation: columns sum to one, entries in [0, 1]
        for n in range(N):
            prog.add_equality(lmi.AffineScalar(-1.0, [(("B", n * L + l), 1.0) for l in range(L)]))
            for l in range(L):
                prog.add_nonneg(lmi.AffineScalar(1.0, [(("B", n * L + l), -1.0)]))
        # Schur lift tying V to the selection; S, T >= 0 are implied blocks
        lift_block, trace_cap = lmi.schur_lift(theta, "S", "V", "Taux", "B", N)
        prog.add_hermitian_psd(lift_block)
        prog.add_nonneg(lmi.AffineScalar(-trace_cap.const, [(r, -c) for r, c in trace_cap.terms]))
    prog.add_hermitian_psd(lmi.LmiBlock(
        const=np.zeros((n1, n1), complex),
        coeffs=[(("V", p), B) for p, B in enumerate(vbasis)],
        name="psd_V",
    ))

    def kernel_coeffs(transform):
        return lmi.hermitian_kernel_coeffs(["V"], n1, transform)

    for k in range(K):
        g, radius, transform = sig[k]
        if g.size == 0:
            prog.add_nonneg(lmi.AffineScalar(0.0, [(("eta", k), -1.0)]))
        else:
            own = kernel_coeffs(transform)
            if radius > 0:
                prog.add_hermitian_psd(lmi.user_signal_lmi(
                    g, radius, own, ("eta", k), ("q_S", k), name=f"sig_{k}"))
            else:
                prog.add_nonneg(lmi.AffineScalar(
                    0.0, _scalar_quadratic(g, own) + [(("eta", k), -1.0)]))
        if inter[k] is not None and inter[k][0].size > 0:
            gi, radius_i, transform_i = inter[k]
            others = kernel_coeffs(transform_i)
            if radius_i > 0:
                prog.add_hermitian_psd(lmi.user_interference_lmi(
                    gi, radius_i, others, ("zeta", k), ("q_I", k), name=f"int_{k}"))
            else:
                quad_i = [(ref, -c) for ref, c in _scalar_quadratic(gi, others)]
                prog.add_nonneg(lmi.AffineScalar(0.0, quad_i + [(("zeta", k), 1.0)]))
        for j in range(J):
            ge, radius_e, transform_e = eve[k][j]
            if ge.size == 0:
                continue
            own_e = kernel_coeffs(transform_e)
            cap = inst.leak_cap[k, j]
            if radius_e > 0:
                prog.add_hermitian_psd(lmi._sprocedure_block(
                    ge, radius_e, None, own_e, lmi.AffineScalar.of(cap),
                    ("q_e", k * J + j), "upper", name=f"eve_{k}_{j}"))
            else:
                quad_e = [(ref, -c) for ref, c in _scalar_quadratic(ge, own_e)]
                prog.add_nonneg(lmi.AffineScalar(cap, quad_e))
    return prog


# --- initialization -----------------------------------------------------------------


def _init_irs(inst: _Instance, codebook: PhaseCodebook) -> IrsConfiguration:
    """Phase-align the strongest user's cascaded rows, quantized to the codebook."""
    k_star = int(np.argmax([np.linalg.norm(Hk) for Hk in inst.H]))
    H = inst.H[k_star]
    n1 = inst.n1
    base = H[n1 - 1]
    if np.linalg.norm(base) < 1e-300:
        base = H[int(np.argmax(np.linalg.norm(H[:n1 - 1], axis=1)))]
    indices = []
    for n in range(n1 - 1):
        s = H[n] @ np.conj(base)
        angle = -np.angle(s) if np.abs(s) > 0 else 0.0
        indices.append(codebook.quantize(angle % (2 * np.pi)))
    return IrsConfiguration.from_indices(indices, codebook)


def _init_W(inst: _Instance, irs: IrsConfiguration) -> list[np.ndarray]:
    """Per-user maximum-ratio covariances, power-scaled into the leakage caps."""
    v = irs.v
    W = []
    for k in range(inst.K):
        h = inst.H[k].conj().T @ v
        norm = np.linalg.norm(h)
        if norm < 1e-300:
            W.append(np.zeros((inst.M, inst.M), complex))
            continue
        w = np.sqrt(inst.P_max / inst.K) * h / norm
        W.append(np.outer(w, w.conj()))
    for k in range(inst.K):
        scale = 1.0
        for j in range(inst.J):
            a_e, radius = lmi.phase_reduced_uncertainty(inst.He[j], inst.eps_e[j], v)
            worst = lmi.max_quadratic_on_ball(W[k], a_e, radius)
            if worst > 0:
                scale = min(scale, inst.leak_cap[k, j] / worst)
        W[k] = W[k] * scale
    return W


# --- rank-one extraction --------------------------------------------------------------


def extract_rank_one(W: np.ndarray) -> tuple[np.ndarray, float]:
    """Dominant-eigenpair beamformer and the rank-one tightness ratio."""
    W = np.asarray(W, dtype=complex)
    lam, U = np.linalg.eigh(W)
    lam = np.clip(lam, 0.0, None)
    if lam[-1] <= 0:
        return np.zeros(W.shape[0], complex), 0.0
    ratio = float(lam[-2] / lam[-1]) if lam.size > 1 else 0.0
    return np.sqrt(lam[-1]) * U[:, -1], ratio


def _extract_beamformer(
    inst: _Instance,
    irs: IrsConfiguration,
    W: np.ndarray,
    k: int,
    rng: np.random.Generator,
    ratio_threshold: float = 1e-4,
    candidates: int = 100,
) -> tuple[np.ndarray, float]:
    """Rank-one beamformer for user k, falling back to Gaussian randomization.

    Every candidate (including the eigen extraction) is validated against the
    exact worst-case leakage caps; randomized candidates keep the power share
    Tr(W) and the best feasible one by certified signal floor wins.
    """
    v = irs.v
    w0, ratio = extract_rank_one(W)

    def into_caps(wc: np.ndarray) -> np.ndarray:
        """Scale a candidate down until every exact worst-case cap holds."""
        Wc = np.outer(wc, wc.conj())
        scale = 1.0
        for j in range(inst.J):
            a_e, radius = lmi.phase_reduced_uncertainty(inst.He[j], inst.eps_e[j], v)
            worst = lmi.max_quadratic_on_ball(Wc, a_e, radius)
            if worst > inst.leak_cap[k, j]:
                scale = min(scale, inst.leak_cap[k, j] / worst)
        return wc * np.sqrt(scale)

    if ratio <= ratio_threshold:
        return into_caps(w0), ratio

    a_bar, radius_u = lmi.phase_reduced_uncertainty(inst.H[k], inst.eps_u[k], v)
    power = float(np.real(np.trace(W)))
    lam, U = np.linalg.eigh(W)
    lam = np.clip(lam, 0.0, None)
    root = U @ np.diag(np.sqrt(lam)) @ U.conj().T
    pool = [w0] if np.linalg.norm(w0) > 0 else []
    for _ in range(candidates):
        z = (rng.standard_normal(inst.M) + 1j * rng.standard_normal(inst.M)) / np.sqrt(2)
        wc = root @ z
        nrm = np.linalg.norm(wc)
        if nrm < 1e-300:
            continue
        pool.append(wc * np.sqrt(power) / nrm)
    best = None
    best_floor = -np.inf
    for wc in pool:
        wc = into_caps(wc)
        floor = lmi.min_quadratic_on_ball(np.outer(wc, wc.conj()), a_bar, radius_u)
        if floor > best_floor:
            best_floor = floor
            best = wc
    if best is None:
        raise RoundingFailure(
            f"no usable rank-one candidate for user {k} "
            f"(ratio {ratio:.2e}, {candidates} draws)")
    return best, ratio


# --- the outer loop ---------------------------------------------------------------------


def absorption_optimize(
    scenario: Scenario,
    user_channels,
    eve_estimates,
    codebook: PhaseCodebook | None = None,
    max_outer: int = 50,
    rng: np.random.Generator | None = None,
) -> AbsorptionResult:
    """Alternating optimization of covariances and discrete IRS phases.

    Returns the rank-one beamformers, the rounded IRS configuration, and the
    certified worst-case signal/interference surrogates (watts) evaluated at
    the returned solution; log2(1 + eta*/(zeta* + sigma^2)) is the guaranteed
    per-user rate for every admissible channel perturbation.
    """
    start = time.perf_counter()
    codebook = codebook or build_codebook(scenario.L)
    rng = rng or stream(scenario.seed, 800)
    inst = build_instance(scenario, user_channels, eve_estimates)

    irs = _init_irs(inst, codebook)
    W = _init_W(inst, irs)
    # express powers in units of the initial budget so variables are O(1)
    p0 = max(sum(float(np.real(np.trace(Wk))) for Wk in W), 1e-300)
    inst = inst.with_power_unit(p0)
    W = [Wk / p0 for Wk in W]
    eta, zeta = _exact_slacks(inst, irs.v, W)
    if np.any(~np.isfinite(eta)) or np.any(~np.isfinite(zeta)):
        raise InitializationError("initial slacks are not finite (signal floor family)")
    worst0 = _eve_worst_powers(inst, irs.v, W)
    if worst0.size and (worst0 - inst.leak_cap).max() > 1e-9 * (1 + inst.leak_cap.max()):
        raise InitializationError("initial point violates the leakage-cap family")

    state = AbsorptionState(
        eta=eta, zeta=zeta,
        gamma=update_gamma(eta, zeta, inst.noise_u),
        alpha=np.zeros(inst.K), W=W, irs=irs,
        q_e=np.zeros((inst.K, inst.J)), q_S=np.zeros(inst.K), q_I=np.zeros(inst.K),
    )
    state.alpha = update_alpha(state.gamma, eta, zeta, inst.noise_u, inst.r_des)
    state.objective_history.append(
        objective_r_abs_tilde(eta, zeta, state.gamma, state.alpha, inst.r_des, inst.noise_u))
    block_history: list[tuple[str, float]] = [("init", state.objective_history[0])]

    converged = False
    outer = 0
    sca_info: dict = {}
    for outer in range(1, max_outer + 1):
        prev_obj = state.objective_history[-1]
        band = MONOTONE_BAND * (1.0 + abs(prev_obj))

        state.gamma = update_gamma(state.eta, state.zeta, inst.noise_u)
        state.alpha = update_alpha(state.gamma, state.eta, state.zeta, inst.noise_u, inst.r_des)
        block_history.append(("aux", objective_r_abs_tilde(
            state.eta, state.zeta, state.gamma, state.alpha, inst.r_des, inst.noise_u)))

        try:
            wres = solve_W_subproblem(inst, state.irs, state.gamma, state.alpha,
                                      tol=scenario.solver_tol)
        except SubproblemInfeasible:
            if outer == 1:
                raise InitializationError(
                    "beamforming subproblem infeasible at the initial IRS configuration "
                    "(leakage-cap family)")
            raise
        obj_w, eta_w, zeta_w = _book_objective(inst, state.irs.v, wres["W"],
                                               state.gamma, state.alpha)
        obj_keep, _, _ = _book_objective(inst, state.irs.v, state.W, state.gamma, state.alpha)
        if obj_w >= obj_keep - band:
            state.W = wres["W"]
            state.q_e, state.q_S, state.q_I = wres["q_e"], wres["q_S"], wres["q_I"]
            state.eta, state.zeta = eta_w, zeta_w
            block_history.append(("beams", obj_w))
        else:
            block_history.append(("beams", obj_keep))
            log.warning("iteration %d: covariance step regressed (%.3e < %.3e); keeping previous",
                        outer, obj_w, obj_keep)

        try:
            vres = solve_V_subproblem(inst, state.W, state.gamma, state.alpha, state.irs,
                                      codebook, scenario.mu, scenario.delta_sca,
                                      tol=max(scenario.solver_tol, 1e-8))
        except (SubproblemInfeasible, RoundingFailure) as exc:
            # the selection step is an improver; a failed proposal only means
            # the previous configuration stays for this iteration
            log.warning("iteration %d: IRS step failed (%s); keeping configuration", outer, exc)
            vres = None
        if vres is not None:
            sca_info = {k: vres[k] for k in ("penalty_residual", "sca_iterations", "mu_used")}
            W_cand = [s * Wk for s, Wk in zip(vres["eve_scale"], state.W)]
            obj_v, eta_v, zeta_v = _book_objective(inst, vres["irs"].v, W_cand,
                                                   state.gamma, state.alpha)
        else:
            obj_v = -np.inf
        obj_stay, eta_s, zeta_s = _book_objective(inst, state.irs.v, state.W,
                                                  state.gamma, state.alpha)
        if obj_v >= obj_stay - band:
            state.irs = vres["irs"]
            state.W = W_cand
            state.eta, state.zeta = eta_v, zeta_v
            obj_now = obj_v
        else:
            state.eta, state.zeta = eta_s, zeta_s
            obj_now = obj_stay
            if vres is not None:
                log.info("iteration %d: keeping previous IRS selection (%.6f vs %.6f)",
                         outer, obj_v, obj_stay)

        state.objective_history.append(obj_now)
        block_history.append(("irs", obj_now))
        log.info("absorption iter %d: objective %.6f (penalty residual %.2e, %d SCA steps)",
                 outer, obj_now, sca_info["penalty_residual"], sca_info["sca_iterations"])
        if abs(obj_now - prev_obj) <= scenario.delta_abs * max(abs(prev_obj), 1e-12):
            converged = True
            break

    # consistency polish: refresh the auxiliaries at the final slacks and
    # re-solve the covariances once. With self-consistent auxiliaries the
    # signal-floor cap is strictly inactive, which sharpens the optimal face
    # and keeps the returned covariances essentially rank one.
    state.gamma = update_gamma(state.eta, state.zeta, inst.noise_u)
    state.alpha = update_alpha(state.gamma, state.eta, state.zeta, inst.noise_u, inst.r_des)
    block_history.append(("aux", objective_r_abs_tilde(
        state.eta, state.zeta, state.gamma, state.alpha, inst.r_des, inst.noise_u)))
    try:
        wres = solve_W_subproblem(inst, state.irs, state.gamma, state.alpha,
                                  tol=scenario.solver_tol)
        obj_w, eta_w, zeta_w = _book_objective(inst, state.irs.v, wres["W"],
                                               state.gamma, state.alpha)
        obj_keep, _, _ = _book_objective(inst, state.irs.v, state.W, state.gamma, state.alpha)
        if obj_w >= obj_keep - MONOTONE_BAND * (1.0 + abs(obj_keep)):
            state.W = wres["W"]
            state.q_e, state.q_S, state.q_I = wres["q_e"], wres["q_S"], wres["q_I"]
            state.eta, state.zeta = eta_w, zeta_w
            block_history.append(("beams", obj_w))
        else:
            block_history.append(("beams", obj_keep))
    except SubproblemInfeasible:
        log.warning("final covariance polish failed; keeping last iterate")

    beams = []
    ratios = []
    eta_fin, zeta_fin = _exact_slacks(inst, state.irs.v, state.W)
    for k in range(inst.K):
        # a user whose certified SINR is negligible carries no rate; the
        # zero beam is equivalent for them and strictly reduces everyone
        # else's interference, so drop the residual covariance dust
        if eta_fin[k] / (zeta_fin[k] + inst.noise_u[k]) <= 1e-4:
            state.W[k] = np.zeros((inst.M, inst.M), complex)
            beams.append(np.zeros(inst.M, complex))
            ratios.append(0.0)
            continue
        w_k, ratio = _extract_beamformer(inst, state.irs, state.W[k], k, rng)
        beams.append(w_k)
        ratios.append(ratio)
    W_final = [np.outer(w, w.conj()) for w in beams]
    eta_star, zeta_star = _exact_slacks(inst, state.irs.v, W_final)
    certified = np.log2(1.0 + eta_star / (zeta_star + inst.noise_u))

    unit = inst.power_unit
    beam = BeamformingSolution(
        W=[Wk * unit for Wk in state.W],
        w=[wk * np.sqrt(unit) for wk in beams],
        rank_ratio=ratios,
    )
    return AbsorptionResult(
        beam=beam,
        irs=state.irs,
        eta_star=eta_star * inst.u_scale,
        zeta_star=zeta_star * inst.u_scale,
        certified_rates=certified,
        objective_history=state.objective_history,
        outer_iterations=outer,
        converged=converged,
        wall_time=time.perf_counter() - start,
        diagnostics={"sca": sca_info, "rank_ratios": ratios, "block_history": block_history},
    )


def exhaustive_best_configuration(
    scenario: Scenario,
    user_channels,
    eve_estimates,
    codebook: PhaseCodebook | None = None,
    max_outer: int = 50,
) -> tuple[IrsConfiguration, float]:
    """Best discrete IRS configuration by full enumeration (tiny N, L only).

    For each of the L^N configurations the beamforming problem is solved to
    convergence with the IRS fixed; returns the best configuration and its
    bounded-rate objective. Independent of the SCA machinery; used as the
    discrete-optimality oracle.
    """
    codebook = codebook or build_codebook(scenario.L)
    inst = build_instance(scenario, user_channels, eve_estimates)
    irs0 = _init_irs(inst, codebook)
    W_probe = _init_W(inst, irs0)
    inst = inst.with_power_unit(max(sum(float(np.real(np.trace(Wk))) for Wk in W_probe), 1e-300))
    n_conf = codebook.L ** scenario.N
    if n_conf > 256:
        raise ValueError("enumeration limited to 256 configurations")
    best_val = -np.inf
    best_irs = None
    for code in range(n_conf):
        indices = [(code // codebook.L ** n) % codebook.L for n in range(scenario.N)]
        irs = IrsConfiguration.from_indices(indices, codebook)
        W = _init_W(inst, irs)
        eta, zeta = _exact_slacks(inst, irs.v, W)
        val = _bounded_rate(eta, zeta, inst.noise_u, inst.r_des)
        for _ in range(max_outer):
            gamma = update_gamma(eta, zeta, inst.noise_u)
            alpha = update_alpha(gamma, eta, zeta, inst.noise_u, inst.r_des)
            try:
                res = solve_W_subproblem(inst, irs, gamma, alpha, tol=scenario.solver_tol)
            except SubproblemInfeasible:
                break
            eta, zeta = _exact_slacks(inst, irs.v, res["W"])
            new_val = _bounded_rate(eta, zeta, inst.noise_u, inst.r_des)
            if abs(new_val - val) <= scenario.delta_abs * max(abs(val), 1e-12):
                val = new_val
                break
            val = new_val
        if val > best_val:
            best_val = val
            best_irs = irs
    return best_irs, best_val
