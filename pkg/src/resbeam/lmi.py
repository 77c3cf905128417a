"""Robust constraints as explicit linear-matrix-inequality data.

Every robust constraint of the pipeline has the shape

    for all ||delta||_2 <= radius:   (gbar + delta)^H Q (gbar + delta)  <=/>=  bound,

where the kernel Q is affine in the optimization variables (transmit
covariances or the lifted IRS matrix). The S-procedure turns each family into
one PSD block with a nonnegative multiplier; blocks are emitted as
:class:`LmiBlock` values: a constant Hermitian term plus one Hermitian
coefficient per real scalar parameter. Hermitian matrix variables are
addressed through a fixed real parametrization (:func:`herm_basis`).

The norm-bounded matrix uncertainty reduces exactly to these vector balls:
``||vec(Delta^H)||_2 = ||Delta||_F``, and right/left multiplication by a fixed
vector maps the Frobenius ball onto a scaled l2 ball, which is what the
rank-one reductions below exploit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "ParamRef",
    "LmiBlock",
    "AffineScalar",
    "herm_param_count",
    "herm_basis",
    "herm_to_params",
    "params_to_herm",
    "psd_project",
    "hermitian_to_real",
    "vec_and_kron_reduce",
    "phase_reduced_uncertainty",
    "beam_reduced_uncertainty",
    "hermitian_kernel_coeffs",
    "eve_secrecy_lmi",
    "user_signal_lmi",
    "user_interference_lmi",
    "schur_lift",
    "max_quadratic_on_ball",
    "min_quadratic_on_ball",
    "QuadraticUncertaintyConstraint",
]

ParamRef = tuple[str, int]


# --- Hermitian real parametrization ------------------------------------------


def herm_param_count(n: int) -> int:
    return n * n


def herm_basis(n: int) -> list[np.ndarray]:
    """Hermitian basis matching the parameter order of :func:`herm_to_params`.

    Order: n diagonal entries, then for each pair i < j (lexicographic) the
    real part then the imaginary part of the (i, j) entry.
    """
    basis: list[np.ndarray] = []
    for i in range(n):
        E = np.zeros((n, n), dtype=complex)
        E[i, i] = 1.0
        basis.append(E)
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n), dtype=complex)
            E[i, j] = 1.0
            E[j, i] = 1.0
            basis.append(E)
            E = np.zeros((n, n), dtype=complex)
            E[i, j] = 1.0j
            E[j, i] = -1.0j
            basis.append(E)
    return basis


def herm_to_params(H: np.ndarray) -> np.ndarray:
    n = H.shape[0]
    params = [float(np.real(H[i, i])) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            params.append(float(np.real(H[i, j])))
            params.append(float(np.imag(H[i, j])))
    return np.array(params)


def params_to_herm(params: np.ndarray, n: int) -> np.ndarray:
    H = np.zeros((n, n), dtype=complex)
    H[np.diag_indices(n)] = params[:n]
    pos = n
    for i in range(n):
        for j in range(i + 1, n):
            H[i, j] = params[pos] + 1j * params[pos + 1]
            H[j, i] = params[pos] - 1j * params[pos + 1]
            pos += 2
    return H


def psd_project(H: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix: symmetrize and clip negative eigenvalues."""
    H = 0.5 * (np.asarray(H) + np.asarray(H).conj().T)
    lam, U = np.linalg.eigh(H)
    if lam[0] >= 0:
        return H
    return (U * np.clip(lam, 0.0, None)) @ U.conj().T


def hermitian_to_real(H: np.ndarray) -> np.ndarray:
    """Embed a Hermitian matrix as [[Re, -Im], [Im, Re]].

    The embedding is PSD iff the input is, with every eigenvalue doubled in
    multiplicity.
    """
    H = np.asarray(H)
    scale = 1.0 + np.abs(H).max(initial=0.0)
    if np.abs(H - H.conj().T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError("input must be Hermitian")
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


# --- vectorization / kernel conventions ---------------------------------------


def vec_and_kron_reduce(H: np.ndarray, V: np.ndarray, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vector g and kernel Q with g^H Q g == Tr(H^H V H W).

    Convention, fixed once: g stacks the conjugated rows of H (equivalently,
    the columns of H^H), and Q = V^T kron W.
    """
    g = np.conj(np.asarray(H, dtype=complex)).reshape(-1)
    Q = np.kron(np.asarray(V).T, np.asarray(W))
    return g, Q


def _check_vec_convention() -> None:
    rng = np.random.default_rng(1234)
    for n1, m in ((2, 2), (3, 2)):
        H = rng.standard_normal((n1, m)) + 1j * rng.standard_normal((n1, m))
        A = rng.standard_normal((n1, n1)) + 1j * rng.standard_normal((n1, n1))
        B = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        V = A @ A.conj().T
        W = B @ B.conj().T
        g, Q = vec_and_kron_reduce(H, V, W)
        lhs = np.real(np.conj(g) @ Q @ g)
        rhs = np.real(np.trace(H.conj().T @ V @ H @ W))
        if abs(lhs - rhs) > 1e-9 * (1 + abs(rhs)):
            raise AssertionError("vectorization convention self-check failed")


_check_vec_convention()


def phase_reduced_uncertainty(H_nominal: np.ndarray, epsilon: float, v: np.ndarray) -> tuple[np.ndarray, float]:
    """Collapse Tr(H^H v v^H H W) to a^H W a with an exact M-dim ball.

    For fixed rank-one V = v v^H the form depends on H only through
    a = H^H v; the image of the Frobenius eps-ball under Delta -> Delta^H v is
    exactly the l2 ball of radius eps * ||v||.
    """
    a_bar = np.asarray(H_nominal).conj().T @ np.asarray(v)
    return a_bar, float(epsilon * np.linalg.norm(v))


def beam_reduced_uncertainty(H_nominal: np.ndarray, epsilon: float, w: np.ndarray) -> tuple[np.ndarray, float]:
    """Collapse Tr(H^H V H w w^H) to b^H V b with an exact (N+1)-dim ball."""
    b_bar = np.asarray(H_nominal) @ np.asarray(w)
    return b_bar, float(epsilon * np.linalg.norm(w))


def hermitian_kernel_coeffs(
    var_names: Sequence[str],
    n: int,
    transform: Callable[[np.ndarray], np.ndarray] | None = None,
) -> list[tuple[ParamRef, np.ndarray]]:
    """Kernel coefficients of an affine-in-Hermitian-variables quadratic form.

    With no transform the kernel is the variable itself (or the sum of the
    named variables). A transform maps each basis element, e.g.
    ``lambda E: np.kron(E.T, W_fixed)`` for the lifted-IRS kernel V^T kron W.
    """
    basis = herm_basis(n)
    coeffs: list[tuple[ParamRef, np.ndarray]] = []
    for name in var_names:
        for p, E in enumerate(basis):
            coeffs.append(((name, p), E if transform is None else transform(E)))
    return coeffs


# --- LMI blocks ---------------------------------------------------------------


@dataclass
class AffineScalar:
    """const + sum of coef * param, used for variable bounds (eta, zeta)."""

    const: float = 0.0
    terms: list[tuple[ParamRef, float]] = field(default_factory=list)

    @classmethod
    def of(cls, value) -> "AffineScalar":
        if isinstance(value, AffineScalar):
            return value
        return cls(const=float(value))


@dataclass
class LmiBlock:
    """Affine Hermitian-matrix function required to be PSD.

    ``const`` plus one Hermitian coefficient per referenced real parameter.
    The assembled matrix is Hermitian for every real assignment.
    """

    const: np.ndarray
    coeffs: list[tuple[ParamRef, np.ndarray]]
    name: str = ""

    @property
    def size(self) -> int:
        return self.const.shape[0]

    def variables(self) -> set[str]:
        return {ref[0] for ref, _ in self.coeffs}

    def evaluate(self, assignment: dict[str, np.ndarray]) -> np.ndarray:
        """Numeric block at the given per-variable parameter vectors."""
        out = self.const.astype(complex).copy()
        for (var, idx), C in self.coeffs:
            out += float(np.asarray(assignment[var]).reshape(-1)[idx]) * C
        return out

    def min_eigenvalue(self, assignment: dict[str, np.ndarray]) -> float:
        return float(np.linalg.eigvalsh(self.evaluate(assignment))[0])


def _sprocedure_block(
    gbar: np.ndarray,
    radius: float,
    kernel_const: np.ndarray | None,
    kernel_coeffs: Iterable[tuple[ParamRef, np.ndarray]],
    bound: AffineScalar,
    multiplier: ParamRef,
    sense: str,
    name: str,
) -> LmiBlock:
    """One S-procedure block for a norm-bounded quadratic constraint.

    sense "upper":  max_{||d||<=radius} (g+d)^H Q (g+d) <= bound
        block = [[q I - Q, -Q g], [-g^H Q, bound - q r^2 - g^H Q g]]
    sense "lower":  min_{||d||<=radius} (g+d)^H Q (g+d) >= bound
        block = [[q I + Q, +Q g], [+g^H Q, -bound - q r^2 + g^H Q g]]

    Feasibility of the block for some q >= 0 is equivalent to the robust
    constraint (single-ball S-lemma). The multiplier stays in the block even
    for radius 0, where the constraint collapses to the nominal inequality.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    gbar = np.asarray(gbar, dtype=complex).reshape(-1)
    d = gbar.size
    sgn = -1.0 if sense == "upper" else +1.0
    if sense not in ("upper", "lower"):
        raise ValueError("sense must be 'upper' or 'lower'")

    def lift(Q: np.ndarray) -> np.ndarray:
        Qg = Q @ gbar
        C = np.zeros((d + 1, d + 1), dtype=complex)
        C[:d, :d] = sgn * Q
        C[:d, d] = sgn * Qg
        C[d, :d] = sgn * Qg.conj()
        C[d, d] = sgn * np.real(gbar.conj() @ Qg)
        return C

    const = np.zeros((d + 1, d + 1), dtype=complex)
    if kernel_const is not None:
        const += lift(np.asarray(kernel_const, dtype=complex))
    const[d, d] += -sgn * bound.const
    coeffs: list[tuple[ParamRef, np.ndarray]] = []
    for ref, K in kernel_coeffs:
        coeffs.append((ref, lift(np.asarray(K, dtype=complex))))
    for ref, t in bound.terms:
        C = np.zeros((d + 1, d + 1), dtype=complex)
        C[d, d] = -sgn * t
        coeffs.append((ref, C))
    Cq = np.zeros((d + 1, d + 1), dtype=complex)
    Cq[:d, :d] = np.eye(d)
    Cq[d, d] = -radius ** 2
    coeffs.append((multiplier, Cq))
    return LmiBlock(const=const, coeffs=coeffs, name=name)


def eve_secrecy_lmi(
    gbar: np.ndarray,
    epsilon: float,
    r_leak: float,
    noise_power: float,
    kernel_coeffs: Iterable[tuple[ParamRef, np.ndarray]],
    multiplier: ParamRef,
    name: str = "eve",
) -> LmiBlock:
    """Robust leakage cap: worst-case received power <= noise * (2^R - 1)."""
    if r_leak < 0:
        raise ValueError("leakage threshold must be nonnegative")
    cap = noise_power * (2.0 ** r_leak - 1.0)
    return _sprocedure_block(gbar, epsilon, None, kernel_coeffs,
                             AffineScalar.of(cap), multiplier, "upper", name)


def user_signal_lmi(
    gbar: np.ndarray,
    epsilon: float,
    kernel_coeffs: Iterable[tuple[ParamRef, np.ndarray]],
    eta: ParamRef,
    multiplier: ParamRef,
    name: str = "signal",
) -> LmiBlock:
    """Robust signal floor: eta <= worst-case signal power."""
    bound = AffineScalar(const=0.0, terms=[(eta, 1.0)])
    return _sprocedure_block(gbar, epsilon, None, kernel_coeffs,
                             bound, multiplier, "lower", name)


def user_interference_lmi(
    gbar: np.ndarray,
    epsilon: float,
    kernel_coeffs: Iterable[tuple[ParamRef, np.ndarray]],
    zeta: ParamRef,
    multiplier: ParamRef,
    name: str = "interference",
) -> LmiBlock:
    """Robust interference ceiling: zeta >= worst-case interference power."""
    bound = AffineScalar(const=0.0, terms=[(zeta, 1.0)])
    return _sprocedure_block(gbar, epsilon, None, kernel_coeffs,
                             bound, multiplier, "upper", name)


def schur_lift(
    theta: np.ndarray,
    s_var: str,
    v_var: str,
    t_var: str,
    b_var: str,
    n_elements: int,
) -> tuple[LmiBlock, AffineScalar]:
    """Lift V = B^H theta theta^H B into a PSD block plus a trace cap.

    Returns the (2(N+1)+1)-sized block over the Hermitian auxiliaries S, T,
    the lifted V, and the real selection matrix B (parameters stored
    column-major over the L x N free entries; the last column is pinned to the
    first level). Together with one-hot B and Tr(S) <= N+1 the pair forces
    V = u u^H with u = B^H theta.
    """
    theta = np.asarray(theta, dtype=complex).reshape(-1)
    L = theta.size
    n1 = n_elements + 1
    s = 2 * n1 + 1
    const = np.zeros((s, s), dtype=complex)
    const[s - 1, s - 1] = 1.0
    # fixed last column of B selects level 0: u[N] = theta[0] = 1
    const[n1 - 1, s - 1] = theta[0]
    const[2 * n1 - 1, s - 1] = theta[0]
    const[s - 1, n1 - 1] = np.conj(theta[0])
    const[s - 1, 2 * n1 - 1] = np.conj(theta[0])

    coeffs: list[tuple[ParamRef, np.ndarray]] = []
    basis = herm_basis(n1)
    for p, E in enumerate(basis):
        C = np.zeros((s, s), dtype=complex)
        C[:n1, :n1] = E
        coeffs.append(((s_var, p), C))
    for p, E in enumerate(basis):
        C = np.zeros((s, s), dtype=complex)
        C[:n1, n1:2 * n1] = E
        C[n1:2 * n1, :n1] = E.conj().T
        coeffs.append(((v_var, p), C))
    for p, E in enumerate(basis):
        C = np.zeros((s, s), dtype=complex)
        C[n1:2 * n1, n1:2 * n1] = E
        coeffs.append(((t_var, p), C))
    # free B entries: param index column-major over (L, N)
    for n in range(n_elements):
        for l in range(L):
            C = np.zeros((s, s), dtype=complex)
            C[n, s - 1] = theta[l]
            C[n1 + n, s - 1] = theta[l]
            C[s - 1, n] = np.conj(theta[l])
            C[s - 1, n1 + n] = np.conj(theta[l])
            coeffs.append(((b_var, n * L + l), C))
    block = LmiBlock(const=const, coeffs=coeffs, name="phase_lift")
    trace_cap = AffineScalar(const=-float(n1), terms=[((s_var, i), 1.0) for i in range(n1)])
    return block, trace_cap


# --- exact extrema of quadratics over norm balls -------------------------------


def _eig_psd(Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, U = np.linalg.eigh(np.asarray(Q, dtype=complex))
    # tolerate solver-grade negative round-off; reject genuine indefiniteness
    if lam.size and lam[0] < -1e-7 * max(1.0, float(lam[-1])):
        raise ValueError("kernel must be PSD")
    return np.clip(lam, 0.0, None), U


def max_quadratic_on_ball(Q: np.ndarray, gbar: np.ndarray, epsilon: float) -> float:
    """max of (g+d)^H Q (g+d) over ||d|| <= epsilon for PSD Q (exact)."""
    gbar = np.asarray(gbar, dtype=complex).reshape(-1)
    lam, U = _eig_psd(Q)
    b = U.conj().T @ gbar
    base = float(np.sum(lam * np.abs(b) ** 2))
    if epsilon == 0 or lam.size == 0:
        return base
    lmax = float(lam[-1])
    if lmax <= 0:
        return 0.0
    w = lam * np.abs(b)
    top = lam >= lmax * (1 - 1e-12)
    if np.linalg.norm(w) < 1e-300:
        return base + lmax * epsilon ** 2

    def resid(nu: float) -> float:
        return float(np.sum((w / (nu - lam)) ** 2) - epsilon ** 2)

    if np.any(w[top] > 0):
        lo = lmax + 1e-14 * max(1.0, lmax)
        hi = lmax + np.linalg.norm(w) / epsilon + 1e-12
        while resid(lo) < 0:  # push bracket toward the pole
            lo = lmax + (lo - lmax) / 16
            if lo - lmax < 1e-250:
                break
        nu = brentq(resid, lo, hi, xtol=1e-15, rtol=1e-14)
        # phases of the optimal d align with b componentwise, so magnitudes suffice
        return float(np.sum(lam * (np.abs(b) + lam * np.abs(b) / (nu - lam)) ** 2))
    # hard case: no coupling with the top eigenspace
    rest = ~top
    phi = float(np.sum((w[rest] / (lmax - lam[rest])) ** 2))
    if phi >= epsilon ** 2:
        lo = lmax * (1 + 1e-14) + 1e-300
        hi = lmax + np.linalg.norm(w) / epsilon + 1e-12
        nu = brentq(resid, lo, hi, xtol=1e-15, rtol=1e-14)
        return float(np.sum(lam * (np.abs(b) + lam * np.abs(b) / (nu - lam)) ** 2))
    spare = epsilon ** 2 - phi
    amp = np.zeros_like(lam)
    amp[rest] = lam[rest] * np.abs(b[rest]) / (lmax - lam[rest])
    val = float(np.sum(lam * (np.abs(b) + amp) ** 2)) + lmax * spare
    return val


def min_quadratic_on_ball(Q: np.ndarray, gbar: np.ndarray, epsilon: float) -> float:
    """min of (g+d)^H Q (g+d) over ||d|| <= epsilon for PSD Q (exact)."""
    gbar = np.asarray(gbar, dtype=complex).reshape(-1)
    lam, U = _eig_psd(Q)
    b = U.conj().T @ gbar
    if epsilon == 0 or lam.size == 0:
        return float(np.sum(lam * np.abs(b) ** 2))
    active = lam > 1e-14 * max(1.0, float(lam[-1]))
    if float(np.sum(np.abs(b[active]) ** 2)) <= epsilon ** 2:
        return 0.0
    la, ba = lam[active], np.abs(b[active])

    def resid(nu: float) -> float:
        return float(np.sum((la * ba / (la + nu)) ** 2) - epsilon ** 2)

    hi = float(lam[-1]) * np.linalg.norm(b) / epsilon + 1.0
    nu = brentq(resid, 0.0, hi, xtol=1e-15, rtol=1e-14)
    return float(np.sum(la * (nu * ba / (la + nu)) ** 2))


@dataclass
class QuadraticUncertaintyConstraint:
    """One robust quadratic constraint over a norm ball, checkable exactly."""

    nominal_vec: np.ndarray
    radius: float
    kernel: np.ndarray
    bound: float
    sense: str  # "max_le" or "min_ge"

    def __post_init__(self) -> None:
        if self.sense not in ("max_le", "min_ge"):
            raise ValueError("sense must be 'max_le' or 'min_ge'")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        _eig_psd(self.kernel)

    def worst_value(self) -> float:
        if self.sense == "max_le":
            return max_quadratic_on_ball(self.kernel, self.nominal_vec, self.radius)
        return min_quadratic_on_ball(self.kernel, self.nominal_vec, self.radius)

    def satisfied(self, tol: float = 0.0) -> bool:
        if self.sense == "max_le":
            return self.worst_value() <= self.bound + tol
        return self.worst_value() >= self.bound - tol

    def sampled_worst(self, n_samples: int, rng: np.random.Generator, boundary: bool = True) -> float:
        """Extremal sampled value; an independent check of :meth:`worst_value`."""
        d = self.nominal_vec.size
        g = rng.standard_normal((n_samples, d)) + 1j * rng.standard_normal((n_samples, d))
        g /= np.linalg.norm(g, axis=1)[:, None]
        if not boundary:
            g *= rng.uniform(size=n_samples)[:, None] ** (1.0 / (2 * d))
        pts = self.nominal_vec[None, :] + self.radius * g
        vals = np.real(np.einsum("si,ij,sj->s", pts.conj(), self.kernel, pts))
        return float(vals.max() if self.sense == "max_le" else vals.min())
