"""SINR, achievable rate, leakage, and resilience metric evaluation.

All rates are base-2 logarithms (bits/s/Hz). The trace forms operate on
covariances W_k; an equivalent vector form through the extracted beamformers
is used for fast sampled certification.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from resbeam.scenario import PhaseCodebook

__all__ = [
    "BeamformingSolution",
    "IrsConfiguration",
    "sinr_user",
    "rate_user",
    "leakage_eve",
    "resilience_metrics",
    "sample_user_rate_min",
    "sample_eve_leakage_max",
]


@dataclass
class BeamformingSolution:
    """Per-user transmit covariances plus their rank-one extractions."""

    W: list[np.ndarray]           # Hermitian PSD M x M, one per user
    w: list[np.ndarray]           # length-M beamformers
    rank_ratio: list[float]       # lambda_2 / lambda_1 of each W

    def total_power(self) -> float:
        return float(sum(np.real(np.trace(Wk)) for Wk in self.W))


@dataclass(frozen=True)
class IrsConfiguration:
    """Discrete IRS phase selection: one-hot B, lifted v, and V = v v^H."""

    B: np.ndarray   # L x (N+1) one-hot selection, last column fixed to e_1
    v: np.ndarray   # length N+1, unit modulus, v[N] == 1
    V: np.ndarray   # (N+1) x (N+1), rank one

    def __post_init__(self) -> None:
        B = np.asarray(self.B, dtype=float)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "v", np.asarray(self.v, dtype=complex))
        object.__setattr__(self, "V", np.asarray(self.V, dtype=complex))
        L, n1 = B.shape
        if not np.array_equal(np.sort(B, axis=0)[-1], np.ones(n1)) or not np.allclose(B.sum(axis=0), 1.0):
            raise ValueError("every column of B must be one-hot")
        if not np.array_equal(B[:, -1], np.eye(L)[0]):
            raise ValueError("the last column of B selects the fixed level")
        if self.v.shape != (n1,) or not np.allclose(np.abs(self.v), 1.0, atol=1e-12):
            raise ValueError("v must be unit modulus of length N+1")
        if not np.isclose(self.v[-1], 1.0):
            raise ValueError("v[N] must equal 1")
        if not np.allclose(self.V, np.outer(self.v, np.conj(self.v)), atol=1e-12):
            raise ValueError("V must equal v v^H")

    @property
    def N(self) -> int:
        return self.B.shape[1] - 1

    @classmethod
    def from_indices(cls, indices: Sequence[int], codebook: PhaseCodebook) -> "IrsConfiguration":
        """Build from per-element codebook indices (length N)."""
        indices = np.asarray(indices, dtype=int)
        L = codebook.L
        n1 = indices.size + 1
        B = np.zeros((L, n1))
        B[indices, np.arange(indices.size)] = 1.0
        B[0, -1] = 1.0
        theta = codebook.phasors
        v = B.T @ theta
        return cls(B=B, v=v, V=np.outer(v, np.conj(v)))

    @classmethod
    def from_selection(cls, B: np.ndarray, codebook: PhaseCodebook) -> "IrsConfiguration":
        indices = np.argmax(np.asarray(B, dtype=float)[:, :-1], axis=0)
        return cls.from_indices(indices, codebook)

    @classmethod
    def random(cls, N: int, codebook: PhaseCodebook, rng: np.random.Generator) -> "IrsConfiguration":
        return cls.from_indices(rng.integers(0, codebook.L, size=N), codebook)


def _quad_trace(H: np.ndarray, V: np.ndarray, W: np.ndarray) -> float:
    # Tr(H^H V H W); clip tiny negative round-off from PSD factors
    value = float(np.real(np.trace(H.conj().T @ V @ H @ W)))
    return max(value, 0.0)


def sinr_user(H: np.ndarray, V: np.ndarray, W_list: Sequence[np.ndarray], k: int, noise_power: float) -> float:
    """Linear SINR of user k under covariances W_list and IRS matrix V."""
    if noise_power <= 0:
        raise ValueError("noise power must be positive")
    signal = _quad_trace(H, V, W_list[k])
    interference = sum(_quad_trace(H, V, W_list[kk]) for kk in range(len(W_list)) if kk != k)
    return signal / (interference + noise_power)


def rate_user(H: np.ndarray, V: np.ndarray, W_list: Sequence[np.ndarray], k: int, noise_power: float) -> float:
    return float(np.log2(1.0 + sinr_user(H, V, W_list, k, noise_power)))


def leakage_eve(H_e: np.ndarray, V: np.ndarray, W_k: np.ndarray, noise_power: float) -> float:
    """Interference-free decodable rate of one Eve for one user's signal."""
    if noise_power <= 0:
        raise ValueError("noise power must be positive")
    return float(np.log2(1.0 + _quad_trace(H_e, V, W_k) / noise_power))


def resilience_metrics(rates_t0: np.ndarray, rates_tn: np.ndarray, R_des: np.ndarray) -> tuple[float, float]:
    """Absorption and adaptation metrics: mean rate-to-target ratios."""
    rates_t0 = np.asarray(rates_t0, dtype=float)
    rates_tn = np.asarray(rates_tn, dtype=float)
    R_des = np.asarray(R_des, dtype=float)
    if np.any(rates_t0 < 0) or np.any(rates_tn < 0):
        raise ValueError("rates must be nonnegative")
    if np.any(R_des <= 0):
        raise ValueError("desired rates must be positive")
    return float(np.mean(rates_t0 / R_des)), float(np.mean(rates_tn / R_des))


# --- sampled certification ---------------------------------------------------


def _ball_samples(shape: tuple[int, int], epsilon: float, n_samples: int,
                  rng: np.random.Generator) -> np.ndarray:
    """(n_samples, *shape) draws, uniform on the complex Frobenius ball."""
    g = rng.standard_normal((n_samples, *shape)) + 1j * rng.standard_normal((n_samples, *shape))
    norms = np.linalg.norm(g.reshape(n_samples, -1), axis=1)
    real_dim = 2 * int(np.prod(shape))
    radii = epsilon * rng.uniform(size=n_samples) ** (1.0 / real_dim)
    return g * (radii / norms)[:, None, None]


def sample_user_rate_min(
    nominal: np.ndarray,
    epsilon: float,
    v: np.ndarray,
    beams: Sequence[np.ndarray],
    user_index: int,
    noise_power: float,
    n_samples: int,
    rng: np.random.Generator,
) -> float:
    """Smallest achievable rate of one user over sampled in-ball channels."""
    base = np.conj(v) @ nominal                       # v^H H, length M
    deltas = _ball_samples(nominal.shape, epsilon, n_samples, rng)
    shift = np.einsum("n,snm->sm", np.conj(v), deltas)
    rows = base[None, :] + shift                       # (S, M)
    powers = np.abs(rows @ np.column_stack(beams)) ** 2  # (S, K)
    signal = powers[:, user_index]
    interference = powers.sum(axis=1) - signal
    rates = np.log2(1.0 + signal / (interference + noise_power))
    return float(rates.min())


def sample_eve_leakage_max(
    estimate: np.ndarray,
    epsilon: float,
    v: np.ndarray,
    w_k: np.ndarray,
    noise_power: float,
    n_samples: int,
    rng: np.random.Generator,
) -> float:
    """Largest leakage toward one Eve over sampled in-ball channels."""
    base = np.conj(v) @ estimate
    deltas = _ball_samples(estimate.shape, epsilon, n_samples, rng)
    shift = np.einsum("n,snm->sm", np.conj(v), deltas)
    powers = np.abs((base[None, :] + shift) @ w_k) ** 2
    return float(np.log2(1.0 + powers / noise_power).max())
