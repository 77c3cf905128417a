"""Rician link generation, overall-channel composition, and perturbations.

Link matrices follow the planar layout from :mod:`resbeam.scenario`: uniform
linear arrays with half-wavelength spacing at the BS and the IRS, line-of-sight
components formed as outer products of array response vectors. Overall
channels stack the cascaded IRS rows on top of the direct row so that
``v^H @ H`` reproduces ``h^H Phi F + d^H`` for every unit-modulus phase
configuration ``v = [e^{j theta_1}, ..., e^{j theta_N}, 1]^H``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "LinkMatrix",
    "OverallChannel",
    "array_response",
    "rician_link",
    "compose_overall",
    "perturb_within_ball",
    "ball_point",
    "adversarial_failure",
    "dump_channels",
    "load_channels",
]

LINK_KINDS = ("bs_irs", "bs_user", "bs_eve", "irs_user", "irs_eve")


@dataclass(frozen=True)
class LinkMatrix:
    """One physical link: complex fading coefficients plus its role."""

    entries: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in LINK_KINDS:
            raise ValueError(f"unknown link kind {self.kind!r}")
        entries = np.asarray(self.entries, dtype=complex)
        object.__setattr__(self, "entries", entries)
        if not np.all(np.isfinite(entries)):
            raise ValueError("link entries must be finite")
        want_matrix = self.kind == "bs_irs"
        if want_matrix and entries.ndim != 2:
            raise ValueError("bs_irs link must be an N x M matrix")
        if not want_matrix and entries.ndim != 1:
            raise ValueError(f"{self.kind} link must be a vector")


@dataclass(frozen=True)
class OverallChannel:
    """Effective (N+1) x M channel with its nominal/perturbation split."""

    matrix: np.ndarray   # nominal + delta
    nominal: np.ndarray
    delta: np.ndarray
    epsilon: float       # Frobenius-norm radius of the admissible delta ball

    def __post_init__(self) -> None:
        for name in ("matrix", "nominal", "delta"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=complex))
        if self.matrix.shape != self.nominal.shape or self.delta.shape != self.nominal.shape:
            raise ValueError("matrix, nominal, delta must share one shape")
        if not np.array_equal(self.matrix, self.nominal + self.delta):
            raise ValueError("matrix must equal nominal + delta exactly")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if np.linalg.norm(self.delta) > self.epsilon + 1e-12:
            raise ValueError("perturbation exceeds the stated radius")

    def with_radius(self, epsilon: float) -> "OverallChannel":
        """Copy with the uncertainty radius reset (delta unchanged)."""
        return replace(self, epsilon=float(epsilon))


def array_response(n: int, angle: float) -> np.ndarray:
    """ULA response for ``n`` elements at half-wavelength spacing."""
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle))


def rician_link(
    L0: float,
    distance: float,
    exponent: float,
    rician_factor: float,
    rows: int,
    cols: int,
    geometry_angles: tuple[float, float],
    rng: np.random.Generator,
    kind: str = "bs_irs",
) -> LinkMatrix:
    """Draw one Rician-faded link.

    ``geometry_angles`` is (arrival angle at the receive array, departure
    angle at the transmit array). The LoS component is the outer product of
    the two array responses; NLoS entries are i.i.d. unit-variance circularly
    symmetric complex Gaussians. Scaling follows sqrt(L0 * distance^-exponent).
    """
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    if rician_factor < 0:
        raise ValueError("rician_factor must be nonnegative")
    arrival, departure = geometry_angles
    los = np.outer(array_response(rows, arrival), array_response(cols, departure))
    nlos = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)
    beta = rician_factor
    gain = np.sqrt(L0 * distance ** (-exponent))
    entries = gain * (np.sqrt(beta / (1.0 + beta)) * los + np.sqrt(1.0 / (1.0 + beta)) * nlos)
    if kind != "bs_irs":
        entries = entries.reshape(-1) if cols == 1 else entries
    return LinkMatrix(entries=entries, kind=kind)


def _entries(link) -> np.ndarray:
    return link.entries if isinstance(link, LinkMatrix) else np.asarray(link, dtype=complex)


def compose_overall(h, F, d) -> OverallChannel:
    """Stack the cascaded and direct links into the overall channel.

    Row n (n <= N) is conj(h_n) * F[n, :]; row N+1 is d^H. ``h`` may be None
    for a direct-only channel. Satisfies v^H @ H == h^H Phi F + d^H for every
    phase configuration v.
    """
    Fm = np.atleast_2d(_entries(F))
    dm = _entries(d).reshape(-1)
    N, M = Fm.shape
    hv = np.zeros(N, dtype=complex) if h is None else _entries(h).reshape(-1)
    if hv.shape != (N,) or dm.shape != (M,):
        raise ValueError(f"dimension mismatch: h {hv.shape}, F {Fm.shape}, d {dm.shape}")
    H = np.empty((N + 1, M), dtype=complex)
    H[:N, :] = np.conj(hv)[:, None] * Fm
    H[N, :] = np.conj(dm)
    return OverallChannel(matrix=H, nominal=H, delta=np.zeros_like(H), epsilon=0.0)


def _unit_direction(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    d = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return d / np.linalg.norm(d)


def ball_point(shape: tuple[int, ...], epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the complex Frobenius-norm ball of radius epsilon."""
    if epsilon == 0:
        return np.zeros(shape, dtype=complex)
    real_dim = 2 * int(np.prod(shape))
    radius = epsilon * rng.uniform() ** (1.0 / real_dim)
    return radius * _unit_direction(shape, rng)


def perturb_within_ball(nominal: OverallChannel, epsilon: float, rng: np.random.Generator) -> OverallChannel:
    """Redraw delta uniformly on the Frobenius ball around the nominal."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    delta = ball_point(nominal.nominal.shape, epsilon, rng)
    return OverallChannel(
        matrix=nominal.nominal + delta,
        nominal=nominal.nominal,
        delta=delta,
        epsilon=float(epsilon),
    )


def _rate_with_beams(H: np.ndarray, v: np.ndarray, beams: Sequence[np.ndarray],
                     user_index: int, noise_power: float) -> float:
    u = np.conj(v) @ H  # v^H H, length M
    powers = np.array([np.abs(u @ w) ** 2 for w in beams])
    signal = powers[user_index]
    interference = powers.sum() - signal
    return float(np.log2(1.0 + signal / (interference + noise_power)))


def adversarial_failure(
    nominal: OverallChannel,
    epsilon: float,
    v: np.ndarray,
    beams: Sequence[np.ndarray],
    user_index: int,
    noise_power: float,
    samples: int,
    rng: np.random.Generator,
) -> OverallChannel:
    """Boundary perturbation that degrades the user's rate the most.

    Draws ``samples`` unit-Frobenius-norm directions sequentially and keeps
    the one minimizing the achievable rate under the current IRS phases and
    beams; the returned delta has norm exactly epsilon. Candidates are drawn
    one at a time, so enlarging ``samples`` with the same rng extends the
    candidate set rather than reshuffling it.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive for a failure event")
    if samples < 1:
        raise ValueError("need at least one candidate direction")
    best_delta = None
    best_rate = np.inf
    for _ in range(samples):
        direction = _unit_direction(nominal.nominal.shape, rng)
        delta = epsilon * direction
        rate = _rate_with_beams(nominal.nominal + delta, v, beams, user_index, noise_power)
        if rate < best_rate:
            best_rate = rate
            best_delta = delta
    return OverallChannel(
        matrix=nominal.nominal + best_delta,
        nominal=nominal.nominal,
        delta=best_delta,
        epsilon=float(epsilon),
    )


# --- channel dump -----------------------------------------------------------
#
# Text layout, one record per matrix:
#   <name> <rows> <cols>
#   re im re im ...   (cols pairs per line, rows lines, row-major)


def dump_channels(path, named: dict[str, np.ndarray]) -> None:
    """Serialize named complex matrices for replay across implementations."""
    with open(path, "w", encoding="utf-8") as fh:
        for name, matrix in named.items():
            m = np.atleast_2d(np.asarray(matrix, dtype=complex))
            fh.write(f"{name} {m.shape[0]} {m.shape[1]}\n")
            for row in m:
                fh.write(" ".join(f"{z.real!r} {z.imag!r}" for z in row) + "\n")


def load_channels(path) -> dict[str, np.ndarray]:
    """Inverse of :func:`dump_channels`; round-trips bit-exactly."""
    out: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        name, rows, cols = lines[i].split()
        rows, cols = int(rows), int(cols)
        m = np.empty((rows, cols), dtype=complex)
        for r in range(rows):
            parts = [float(x) for x in lines[i + 1 + r].split()]
            m[r] = [complex(parts[2 * c], parts[2 * c + 1]) for c in range(cols)]
        out[name] = m
        i += 1 + rows
    return out
