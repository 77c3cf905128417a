"""System constants, geometry, and deterministic randomness.

A :class:`Scenario` owns every constant of a simulation instance: array and
user counts, power and noise levels, secrecy/rate targets, uncertainty radii,
the geometric layout parameters, algorithm tolerances, and the RNG seed.
Instances are plain values: construct once, share read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

__all__ = [
    "Scenario",
    "PhaseCodebook",
    "Layout",
    "default_paper_scenario",
    "desk_scenario",
    "build_codebook",
    "make_layout",
    "dbm_to_watts",
    "watts_to_dbm",
    "stream",
]


def dbm_to_watts(dbm: float) -> float:
    """Convert a power level in dBm to watts."""
    return 10.0 ** (dbm / 10.0) * 1e-3


def watts_to_dbm(watts: float) -> float:
    """Convert a power level in watts to dBm."""
    if watts <= 0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(watts * 1e3)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic child RNG for a named draw site.

    Distinct ``key`` tuples give statistically independent streams; identical
    (seed, key) pairs reproduce bit-identical draws across runs and processes.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _as_array(value, length: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(length, float(arr[0]))
    if arr.shape != (length,):
        raise ValueError(f"{name}: expected scalar or length-{length} sequence, got shape {arr.shape}")
    return arr


@dataclass
class Scenario:
    """Full description of one simulation instance.

    Per-user/per-Eve fields accept scalars (broadcast) or sequences. Rates are
    in bits/s/Hz, powers in watts, distances in metres, angles in radians.
    """

    # counts
    M: int = 6            # BS antennas
    K: int = 4            # users
    N: int = 48           # IRS elements
    J: int = 2            # eavesdroppers
    L: int = 4            # discrete phase levels
    T_s: int = 20         # short slots per long frame

    # power / noise / rate targets
    P_max: float = dbm_to_watts(30.0)
    noise_user: np.ndarray = dbm_to_watts(-90.0)     # sigma_k^2, watts
    noise_eve: np.ndarray = dbm_to_watts(-90.0)      # sigma_{e,j}^2, watts
    R_leak: np.ndarray = 0.5                         # max tolerable leakage, K x J
    R_des: np.ndarray = 3.0                          # desired user rates

    # normalized uncertainty radii (absolute radius = kappa * ||nominal||_F)
    kappa_user: np.ndarray = 0.15
    kappa_eve: np.ndarray = 0.2

    # geometry
    D: float = 40.0       # BS-IRS distance
    r: float = 5.0        # user circle radius around the IRS
    r_e: float = 20.0     # Eve circle radius around the IRS
    alpha_bi: float = 2.2
    alpha_bu: float = 3.6
    alpha_be: float = 3.6
    alpha_iu: float = 2.2
    alpha_ie: float = 2.2
    beta_bi: float = 3.0
    beta_bu: float = 1.0
    beta_be: float = 1.0
    beta_iu: float = 3.0
    beta_ie: float = 3.0
    L0: float = 1e-3      # reference path loss at 1 m (linear)

    # algorithm tolerances
    delta_abs: float = 1e-3
    delta_sca: float = 1e-3
    delta_ada: float = 1e-3
    mu: float = 1e-3      # penalty factor for the binary relaxation
    solver_tol: float = 1e-8

    # protocol
    seed: int = 0
    t_failure: int = 0    # 0 selects the default ceil(T_s / 2)
    failure_samples: int = 100
    random_placement: bool = False

    def __post_init__(self) -> None:
        for name in ("M", "K", "N", "J", "L", "T_s"):
            value = getattr(self, name)
            if int(value) != value or int(value) < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            setattr(self, name, int(value))
        self.noise_user = _as_array(self.noise_user, self.K, "noise_user")
        self.noise_eve = _as_array(self.noise_eve, self.J, "noise_eve")
        self.R_des = _as_array(self.R_des, self.K, "R_des")
        self.kappa_user = _as_array(self.kappa_user, self.K, "kappa_user")
        self.kappa_eve = _as_array(self.kappa_eve, self.J, "kappa_eve")
        leak = np.asarray(self.R_leak, dtype=float)
        if leak.ndim == 0:
            leak = np.full((self.K, self.J), float(leak))
        elif leak.shape == (self.K * self.J,):
            leak = leak.reshape(self.K, self.J)
        if leak.shape != (self.K, self.J):
            raise ValueError(f"R_leak: expected scalar or K x J values, got shape {leak.shape}")
        self.R_leak = leak

        if self.P_max <= 0:
            raise ValueError("P_max must be positive")
        if np.any(self.noise_user <= 0) or np.any(self.noise_eve <= 0):
            raise ValueError("noise powers must be positive")
        if np.any(self.R_leak < 0) or np.any(self.R_des < 0):
            raise ValueError("rates must be nonnegative")
        if np.any(self.kappa_user < 0) or np.any(self.kappa_user >= 1):
            raise ValueError("kappa_user must lie in [0, 1)")
        if np.any(self.kappa_eve < 0) or np.any(self.kappa_eve >= 1):
            raise ValueError("kappa_eve must lie in [0, 1)")
        for name in ("delta_abs", "delta_sca", "delta_ada", "mu"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
        if not 0 < self.solver_tol < 1:
            raise ValueError("solver_tol must lie in (0, 1)")
        if min(self.D, self.r, self.r_e) <= 0:
            raise ValueError("distances must be positive")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        self.seed = int(self.seed)
        self.t_failure = int(self.t_failure)
        if self.t_failure < 0 or self.t_failure > self.T_s:
            raise ValueError("t_failure must lie in [0, T_s]")

    @property
    def failure_slot(self) -> int:
        """Slot at which the failure event is injected (default ceil(T_s/2))."""
        return self.t_failure if self.t_failure > 0 else (self.T_s + 1) // 2

    def replace(self, **changes) -> "Scenario":
        """Return a copy with the given fields replaced (revalidated)."""
        kwargs = {f.name: getattr(self, f.name) for f in fields(self)}
        kwargs.update(changes)
        return Scenario(**kwargs)

    # --- flat key=value config serialization -------------------------------

    _ARRAY_FIELDS = ("noise_user", "noise_eve", "R_leak", "R_des", "kappa_user", "kappa_eve")

    def to_config_text(self) -> str:
        """Render as a flat, human-editable key = value listing."""
        lines = ["# resbeam scenario"]
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray):
                flat = value.reshape(-1)
                rendered = ", ".join(repr(float(x)) for x in flat)
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            lines.append(f"{f.name} = {rendered}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config_text(cls, text: str) -> "Scenario":
        """Parse the flat key = value format produced by :meth:`to_config_text`.

        Unknown keys are rejected; omitted keys keep their defaults. Scalar
        values for per-user fields broadcast.
        """
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in known:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            kwargs[key] = _parse_value(key, value, known[key].type)
        return cls(**kwargs)

    @classmethod
    def from_config_file(cls, path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_config_text(fh.read())


def _parse_value(key: str, value: str, kind: str):
    if key in Scenario._ARRAY_FIELDS or "," in value:
        return np.array([float(part) for part in value.split(",") if part.strip() != ""])
    if kind == "bool" or value.lower() in ("true", "false"):
        return value.lower() == "true"
    if kind == "int":
        return int(value)
    return float(value)


@dataclass(frozen=True)
class PhaseCodebook:
    """The L admissible phase-shift angles of one IRS element."""

    levels: np.ndarray  # radians, each in [0, 2*pi)

    def __post_init__(self) -> None:
        levels = np.asarray(self.levels, dtype=float)
        object.__setattr__(self, "levels", levels)
        if levels.ndim != 1 or levels.size < 1:
            raise ValueError("codebook needs at least one angle")
        if np.any(levels < 0) or np.any(levels >= 2 * np.pi):
            raise ValueError("angles must lie in [0, 2*pi)")
        if np.unique(np.round(levels, 12)).size != levels.size:
            raise ValueError("angles must be distinct")

    @property
    def L(self) -> int:
        return int(self.levels.size)

    @property
    def phasors(self) -> np.ndarray:
        """Unit-modulus lifts exp(j * angle), length L."""
        return np.exp(1j * self.levels)

    def quantize(self, angle: float) -> int:
        """Index of the codebook level nearest to ``angle`` on the circle."""
        diffs = np.angle(np.exp(1j * (self.levels - angle)))
        return int(np.argmin(np.abs(diffs)))


def build_codebook(L: int) -> PhaseCodebook:
    """Uniformly spaced L-level codebook, angles 2*pi*(l-1)/L."""
    if L < 2:
        raise ValueError(f"codebook needs at least 2 levels, got {L}")
    return PhaseCodebook(levels=2 * np.pi * np.arange(L) / L)


@dataclass(frozen=True)
class Layout:
    """Planar node positions: BS at the origin, IRS on the x-axis."""

    bs: np.ndarray     # (2,)
    irs: np.ndarray    # (2,)
    users: np.ndarray  # (K, 2)
    eves: np.ndarray   # (J, 2)

    @staticmethod
    def _dist(a: np.ndarray, b: np.ndarray) -> float:
        return float(np.hypot(*(np.asarray(a) - np.asarray(b))))

    def bs_irs_distance(self) -> float:
        return self._dist(self.bs, self.irs)

    def bs_point_distance(self, point: np.ndarray) -> float:
        return self._dist(self.bs, point)

    def irs_point_distance(self, point: np.ndarray) -> float:
        return self._dist(self.irs, point)

    def angle_from(self, origin: np.ndarray, point: np.ndarray) -> float:
        d = np.asarray(point) - np.asarray(origin)
        return float(np.arctan2(d[1], d[0]))


def make_layout(scenario: Scenario, rng: np.random.Generator | None = None) -> Layout:
    """Place BS, IRS, users, and Eves on the plane.

    BS sits at the origin and the IRS at (D, 0). Users and Eves live on
    circles of radius r and r_e centred on the IRS, evenly spaced by default;
    with ``scenario.random_placement`` their angles are drawn uniformly.
    """
    bs = np.zeros(2)
    irs = np.array([scenario.D, 0.0])
    if scenario.random_placement:
        if rng is None:
            rng = stream(scenario.seed, 900)
        user_angles = rng.uniform(0.0, 2 * np.pi, size=scenario.K)
        eve_angles = rng.uniform(0.0, 2 * np.pi, size=scenario.J)
    else:
        user_angles = 2 * np.pi * np.arange(scenario.K) / scenario.K
        # start at pi/2 so a lone Eve is not collinear with the BS-IRS axis
        eve_angles = np.pi / 2 + 2 * np.pi * np.arange(scenario.J) / scenario.J
    users = irs + scenario.r * np.column_stack([np.cos(user_angles), np.sin(user_angles)])
    eves = irs + scenario.r_e * np.column_stack([np.cos(eve_angles), np.sin(eve_angles)])
    return Layout(bs=bs, irs=irs, users=users, eves=eves)


def default_paper_scenario() -> Scenario:
    """The reference configuration used by the full-scale experiments."""
    return Scenario()


def desk_scenario(**overrides) -> Scenario:
    """Small configuration suitable for property tests and quick runs."""
    base = dict(M=3, K=2, N=8, J=1, L=4, T_s=20, seed=0)
    base.update(overrides)
    return Scenario(**base)
