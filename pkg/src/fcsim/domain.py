"""Parameter records, analytic scalar functions and grid types.

All frequencies are detunings from the center frequencies, which satisfy
exact energy and momentum conservation. Times are in the reciprocal of the
frequency unit, so only combinations such as ``tau * delta_omega`` matter.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import constants

__all__ = [
    "PmfKind",
    "DeviceParams",
    "PhysicalParams",
    "FrequencyGrid",
    "WavePacket",
    "MuParameters",
    "pump_amplitude",
    "pump_time_envelope",
    "pmf_value",
    "phase_mismatch",
    "mu_parameters",
    "epsilon_from_physical",
    "gaussian_hermite_mode",
    "default_grids",
    "matched_input_photon",
    "SINC_GAMMA",
]

#: Gaussian parameter matching the FWHM of exp(-gamma x^2) to that of sinc(x).
SINC_GAMMA = 0.193


class PmfKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    SINC = "sinc"


@dataclass(frozen=True)
class DeviceParams:
    """Dimensionless description of one frequency-conversion device.

    ``s_a``, ``s_b`` and ``s_p`` are the group-delay parameters
    ``sqrt(gamma) * L / (2 v_i)`` of the input, output and pump fields.
    """

    s_a: float
    s_b: float
    s_p: float
    tau: float
    gamma: float = SINC_GAMMA
    epsilon: float = 0.0
    pmf_kind: PmfKind = PmfKind.GAUSSIAN
    poling_period: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "pmf_kind", PmfKind(self.pmf_kind))
        for name in ("s_a", "s_b", "s_p", "tau", "gamma", "epsilon"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.poling_period is not None and not self.poling_period > 0:
            raise ValueError("poling_period must be positive when given")

    def with_epsilon(self, epsilon: float) -> "DeviceParams":
        return DeviceParams(self.s_a, self.s_b, self.s_p, self.tau, self.gamma,
                            float(epsilon), self.pmf_kind, self.poling_period)

    def to_dict(self) -> dict:
        return {"s_a": self.s_a, "s_b": self.s_b, "s_p": self.s_p,
                "tau": self.tau, "gamma": self.gamma, "epsilon": self.epsilon,
                "pmf_kind": self.pmf_kind.value,
                "poling_period": self.poling_period}


@dataclass(frozen=True)
class PhysicalParams:
    """SI-unit device and pump description used to evaluate the coupling.

    ``n_c`` is the refractive index of the pump at its center frequency.
    """

    chi2: float
    L: float
    U0: float
    A: float
    n_a: float
    n_b: float
    n_c: float
    omega_bar_a: float
    omega_bar_b: float
    omega_bar_p: float
    tau: float

    def __post_init__(self):
        for name, value in vars(self).items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        expected = self.omega_bar_a + self.omega_bar_p
        if not math.isclose(self.omega_bar_b, expected, rel_tol=1e-9):
            raise ValueError(
                "center frequencies violate energy conservation: "
                f"omega_bar_b={self.omega_bar_b} != omega_bar_a + omega_bar_p={expected}")


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid of ``n_points`` detunings in ``center +- half_width``."""

    center: float
    half_width: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise ValueError(f"half_width must be > 0, got {self.half_width}")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)

    @property
    def weight(self) -> float:
        """Mode weight sqrt(d omega) that turns samples into discrete amplitudes."""
        return math.sqrt(self.spacing)

    @property
    def points(self) -> np.ndarray:
        return self.center + self.detunings

    @property
    def detunings(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n_points)

    def to_dict(self) -> dict:
        return {"center": self.center, "half_width": self.half_width,
                "n_points": self.n_points}


@dataclass(frozen=True, eq=False)
class WavePacket:
    """Single-photon spectral amplitude sampled on a grid.

    ``amplitudes`` already carry the sqrt(d omega) weight, so the discrete
    norm is the plain Euclidean norm.
    """

    grid: FrequencyGrid
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.grid.n_points,):
            raise ValueError(f"expected {self.grid.n_points} amplitudes, got shape {amps.shape}")
        norm = np.linalg.norm(amps)
        if abs(norm ** 2 - 1.0) > 1e-10:
            raise ValueError(f"wave packet not normalized: norm^2 = {norm ** 2:.15g}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_samples(cls, grid: FrequencyGrid, samples) -> "WavePacket":
        amps = np.asarray(samples, dtype=complex) * grid.weight
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("cannot normalize an all-zero wave packet")
        return cls(grid, amps / norm)

    @classmethod
    def from_function(cls, grid: FrequencyGrid, func: Callable) -> "WavePacket":
        return cls.from_samples(grid, func(grid.detunings))


@dataclass(frozen=True)
class MuParameters:
    """Width parameters of the first-order Gaussian joint conversion amplitude.

    ``schmidt_count`` is None exactly when ``schmidt_count_infinite`` is set,
    i.e. when mode selectivity is lost.
    """

    mu_sq: float
    mu_a: float
    mu_b: float
    r0_tilde: float
    schmidt_count: Optional[float]
    schmidt_count_infinite: bool

    @property
    def separable(self) -> bool:
        return self.schmidt_count == 1.0


def pump_amplitude(params: DeviceParams, delta_omega_p):
    """Gaussian pump spectrum tau exp(-tau^2 dw^2) / sqrt(pi); unit area."""
    tau = params.tau
    return tau * np.exp(-(tau * np.asarray(delta_omega_p)) ** 2) / math.sqrt(math.pi)


def pump_time_envelope(params: DeviceParams, t):
    """Fourier transform of the pump, integral of alpha(w) exp(-i w t) dw."""
    return np.exp(-np.asarray(t) ** 2 / (4.0 * params.tau ** 2))


def phase_mismatch(params: DeviceParams, delta_omega_a, delta_omega_b, delta_omega_p):
    """Linearized, scaled mismatch D = s_b dw_b - s_a dw_a - s_p dw_p."""
    return (params.s_b * np.asarray(delta_omega_b) - params.s_a * np.asarray(delta_omega_a)
            - params.s_p * np.asarray(delta_omega_p))


def _pmf_of_mismatch(params: DeviceParams, d):
    if params.pmf_kind is PmfKind.GAUSSIAN:
        return np.exp(-d ** 2)
    # np.sinc is normalized: sinc(x) = sin(pi x) / (pi x)
    return np.sinc(d / (math.sqrt(params.gamma) * math.pi))


def pmf_value(params: DeviceParams, delta_omega_a, delta_omega_b, delta_omega_p):
    """Phase-matching function at the given detunings.

    Gaussian kind is exp(-D^2); sinc kind is sin(x)/x with x = D/sqrt(gamma),
    so both kinds share the same ``s_i`` and agree in FWHM for gamma = 0.193.
    """
    return _pmf_of_mismatch(
        params, phase_mismatch(params, delta_omega_a, delta_omega_b, delta_omega_p))


def mu_parameters(params: DeviceParams) -> MuParameters:
    tau2 = params.tau ** 2
    da = params.s_p - params.s_a
    db = params.s_p - params.s_b
    mu_sq = tau2 + da * db
    if abs(mu_sq) <= 1e-12 * tau2:
        mu_sq = 0.0
    mu_a = math.sqrt(tau2 + da * da)
    mu_b = math.sqrt(tau2 + db * db)
    r0 = math.sqrt(2.0) * math.pi * params.tau / math.sqrt(mu_a * mu_b)
    gap = (mu_a * mu_b) ** 2 - mu_sq ** 2
    if gap <= 1e-12 * (mu_a * mu_b) ** 2:
        count, infinite = None, True
    else:
        count, infinite = mu_a * mu_b / math.sqrt(gap), False
    if mu_sq == 0.0:
        count = 1.0
    return MuParameters(mu_sq, mu_a, mu_b, r0, count, infinite)


def epsilon_from_physical(p: PhysicalParams) -> float:
    """Dimensionless interaction strength from SI device parameters."""
    eps0, c = constants.epsilon_0, constants.c
    inner = (math.sqrt(2.0) * p.U0 * math.pi * p.omega_bar_b * p.omega_bar_a
             / (math.sqrt(math.pi) * (4.0 * math.pi) ** 3 * eps0 * p.A * c ** 3
                * p.n_a * p.n_b * p.n_c * p.tau))
    return 2.0 * p.L * p.chi2 * math.sqrt(inner)


def gaussian_hermite_mode(order: int, x):
    """Orthonormal Hermite-Gaussian function with the exp(-x^2) width convention.

    Order 0 is exp(-x^2) / (pi/2)**(1/4). Evaluated with the stable
    three-term recurrence of the normalized Hermite functions.
    """
    if int(order) != order or order < 0:
        raise ValueError(f"order must be a non-negative integer, got {order!r}")
    y = math.sqrt(2.0) * np.asarray(x, dtype=float)
    prev = np.zeros_like(y)
    cur = math.pi ** -0.25 * np.exp(-y ** 2 / 2)
    for n in range(int(order)):
        prev, cur = cur, math.sqrt(2.0 / (n + 1)) * y * cur - math.sqrt(n / (n + 1)) * prev
    return 2.0 ** 0.25 * cur


def default_grids(params: DeviceParams, n_points: int = 128,
                  half_width_factor: float = 6.0) -> tuple[FrequencyGrid, FrequencyGrid]:
    mu = mu_parameters(params)
    return (FrequencyGrid(0.0, half_width_factor / mu.mu_a, n_points),
            FrequencyGrid(0.0, half_width_factor / mu.mu_b, n_points))


def matched_input_photon(params: DeviceParams, grid_a: FrequencyGrid, order: int = 0) -> WavePacket:
    """Hermite-Gaussian photon in the scaled variable mu_a * delta_omega_a."""
    mu_a = mu_parameters(params).mu_a
    return WavePacket.from_function(grid_a, lambda w: gaussian_hermite_mode(order, mu_a * w))
