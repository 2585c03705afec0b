"""First-order joint conversion amplitude and the time-dependent coupling.

In the one-photon sector the interaction Hamiltonian at time ``t`` acts on
the stacked amplitudes (a, b) as the Hermitian matrix ``[[0, m^H], [m, 0]]``
where ``m`` is the N_b x N_a coupling matrix built here. All matrices carry
the sqrt(d omega_a d omega_b) mode weights so that matrix products realize
the frequency integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _quadrature as quad
from .domain import (DeviceParams, FrequencyGrid, PmfKind, _pmf_of_mismatch,
                     mu_parameters, pump_amplitude)

__all__ = [
    "GridCoverageError",
    "ConvergenceError",
    "JcaMatrix",
    "CouplingMatrix",
    "CouplingKernel",
    "default_time_window",
    "build_j1",
    "coupling_at_time",
    "pump_integral_quadrature",
    "integrate_coupling",
]

#: Default edge/peak ratio accepted by build_j1, per phase-matching kind.
#: Sinc tails decay algebraically, so no practical grid reaches 1e-12.
DEFAULT_COVERAGE_TOL = {PmfKind.GAUSSIAN: 1e-12, PmfKind.SINC: 5e-2}


class GridCoverageError(ValueError):
    """A frequency grid (or pump grid) truncates a non-negligible amplitude."""


class ConvergenceError(RuntimeError):
    """A refinement check exceeded its tolerance."""

    def __init__(self, message: str, measured: float, tol: float):
        super().__init__(f"{message}: change {measured:.3e} exceeds tolerance {tol:.1e}")
        self.measured = measured
        self.tol = tol


@dataclass(frozen=True, eq=False)
class JcaMatrix:
    grid_a: FrequencyGrid
    grid_b: FrequencyGrid
    values: np.ndarray = field(repr=False)
    weighted: bool = True

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    time: float
    values: np.ndarray = field(repr=False)


def default_time_window(params: DeviceParams) -> float:
    """Half-width T of the integration window [-T, T]."""
    mu = mu_parameters(params)
    return 8.0 * max(params.tau, abs(params.s_p - params.s_a),
                     abs(params.s_p - params.s_b), mu.mu_a, mu.mu_b)


def _mode_weight(grid_a: FrequencyGrid, grid_b: FrequencyGrid) -> float:
    return math.sqrt(grid_a.spacing * grid_b.spacing)


def build_j1(params: DeviceParams, grid_a: FrequencyGrid, grid_b: FrequencyGrid,
             coverage_tol: Optional[float] = None) -> JcaMatrix:
    """First-order JCA, rows indexed by omega_b and columns by omega_a."""
    wa = grid_a.detunings[None, :]
    wb = grid_b.detunings[:, None]
    weight = _mode_weight(grid_a, grid_b)
    if params.pmf_kind is PmfKind.GAUSSIAN:
        mu = mu_parameters(params)
        shape = np.exp(2.0 * mu.mu_sq * wa * wb - (mu.mu_a * wa) ** 2 - (mu.mu_b * wb) ** 2)
        shape = params.tau / math.sqrt(math.pi) * shape
    else:
        dp = wb - wa
        d = params.s_b * wb - params.s_a * wa - params.s_p * dp
        shape = pump_amplitude(params, dp) * _pmf_of_mismatch(params, d)
    _check_coverage(shape, params, coverage_tol, "JCA")
    values = -params.epsilon * (weight * shape)
    return JcaMatrix(grid_a, grid_b, values)


def _check_coverage(shape: np.ndarray, params: DeviceParams, tol, what: str):
    if tol is None:
        tol = DEFAULT_COVERAGE_TOL[params.pmf_kind]
    mag = np.abs(shape)
    peak = mag.max()
    if peak == 0:
        return
    edge = max(mag[0, :].max(), mag[-1, :].max(), mag[:, 0].max(), mag[:, -1].max())
    ratio = edge / peak
    if ratio > tol:
        raise GridCoverageError(
            f"{what} not contained in the frequency grids: edge/peak = {ratio:.3e} > {tol:.1e}")


class CouplingKernel:
    """Precomputed evaluator of m(t) for one device on fixed grids.

    Also provides the coupling in the frame rotating at the per-field rates
    ``beta_a``, ``beta_b``: ``frame(t) = exp(-i beta_b wb t) m(t) exp(i beta_a wa t)``.
    For the Gaussian PMF that frame coupling is a fixed real matrix times the
    pump envelope exp(-t^2 / 4A), with A = tau^2 + s_p^2.
    """

    def __init__(self, params: DeviceParams, grid_a: FrequencyGrid, grid_b: FrequencyGrid,
                 pump_nodes: int = 512, pump_half_width: Optional[float] = None):
        self.params = params
        self.grid_a = grid_a
        self.grid_b = grid_b
        self.wa = grid_a.detunings
        self.wb = grid_b.detunings
        self.weight = _mode_weight(grid_a, grid_b)
        tau, sp = params.tau, params.s_p
        self.A = tau ** 2 + sp ** 2
        self.beta_a = 1.0 - sp * params.s_a / self.A
        self.beta_b = 1.0 - sp * params.s_b / self.A
        x = params.s_b * self.wb[:, None] - params.s_a * self.wa[None, :]
        self._x = x
        if params.pmf_kind is PmfKind.GAUSSIAN:
            self._frame_base = (tau / math.sqrt(self.A) * self.weight) * np.exp(-(tau * x) ** 2 / self.A)
        else:
            self._frame_base = None
            hw = 8.0 / tau if pump_half_width is None else pump_half_width
            edge = pump_amplitude(params, hw) / pump_amplitude(params, 0.0)
            if edge > 1e-12:
                raise GridCoverageError(
                    f"pump grid +-{hw:.4g} truncates the pump: edge/peak = {edge:.3e} > 1e-12")
            n_panels = max(1, -(-pump_nodes // 16))
            self._p_nodes, self._p_weights = quad.composite_rule(-hw, hw, n_panels, 16)

    @property
    def separable_in_time(self) -> bool:
        """True when frame(t) = envelope(t) * frame_matrix exactly."""
        return self._frame_base is not None

    def envelope(self, t: float) -> float:
        return math.exp(-t * t / (4.0 * self.A))

    def frame_matrix(self) -> np.ndarray:
        """Time-independent frame coupling for the Gaussian PMF (includes epsilon)."""
        return -self.params.epsilon * self._frame_base

    def frame(self, t: float) -> np.ndarray:
        if self._frame_base is not None:
            return -self.params.epsilon * (self._frame_base * self.envelope(t))
        m = self.m(t)
        return np.exp(-1j * self.beta_b * self.wb * t)[:, None] * m * np.exp(
            1j * self.beta_a * self.wa * t)[None, :]

    def m(self, t: float) -> np.ndarray:
        if self._frame_base is not None:
            phase = np.exp(1j * self.beta_b * self.wb * t)[:, None] * np.exp(
                -1j * self.beta_a * self.wa * t)[None, :]
            return -self.params.epsilon * (self._frame_base * (self.envelope(t) * phase))
        p = self._pump_quadrature(t, self._p_nodes, self._p_weights)
        phase = np.exp(1j * self.wb * t)[:, None] * np.exp(-1j * self.wa * t)[None, :]
        return -self.params.epsilon * (self.weight * (p * phase))

    def _pump_quadrature(self, t, nodes, weights, chunk: int = 64) -> np.ndarray:
        params = self.params
        total = np.zeros(self._x.shape, dtype=complex)
        for start in range(0, len(nodes), chunk):
            p = nodes[start:start + chunk]
            coef = weights[start:start + chunk] * pump_amplitude(params, p) * np.exp(-1j * p * t)
            d = self._x[None, :, :] - params.s_p * p[:, None, None]
            total += np.tensordot(coef, _pmf_of_mismatch(params, d), axes=1)
        return total


def pump_integral_quadrature(params: DeviceParams, grid_a: FrequencyGrid, grid_b: FrequencyGrid,
                             t: float, n_nodes: int = 2048,
                             half_width: Optional[float] = None) -> np.ndarray:
    """P(wa, wb, t) = integral of alpha(p) exp(-i p t) PMF(D) dp by Gauss-Legendre panels."""
    kernel = CouplingKernel(params, grid_a, grid_b)
    hw = 8.0 / params.tau if half_width is None else half_width
    nodes, weights = quad.composite_rule(-hw, hw, max(1, n_nodes // 16), 16)
    return kernel._pump_quadrature(t, nodes, weights)


def coupling_at_time(params: DeviceParams, grid_a: FrequencyGrid, grid_b: FrequencyGrid,
                     t: float, pump_nodes: int = 512,
                     pump_half_width: Optional[float] = None) -> CouplingMatrix:
    kernel = CouplingKernel(params, grid_a, grid_b, pump_nodes, pump_half_width)
    return CouplingMatrix(float(t), kernel.m(float(t)))


def _time_integral(kernel: CouplingKernel, half_window: float, n_nodes: int) -> np.ndarray:
    nodes, weights = quad.composite_rule(-half_window, half_window, max(1, n_nodes // 16), 16)
    total = np.zeros((kernel.wb.size, kernel.wa.size), dtype=complex)
    for t, w in zip(nodes, weights):
        total += w * kernel.m(t)
    return total


def integrate_coupling(params: DeviceParams, grid_a: FrequencyGrid, grid_b: FrequencyGrid,
                       time_window: Optional[float] = None, n_steps: int = 512,
                       tol: float = 1e-9, **kernel_options) -> np.ndarray:
    """Time integral of m(t) over [-T, T]; equals 2*pi times the weighted first-order JCA.

    The result is checked against a run with twice as many nodes; a relative
    change above ``tol`` raises ConvergenceError.
    """
    half = default_time_window(params) if time_window is None else float(time_window)
    kernel = CouplingKernel(params, grid_a, grid_b, **kernel_options)
    coarse = _time_integral(kernel, half, n_steps)
    fine = _time_integral(kernel, half, 2 * n_steps)
    scale = np.abs(fine).max()
    change = np.abs(fine - coarse).max() / scale if scale > 0 else 0.0
    if change > tol:
        raise ConvergenceError("time integral of the coupling not converged", change, tol)
    return fine
