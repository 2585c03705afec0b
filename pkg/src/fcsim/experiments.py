"""Sweeps over the interaction strength, cascaded devices and pump design."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .coupling import build_j1
from .domain import (DeviceParams, FrequencyGrid, WavePacket, default_grids,
                     matched_input_photon, mu_parameters)
from .propagate import (OneParticleUnitary, UnitarityError, beam_splitter_unitary,
                        effective_jca, magnus_generators, time_ordered_unitary)
from .schmidt import conversion_probability, mode_overlaps, schmidt_decompose

__all__ = [
    "MODELS",
    "InfeasibleDesignError",
    "SweepResult",
    "CascadeSpec",
    "default_strengths",
    "sweep_efficiency",
    "sweep_schmidt",
    "first_local_maximum",
    "cascade_unitary",
    "rotation_norm",
    "design_mu_zero",
]

#: "exact" runs the time-ordered propagator at every point; "magnus3" uses the
#: beam-splitter factor of the third-order Magnus expansion.
MODELS = ("exact", "magnus3")


class InfeasibleDesignError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SweepResult:
    strengths: np.ndarray
    eff_toc: np.ndarray
    eff_no_toc: np.ndarray
    schmidt: np.ndarray = field(repr=False)
    overlaps: np.ndarray = field(repr=False)
    model: str = "exact"
    metadata: dict = field(default_factory=dict)

    def rows(self):
        """Per-point tuples (strength, eff_toc, eff_no_toc, r_1..r_k, |c_0|^2, |c_1|^2)."""
        for i, s in enumerate(self.strengths):
            yield (s, self.eff_toc[i], self.eff_no_toc[i], *self.schmidt[i], *self.overlaps[i, :2])


def default_strengths(n: int = 65, stop: float = 3.25) -> np.ndarray:
    return np.linspace(0.0, stop, n)


def _prepare(params, grids, photon, n_points, half_width_factor):
    mu = mu_parameters(params)
    if mu.mu_sq != 0.0:
        warnings.warn(f"device is not at mu = 0 (mu^2 = {mu.mu_sq:.4g}); "
                      "strengths are still scaled by r0_tilde", RuntimeWarning, stacklevel=3)
    grid_a, grid_b = grids if grids is not None else default_grids(params, n_points, half_width_factor)
    if photon is None:
        photon = matched_input_photon(params, grid_a)
    return mu, grid_a, grid_b, photon


def _point_summary(sd, photon, top_k):
    r = sd.top(top_k)
    c2 = np.zeros(top_k)
    c = np.abs(mode_overlaps(sd, photon)) ** 2
    n = min(top_k, c.size)
    c2[:n] = c[:n]
    return r, c2


def _sweep(params: DeviceParams, strengths, model, photon, top_k, grids, n_points,
           half_width_factor, n_steps, tol, magnus_panels, magnus_nodes, magnus_tol,
           workers) -> SweepResult:
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    strengths = default_strengths() if strengths is None else np.asarray(strengths, dtype=float)
    if np.any(strengths < 0) or not np.all(np.isfinite(strengths)):
        raise ValueError("strengths must be finite and non-negative")
    mu, grid_a, grid_b, photon = _prepare(params, grids, photon, n_points, half_width_factor)
    r0 = mu.r0_tilde

    if model == "exact":
        def point(s):
            U = time_ordered_unitary(params.with_epsilon(s / r0), grid_a, grid_b,
                                     n_steps=n_steps, tol=tol)
            eff = conversion_probability(U, photon)
            return (eff,) + _point_summary(schmidt_decompose(U), photon, top_k)
    else:
        ref = magnus_generators(params.with_epsilon(1.0 / r0), grid_a, grid_b,
                                n_panels=magnus_panels, nodes_per_panel=magnus_nodes,
                                tol=magnus_tol)

        def point(s):
            p = params.with_epsilon(s / r0)
            jbar = effective_jca(ref.scaled(s), build_j1(p, grid_a, grid_b))
            eff = conversion_probability(beam_splitter_unitary(jbar), photon)
            return (eff,) + _point_summary(schmidt_decompose(jbar), photon, top_k)

    workers = (os.cpu_count() or 1) if workers is None else max(1, int(workers))
    if workers == 1 or strengths.size < 2:
        results = [point(s) for s in strengths]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(point, strengths))

    meta = {
        "model": model,
        "r0_tilde": r0,
        "mu_sq": mu.mu_sq,
        "grid_a": grid_a.to_dict(),
        "grid_b": grid_b.to_dict(),
        "top_k": top_k,
        "device": params.to_dict(),
    }
    if model == "exact":
        meta.update(n_steps=n_steps, oracle_tol=tol)
    else:
        meta.update(magnus_panels=magnus_panels, magnus_nodes=magnus_nodes, magnus_tol=magnus_tol,
                    magnus_truncation_error=ref.metadata["truncation_error"])
    return SweepResult(
        strengths=strengths,
        eff_toc=np.array([r[0] for r in results]),
        eff_no_toc=np.sin(strengths) ** 2,
        schmidt=np.array([r[1] for r in results]).reshape(strengths.size, top_k),
        overlaps=np.array([r[2] for r in results]).reshape(strengths.size, top_k),
        model=model,
        metadata=meta,
    )


def sweep_efficiency(params: DeviceParams, strengths: Optional[Sequence[float]] = None,
                     photon: Optional[WavePacket] = None, model: str = "exact", top_k: int = 4,
                     grids: Optional[tuple[FrequencyGrid, FrequencyGrid]] = None,
                     n_points: int = 64, half_width_factor: float = 6.0,
                     n_steps: int = 512, tol: float = 1e-8,
                     magnus_panels: int = 48, magnus_nodes: int = 16,
                     magnus_tol: Optional[float] = 1e-8,
                     workers: Optional[int] = None) -> SweepResult:
    """Conversion efficiency of ``photon`` against the strength r0_tilde * epsilon.

    ``params`` supplies the geometry; its own epsilon is ignored. The photon
    defaults to the zeroth Hermite-Gaussian matched to mu_a.
    """
    return _sweep(params, strengths, model, photon, top_k, grids, n_points, half_width_factor,
                  n_steps, tol, magnus_panels, magnus_nodes, magnus_tol, workers)


def sweep_schmidt(params: DeviceParams, strengths: Optional[Sequence[float]] = None,
                  top_k: int = 4, photon: Optional[WavePacket] = None, model: str = "exact",
                  **options) -> SweepResult:
    """Top ``top_k`` Schmidt numbers and mode overlaps against the strength.

    For the exact model these are the arcsines of the singular values of the
    converted block; for ``magnus3`` they are the Schmidt numbers of the
    effective JCA, which may exceed pi/2.
    """
    return sweep_efficiency(params, strengths, photon, model, top_k, **options)


def first_local_maximum(x: np.ndarray, y: np.ndarray):
    """(x, y) at the first interior sample not exceeded by either neighbour, else None."""
    for i in range(1, len(y) - 1):
        if y[i] >= y[i - 1] and y[i] > y[i + 1]:
            return float(x[i]), float(y[i])
    return None


@dataclass(frozen=True)
class CascadeSpec:
    """N identical devices, each driven at epsilon / N."""

    base: DeviceParams
    stages: int

    def __post_init__(self):
        if int(self.stages) != self.stages or self.stages < 1:
            raise ValueError(f"stages must be an integer >= 1, got {self.stages}")

    @property
    def stage_params(self) -> DeviceParams:
        return self.base.with_epsilon(self.base.epsilon / self.stages)


def cascade_unitary(spec: CascadeSpec, grid_a: Optional[FrequencyGrid] = None,
                    grid_b: Optional[FrequencyGrid] = None, n_points: int = 64,
                    half_width_factor: float = 6.0, **oracle_options) -> OneParticleUnitary:
    """Ordered product of ``spec.stages`` single-device propagators."""
    if grid_a is None or grid_b is None:
        grid_a, grid_b = default_grids(spec.base, n_points, half_width_factor)
    stage = time_ordered_unitary(spec.stage_params, grid_a, grid_b, **oracle_options)
    total = stage.matrix
    for _ in range(spec.stages - 1):
        total = stage.matrix @ total
    result = OneParticleUnitary(grid_a, grid_b, total, stage.n_steps, stage.convergence_change)
    err = result.unitarity_error()
    if err > spec.stages * 1e-10:
        raise UnitarityError(f"cascade departs from unitarity by {err:.3e}")
    return result


def rotation_norm(U: OneParticleUnitary) -> float:
    """Frobenius norm of the block-diagonal part of the principal log of U."""
    t, z = linalg.schur(U.matrix, output="complex")
    log = (z * np.log(np.diag(t))) @ z.conj().T
    na = U.n_a
    return float(math.hypot(np.linalg.norm(log[:na, :na]), np.linalg.norm(log[na:, na:])))


def design_mu_zero(s_a: float, s_b: float, s_p: float) -> float:
    """Pump duration that makes the first-order JCA separable."""
    product = (s_p - s_a) * (s_p - s_b)
    if not product < 0:
        raise InfeasibleDesignError(
            "no pump duration gives mu = 0: requires s_a < s_p < s_b or s_b < s_p < s_a "
            f"(got s_a={s_a}, s_p={s_p}, s_b={s_b})")
    return math.sqrt(-product)
