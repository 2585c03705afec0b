"""Schmidt analysis of conversion amplitudes and of converted-photon blocks."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .coupling import JcaMatrix
from .domain import FrequencyGrid, WavePacket
from .propagate import EffectiveJca, OneParticleUnitary

__all__ = [
    "SchmidtSource",
    "SchmidtData",
    "GridMismatchError",
    "schmidt_decompose",
    "conversion_probability",
    "mode_overlaps",
    "transform_photon",
]

#: Oracle singular values above 1 by more than this are treated as an upstream bug.
SIN_HARD_LIMIT = 1.0 + 1e-6
#: Overshoot tolerated silently before clamping.
SIN_SOFT_LIMIT = 1.0 + 1e-9


class SchmidtSource(str, enum.Enum):
    FIRST_ORDER = "first_order"
    EFFECTIVE_JCA = "effective_jca"
    ORACLE_BLOCK = "oracle_block"


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SchmidtData:
    """Schmidt numbers with input modes k (columns, a grid) and output modes l (b grid).

    For generator sources the matrix -2 pi J equals sum r l k^H. For the
    oracle source -i U_ba equals sum sin(r) l k^H.
    """

    r_theta: np.ndarray
    input_modes: np.ndarray = field(repr=False)
    output_modes: np.ndarray = field(repr=False)
    source: SchmidtSource
    grid_a: Optional[FrequencyGrid] = None
    grid_b: Optional[FrequencyGrid] = None

    @property
    def n_kept(self) -> int:
        return self.r_theta.size

    def top(self, k: int) -> np.ndarray:
        """First k Schmidt numbers, zero padded."""
        out = np.zeros(k)
        n = min(k, self.n_kept)
        out[:n] = self.r_theta[:n]
        return out

    def reconstruct(self) -> np.ndarray:
        """The decomposed matrix (-2 pi J, or -i U_ba)."""
        amp = np.sin(self.r_theta) if self.source is SchmidtSource.ORACLE_BLOCK else self.r_theta
        return (self.output_modes * amp) @ self.input_modes.conj().T


def _fix_phases(u: np.ndarray, v: np.ndarray):
    """Make the largest-magnitude entry of every input mode real positive."""
    if v.shape[1] == 0:
        return u, v
    idx = np.argmax(np.abs(v), axis=0)
    pivot = v[idx, np.arange(v.shape[1])]
    phase = np.conj(pivot) / np.abs(pivot)
    return u * phase, v * phase


def _first_significant(v: np.ndarray, rel: float = 1e-8) -> np.ndarray:
    mag = np.abs(v)
    return np.argmax(mag >= rel * mag.max(axis=0, keepdims=True), axis=0)


def _ordered(s: np.ndarray, v: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Descending order; near-equal values ordered by first significant input coefficient."""
    if s.size == 0:
        return np.arange(0)
    scale = s.max() if s.max() > 0 else 1.0
    buckets = np.round(s / (scale * rtol))
    return np.lexsort((_first_significant(v), -buckets))


def schmidt_decompose(matrix: Union[JcaMatrix, EffectiveJca, OneParticleUnitary, np.ndarray],
                      source: Optional[Union[SchmidtSource, str]] = None,
                      rel_cutoff: float = 1e-8) -> SchmidtData:
    """Singular-value decomposition with a fixed phase convention.

    JCA inputs (``first_order`` or ``effective_jca``) are decomposed as
    -2 pi J = sum r l k^H, so r is the rotation angle of the corresponding
    beam splitter. Unitary inputs (``oracle_block``) use the U_ba block with
    -i U_ba = sum sin(r) l k^H. Modes with singular value below
    ``rel_cutoff`` times the largest are dropped.
    """
    grid_a = grid_b = None
    if isinstance(matrix, OneParticleUnitary):
        grid_a, grid_b = matrix.grid_a, matrix.grid_b
        source = SchmidtSource.ORACLE_BLOCK if source is None else source
        raw = matrix.ba
    elif isinstance(matrix, EffectiveJca):
        grid_a, grid_b = matrix.grid_a, matrix.grid_b
        source = SchmidtSource.EFFECTIVE_JCA if source is None else source
        raw = matrix.values
    elif isinstance(matrix, JcaMatrix):
        grid_a, grid_b = matrix.grid_a, matrix.grid_b
        source = SchmidtSource.FIRST_ORDER if source is None else source
        raw = matrix.values
    else:
        if source is None:
            raise ValueError("a source tag is required for a bare array")
        raw = np.asarray(matrix)
    source = SchmidtSource(source)
    raw = np.asarray(raw, dtype=complex)
    if not np.all(np.isfinite(raw)):
        raise ValueError("matrix contains non-finite entries")
    if source is SchmidtSource.ORACLE_BLOCK:
        target = -1j * raw
    else:
        target = -2.0 * math.pi * raw
    u, s, vh = np.linalg.svd(target, full_matrices=False)
    v = vh.conj().T
    smax = s[0] if s.size else 0.0
    keep = s >= rel_cutoff * smax if smax > 0 else np.zeros(s.size, bool)
    u, s, v = u[:, keep], s[keep], v[:, keep]
    u, v = _fix_phases(u, v)
    order = _ordered(s, v)
    u, s, v = u[:, order], s[order], v[:, order]
    if source is SchmidtSource.ORACLE_BLOCK:
        if s.size and s[0] > SIN_HARD_LIMIT:
            raise ValueError(
                f"singular value {s[0]:.9f} of the converted block exceeds 1; "
                "the propagator is not unitary")
        if s.size and s[0] > SIN_SOFT_LIMIT:
            warnings.warn(f"clamping singular value {s[0]:.12f} to 1", RuntimeWarning)
        r = np.arcsin(np.clip(s, 0.0, 1.0))
    else:
        r = s
    return SchmidtData(r, v, u, source, grid_a, grid_b)


def _check_grid(expected: FrequencyGrid, g: WavePacket):
    if expected is not None and expected != g.grid:
        raise GridMismatchError(f"wave packet lives on {g.grid}, expected {expected}")


def conversion_probability(U: OneParticleUnitary, g: WavePacket) -> float:
    """Probability that the photon g leaves the device in the b field."""
    _check_grid(U.grid_a, g)
    p = float(np.linalg.norm(U.ba @ g.amplitudes) ** 2)
    return min(max(p, 0.0), 1.0)


def mode_overlaps(sd: SchmidtData, g: WavePacket) -> np.ndarray:
    """c_theta = <k_theta, g>."""
    _check_grid(sd.grid_a, g)
    if sd.input_modes.shape[0] != g.amplitudes.size:
        raise GridMismatchError("mode and wave packet lengths differ")
    return sd.input_modes.conj().T @ g.amplitudes


def transform_photon(U: OneParticleUnitary, g: WavePacket):
    """Unnormalized (remaining a amplitude, converted b amplitude)."""
    _check_grid(U.grid_a, g)
    return U.aa @ g.amplitudes, U.ba @ g.amplitudes
