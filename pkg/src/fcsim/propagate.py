"""Time-ordered evolution of the one-photon sector and its Magnus expansion.

The one-photon state is the stacked vector (a amplitudes, b amplitudes). Its
generator at time t is H(t) = [[0, m(t)^H], [m(t), 0]], so every propagator is
a (N_a + N_b) square unitary. Two independent routes are provided:

* ``time_ordered_unitary``: ordered product of slice exponentials, used as
  the exact reference.
* ``magnus_generators``: the first three Magnus terms by nested quadrature,
  from which the beam-splitter factor and its effective JCA follow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _quadrature as quad
from .coupling import (ConvergenceError, CouplingKernel, JcaMatrix,
                       default_time_window)
from .domain import DeviceParams, FrequencyGrid

__all__ = [
    "OneParticleUnitary",
    "MagnusGenerators",
    "EffectiveJca",
    "UnitarityError",
    "time_ordered_unitary",
    "magnus_generators",
    "magnus_unitary",
    "effective_jca",
    "beam_splitter_unitary",
    "expm_antihermitian",
    "offdiagonal_generator",
]


class UnitarityError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class OneParticleUnitary:
    grid_a: FrequencyGrid
    grid_b: FrequencyGrid
    matrix: np.ndarray = field(repr=False)
    n_steps: Optional[int] = None
    convergence_change: Optional[float] = None

    @property
    def n_a(self) -> int:
        return self.grid_a.n_points

    @property
    def aa(self) -> np.ndarray:
        return self.matrix[:self.n_a, :self.n_a]

    @property
    def ab(self) -> np.ndarray:
        return self.matrix[:self.n_a, self.n_a:]

    @property
    def ba(self) -> np.ndarray:
        return self.matrix[self.n_a:, :self.n_a]

    @property
    def bb(self) -> np.ndarray:
        return self.matrix[self.n_a:, self.n_a:]

    def unitarity_error(self) -> float:
        """Operator-norm distance of U^H U from the identity."""
        u = self.matrix
        return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0]), 2))

    def __matmul__(self, other: "OneParticleUnitary") -> "OneParticleUnitary":
        return OneParticleUnitary(self.grid_a, self.grid_b, self.matrix @ other.matrix)


def expm_antihermitian(omega: np.ndarray) -> np.ndarray:
    """exp(omega) for anti-Hermitian omega via the eigendecomposition of i*omega."""
    k = 1j * omega
    k = 0.5 * (k + k.conj().T)
    w, q = np.linalg.eigh(k)
    return (q * np.exp(-1j * w)) @ q.conj().T


def offdiagonal_generator(lower: np.ndarray) -> np.ndarray:
    """Anti-Hermitian [[0, -Z^H], [Z, 0]] from its lower (b <- a) block Z."""
    n_b, n_a = lower.shape
    out = np.zeros((n_a + n_b, n_a + n_b), dtype=complex)
    out[n_a:, :n_a] = lower
    out[:n_a, n_a:] = -lower.conj().T
    return out


def _blockdiag(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    n_a, n_b = pa.shape[0], pb.shape[0]
    out = np.zeros((n_a + n_b, n_a + n_b), dtype=complex)
    out[:n_a, :n_a] = pa
    out[n_a:, n_a:] = pb
    return out


def _exp_offdiagonal(lower: np.ndarray) -> np.ndarray:
    """exp([[0, -Z^H], [Z, 0]]) from the SVD of Z (cosine/sine blocks)."""
    n_b, n_a = lower.shape
    u, s, vh = np.linalg.svd(lower, full_matrices=True)
    k = min(n_a, n_b)
    v = vh.conj().T
    cos_a = np.ones(n_a)
    cos_a[:k] = np.cos(s)
    cos_b = np.ones(n_b)
    cos_b[:k] = np.cos(s)
    sin = np.zeros((n_b, n_a))
    sin[np.arange(k), np.arange(k)] = np.sin(s)
    out = np.empty((n_a + n_b, n_a + n_b), dtype=complex)
    out[:n_a, :n_a] = (v * cos_a) @ vh
    out[n_a:, n_a:] = (u * cos_b) @ u.conj().T
    out[n_a:, :n_a] = u @ sin @ vh
    out[:n_a, n_a:] = -(v @ sin.T @ u.conj().T)
    return out


# ---------------------------------------------------------------------------
# Exact time-ordered propagator

_GL3 = math.sqrt(15.0) / 10.0


def _hermitian_slice(h0: np.ndarray, w: np.ndarray) -> np.ndarray:
    n_a = w.shape[1]
    out = np.diag(h0).astype(complex)
    out[n_a:, :n_a] = w
    out[:n_a, n_a:] = w.conj().T
    return out


def _sixth_order_step(h0: np.ndarray, w_nodes, h: float) -> np.ndarray:
    """One slice of the sixth-order commutator Magnus integrator.

    ``w_nodes`` holds the frame couplings at the three Gauss points. The
    slice Hamiltonian is diag(h0) + [[0, W^H], [W, 0]].
    """
    hs = [_hermitian_slice(h0, w) for w in w_nodes]
    a1 = -1j * h * hs[1]
    a2 = -1j * (math.sqrt(15.0) * h / 3.0) * (hs[2] - hs[0])
    a3 = -1j * (10.0 * h / 3.0) * (hs[2] - 2.0 * hs[1] + hs[0])

    def comm(x, y):
        return x @ y - y @ x

    c1 = comm(a1, a2)
    c2 = -comm(a1, 2.0 * a3 + c1) / 60.0
    omega = a1 + a3 / 12.0 + comm(-20.0 * a1 - a3 + c1, a2 + c2) / 240.0
    return expm_antihermitian(omega)


def _frame_propagator(kernel: CouplingKernel, half: float, n_steps: int) -> np.ndarray:
    h0 = np.concatenate([kernel.beta_a * kernel.wa, kernel.beta_b * kernel.wb])
    h = 2.0 * half / n_steps
    offsets = h * (0.5 + np.array([-_GL3, 0.0, _GL3]))
    if kernel.separable_in_time:
        base = kernel.frame_matrix()
    dim = h0.size
    u = np.eye(dim, dtype=complex)
    for k in range(n_steps):
        t0 = -half + k * h
        if kernel.separable_in_time:
            nodes = [base * kernel.envelope(t0 + o) for o in offsets]
        else:
            nodes = [kernel.frame(t0 + o) for o in offsets]
        u = _sixth_order_step(h0, nodes, h) @ u
    phase = np.exp(1j * h0 * half)
    # interaction picture: U_I(T, -T) = exp(i H0 T) U_frame exp(i H0 T)
    return phase[:, None] * u * phase[None, :]


def time_ordered_unitary(params: DeviceParams, grid_a: FrequencyGrid, grid_b: FrequencyGrid,
                         time_window: Optional[float] = None, n_steps: int = 512,
                         tol: float = 1e-8, unitarity_tol: float = 1e-10,
                         **kernel_options) -> OneParticleUnitary:
    """Exact propagator from -T to T of the one-photon sector.

    The pump-driven part is integrated in a frame rotating with the linear
    phases of the coupling, one sixth-order Magnus exponential per slice.
    The result with ``n_steps`` slices is compared with ``n_steps // 2``
    slices; a max-norm change above ``tol`` raises ConvergenceError.
    """
    if n_steps < 64:
        raise ValueError(f"n_steps must be >= 64, got {n_steps}")
    half = default_time_window(params) if time_window is None else float(time_window)
    kernel = CouplingKernel(params, grid_a, grid_b, **kernel_options)
    if params.epsilon == 0.0:
        dim = grid_a.n_points + grid_b.n_points
        return OneParticleUnitary(grid_a, grid_b, np.eye(dim, dtype=complex), n_steps, 0.0)
    fine = _frame_propagator(kernel, half, n_steps)
    coarse = _frame_propagator(kernel, half, n_steps // 2)
    change = float(np.abs(fine - coarse).max())
    if change > tol:
        raise ConvergenceError(
            f"time-ordered propagator with {n_steps} slices not converged", change, tol)
    result = OneParticleUnitary(grid_a, grid_b, fine, n_steps, change)
    err = result.unitarity_error()
    if err > unitarity_tol:
        raise UnitarityError(f"propagator departs from unitarity by {err:.3e}")
    return result


# ---------------------------------------------------------------------------
# Magnus generators

@dataclass(frozen=True, eq=False)
class MagnusGenerators:
    """One-particle matrices of the Magnus terms (anti-Hermitian).

    ``omega1`` and ``omega3`` are purely off-diagonal (beam-splitter-like),
    ``omega2`` purely block-diagonal (rotation-like).
    """

    grid_a: FrequencyGrid
    grid_b: FrequencyGrid
    omega1: np.ndarray = field(repr=False)
    omega2: Optional[np.ndarray] = field(repr=False, default=None)
    omega3: Optional[np.ndarray] = field(repr=False, default=None)
    epsilon: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return 1 + (self.omega2 is not None) + (self.omega3 is not None)

    def terms(self):
        return [o for o in (self.omega1, self.omega2, self.omega3) if o is not None]

    def total(self) -> np.ndarray:
        return sum(self.terms())

    def lower(self, n: int) -> np.ndarray:
        """b <- a block of the n-th term."""
        na = self.grid_a.n_points
        return self.terms()[n - 1][na:, :na]

    def scaled(self, factor: float) -> "MagnusGenerators":
        """Generators at epsilon * factor, using the exact epsilon^n homogeneity."""
        terms = [o * factor ** (n + 1) for n, o in enumerate(self.terms())]
        terms += [None] * (3 - len(terms))
        meta = dict(self.metadata, scaled_from_epsilon=self.epsilon)
        return MagnusGenerators(self.grid_a, self.grid_b, *terms,
                                epsilon=self.epsilon * factor, metadata=meta)


def _comm_offdiag(z1, z2):
    """[off(z1), off(z2)] as its two diagonal blocks."""
    return (z2.conj().T @ z1 - z1.conj().T @ z2, z2 @ z1.conj().T - z1 @ z2.conj().T)


def _comm_diag_off(pa, pb, z):
    """Lower block of [diag(pa, pb), off(z)]."""
    return pb @ z - z @ pa


def _magnus_blocks(kernel: CouplingKernel, half: float, order: int,
                   n_panels: int, nodes: int):
    x, w = quad.gauss_legendre(nodes)
    smat = quad.cumulative_matrix(nodes)
    n_a, n_b = kernel.wa.size, kernel.wb.size
    z1 = np.zeros((n_b, n_a), dtype=complex)
    p2a = np.zeros((n_a, n_a), dtype=complex)
    p2b = np.zeros((n_b, n_b), dtype=complex)
    z3 = np.zeros((n_b, n_a), dtype=complex)
    edges = quad.panel_edges(-half, half, n_panels)
    for lo, hi in zip(edges[:-1], edges[1:]):
        scale = 0.5 * (hi - lo)
        ts = lo + scale * (x + 1.0)
        # lower block of A(t) = -i H(t)
        za = np.stack([-1j * kernel.m(t) for t in ts])
        z1_nodes = z1 + scale * np.tensordot(smat, za, axes=1)
        z1 = z1 + scale * np.tensordot(w, za, axes=1)
        if order < 2:
            continue
        # Omega_2' = [A, Omega_1] / 2
        f2 = [_comm_offdiag(za[k], z1_nodes[k]) for k in range(nodes)]
        f2a = 0.5 * np.stack([f[0] for f in f2])
        f2b = 0.5 * np.stack([f[1] for f in f2])
        p2a_nodes = p2a + scale * np.tensordot(smat, f2a, axes=1)
        p2b_nodes = p2b + scale * np.tensordot(smat, f2b, axes=1)
        p2a = p2a + scale * np.tensordot(w, f2a, axes=1)
        p2b = p2b + scale * np.tensordot(w, f2b, axes=1)
        if order < 3:
            continue
        # Omega_3' = [A, Omega_2] / 2 + [Omega_1, [Omega_1, A]] / 12
        f3 = np.empty_like(za)
        for k in range(nodes):
            rot = -_comm_diag_off(p2a_nodes[k], p2b_nodes[k], za[k])
            da, db = _comm_offdiag(z1_nodes[k], za[k])
            nested = -_comm_diag_off(da, db, z1_nodes[k])
            f3[k] = 0.5 * rot + nested / 12.0
        z3 = z3 + scale * np.tensordot(w, f3, axes=1)
    return z1, (p2a, p2b), z3


def magnus_generators(params: DeviceParams, grid_a: FrequencyGrid, grid_b: FrequencyGrid,
                      time_window: Optional[float] = None, order: int = 3,
                      n_panels: int = 48, nodes_per_panel: int = 16,
                      tol: Optional[float] = 1e-8, **kernel_options) -> MagnusGenerators:
    """First ``order`` Magnus terms of the one-photon propagator.

    Each term is built from the recursion Omega_2' = [A, Omega_1]/2 and
    Omega_3' = [A, Omega_2]/2 + [Omega_1, [Omega_1, A]]/12 with A = -iH,
    where every indefinite time integral uses Gauss-Legendre panels with a
    spectral cumulative-integration matrix. With ``tol`` set, the run is
    repeated with half the panels and the largest relative change of any
    term is checked against ``tol``.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    half = default_time_window(params) if time_window is None else float(time_window)
    kernel = CouplingKernel(params, grid_a, grid_b, **kernel_options)
    z1, (p2a, p2b), z3 = _magnus_blocks(kernel, half, order, n_panels, nodes_per_panel)
    meta = {"time_window": half, "n_panels": n_panels, "nodes_per_panel": nodes_per_panel,
            "order": order, "truncation_error": None}
    if tol is not None and params.epsilon > 0:
        c1, (c2a, c2b), c3 = _magnus_blocks(kernel, half, order, max(1, n_panels // 2),
                                            nodes_per_panel)
        changes = []
        for fine, coarse in [(z1, c1), (p2a, c2a), (p2b, c2b), (z3, c3)][:1 + 2 * (order >= 2) + (order >= 3)]:
            scale = np.abs(fine).max()
            changes.append(np.abs(fine - coarse).max() / scale if scale > 0 else 0.0)
        change = float(max(changes))
        meta["truncation_error"] = change
        if change > tol:
            raise ConvergenceError("Magnus quadrature not converged", change, tol)
    omega1 = offdiagonal_generator(z1)
    omega2 = _blockdiag(p2a, p2b) if order >= 2 else None
    omega3 = offdiagonal_generator(z3) if order >= 3 else None
    return MagnusGenerators(grid_a, grid_b, omega1, omega2, omega3,
                            epsilon=params.epsilon, metadata=meta)


def magnus_unitary(gens: MagnusGenerators, order: Optional[int] = None) -> OneParticleUnitary:
    """exp(Omega_1 + ... + Omega_order)."""
    terms = gens.terms()[:order]
    return OneParticleUnitary(gens.grid_a, gens.grid_b, expm_antihermitian(sum(terms)))


# ---------------------------------------------------------------------------
# Beam-splitter factor

@dataclass(frozen=True, eq=False)
class EffectiveJca:
    """JCA of the beam-splitter factor, J = J1 + J3 + i K3 (weighted, rows = omega_b).

    ``g2a`` and ``g2b`` are the rotation kernels of the second Magnus term.
    """

    grid_a: FrequencyGrid
    grid_b: FrequencyGrid
    values: np.ndarray = field(repr=False)
    j1: np.ndarray = field(repr=False)
    j3: np.ndarray = field(repr=False)
    k3: np.ndarray = field(repr=False)
    g2a: np.ndarray = field(repr=False)
    g2b: np.ndarray = field(repr=False)
    weighted: bool = True

    def as_jca(self) -> JcaMatrix:
        return JcaMatrix(self.grid_a, self.grid_b, self.values, self.weighted)


def effective_jca(gens: MagnusGenerators, j1: JcaMatrix) -> EffectiveJca:
    """Collect the order-epsilon^3 JCA of exp(Omega_1 + Omega_3 + [Omega_1, Omega_2]/2).

    Kernel conventions: Omega_{2n+1} has lower block -2 pi i J_{2n+1}, the
    rotation term has diagonal blocks -2 pi i G_2, and
    K_3 / pi = G_2^b J_1 - J_1 G_2^a as matrix products over the grids.
    """
    if gens.order < 3:
        raise ValueError("effective_jca needs Magnus generators up to third order")
    if not j1.weighted:
        raise ValueError("JCA matrix must carry the sqrt(d omega_a d omega_b) mode weights")
    if j1.grid_a != gens.grid_a or j1.grid_b != gens.grid_b:
        raise ValueError("JCA and Magnus generators live on different grids")
    na = gens.grid_a.n_points
    two_pi = 2.0 * math.pi
    j3 = 1j * gens.lower(3) / two_pi
    g2a = 1j * gens.omega2[:na, :na] / two_pi
    g2b = 1j * gens.omega2[na:, na:] / two_pi
    j1v = j1.values
    k3 = math.pi * (g2b @ j1v - j1v @ g2a)
    values = j1v + j3 + 1j * k3
    return EffectiveJca(gens.grid_a, gens.grid_b, values, j1v, j3, k3, g2a, g2b)


def beam_splitter_unitary(jca) -> OneParticleUnitary:
    """exp of the beam-splitter generator whose lower block is -2 pi i J."""
    lower = -2j * math.pi * jca.values
    return OneParticleUnitary(jca.grid_a, jca.grid_b, _exp_offdiagonal(lower))
