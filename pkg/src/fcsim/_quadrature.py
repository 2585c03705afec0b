"""Gauss-Legendre panel rules, including cumulative (indefinite) integration."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def cumulative_matrix(n: int) -> np.ndarray:
    """S[j, k] = integral from -1 to x_j of the k-th Lagrange basis polynomial.

    Exact for polynomials of degree < n sampled at the Gauss-Legendre nodes.
    """
    x, _ = gauss_legendre(n)
    vander = legendre.legvander(x, n - 1)
    integrated = np.empty_like(vander)
    for k in range(n):
        coeffs = np.zeros(n)
        coeffs[k] = 1.0
        integrated[:, k] = legendre.legval(x, legendre.legint(coeffs, lbnd=-1))
    s = np.linalg.solve(vander.T, integrated.T).T
    s.setflags(write=False)
    return s


def panel_edges(lo: float, hi: float, n_panels: int) -> np.ndarray:
    return np.linspace(lo, hi, n_panels + 1)


def composite_rule(lo: float, hi: float, n_panels: int, nodes_per_panel: int):
    """Nodes and weights of a composite Gauss-Legendre rule on [lo, hi]."""
    x, w = gauss_legendre(nodes_per_panel)
    edges = panel_edges(lo, hi, n_panels)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights
