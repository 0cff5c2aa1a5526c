"""Gauss-Legendre rules and the adaptive drivers shared by the evaluators."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach its tolerance."""


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_nodes(t0: float, t1: float, panels: int, order: int = 16):
    """Nodes and weights of a composite Gauss rule on [t0, t1]."""
    x, w = gauss_legendre(order)
    edges = np.linspace(t0, t1, panels + 1)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + h[:, None] * x[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    return nodes, weights


def integrate_1d(f, t0: float, t1: float, rtol: float = 1e-12, atol: float = 1e-15,
                 panels: int = 4, max_panels: int = 8192, order: int = 16, label: str = "") -> float:
    """Composite Gauss rule, doubling the panel count until two levels agree."""
    if t1 == t0:
        return 0.0
    nodes, weights = composite_nodes(t0, t1, panels, order)
    prev = float(np.dot(f(nodes), weights))
    while panels < max_panels:
        panels *= 2
        nodes, weights = composite_nodes(t0, t1, panels, order)
        cur = float(np.dot(f(nodes), weights))
        if abs(cur - prev) <= rtol * abs(cur) + atol:
            return cur
        prev = cur
    raise QuadratureError(f"1D quadrature did not converge{(' on ' + label) if label else ''}")
