# TerraSense — arc quadrature rules
# Gauss-Legendre split at theta_m, the piecewise quadratic rule, and an
# adaptive wrapper. All node builders broadcast over leading batch axes.

from __future__ import annotations
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy import integrate

from .errors import ConfigError
from .terrain import ContactGeometry

GAUSS_NODES = 12                 # per sub-arc
QUADRATIC_PANELS = 2             # per side of theta_m
ADAPTIVE_EPSREL = 1e-8
DEGENERATE_ARC = 1e-9            # rad


@lru_cache(maxsize=8)
def _legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


@lru_cache(maxsize=8)
def _fractions(panels: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, panels + 1)
    t.flags.writeable = False
    return t


def _split_edges(theta_r, theta_m, theta_f, panels: int) -> np.ndarray:
    """Panel edges, `panels` equal panels on each side of theta_m, shape (..., 2 panels + 1)."""
    a = np.asarray(theta_r, dtype=float)[..., None]
    m = np.asarray(theta_m, dtype=float)[..., None]
    b = np.asarray(theta_f, dtype=float)[..., None]
    t = _fractions(panels)
    return np.concatenate([a + (m - a) * t, m + (b - m) * t[1:]], axis=-1)


def _panel_rule(edges: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = _legendre(n)
    lo, hi = edges[..., :-1, None], edges[..., 1:, None]
    half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
    shape = edges.shape[:-1] + (-1,)
    return (mid + half * x).reshape(shape), (half * w).reshape(shape)


def gauss_arc_nodes(theta_r, theta_m, theta_f, n: int = GAUSS_NODES):
    """Nodes/weights on [theta_r, theta_m] and [theta_m, theta_f], shape (..., 2n)."""
    return _panel_rule(_split_edges(theta_r, theta_m, theta_f, 1), n)


def quadratic_arc_nodes(theta_r, theta_m, theta_f, panels: int = QUADRATIC_PANELS):
    """Nodes/weights of the piecewise quadratic rule, shape (..., 6 panels).

    Each side of the stress peak theta_m is cut into `panels` equal panels. On
    every panel a quadratic is fitted through the three Gauss points and
    integrated in closed form, which is the three-point Gauss-Legendre sum.
    The stress kink at theta_m always falls on a panel edge. An arc shorter
    than DEGENERATE_ARC gets zero weights.
    """
    if panels < 1:
        raise ConfigError(f"quadratic rule needs at least one panel per side, got {panels}")
    nodes, weights = _panel_rule(_split_edges(theta_r, theta_m, theta_f, panels), 3)
    arc = np.asarray(theta_f, dtype=float) - np.asarray(theta_r, dtype=float)
    weights = np.where((arc < DEGENERATE_ARC)[..., None], 0.0, weights)
    return nodes, weights


def integrate_arc(f: Callable[[np.ndarray], np.ndarray], cg: ContactGeometry,
                  method: str = "adaptive") -> float:
    """Integrate f(theta) over [theta_r, theta_f]."""
    if cg.arc < DEGENERATE_ARC:
        return 0.0
    if method == "adaptive":
        points = None
        if cg.theta_r < cg.theta_m < cg.theta_f:
            points = [cg.theta_m]
        val, _err = integrate.quad(lambda t: float(f(np.asarray(t))), cg.theta_r, cg.theta_f,
                                   points=points, epsabs=0.0, epsrel=ADAPTIVE_EPSREL, limit=200)
        return float(val)
    if method == "gauss":
        nodes, weights = gauss_arc_nodes(cg.theta_r, cg.theta_m, cg.theta_f)
    elif method == "quadratic":
        nodes, weights = quadratic_arc_nodes(cg.theta_r, cg.theta_m, cg.theta_f)
    else:
        raise ConfigError(f"unknown integrator {method!r}; expected adaptive, gauss or quadratic")
    return float(np.sum(weights * f(nodes)))
