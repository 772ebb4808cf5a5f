"""Quadrature helpers: capped adaptive integration and composite Gauss-Legendre rules."""

from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import QuadratureError

EPSABS = 1e-10
SUBDIVISION_CAP = 2000


def adaptive(f, a: float, b: float, *, epsabs: float = EPSABS, epsrel: float = 1e-10,
             limit: int = SUBDIVISION_CAP, points=None) -> float:
    """Adaptive Gauss-Kronrod integral of a real function on [a, b].

    Unlike a bare ``quad`` call, reaching the subdivision cap or any other
    convergence failure raises instead of returning a degraded value.
    """
    if a == b:
        return 0.0
    if points is not None:
        points = [p for p in points if min(a, b) < p < max(a, b)] or None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr, _info, *failure = integrate.quad(
            f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit, points=points, full_output=1)
    if failure:
        text = str(failure[0])
        # roundoff-limited results are kept only when the error estimate still meets tolerance
        if not ("roundoff" in text and abserr <= 10 * max(epsabs, epsrel * abs(value))):
            raise QuadratureError(f"adaptive quadrature failed on [{a}, {b}]: {text.splitlines()[0]}")
    return float(value)


@lru_cache(maxsize=64)
def _leggauss(order: int):
    return np.polynomial.legendre.leggauss(order)


def gauss_legendre_panels(edges, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a composite Gauss-Legendre rule on consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    xg, wg = _leggauss(order)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def trapezoid_mass(t, y) -> float:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 2:
        return 0.0
    return float(np.trapezoid(y, t))
