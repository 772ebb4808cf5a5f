"""
Arrival-time densities at a point detector.

Four estimates of the distribution of the time at which a freely moving
particle reaches ``detector_x``:

``current``
    the flux j(x_d, t); signed, negative during backflow;
``truncated_current``
    histogram of first Bohmian crossings of an equilibrium ensemble;
``kijowski``
    density of the free arrival-time POVM, built from the momentum
    amplitude with a sqrt|p| kernel on each half line;
``semiclassical``
    the momentum distribution pushed through t = m L / p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import quadrature
from .bohmian import EnsembleSpec, FirstArrivals, ensemble_first_arrivals
from .errors import QArrivalError, QuadratureError, SupportError
from .observables import current
from .states import WaveState, momentum_amplitude, momentum_half_line_mass

__all__ = [
    "ArrivalDistribution",
    "KijowskiSettings",
    "Comparison",
    "current_distribution",
    "truncated_current_distribution",
    "truncated_from_arrivals",
    "kijowski_distribution",
    "kijowski_amplitudes",
    "semiclassical_distribution",
    "semiclassical_mass",
    "compare",
]

Method = Literal["current", "truncated_current", "kijowski", "semiclassical"]


@dataclass
class ArrivalDistribution:
    method: Method
    t_grid: np.ndarray
    density: np.ndarray
    total_mass: float
    meta: dict = field(default_factory=dict)
    mc_stderr: np.ndarray | None = None
    bin_edges: np.ndarray | None = None

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.t_grid.shape != self.density.shape:
            raise ValueError("t_grid and density must have the same shape")


def _sorted_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float).ravel()
    if t.size < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be strictly increasing with at least two points")
    return t


def current_distribution(state: WaveState, detector_x: float, t_grid) -> ArrivalDistribution:
    t = _sorted_grid(t_grid)
    j = current(state, detector_x, t)
    return ArrivalDistribution("current", t, j, quadrature.trapezoid_mass(t, j),
                               {"detector_x": float(detector_x)})


# -- truncated current -------------------------------------------------------

def truncated_from_arrivals(fa: FirstArrivals, convention: str = "first-any-direction",
                            bins="fd") -> ArrivalDistribution:
    """Histogram density of first arrivals with a binomial standard error per bin.

    ``bins`` is ``"fd"`` (Freedman-Diaconis on the arrival sample), a bin
    count, or an explicit array of edges.
    """
    times = fa.arrival_times(convention)
    t0, t1 = fa.t_span
    if isinstance(bins, str):
        if times.size >= 2:
            edges = np.histogram_bin_edges(times, bins=bins, range=(times.min(), times.max()))
        else:
            edges = np.linspace(t0, t1, 2)
    elif np.ndim(bins) == 0:
        edges = np.linspace(t0, t1, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    counts, edges = np.histogram(times, bins=edges)
    width = np.diff(edges)
    n = fa.n
    p = counts / n
    density = p / width
    stderr = np.sqrt(p * (1.0 - p) / n) / width
    centers = 0.5 * (edges[1:] + edges[:-1])
    meta = {
        "detector_x": fa.detector_x,
        "t_span": list(fa.t_span),
        "convention": convention,
        "n_trajectories": n,
        "n_arrived": int(times.size),
        "n_aborted": fa.n_aborted,
        "max_crossings": int(fa.n_crossings.max(initial=0)),
        "n_multiple_crossings": int(np.count_nonzero(fa.n_crossings >= 2)),
        "n_leftward_first": int(np.count_nonzero(fa.first_direction < 0)),
    }
    return ArrivalDistribution("truncated_current", centers, density, float(times.size / n),
                               meta, stderr, edges)


def truncated_current_distribution(state: WaveState, spec: EnsembleSpec, detector_x: float = 0.0,
                                   t_span: tuple[float, float] = (0.0, 12.0),
                                   convention: str = "first-any-direction", bins="fd",
                                   workers: int = 1) -> ArrivalDistribution:
    fa = ensemble_first_arrivals(state, spec, detector_x, t_span, workers=workers)
    dist = truncated_from_arrivals(fa, convention, bins)
    dist.meta.update({"seed": spec.seed, "sampling": spec.sampling})
    return dist


# -- Kijowski ----------------------------------------------------------------

@dataclass(frozen=True)
class KijowskiSettings:
    """Quadrature parameters for the sqrt|p| momentum integrals.

    ``p_quad`` caps the number of Gauss-Legendre nodes per packet and
    half line; ``p_max`` optionally clips the momentum range and must then
    leave less than ``1e-12`` of the momentum mass outside.  Each packet is
    integrated over p0 +- n_sigma * sigma_p with ``order``-point panels,
    at least ``min_panels`` of them and enough that the phase turns by no
    more than ``phase_per_panel`` radians per panel.  Times are processed
    in blocks of ``chunk``.  A packet whose position envelope at the
    detector is below exp(negligible_exponent) is skipped at that time.
    """

    p_quad: int = 1 << 18
    p_max: float | None = None
    n_sigma: float = 12.0
    order: int = 16
    min_panels: int = 16
    phase_per_panel: float = 4.0
    chunk: int = 64
    negligible_exponent: float = -30.0


def _packet_windows(state: WaveState, settings: KijowskiSettings):
    lo = state.momenta - settings.n_sigma * state.sigma_ps
    hi = state.momenta + settings.n_sigma * state.sigma_ps
    if settings.p_max is not None:
        lo = np.maximum(lo, -settings.p_max)
        hi = np.minimum(hi, settings.p_max)
    return lo, hi


def _check_cutoff(state: WaveState, settings: KijowskiSettings):
    if settings.p_max is None:
        return
    outside = (momentum_half_line_mass(state, +1, settings.p_max).probability
               + momentum_half_line_mass(state, -1, -settings.p_max).probability)
    if outside >= 1e-12:
        raise SupportError(f"momentum cutoff {settings.p_max} leaves {outside:.3g} of the mass outside")


def kijowski_amplitudes(state: WaveState, t_grid, settings: KijowskiSettings = KijowskiSettings()):
    """Half-line amplitudes int_0^{alpha inf} dp sqrt|p| <p|psi_t> for alpha = +1, -1.

    The state must already be expressed relative to a detector at the
    origin.  Each packet is integrated on its own momentum window.  Panels
    are uniform in |p| and sized so the phase p x0 + p^2 t / 2m turns by at
    most ``phase_per_panel`` radians across each; inside a panel the nodes
    are placed in u = sqrt|p|, which removes the square-root cusp at p = 0.
    Packets whose position envelope at the origin is below
    exp(negligible_exponent) contribute zero at that time.
    """
    t = np.asarray(t_grid, dtype=float).ravel()
    hbar, m = state.hbar, state.mass
    lo_w, hi_w = _packet_windows(state, settings)
    amps = np.zeros((2, t.size), dtype=complex)
    eye = np.eye(len(state))
    for k in range(len(state)):
        single = state.with_coefficients(eye[k])
        x0, p0, s = state.centers[k], state.momenta[k], state.sigmas[k]
        tau = hbar * t / (2.0 * m * s**2)
        exponent = -(x0 + p0 * t / m) ** 2 / (4.0 * s**2 * (1.0 + tau**2))
        relevant = np.nonzero(exponent > settings.negligible_exponent)[0]
        if relevant.size == 0:
            continue
        for a_idx, alpha in enumerate((1.0, -1.0)):
            # window of |p| on this half line
            if alpha > 0:
                plo, phi = max(lo_w[k], 0.0), hi_w[k]
            else:
                plo, phi = max(-hi_w[k], 0.0), -lo_w[k]
            if phi <= plo:
                continue
            for chunk in np.array_split(relevant, max(1, relevant.size // settings.chunk)):
                tc = t[chunk]
                # phase slope in p is (alpha x0 + p t / m) / hbar, linear in p and t
                slope = max(abs(alpha * x0 + pe * te / m) for pe in (plo, phi) for te in (tc[0], tc[-1]))
                turn = slope * (phi - plo) / hbar
                panels = max(settings.min_panels, int(math.ceil(turn / settings.phase_per_panel)))
                if panels * settings.order > settings.p_quad:
                    raise QuadratureError(
                        f"Kijowski quadrature needs {panels * settings.order} nodes (cap {settings.p_quad})")
                edges = np.sqrt(np.linspace(plo, phi, panels + 1))
                u, w = quadrature.gauss_legendre_panels(edges, settings.order)
                p = alpha * u * u
                f = 2.0 * u * u * w * momentum_amplitude(single, p, 0.0)
                phase = np.exp((-0.5j / (m * hbar)) * np.outer(tc, p * p))
                amps[a_idx, chunk] += state.coefficients[k] * (phase @ f)
    return amps


def kijowski_distribution(state: WaveState, t_grid, settings: KijowskiSettings = KijowskiSettings(),
                          detector_x: float = 0.0) -> ArrivalDistribution:
    """Kijowski arrival density sum_alpha |<t, alpha|psi_0>|^2 at ``detector_x``.

    The kernel is normalized as sqrt(|p| / (2 pi m hbar)) so that the
    density integrates to one over the real time axis.
    """
    t = _sorted_grid(t_grid)
    _check_cutoff(state, settings)
    local = state.translated(-detector_x) if detector_x != 0.0 else state
    amps = kijowski_amplitudes(local, t, settings)
    dens = (np.abs(amps[0]) ** 2 + np.abs(amps[1]) ** 2) / (2.0 * math.pi * state.mass * state.hbar)
    meta = {"detector_x": float(detector_x), "p_quad": settings.p_quad, "p_max": settings.p_max,
            "n_sigma": settings.n_sigma, "order": settings.order}
    return ArrivalDistribution("kijowski", t, dens, quadrature.trapezoid_mass(t, dens), meta)


# -- semiclassical ------------------------------------------------------------

def semiclassical_density(state: WaveState, L: float, t):
    t = np.asarray(t, dtype=float)
    p = state.mass * L / t
    amp = momentum_amplitude(state, p, 0.0)
    return (amp.real**2 + amp.imag**2) * state.mass * L / t**2


def semiclassical_distribution(state: WaveState, L: float, t_grid) -> ArrivalDistribution:
    """|psi~(m L / t)|^2 m L / t^2 on a strictly positive time grid."""
    if not L > 0:
        raise ValueError("flight distance L must be positive")
    t = _sorted_grid(t_grid)
    if t[0] <= 0:
        raise ValueError("semiclassical density needs t > 0")
    dens = semiclassical_density(state, L, t)
    return ArrivalDistribution("semiclassical", t, dens, quadrature.trapezoid_mass(t, dens),
                               {"L": float(L)})


def semiclassical_mass(state: WaveState, L: float) -> float:
    """Adaptive integral of the semiclassical density over t in (0, inf)."""
    m = state.mass
    ks = np.arange(-12, 13, 2)
    p_pts = (state.momenta[:, None] + ks[None, :] * state.sigma_ps[:, None]).ravel()
    t_pts = np.unique(m * L / p_pts[p_pts > 0])
    f = lambda tt: float(semiclassical_density(state, L, tt))
    total = quadrature.adaptive(f, 0.0, float(t_pts[0]), epsabs=1e-13)
    for a, b in zip(t_pts[:-1], t_pts[1:]):
        total += quadrature.adaptive(f, float(a), float(b), epsabs=1e-13)
    total += quadrature.adaptive(f, float(t_pts[-1]), math.inf, epsabs=1e-13)
    return total


# -- comparison ---------------------------------------------------------------

@dataclass(frozen=True)
class Comparison:
    l1: float
    sup: float
    mass_difference: float
    ks: float

    def as_dict(self) -> dict:
        return {"l1": self.l1, "sup": self.sup, "mass_difference": self.mass_difference, "ks": self.ks}


def _normalized_cdf(t, y):
    c = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))])
    return c / c[-1] if c[-1] > 0 else c


def compare(a: ArrivalDistribution, b: ArrivalDistribution) -> Comparison:
    """Distances between two densities on the overlap of their time supports."""
    lo = max(a.t_grid[0], b.t_grid[0])
    hi = min(a.t_grid[-1], b.t_grid[-1])
    if not hi > lo:
        raise QArrivalError("distributions have disjoint time supports")
    t = np.union1d(a.t_grid, b.t_grid)
    t = t[(t >= lo) & (t <= hi)]
    ya = np.interp(t, a.t_grid, a.density)
    yb = np.interp(t, b.t_grid, b.density)
    diff = np.abs(ya - yb)
    ks = float(np.max(np.abs(_normalized_cdf(t, ya) - _normalized_cdf(t, yb))))
    return Comparison(float(np.trapezoid(diff, t)), float(diff.max()),
                      abs(a.total_mass - b.total_mass), ks)
