"""Density, probability current and the backflow set of a free state."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import quadrature
from .errors import SupportError
from .states import (
    TailProbability,
    WaveState,
    evaluate_position,
    evaluate_position_derivative,
    momentum_half_line_mass,
)

__all__ = [
    "CurrentSample",
    "BackflowReport",
    "GridSpec",
    "density",
    "current",
    "current_sample",
    "continuity_residual",
    "current_via_operator",
    "prob_negative_momentum",
    "prob_positive_momentum",
    "mass_left_of",
    "backflow_report",
]


@dataclass(frozen=True)
class CurrentSample:
    x: float
    t: float
    rho: float
    j: float


@dataclass(frozen=True)
class BackflowReport:
    t: float
    negative_intervals: list[tuple[float, float]]
    prob_negative_velocity: float
    window: tuple[float, float] = (-math.inf, math.inf)

    @property
    def log10_probability(self) -> float:
        if self.prob_negative_velocity <= 0.0:
            return -math.inf
        return math.log10(self.prob_negative_velocity)

    def to_record(self) -> dict:
        return {
            "t": self.t,
            "intervals": [list(iv) for iv in self.negative_intervals],
            "probability": self.prob_negative_velocity,
            "log10_probability": self.log10_probability,
        }


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic position grid [x_min, x_max) with n points."""

    x_min: float
    x_max: float
    n: int = 4096

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.n >= 8):
            raise ValueError(f"bad grid {self}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def points(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @classmethod
    def around(cls, state: WaveState, t: float, n: int = 4096, n_sigma: float = 12.0) -> "GridSpec":
        lo, hi = state.support_window(t, n_sigma)
        return cls(lo, hi, n)


def density(state: WaveState, x, t=0.0):
    psi = evaluate_position(state, x, t)
    return psi.real**2 + psi.imag**2


def current(state: WaveState, x, t=0.0):
    """Probability current (hbar/m) Im(conj(psi) dpsi/dx)."""
    psi = evaluate_position(state, x, t)
    dpsi = evaluate_position_derivative(state, x, t)
    return (state.hbar / state.mass) * (np.conj(psi) * dpsi).imag


def current_sample(state: WaveState, x: float, t: float) -> CurrentSample:
    return CurrentSample(float(x), float(t), float(density(state, x, t)), float(current(state, x, t)))


def _central(f, h):
    return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12.0 * h)


def continuity_residual(state: WaveState, x, t, h_x: float = 1e-4, h_t: float = 1e-4,
                        eps: float = 1e-10):
    """Relative residual |d_t rho + d_x j| / max(|d_t rho|, |d_x j|, eps).

    Both derivatives are fourth-order central differences of the analytic
    density and current, so this is an independent check of the evaluators.
    """
    if not (h_x > 0 and h_t > 0):
        raise ValueError("finite-difference steps must be positive")
    drho_dt = _central(lambda s: density(state, x, t + s), h_t)
    dj_dx = _central(lambda s: current(state, x + s, t), h_x)
    scale = np.maximum(np.maximum(np.abs(drho_dt), np.abs(dj_dx)), eps)
    return np.abs(drho_dt + dj_dx) / scale


def _interpolation_vector(grid: GridSpec, x: float) -> np.ndarray:
    """Grid vector e with dx * sum(conj(e) * f) equal to the trigonometric interpolant of f at x."""
    n = grid.n
    k = 2.0 * np.pi * np.fft.fftfreq(n, grid.dx)
    a = np.exp(1j * k * (x - grid.x_min))
    if n % 2 == 0:
        a[n // 2] = 0.0
    kernel = np.fft.fft(a) / n
    return np.conj(kernel) / grid.dx


def current_via_operator(state: WaveState, x: float, t: float, grid: GridSpec | None = None,
                         max_outside: float = 1e-10) -> float:
    """Current as the expectation of (|x><x| p + p |x><x|) / 2m on a grid.

    The state is sampled on ``grid``; the momentum operator acts spectrally
    and |x> is the band-limited delta at ``x``.  Serves as a cross-check of
    :func:`current`, not as a production path.
    """
    if grid is None:
        grid = GridSpec.around(state, t)
    outside = state.position_tail_bound(t, grid.x_min, grid.x_max)
    if outside >= max_outside:
        raise SupportError(f"grid [{grid.x_min}, {grid.x_max}] misses {outside:.3g} of the norm")
    xs = grid.points
    psi = evaluate_position(state, xs, t)
    k = 2.0 * np.pi * np.fft.fftfreq(grid.n, grid.dx)
    if grid.n % 2 == 0:
        k[grid.n // 2] = 0.0

    def p_op(f):
        return np.fft.ifft(state.hbar * k * np.fft.fft(f))

    def braket(f, g):
        return grid.dx * np.vdot(f, g)

    ex = _interpolation_vector(grid, x)
    term1 = braket(psi, ex) * braket(ex, p_op(psi))
    term2 = braket(psi, p_op(ex)) * braket(ex, psi)
    return float(((term1 + term2) / (2.0 * state.mass)).real)


def prob_negative_momentum(state: WaveState) -> TailProbability:
    """Exact P(p < 0) with its log10, robust far below double-precision epsilon."""
    return momentum_half_line_mass(state, -1)


def prob_positive_momentum(state: WaveState) -> TailProbability:
    return momentum_half_line_mass(state, +1)


def _density_breakpoints(state: WaveState, t: float, lo: float, hi: float) -> list[float]:
    centers, widths = state.envelope(t)
    pts = np.concatenate([centers, centers - 3 * widths, centers + 3 * widths])
    return sorted(float(p) for p in pts if lo < p < hi)


def integrate_density(state: WaveState, t: float, lo: float, hi: float) -> float:
    """Adaptive integral of |psi_t|^2 over [lo, hi], splitting at the packet envelopes."""
    pts = [lo] + _density_breakpoints(state, t, lo, hi) + [hi]
    return sum(quadrature.adaptive(lambda x: float(density(state, x, t)), a, b)
               for a, b in zip(pts[:-1], pts[1:]))


def mass_left_of(state: WaveState, x_d: float, t: float, n_sigma: float = 12.0) -> float:
    """P(x < x_d) at time t."""
    lo, hi = state.support_window(t, n_sigma)
    if x_d <= lo:
        return 0.0
    return integrate_density(state, t, lo, min(x_d, hi))


def _bisect_roots(f, a: np.ndarray, b: np.ndarray, tol: float) -> np.ndarray:
    """Vectorized bisection for sign changes of f on each bracket [a_i, b_i]."""
    a = a.astype(float).copy()
    b = b.astype(float).copy()
    fa = f(a)
    while np.max(b - a, initial=0.0) > tol:
        mid = 0.5 * (a + b)
        fm = f(mid)
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left, mid, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, mid)
    return 0.5 * (a + b)


def backflow_report(state: WaveState, t: float, x_window: tuple[float, float] | None = None,
                    n_scan: int = 2048, root_tol: float = 1e-9,
                    max_outside: float = 1e-10) -> BackflowReport:
    """Locate K_t = {x : j(x, t) < 0} and integrate the density over it.

    The current is scanned on ``n_scan`` points of the window, every sign
    change is refined by bisection, and the density is integrated over
    each negative interval adaptively.
    """
    if n_scan < 16:
        raise ValueError("n_scan must be at least 16")
    if x_window is None:
        x_window = state.support_window(t, 10.0)
    lo, hi = map(float, x_window)
    outside = state.position_tail_bound(t, lo, hi)
    if outside >= max_outside:
        raise SupportError(f"window [{lo}, {hi}] misses {outside:.3g} of the norm at t={t}")

    xs = np.linspace(lo, hi, n_scan)
    js = current(state, xs, t)
    neg = js < 0.0
    change = np.nonzero(neg[1:] != neg[:-1])[0]
    roots = _bisect_roots(lambda x: current(state, x, t), xs[change], xs[change + 1], root_tol)

    starts, ends = [], []
    if neg[0]:
        starts.append(lo)
    for idx, r in zip(change, roots):
        (starts if neg[idx + 1] else ends).append(float(r))
    if neg[-1]:
        ends.append(hi)
    intervals = list(zip(starts, ends))
    prob = sum(integrate_density(state, t, a, b) for a, b in intervals)
    return BackflowReport(float(t), intervals, min(max(prob, 0.0), 1.0), (lo, hi))
