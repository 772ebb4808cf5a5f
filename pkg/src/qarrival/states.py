"""
Analytic Gaussian superpositions and their exact free evolution.

Every state handled by the package is a finite sum

    psi_t(x) = sum_k c_k g_k(x, t)

of minimum-uncertainty Gaussian packets.  Free motion maps each packet to
a spreading Gaussian with a complex width, so the family is closed under
evolution and every quantity below has a closed form.  Packets are
evaluated in log space so that tails far from the centers do not
overflow or lose the phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import special

from .errors import ZeroNormError

__all__ = [
    "PhysicalConstants",
    "GaussianPacket",
    "WaveState",
    "TailProbability",
    "evaluate_position",
    "evaluate_position_derivative",
    "momentum_amplitude",
    "norm_squared",
    "normalize",
    "momentum_half_line_mass",
    "state_to_dict",
    "state_from_dict",
]


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError(f"hbar and mass must be positive, got {self.hbar}, {self.mass}")


@dataclass(frozen=True)
class GaussianPacket:
    """Minimum-uncertainty packet at t = 0.

    ``sigma_x`` is the standard deviation of the position distribution; the
    momentum standard deviation is then ``hbar / (2 sigma_x)``.
    """

    center_x0: float
    mean_momentum_p0: float
    sigma_x: float

    def __post_init__(self):
        if not self.sigma_x > 0:
            raise ValueError(f"sigma_x must be positive, got {self.sigma_x}")

    def sigma_p(self, hbar: float = 1.0) -> float:
        return hbar / (2.0 * self.sigma_x)


@dataclass(frozen=True)
class WaveState:
    """Immutable complex-weighted superposition of Gaussian packets."""

    packets: tuple[tuple[complex, GaussianPacket], ...]
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        packets = tuple((complex(c), g) for c, g in self.packets)
        if not packets:
            raise ValueError("a WaveState needs at least one packet")
        object.__setattr__(self, "packets", packets)

    @classmethod
    def from_packets(cls, packets: Iterable[tuple[complex, GaussianPacket]],
                     hbar: float = 1.0, mass: float = 1.0) -> "WaveState":
        return cls(tuple(packets), PhysicalConstants(hbar, mass))

    # parameter arrays, shape (K,)
    @cached_property
    def coefficients(self) -> np.ndarray:
        return np.array([c for c, _ in self.packets], dtype=complex)

    @cached_property
    def centers(self) -> np.ndarray:
        return np.array([g.center_x0 for _, g in self.packets], dtype=float)

    @cached_property
    def momenta(self) -> np.ndarray:
        return np.array([g.mean_momentum_p0 for _, g in self.packets], dtype=float)

    @cached_property
    def sigmas(self) -> np.ndarray:
        return np.array([g.sigma_x for _, g in self.packets], dtype=float)

    @property
    def sigma_ps(self) -> np.ndarray:
        return self.constants.hbar / (2.0 * self.sigmas)

    @property
    def hbar(self) -> float:
        return self.constants.hbar

    @property
    def mass(self) -> float:
        return self.constants.mass

    def __len__(self):
        return len(self.packets)

    def translated(self, dx: float) -> "WaveState":
        """Rigid shift psi(x) -> psi(x - dx) at t = 0."""
        # the packet phase is p0 (x - x0), so moving x0 is an exact translation
        return WaveState(
            tuple((c, GaussianPacket(g.center_x0 + dx, g.mean_momentum_p0, g.sigma_x))
                  for c, g in self.packets),
            self.constants,
        )

    def with_coefficients(self, coefficients: Sequence[complex]) -> "WaveState":
        if len(coefficients) != len(self.packets):
            raise ValueError("coefficient count does not match packet count")
        return WaveState(tuple((c, g) for c, (_, g) in zip(coefficients, self.packets)),
                         self.constants)

    def scaled(self, factor: complex) -> "WaveState":
        return self.with_coefficients(self.coefficients * factor)

    def envelope(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Centers and position standard deviations of every packet at time t."""
        centers = self.centers + self.momenta * t / self.mass
        tau = self.hbar * t / (2.0 * self.mass * self.sigmas**2)
        return centers, self.sigmas * np.sqrt(1.0 + tau**2)

    def support_window(self, t: float, n_sigma: float = 10.0) -> tuple[float, float]:
        centers, widths = self.envelope(t)
        return float(np.min(centers - n_sigma * widths)), float(np.max(centers + n_sigma * widths))

    def position_tail_bound(self, t: float, lo: float, hi: float) -> float:
        """Upper bound on the |psi_t|^2 mass outside [lo, hi].

        Uses the triangle inequality on the L2 norm restricted to the
        complement, so it stays valid when the packets overlap.
        """
        centers, widths = self.envelope(t)
        zl = (lo - centers) / (widths * math.sqrt(2.0))
        zh = (hi - centers) / (widths * math.sqrt(2.0))
        tails = 0.5 * special.erfc(-zl) + 0.5 * special.erfc(zh)
        return float(np.sum(np.abs(self.coefficients) * np.sqrt(tails)) ** 2)


# -- position representation -------------------------------------------------

def _log_components(state: WaveState, x, t):
    """Log amplitudes log g_k(x, t) and log-derivatives d/dx log g_k.

    Returned arrays have shape (K,) + broadcast(x, t).shape.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    hbar, m = state.hbar, state.mass
    shape = (-1,) + (1,) * max(x.ndim, t.ndim)
    x0 = state.centers.reshape(shape)
    p0 = state.momenta.reshape(shape)
    s = state.sigmas.reshape(shape)
    a = 1.0 + 1j * hbar * t / (2.0 * m * s**2)
    shifted = x - x0 - p0 * t / m
    log_g = (-0.25 * np.log(2.0 * np.pi * s**2) - 0.5 * np.log(a)
             - shifted**2 / (4.0 * s**2 * a)
             + 1j * p0 * (x - x0) / hbar - 1j * p0**2 * t / (2.0 * m * hbar))
    dlog_g = -shifted / (2.0 * s**2 * a) + 1j * p0 / hbar
    return log_g, dlog_g


def _scaled_sums(state: WaveState, x, t):
    """Return (log_scale, S, D) with psi = exp(log_scale) S and psi' = exp(log_scale) D."""
    log_g, dlog_g = _log_components(state, x, t)
    c = state.coefficients.reshape((-1,) + (1,) * (log_g.ndim - 1))
    log_scale = np.max(log_g.real, axis=0)
    w = c * np.exp(log_g - log_scale)
    return log_scale, np.sum(w, axis=0), np.sum(w * dlog_g, axis=0)


def evaluate_position(state: WaveState, x, t=0.0):
    """Wave function psi_t(x); broadcasts over ``x`` and ``t``."""
    log_scale, S, _ = _scaled_sums(state, x, t)
    return np.exp(log_scale) * S


def evaluate_position_derivative(state: WaveState, x, t=0.0):
    """Exact spatial derivative d psi_t / dx."""
    log_scale, _, D = _scaled_sums(state, x, t)
    return np.exp(log_scale) * D


def log_density_and_velocity(state: WaveState, x, t):
    """Natural log of |psi|^2 and the guidance velocity (hbar/m) Im(psi'/psi).

    The common magnitude cancels in the ratio, so the velocity stays finite
    wherever S does not vanish even if |psi|^2 underflows.
    """
    log_scale, S, D = _scaled_sums(state, x, t)
    absS2 = S.real**2 + S.imag**2
    with np.errstate(divide="ignore", invalid="ignore"):
        log_rho = 2.0 * log_scale + np.log(absS2)
        v = (state.hbar / state.mass) * (np.conj(S) * D).imag / absS2
    return log_rho, v


# -- momentum representation -------------------------------------------------

def momentum_amplitude(state: WaveState, p, t=0.0):
    """<p|psi_t> = psi~(p) exp(-i p^2 t / 2 m hbar)."""
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    hbar, m = state.hbar, state.mass
    shape = (-1,) + (1,) * max(p.ndim, t.ndim)
    x0 = state.centers.reshape(shape)
    p0 = state.momenta.reshape(shape)
    sp = state.sigma_ps.reshape(shape)
    c = state.coefficients.reshape(shape)
    log_g = -0.25 * np.log(2.0 * np.pi * sp**2) - (p - p0)**2 / (4.0 * sp**2) - 1j * p * x0 / hbar
    return np.sum(c * np.exp(log_g), axis=0) * np.exp(-1j * p**2 * t / (2.0 * m * hbar))


def _pair_gaussian_params(state: WaveState):
    """Exponent data for conj(g~_k) g~_l = exp(-A p^2 + B p + C), all pairs (K, K)."""
    hbar = state.hbar
    x0 = state.centers
    p0 = state.momenta
    sp = state.sigma_ps
    ak = 1.0 / (4.0 * sp**2)
    A = ak[:, None] + ak[None, :]
    B = (2.0 * ak * p0)[:, None] + (2.0 * ak * p0)[None, :] + 1j * (x0[:, None] - x0[None, :]) / hbar
    C = (-0.25 * np.log(2.0 * np.pi * sp**2))[:, None] + (-0.25 * np.log(2.0 * np.pi * sp**2))[None, :] \
        - (ak * p0**2)[:, None] - (ak * p0**2)[None, :]
    cc = np.conj(state.coefficients)[:, None] * state.coefficients[None, :]
    return A, B, C, cc


def _log_erfc(z):
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    pos = z.real > 0
    # erfc(z) = erfcx(z) exp(-z^2) keeps the far tail representable
    out[pos] = -z[pos]**2 + np.log(special.erfcx(z[pos]))
    out[~pos] = np.log(special.erfc(z[~pos]))
    return out


def _combine_logs(log_terms: np.ndarray) -> tuple[float, float]:
    """Sum exp(log_terms) (complex); return (value, log10 value) of its real part."""
    log_terms = log_terms.ravel()
    finite = np.isfinite(log_terms.real)
    if not np.any(finite):
        return 0.0, -math.inf
    log_terms = log_terms[finite]
    top = np.max(log_terms.real)
    total = np.sum(np.exp(log_terms - top)).real
    if total <= 0.0:
        return 0.0, -math.inf
    log_val = top + math.log(total)
    return math.exp(log_val), log_val / math.log(10.0)


class TailProbability(NamedTuple):
    probability: float
    log10: float


def momentum_half_line_mass(state: WaveState, sign: int = -1, cut: float = 0.0) -> TailProbability:
    """Exact int |psi~(p)|^2 dp over p < cut (sign=-1) or p > cut (sign=+1).

    Every pair term is a complex Gaussian integral over a half line,
    expressed with erfc and summed in log space.
    """
    A, B, C, cc = _pair_gaussian_params(state)
    mu = B / (2.0 * A)
    z = (cut - mu) * np.sqrt(A)
    if sign < 0:
        log_erf_part = _log_erfc(-z)
    else:
        log_erf_part = _log_erfc(z)
    with np.errstate(divide="ignore"):
        log_cc = np.log(cc.astype(complex))
    log_terms = log_cc + C + B**2 / (4.0 * A) + 0.5 * np.log(np.pi / A) - math.log(2.0) + log_erf_part
    value, log10 = _combine_logs(log_terms)
    return TailProbability(float(value), float(log10))


def norm_squared(state: WaveState) -> float:
    """<psi|psi> from the exact Gaussian overlap matrix."""
    A, B, C, cc = _pair_gaussian_params(state)
    overlaps = np.sqrt(np.pi / A) * np.exp(B**2 / (4.0 * A) + C)
    return max(float(np.sum(cc * overlaps).real), 0.0)


def overlap_matrix(state: WaveState) -> np.ndarray:
    A, B, C, _ = _pair_gaussian_params(state)
    return np.sqrt(np.pi / A) * np.exp(B**2 / (4.0 * A) + C)


def normalize(state: WaveState) -> WaveState:
    n2 = norm_squared(state)
    if not n2 > 0.0:
        raise ZeroNormError("cannot normalize a state with zero norm")
    return state.scaled(1.0 / math.sqrt(n2))


# -- plain-data form ----------------------------------------------------------

def state_to_dict(state: WaveState) -> dict:
    return {
        "hbar": state.hbar,
        "mass": state.mass,
        "packets": [
            {"weight_re": c.real, "weight_im": c.imag, "x0": g.center_x0,
             "p0": g.mean_momentum_p0, "sigma_x": g.sigma_x}
            for c, g in state.packets
        ],
    }


def state_from_dict(data: dict) -> WaveState:
    packets = [
        (complex(float(p["weight_re"]), float(p.get("weight_im", 0.0))),
         GaussianPacket(float(p["x0"]), float(p["p0"]), float(p["sigma_x"])))
        for p in data["packets"]
    ]
    return WaveState.from_packets(packets, hbar=float(data.get("hbar", 1.0)),
                                  mass=float(data.get("mass", 1.0)))
