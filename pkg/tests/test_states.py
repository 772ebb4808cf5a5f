import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from qarrival.errors import ZeroNormError
from qarrival.states import (
    GaussianPacket,
    PhysicalConstants,
    WaveState,
    evaluate_position,
    evaluate_position_derivative,
    momentum_amplitude,
    momentum_half_line_mass,
    norm_squared,
    normalize,
    state_from_dict,
    state_to_dict,
)

packets = st.builds(
    lambda re, im, x0, p0, s: (complex(re, im), GaussianPacket(x0, p0, s)),
    st.floats(-2, 2), st.floats(-2, 2), st.floats(-20, 20), st.floats(-5, 5), st.floats(0.3, 4),
)
states = st.lists(packets, min_size=1, max_size=4).map(WaveState.from_packets)


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        GaussianPacket(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        PhysicalConstants(hbar=-1.0)
    with pytest.raises(ValueError):
        WaveState.from_packets([], hbar=1.0)


def test_single_packet_is_normalized():
    s = WaveState.from_packets([(1.0, GaussianPacket(3.0, -1.0, 0.7))])
    assert norm_squared(s) == pytest.approx(1.0, abs=1e-14)
    val, _ = integrate.quad(lambda x: abs(evaluate_position(s, x, 2.5)) ** 2, -60, 60, points=[0.5], limit=200)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_appendix_norm_matches_quadrature(appendix_state):
    val, _ = integrate.quad(lambda x: abs(evaluate_position(appendix_state, x, 0.0)) ** 2,
                            -80, 40, points=[-34, -10], limit=400)
    assert norm_squared(appendix_state) == pytest.approx(val, abs=1e-12)
    assert abs(norm_squared(appendix_state) - 1.0) < 1e-12


def test_normalize_zero_state():
    s = WaveState.from_packets([(0.0, GaussianPacket(0.0, 0.0, 1.0))])
    with pytest.raises(ZeroNormError):
        normalize(s)
    # exact cancellation of two identical packets
    g = GaussianPacket(1.0, 2.0, 1.5)
    with pytest.raises(ZeroNormError):
        normalize(WaveState.from_packets([(1.0, g), (-1.0, g)]))


def _d5(f, h):
    return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h)


def test_free_schrodinger_equation(appendix_state):
    # i psi_t = -(1/2) psi_xx, both sides by five-point central differences
    x = np.linspace(-40, 30, 57)
    t, h = 3.7, 1e-3
    psi_t = _d5(lambda s: evaluate_position(appendix_state, x, t + s), h)
    psi_xx = _d5(lambda s: evaluate_position_derivative(appendix_state, x + s, t), h)
    resid = np.abs(1j * psi_t + 0.5 * psi_xx)
    assert resid.max() < 1e-7


def test_derivative_matches_finite_difference(appendix_state):
    x = np.linspace(-50, 20, 31)
    h = 1e-5
    fd = (evaluate_position(appendix_state, x + h, 1.3) - evaluate_position(appendix_state, x - h, 1.3)) / (2 * h)
    assert np.allclose(evaluate_position_derivative(appendix_state, x, 1.3), fd, atol=1e-9)


def test_momentum_amplitude_is_fourier_transform():
    s = WaveState.from_packets([(0.6, GaussianPacket(-4.0, 1.5, 1.2)), (0.8j, GaussianPacket(2.0, -0.5, 0.8))])
    for p in (-1.0, 0.3, 1.7):
        for t in (0.0, 2.0):
            re = integrate.quad(lambda x: (evaluate_position(s, x, t) * np.exp(-1j * p * x)).real, -60, 60, limit=400)[0]
            im = integrate.quad(lambda x: (evaluate_position(s, x, t) * np.exp(-1j * p * x)).imag, -60, 60, limit=400)[0]
            expected = (re + 1j * im) / math.sqrt(2 * math.pi)
            assert momentum_amplitude(s, p, t) == pytest.approx(expected, abs=1e-10)


def test_momentum_width_uses_sigma_as_std():
    g = GaussianPacket(0.0, 2.0, 3.0)
    assert g.sigma_p() == pytest.approx(1 / 6)


def test_negative_momentum_probability_oracle(appendix_state):
    # mpmath: log10(0.5 Phi(-12) + 0.5 Phi(-36))
    tail = momentum_half_line_mass(appendix_state, -1)
    assert tail.log10 == pytest.approx(-33.05146915685584, abs=1e-9)
    assert tail.probability == pytest.approx(10 ** -33.05146915685584, rel=1e-8)


def test_half_line_mass_matches_quadrature():
    s = normalize(WaveState.from_packets([(1.0, GaussianPacket(-2.0, 0.5, 1.0)), (0.5 - 0.3j, GaussianPacket(3.0, -0.4, 0.6))]))
    f = lambda p: abs(momentum_amplitude(s, p)) ** 2
    val = integrate.quad(f, -20, 0.2, limit=200)[0]
    assert momentum_half_line_mass(s, -1, cut=0.2).probability == pytest.approx(val, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(states)
def test_half_lines_sum_to_norm(s):
    n2 = norm_squared(s)
    if n2 < 1e-6:
        return
    neg = momentum_half_line_mass(s, -1).probability
    pos = momentum_half_line_mass(s, +1).probability
    assert neg + pos == pytest.approx(n2, rel=1e-9, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(states)
def test_normalize_gives_unit_norm(s):
    if norm_squared(s) < 1e-6:
        return
    assert norm_squared(normalize(s)) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(states, st.floats(-30, 30), st.floats(0, 10))
def test_translation_covariance(s, dx, t):
    x = np.linspace(-10, 10, 7)
    a = evaluate_position(s.translated(dx), x + dx, t)
    b = evaluate_position(s, x, t)
    assert np.allclose(a, b, rtol=1e-9, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(states)
def test_dict_round_trip_is_exact(s):
    back = state_from_dict(state_to_dict(s))
    assert back == s
    assert state_to_dict(back) == state_to_dict(s)


def test_far_tail_keeps_phase():
    # log-space evaluation must not underflow to 0 where |psi|^2 ~ 1e-200
    s = WaveState.from_packets([(1.0, GaussianPacket(0.0, 1.0, 1.0))])
    v = evaluate_position(s, 42.0, 0.0)
    assert v != 0 and np.isfinite(v)
    assert math.log(abs(v)) == pytest.approx(-0.25 * math.log(2 * math.pi) - 42.0**2 / 4, rel=1e-12)
