import math

import numpy as np
import pytest
from scipy import stats

from qarrival.bohmian import (
    EnsembleSpec,
    ensemble_first_arrivals,
    integrate_ensemble,
    integrate_trajectory,
    sample_initial_positions,
    velocity,
)
from qarrival.errors import NearNodeError
from qarrival.observables import density
from qarrival.states import GaussianPacket, WaveState, norm_squared


def exact_path(q0, t, x0, p0, s):
    # single packet: Q(t) = x_c(t) + (q0 - x0) sqrt(1 + tau^2)
    tau = t / (2 * s * s)
    return x0 + p0 * t + (q0 - x0) * np.sqrt(1 + tau * tau)


def test_single_packet_trajectory_closed_form():
    s = WaveState.from_packets([(1.0, GaussianPacket(-5.0, 1.5, 1.0))])
    t_eval = np.linspace(0, 10, 51)
    for q0 in (-6.3, -5.0, -2.0):
        tr = integrate_trajectory(s, q0, (0.0, 10.0), t_eval=t_eval)
        assert tr.status == "completed"
        assert np.allclose(tr.positions, exact_path(q0, t_eval, -5.0, 1.5, 1.0), atol=1e-6)


def test_crossing_time_closed_form():
    s = WaveState.from_packets([(1.0, GaussianPacket(-5.0, 1.5, 1.0))])
    q0 = -5.5
    tr = integrate_trajectory(s, q0, (0.0, 10.0))
    assert len(tr.crossings) == 1
    c = tr.first_crossing
    assert c.direction == "rightward" and c.ordinal == 1
    assert exact_path(q0, c.t, -5.0, 1.5, 1.0) == pytest.approx(0.0, abs=1e-7)


def test_backward_in_time_returns():
    s = WaveState.from_packets([(0.8, GaussianPacket(-5.0, 1.5, 1.0)), (0.6, GaussianPacket(-9.0, 3.0, 1.0))])
    fwd = integrate_trajectory(s, -6.0, (0.0, 4.0))
    back = integrate_trajectory(s, fwd.positions[-1], (4.0, 0.0))
    assert back.positions[-1] == pytest.approx(-6.0, abs=1e-6)
    # direction is the sign of dQ/dt, so the same crossings come back in reverse order
    assert [(round(c.t, 6), c.direction) for c in back.crossings] == [
        (round(c.t, 6), c.direction) for c in reversed(fwd.crossings)]


def test_velocity_floor():
    s = WaveState.from_packets([(1.0, GaussianPacket(0.0, 1.0, 1.0))])
    assert velocity(s, 0.5, 0.0) == pytest.approx(1.0)
    with pytest.raises(NearNodeError):
        velocity(s, 60.0, 0.0)
    with pytest.raises(NearNodeError):
        integrate_trajectory(s, 60.0, (0.0, 1.0))


def test_sampler_matches_initial_density(appendix_state):
    q = sample_initial_positions(appendix_state, EnsembleSpec(5000, seed=3))
    assert np.all(np.diff(q) >= 0)
    # mixture CDF is exact here: packet overlap at t=0 is ~exp(-16)
    cdf = lambda x: 0.5 * stats.norm.cdf(x, -10, 3) + 0.5 * stats.norm.cdf(x, -34, 3)
    assert stats.kstest(q, cdf).statistic < 1.36 / math.sqrt(q.size)


def test_sampler_random_mode_and_seed(appendix_state):
    a = sample_initial_positions(appendix_state, EnsembleSpec(400, seed=9, sampling="random"))
    b = sample_initial_positions(appendix_state, EnsembleSpec(400, seed=9, sampling="random"))
    c = sample_initial_positions(appendix_state, EnsembleSpec(400, seed=10, sampling="random"))
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_sampler_handles_interference():
    # overlapping packets with a relative phase: rejection step must correct the mixture
    s = WaveState.from_packets([(1.0, GaussianPacket(-1.0, 0.0, 1.0)), (1.0j, GaussianPacket(1.0, 2.0, 1.0))])
    q = sample_initial_positions(s, EnsembleSpec(4000, seed=1))
    xs = np.linspace(-12, 12, 20001)
    c = np.cumsum(density(s, xs, 0.0)) * (xs[1] - xs[0]) / norm_squared(s)
    d = stats.kstest(q, lambda x: np.interp(x, xs, c)).statistic
    assert d < 1.63 / math.sqrt(q.size)


def test_spec_validation():
    with pytest.raises(ValueError):
        EnsembleSpec(0)
    with pytest.raises(ValueError):
        EnsembleSpec(10, sampling="sobol")


def test_ensemble_threads_identical(appendix_state):
    q0 = sample_initial_positions(appendix_state, EnsembleSpec(300, seed=2))
    a = integrate_ensemble(appendix_state, q0, (0.0, 12.0), workers=1)
    b = integrate_ensemble(appendix_state, q0, (0.0, 12.0), workers=3)
    assert np.array_equal(a.final_q, b.final_q)
    assert a.crossings == b.crossings


def test_first_arrivals_conventions(appendix_state):
    fa = ensemble_first_arrivals(appendix_state, EnsembleSpec(500, seed=4), 0.0, (0.0, 12.0))
    anyd = fa.arrival_times("first-any-direction")
    right = fa.arrival_times("first-rightward-only")
    assert fa.n == 500 and fa.n_aborted == 0
    assert anyd.size >= right.size
    assert np.all((anyd >= 0) & (anyd <= 12))
    with pytest.raises(ValueError):
        fa.arrival_times("last")
    pairs = fa.pairs()
    assert len(pairs) == 500 and pairs[0][0] == fa.q0[0]


def test_velocity_examples(appendix_state):
    s = WaveState.from_packets([(1.0, GaussianPacket(2.0, 1.7, 0.9))])
    assert velocity(s, 2.0, 0.0) == pytest.approx(1.7)
    real = WaveState.from_packets([(1.0, GaussianPacket(0.0, 0.0, 1.0)), (0.5, GaussianPacket(2.0, 0.0, 1.5))])
    assert np.allclose(velocity(real, np.linspace(-3, 3, 13), 0.0), 0.0, atol=1e-15)
    x = np.linspace(-10, 10, 2001)
    assert velocity(appendix_state, x, 5.2).min() < 0


def test_peak_rides_classical_path():
    s = WaveState.from_packets([(1.0, GaussianPacket(-4.0, 2.0, 1.0))])
    tr = integrate_trajectory(s, -4.0, (0.0, 5.0), detector_x=-4.0 + 2.0 * 4.0)
    assert len(tr.crossings) == 1 and tr.crossings[0].direction == "rightward"
    assert tr.crossings[0].t == pytest.approx(4.0, abs=1e-7)


def test_crossing_events_are_consistent(appendix_state):
    q0 = sample_initial_positions(appendix_state, EnsembleSpec(400, seed=21))
    run = integrate_ensemble(appendix_state, q0, (0.0, 12.0), 0.0)
    multi = 0
    for i, events in enumerate(run.crossings):
        assert [e.ordinal for e in events] == list(range(1, len(events) + 1))
        assert all(a.t < b.t for a, b in zip(events, events[1:]))
        assert all(a.direction != b.direction for a, b in zip(events, events[1:]))
        if len(events) >= 2:
            multi += 1
            # the dense-output crossing time puts the path on the detector
            tr = integrate_trajectory(appendix_state, q0[i], (0.0, 12.0), t_eval=[0.0] + [e.t for e in events])
            assert np.allclose(tr.positions[1:], 0.0, atol=1e-6)
    assert multi >= 1


def test_dense_samples_follow_velocity_field(appendix_state):
    t_eval = np.linspace(0, 12, 24001)
    tr = integrate_trajectory(appendix_state, -11.0, (0.0, 12.0), t_eval=t_eval)
    q, t = tr.positions, tr.times
    h = t[1] - t[0]
    slope = (q[:-4] - 8 * q[1:-3] + 8 * q[3:-1] - q[4:]) / (12 * h)
    v = velocity(appendix_state, q[2:-2], t[2:-2])
    assert np.max(np.abs(slope - v) / np.maximum(np.abs(v), 1.0)) < 1e-4


def test_sampler_moments_single_packet():
    s = WaveState.from_packets([(1.0, GaussianPacket(3.0, 1.0, 2.0))])
    n = 100_000
    q = sample_initial_positions(s, EnsembleSpec(n, seed=5, sampling="random"))
    assert abs(q.mean() - 3.0) < 4 * 2.0 / math.sqrt(n)
    assert q.std() == pytest.approx(2.0, rel=0.02)


def test_sampler_occupancy_two_packets(appendix_state):
    q = sample_initial_positions(appendix_state, EnsembleSpec(100_000, seed=6, sampling="random"))
    assert np.mean(q > -22.0) == pytest.approx(0.5, abs=0.01)


def test_first_arrivals_fast_and_receding():
    fast = WaveState.from_packets([(1.0, GaussianPacket(-20.0, 5.0, 1.0))])
    fa = ensemble_first_arrivals(fast, EnsembleSpec(2000, seed=1), 0.0, (0.0, 12.0))
    times = fa.arrival_times()
    assert times.size == 2000
    assert times.mean() == pytest.approx(20.0 / 5.0, rel=0.02)
    away = WaveState.from_packets([(1.0, GaussianPacket(-20.0, -5.0, 1.0))])
    fb = ensemble_first_arrivals(away, EnsembleSpec(500, seed=1), 0.0, (0.0, 2.0))
    assert fb.arrival_times().size == 0
