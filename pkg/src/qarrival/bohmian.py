"""
Bohmian trajectories of free Gaussian superpositions.

Positions move with the guidance velocity v = j / |psi|^2.  Trajectories are
integrated in batches (see :mod:`qarrival.integrator`) and every passage
through the detector position is recorded with its direction.  Initial
positions are drawn from |psi_0|^2 (quantum equilibrium).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import special

from . import integrator
from .errors import EnsembleAbortError, NearNodeError, SamplingError, StepLimitError
from .observables import density
from .states import WaveState, log_density_and_velocity, norm_squared

__all__ = [
    "CrossingEvent",
    "Trajectory",
    "EnsembleSpec",
    "EnsembleRun",
    "FirstArrivals",
    "RHO_FLOOR",
    "velocity",
    "integrate_trajectory",
    "integrate_ensemble",
    "sample_initial_positions",
    "ensemble_first_arrivals",
]

RHO_FLOOR = 1e-300
RTOL, ATOL = 1e-8, 1e-10
MAX_ABORT_FRACTION = 0.01


@dataclass(frozen=True)
class CrossingEvent:
    t: float
    direction: Literal["leftward", "rightward"]
    ordinal: int


@dataclass
class Trajectory:
    initial_position: float
    times: np.ndarray
    positions: np.ndarray
    crossings: list[CrossingEvent] = field(default_factory=list)
    status: str = "completed"

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.positions.tolist()))

    @property
    def first_crossing(self) -> CrossingEvent | None:
        return self.crossings[0] if self.crossings else None


@dataclass(frozen=True)
class EnsembleSpec:
    n_trajectories: int
    seed: int = 0
    sampling: Literal["stratified", "random"] = "stratified"

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.sampling not in ("stratified", "random"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")


def velocity(state: WaveState, x, t, rho_floor: float = RHO_FLOOR):
    """Guidance velocity j / |psi|^2.

    Raises NearNodeError where the density is below ``rho_floor``; the
    caller should flag the trajectory rather than trust the value there.
    """
    log_rho, v = log_density_and_velocity(state, x, t)
    bad = ~(log_rho >= math.log(rho_floor)) | ~np.isfinite(v)
    if np.any(bad):
        raise NearNodeError(f"density below {rho_floor:g} at {np.count_nonzero(bad)} point(s)")
    return v


def _guidance_rhs(state: WaveState, rho_floor: float):
    log_floor = math.log(rho_floor)

    def rhs(t, y):
        log_rho, v = log_density_and_velocity(state, y, t)
        return v, log_rho >= log_floor

    return rhs


def _events(raw: list[tuple[float, int]]) -> list[CrossingEvent]:
    return [CrossingEvent(t, "rightward" if d > 0 else "leftward", k + 1)
            for k, (t, d) in enumerate(raw)]


def integrate_trajectory(state: WaveState, q0: float, t_span: tuple[float, float],
                         detector_x: float = 0.0, tol: float = RTOL, atol: float = ATOL,
                         t_eval=None, max_steps: int = 200_000,
                         domain: tuple[float, float] | None = None,
                         rho_floor: float = RHO_FLOOR) -> Trajectory:
    """Integrate one Bohmian path over ``t_span`` and record detector crossings.

    Without ``t_eval`` the accepted integrator steps are returned as
    samples.  A near-node abort returns the partial path with status
    ``aborted_near_node``; exhausting ``max_steps`` raises StepLimitError.
    """
    t0, t1 = map(float, t_span)
    if not log_density_and_velocity(state, q0, t0)[0] >= math.log(rho_floor):
        raise NearNodeError(f"initial position {q0} lies where the density is below {rho_floor:g}")
    res = integrator.integrate_batch(
        _guidance_rhs(state, rho_floor), t0, [q0], t1, rtol=tol, atol=atol, max_steps=max_steps,
        t_eval=t_eval, level=detector_x, domain=domain, record_steps=t_eval is None)
    status = int(res.status[0])
    if status == integrator.STEP_LIMIT:
        raise StepLimitError(f"trajectory from q0={q0} exceeded {max_steps} steps")
    if t_eval is None:
        times, positions = res.steps[0]
    else:
        times = np.asarray(t_eval, dtype=float)
        positions = res.y_eval[:, 0]
        keep = np.isfinite(positions)
        times, positions = times[keep], positions[keep]
    return Trajectory(float(q0), times, positions, _events(res.crossings[0]),
                      integrator.STATUS_NAMES[status])


@dataclass
class EnsembleRun:
    """Result of integrating many trajectories at once."""

    q0: np.ndarray
    status: np.ndarray          # integrator status codes
    final_t: np.ndarray
    final_q: np.ndarray
    n_steps: np.ndarray
    crossings: list[list[CrossingEvent]]
    t_eval: np.ndarray | None = None
    positions: np.ndarray | None = None   # (len(t_eval), n)

    @property
    def n_aborted(self) -> int:
        return int(np.count_nonzero((self.status == integrator.NEAR_NODE)
                                    | (self.status == integrator.STEP_LIMIT)))

    def status_names(self) -> list[str]:
        return [integrator.STATUS_NAMES[int(s)] for s in self.status]

    def trajectory(self, i: int) -> Trajectory:
        if self.positions is None:
            times = np.array([self.final_t[i]])
            pos = np.array([self.final_q[i]])
        else:
            keep = np.isfinite(self.positions[:, i])
            times, pos = self.t_eval[keep], self.positions[keep, i]
        return Trajectory(float(self.q0[i]), times, pos, self.crossings[i],
                          integrator.STATUS_NAMES[int(self.status[i])])


def integrate_ensemble(state: WaveState, q0, t_span: tuple[float, float], detector_x: float | None = 0.0,
                       t_eval=None, tol: float = RTOL, atol: float = ATOL, max_steps: int = 200_000,
                       rho_floor: float = RHO_FLOOR, workers: int = 1) -> EnsembleRun:
    """Integrate every initial position in ``q0``; members are independent.

    With ``workers > 1`` the batch is split into contiguous chunks run on a
    thread pool; results are merged back in input order.
    """
    q0 = np.asarray(q0, dtype=float).ravel()
    t0, t1 = map(float, t_span)
    rhs = _guidance_rhs(state, rho_floor)

    def run(chunk):
        return integrator.integrate_batch(rhs, t0, chunk, t1, rtol=tol, atol=atol, max_steps=max_steps,
                                          t_eval=t_eval, level=detector_x)

    if workers > 1 and q0.size > workers:
        chunks = np.array_split(q0, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(q0)]

    status = np.concatenate([p.status for p in parts])
    crossings = [_events(c) for p in parts for c in p.crossings]
    positions = None if t_eval is None else np.concatenate([p.y_eval for p in parts], axis=1)
    return EnsembleRun(
        q0=q0, status=status,
        final_t=np.concatenate([p.t for p in parts]),
        final_q=np.concatenate([p.y for p in parts]),
        n_steps=np.concatenate([p.n_steps for p in parts]),
        crossings=crossings,
        t_eval=None if t_eval is None else np.asarray(t_eval, dtype=float),
        positions=positions,
    )


# -- quantum-equilibrium sampling --------------------------------------------

def _allocate(weights: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder split of n draws according to weights."""
    raw = weights * n
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _mixture_density(state: WaveState, x) -> np.ndarray:
    w = np.abs(state.coefficients) ** 2
    w = w / w.sum()
    z = (np.asarray(x)[None, :] - state.centers[:, None]) / state.sigmas[:, None]
    g = np.exp(-0.5 * z**2) / (math.sqrt(2 * math.pi) * state.sigmas[:, None])
    return np.sum(w[:, None] * g, axis=0)


def _rejection_bound(state: WaveState, norm: float) -> float:
    lo, hi = state.support_window(0.0, 8.0)
    xs = np.linspace(lo, hi, 20001)
    q = _mixture_density(state, xs)
    rho = density(state, xs, 0.0) / norm
    mask = q > 1e-300
    return float(np.max(rho[mask] / q[mask])) * 1.02


def sample_initial_positions(state: WaveState, spec: EnsembleSpec, min_efficiency: float = 0.05) -> np.ndarray:
    """Draw ``spec.n_trajectories`` positions from |psi_0|^2, sorted ascending.

    Proposals come from the mixture sum_k |c_k|^2 |g_k|^2 (per-packet
    inverse-CDF, stratified or plain), and a rejection step against the
    exact density removes the bias from packet overlap and interference.
    """
    rng = np.random.default_rng(spec.seed)
    norm = norm_squared(state)
    weights = np.abs(state.coefficients) ** 2
    weights = weights / weights.sum()
    bound = _rejection_bound(state, norm)
    if 1.0 / bound < min_efficiency:
        raise SamplingError(f"rejection efficiency {1.0 / bound:.3g} below {min_efficiency}")

    accepted: list[np.ndarray] = []
    need = spec.n_trajectories
    for _ in range(200):
        if need <= 0:
            break
        if spec.sampling == "stratified":
            counts = _allocate(weights, need)
        else:
            counts = rng.multinomial(need, weights)
        props = []
        for k, nk in enumerate(counts):
            if nk == 0:
                continue
            if spec.sampling == "stratified":
                u = (np.arange(nk) + rng.random(nk)) / nk
            else:
                u = rng.random(nk)
            u = np.clip(u, 1e-300, 1 - 1e-16)
            props.append(state.centers[k] + state.sigmas[k] * special.ndtri(u))
        x = np.concatenate(props)
        ratio = density(state, x, 0.0) / norm / (bound * _mixture_density(state, x))
        keep = rng.random(x.size) < ratio
        accepted.append(x[keep])
        need -= int(keep.sum())
    else:
        raise SamplingError("rejection sampling did not converge")
    out = np.concatenate(accepted)[: spec.n_trajectories]
    return np.sort(out)


# -- first arrivals ----------------------------------------------------------

@dataclass
class FirstArrivals:
    """Per-trajectory first detector crossing (NaN when none in the span)."""

    q0: np.ndarray
    first_time: np.ndarray
    first_direction: np.ndarray          # +1 rightward, -1 leftward, 0 none
    first_rightward_time: np.ndarray
    n_crossings: np.ndarray
    aborted: np.ndarray                  # bool
    detector_x: float
    t_span: tuple[float, float]

    @property
    def n(self) -> int:
        return self.q0.size

    @property
    def n_aborted(self) -> int:
        return int(np.count_nonzero(self.aborted))

    def pairs(self) -> list[tuple[float, float | None]]:
        return [(float(q), None if math.isnan(t) else float(t))
                for q, t in zip(self.q0, self.first_time)]

    def arrival_times(self, convention: str = "first-any-direction") -> np.ndarray:
        times = self.first_time if convention == "first-any-direction" else self.first_rightward_time
        if convention not in ("first-any-direction", "first-rightward-only"):
            raise ValueError(f"unknown convention {convention!r}")
        return times[np.isfinite(times)]


def first_arrivals_from_run(run: EnsembleRun, detector_x: float, t_span) -> FirstArrivals:
    n = run.q0.size
    first_t = np.full(n, np.nan)
    first_dir = np.zeros(n, dtype=int)
    first_right = np.full(n, np.nan)
    n_cross = np.zeros(n, dtype=int)
    for i, events in enumerate(run.crossings):
        n_cross[i] = len(events)
        if events:
            first_t[i] = events[0].t
            first_dir[i] = 1 if events[0].direction == "rightward" else -1
            right = next((e.t for e in events if e.direction == "rightward"), None)
            if right is not None:
                first_right[i] = right
    aborted = (run.status == integrator.NEAR_NODE) | (run.status == integrator.STEP_LIMIT)
    return FirstArrivals(run.q0, first_t, first_dir, first_right, n_cross, aborted,
                         float(detector_x), tuple(map(float, t_span)))


def ensemble_first_arrivals(state: WaveState, spec: EnsembleSpec, detector_x: float = 0.0,
                            t_span: tuple[float, float] = (0.0, 12.0), workers: int = 1,
                            max_abort_fraction: float = MAX_ABORT_FRACTION,
                            tol: float = RTOL) -> FirstArrivals:
    """Sample an equilibrium ensemble and record each member's first crossing.

    Individual aborts are recorded, not raised; the call fails only when
    more than ``max_abort_fraction`` of the ensemble aborted.
    """
    q0 = sample_initial_positions(state, spec)
    run = integrate_ensemble(state, q0, t_span, detector_x, tol=tol, workers=workers)
    fa = first_arrivals_from_run(run, detector_x, t_span)
    if fa.n_aborted > max_abort_fraction * fa.n:
        raise EnsembleAbortError(f"{fa.n_aborted} of {fa.n} trajectories aborted")
    return fa
