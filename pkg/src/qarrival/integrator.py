"""
Batched Dormand-Prince 5(4) integration of scalar ODEs with dense output.

Each member of the batch carries its own time, step size and error
control, so one stiff member does not slow the others down; the right-hand
side is simply evaluated on the arrays of (t_i, y_i) of all members still
running.  Level crossings of y are found on the quartic dense interpolant
and refined by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Dormand-Prince tableau and Shampine's dense-output polynomial
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

RUNNING, COMPLETED, NEAR_NODE, LEFT_DOMAIN, STEP_LIMIT = 0, 1, 2, 3, 4
STATUS_NAMES = {COMPLETED: "completed", NEAR_NODE: "aborted_near_node",
                LEFT_DOMAIN: "left_domain", STEP_LIMIT: "step_limit"}

SAFETY, MIN_FACTOR, MAX_FACTOR = 0.9, 0.2, 10.0
SIDE_PROBES = np.linspace(0.0, 1.0, 5)[1:]


@dataclass
class BatchResult:
    t: np.ndarray
    y: np.ndarray
    status: np.ndarray
    n_steps: np.ndarray
    y_eval: np.ndarray | None = None
    # per member: list of (t, direction) with direction +1 rightward, -1 leftward
    crossings: list[list[tuple[float, int]]] = field(default_factory=list)
    # per member: (times, values) at accepted steps, when requested
    steps: list[tuple[np.ndarray, np.ndarray]] | None = None


def _combine(coef, K):
    # fixed-order sum; a BLAS product could round differently for different batch sizes
    out = np.zeros(K.shape[1])
    for c, row in zip(coef, K):
        if c != 0.0:
            out += c * row
    return out


def dense_eval(y_old, h, q, theta):
    """Evaluate the quartic interpolant y_old + h * q @ [theta, theta^2, theta^3, theta^4]."""
    theta = np.asarray(theta, dtype=float)
    powers = np.stack([theta, theta**2, theta**3, theta**4], axis=-1)
    return y_old + h * np.sum(q * powers, axis=-1)


def integrate_batch(rhs, t0: float, y0, t_end: float, *, rtol: float = 1e-8, atol: float = 1e-10,
                    max_steps: int = 200_000, t_eval=None, level: float | None = None,
                    domain: tuple[float, float] | None = None, record_steps: bool = False,
                    h0: float | None = None, h_min_rel: float = 1e-13) -> BatchResult:
    """Integrate y' = rhs(t, y) for a batch of scalar initial values.

    ``rhs(t, y)`` receives equally shaped arrays and returns ``(f, ok)``;
    members where ``ok`` is False are treated as having hit a singular
    point: the step is retried with a quarter of the size, and a member
    whose step collapses below ``h_min_rel * max(1, |t|)`` stops with status
    NEAR_NODE.  ``t_end`` may lie before ``t0`` for backward integration.
    """
    y = np.array(y0, dtype=float).ravel().copy()
    n = y.size
    direction = 1.0 if t_end >= t0 else -1.0
    span = abs(t_end - t0)
    t = np.full(n, float(t0))
    status = np.full(n, RUNNING, dtype=np.int8)
    n_steps = np.zeros(n, dtype=np.int64)
    crossings: list[list[tuple[float, int]]] = [[] for _ in range(n)]

    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if np.any(np.diff(t_eval) * direction < 0):
            raise ValueError("t_eval must be ordered in the integration direction")
        y_eval = np.full((t_eval.size, n), np.nan)
        n_before = int(np.sum((t_eval - t0) * direction <= 0))
        y_eval[:n_before][t_eval[:n_before] == t0] = y
        next_eval = np.full(n, n_before, dtype=np.int64)
    else:
        y_eval = None
        next_eval = None

    step_log_idx, step_log_t, step_log_y = [], [], []
    if record_steps:
        step_log_idx.append(np.arange(n))
        step_log_t.append(t.copy())
        step_log_y.append(y.copy())

    if span == 0.0:
        status[:] = COMPLETED
        return _finish(t, y, status, n_steps, y_eval, crossings, record_steps,
                       step_log_idx, step_log_t, step_log_y, n)

    f, ok = rhs(t, y)
    f = np.array(f, dtype=float)
    bad0 = ~np.asarray(ok) | ~np.isfinite(f)
    status[bad0] = NEAR_NODE
    if h0 is None:
        # per member, so a result never depends on how the batch was split
        f_safe = np.where(bad0, 0.0, f)
        h = direction * np.minimum(1e-2 * span, 1e-2 * (np.abs(y) + 1.0) / (np.abs(f_safe) + 1.0))
    else:
        h = np.full(n, direction * h0)
    side = np.where(y >= level, 1, -1) if level is not None else None

    while True:
        active = np.nonzero(status == RUNNING)[0]
        if active.size == 0:
            break
        ta, ya, fa = t[active], y[active], f[active]
        ha = h[active]
        remaining = t_end - ta
        ha = np.where(np.abs(ha) > np.abs(remaining), remaining, ha)

        K = np.empty((7, active.size))
        K[0] = fa
        stage_ok = np.ones(active.size, dtype=bool)
        for s in range(1, 6):
            ys = ya + ha * sum(a * K[j] for j, a in enumerate(A[s]))
            ks, oks = rhs(ta + C[s] * ha, ys)
            K[s] = ks
            stage_ok &= np.asarray(oks) & np.isfinite(ks)
        y_new = ya + ha * _combine(B, K)
        t_new = ta + ha
        t_new = np.where(np.abs(t_end - t_new) <= 4 * np.finfo(float).eps * max(1.0, abs(t_end)), t_end, t_new)
        f_new, ok_new = rhs(t_new, y_new)
        K[6] = f_new
        stage_ok &= np.asarray(ok_new) & np.isfinite(f_new)

        err_abs = ha * _combine(E, K)
        scale = atol + rtol * np.maximum(np.abs(ya), np.abs(y_new))
        with np.errstate(invalid="ignore"):
            err = np.abs(err_abs) / scale
        err = np.where(stage_ok & np.isfinite(err), err, np.inf)
        accept = err <= 1.0

        n_steps[active] += 1
        with np.errstate(divide="ignore"):
            factor = np.where(err == 0.0, MAX_FACTOR,
                              np.clip(SAFETY * err ** -0.2, MIN_FACTOR, MAX_FACTOR))
        factor = np.where(stage_ok, factor, 0.25)
        # after a rejection never grow the step
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        h[active] = ha * factor

        # rejected members whose step collapsed
        rej = active[~accept]
        if rej.size:
            tiny = np.abs(h[rej]) < h_min_rel * np.maximum(1.0, np.abs(t[rej]))
            status[rej[tiny]] = NEAR_NODE

        acc = np.nonzero(accept)[0]
        if acc.size:
            idx = active[acc]
            q = np.stack([_combine(P[:, c], K[:, acc]) for c in range(4)], axis=-1)
            y_old_acc, h_acc, t_old_acc = ya[acc], ha[acc], ta[acc]
            y_new_acc = y_new[acc]

            if level is not None:
                _locate_crossings(idx, t_old_acc, y_old_acc, h_acc, q, level, side, crossings)
                side[idx] = np.where(y_new_acc >= level, 1, -1)

            if y_eval is not None:
                _fill_eval(idx, t_old_acc, y_old_acc, h_acc, q, t_eval, next_eval, y_eval, direction,
                           t_new[acc])

            t[idx] = t_new[acc]
            y[idx] = y_new_acc
            f[idx] = f_new[acc]
            if record_steps:
                step_log_idx.append(idx)
                step_log_t.append(t_new[acc].copy())
                step_log_y.append(y_new_acc.copy())

            done = (t[idx] - t_end) * direction >= 0
            status[idx[done]] = COMPLETED
            if domain is not None:
                out = (y[idx] < domain[0]) | (y[idx] > domain[1])
                status[idx[out & ~done]] = LEFT_DOMAIN

        over = (status == RUNNING) & (n_steps >= max_steps)
        status[over] = STEP_LIMIT

    return _finish(t, y, status, n_steps, y_eval, crossings, record_steps,
                   step_log_idx, step_log_t, step_log_y, n)


def _finish(t, y, status, n_steps, y_eval, crossings, record_steps, li, lt, ly, n):
    steps = None
    if record_steps:
        idx = np.concatenate(li)
        tt = np.concatenate(lt)
        yy = np.concatenate(ly)
        order = np.argsort(idx, kind="stable")
        idx, tt, yy = idx[order], tt[order], yy[order]
        bounds = np.searchsorted(idx, np.arange(n + 1))
        steps = [(tt[bounds[i]:bounds[i + 1]], yy[bounds[i]:bounds[i + 1]]) for i in range(n)]
    return BatchResult(t, y, status, n_steps, y_eval, crossings, steps)


def _fill_eval(idx, t_old, y_old, h, q, t_eval, next_eval, y_eval, direction, t_new):
    while True:
        nxt = next_eval[idx]
        pending = nxt < t_eval.size
        if not np.any(pending):
            return
        te = t_eval[np.minimum(nxt, t_eval.size - 1)]
        inside = pending & ((te - t_new) * direction <= 0)
        if not np.any(inside):
            return
        sel = np.nonzero(inside)[0]
        theta = (te[sel] - t_old[sel]) / h[sel]
        y_eval[nxt[sel], idx[sel]] = dense_eval(y_old[sel], h[sel], q[sel], theta)
        next_eval[idx[sel]] += 1


def _locate_crossings(idx, t_old, y_old, h, q, level, side, crossings, n_bisect: int = 64):
    # probe the interpolant inside each step so a quick double crossing is not missed
    probes = dense_eval(y_old[:, None], h[:, None], q[:, None, :], SIDE_PROBES[None, :])
    probe_side = np.where(probes >= level, 1, -1)
    prev = np.concatenate([side[idx][:, None], probe_side[:, :-1]], axis=1)
    rows, cols = np.nonzero(prev != probe_side)
    if rows.size == 0:
        return
    lo = np.where(cols == 0, 0.0, SIDE_PROBES[np.maximum(cols - 1, 0)])
    hi = SIDE_PROBES[cols]
    lo_side = prev[rows, cols]
    yo, hh, qq = y_old[rows], h[rows], q[rows]
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        s_mid = np.where(dense_eval(yo, hh, qq, mid) >= level, 1, -1)
        same = s_mid == lo_side
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    theta = 0.5 * (lo + hi)
    t_cross = t_old[rows] + theta * hh
    # leaving the left side (-1) forward in time means moving rightward (+1)
    direction = -lo_side * np.where(hh > 0, 1, -1)
    order = np.lexsort((t_cross * np.sign(hh), rows))
    for r in order:
        crossings[idx[rows[r]]].append((float(t_cross[r]), int(direction[r])))
