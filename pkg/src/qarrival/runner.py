"""
Execute a scenario and write its outputs.

Every analysis writes into a private staging directory; files are moved
into the output directory only after all analyses succeeded, and the
manifest is written last.  A failure leaves the output directory as it was.
"""

from __future__ import annotations

import csv
import json
import math
import os
import platform
import shutil
import tempfile
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .arrival import (
    ArrivalDistribution,
    KijowskiSettings,
    compare,
    current_distribution,
    kijowski_distribution,
    semiclassical_distribution,
    truncated_current_distribution,
)
from .bohmian import EnsembleSpec, integrate_ensemble, sample_initial_positions
from .errors import ScenarioError
from .observables import backflow_report, current, density, prob_negative_momentum, prob_positive_momentum
from .povm import derive_povm, nonlinearity_demo, outcome_probabilities, projective_operator
from .scenario import Scenario, grid_from_spec

MANIFEST_SCHEMA = "qarrival-manifest/1"


def fmt(x) -> str:
    """Shortest repr that round-trips a float exactly; empty for None."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _clean(obj):
    # strict JSON: non-finite floats become null
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _pairs(a) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def write_distribution(staging: Path, name: str, dist: ArrivalDistribution) -> list[str]:
    stderr = dist.mc_stderr if dist.mc_stderr is not None else [None] * dist.t_grid.size
    write_csv(staging / f"{name}.csv", ["t", "density", "mc_stderr"],
              zip(dist.t_grid, dist.density, stderr))
    meta = {"method": dist.method, "total_mass": dist.total_mass, "parameters": dist.meta}
    if dist.bin_edges is not None:
        meta["bin_edges"] = dist.bin_edges
    write_json(staging / f"{name}.meta.json", meta)
    return [f"{name}.csv", f"{name}.meta.json"]


class _Context:
    def __init__(self, scenario: Scenario, staging: Path, seed, threads: int):
        self.sc = scenario
        self.staging = staging
        self.seed = seed
        self.threads = threads
        self.distributions: dict[str, ArrivalDistribution] = {}
        self.prob_negative_velocity: dict[str, float] = {}


def _grid(ctx: _Context, params: dict) -> np.ndarray:
    return grid_from_spec(params["t_grid"]) if "t_grid" in params else ctx.sc.times


def _do_density(ctx, name, p):
    st = ctx.sc.state
    n = int(p.get("n", 1001))
    rows = []
    for t in p["times"]:
        lo, hi = p.get("x_window") or st.support_window(float(t), 6.0)
        xs = np.linspace(lo, hi, n)
        rows.extend(zip([float(t)] * n, xs, density(st, xs, t), current(st, xs, t)))
    write_csv(ctx.staging / f"{name}.csv", ["t", "x", "rho", "j"], rows)
    return [f"{name}.csv"], {"times": list(p["times"]), "n": n}


def _do_current(ctx, name, p):
    dist = current_distribution(ctx.sc.state, ctx.sc.detector_x, ctx.sc.times)
    ctx.distributions[name] = dist
    i = int(np.argmin(dist.density))
    return write_distribution(ctx.staging, name, dist), {
        "total_mass": dist.total_mass, "min_j": float(dist.density[i]), "t_at_min_j": float(dist.t_grid[i])}


def _do_momentum_sign(ctx, name, p):
    neg = prob_negative_momentum(ctx.sc.state)
    pos = prob_positive_momentum(ctx.sc.state)
    rec = {"prob_negative": neg.probability, "log10_prob_negative": neg.log10,
           "prob_positive": pos.probability}
    write_json(ctx.staging / f"{name}.json", rec)
    return [f"{name}.json"], rec


def _do_backflow(ctx, name, p):
    records = []
    for t in p["times"]:
        rep = backflow_report(ctx.sc.state, float(t), x_window=p.get("x_window"),
                              n_scan=int(p.get("n_scan", 2048)))
        records.append(rep.to_record())
        ctx.prob_negative_velocity[fmt(t)] = rep.prob_negative_velocity
    write_json(ctx.staging / f"{name}.json", records)
    return [f"{name}.json"], {"prob_negative_velocity": {fmt(r["t"]): r["probability"] for r in records}}


def _do_kijowski(ctx, name, p):
    kw = {k: p[k] for k in ("p_quad", "p_max", "n_sigma") if k in p}
    dist = kijowski_distribution(ctx.sc.state, _grid(ctx, p), KijowskiSettings(**kw), ctx.sc.detector_x)
    ctx.distributions[name] = dist
    return write_distribution(ctx.staging, name, dist), {"total_mass": dist.total_mass}


def _do_semiclassical(ctx, name, p):
    t = _grid(ctx, p)
    if t[0] <= 0:
        raise ScenarioError(f"semiclassical analysis {name!r} needs a time grid with t > 0")
    dist = semiclassical_distribution(ctx.sc.state, float(p["L"]), t)
    ctx.distributions[name] = dist
    return write_distribution(ctx.staging, name, dist), {"total_mass": dist.total_mass}


def _do_truncated(ctx, name, p):
    spec = EnsembleSpec(int(p["n_trajectories"]), ctx.seed, p.get("sampling", "stratified"))
    dist = truncated_current_distribution(ctx.sc.state, spec, ctx.sc.detector_x, ctx.sc.t_span,
                                          p.get("convention", "first-any-direction"),
                                          p.get("bins", "fd"), workers=ctx.threads)
    ctx.distributions[name] = dist
    keep = ("n_arrived", "n_aborted", "max_crossings", "n_multiple_crossings")
    return write_distribution(ctx.staging, name, dist), {
        "total_mass": dist.total_mass, **{k: dist.meta[k] for k in keep}}


def _do_trajectories(ctx, name, p):
    sc = ctx.sc
    spec = EnsembleSpec(int(p["n_trajectories"]), ctx.seed, p.get("sampling", "stratified"))
    q0 = sample_initial_positions(sc.state, spec)
    t_eval = np.linspace(*sc.t_span, int(p.get("n_samples", 241)))
    run = integrate_ensemble(sc.state, q0, sc.t_span, sc.detector_x, t_eval=t_eval, workers=ctx.threads)
    rows = ((i, t, q) for i in range(run.q0.size) for t, q in zip(t_eval, run.positions[:, i])
            if math.isfinite(q))
    write_csv(ctx.staging / f"{name}.csv", ["trajectory_id", "t", "Q"], rows)
    cross = ((i, e.ordinal, e.t, e.direction) for i, evs in enumerate(run.crossings) for e in evs)
    write_csv(ctx.staging / f"{name}_crossings.csv", ["trajectory_id", "ordinal", "t", "direction"], cross)
    counts = np.array([len(c) for c in run.crossings])
    return [f"{name}.csv", f"{name}_crossings.csv"], {
        "n_trajectories": int(run.q0.size), "n_aborted": run.n_aborted,
        "max_crossings": int(counts.max(initial=0)), "n_multiple_crossings": int(np.sum(counts >= 2))}


def _do_compare(ctx, name, p):
    res = compare(ctx.distributions[p["a"]], ctx.distributions[p["b"]]).as_dict()
    rec = {"a": p["a"], "b": p["b"], **res}
    write_json(ctx.staging / f"{name}.json", rec)
    return [f"{name}.json"], res


def _do_povm(ctx, name, p):
    model = ctx.sc.povm_model
    povm = derive_povm(model)
    n = model.dim_system
    if "states" in p:
        states = [np.asarray(s, dtype=float) for s in p["states"]]
        states = [s[..., 0] + 1j * s[..., 1] for s in states]
    else:
        states = [np.eye(n)[i].astype(complex) for i in range(n)] + [np.ones(n, dtype=complex) / math.sqrt(n)]
    op = projective_operator(povm)
    rec = {
        "labels": list(povm.labels),
        "elements": [_pairs(O) for O in povm.elements],
        "min_eigenvalue": povm.meta["min_eigenvalue"],
        "completeness_error": povm.meta["completeness_error"],
        "projective": povm.meta["projective"],
        "self_adjoint_operator": None if op is None else _pairs(op),
        "outcomes": [{"state": _pairs(s), "probabilities": outcome_probabilities(povm, s)} for s in states],
    }
    if "superpose" in p:
        i, j = p["superpose"]
        rec["nonlinearity"] = nonlinearity_demo(states[i], states[j], povm)
    write_json(ctx.staging / f"{name}.json", rec)
    return [f"{name}.json"], {"n_outcomes": len(povm), "projective": povm.meta["projective"],
                              "min_eigenvalue": povm.meta["min_eigenvalue"],
                              "completeness_error": povm.meta["completeness_error"]}


HANDLERS = {
    "density": _do_density,
    "current": _do_current,
    "momentum_sign": _do_momentum_sign,
    "backflow": _do_backflow,
    "kijowski": _do_kijowski,
    "semiclassical": _do_semiclassical,
    "truncated_current": _do_truncated,
    "trajectories": _do_trajectories,
    "compare": _do_compare,
    "povm": _do_povm,
}


def _headline(ctx: _Context) -> dict:
    sc = ctx.sc
    head = {"total_mass": {k: d.total_mass for k, d in ctx.distributions.items()},
            "prob_negative_velocity": dict(ctx.prob_negative_velocity)}
    if sc.state is not None:
        head["log10_prob_negative_momentum"] = prob_negative_momentum(sc.state).log10
        t = sc.times
        j = current(sc.state, sc.detector_x, t)
        i = int(np.argmin(j))
        head["min_current_at_detector"] = {"t": float(t[i]), "j": float(j[i])}
    return head


def versions() -> dict:
    return {"qarrival": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run(scenario: Scenario, out_dir, source: str = "", threads: int = 1, seed: int | None = None) -> dict:
    """Run every analysis of ``scenario``; returns the manifest written to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = scenario.seed if seed is None else seed
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        ctx = _Context(scenario, staging, seed, max(1, int(threads)))
        files, summaries = [], {}
        for a in scenario.analyses:
            written, summary = HANDLERS[a.kind](ctx, a.name, a.params)
            files.extend(written)
            summaries[a.name] = {"kind": a.kind, "params": a.params, "files": written, "summary": summary}
        params = scenario.to_dict()
        params["seed"] = seed
        manifest = {
            "schema": MANIFEST_SCHEMA,
            "scenario": scenario.name,
            "source": source,
            "seed": seed,
            "threads": ctx.threads,
            "versions": versions(),
            "parameters": params,
            "files": files,
            "analyses": summaries,
            "headline": _headline(ctx),
        }
        write_json(staging / "manifest.json", manifest)
        for f in files:
            os.replace(staging / f, out / f)
        os.replace(staging / "manifest.json", out / "manifest.json")
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return manifest
