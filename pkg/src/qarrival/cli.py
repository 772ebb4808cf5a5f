"""
Command-line entry point.

    qarrival list
    qarrival describe <scenario>
    qarrival run <scenario> [--out-dir DIR] [--seed N] [--threads N]

``<scenario>`` is a path to a JSON scenario file or the name of a built-in.
Exit codes: 0 success, 2 usage error, 3 scenario/schema error,
4 numerical failure inside an analysis.
"""

from __future__ import annotations

import argparse
import sys

from . import runner, scenario
from .errors import QArrivalError, ScenarioError

EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_NUMERIC = 0, 2, 3, 4


def _cmd_list(args) -> int:
    for name, desc in scenario.list_scenarios():
        print(f"{name:28s} {desc}")
    return EXIT_OK


def _cmd_describe(args) -> int:
    sc, source = scenario.resolve(args.scenario)
    print(f"name:        {sc.name}  ({source})")
    print(f"description: {sc.description}")
    for note in sc.notes:
        print(f"note:        {note}")
    if sc.state is not None:
        st = sc.state
        print(f"state:       hbar={st.hbar!r} mass={st.mass!r}")
        for c, g in st.packets:
            print(f"  packet     c={c!r} x0={g.center_x0!r} p0={g.mean_momentum_p0!r} sigma_x={g.sigma_x!r}")
    print(f"detector_x:  {sc.detector_x!r}")
    print(f"t_span:      {list(sc.t_span)}")
    print(f"t_grid:      {sc.t_grid}")
    print(f"seed:        {sc.seed}")
    if sc.povm_model is not None:
        m = sc.povm_model
        print(f"povm_model:  n_s={m.dim_system} n_p={m.dim_pointer} partition={list(m.partition)}")
    print("analyses:")
    for a in sc.analyses:
        print(f"  {a.name:20s} {a.kind:18s} {a.params}")
    return EXIT_OK


def _cmd_run(args) -> int:
    sc, source = scenario.resolve(args.scenario)
    out_dir = args.out_dir or sc.output_dir or f"qarrival-out/{sc.name}"
    manifest = runner.run(sc, out_dir, source=source, threads=args.threads, seed=args.seed)
    head = manifest["headline"]
    print(f"{sc.name}: {len(manifest['files'])} files written to {out_dir}")
    if "log10_prob_negative_momentum" in head:
        print(f"  log10 P(p<0)      = {head['log10_prob_negative_momentum']:.4f}")
    for t, p in head["prob_negative_velocity"].items():
        print(f"  P(v<0) at t={t:<6s} = {p:.6g}")
    if "min_current_at_detector" in head:
        m = head["min_current_at_detector"]
        print(f"  min j(x_d, t)     = {m['j']:.6g} at t={m['t']:.4g}")
    for k, v in head["total_mass"].items():
        print(f"  mass[{k}] = {v:.9g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qarrival", description="Quantum arrival-time scenarios")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list built-in scenarios").set_defaults(func=_cmd_list)
    d = sub.add_parser("describe", help="print a scenario")
    d.add_argument("scenario", help="scenario file or built-in name")
    d.set_defaults(func=_cmd_describe)
    r = sub.add_parser("run", help="run a scenario and write outputs")
    r.add_argument("scenario", help="scenario file or built-in name")
    r.add_argument("--out-dir", default=None, help="output directory (default qarrival-out/<name>)")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--threads", type=int, default=1, help="worker threads for trajectory ensembles")
    r.set_defaults(func=_cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except QArrivalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
