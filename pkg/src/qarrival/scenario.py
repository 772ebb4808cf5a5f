"""
Scenario files: a versioned JSON document describing a state, a detector,
a time grid and a list of analyses to run.

Saving is canonical (fixed key order, two-space indent, shortest
round-trip float repr), so ``save(load(f))`` reproduces a canonical file
byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidModelError, ScenarioError
from .povm import MeasurementModel, model_from_dict, model_to_dict
from .states import WaveState, state_from_dict, state_to_dict

SCHEMA = "qarrival-scenario/1"

# kind -> (required params, optional params)
ANALYSES: dict[str, tuple[set, set]] = {
    "density": ({"times"}, {"x_window", "n"}),
    "current": (set(), set()),
    "momentum_sign": (set(), set()),
    "backflow": ({"times"}, {"n_scan", "x_window"}),
    "kijowski": (set(), {"t_grid", "p_quad", "p_max", "n_sigma"}),
    "semiclassical": ({"L"}, {"t_grid"}),
    "truncated_current": ({"n_trajectories"}, {"sampling", "convention", "bins"}),
    "trajectories": ({"n_trajectories"}, {"sampling", "n_samples"}),
    "compare": ({"a", "b"}, set()),
    "povm": (set(), {"states", "superpose"}),
}
MONTE_CARLO = {"truncated_current", "trajectories"}
NEEDS_STATE = set(ANALYSES) - {"povm", "compare"}
DISTRIBUTIONS = {"current", "kijowski", "semiclassical", "truncated_current"}

TOP_KEYS = {"schema", "name", "description", "notes", "state", "detector_x", "t_span", "t_grid",
            "seed", "output_dir", "analyses", "povm_model"}


@dataclass
class Analysis:
    kind: str
    name: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "name": self.name, "params": self.params}


@dataclass
class Scenario:
    name: str
    description: str = ""
    notes: list[str] = field(default_factory=list)
    state: WaveState | None = None
    detector_x: float = 0.0
    t_span: tuple[float, float] = (0.0, 1.0)
    t_grid: dict = field(default_factory=lambda: {"start": 0.0, "stop": 1.0, "num": 101})
    seed: int | None = None
    output_dir: str | None = None
    analyses: list[Analysis] = field(default_factory=list)
    povm_model: MeasurementModel | None = None

    @property
    def times(self) -> np.ndarray:
        return grid_from_spec(self.t_grid)

    def to_dict(self) -> dict:
        d = {"schema": SCHEMA, "name": self.name, "description": self.description}
        if self.notes:
            d["notes"] = list(self.notes)
        if self.state is not None:
            d["state"] = state_to_dict(self.state)
        d["detector_x"] = self.detector_x
        d["t_span"] = list(self.t_span)
        d["t_grid"] = dict(self.t_grid)
        if self.seed is not None:
            d["seed"] = self.seed
        if self.output_dir is not None:
            d["output_dir"] = self.output_dir
        d["analyses"] = [a.to_dict() for a in self.analyses]
        if self.povm_model is not None:
            d["povm_model"] = model_to_dict(self.povm_model)
        return d


def grid_from_spec(spec: dict) -> np.ndarray:
    try:
        start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"time grid needs start, stop, num: {exc}") from exc
    if num < 2 or not stop > start or not (math.isfinite(start) and math.isfinite(stop)):
        raise ScenarioError(f"bad time grid {spec}")
    return np.linspace(start, stop, num)


def _require(cond: bool, msg: str):
    if not cond:
        raise ScenarioError(msg)


def _number(d: dict, key: str, default=None) -> float:
    v = d.get(key, default)
    _require(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v),
             f"{key!r} must be a finite number")
    return float(v)


def scenario_from_dict(d: dict) -> Scenario:
    """Validate a parsed document against the schema and build a Scenario."""
    _require(isinstance(d, dict), "scenario must be a JSON object")
    _require(d.get("schema") == SCHEMA, f"schema must be {SCHEMA!r}, got {d.get('schema')!r}")
    unknown = set(d) - TOP_KEYS
    _require(not unknown, f"unknown top-level keys {sorted(unknown)}")
    _require(isinstance(d.get("name"), str) and d["name"], "'name' must be a nonempty string")

    state = None
    if "state" in d:
        try:
            state = state_from_dict(d["state"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed state: {exc}") from exc
    model = None
    if "povm_model" in d:
        try:
            model = model_from_dict(d["povm_model"])
        except InvalidModelError as exc:
            raise ScenarioError(str(exc)) from exc

    span = d.get("t_span", [0.0, 1.0])
    _require(isinstance(span, list) and len(span) == 2, "'t_span' must be [t0, t1]")
    t_span = (_number({"t0": span[0]}, "t0"), _number({"t1": span[1]}, "t1"))
    _require(t_span[1] > t_span[0], "'t_span' must be increasing")
    t_grid = d.get("t_grid", {"start": t_span[0], "stop": t_span[1], "num": 1201})
    grid_from_spec(t_grid)

    seed = d.get("seed")
    _require(seed is None or (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0),
             "'seed' must be a nonnegative integer")

    raw = d.get("analyses", [])
    _require(isinstance(raw, list), "'analyses' must be a list")
    analyses, names = [], set()
    for i, a in enumerate(raw):
        _require(isinstance(a, dict) and "kind" in a, f"analysis #{i} needs a 'kind'")
        kind = a["kind"]
        _require(kind in ANALYSES, f"unknown analysis kind {kind!r}")
        extra = set(a) - {"kind", "name", "params"}
        _require(not extra, f"analysis #{i} has unknown keys {sorted(extra)}")
        params = a.get("params", {})
        _require(isinstance(params, dict), f"analysis #{i} params must be an object")
        required, optional = ANALYSES[kind]
        missing = required - set(params)
        _require(not missing, f"analysis {kind!r} is missing {sorted(missing)}")
        unknown = set(params) - required - optional
        _require(not unknown, f"analysis {kind!r} has unknown params {sorted(unknown)}")
        name = a.get("name", kind)
        _require(isinstance(name, str) and name.replace("-", "_").isidentifier(),
                 f"analysis name {name!r} must be a simple identifier")
        _require(name not in names, f"duplicate analysis name {name!r}")
        names.add(name)
        if kind in NEEDS_STATE:
            _require(state is not None, f"analysis {kind!r} needs a 'state'")
        if kind in MONTE_CARLO:
            _require(seed is not None, f"Monte Carlo analysis {kind!r} needs a 'seed'")
        if kind == "povm":
            _require(model is not None, "analysis 'povm' needs a 'povm_model'")
        if kind == "compare":
            for ref in (params["a"], params["b"]):
                prior = {x.name: x.kind for x in analyses}
                _require(ref in prior and prior[ref] in DISTRIBUTIONS,
                         f"compare refers to {ref!r}, which is not an earlier distribution analysis")
        analyses.append(Analysis(kind, name, params))

    return Scenario(
        name=d["name"], description=d.get("description", ""), notes=list(d.get("notes", [])),
        state=state, detector_x=_number(d, "detector_x", 0.0), t_span=t_span, t_grid=dict(t_grid),
        seed=seed, output_dir=d.get("output_dir"), analyses=analyses, povm_model=model,
    )


def dumps(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), indent=2, ensure_ascii=False) + "\n"


def loads(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"not valid JSON: {exc}") from exc
    return scenario_from_dict(doc)


def load(path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return loads(text)


def save(scenario: Scenario, path) -> None:
    Path(path).write_text(dumps(scenario), encoding="utf-8")


def dump_state(state: WaveState) -> str:
    return json.dumps(state_to_dict(state), indent=2) + "\n"


def load_state(text: str) -> WaveState:
    return state_from_dict(json.loads(text))


# -- built-ins --------------------------------------------------------------

def _builtin_dir():
    return resources.files("qarrival") / "scenarios"


def builtin_names() -> list[str]:
    return sorted(p.name[:-5] for p in _builtin_dir().iterdir() if p.name.endswith(".json"))


def builtin_text(name: str) -> str:
    path = _builtin_dir() / f"{name}.json"
    if not path.is_file():
        raise ScenarioError(f"no built-in scenario {name!r}; known: {', '.join(builtin_names())}")
    return path.read_text(encoding="utf-8")


def load_builtin(name: str) -> Scenario:
    return loads(builtin_text(name))


def list_scenarios() -> list[tuple[str, str]]:
    return [(n, load_builtin(n).description) for n in builtin_names()]


def resolve(ref: str) -> tuple[Scenario, str]:
    """Load a scenario from a file path or a built-in name; returns it with its source."""
    p = Path(ref)
    if p.suffix == ".json" or p.exists():
        return load(p), str(p)
    return load_builtin(ref), f"builtin:{ref}"
