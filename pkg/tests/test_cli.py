import csv
import json

import pytest

from qarrival import scenario
from qarrival.cli import EXIT_NUMERIC, EXIT_OK, EXIT_SCHEMA, main
from qarrival.errors import ScenarioError

SMALL = {
    "schema": "qarrival-scenario/1",
    "name": "small",
    "description": "two packets, short ensemble",
    "state": {"hbar": 1.0, "mass": 1.0, "packets": [
        {"weight_re": 0.7071067811865475, "weight_im": 0.0, "x0": -10.0, "p0": 2.0, "sigma_x": 3.0},
        {"weight_re": 0.7071067811865475, "weight_im": 0.0, "x0": -34.0, "p0": 6.0, "sigma_x": 3.0}]},
    "detector_x": 0.0,
    "t_span": [0.0, 12.0],
    "t_grid": {"start": 0.0, "stop": 12.0, "num": 241},
    "seed": 7,
    "analyses": [
        {"kind": "current", "name": "current", "params": {}},
        {"kind": "truncated_current", "name": "trunc", "params": {"n_trajectories": 300, "bins": 24}},
        {"kind": "trajectories", "name": "paths", "params": {"n_trajectories": 20, "n_samples": 25}},
        {"kind": "compare", "name": "cmp", "params": {"a": "trunc", "b": "current"}},
    ],
}


def write(tmp_path, doc, name="sc.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_list_and_describe(capsys):
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    names = [line.split()[0] for line in out.splitlines()]
    assert {"backflow-appendix", "single-packet-farfield", "povm-cnot-demo"} <= set(names)
    assert len(names) == len(set(names))
    assert main(["describe", "backflow-appendix"]) == EXIT_OK
    assert "standard deviation" in capsys.readouterr().out


def test_builtin_files_round_trip_byte_exact():
    for name in scenario.builtin_names():
        text = scenario.builtin_text(name)
        assert scenario.dumps(scenario.loads(text)) == text


def test_state_round_trip_byte_exact(appendix_state):
    text = scenario.dump_state(appendix_state)
    assert scenario.dump_state(scenario.load_state(text)) == text
    assert scenario.load_state(text) == appendix_state


def test_backflow_builtin_headline(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "backflow-appendix", "--out-dir", str(out), "--threads", "2"]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    head = man["headline"]
    assert -34 <= head["log10_prob_negative_momentum"] <= -32
    assert 0.006 <= head["prob_negative_velocity"]["5.2"] <= 0.010
    assert head["min_current_at_detector"]["j"] < 0
    assert head["total_mass"]["kijowski"] == pytest.approx(1.0, abs=1e-3)
    for f in man["files"]:
        assert (out / f).is_file()
    assert not [p for p in out.iterdir() if p.name.startswith(".staging")]
    with open(out / "trajectories_crossings.csv") as fh:
        assert next(csv.reader(fh)) == ["trajectory_id", "ordinal", "t", "direction"]


@pytest.mark.parametrize("name", ["single-packet-farfield", "povm-cnot-demo"])
def test_other_builtins_run(tmp_path, name):
    assert main(["run", name, "--out-dir", str(tmp_path)]) == EXIT_OK
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["scenario"] == name
    if name == "single-packet-farfield":
        cmp_ = json.loads((tmp_path / "kijowski_vs_current.json").read_text())
        assert cmp_["l1"] < 1e-2
    else:
        rec = json.loads((tmp_path / "povm.json").read_text())
        assert rec["projective"] and rec["nonlinearity"]["support_superposition"] == [0.0, 1.0]


def test_deterministic_csv(tmp_path):
    path = write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", path, "--out-dir", str(a)]) == EXIT_OK
    assert main(["run", path, "--out-dir", str(b), "--threads", "3"]) == EXIT_OK
    for f in ("current.csv", "trunc.csv", "paths.csv", "paths_crossings.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_seed_override(tmp_path):
    path = write(tmp_path, SMALL)
    assert main(["run", path, "--out-dir", str(tmp_path / "o"), "--seed", "99"]) == EXIT_OK
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["seed"] == 99
    assert json.loads((tmp_path / "o" / "trunc.meta.json").read_text())["parameters"]["seed"] == 99


def test_csv_floats_round_trip(tmp_path):
    path = write(tmp_path, SMALL)
    main(["run", path, "--out-dir", str(tmp_path)])
    with open(tmp_path / "current.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "density", "mc_stderr"]
    assert all(repr(float(r[1])) == r[1] for r in rows[1:])


def test_empty_analyses(tmp_path):
    doc = dict(SMALL, analyses=[])
    assert main(["run", write(tmp_path, doc), "--out-dir", str(tmp_path / "o")]) == EXIT_OK
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["files"] == []


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("schema"),
    lambda d: d.update(schema="qarrival-scenario/0"),
    lambda d: d.pop("seed"),
    lambda d: d.update(extra=1),
    lambda d: d["analyses"].append({"kind": "teleport"}),
    lambda d: d["analyses"].append({"kind": "backflow", "params": {}}),
    lambda d: d["analyses"].append({"kind": "compare", "name": "c2", "params": {"a": "nope", "b": "current"}}),
    lambda d: d["analyses"].append({"kind": "current"}),
    lambda d: d.update(t_span=[5.0, 1.0]),
    lambda d: d["state"]["packets"][0].update(sigma_x=-1.0),
])
def test_schema_errors(tmp_path, mutate):
    doc = json.loads(json.dumps(SMALL))
    mutate(doc)
    out = tmp_path / "o"
    assert main(["run", write(tmp_path, doc), "--out-dir", str(out)]) == EXIT_SCHEMA
    assert not out.exists() or not any(out.iterdir())


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{ not json")
    assert main(["run", str(p), "--out-dir", str(tmp_path / "o")]) == EXIT_SCHEMA
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_SCHEMA
    with pytest.raises(ScenarioError):
        scenario.load_builtin("no-such-scenario")


def test_numeric_failure_leaves_no_outputs(tmp_path):
    doc = json.loads(json.dumps(SMALL))
    doc["analyses"] = [{"kind": "current", "params": {}},
                       {"kind": "backflow", "params": {"times": [5.2], "x_window": [-1.0, 1.0]}}]
    out = tmp_path / "o"
    assert main(["run", write(tmp_path, doc), "--out-dir", str(out)]) == EXIT_NUMERIC
    assert list(out.iterdir()) == []
