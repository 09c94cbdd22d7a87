import json

import numpy as np
import pytest

from resagc.geometry import ExactReach, FiniteReach, SafetyWindow, conjuncts, spec_equal
from resagc.harness.examples import build_example
from resagc.modelio import (
    ModelFileError,
    contracts_to_dict,
    load_model,
    model_from_dict,
    model_to_dict,
    spec_from_json,
)
from resagc.harness.study import refine


def minimal_model():
    return {
        "subsystems": [
            {"id": 0, "dim": 1, "kind": "linear", "A": [[0.5]]},
            {"id": 1, "dim": 1, "kind": "nonlinear", "f": ["a*x0"], "params": {"a": 0.4}},
        ],
        "couplings": [{"to": 0, "from": 1, "C": [[0.1]]}, {"to": 1, "from": 0, "C": [[0.1]]}],
        "specs": [
            {"subsystem": 0, "kind": "safety", "horizon": 3, "box": {"lower": [-1], "upper": [1]}},
            {"subsystem": 1, "kind": "safety", "horizon": 3, "polytope": {"G": [[1], [-1]], "H": [2, 2]}},
        ],
        "initial_sets": [{"subsystem": 0, "box": {"lower": [-0.1], "upper": [0.1]}}],
    }


def test_minimal_model_loads_with_defaults():
    m = model_from_dict(minimal_model())
    assert m.network.size == 2 and not m.network.subsystems[1].is_linear
    assert m.algorithm == "two"
    assert m.initial_sets[1].lower.tolist() == [0.0] == m.initial_sets[1].upper.tolist()
    assert m.config.eta == 0.01 and m.max_iter == 50


def test_round_trip_through_json():
    for name in ("ex1", "ex2", "ex3"):
        m = build_example(name).model
        again = model_from_dict(json.loads(json.dumps(model_to_dict(m))))
        assert model_to_dict(again) == model_to_dict(m)
        for a, b in zip(m.specs, again.specs):
            assert spec_equal(a, b)
        assert again.algorithm == m.algorithm


def test_load_model_from_disk(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(minimal_model()))
    assert load_model(p).network.size == 2


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ModelFileError) as e:
        load_model(tmp_path / "missing.json")
    assert "cannot read" in e.value.errors[0]
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    with pytest.raises(ModelFileError) as e:
        load_model(bad)
    assert "line 1" in e.value.errors[0]


def test_errors_are_accumulated_with_paths():
    d = minimal_model()
    d["subsystems"][0]["A"] = [[0.5, 1.0]]
    d["subsystems"][1]["f"] = ["x3"]
    d["couplings"].append({"to": 0, "from": 0, "C": [[1.0]]})
    d["specs"][1]["kind"] = "eventually"
    d["algorithm"] = {"scenario": {"eta": 2.0}}
    with pytest.raises(ModelFileError) as e:
        model_from_dict(d)
    msgs = e.value.errors
    joined = "\n".join(msgs)
    assert len(msgs) >= 5
    for where in ("subsystems[0].A", "subsystems[1].f[0]", "couplings[2]", "specs[1].kind", "algorithm.scenario.eta"):
        assert where in joined, where


def test_mixed_horizons_are_rejected():
    d = minimal_model()
    d["specs"][1]["horizon"] = 4
    with pytest.raises(ModelFileError) as e:
        model_from_dict(d)
    assert any("horizon" in m for m in e.value.errors)


def test_weights_are_validated():
    d = minimal_model()
    d["weights"] = [{"subsystem": 0, "neighbor": 1, "lambda": 0.5}, {"subsystem": 1, "neighbor": 0, "lambda": 1.0}]
    with pytest.raises(ModelFileError):
        model_from_dict(d)
    d["weights"][0]["lambda"] = 1.0
    assert model_from_dict(d).algorithm == "L"


def test_spec_kinds_survive_serialisation():
    d = minimal_model()
    d["specs"].append({"subsystem": 0, "kind": "exact_reach", "horizon": 3, "box": {"lower": [-2], "upper": [2]}})
    d["specs"].append({"subsystem": 1, "kind": "finite_reach", "horizon": 3, "box": {"lower": [-2], "upper": [2]}})
    m = model_from_dict(d)
    kinds0 = {type(a) for a in conjuncts(m.specs[0])}
    assert kinds0 == {SafetyWindow, ExactReach}
    assert FiniteReach in {type(a) for a in conjuncts(m.specs[1])}


def test_contracts_dump_round_trips_guarantees():
    m = build_example("ex2").model
    contracts, trace = refine(m)
    d = json.loads(json.dumps(contracts_to_dict(contracts, trace)))
    assert d["terminated"] and d["iterations_used"] == trace.iterations_used
    for c, row in zip(contracts, d["contracts"]):
        assert spec_equal(spec_from_json(row["guarantee"]), c.guarantee)
        assert np.isclose(row["epsilon"], c.epsilon)
