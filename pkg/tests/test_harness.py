import csv
import json

import numpy as np
import pytest

from resagc.dynamics import simulate_network
from resagc.expr import evaluate
from resagc.geometry import ModelError, Polytope
from resagc.harness.examples import EX1_A, EX1_C, EX2_A, EX2_C12, EX2_C21, build_example
from resagc.harness.microgrid import (
    BUSES,
    REFERENCE_INTERVALS,
    SOURCES,
    MicrogridParams,
    build_microgrid,
    laplacian,
    operating_point,
)
from resagc.harness.properties import SECTIONS, conjunction_section, property_suite
from resagc.harness.study import CASE_STUDIES, case_study, region_summary, run_case_study


def test_example_matrices():
    ex1 = build_example("ex1").model
    for i, A in enumerate(EX1_A):
        np.testing.assert_array_equal(ex1.network.subsystems[i].A, A)
    for edge, C in EX1_C.items():
        np.testing.assert_array_equal(ex1.network.couplings[edge], C)
    ex2 = build_example("ex2").model
    np.testing.assert_array_equal(ex2.network.subsystems[0].A, EX2_A)
    np.testing.assert_array_equal(ex2.network.couplings[(0, 1)], EX2_C12)
    np.testing.assert_array_equal(ex2.network.couplings[(1, 0)], EX2_C21)
    assert ex1.algorithm == "L" and ex2.algorithm == "two"
    assert build_example("ex3").model.config.samples_override == 13


def test_unknown_case_study():
    with pytest.raises(ValueError):
        build_example("ex9")
    with pytest.raises(ValueError):
        case_study("nowhere")


def test_laplacian_rows_sum_to_zero():
    L = laplacian(MicrogridParams())
    np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_array_equal(L, L.T)


def test_operating_point_balances_power():
    p = MicrogridParams()
    op = operating_point(p)
    Y = laplacian(p) + np.diag(p.shunts)
    residual = Y @ op.voltages + op.draw / op.voltages
    np.testing.assert_allclose(residual, 0.0, atol=1e-8)
    assert op.voltages.mean() == pytest.approx(p.v_nom, abs=1e-9)
    # sources deliver exactly what the loads consume (no shunt losses)
    assert len(SOURCES) * op.source_power == pytest.approx(sum(p.demands), rel=1e-3)


def test_microgrid_error_map_has_fixed_point_at_zero():
    net, specs, Bs, weights, op = build_microgrid()
    for s in net.subsystems:
        assert abs(evaluate(s.f[0], [0.0], s.params)) < 1e-12
    trajs = simulate_network(net, [np.zeros(1)] * BUSES, 15)
    assert max(np.abs(t).max() for t in trajs) < 1e-10
    for i, w in weights.items():
        assert sum(w.values()) == pytest.approx(1.0)


def test_microgrid_parameter_validation():
    with pytest.raises(ModelError):
        build_microgrid(MicrogridParams(tau=-1.0))
    bad = MicrogridParams(initial_halfwidth=50.0)
    assert bad.validate()


def test_region_summary():
    one = region_summary([Polytope(np.array([[2.0], [-1.0]]), np.array([4.0, 1.0]))])
    assert one == {"interval": [-1.0, 2.0]}
    sq = region_summary([Polytope.from_box([-1, -1], [1, 1])])
    assert sorted(map(tuple, sq["vertices"])) == [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    assert region_summary([]) is None
    assert region_summary([Polytope(np.array([[1.0, 0.0]]), np.array([1.0]))]) is None


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_case_study_output_files(tmp_path, name):
    report = run_case_study(name, 0, tmp_path)
    assert report["status"] == "ok", report["checks"]
    for f in ("report.json", "contracts.json", "model.json", "trajectories.csv", "assumptions.csv"):
        assert (tmp_path / f).is_file()
    on_disk = json.loads((tmp_path / "report.json").read_text())
    assert on_disk["case"] == name and on_disk["seed"] == 0
    with open(tmp_path / "trajectories.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["run_id", "subsystem", "k"]
    assert len(rows) > 1


def test_case_study_is_deterministic(tmp_path):
    run_case_study("ex3", 4, tmp_path / "a")
    run_case_study("ex3", 4, tmp_path / "b")
    for f in ("report.json", "contracts.json", "trajectories.csv", "assumptions.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_microgrid_report_carries_reference_values(tmp_path):
    report = run_case_study("microgrid", 0, tmp_path, falsification_samples=2000)
    assert report["status"] == "ok", report["checks"]
    rows = report["comparison"]
    assert [r["reference_halfwidth"] for r in rows] == REFERENCE_INTERVALS
    assert all(r["epsilon"] > 0 and r["state_interval"] is not None for r in rows)


def test_property_sections_are_order_independent():
    a = conjunction_section(3, 10).to_dict()
    property_suite(3, 2)
    b = conjunction_section(3, 10).to_dict()
    assert a == b
    assert len(set(SECTIONS.values())) == len(SECTIONS)


def test_property_suite_small():
    out = property_suite(1, 6)
    assert out["ok"], {k: v["failures"] for k, v in out["sections"].items() if not v["ok"]}
    assert set(CASE_STUDIES) == {"ex1", "ex2", "ex3", "microgrid"}
