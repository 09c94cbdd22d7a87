import math

import numpy as np
import pytest

from resagc.contracts import (
    Contract,
    check_contract,
    closed_loop_validation,
    maximality_probe,
    refine_L,
    refine_two,
    translated_constraint,
    uniform_weights,
    validate_weights,
)
from resagc.dynamics import Network, Subsystem
from resagc.geometry import Box, Polytope, always, conjuncts, member
from resagc.harness.properties import random_network, random_box, random_spec
from resagc.resilience import ResilienceResult, resilience_linear

UNIT = Polytope.from_box([-1.0], [1.0])


def _scalar_pair(c12=0.1, c21=0.1, a=0.5):
    subs = (Subsystem.linear(0, [[a]]), Subsystem.linear(1, [[a]]))
    return Network(subs, {(0, 1): [[c12]], (1, 0): [[c21]]})


def test_translated_constraint_window():
    s = translated_constraint([[2.0]], 1.0, 4)
    assert (s.k_start, s.k_end) == (0, 3)
    assert member(s.poly, [0.5]) and not member(s.poly, [0.6])


def test_uniform_and_validated_weights():
    net = random_network(np.random.default_rng(0), 3)
    w = uniform_weights(net)
    assert validate_weights(net, w) == []
    i = next(iter(w))
    bad = {k: dict(v) for k, v in w.items()}
    bad[i][next(iter(bad[i]))] += 0.5
    assert validate_weights(net, bad)


def test_refine_two_scalar_pair_is_sound():
    net = _scalar_pair()
    spec = always(Polytope.from_box([-2.0], [2.0]), 3)
    B = Box.ball([0.0], 0.5)
    c1, c2, trace = refine_two(*net.subsystems, [[0.1]], [[0.1]], spec, spec, B, B)
    assert trace.terminated and trace.is_monotone()
    assert c1.epsilon > 0 and c2.epsilon > 0
    # the neighbour's state bound times the gain must lie within the assumption
    for c, other in ((c1, c2), (c2, c1)):
        extra = conjuncts(other.guarantee)[1:]
        assert extra, "neighbour received a constraint"
        bound = min(a.poly.H.min() / np.abs(a.poly.G).max() for a in extra)
        assert 0.1 * bound <= c.epsilon * (1 + 1e-9)
    v = closed_loop_validation(net, [c1, c2], [spec, spec], [B, B], 500, 1)
    assert v.all_ok


def test_refine_two_trace_records_every_iteration():
    net = _scalar_pair(0.3, 0.3, 0.6)
    spec = always(Polytope.from_box([-2.0], [2.0]), 4)
    B = Box.ball([0.0], 0.5)
    _, _, trace = refine_two(*net.subsystems, [[0.3]], [[0.3]], spec, spec, B, B)
    assert trace.iterations_used == len(trace.to_dict()["iterations"])
    assert trace.epsilons(0)[0] >= trace.epsilons(0)[-1]


def test_refine_two_without_coupling_stops_at_once():
    subs = (Subsystem.linear(0, [[0.5]]), Subsystem.linear(1, [[0.5]]))
    spec = always(UNIT, 2)
    c1, c2, trace = refine_two(*subs, [[0.0]], [[0.0]], spec, spec, Box.point([0.0]), Box.point([0.0]))
    assert trace.terminated and trace.iterations_used == 1
    assert c1.epsilon == pytest.approx(2 / 3)


def test_refine_two_rejects_mixed_horizons():
    subs = (Subsystem.linear(0, [[0.5]]), Subsystem.linear(1, [[0.5]]))
    with pytest.raises(ValueError):
        refine_two(*subs, [[0.1]], [[0.1]], always(UNIT, 2), always(UNIT, 3), Box.point([0.0]), Box.point([0.0]))


def test_refine_L_matches_refine_two_fixed_point_soundness():
    rng = np.random.default_rng(5)
    net = random_network(rng, 4)
    specs = [random_spec(rng, s.dim, 3) for s in net.subsystems]
    Bs = [random_box(rng, s.dim, 0.5) for s in net.subsystems]
    contracts, trace = refine_L(net, specs, Bs)
    assert trace.terminated and trace.is_monotone()
    v = closed_loop_validation(net, contracts, specs, Bs, 300, 0)
    assert v.all_ok


def test_refine_L_is_thread_count_independent(monkeypatch):
    rng = np.random.default_rng(9)
    net = random_network(rng, 3)
    specs = [random_spec(rng, s.dim, 3) for s in net.subsystems]
    Bs = [random_box(rng, s.dim, 0.5) for s in net.subsystems]
    monkeypatch.setenv("AGC_THREADS", "1")
    a, _ = refine_L(net, specs, Bs)
    monkeypatch.setenv("AGC_THREADS", "4")
    b, _ = refine_L(net, specs, Bs)
    assert [c.epsilon for c in a] == [c.epsilon for c in b]


def test_refine_L_rejects_bad_weights():
    net = _scalar_pair()
    spec = always(UNIT, 2)
    with pytest.raises(ValueError):
        refine_L(net, [spec, spec], [Box.point([0.0])] * 2, {0: {1: 0.5}, 1: {0: 1.0}})


def test_check_contract_accepts_and_rejects():
    sub = Subsystem.linear(0, [[0.5]])
    spec = always(UNIT, 2)
    B = Box.point([0.0])
    res = resilience_linear(sub.A, spec, B)
    good = Contract(0, res.epsilon, spec, 2, res)
    chk = check_contract(sub, good, B, 500)
    assert chk.rate == 1.0 and chk.counterexample is None
    inflated = Contract(0, res.epsilon * 1.05, spec, 2, res)
    chk = check_contract(sub, inflated, B, 500)
    assert chk.rate < 1.0 and chk.counterexample is not None


def test_check_contract_with_infinite_radius_uses_stand_in():
    sub = Subsystem.linear(0, [[0.5]])
    spec = always(Polytope(np.array([[0.0]]), np.array([1.0])), 2)
    res = ResilienceResult(math.inf, "exact")
    chk = check_contract(sub, Contract(0, math.inf, spec, 2, res), Box.point([0.0]), 50)
    assert chk.rate == 1.0


def test_maximality_probe_finds_violation():
    sub = Subsystem.linear(0, [[0.5]])
    spec = always(UNIT, 3)
    B = Box.ball([0.0], 0.2)
    res = resilience_linear(sub.A, spec, B)
    probe = maximality_probe(sub, Contract(0, res.epsilon, spec, 3, res), B, 1)
    assert probe.probed and probe.violated and probe.binding_original
