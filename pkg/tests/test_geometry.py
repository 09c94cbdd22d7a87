import numpy as np
import pytest

from resagc.geometry import (
    And,
    Box,
    ExactReach,
    FiniteReach,
    ModelError,
    Polytope,
    SafetyWindow,
    always,
    conjoin,
    conjuncts,
    horizon,
    initial_constraints,
    member,
    satisfies,
    spec_digest,
    spec_equal,
    translate_assumption,
)

UNIT = Polytope.from_box([-1.0], [1.0])


def test_polytope_shape_checks():
    with pytest.raises(ModelError):
        Polytope(np.ones((2, 2)), np.ones(3))
    with pytest.raises(ModelError):
        Polytope(np.ones((0, 2)), np.ones(0))


def test_polytope_arrays_are_read_only():
    p = Polytope.from_box([-1, -2], [1, 2])
    with pytest.raises(ValueError):
        p.G[0, 0] = 5.0


def test_member_batches_and_tolerance():
    p = Polytope.from_box([-1, -1], [1, 1])
    pts = np.array([[0, 0], [1, 1], [1 + 1e-12, 0], [1.1, 0]])
    assert member(p, pts).tolist() == [True, True, True, False]
    assert member(p, [0.5, 0.5])


def test_box_vertices_skip_degenerate_axes():
    assert Box([0, 0], [1, 1]).vertices().shape == (4, 2)
    assert Box([0, 2], [1, 2]).vertices().shape == (2, 2)
    assert Box.point([3.0, 4.0]).vertices().tolist() == [[3.0, 4.0]]


def test_box_rejects_inverted_bounds():
    with pytest.raises(ModelError):
        Box([1.0], [0.0])


def test_box_sampling_stays_inside():
    B = Box([-1, 2], [1, 3])
    pts = B.sample(np.random.default_rng(0), 500)
    assert pts.shape == (500, 2)
    assert B.contains(pts).all()


def test_translate_assumption_matches_infinity_norm():
    rng = np.random.default_rng(1)
    for _ in range(50):
        C = rng.normal(size=(2, 3))
        eps = rng.uniform(0.1, 2.0)
        P = translate_assumption(C, eps)
        X = rng.normal(size=(200, 3))
        expected = np.abs(X @ C.T).max(axis=1) <= eps
        assert (member(P, X) == expected).all()


def test_translate_assumption_rejects_negative_radius():
    with pytest.raises(ValueError):
        translate_assumption(np.eye(2), -0.1)


def test_satisfies_safety_window():
    spec = always(UNIT, 2)
    traj = np.array([[0.0], [0.5], [0.9]])
    assert satisfies(spec, traj)
    assert not satisfies(spec, np.array([[0.0], [1.5], [0.0]]))
    window = SafetyWindow(UNIT, 1, 2)
    assert satisfies(window, np.array([[5.0], [0.5], [0.5]]))


def test_satisfies_exact_and_finite_reach():
    traj = np.array([[3.0], [2.0], [0.5], [3.0]])
    assert satisfies(ExactReach(UNIT, 2), traj)
    assert not satisfies(ExactReach(UNIT, 3), traj)
    assert satisfies(FiniteReach(UNIT, 3), traj)
    assert not satisfies(FiniteReach(UNIT, 1), traj)


def test_satisfies_batch_and_short_trajectory():
    spec = always(UNIT, 1)
    batch = np.array([[[0.0], [0.5]], [[0.0], [2.0]]])
    assert satisfies(spec, batch).tolist() == [True, False]
    with pytest.raises(ValueError):
        satisfies(ExactReach(UNIT, 3), np.zeros((3, 1)))


def test_conjoin_flattens_and_deduplicates():
    a, b = always(UNIT, 2), ExactReach(UNIT, 2)
    ab = conjoin(a, b)
    assert isinstance(ab, And) and len(conjuncts(ab)) == 2
    assert conjoin(ab, a) is not None and len(conjuncts(conjoin(ab, a))) == 2
    assert conjoin(a, always(UNIT, 2)) is a
    assert horizon(ab) == 2


def test_spec_equal_ignores_order_and_digest_is_stable():
    a, b = always(UNIT, 2), ExactReach(Polytope.from_box([-2.0], [2.0]), 2)
    assert spec_equal(conjoin(a, b), conjoin(b, a))
    assert spec_digest(conjoin(a, b)) == spec_digest(conjoin(b, a))
    assert spec_digest(a) != spec_digest(b)


def test_initial_constraints_only_step_zero_windows():
    s = conjoin(always(UNIT, 3), SafetyWindow(Polytope.from_box([-5.0], [5.0]), 1, 3))
    assert len(initial_constraints(s)) == 1
