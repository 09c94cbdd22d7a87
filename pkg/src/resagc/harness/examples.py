"""The three linear examples (safety, exact-time reach, finite-time reach)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dynamics import Network, Subsystem
from ..geometry import Box, ExactReach, FiniteReach, Polytope, always
from ..modelio import Model
from ..resilience import ResilienceConfig


@dataclass
class CaseStudy:
    name: str
    model: Model
    validation_samples: int
    reference: dict = field(default_factory=dict)


def _rows(*cols):
    """Polytope normals given column-wise, as printed (``G = [c1 c2]^T``)."""
    return np.array(cols, dtype=float).T


# Example 1: three subsystems, finite-horizon safety
EX1_A = [
    [[0.1, -0.5], [-0.1, 0.7]],
    [[0.6, 0.0], [-0.1, 0.6]],
    [[-0.5, 0.0], [0.0, -0.5]],
]
EX1_C = {
    (0, 1): [[0.008, 0.001], [-0.006, -0.009]],
    (0, 2): [[0.008, 0.001], [-0.006, -0.009]],
    (1, 0): [[-0.001, 0.002], [0.001, -0.001]],
    (1, 2): [[-0.005, 0.002], [0.001, -0.005]],
    (2, 0): [[0.001, 0.0], [0.0, 0.001]],
}
EX1_G = [
    _rows([1, 0.1, -1, 0.1], [0.1, 1, 0.1, -1]),
    _rows([2, 0, -1, 0.2], [0, 2, 0.2, -1]),
    _rows([1, 0, -1, 0], [0, 1, 0, -1]),
]
EX1_H = [[10, 10, 14, 14], [10, 10, 14, 14], [10, 10, 10, 10]]

# Examples 2 and 3: two identical subsystems
EX2_A = [[0.1, -1.0], [-0.5, -0.2]]
EX2_C12 = [[0.001, 0.0], [0.0, 0.001]]
EX2_C21 = [[0.0004, 0.0], [0.0, 0.0004]]
EX2_G = _rows([1, 0, -1, 0], [0, 1, 0, -1])
EX2_H = [[10, 10, 14, 14], [9, 9, 9, 9]]

# Initial sets: boxes around the origin for the safety and exact-reach examples,
# a small box outside both targets for the finite-reach example (from the
# origin every trajectory already sits in its target, which makes the reach
# radius unbounded).
EX1_B_RADIUS = 1.0
EX2_B_RADIUS = 1.0
EX3_START = [20.0, 20.0]
EX3_B_RADIUS = 0.5


def gamma(example: str, i: int) -> Polytope:
    if example == "ex1":
        return Polytope(EX1_G[i], EX1_H[i])
    return Polytope(EX2_G, EX2_H[i])


def build_example(name: str, b_radius: float | None = None) -> CaseStudy:
    """Example network with its specifications, initial sets and algorithm settings."""
    if name == "ex1":
        subs = tuple(Subsystem.linear(i, A) for i, A in enumerate(EX1_A))
        net = Network(subs, {k: np.array(v) for k, v in EX1_C.items()})
        specs = [always(gamma("ex1", i), 3) for i in range(3)]
        r = EX1_B_RADIUS if b_radius is None else b_radius
        Bs = [Box.ball(np.zeros(2), r) for _ in range(3)]
        model = Model(net, specs, Bs, weights={i: {l: 1.0 / len(net.neighbors(i)) for l in net.neighbors(i)} for i in range(3)})
        return CaseStudy("ex1", model, 100, {"iterations": 3})
    if name not in ("ex2", "ex3"):
        raise ValueError(f"unknown example {name!r} (expected ex1, ex2 or ex3)")
    subs = (Subsystem.linear(0, EX2_A), Subsystem.linear(1, EX2_A))
    net = Network(subs, {(0, 1): np.array(EX2_C12), (1, 0): np.array(EX2_C21)})
    if name == "ex2":
        specs = [ExactReach(gamma("ex2", i), 3) for i in range(2)]
        r = EX2_B_RADIUS if b_radius is None else b_radius
        Bs = [Box.ball(np.zeros(2), r) for _ in range(2)]
        return CaseStudy("ex2", Model(net, specs, Bs), 15, {"iterations": 3})
    specs = [FiniteReach(gamma("ex3", i), 4) for i in range(2)]
    r = EX3_B_RADIUS if b_radius is None else b_radius
    Bs = [Box.ball(np.array(EX3_START), r) for _ in range(2)]
    cfg = ResilienceConfig(eta=0.01, beta=0.05, samples_override=13, seed=0)
    return CaseStudy("ex3", Model(net, specs, Bs, config=cfg), 15, {"iterations": 3, "samples": 13})
