"""Assume-guarantee contracts and the iterative refinement engines.

Each subsystem ``i`` gets an assumption ``||w_i(k)||_inf <= eps_i`` for
``k = 0..N-1`` and a guarantee specification. Refinement alternates between
computing resilience radii and pushing them through the coupling matrices as
safety constraints on the neighbours (``|C_il x_l(k)| <= lambda * eps_i``).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dynamics import Network, Subsystem, simulate_network, simulate_open
from .geometry import (
    TOL_FEAS,
    Box,
    FiniteReach,
    SafetyWindow,
    Spec,
    conjoin,
    conjuncts,
    horizon,
    initial_constraints,
    member,
    satisfies,
    spec_digest,
    translate_assumption,
)
from .resilience import (
    ResilienceConfig,
    ResilienceResult,
    adversarial_disturbance,
    compute_resilience,
    eps_to_json,
    resilience_linear,
)


@dataclass(frozen=True, eq=False)
class Contract:
    subsystem: int
    epsilon: float
    guarantee: Spec
    horizon: int
    result: ResilienceResult

    @property
    def kind(self) -> str:
        return self.result.kind


@dataclass(frozen=True)
class StepRecord:
    subsystem: int
    epsilon: float
    conjuncts: int
    digest: str

    def to_dict(self) -> dict:
        return {
            "subsystem": self.subsystem,
            "epsilon": eps_to_json(self.epsilon),
            "conjuncts": self.conjuncts,
            "digest": self.digest,
        }


@dataclass
class RefinementTrace:
    iterations: list[list[StepRecord]] = field(default_factory=list)
    terminated: bool = False

    @property
    def iterations_used(self) -> int:
        return len(self.iterations)

    def epsilons(self, i: int) -> list[float]:
        return [rec.epsilon for it in self.iterations for rec in it if rec.subsystem == i]

    def is_monotone(self) -> bool:
        """Radii never increase and conjunct counts never shrink (per subsystem)."""
        subs = {rec.subsystem for it in self.iterations for rec in it}
        for i in subs:
            recs = [rec for it in self.iterations for rec in it if rec.subsystem == i]
            for a, b in zip(recs, recs[1:]):
                if b.epsilon > a.epsilon or b.conjuncts < a.conjuncts:
                    return False
        return True

    def to_dict(self) -> dict:
        return {
            "terminated": self.terminated,
            "iterations_used": self.iterations_used,
            "iterations": [[rec.to_dict() for rec in it] for it in self.iterations],
        }


Weights = Mapping[int, Mapping[int, float]]


def uniform_weights(net: Network) -> dict[int, dict[int, float]]:
    return {i: {l: 1.0 / len(net.neighbors(i)) for l in net.neighbors(i)} for i in range(net.size) if net.neighbors(i)}


def validate_weights(net: Network, weights: Weights, tol: float = TOL_FEAS) -> list[str]:
    """All violations of the weight rules (empty list when valid)."""
    errors = []
    for i in range(net.size):
        nbrs = net.neighbors(i)
        w = weights.get(i, {})
        extra = sorted(set(w) - set(nbrs))
        if extra:
            errors.append(f"subsystem {i}: weights given for non-neighbours {extra}")
        if not nbrs:
            continue
        missing = sorted(set(nbrs) - set(w))
        if missing:
            errors.append(f"subsystem {i}: missing weights for neighbours {missing}")
        if any(v < 0 for v in w.values()):
            errors.append(f"subsystem {i}: negative weight")
        total = sum(w.get(l, 0.0) for l in nbrs)
        if abs(total - 1.0) > tol:
            errors.append(f"subsystem {i}: weights sum to {total:g}, expected 1")
    return errors


def translated_constraint(C, radius: float, N: int) -> SafetyWindow:
    """Safety constraint on a neighbour's states ``0..N-1`` induced by an input-ball assumption."""
    return SafetyWindow(translate_assumption(C, radius), 0, N - 1)


class _Refiner:
    """Shared bookkeeping: which radius was last pushed along each coupling edge."""

    def __init__(self, couplings, N: int, tol: float):
        self.couplings = couplings
        self.N = N
        self.tol = tol
        self.sent: dict[tuple[int, int], float] = {}

    def push(self, edge: tuple[int, int], radius: float, psi: Spec) -> tuple[Spec, bool]:
        """Constrain the neighbour to ``radius`` less a margin of ``tol * (1 + radius)``.

        A radius that still covers the constraint already on the edge adds
        nothing. Each addition therefore shrinks the edge's radius by at least
        ``tol`` (so refinement stops), and the final radii always cover the
        pushed constraints (so the contracts stay sound).
        """
        C = self.couplings[edge]
        if math.isinf(radius) or not np.any(C):
            return psi, False
        prev = self.sent.get(edge)
        if prev is not None and radius >= prev:
            return psi, False
        pushed = max(radius - self.tol * (1.0 + radius), 0.0)
        if prev is not None and pushed >= prev:
            return psi, False
        self.sent[edge] = pushed
        return conjoin(psi, translated_constraint(C, pushed, self.N)), True


def _common_horizon(psis: Sequence[Spec]) -> int:
    hs = {horizon(p) for p in psis}
    if len(hs) != 1:
        raise ValueError(f"specifications must share one horizon, got {sorted(hs)}")
    N = hs.pop()
    if N < 1:
        raise ValueError("horizon must be at least 1")
    return N


def _record(i: int, res: ResilienceResult, psi: Spec) -> StepRecord:
    return StepRecord(i, res.epsilon, len(conjuncts(psi)), spec_digest(psi))


def refine_two(
    sub1: Subsystem,
    sub2: Subsystem,
    C12,
    C21,
    psi1: Spec,
    psi2: Spec,
    B1: Box,
    B2: Box,
    max_iter: int = 50,
    tol: float = 1e-9,
    config: ResilienceConfig | None = None,
) -> tuple[Contract, Contract, RefinementTrace]:
    """Two-subsystem refinement with in-iteration (Gauss-Seidel) updates.

    ``C12`` maps ``x2`` into ``w1`` and ``C21`` maps ``x1`` into ``w2``.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    N = _common_horizon([psi1, psi2])
    couplings = {(0, 1): np.atleast_2d(np.asarray(C12, float)), (1, 0): np.atleast_2d(np.asarray(C21, float))}
    ref = _Refiner(couplings, N, tol)
    trace = RefinementTrace()
    for _ in range(max_iter):
        r1 = compute_resilience(sub1, psi1, B1, config)
        rec1 = _record(0, r1, psi1)
        psi2, changed2 = ref.push((0, 1), r1.epsilon, psi2)
        r2 = compute_resilience(sub2, psi2, B2, config)
        rec2 = _record(1, r2, psi2)
        psi1, changed1 = ref.push((1, 0), r2.epsilon, psi1)
        trace.iterations.append([rec1, rec2])
        if not (changed1 or changed2):
            trace.terminated = True
            break
    c1 = Contract(0, r1.epsilon, psi1, N, r1)
    c2 = Contract(1, r2.epsilon, psi2, N, r2)
    return c1, c2, trace


def _workers() -> int | None:
    try:
        n = int(os.environ.get("AGC_THREADS", "0"))
    except ValueError:
        n = 0
    return None if n <= 0 else n


def refine_L(
    net: Network,
    psis: Sequence[Spec],
    Bs: Sequence[Box],
    weights: Weights | None = None,
    max_iter: int = 50,
    tol: float = 1e-9,
    config: ResilienceConfig | None = None,
) -> tuple[list[Contract], RefinementTrace]:
    """``L``-subsystem refinement with simultaneous (Jacobi) updates.

    Each subsystem's radius is split across its in-neighbours by ``weights``
    and every share is pushed onto the corresponding neighbour's specification.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if len(psis) != net.size or len(Bs) != net.size:
        raise ValueError("need one specification and one initial set per subsystem")
    weights = uniform_weights(net) if weights is None else weights
    errors = validate_weights(net, weights)
    if errors:
        raise ValueError("; ".join(errors))
    N = _common_horizon(psis)
    psis = list(psis)
    ref = _Refiner(net.couplings, N, tol)
    trace = RefinementTrace()
    workers = _workers()

    def res(i):
        return compute_resilience(net.subsystems[i], psis[i], Bs[i], config)

    for _ in range(max_iter):
        if workers == 1 or net.size == 1:
            results = [res(i) for i in range(net.size)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(res, range(net.size)))
        trace.iterations.append([_record(i, results[i], psis[i]) for i in range(net.size)])
        new = list(psis)
        changed = False
        for i in range(net.size):
            for l in net.neighbors(i):
                new[l], ch = ref.push((i, l), weights[i][l] * results[i].epsilon, new[l])
                changed |= ch
        psis = new
        if not changed:
            trace.terminated = True
            break
    contracts = [Contract(i, results[i].epsilon, psis[i], N, results[i]) for i in range(net.size)]
    return contracts, trace


# ---------------------------------------------------------------------------
# Checks


@dataclass
class ContractCheck:
    subsystem: int
    samples: int
    satisfied: int
    counterexample: dict | None = None

    @property
    def rate(self) -> float:
        return self.satisfied / self.samples if self.samples else 1.0

    def to_dict(self) -> dict:
        d = {"subsystem": self.subsystem, "samples": self.samples, "satisfied": self.satisfied, "rate": self.rate}
        if self.counterexample is not None:
            d["counterexample"] = self.counterexample
        return d


def _adversarial_probes(sub: Subsystem, contract: Contract, B: Box, eps: float):
    """Worst-case disturbance for the weakest constraint of a linear guarantee."""
    if not sub.is_linear or eps <= 0 or any(isinstance(a, FiniteReach) for a in conjuncts(contract.guarantee)):
        return []
    res = resilience_linear(sub.A, contract.guarantee, B)
    b = res.binding
    if b is None or b.step < 1:
        return []
    W = adversarial_disturbance(sub.A, b.row, b.step, b.vertex, eps, contract.horizon)
    return [(b.vertex, W)]


def check_contract(
    sub: Subsystem,
    contract: Contract,
    B: Box,
    samples: int,
    rng_seed: int = 0,
    adversarial: bool = True,
    inf_radius: float = 1e3,
) -> ContractCheck:
    """Monte Carlo check of ``w in assumption => x in guarantee`` on the open-loop subsystem.

    Initial states are uniform in ``B``. Half of the disturbances are uniform
    in the assumption ball and half are random sign sequences on its
    boundary. For linear guarantees the worst-case disturbance on the weakest
    constraint is appended.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    N = contract.horizon
    eps = contract.epsilon if math.isfinite(contract.epsilon) else inf_radius
    x0 = B.sample(rng, samples)
    W = rng.uniform(-eps, eps, size=(samples, N, sub.dim))
    half = samples // 2
    W[half:] = eps * rng.choice([-1.0, 1.0], size=(samples - half, N, sub.dim))
    probes = _adversarial_probes(sub, contract, B, eps) if adversarial else []
    if probes:
        x0 = np.vstack([x0] + [p[0][None] for p in probes])
        W = np.concatenate([W] + [p[1][None] for p in probes])
    traj = simulate_open(sub, x0, W)
    ok = np.atleast_1d(satisfies(contract.guarantee, traj))
    cex = None
    if not ok.all():
        j = int(np.flatnonzero(~ok)[0])
        cex = {"x0": x0[j].tolist(), "w": W[j].tolist(), "trajectory": traj[j].tolist()}
    return ContractCheck(contract.subsystem, len(ok), int(ok.sum()), cex)


def sample_initial_states(
    B: Box, constraints: Sequence, rng: np.random.Generator, count: int, max_rounds: int = 200
) -> np.ndarray:
    """Rejection-sample ``count`` points of ``B`` that satisfy every polytope in ``constraints``."""
    if np.all(B.lower == B.upper):
        x = B.lower
        if all(member(p, x) for p in constraints):
            return np.repeat(x[None], count, axis=0)
        return np.zeros((0, B.dim))
    got = []
    n_got = 0
    for _ in range(max_rounds):
        cand = B.sample(rng, max(count, 64))
        keep = np.ones(len(cand), dtype=bool)
        for p in constraints:
            keep &= member(p, cand)
        got.append(cand[keep])
        n_got += int(keep.sum())
        if n_got >= count:
            break
    pts = np.vstack(got) if got else np.zeros((0, B.dim))
    return pts[:count]


@dataclass
class ValidationResult:
    samples: int
    rate_original: list[float]
    rate_guarantee: list[float]
    inputs_in_assumption: list[float]
    max_input_ratio: list[float]
    trajectories: list[np.ndarray]
    inputs: list[np.ndarray]

    @property
    def all_ok(self) -> bool:
        return self.samples > 0 and all(
            r == 1.0 for r in self.rate_original + self.rate_guarantee + self.inputs_in_assumption
        )

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "rate_original": self.rate_original,
            "rate_guarantee": self.rate_guarantee,
            "inputs_in_assumption": self.inputs_in_assumption,
            "max_input_ratio": self.max_input_ratio,
        }


def closed_loop_validation(
    net: Network,
    contracts: Sequence[Contract],
    original: Sequence[Spec],
    Bs: Sequence[Box],
    samples: int,
    rng_seed: int = 0,
    tol: float = 1e-9,
) -> ValidationResult:
    """Simulate the interconnected network from initial states consistent with the contracts.

    Initial states of subsystem ``i`` are drawn from ``B_i`` intersected with
    the step-0 constraints of its guarantee. Reports, per subsystem, the rate
    at which the original specification and the guarantee hold, and the rate
    at which every recorded internal input lies in the assumption ball.
    """
    rng = np.random.default_rng(rng_seed)
    N = contracts[0].horizon
    x0 = [sample_initial_states(Bs[i], initial_constraints(c.guarantee), rng, samples) for i, c in enumerate(contracts)]
    m = min(len(x) for x in x0)
    x0 = [x[:m] for x in x0]
    trajs, inputs = simulate_network(net, x0, N, return_inputs=True)
    rate_o, rate_g, rate_w, ratio_w = [], [], [], []
    for i, c in enumerate(contracts):
        so = np.atleast_1d(satisfies(original[i], trajs[i])) if m else np.zeros(0, bool)
        sg = np.atleast_1d(satisfies(c.guarantee, trajs[i])) if m else np.zeros(0, bool)
        mag = np.abs(inputs[i]).reshape(m, -1).max(axis=1) if m and inputs[i].size else np.zeros(m)
        bound = c.epsilon * (1 + tol) + tol
        rate_o.append(float(so.mean()) if m else 0.0)
        rate_g.append(float(sg.mean()) if m else 0.0)
        rate_w.append(float((mag <= bound).mean()) if m else 0.0)
        ratio_w.append(float(mag.max() / c.epsilon) if m and c.epsilon > 0 and math.isfinite(c.epsilon) else 0.0)
    return ValidationResult(m, rate_o, rate_g, rate_w, ratio_w, trajs, inputs)


@dataclass
class MaximalityProbe:
    subsystem: int
    probed: bool
    violated: bool = False
    binding_original: bool = False
    x0: np.ndarray | None = None
    w: np.ndarray | None = None


def maximality_probe(sub: Subsystem, contract: Contract, B: Box, n_original: int, factor: float = 1.01) -> MaximalityProbe:
    """Inflate an exact radius by ``factor`` and drive the binding constraint with the worst disturbance.

    ``n_original`` is the number of conjuncts of the original specification;
    the probe reports whether the violated constraint belongs to it or to a
    translated neighbour constraint.
    """
    eps = contract.epsilon
    if contract.kind != "exact" or not sub.is_linear or not (0 < eps < math.inf):
        return MaximalityProbe(contract.subsystem, False)
    res = resilience_linear(sub.A, contract.guarantee, B)
    b = res.binding
    if b is None or b.step < 1:
        return MaximalityProbe(contract.subsystem, False)
    W = adversarial_disturbance(sub.A, b.row, b.step, b.vertex, factor * eps, contract.horizon)
    traj = simulate_open(sub, b.vertex, W)
    violated = not bool(satisfies(contract.guarantee, traj))
    return MaximalityProbe(contract.subsystem, True, violated, b.conjunct < n_original, b.vertex, W)
