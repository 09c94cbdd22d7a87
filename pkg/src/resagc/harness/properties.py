"""Randomised property suites for resilience and contract refinement.

Every section draws its instances from ``default_rng([seed, section, index])``
so results do not depend on which sections run or in what order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..contracts import (
    closed_loop_validation,
    maximality_probe,
    refine_L,
    refine_two,
    uniform_weights,
)
from ..dynamics import Network, Subsystem
from ..geometry import Box, ExactReach, Polytope, SafetyWindow, Spec, conjoin, conjuncts
from ..modelio import atom_to_json
from ..resilience import brute_force_resilience, resilience_linear

SECTIONS = {
    "brute_force": 1,
    "two_subsystems": 2,
    "three_subsystems": 3,
    "conjunction": 4,
    "vertex_min": 5,
    "refinement_monotone": 6,
}


def _rng(seed: int, section: str, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, SECTIONS[section], index])


# ---------------------------------------------------------------------------
# Generators


def random_matrix(rng, n: int, rho_max: float = 0.95) -> np.ndarray:
    A = rng.normal(size=(n, n))
    rho = max(abs(np.linalg.eigvals(A)))
    return A * (rng.uniform(0.2, rho_max) / rho if rho > 0 else 1.0)


def random_coupling(rng, n: int, m: int, norm_max: float = 1e-2) -> np.ndarray:
    C = rng.normal(size=(n, m))
    return C * (rng.uniform(0.1, 1.0) * norm_max / np.abs(C).sum(axis=1).max())


def random_polytope(rng, n: int) -> Polytope:
    """Box, or a random polytope with the origin well inside."""
    if rng.random() < 0.5:
        h = rng.uniform(2.0, 10.0, size=n)
        return Polytope.from_box(-h, h)
    rows = rng.normal(size=(2 * n + 2, n))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    G = np.vstack([rows, np.eye(n), -np.eye(n)])
    H = np.concatenate([rng.uniform(2.0, 10.0, size=len(rows)), np.full(2 * n, 12.0)])
    return Polytope(G, H)


def random_spec(rng, n: int, N: int, kinds=("safety", "exact_reach")) -> Spec:
    kind = kinds[rng.integers(len(kinds))]
    poly = random_polytope(rng, n)
    return SafetyWindow(poly, 0, N) if kind == "safety" else ExactReach(poly, N)


def random_box(rng, n: int, r_max: float = 1.0) -> Box:
    c = rng.uniform(-0.5, 0.5, size=n)
    r = rng.uniform(0.0, r_max, size=n)
    return Box(c - r, c + r)


def random_network(rng, L: int, dims=(1, 3)) -> Network:
    ns = rng.integers(dims[0], dims[1] + 1, size=L)
    subs = tuple(Subsystem.linear(i, random_matrix(rng, int(ns[i]))) for i in range(L))
    couplings = {}
    for i in range(L):
        for l in range(L):
            if i != l and (L == 2 or rng.random() < 0.7):
                couplings[(i, l)] = random_coupling(rng, int(ns[i]), int(ns[l]))
    return Network(subs, couplings)


def _bundle(net: Network, specs, Bs) -> dict:
    """Everything needed to replay a failing instance."""
    return {
        "A": [s.A.tolist() for s in net.subsystems],
        "couplings": {f"{i},{l}": C.tolist() for (i, l), C in net.couplings.items()},
        "specs": [[atom_to_json(a) for a in conjuncts(s)] for s in specs],
        "B": [{"lower": b.lower.tolist(), "upper": b.upper.tolist()} for b in Bs],
    }


@dataclass
class SectionResult:
    name: str
    total: int = 0
    passed: int = 0
    failures: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def record(self, ok: bool, index: int, why: str = "", bundle: dict | None = None) -> None:
        self.total += 1
        if ok:
            self.passed += 1
        elif len(self.failures) < 5:
            self.failures.append({"instance": index, "reason": why, **({"bundle": bundle} if bundle else {})})

    def to_dict(self) -> dict:
        return {"total": self.total, "passed": self.passed, "ok": self.ok, "failures": self.failures, **self.stats}


# ---------------------------------------------------------------------------
# Sections


def brute_force_section(seed: int, instances: int = 50, grid: int = 300) -> SectionResult:
    """Closed form versus the brute-force oracle, within one grid step on ``[0, 2 eps]``."""
    res = SectionResult("brute_force")
    worst = 0.0
    for idx in range(instances):
        rng = _rng(seed, "brute_force", idx)
        n, N = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        A = random_matrix(rng, n)
        spec = random_spec(rng, n, N)
        B = random_box(rng, n, 0.5)
        cf = resilience_linear(A, spec, B).epsilon
        if not (0 < cf < math.inf):
            res.record(False, idx, f"degenerate instance: closed form {cf}")
            continue
        bf = brute_force_resilience(Subsystem.linear(0, A), spec, B, grid, eps_max=2 * cf)
        step = 2 * cf / (grid - 1)
        gap = abs(cf - bf)
        worst = max(worst, gap / step)
        res.record(gap <= step * (1 + 1e-9), idx, f"closed form {cf} vs brute force {bf}")
    res.stats["worst_gap_in_steps"] = worst
    return res


def two_subsystem_section(seed: int, instances: int = 100, samples: int = 500, factor: float = 1.01):
    """Refinement soundness, monotone traces and maximality probes on random pairs."""
    soundness = SectionResult("closed_loop")
    monotone = SectionResult("monotone")
    maximal = SectionResult("maximality")
    terminated = SectionResult("terminated")
    for idx in range(instances):
        rng = _rng(seed, "two_subsystems", idx)
        net = random_network(rng, 2)
        N = int(rng.integers(2, 6))
        specs = [random_spec(rng, s.dim, N) for s in net.subsystems]
        Bs = [random_box(rng, s.dim, 0.5) for s in net.subsystems]
        s1, s2 = net.subsystems
        c1, c2, trace = refine_two(s1, s2, net.couplings[(0, 1)], net.couplings[(1, 0)], specs[0], specs[1], Bs[0], Bs[1])
        bundle = _bundle(net, specs, Bs)
        terminated.record(trace.terminated, idx, "no termination", bundle)
        monotone.record(trace.is_monotone(), idx, "radius increased", bundle)
        if trace.terminated:
            v = closed_loop_validation(net, [c1, c2], specs, Bs, samples, rng_seed=idx)
            ok = v.samples > 0 and v.all_ok
            soundness.record(ok, idx, f"rates {v.to_dict()}", bundle)
        for c in (c1, c2):
            probe = maximality_probe(net.subsystems[c.subsystem], c, Bs[c.subsystem], len(conjuncts(specs[c.subsystem])), factor)
            if probe.probed:
                maximal.record(probe.violated, idx, f"no violation at {factor} x eps for subsystem {c.subsystem}", bundle)
    return {"terminated": terminated, "monotone": monotone, "closed_loop": soundness, "maximality": maximal}


def three_subsystem_section(seed: int, instances: int = 50, samples: int = 1000) -> SectionResult:
    """Uniform-weight refinement: every closed-loop state respects the split input bounds."""
    res = SectionResult("linf_decomposition")
    for idx in range(instances):
        rng = _rng(seed, "three_subsystems", idx)
        net = random_network(rng, 3)
        N = int(rng.integers(2, 6))
        specs = [random_spec(rng, s.dim, N) for s in net.subsystems]
        Bs = [random_box(rng, s.dim, 0.5) for s in net.subsystems]
        weights = uniform_weights(net)
        contracts, trace = refine_L(net, specs, Bs, weights)
        bundle = _bundle(net, specs, Bs)
        if not trace.terminated:
            res.record(False, idx, "no termination", bundle)
            continue
        v = closed_loop_validation(net, contracts, specs, Bs, samples, rng_seed=idx)
        ok, why = v.samples > 0, "no initial states"
        for i, c in enumerate(contracts):
            if not math.isfinite(c.epsilon):
                continue
            w_i = np.zeros_like(v.inputs[i])
            for l in net.neighbors(i):
                term = v.trajectories[l][..., :N, :] @ net.couplings[(i, l)].T
                bound = weights[i][l] * c.epsilon
                if np.abs(term).max(initial=0.0) > bound * (1 + 1e-9) + 1e-12:
                    ok, why = False, f"term {l}->{i} exceeds lambda*eps"
                w_i = w_i + term
            if np.abs(w_i).max(initial=0.0) > c.epsilon * (1 + 1e-9) + 1e-12:
                ok, why = False, f"input of {i} exceeds eps"
        res.record(ok, idx, why, bundle)
    return res


def conjunction_section(seed: int, instances: int = 100, rel: float = 1e-12) -> SectionResult:
    res = SectionResult("conjunction_is_min")
    for idx in range(instances):
        rng = _rng(seed, "conjunction", idx)
        n, N = int(rng.integers(1, 4)), int(rng.integers(1, 8))
        A, B = random_matrix(rng, n), random_box(rng, n, 0.5)
        p1, p2 = random_spec(rng, n, N), random_spec(rng, n, N)
        e1 = resilience_linear(A, p1, B).epsilon
        e2 = resilience_linear(A, p2, B).epsilon
        e12 = resilience_linear(A, conjoin(p1, p2), B).epsilon
        m = min(e1, e2)
        ok = e12 == m or abs(e12 - m) <= rel * max(abs(m), 1e-300)
        res.record(ok, idx, f"{e12} != min({e1}, {e2})")
    return res


def vertex_min_section(seed: int, instances: int = 100, rel: float = 1e-12) -> SectionResult:
    res = SectionResult("set_resilience_is_vertex_min")
    for idx in range(instances):
        rng = _rng(seed, "vertex_min", idx)
        n, N = int(rng.integers(1, 4)), int(rng.integers(1, 8))
        A, B = random_matrix(rng, n), random_box(rng, n, 1.0)
        spec = random_spec(rng, n, N)
        eB = resilience_linear(A, spec, B).epsilon
        ev = min(resilience_linear(A, spec, Box.point(v)).epsilon for v in B.vertices())
        ok = eB == ev or abs(eB - ev) <= rel * max(abs(ev), 1e-300)
        res.record(ok, idx, f"box {eB} vs vertex min {ev}")
    return res


def refinement_monotone_section(seed: int, instances: int = 100) -> SectionResult:
    res = SectionResult("refinement_lowers_resilience")
    for idx in range(instances):
        rng = _rng(seed, "refinement_monotone", idx)
        n, N = int(rng.integers(1, 4)), int(rng.integers(1, 8))
        A, B = random_matrix(rng, n), random_box(rng, n, 0.5)
        spec = random_spec(rng, n, N)
        tighter = conjoin(spec, random_spec(rng, n, N))
        e, et = resilience_linear(A, spec, B).epsilon, resilience_linear(A, tighter, B).epsilon
        res.record(et <= e, idx, f"refined {et} > original {e}")
    return res


def property_suite(seed: int, instances: int = 100) -> dict:
    """Run every section; ``instances`` sets the size of the random corpora (the three-subsystem
    and brute-force corpora use half as many)."""
    half = max(1, instances // 2)
    two = two_subsystem_section(seed, instances)
    sections = {
        "brute_force": brute_force_section(seed, half),
        **{f"two_subsystems.{k}": v for k, v in two.items()},
        "three_subsystems.linf_decomposition": three_subsystem_section(seed, half),
        "laws.conjunction_is_min": conjunction_section(seed, instances),
        "laws.set_resilience_is_vertex_min": vertex_min_section(seed, instances),
        "laws.refinement_lowers_resilience": refinement_monotone_section(seed, instances),
    }
    out = {name: s.to_dict() for name, s in sections.items()}
    return {"seed": seed, "instances": instances, "ok": all(s.ok for s in sections.values()), "sections": out}
