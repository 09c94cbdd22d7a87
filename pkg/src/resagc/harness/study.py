"""Synthesis runs, case studies and the files they leave behind.

An output directory receives ``report.json``, ``contracts.json``,
``model.json``, ``trajectories.csv`` and ``assumptions.csv``. Nothing
time-dependent is written, so equal seeds give byte-identical files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection

from ..contracts import (
    Contract,
    RefinementTrace,
    ValidationResult,
    check_contract,
    closed_loop_validation,
    refine_L,
    refine_two,
)
from ..geometry import Polytope, SafetyWindow, conjuncts
from ..modelio import Model, contracts_to_dict, dump_json, model_to_dict
from ..resilience import eps_to_json
from .examples import CaseStudy, build_example
from .microgrid import REFERENCE_INTERVALS, MicrogridParams, build_microgrid

CASE_STUDIES = ("ex1", "ex2", "ex3", "microgrid")


@dataclass
class Outcome:
    model: Model
    contracts: list[Contract]
    trace: RefinementTrace
    validation: ValidationResult
    checks: dict[str, bool] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def refine(model: Model) -> tuple[list[Contract], RefinementTrace]:
    net = model.network
    if model.algorithm == "two":
        c1, c2, trace = refine_two(
            net.subsystems[0], net.subsystems[1],
            net.couplings.get((0, 1), np.zeros((net.subsystems[0].dim, net.subsystems[1].dim))),
            net.couplings.get((1, 0), np.zeros((net.subsystems[1].dim, net.subsystems[0].dim))),
            model.specs[0], model.specs[1], model.initial_sets[0], model.initial_sets[1],
            max_iter=model.max_iter, tol=model.tol, config=model.config,
        )
        return [c1, c2], trace
    return refine_L(net, model.specs, model.initial_sets, model.weights, model.max_iter, model.tol, model.config)


def synthesize(model: Model, samples: int, seed: int) -> Outcome:
    """Refine contracts, then validate them on the closed loop."""
    contracts, trace = refine(model)
    validation = closed_loop_validation(model.network, contracts, model.specs, model.initial_sets, samples, seed)
    checks = {
        "terminated": trace.terminated,
        "positive_radii": all(c.epsilon > 0 for c in contracts),
        "validation_samples_drawn": validation.samples > 0,
        "original_spec_rate_1": all(r == 1.0 for r in validation.rate_original),
        "guarantee_rate_1": all(r == 1.0 for r in validation.rate_guarantee),
        "inputs_in_assumption_rate_1": all(r == 1.0 for r in validation.inputs_in_assumption),
    }
    return Outcome(model, contracts, trace, validation, checks)


# ---------------------------------------------------------------------------
# Assumption regions in state space


def translated_constraints(contract: Contract, n_original: int) -> list[Polytope]:
    """State-space constraints a contract's guarantee received from its neighbours."""
    return [a.poly for a in conjuncts(contract.guarantee)[n_original:] if isinstance(a, SafetyWindow)]


def region_summary(polys: list[Polytope]) -> dict | None:
    """Interval (1-D) or vertex list (2-D) of the intersection of ``polys``; ``None`` if unbounded or other dims."""
    if not polys:
        return None
    G = np.vstack([p.G for p in polys])
    H = np.concatenate([p.H for p in polys])
    n = G.shape[1]
    if n == 1:
        g = G[:, 0]
        hi = min((h / c for c, h in zip(g, H) if c > 0), default=np.inf)
        lo = max((h / c for c, h in zip(g, H) if c < 0), default=-np.inf)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            return None
        return {"interval": [float(lo), float(hi)]}
    if n != 2:
        return None
    # Chebyshev centre gives a strictly interior point
    norms = np.linalg.norm(G, axis=1)
    lp = linprog(np.r_[0.0, 0.0, -1.0], A_ub=np.c_[G, norms], b_ub=H, bounds=[(None, None)] * 2 + [(0, None)])
    if lp.status != 0 or lp.x[2] <= 1e-12:
        return None
    hs = HalfspaceIntersection(np.c_[G, -H], lp.x[:2])
    pts = hs.intersections
    if not np.all(np.isfinite(pts)):
        return None
    c = pts.mean(axis=0)
    order = np.argsort(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))
    pts = pts[order]
    keep = [p for i, p in enumerate(pts) if i == 0 or np.linalg.norm(p - pts[i - 1]) > 1e-9]
    return {"vertices": np.round(np.array(keep), 12).tolist()}


# ---------------------------------------------------------------------------
# Output


def _trajectory_rows(validation: ValidationResult):
    for i, traj in enumerate(validation.trajectories):
        for run in range(traj.shape[0]):
            for k in range(traj.shape[1]):
                yield [run, i, k, *(repr(float(v)) for v in traj[run, k])]


def write_outputs(outcome: Outcome, out_dir: str | Path, report: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(report, out / "report.json")
    dump_json(contracts_to_dict(outcome.contracts, outcome.trace), out / "contracts.json")
    dump_json(model_to_dict(outcome.model), out / "model.json")
    width = max(s.dim for s in outcome.model.network.subsystems)
    with open(out / "trajectories.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "subsystem", "k", *(f"x{j}" for j in range(width))])
        w.writerows(_trajectory_rows(outcome.validation))
    with open(out / "assumptions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subsystem", "space", "row", *(f"g{j}" for j in range(width)), "h"])
        for c, spec in zip(outcome.contracts, outcome.model.specs):
            n = outcome.model.network.subsystems[c.subsystem].dim
            eps = eps_to_json(c.epsilon)
            for r in range(2 * n):
                g = [0.0] * n
                g[r % n] = 1.0 if r < n else -1.0
                w.writerow([c.subsystem, "input", r, *g, *([""] * (width - n)), eps])
            polys = translated_constraints(c, len(conjuncts(spec)))
            rows = [(g, h) for p in polys for g, h in zip(p.G, p.H)]
            for r, (g, h) in enumerate(rows):
                w.writerow([c.subsystem, "state", r, *map(repr, map(float, g)), *([""] * (width - n)), repr(float(h))])


def build_report(outcome: Outcome, name: str, seed: int, samples: int) -> dict:
    m = outcome.model
    contracts = []
    for c, spec in zip(outcome.contracts, m.specs):
        contracts.append(
            {
                "subsystem": c.subsystem,
                "epsilon": eps_to_json(c.epsilon),
                "kind": c.kind,
                "conjuncts": len(conjuncts(c.guarantee)),
                "assumption_region": region_summary(translated_constraints(c, len(conjuncts(spec)))),
                "resilience": c.result.to_dict(),
            }
        )
    return {
        "case": name,
        "seed": seed,
        "parameters": {
            "algorithm": "refine_two" if m.algorithm == "two" else "refine_L",
            "subsystems": m.network.size,
            "tol": m.tol,
            "max_iter": m.max_iter,
            "validation_samples": samples,
            "scenario": {"eta": m.config.eta, "beta": m.config.beta, "samples_override": m.config.samples_override, "seed": m.config.seed},
            "nonlinear": {"eps_hi": m.config.eps_hi, "tol": m.config.nl_tol},
            "weights": None if m.weights is None else {str(i): {str(l): v for l, v in w.items()} for i, w in sorted(m.weights.items())},
        },
        "status": "ok" if outcome.ok else "failed",
        "checks": outcome.checks,
        "contracts": contracts,
        "trace": outcome.trace.to_dict(),
        "validation": outcome.validation.to_dict(),
        **outcome.extra,
    }


# ---------------------------------------------------------------------------
# Case studies


def case_study(name: str) -> CaseStudy:
    if name == "microgrid":
        params = MicrogridParams()
        net, specs, Bs, weights, op = build_microgrid(params)
        ref = {
            "assumption_halfwidths": REFERENCE_INTERVALS,
            "operating_point": op.voltages.tolist(),
            "source_power": op.source_power,
            "tau": params.tau,
        }
        return CaseStudy("microgrid", Model(net, specs, Bs, weights), 1000, ref)
    if name in ("ex1", "ex2", "ex3"):
        return build_example(name)
    raise ValueError(f"unknown case study {name!r} (expected one of {', '.join(CASE_STUDIES)})")


def _microgrid_extra(outcome: Outcome, falsification_samples: int, seed: int) -> dict:
    net, m = outcome.model.network, outcome.model
    rows, clean = [], True
    for c, spec in zip(outcome.contracts, m.specs):
        region = region_summary(translated_constraints(c, len(conjuncts(spec))))
        check = check_contract(net.subsystems[c.subsystem], c, m.initial_sets[c.subsystem], falsification_samples, seed + 1 + c.subsystem)
        clean &= check.rate == 1.0
        rows.append(
            {
                "bus": c.subsystem + 1,
                "epsilon": eps_to_json(c.epsilon),
                "state_interval": None if region is None else region["interval"],
                "reference_halfwidth": REFERENCE_INTERVALS[c.subsystem],
                "falsification": check.to_dict(),
            }
        )
    outcome.checks["falsification_clean"] = clean
    return {"comparison": rows}


def run_case_study(name: str, seed: int, out_dir: str | Path | None = None, falsification_samples: int = 100_000) -> dict:
    """Run a built-in case study and (optionally) write its output directory."""
    cs = case_study(name)
    outcome = synthesize(cs.model, cs.validation_samples, seed)
    outcome.checks["iterations_within_4"] = outcome.trace.iterations_used <= 4 or name == "microgrid"
    outcome.extra["reference"] = cs.reference
    if name == "microgrid":
        outcome.extra.update(_microgrid_extra(outcome, falsification_samples, seed))
    report = build_report(outcome, name, seed, cs.validation_samples)
    if out_dir is not None:
        write_outputs(outcome, out_dir, report)
    return report
