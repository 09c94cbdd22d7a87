"""JSON model files and contract serialisation.

A model file holds ``subsystems``, ``couplings``, ``specs``, ``initial_sets``,
optional ``weights`` and an optional ``algorithm`` block. Loading validates
everything and reports all problems at once through :class:`ModelFileError`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .contracts import Contract, RefinementTrace, validate_weights
from .dynamics import Network, Subsystem
from .expr import ExprError, parse, to_string
from .geometry import (
    And,
    Box,
    ExactReach,
    FiniteReach,
    ModelError,
    Polytope,
    SafetyWindow,
    Spec,
    conjoin,
    conjuncts,
)
from .resilience import ResilienceConfig, eps_to_json


class ModelFileError(ModelError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass
class Model:
    network: Network
    specs: list[Spec]
    initial_sets: list[Box]
    weights: dict[int, dict[int, float]] | None = None
    tol: float = 1e-9
    max_iter: int = 50
    config: ResilienceConfig = field(default_factory=ResilienceConfig)

    @property
    def algorithm(self) -> str:
        """``two`` for a two-subsystem network (Gauss-Seidel), ``L`` otherwise."""
        return "two" if self.network.size == 2 and self.weights is None else "L"


# ---------------------------------------------------------------------------
# Small JSON helpers


def _matrix(v, rows: int | None, cols: int | None, where: str, errors: list[str]) -> np.ndarray | None:
    try:
        M = np.array(v, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{where}: not a numeric matrix")
        return None
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2:
        errors.append(f"{where}: expected a matrix, got {M.ndim} dimensions")
        return None
    if not np.all(np.isfinite(M)):
        errors.append(f"{where}: entries must be finite")
        return None
    if (rows is not None and M.shape[0] != rows) or (cols is not None and M.shape[1] != cols):
        errors.append(f"{where}: shape {M.shape}, expected {(rows, cols)}")
        return None
    return M


def _vector(v, n: int | None, where: str, errors: list[str]) -> np.ndarray | None:
    try:
        x = np.array(v, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        errors.append(f"{where}: not a numeric vector")
        return None
    if not np.all(np.isfinite(x)):
        errors.append(f"{where}: entries must be finite")
        return None
    if n is not None and x.size != n:
        errors.append(f"{where}: length {x.size}, expected {n}")
        return None
    return x


def _box(d, n: int | None, where: str, errors: list[str]) -> Box | None:
    if not isinstance(d, dict) or "lower" not in d or "upper" not in d:
        errors.append(f"{where}: box needs 'lower' and 'upper'")
        return None
    lo = _vector(d["lower"], n, f"{where}.lower", errors)
    hi = _vector(d["upper"], n, f"{where}.upper", errors)
    if lo is None or hi is None:
        return None
    if lo.size != hi.size or np.any(lo > hi):
        errors.append(f"{where}: lower must not exceed upper")
        return None
    return Box(lo, hi)


def _polytope(d, n: int | None, where: str, errors: list[str]) -> Polytope | None:
    if "polytope" in d:
        p = d["polytope"]
        if not isinstance(p, dict) or "G" not in p or "H" not in p:
            errors.append(f"{where}.polytope: needs 'G' and 'H'")
            return None
        G = _matrix(p["G"], None, n, f"{where}.polytope.G", errors)
        H = _vector(p["H"], None if G is None else G.shape[0], f"{where}.polytope.H", errors)
        return None if G is None or H is None else Polytope(G, H)
    if "box" in d:
        b = _box(d["box"], n, f"{where}.box", errors)
        return None if b is None else Polytope.from_box(b.lower, b.upper)
    errors.append(f"{where}: give 'polytope' or 'box'")
    return None


def _int(v, where: str, errors: list[str], lo: int = 0) -> int | None:
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        errors.append(f"{where}: expected an integer >= {lo}")
        return None
    return v


def _num(v, where: str, errors: list[str], positive: bool = False) -> float | None:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or (positive and v <= 0):
        errors.append(f"{where}: expected a {'positive ' if positive else ''}finite number")
        return None
    return float(v)


# ---------------------------------------------------------------------------
# Loading


def _load_subsystems(data, errors) -> list[Subsystem | None]:
    subs = []
    raw = data.get("subsystems")
    if not isinstance(raw, list) or not raw:
        errors.append("subsystems: expected a nonempty list")
        return subs
    for k, s in enumerate(raw):
        where = f"subsystems[{k}]"
        if not isinstance(s, dict):
            errors.append(f"{where}: expected an object")
            subs.append(None)
            continue
        sid = _int(s.get("id"), f"{where}.id", errors)
        if sid is not None and sid != k:
            errors.append(f"{where}.id: ids must be 0..L-1 in order, got {sid}")
        dim = _int(s.get("dim"), f"{where}.dim", errors, lo=1)
        kind = s.get("kind")
        sub = None
        if kind == "linear":
            A = _matrix(s.get("A"), dim, dim, f"{where}.A", errors) if dim else None
            if A is not None:
                sub = Subsystem(k, dim, A=A)
        elif kind == "nonlinear":
            f, params = s.get("f"), s.get("params", {})
            if not isinstance(params, dict) or not all(_num(v, f"{where}.params.{n}", errors) is not None for n, v in params.items()):
                params = None
                errors.append(f"{where}.params: expected a name -> number map")
            if not isinstance(f, list) or (dim is not None and len(f) != dim):
                errors.append(f"{where}.f: expected a list of {dim} expressions")
            elif dim is not None and params is not None:
                exprs = []
                for j, text in enumerate(f):
                    try:
                        exprs.append(parse(str(text), dim, params))
                    except ExprError as e:
                        errors.append(f"{where}.f[{j}]: {e}")
                if len(exprs) == dim:
                    sub = Subsystem(k, dim, f=tuple(exprs), params=params)
        else:
            errors.append(f"{where}.kind: expected 'linear' or 'nonlinear', got {kind!r}")
        subs.append(sub)
    return subs


def _load_couplings(data, subs, errors) -> dict:
    out = {}
    L = len(subs)
    for k, c in enumerate(data.get("couplings", [])):
        where = f"couplings[{k}]"
        if not isinstance(c, dict):
            errors.append(f"{where}: expected an object")
            continue
        i = _int(c.get("to"), f"{where}.to", errors)
        l = _int(c.get("from"), f"{where}.from", errors)
        if i is None or l is None:
            continue
        if i >= L or l >= L:
            errors.append(f"{where}: references an unknown subsystem")
            continue
        if i == l:
            errors.append(f"{where}: self-coupling is not allowed")
            continue
        if (i, l) in out:
            errors.append(f"{where}: duplicate coupling ({i} <- {l})")
            continue
        rows = subs[i].dim if subs[i] else None
        cols = subs[l].dim if subs[l] else None
        C = _matrix(c.get("C"), rows, cols, f"{where}.C", errors)
        if C is not None:
            out[(i, l)] = C
    return out


_KINDS = ("safety", "exact_reach", "finite_reach")


def _load_specs(data, subs, errors) -> list[Spec | None]:
    per: list[Spec | None] = [None] * len(subs)
    raw = data.get("specs")
    if not isinstance(raw, list):
        errors.append("specs: expected a list")
        return per
    for k, d in enumerate(raw):
        where = f"specs[{k}]"
        if not isinstance(d, dict):
            errors.append(f"{where}: expected an object")
            continue
        i = _int(d.get("subsystem"), f"{where}.subsystem", errors)
        if i is not None and i >= len(subs):
            errors.append(f"{where}.subsystem: unknown subsystem {i}")
            i = None
        kind = d.get("kind")
        if kind not in _KINDS:
            errors.append(f"{where}.kind: expected one of {list(_KINDS)}, got {kind!r}")
        N = _int(d.get("horizon"), f"{where}.horizon", errors, lo=0 if kind == "safety" else 1)
        n = subs[i].dim if i is not None and subs[i] else None
        poly = _polytope(d, n, where, errors)
        if i is None or kind not in _KINDS or N is None or poly is None:
            continue
        if kind == "safety":
            atom = SafetyWindow(poly, int(d.get("k_start", 0)), N)
        elif kind == "exact_reach":
            atom = ExactReach(poly, N)
        else:
            atom = FiniteReach(poly, N)
        per[i] = atom if per[i] is None else conjoin(per[i], atom)
    for i, s in enumerate(per):
        if s is None:
            errors.append(f"specs: no specification for subsystem {i}")
    return per


def _load_initial(data, subs, errors) -> list[Box | None]:
    out: list[Box | None] = [None] * len(subs)
    for k, d in enumerate(data.get("initial_sets", [])):
        where = f"initial_sets[{k}]"
        i = _int(d.get("subsystem") if isinstance(d, dict) else None, f"{where}.subsystem", errors)
        if i is None or i >= len(subs):
            if i is not None:
                errors.append(f"{where}.subsystem: unknown subsystem {i}")
            continue
        out[i] = _box(d.get("box"), subs[i].dim if subs[i] else None, f"{where}.box", errors)
    # Missing initial sets default to the origin.
    return [b if b is not None else (Box.point(np.zeros(s.dim)) if s else None) for b, s in zip(out, subs)]


def _load_algorithm(data, errors) -> dict:
    a = data.get("algorithm", {}) or {}
    out: dict[str, Any] = {}
    if "tol" in a:
        out["tol"] = _num(a["tol"], "algorithm.tol", errors, positive=True)
    if "max_iter" in a:
        out["max_iter"] = _int(a["max_iter"], "algorithm.max_iter", errors, lo=1)
    cfg = {}
    sc = a.get("scenario", {}) or {}
    for key in ("eta", "beta"):
        if key in sc:
            v = _num(sc[key], f"algorithm.scenario.{key}", errors, positive=True)
            if v is not None and v >= 1:
                errors.append(f"algorithm.scenario.{key}: must lie in (0, 1)")
            cfg[key] = v
    if sc.get("samples_override") is not None:
        cfg["samples_override"] = _int(sc["samples_override"], "algorithm.scenario.samples_override", errors, lo=1)
    if "seed" in sc:
        cfg["seed"] = _int(sc["seed"], "algorithm.scenario.seed", errors)
    nl = a.get("nonlinear", {}) or {}
    if "eps_hi" in nl:
        cfg["eps_hi"] = _num(nl["eps_hi"], "algorithm.nonlinear.eps_hi", errors, positive=True)
    if "tol" in nl:
        cfg["nl_tol"] = _num(nl["tol"], "algorithm.nonlinear.tol", errors, positive=True)
    out["config"] = cfg
    return out


def model_from_dict(data: dict) -> Model:
    """Build a :class:`Model`; raises :class:`ModelFileError` listing every problem."""
    if not isinstance(data, dict):
        raise ModelFileError(["model: expected a JSON object"])
    errors: list[str] = []
    subs = _load_subsystems(data, errors)
    couplings = _load_couplings(data, subs, errors)
    specs = _load_specs(data, subs, errors)
    for i, (s, sp) in enumerate(zip(subs, specs)):
        if s and sp is not None and any(a.poly.dim != s.dim for a in conjuncts(sp)):
            errors.append(f"specs: subsystem {i} spec dimension does not match dim {s.dim}")
    hs = {max(getattr(a, "k_end", 0), getattr(a, "N", 0)) for sp in specs if sp is not None for a in conjuncts(sp)}
    if len(hs) > 1:
        errors.append(f"specs: all specifications must share one horizon, got {sorted(hs)}")
    Bs = _load_initial(data, subs, errors)
    alg = _load_algorithm(data, errors)
    weights = None
    raw_w = data.get("weights")
    net = None
    if not errors:
        try:
            net = Network(tuple(subs), couplings)
        except ModelError as e:
            errors.append(f"network: {e}")
    if raw_w is not None and net is not None:
        weights = {i: {} for i in range(net.size)}
        for k, d in enumerate(raw_w):
            where = f"weights[{k}]"
            i = _int(d.get("subsystem"), f"{where}.subsystem", errors)
            l = _int(d.get("neighbor"), f"{where}.neighbor", errors)
            lam = _num(d.get("lambda"), f"{where}.lambda", errors)
            if None in (i, l, lam):
                continue
            if i >= net.size:
                errors.append(f"{where}.subsystem: unknown subsystem {i}")
                continue
            weights[i][l] = lam
        weights = {i: w for i, w in weights.items() if w or net.neighbors(i)}
        errors.extend(f"weights: {e}" for e in validate_weights(net, weights))
    if errors:
        raise ModelFileError(errors)
    cfg = {k: v for k, v in alg.pop("config").items() if v is not None}
    return Model(net, list(specs), list(Bs), weights, config=ResilienceConfig(**cfg), **alg)


def load_model(path: str | Path) -> Model:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ModelFileError([f"cannot read model file: {e.strerror or e}"]) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFileError([f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}"]) from None
    return model_from_dict(data)


# ---------------------------------------------------------------------------
# Dumping


def poly_to_json(p: Polytope) -> dict:
    return {"G": p.G.tolist(), "H": p.H.tolist()}


def atom_to_json(a) -> dict:
    if isinstance(a, SafetyWindow):
        return {"kind": "safety", "k_start": a.k_start, "horizon": a.k_end, "polytope": poly_to_json(a.poly)}
    kind = "exact_reach" if isinstance(a, ExactReach) else "finite_reach"
    return {"kind": kind, "horizon": a.N, "polytope": poly_to_json(a.poly)}


def atom_from_json(d: dict):
    poly = Polytope(np.array(d["polytope"]["G"], float), np.array(d["polytope"]["H"], float))
    if d["kind"] == "safety":
        return SafetyWindow(poly, int(d.get("k_start", 0)), int(d["horizon"]))
    if d["kind"] == "exact_reach":
        return ExactReach(poly, int(d["horizon"]))
    if d["kind"] == "finite_reach":
        return FiniteReach(poly, int(d["horizon"]))
    raise ModelFileError([f"unknown conjunct kind {d['kind']!r}"])


def spec_from_json(items: list[dict]) -> Spec:
    atoms = [atom_from_json(d) for d in items]
    return atoms[0] if len(atoms) == 1 else And(tuple(atoms))


def model_to_dict(m: Model) -> dict:
    net = m.network
    subs = []
    for s in net.subsystems:
        if s.is_linear:
            subs.append({"id": s.id, "dim": s.dim, "kind": "linear", "A": s.A.tolist()})
        else:
            subs.append({"id": s.id, "dim": s.dim, "kind": "nonlinear", "f": [to_string(e) for e in s.f], "params": dict(s.params)})
    specs = []
    for i, sp in enumerate(m.specs):
        for a in conjuncts(sp):
            specs.append({"subsystem": i, **atom_to_json(a)})
    out = {
        "subsystems": subs,
        "couplings": [{"to": i, "from": l, "C": C.tolist()} for (i, l), C in sorted(net.couplings.items())],
        "specs": specs,
        "initial_sets": [
            {"subsystem": i, "box": {"lower": b.lower.tolist(), "upper": b.upper.tolist()}} for i, b in enumerate(m.initial_sets)
        ],
        "algorithm": {
            "tol": m.tol,
            "max_iter": m.max_iter,
            "scenario": {
                "eta": m.config.eta,
                "beta": m.config.beta,
                "samples_override": m.config.samples_override,
                "seed": m.config.seed,
            },
            "nonlinear": {"eps_hi": m.config.eps_hi, "tol": m.config.nl_tol},
        },
    }
    if m.weights is not None:
        out["weights"] = [
            {"subsystem": i, "neighbor": l, "lambda": lam} for i, w in sorted(m.weights.items()) for l, lam in sorted(w.items())
        ]
    return out


def contracts_to_dict(contracts: list[Contract], trace: RefinementTrace) -> dict:
    return {
        "terminated": trace.terminated,
        "iterations_used": trace.iterations_used,
        "contracts": [
            {
                "subsystem": c.subsystem,
                "epsilon": eps_to_json(c.epsilon),
                "kind": c.kind,
                "horizon": c.horizon,
                "guarantee": [atom_to_json(a) for a in conjuncts(c.guarantee)],
                "trace": [eps_to_json(e) for e in trace.epsilons(c.subsystem)],
                "result": c.result.to_dict(),
            }
            for c in contracts
        ],
    }


def dump_json(obj, path: str | Path) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n")
