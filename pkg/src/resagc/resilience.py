"""Resilience: the largest infinity-norm disturbance radius a subsystem tolerates.

For a subsystem ``x(k+1) = f(x(k)) + w(k)`` with ``||w(k)||_inf <= eps``, a
specification ``spec`` and a set of initial states ``B``, the resilience is
the supremum of the radii ``eps`` under which every trajectory from ``B``
satisfies ``spec`` (zero if some disturbance-free trajectory already fails).

Four routes are provided:

* :func:`resilience_linear` -- exact closed form for linear maps and
  safety / exact-time reach specifications.
* :func:`resilience_finite_reach_scenario` -- sampled-direction estimate for
  specifications containing finite-horizon reach.
* :func:`resilience_nonlinear` -- sound lower bound by interval propagation
  and bisection.
* :func:`brute_force_resilience` -- grid scan over radii with enumerated
  disturbances, used as an independent oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Subsystem, simulate_open
from .expr import EvalError, Interval, eval_interval
from .geometry import (
    TOL_FEAS,
    And,
    Box,
    FiniteReach,
    SafetyWindow,
    Spec,
    conjuncts,
    horizon,
    satisfies,
)

INF = math.inf


class UnsupportedSpec(ValueError):
    pass


class CombinatorialGuard(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Binding:
    """Where a resilience value is attained (or where the nominal run fails)."""

    step: int
    row: np.ndarray
    offset: float
    vertex: np.ndarray
    conjunct: int
    gain: float = 0.0


@dataclass(frozen=True, eq=False)
class ResilienceResult:
    epsilon: float
    kind: str  # "exact" | "scenario" | "sound_lower_bound"
    binding: Binding | None = None
    confidence: float | None = None
    eta: float | None = None
    samples: int | None = None
    nominal_violation: bool = False
    conservative: bool = False
    saturated: bool = False
    detail: str = ""

    def to_dict(self) -> dict:
        d = {
            "epsilon": eps_to_json(self.epsilon),
            "kind": self.kind,
            "nominal_violation": self.nominal_violation,
        }
        if self.kind == "scenario":
            d.update(confidence=self.confidence, eta=self.eta, samples=self.samples)
        if self.kind == "sound_lower_bound":
            d.update(conservative=self.conservative, saturated=self.saturated)
        if self.binding is not None:
            b = self.binding
            d["binding"] = {
                "step": b.step,
                "row": b.row.tolist(),
                "offset": b.offset,
                "vertex": b.vertex.tolist(),
                "conjunct": b.conjunct,
            }
        if self.detail:
            d["detail"] = self.detail
        return d


def eps_to_json(eps: float):
    return "inf" if math.isinf(eps) else float(eps)


def eps_from_json(v) -> float:
    return INF if v in ("inf", "Infinity") else float(v)


@dataclass(frozen=True)
class ResilienceConfig:
    """Knobs for the non-closed-form routes."""

    eta: float = 0.01
    beta: float = 0.05
    samples_override: int | None = None
    seed: int = 0
    eps_hi: float = 1e3
    nl_tol: float = 1e-6


def _steps(atom) -> range:
    if isinstance(atom, SafetyWindow):
        return range(atom.k_start, atom.k_end + 1)
    return range(atom.N, atom.N + 1)


def _matrix_powers(A: np.ndarray, K: int) -> list[np.ndarray]:
    P = [np.eye(A.shape[0])]
    for _ in range(K):
        P.append(P[-1] @ A)
    return P


def _rowdot(X: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``X @ G.T`` computed elementwise so results do not depend on batch size."""
    return (X[:, None, :] * G[None, :, :]).sum(axis=-1)


# ---------------------------------------------------------------------------
# Closed form


def resilience_linear(A, spec: Spec, B: Box, tol: float = TOL_FEAS) -> ResilienceResult:
    """Exact resilience of ``x(k+1) = A x(k) + w(k)`` for safety / exact-reach specs.

    Uses ``x(k) = A^k x0 + sum_j A^(k-1-j) w(j)``: a row ``g . x(k) <= h`` holds
    for every admissible disturbance iff ``g A^k x0 + eps * sum_{j<k} ||g A^j||_1 <= h``,
    and the worst initial state of a box is one of its vertices.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    atoms = conjuncts(spec)
    if any(isinstance(a, FiniteReach) for a in atoms):
        raise UnsupportedSpec("finite-horizon reach needs the scenario route")
    if B.dim != A.shape[0] or atoms[0].poly.dim != A.shape[0]:
        raise ValueError("dimension mismatch between A, spec and initial set")
    K = horizon(spec)
    powers = _matrix_powers(A, K)
    V = B.vertices()
    best, binding = INF, None
    for ci, atom in enumerate(atoms):
        G, H = atom.poly.G, atom.poly.H
        GA = [_rowdot(P.T, G).T for P in powers]  # G @ A^j
        gains = [np.zeros(G.shape[0])]
        for j in range(K):
            gains.append(gains[-1] + np.abs(GA[j]).sum(axis=1))
        for k in _steps(atom):
            nominal = _rowdot(V, GA[k])  # (vertices, rows)
            worst_v = np.argmax(nominal, axis=0)
            worst = nominal[worst_v, np.arange(G.shape[0])]
            slack = H - worst
            bad = np.flatnonzero(slack < -tol)
            if bad.size:
                r = int(bad[0])
                b = Binding(k, G[r].copy(), float(H[r]), V[worst_v[r]].copy(), ci, float(gains[k][r]))
                return ResilienceResult(0.0, "exact", b, nominal_violation=True)
            g = gains[k]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(g > 0, np.maximum(slack, 0.0) / np.where(g > 0, g, 1.0), INF)
            r = int(np.argmin(ratio))
            if ratio[r] < best:
                best = float(ratio[r])
                binding = Binding(k, G[r].copy(), float(H[r]), V[worst_v[r]].copy(), ci, float(g[r]))
    return ResilienceResult(best, "exact", binding)


def adversarial_disturbance(A, row, k: int, x0, epsilon: float, length: int | None = None) -> np.ndarray:
    """Disturbance maximising ``row . x(k)``: ``w(j) = eps * sign(row A^(k-1-j))``.

    Returns shape ``(length, n)``, zero-padded after step ``k - 1``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    g = np.asarray(row, dtype=float).reshape(-1)
    n = A.shape[0]
    length = k if length is None else length
    if k < 1 or length < k:
        raise ValueError("need 1 <= k <= length")
    W = np.zeros((length, n))
    gA = g.copy()  # g A^(k-1-j) for j = k-1 down to 0
    for j in range(k - 1, -1, -1):
        W[j] = epsilon * np.sign(gA)
        gA = gA @ A
    return W


# ---------------------------------------------------------------------------
# Scenario route


def scenario_count(eta: float, beta: float) -> int:
    """Samples needed so one scalar decision variable has violation <= eta w.p. >= 1 - beta."""
    if not (0 < eta < 1 and 0 < beta < 1):
        raise ValueError("eta and beta must lie in (0, 1)")
    return max(1, math.ceil(math.log(beta) / math.log(1 - eta) - 1e-12))


def sample_directions(rng: np.random.Generator, M: int, N: int, n: int) -> np.ndarray:
    """``M`` disturbance profiles ``(N, n)`` of unit infinity norm (componentwise uniform, rescaled)."""
    D = rng.uniform(-1.0, 1.0, size=(M, N, n))
    scale = np.abs(D).reshape(M, -1).max(axis=1)
    return D / scale[:, None, None]


def _atom_intervals(atom, a: np.ndarray, b: np.ndarray, tol: float):
    """Per step, the set of ``t >= 0`` with ``G (a_k + t b_k) <= H`` as ``(lo, hi)`` arrays.

    ``a`` and ``b`` have shape ``(S, K + 1, n)``; returns arrays ``(S, steps)``.
    Empty sets come out with ``lo > hi``.
    """
    G, H = atom.poly.G, atom.poly.H
    ks = list(range(atom.N + 1)) if isinstance(atom, FiniteReach) else list(_steps(atom))
    s = H[None, None, :] - np.einsum("skn,rn->skr", a[:, ks, :], G)
    s = np.where(s >= -tol, np.maximum(s, 0.0), s)  # nominal slack within tolerance counts as met
    c = np.einsum("skn,rn->skr", b[:, ks, :], G)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = s / c
    upper = np.where(c > 0, q, INF)
    lower = np.where(c < 0, q, -INF)
    hi = np.where(((c == 0) & (s < 0)).any(axis=-1), -INF, upper.min(axis=-1))
    lo = np.maximum(lower.max(axis=-1), 0.0)
    return lo, hi


def _radius_from_intervals(lo: np.ndarray, hi: np.ndarray, union: bool, tol: float) -> np.ndarray:
    """Extent of the connected piece of the feasible ``t``-set that starts at 0 (``-1`` if 0 is infeasible)."""
    out = np.full(lo.shape[0], -1.0)
    for s in range(lo.shape[0]):
        if not union:
            if np.all((lo[s] <= 0.0) & (hi[s] >= 0.0)):
                out[s] = hi[s].min()
            continue
        reach = -1.0
        for l, h in sorted((l, h) for l, h in zip(lo[s], hi[s]) if l <= h):
            if (reach < 0 and l > 0.0) or (reach >= 0 and l > reach + tol * (1 + reach)):
                break
            reach = max(reach, h)
        out[s] = reach
    return out


def paired_radii(A, spec: Spec, starts: np.ndarray, directions: np.ndarray, tol: float = TOL_FEAS) -> np.ndarray:
    """Radius along ``w = t * d_s`` started from ``x0_s`` for each pair ``s``.

    The largest ``t`` such that every ``t' in [0, t]`` keeps the trajectory in
    ``spec``; ``-1`` marks a failing disturbance-free run.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    M, N, n = directions.shape
    K = max(horizon(spec), N)
    # nominal part a_k = A^k x0 and disturbance part b_k = sum_j A^(k-1-j) d(j)
    a = np.zeros((M, K + 1, n))
    b = np.zeros((M, K + 1, n))
    a[:, 0] = np.broadcast_to(starts, (M, n))
    for k in range(K):
        a[:, k + 1] = a[:, k] @ A.T
        dk = directions[:, k] if k < N else 0.0
        b[:, k + 1] = b[:, k] @ A.T + dk
    out = np.full(M, INF)
    for atom in conjuncts(spec):
        lo, hi = _atom_intervals(atom, a, b, tol)
        out = np.minimum(out, _radius_from_intervals(lo, hi, union=isinstance(atom, FiniteReach), tol=tol))
    return out


def ray_radii(A, spec: Spec, vertices: np.ndarray, directions: np.ndarray, tol: float = TOL_FEAS) -> np.ndarray:
    """Radii ``(M, m)`` for every direction against every start in ``vertices``."""
    V = np.atleast_2d(vertices)
    return np.stack([paired_radii(A, spec, v, directions, tol) for v in V], axis=1)


def scenario_starts(B: Box, rng: np.random.Generator, M: int) -> np.ndarray:
    """Initial state of each scenario: ``B`` itself when a point, otherwise uniform draws."""
    if np.all(B.lower == B.upper):
        return np.repeat(B.lower[None], M, axis=0)
    return B.sample(rng, M)


def resilience_finite_reach_scenario(
    A,
    spec: Spec,
    B: Box,
    eta: float = 0.01,
    beta: float = 0.05,
    sample_override: int | None = None,
    rng_seed: int = 0,
    tol: float = TOL_FEAS,
) -> ResilienceResult:
    """Scenario estimate for specifications with finite-horizon reach conjuncts.

    Safety and exact-reach conjuncts go through the closed form over all of
    ``B``. Reach conjuncts are evaluated exactly along sampled scenarios, each
    a unit-norm disturbance direction paired with an initial state drawn from
    ``B`` (the union of per-step feasible radii). The result is the minimum of
    both parts.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    atoms = conjuncts(spec)
    reach = [a for a in atoms if isinstance(a, FiniteReach)]
    if not reach:
        raise UnsupportedSpec("no finite-horizon reach conjunct; use resilience_linear")
    M = sample_override if sample_override is not None else scenario_count(eta, beta)
    if M < 1:
        raise ValueError("need at least one scenario sample")
    rest = [a for a in atoms if not isinstance(a, FiniteReach)]
    exact = None
    if rest:
        exact = resilience_linear(A, rest[0] if len(rest) == 1 else And(tuple(rest)), B, tol)
        if exact.nominal_violation:
            return ResilienceResult(0.0, "scenario", exact.binding, 1 - beta, eta, M, nominal_violation=True)
    N = horizon(spec)
    rng = np.random.default_rng(rng_seed)
    D = sample_directions(rng, M, N, A.shape[0])
    X0 = scenario_starts(B, rng, M)
    reach_spec = reach[0] if len(reach) == 1 else And(tuple(reach))
    radii = paired_radii(A, reach_spec, X0, D, tol)
    if np.any(radii < 0):
        return ResilienceResult(0.0, "scenario", None, 1 - beta, eta, M, nominal_violation=True,
                                detail="disturbance-free trajectory misses the reach target")
    eps = float(radii.min())
    binding = None
    if exact is not None and exact.epsilon <= eps:
        eps, binding = exact.epsilon, exact.binding
    return ResilienceResult(eps, "scenario", binding, 1 - beta, eta, M)


# ---------------------------------------------------------------------------
# Nonlinear route


def _box_image(sub: Subsystem, R: Box, eps: float) -> Box:
    ivs = [Interval(float(lo), float(hi)) for lo, hi in zip(R.lower, R.upper)]
    lo, hi = [], []
    for comp in sub.f:
        iv = eval_interval(comp, ivs, sub.params) + Interval(-eps, eps)
        lo.append(iv.lo)
        hi.append(iv.hi)
    return Box(lo, hi)


def reach_boxes(sub: Subsystem, B: Box, eps: float, K: int) -> list[Box]:
    """Box enclosures ``R(0..K)`` of all states reachable under ``||w||_inf <= eps``."""
    boxes = [B]
    for _ in range(K):
        boxes.append(_box_image(sub, boxes[-1], eps))
    return boxes


def _interval_check(sub: Subsystem, spec: Spec, B: Box, eps: float, tol: float) -> tuple[bool, str]:
    atoms = conjuncts(spec)
    K = horizon(spec)
    R = B
    for k in range(K + 1):
        for ci, atom in enumerate(atoms):
            if k in _steps(atom) and not atom.poly.contains_box(R, tol):
                return False, f"enclosure leaves conjunct {ci} at step {k}"
        if k < K:
            try:
                R = _box_image(sub, R, eps)
            except EvalError as exc:
                return False, f"interval evaluation failed at step {k}: {exc}"
    return True, ""


def resilience_nonlinear(
    sub: Subsystem, spec: Spec, B: Box, eps_hi: float = 1e3, tol: float = 1e-6
) -> ResilienceResult:
    """Sound lower bound on the resilience of a nonlinear subsystem.

    Bisects the radius on ``[0, eps_hi]``; a radius passes when the interval
    enclosure of the reachable set satisfies every active constraint.
    """
    if any(isinstance(a, FiniteReach) for a in conjuncts(spec)):
        raise UnsupportedSpec("finite-horizon reach is not supported for nonlinear subsystems")
    if eps_hi <= 0 or tol <= 0:
        raise ValueError("eps_hi and tol must be positive")
    ok, why = _interval_check(sub, spec, B, 0.0, TOL_FEAS)
    if not ok:
        K = horizon(spec)
        V = B.vertices()
        traj = simulate_open(sub, V, np.zeros((V.shape[0], K, sub.dim)))
        genuine = not bool(np.all(satisfies(spec, traj)))
        return ResilienceResult(
            0.0,
            "sound_lower_bound",
            nominal_violation=genuine,
            conservative=not genuine,
            detail=("nominal trajectory violates the specification: " if genuine else "interval enclosure too coarse: ") + why,
        )
    if _interval_check(sub, spec, B, eps_hi, TOL_FEAS)[0]:
        return ResilienceResult(eps_hi, "sound_lower_bound", saturated=True, detail="bracket saturated")
    lo, hi = 0.0, eps_hi
    why_hi = ""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok, why = _interval_check(sub, spec, B, mid, TOL_FEAS)
        if ok:
            lo = mid
        else:
            hi, why_hi = mid, why
    return ResilienceResult(lo, "sound_lower_bound", detail=why_hi)


# ---------------------------------------------------------------------------
# Dispatch


def compute_resilience(sub: Subsystem, spec: Spec, B: Box, config: ResilienceConfig | None = None) -> ResilienceResult:
    config = config or ResilienceConfig()
    has_reach = any(isinstance(a, FiniteReach) for a in conjuncts(spec))
    if sub.is_linear:
        if has_reach:
            return resilience_finite_reach_scenario(
                sub.A, spec, B, config.eta, config.beta, config.samples_override, config.seed
            )
        return resilience_linear(sub.A, spec, B)
    return resilience_nonlinear(sub, spec, B, config.eps_hi, config.nl_tol)


# ---------------------------------------------------------------------------
# Brute-force oracle

MAX_SIGN_SEQUENCES = 1 << 16


def sign_sequences(N: int, n: int) -> np.ndarray:
    """All ``2^(N n)`` sequences with entries in {-1, +1}, shape ``(S, N, n)``."""
    count = 1 << (N * n)
    if count > MAX_SIGN_SEQUENCES:
        raise CombinatorialGuard(f"{count} sign sequences exceed the guard of {MAX_SIGN_SEQUENCES}")
    bits = np.array(list(itertools.product((-1.0, 1.0), repeat=N * n)))
    return bits.reshape(count, N, n)


def brute_force_resilience(
    sub: Subsystem,
    spec: Spec,
    B: Box,
    eps_grid: int = 300,
    disturbance_mode: str | tuple = "extreme_signs",
    eps_max: float = 1.0,
    rng_seed: int = 0,
) -> float:
    """Largest radius on ``linspace(0, eps_max, eps_grid)`` that passes, below the first failing one.

    Every candidate radius is checked by simulating every extreme sign
    disturbance (``"extreme_signs"``) or ``M`` random ones (``("random", M)``)
    from every vertex of ``B``. For linear subsystems without reach conjuncts
    the passing radii form a prefix of the grid (the feasible disturbance set
    is convex and contains 0), so the grid is bisected; otherwise it is
    scanned upwards.
    """
    N = horizon(spec)
    n = sub.dim
    if disturbance_mode == "extreme_signs":
        D = sign_sequences(N, n)
    else:
        _, M = disturbance_mode
        D = np.random.default_rng(rng_seed).uniform(-1.0, 1.0, size=(M, N, n))
        D = np.concatenate([D, np.zeros((1, N, n))])
    x0 = B.vertices()[:, None, :]
    grid = np.linspace(0.0, eps_max, eps_grid)

    def passes(i: int) -> bool:
        W = (grid[i] * D)[None, :, :, :] if i else np.zeros((1, 1, N, n))
        try:
            return bool(np.all(satisfies(spec, simulate_open(sub, x0, W))))
        except EvalError:
            return False

    if not passes(0):
        return 0.0
    convex = sub.is_linear and not any(isinstance(a, FiniteReach) for a in conjuncts(spec))
    if not convex:
        for i in range(1, eps_grid):
            if not passes(i):
                return float(grid[i - 1])
        return float(grid[-1])
    lo, hi = 0, eps_grid  # grid[lo] passes; grid[hi] fails (or is past the end)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return float(grid[lo])
