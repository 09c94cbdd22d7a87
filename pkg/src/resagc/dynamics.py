"""Subsystems, networks and their simulation.

A subsystem evolves as ``x(k+1) = f(x(k)) + w(k)`` where ``f`` is either a
matrix ``A`` or a vector of expressions. A network couples subsystems through
``w_i(k) = sum_l C[i, l] x_l(k)``. All simulation routines accept leading
batch axes on states and disturbances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .expr import Expr, compile_numpy, evaluate, parse, variables
from .geometry import ModelError


@dataclass(frozen=True, eq=False)
class Subsystem:
    """One subsystem; exactly one of ``A`` (linear) or ``f`` (nonlinear) is set."""

    id: int
    dim: int
    A: np.ndarray | None = None
    f: tuple[Expr, ...] | None = None
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ModelError(f"subsystem {self.id}: dimension must be positive")
        if (self.A is None) == (self.f is None):
            raise ModelError(f"subsystem {self.id}: give exactly one of A or f")
        if self.A is not None:
            A = np.array(self.A, dtype=float)
            A = A.reshape(1, 1) if A.ndim == 0 else A
            if A.shape != (self.dim, self.dim):
                raise ModelError(f"subsystem {self.id}: A has shape {A.shape}, expected {(self.dim, self.dim)}")
            A.setflags(write=False)
            object.__setattr__(self, "A", A)
        else:
            f = tuple(self.f)
            if len(f) != self.dim:
                raise ModelError(f"subsystem {self.id}: f has {len(f)} components, expected {self.dim}")
            for comp in f:
                if any(j >= self.dim for j in variables(comp)):
                    raise ModelError(f"subsystem {self.id}: expression uses a variable beyond x{self.dim - 1}")
            object.__setattr__(self, "f", f)
            object.__setattr__(self, "params", dict(self.params))
            object.__setattr__(self, "_compiled", tuple(compile_numpy(c, self.params) for c in f))

    @classmethod
    def linear(cls, id: int, A) -> "Subsystem":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls(id=id, dim=A.shape[0], A=A)

    @classmethod
    def nonlinear(cls, id: int, exprs: Sequence[str | Expr], params: Mapping[str, float] | None = None) -> "Subsystem":
        params = dict(params or {})
        dim = len(exprs)
        f = tuple(parse(e, dim, params) if isinstance(e, str) else e for e in exprs)
        return cls(id=id, dim=dim, f=f, params=params)

    @property
    def is_linear(self) -> bool:
        return self.A is not None

    def flow(self, x: np.ndarray) -> np.ndarray:
        """Disturbance-free map ``f(x)``; ``x`` has shape ``(..., dim)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ModelError(f"subsystem {self.id}: state has dimension {x.shape[-1]}, expected {self.dim}")
        if self.is_linear:
            return x @ self.A.T
        return np.stack([fn(x) for fn in self._compiled], axis=-1)

    def flow_point(self, x: Sequence[float]) -> np.ndarray:
        """Pointwise scalar evaluation (no vectorisation)."""
        if self.is_linear:
            return self.A @ np.asarray(x, dtype=float)
        return np.array([evaluate(c, x, self.params) for c in self.f])


def step_open(sub: Subsystem, x, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != sub.dim:
        raise ModelError(f"subsystem {sub.id}: disturbance has dimension {w.shape[-1]}, expected {sub.dim}")
    return sub.flow(x) + w


def simulate_open(sub: Subsystem, x0, w_seq) -> np.ndarray:
    """Trajectory of shape ``(..., N + 1, dim)`` driven by ``w_seq`` of shape ``(..., N, dim)``."""
    x = np.asarray(x0, dtype=float)
    W = np.asarray(w_seq, dtype=float)
    if W.ndim < 2:
        raise ModelError("disturbance sequence must have shape (..., N, dim)")
    N = W.shape[-2]
    x = np.broadcast_to(x, np.broadcast_shapes(x.shape, W.shape[:-2] + (sub.dim,)))
    states = [x]
    for k in range(N):
        x = step_open(sub, x, W[..., k, :])
        states.append(x)
    return np.stack(states, axis=-2)


@dataclass(frozen=True, eq=False)
class Network:
    subsystems: tuple[Subsystem, ...]
    couplings: Mapping[tuple[int, int], np.ndarray]

    def __post_init__(self):
        subs = tuple(self.subsystems)
        ids = [s.id for s in subs]
        if ids != list(range(len(subs))):
            raise ModelError(f"subsystem ids must be 0..L-1 in order, got {ids}")
        cpl = {}
        for (i, l), C in sorted(self.couplings.items()):
            if i == l:
                raise ModelError(f"self-coupling on subsystem {i}")
            if not (0 <= i < len(subs) and 0 <= l < len(subs)):
                raise ModelError(f"coupling ({i}, {l}) references an unknown subsystem")
            C = np.array(C, dtype=float)
            C = C.reshape(1, 1) if C.ndim == 0 else C
            if C.shape != (subs[i].dim, subs[l].dim):
                raise ModelError(
                    f"coupling ({i}, {l}) has shape {C.shape}, expected {(subs[i].dim, subs[l].dim)}"
                )
            C.setflags(write=False)
            cpl[(i, l)] = C
        object.__setattr__(self, "subsystems", subs)
        object.__setattr__(self, "couplings", cpl)

    @property
    def size(self) -> int:
        return len(self.subsystems)

    def neighbors(self, i: int) -> list[int]:
        """In-neighbours of subsystem ``i`` (those whose state enters ``w_i``)."""
        return sorted(l for (j, l) in self.couplings if j == i)

    def influenced_by(self, l: int) -> list[int]:
        return sorted(i for (i, j) in self.couplings if j == l)

    def split(self, x) -> list[np.ndarray]:
        x = np.asarray(x, dtype=float)
        total = sum(s.dim for s in self.subsystems)
        if x.shape[-1] != total:
            raise ModelError(f"network state has dimension {x.shape[-1]}, expected {total}")
        cuts = np.cumsum([s.dim for s in self.subsystems])[:-1]
        return np.split(x, cuts, axis=-1)

    def block_matrix(self) -> np.ndarray:
        """Monolithic transition matrix of an all-linear network."""
        dims = [s.dim for s in self.subsystems]
        off = np.concatenate([[0], np.cumsum(dims)])
        M = np.zeros((off[-1], off[-1]))
        for s in self.subsystems:
            if not s.is_linear:
                raise ModelError("block matrix needs linear subsystems")
            M[off[s.id] : off[s.id + 1], off[s.id] : off[s.id + 1]] = s.A
        for (i, l), C in self.couplings.items():
            M[off[i] : off[i + 1], off[l] : off[l + 1]] += C
        return M


def internal_input(net: Network, i: int, state) -> np.ndarray:
    """``sum_l C[i, l] x_l`` for a list of per-subsystem states (or a flat vector)."""
    if not 0 <= i < net.size:
        raise ModelError(f"unknown subsystem {i}")
    parts = net.split(state) if not isinstance(state, (list, tuple)) else [np.asarray(s, dtype=float) for s in state]
    batch = parts[0].shape[:-1]
    w = np.zeros(batch + (net.subsystems[i].dim,))
    for l in net.neighbors(i):
        w = w + parts[l] @ net.couplings[(i, l)].T
    return w


def simulate_network(net: Network, x0, N: int, return_inputs: bool = False):
    """Synchronous closed-loop simulation.

    ``x0`` is a list of per-subsystem initial states (each ``(..., n_i)``) or a
    flat network state. Returns a list of trajectories ``(..., N + 1, n_i)``;
    with ``return_inputs`` also the internal inputs ``(..., N, n_i)`` used.
    """
    x = net.split(x0) if not isinstance(x0, (list, tuple)) else [np.asarray(s, dtype=float) for s in x0]
    batch = np.broadcast_shapes(*(p.shape[:-1] for p in x))
    x = [np.broadcast_to(p, batch + p.shape[-1:]) for p in x]
    trajs = [[p] for p in x]
    inputs = [[] for _ in x]
    for _ in range(N):
        ws = [internal_input(net, i, x) for i in range(net.size)]
        x = [step_open(s, x[s.id], ws[s.id]) for s in net.subsystems]
        for i in range(net.size):
            trajs[i].append(x[i])
            inputs[i].append(ws[i])
    out = [np.stack(t, axis=-2) for t in trajs]
    if return_inputs:
        zero = lambda i: np.zeros(batch + (0, net.subsystems[i].dim))
        ins = [np.stack(w, axis=-2) if w else zero(i) for i, w in enumerate(inputs)]
        return out, ins
    return out
