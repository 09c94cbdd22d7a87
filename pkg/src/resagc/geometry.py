"""Sets, temporal specifications and trajectory-level satisfaction.

Sets are half-space polytopes ``{x | G x <= H}`` and axis-aligned boxes.
Specifications are a small AST over four node kinds:

* ``SafetyWindow(poly, k_start, k_end)``: every state in the window lies in ``poly``.
* ``ExactReach(poly, N)``: the state at step ``N`` lies in ``poly``.
* ``FiniteReach(poly, N)``: some state in ``0..N`` lies in ``poly``.
* ``And(children)``: all children hold.

Trajectories are arrays of shape ``(..., N + 1, n)``; every check is
vectorised over the leading batch axes.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass
from typing import Union

import numpy as np

TOL_FEAS = 1e-9


class ModelError(ValueError):
    """Shapes or dimensions of a model object do not fit together."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Polytope:
    G: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        G = _frozen(self.G)
        H = _frozen(self.H).reshape(-1)
        if G.ndim != 2 or G.shape[0] < 1 or G.shape[1] < 1:
            raise ModelError(f"G must be a nonempty matrix, got shape {G.shape}")
        if G.shape[0] != H.shape[0]:
            raise ModelError(f"G has {G.shape[0]} rows but H has {H.shape[0]} entries")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "H", H)

    @property
    def dim(self) -> int:
        return self.G.shape[1]

    @classmethod
    def from_box(cls, lower, upper) -> "Polytope":
        lo = np.asarray(lower, dtype=float).reshape(-1)
        hi = np.asarray(upper, dtype=float).reshape(-1)
        eye = np.eye(lo.size)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    def is_trivial(self) -> bool:
        """True when every row reads ``0 . x <= h`` with ``h >= 0`` (whole space)."""
        return bool(np.all(self.G == 0.0) and np.all(self.H >= 0.0))

    def same_as(self, other: "Polytope", tol: float = TOL_FEAS) -> bool:
        return (
            self.G.shape == other.G.shape
            and bool(np.all(np.abs(self.G - other.G) <= tol))
            and bool(np.all(np.abs(self.H - other.H) <= tol))
        )

    def support(self, box: "Box") -> np.ndarray:
        """Row-wise maximum of ``G x`` over ``box``."""
        return self.G @ box.center + np.abs(self.G) @ box.radius

    def contains_box(self, box: "Box", tol: float = TOL_FEAS) -> bool:
        return bool(np.all(self.support(box) <= self.H + tol))


def member(poly: Polytope, x, tol: float = TOL_FEAS):
    """Membership test; ``x`` may carry leading batch axes."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != poly.dim:
        raise ModelError(f"point has dimension {x.shape[-1]}, polytope expects {poly.dim}")
    return np.all(x @ poly.G.T <= poly.H + tol, axis=-1)


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen(self.lower).reshape(-1)
        hi = _frozen(self.upper).reshape(-1)
        if lo.shape != hi.shape or lo.size < 1:
            raise ModelError("box bounds must be nonempty vectors of equal length")
        if np.any(lo > hi):
            raise ModelError(f"box lower bound exceeds upper bound: {lo} > {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def point(cls, x) -> "Box":
        return cls(x, x)

    @classmethod
    def ball(cls, center, eps: float) -> "Box":
        """The infinity-norm ball of radius ``eps`` around ``center``."""
        c = np.asarray(center, dtype=float).reshape(-1)
        return cls(c - eps, c + eps)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def radius(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def vertices(self) -> np.ndarray:
        """Distinct vertices, shape ``(m, n)``; degenerate axes are not duplicated."""
        axes = [(lo,) if lo == hi else (lo, hi) for lo, hi in zip(self.lower, self.upper)]
        return np.array(list(itertools.product(*axes)), dtype=float)

    def contains(self, x, tol: float = TOL_FEAS):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=-1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))

    def same_as(self, other: "Box", tol: float = TOL_FEAS) -> bool:
        return (
            self.dim == other.dim
            and bool(np.all(np.abs(self.lower - other.lower) <= tol))
            and bool(np.all(np.abs(self.upper - other.upper) <= tol))
        )


# ---------------------------------------------------------------------------
# Specifications


@dataclass(frozen=True, eq=False)
class SafetyWindow:
    poly: Polytope
    k_start: int
    k_end: int

    def __post_init__(self):
        if not 0 <= self.k_start <= self.k_end:
            raise ValueError(f"bad safety window [{self.k_start}, {self.k_end}]")


@dataclass(frozen=True, eq=False)
class ExactReach:
    poly: Polytope
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("reach step must be >= 1")


@dataclass(frozen=True, eq=False)
class FiniteReach:
    poly: Polytope
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("reach horizon must be >= 1")


@dataclass(frozen=True, eq=False)
class And:
    children: tuple

    def __post_init__(self):
        if not self.children:
            raise ValueError("empty conjunction")
        if any(isinstance(c, And) for c in self.children):
            raise ValueError("conjunctions must be flattened")


Atom = Union[SafetyWindow, ExactReach, FiniteReach]
Spec = Union[SafetyWindow, ExactReach, FiniteReach, And]


def always(poly: Polytope, N: int) -> SafetyWindow:
    """Finite-horizon safety over steps ``0..N``."""
    return SafetyWindow(poly, 0, N)


def conjuncts(spec: Spec) -> tuple:
    return spec.children if isinstance(spec, And) else (spec,)


def horizon(spec: Spec) -> int:
    """Largest step index the specification refers to."""
    if isinstance(spec, SafetyWindow):
        return spec.k_end
    if isinstance(spec, And):
        return max(horizon(c) for c in spec.children)
    return spec.N


def spec_dim(spec: Spec) -> int:
    return conjuncts(spec)[0].poly.dim


def _atom_key(atom: Atom) -> tuple:
    if isinstance(atom, SafetyWindow):
        head = (0, atom.k_start, atom.k_end)
    elif isinstance(atom, ExactReach):
        head = (1, atom.N, atom.N)
    else:
        head = (2, atom.N, atom.N)
    p = atom.poly
    return head + (p.G.shape, tuple(p.G.ravel()), tuple(p.H))


def atoms_equal(a: Atom, b: Atom, tol: float = TOL_FEAS) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, SafetyWindow):
        if (a.k_start, a.k_end) != (b.k_start, b.k_end):
            return False
    elif a.N != b.N:
        return False
    return a.poly.same_as(b.poly, tol)


def spec_equal(a: Spec, b: Spec, tol: float = TOL_FEAS) -> bool:
    """Structural equality after flattening and sorting conjuncts."""
    ca = sorted(conjuncts(a), key=_atom_key)
    cb = sorted(conjuncts(b), key=_atom_key)
    return len(ca) == len(cb) and all(atoms_equal(x, y, tol) for x, y in zip(ca, cb))


def spec_digest(spec: Spec) -> str:
    parts = [repr(_atom_key(c)) for c in sorted(conjuncts(spec), key=_atom_key)]
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


def conjoin(a: Spec, b: Spec) -> Spec:
    """Flattened conjunction; conjuncts of ``b`` already present in ``a`` are dropped."""
    out = list(conjuncts(a))
    for atom in conjuncts(b):
        if not any(atoms_equal(atom, existing) for existing in out):
            out.append(atom)
    return out[0] if len(out) == 1 else And(tuple(out))


def translate_assumption(C, epsilon: float) -> Polytope:
    """State-space image ``{x | ||C x||_inf <= epsilon}`` of an input-ball assumption."""
    if epsilon < 0:
        raise ValueError(f"assumption radius must be nonnegative, got {epsilon}")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    m = C.shape[0]
    return Polytope(np.vstack([C, -C]), np.full(2 * m, float(epsilon)))


def satisfies(spec: Spec, traj, tol: float = TOL_FEAS):
    """Check ``spec`` on trajectories of shape ``(..., N + 1, n)``.

    Returns a boolean (array of booleans when batch axes are present).
    """
    X = np.asarray(traj, dtype=float)
    if X.ndim < 2:
        raise ValueError("trajectory must be at least 2-D (steps x state)")
    if X.shape[-2] <= horizon(spec):
        raise ValueError(
            f"trajectory has {X.shape[-2]} states but the specification needs step {horizon(spec)}"
        )
    return _check(spec, X, tol)


def _check(spec: Spec, X: np.ndarray, tol: float):
    if isinstance(spec, And):
        out = _check(spec.children[0], X, tol)
        for child in spec.children[1:]:
            out = out & _check(child, X, tol)
        return out
    if isinstance(spec, SafetyWindow):
        return np.all(member(spec.poly, X[..., spec.k_start : spec.k_end + 1, :], tol), axis=-1)
    if isinstance(spec, ExactReach):
        return member(spec.poly, X[..., spec.N, :], tol)
    if isinstance(spec, FiniteReach):
        return np.any(member(spec.poly, X[..., : spec.N + 1, :], tol), axis=-1)
    raise TypeError(f"not a specification node: {spec!r}")


def initial_constraints(spec: Spec) -> list[Polytope]:
    """Polytopes the state at step 0 must lie in for ``spec`` to hold."""
    return [c.poly for c in conjuncts(spec) if isinstance(c, SafetyWindow) and c.k_start == 0]
