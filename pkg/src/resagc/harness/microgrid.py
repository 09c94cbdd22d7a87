"""Five-bus DC microgrid in error coordinates.

Bus voltages follow ``V+ = V - tau C^-1 [(L + G) V + q / V]`` where ``q_i`` is
the power drawn at bus ``i``: loads draw their demand (``q_i = +P_i``) and
sources inject (``q_i = -u_i``). Errors are taken relative to the operating
point ``V*`` solving the power flow, so with ``e = V - V*`` the dynamics split
exactly into a local map with ``f_i(0) = 0``

    f_i(e) = e - (tau/C_i) [(L_ii + G_i) e + q_i / (e + V*_i) - q_i / V*_i]

and the linear coupling ``-(tau/C_i) L_il e_l``. The voltage band
``|V_i - V_nom| <= delta`` becomes an interval on ``e_i`` shifted by
``V_nom - V*_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import fsolve

from ..dynamics import Network, Subsystem
from ..geometry import Box, ExactReach, ModelError, Polytope

BUSES = 5
SOURCES = (1, 2)  # buses 2 and 3, zero-based
LOADS = (0, 3, 4)

# Published assumption half-widths, emitted next to computed values for comparison.
REFERENCE_INTERVALS = [36.33, 50.24, 51.17, 75.66, 24.73]


@dataclass
class MicrogridParams:
    capacitances: list[float] = field(default_factory=lambda: [2.2e-6, 1.9e-6, 1.5e-6, 1.7e-6, 1.7e-6])
    lines: dict[tuple[int, int], float] = field(
        default_factory=lambda: {(0, 1): 5.2, (0, 2): 4.6, (0, 3): 4.5, (1, 3): 6.0, (1, 4): 3.1, (2, 3): 5.6}
    )
    shunts: list[float] = field(default_factory=lambda: [0.0] * BUSES)
    v_nom: float = 450.0
    delta: float = 45.0
    demands: list[float] = field(default_factory=lambda: [300.0, 0.0, 0.0, 300.0, 300.0])
    u_max: float = 8000.0
    tau: float = 5e-8
    horizon: int = 15
    initial_halfwidth: float = 20.0
    proportional_weights: bool = True

    def validate(self) -> list[str]:
        errs = []
        if len(self.capacitances) != BUSES or any(c <= 0 for c in self.capacitances):
            errs.append("capacitances must be five positive values")
        if self.v_nom <= 0 or self.delta <= 0 or self.tau <= 0:
            errs.append("v_nom, delta and tau must be positive")
        if len(self.shunts) != BUSES or len(self.demands) != BUSES:
            errs.append("shunts and demands need one entry per bus")
        for (a, b), g in self.lines.items():
            if a == b or not (0 <= a < BUSES and 0 <= b < BUSES) or g < 0:
                errs.append(f"invalid line ({a}, {b}) with conductance {g}")
        if self.horizon < 1:
            errs.append("horizon must be at least 1")
        if not 0 <= self.initial_halfwidth < self.delta:
            errs.append("initial_halfwidth must lie in [0, delta)")
        return errs


def laplacian(params: MicrogridParams) -> np.ndarray:
    L = np.zeros((BUSES, BUSES))
    for (a, b), g in params.lines.items():
        L[a, a] += g
        L[b, b] += g
        L[a, b] -= g
        L[b, a] -= g
    return L


@dataclass(frozen=True)
class OperatingPoint:
    voltages: np.ndarray  # V*
    source_power: float  # per source, equal sharing
    draw: np.ndarray  # q_i


def operating_point(params: MicrogridParams) -> OperatingPoint:
    """Power-flow solution with equal source sharing and mean voltage ``V_nom``.

    The Laplacian is singular, so the voltage level is pinned by the mean.
    """
    Y = laplacian(params) + np.diag(params.shunts)
    P = np.array(params.demands, dtype=float)

    def draw(u):
        q = P.copy()
        q[list(SOURCES)] = -u
        return q

    def residual(z):
        V, u = z[:BUSES], z[BUSES]
        return np.append(Y @ V + draw(u) / V, V.mean() - params.v_nom)

    u0 = (P.sum() + params.v_nom**2 * sum(params.shunts)) / len(SOURCES)
    z, _, ier, msg = fsolve(residual, np.append(np.full(BUSES, params.v_nom), u0), xtol=1e-13, full_output=True)
    if ier != 1 or np.max(np.abs(residual(z))) > 1e-6:
        raise ModelError(f"power flow did not converge: {msg}")
    u = float(z[BUSES])
    if not 0.0 <= u <= params.u_max:
        raise ModelError(f"source power {u:.1f} W outside [0, {params.u_max}] W")
    return OperatingPoint(z[:BUSES], u, draw(u))


LOCAL_MAP = "a*x0 - c*q/(x0 + v) + b"


def proportional_weights(net: Network) -> dict[int, dict[int, float]]:
    """Split each bus's budget across neighbours in proportion to coupling strength."""
    w: dict[int, dict[int, float]] = {i: {} for i in range(net.size)}
    for (i, l), C in net.couplings.items():
        w[i][l] = float(np.abs(C).max())
    return {i: {l: v / sum(d.values()) for l, v in d.items()} for i, d in w.items()}


def build_microgrid(params: MicrogridParams | None = None):
    """Network of five scalar subsystems, exact-time band specs, initial boxes and weights."""
    params = params or MicrogridParams()
    errs = params.validate()
    if errs:
        raise ModelError("; ".join(errs))
    L = laplacian(params)
    op = operating_point(params)
    subs, couplings, specs = [], {}, []
    for i in range(BUSES):
        c = params.tau / params.capacitances[i]
        v, q = float(op.voltages[i]), float(op.draw[i])
        p = {"a": 1.0 - c * (L[i, i] + params.shunts[i]), "c": c, "q": q, "v": v, "b": c * q / v}
        subs.append(Subsystem.nonlinear(i, [LOCAL_MAP], p))
        for l in range(BUSES):
            if l != i and L[i, l] != 0.0:
                couplings[(i, l)] = np.array([[-c * L[i, l]]])
        shift = params.v_nom - v
        specs.append(ExactReach(Polytope.from_box([shift - params.delta], [shift + params.delta]), params.horizon))
    net = Network(tuple(subs), couplings)
    Bs = [Box.ball(np.zeros(1), params.initial_halfwidth) for _ in range(BUSES)]
    weights = proportional_weights(net) if params.proportional_weights else None
    return net, specs, Bs, weights, op
