"""
Diagnostics for the conserved and dissipated quantities of the model: total
mass, the energies E1/E2, the node dissipation terms, the global-existence
functional F_T and the discrete compatibility residual of the data.

Discrete norms: midpoint quadrature for L2, forward differences for first
derivatives, centered second differences for phi_xx. Time derivatives v_t and
phi_xt are backward differences between consecutive samples.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional

import numpy as np

from src.state.fields import NetworkState
from src.state.network_spec import NetworkSpec
from src.tools.hyperbolic import HyperbolicSolver, gamma1_from_jumps, gamma1_from_traces
from src.tools.network import arc_sign_at_node, hub_trace_coefficients
from src.tools.parabolic import gamma2_from_traces, node_kk_fluxes, node_phi_dissipation

logger = logging.getLogger("netchemo-diagnostics")

GAMMA_TOLERANCE = 1e-12
FLUX_TOLERANCE = 1e-10


@dataclass(frozen=True)
class FTSupTerms:
    """Running per-arc suprema of |u|_H1^2, |v|_H1^2 and |phi|_H2^2."""

    u: Mapping[str, float]
    v: Mapping[str, float]
    phi: Mapping[str, float]

    @property
    def total_u(self) -> float:
        return math.fsum(self.u.values())

    @property
    def total_v(self) -> float:
        return math.fsum(self.v.values())

    @property
    def total_phi(self) -> float:
        return math.fsum(self.phi.values())

    @property
    def total(self) -> float:
        return self.total_u + self.total_v + self.total_phi


@dataclass(frozen=True)
class FTIntTerms:
    ux: float = 0.0
    v: float = 0.0
    vt: float = 0.0
    phix: float = 0.0
    phixt: float = 0.0

    @property
    def total(self) -> float:
        return self.ux + self.v + self.vt + self.phix + self.phixt

    def as_tuple(self):
        return (self.ux, self.v, self.vt, self.phix, self.phixt)


@dataclass(frozen=True)
class DiagnosticsRecord:
    time: float
    mass: float
    E1: float
    E2: float
    gamma1: Dict[str, float]
    gamma2: Dict[str, float]
    FT_sup_terms: FTSupTerms
    FT_int_terms: FTIntTerms
    compat_residual: float
    # integrands at this sample, needed for the next trapezoid update
    FT_rates: FTIntTerms = field(default_factory=FTIntTerms)
    flux_residual: float = 0.0
    phi_flux_residual: float = 0.0
    identity_gap: float = 0.0
    hub_gap: float = 0.0
    ft0_squared: float = 0.0

    @property
    def FT_squared(self) -> float:
        return self.FT_sup_terms.total + self.FT_int_terms.total

    @property
    def FT(self) -> float:
        return math.sqrt(self.FT_squared)

    @property
    def cubic_ratio(self) -> float:
        """F_T^2 / F_0^2 (inf when the initial functional vanishes)."""
        if self.ft0_squared == 0.0:
            return 0.0 if self.FT_squared == 0.0 else math.inf
        return self.FT_squared / self.ft0_squared


# -------- discrete norms --------


def l2_sq(f: np.ndarray, h: float) -> float:
    return float(np.sum(f * f) * h)


def dx_forward(f: np.ndarray, h: float) -> np.ndarray:
    return np.diff(f) / h


def dxx_centered(f: np.ndarray, h: float) -> np.ndarray:
    return (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2


def h1_sq(f: np.ndarray, h: float) -> float:
    return l2_sq(f, h) + l2_sq(dx_forward(f, h), h)


def h2_sq(f: np.ndarray, h: float) -> float:
    return h1_sq(f, h) + l2_sq(dxx_centered(f, h), h)


def boundary_gradient(f: np.ndarray, h: float, end: str) -> float:
    """Second-order one-sided derivative at an arc end from three cell averages."""
    if end == "tail":
        return float((-2.0 * f[0] + 3.0 * f[1] - f[2]) / h)
    return float((2.0 * f[-1] - 3.0 * f[-2] + f[-3]) / h)


# -------- residuals --------


def compatibility_residual(spec: NetworkSpec, state: NetworkState) -> float:
    """
    Max discrete residual of the zero-flux and transmission conditions.

    External ends contribute |v| and |phi_x|; node ends contribute the transmission
    residual |theta lambda v + sum K (u_j - u_i)| and the permeability residual
    |theta D phi_x - sum alpha (phi_j - phi_i)|, all on adjacent-cell values.
    """
    residual = 0.0
    for arc in spec.arcs:
        s = state.states[arc.id]
        h = arc.length / s.n_cells
        for end, point, cell in (("tail", arc.tail, 0), ("head", arc.head, -1)):
            if spec.is_external(point):
                residual = max(residual, abs(s.v[cell]), abs(boundary_gradient(s.phi, h, end)))

    for node in spec.nodes:
        order = spec.arcs_at(node)
        K = spec.K[node].as_array()
        alpha = spec.alpha[node].as_array()
        cells = [-1 if spec.arc(a).head == node else 0 for a in order]
        u = np.array([state.states[a].u[c] for a, c in zip(order, cells)])
        phi = np.array([state.states[a].phi[c] for a, c in zip(order, cells)])
        for i, arc_id in enumerate(order):
            arc = spec.arc(arc_id)
            s = state.states[arc_id]
            theta = arc_sign_at_node(spec, arc_id, node)
            h = arc.length / s.n_cells
            phi_x = boundary_gradient(s.phi, h, "head" if theta > 0 else "tail")
            tc = theta * arc.lam * s.v[cells[i]] + np.sum(K[i] * (u - u[i]))
            kc = theta * arc.D * phi_x - np.sum(alpha[i] * (phi - phi[i]))
            residual = max(residual, abs(float(tc)), abs(float(kc)))
    return residual


def verify_hub_representation(spec: NetworkSpec, solutions: Mapping[str, object]) -> float:
    """
    Largest error of u_j(N) = u_hub(N) + sum theta v_i(N) over nodes with a hub.
    """
    gap = 0.0
    for node, solution in solutions.items():
        if spec.global_condition_hub.get(node) is None:
            continue
        representation = hub_trace_coefficients(spec, node)
        rebuilt = representation.reconstruct(solution.u_trace[representation.hub], solution.v_trace)
        for arc_id, value in rebuilt.items():
            gap = max(gap, abs(value - solution.u_trace[arc_id]))
    return gap


# -------- measurement --------


def _sup_update(previous: Optional[Mapping[str, float]], current: Mapping[str, float]) -> Dict[str, float]:
    if previous is None:
        return dict(current)
    return {k: max(previous[k], current[k]) for k in current}


def measure(
    spec: NetworkSpec,
    state: NetworkState,
    prev_state: Optional[NetworkState] = None,
    prev_record: Optional[DiagnosticsRecord] = None,
    solver: Optional[HyperbolicSolver] = None,
) -> DiagnosticsRecord:
    """
    Evaluate every monitored quantity on one sample.

    Args:
        spec: validated network
        state: the sampled state
        prev_state: previous sample (None at t = 0)
        prev_record: record of the previous sample; carries the running F_T terms
        solver: reuse the factored node systems of a running simulation

    Returns:
        DiagnosticsRecord

    Raises:
        ValueError: the two states live on different grids
    """
    solver = solver or HyperbolicSolver(spec)
    if prev_state is not None:
        for arc_id, s in state.states.items():
            if prev_state.states[arc_id].n_cells != s.n_cells:
                raise ValueError(f"Grid mismatch on arc {arc_id} between consecutive samples")

    dt = 0.0 if prev_state is None else state.time - prev_state.time
    mass, e1, e2 = [], [], []
    sup_u, sup_v, sup_phi = {}, {}, {}
    ux = v_h1 = vt = phix = phixt = 0.0

    for arc in spec.arcs:
        s = state.states[arc.id]
        h = arc.length / s.n_cells
        mass.append(float(np.sum(s.u)) * h)
        e1.append(l2_sq(s.u, h) + l2_sq(s.v, h))
        e2.append(l2_sq(s.phi, h))

        sup_u[arc.id] = h1_sq(s.u, h)
        sup_v[arc.id] = h1_sq(s.v, h)
        sup_phi[arc.id] = h2_sq(s.phi, h)

        phi_x = dx_forward(s.phi, h)
        ux += l2_sq(dx_forward(s.u, h), h)
        v_h1 += h1_sq(s.v, h)
        phix += l2_sq(phi_x, h) + l2_sq(dxx_centered(s.phi, h), h)
        if prev_state is not None and dt > 0:
            p = prev_state.states[arc.id]
            vt += l2_sq((s.v - p.v) / dt, h)
            phixt += l2_sq((phi_x - dx_forward(p.phi, h)) / dt, h)

    rates = FTIntTerms(ux=ux, v=v_h1, vt=vt, phix=phix, phixt=phixt)
    if prev_record is None:
        integrals = FTIntTerms()
        sups = FTSupTerms(sup_u, sup_v, sup_phi)
    else:
        integrals = FTIntTerms(
            *(
                acc + 0.5 * dt * (old + new)
                for acc, old, new in zip(
                    prev_record.FT_int_terms.as_tuple(), prev_record.FT_rates.as_tuple(), rates.as_tuple()
                )
            )
        )
        previous = prev_record.FT_sup_terms
        sups = FTSupTerms(
            _sup_update(previous.u, sup_u),
            _sup_update(previous.v, sup_v),
            _sup_update(previous.phi, sup_phi),
        )

    gamma1, gamma2 = {}, {}
    flux_residual = phi_flux_residual = identity_gap = 0.0
    solutions = solver.node_solutions(state)
    for node, solution in solutions.items():
        system = solver.systems[node]
        gamma1[node] = gamma1_from_traces(system, solution)
        gamma2[node] = gamma2_from_traces(spec, state, node)
        identity_gap = max(
            identity_gap,
            abs(gamma1[node] - gamma1_from_jumps(system, solution)),
            abs(gamma2[node] - node_phi_dissipation(spec, state, node)),
        )
        flux_residual = max(flux_residual, abs(solution.residual_flux))
        phi_flux_residual = max(phi_flux_residual, abs(math.fsum(node_kk_fluxes(spec, state, node).values())))
        if gamma1[node] < -GAMMA_TOLERANCE or gamma2[node] < -GAMMA_TOLERANCE:
            logger.warning(
                f"Negative node dissipation at {node}, t={state.time:.6g}: "
                f"gamma1={gamma1[node]:.3e}, gamma2={gamma2[node]:.3e}"
            )
    if flux_residual > FLUX_TOLERANCE:
        logger.warning(f"Node flux residual {flux_residual:.3e} at t={state.time:.6g}")

    record = DiagnosticsRecord(
        time=state.time,
        mass=math.fsum(mass),
        E1=math.fsum(e1),
        E2=math.fsum(e2),
        gamma1=gamma1,
        gamma2=gamma2,
        FT_sup_terms=sups,
        FT_int_terms=integrals,
        compat_residual=compatibility_residual(spec, state),
        FT_rates=rates,
        flux_residual=flux_residual,
        phi_flux_residual=phi_flux_residual,
        identity_gap=identity_gap,
        hub_gap=verify_hub_representation(spec, solutions),
        ft0_squared=0.0,
    )
    ft0 = record.FT_squared if prev_record is None else prev_record.ft0_squared
    return replace(record, ft0_squared=ft0)


class DiagnosticsMonitor:
    """Samples a running simulation, keeping the previous state for time derivatives."""

    def __init__(self, spec: NetworkSpec, solver: Optional[HyperbolicSolver] = None):
        self.spec = spec
        self.solver = solver or HyperbolicSolver(spec)
        self.prev_state: Optional[NetworkState] = None
        self.prev_record: Optional[DiagnosticsRecord] = None

    def sample(self, state: NetworkState) -> DiagnosticsRecord:
        record = measure(self.spec, state, self.prev_state, self.prev_record, self.solver)
        self.prev_state = state
        self.prev_record = record
        return record
