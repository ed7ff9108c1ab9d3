"""
Upwind transport of (u, v) on every arc.

The hyperbolic part is advanced on the Riemann invariants w+ = (u+v)/2 (speed
+lambda) and w- = (u-v)/2 (speed -lambda). At every arc end exactly one
characteristic arrives from the interior; the node solve turns those values
into traces that satisfy the transmission conditions, and the external-point
closure reflects them with v = 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.state.fields import ArcState, NetworkState, from_invariants, to_invariants
from src.state.network_spec import NetworkSpec
from src.tools.network import node_signs
from src.utils.errors import CFLViolation, SolverBreakdown

logger = logging.getLogger("netchemo-hyperbolic")

CFL_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class NodeSystem:
    """(Lambda + L) for one node, L the weighted graph Laplacian of K."""

    node: str
    arc_order: Tuple[str, ...]
    lam: np.ndarray
    signs: np.ndarray  # +1 incoming, -1 outgoing
    K: np.ndarray
    matrix: np.ndarray
    factorization: tuple


@dataclass(frozen=True)
class NodeTraceSolution:
    node: str
    u_trace: Dict[str, float]
    v_trace: Dict[str, float]
    residual_flux: float


@dataclass(frozen=True)
class ArcTraces:
    """(u, v) at both ends of one arc; used as ghost values by the upwind update."""

    tail_u: float
    tail_v: float
    head_u: float
    head_v: float


def build_node_system(spec: NetworkSpec, node: str) -> NodeSystem:
    """
    Assemble and factor the node trace matrix.

    Raises:
        SolverBreakdown: the matrix is not positive definite (bad lambda or K)
    """
    order = spec.arcs_at(node)
    K = spec.K[node].as_array()
    lam = np.array([spec.arc(arc_id).lam for arc_id in order])
    laplacian = np.diag(K.sum(axis=1)) - K
    matrix = np.diag(lam) + laplacian
    try:
        factorization = cho_factor(matrix)
    except LinAlgError as e:
        raise SolverBreakdown(f"Node matrix at {node} is not positive definite: {e}")
    return NodeSystem(
        node=node,
        arc_order=order,
        lam=lam,
        signs=node_signs(spec, node),
        K=K,
        matrix=matrix,
        factorization=factorization,
    )


def solve_node_traces(system: NodeSystem, incoming_data: Mapping[str, float]) -> NodeTraceSolution:
    """
    Node traces from the characteristic data arriving at the node.

    Args:
        system: factored node system
        incoming_data: c_i = u+v (incoming arcs) or u-v (outgoing arcs) from the adjacent cell

    Returns:
        NodeTraceSolution: traces satisfying the transmission conditions
    """
    c = np.array([incoming_data[arc_id] for arc_id in system.arc_order], dtype=float)
    u_n = cho_solve(system.factorization, system.lam * c)
    if not np.all(np.isfinite(u_n)):
        raise SolverBreakdown(f"Node solve at {system.node} produced non-finite traces")
    v_n = system.signs * (c - u_n)
    residual = float(np.sum(system.signs * system.lam * v_n))
    return NodeTraceSolution(
        node=system.node,
        u_trace={arc_id: float(x) for arc_id, x in zip(system.arc_order, u_n)},
        v_trace={arc_id: float(x) for arc_id, x in zip(system.arc_order, v_n)},
        residual_flux=residual,
    )


def external_boundary_traces(end: str, w_incoming: float) -> Tuple[float, float]:
    """
    Zero-flux closure at an external point: the arriving characteristic is
    reflected, so v = 0 and u = 2 w.

    Args:
        end: "tail" (w- arrives) or "head" (w+ arrives)
        w_incoming: value of the arriving invariant in the adjacent cell
    """
    if end not in ("tail", "head"):
        raise ValueError(f"Arc end must be 'tail' or 'head', got {end!r}")
    return 2.0 * w_incoming, 0.0


def characteristic_data(spec: NetworkSpec, state: NetworkState, node: str) -> Dict[str, float]:
    """First-order extrapolation of the arriving characteristic at ``node``."""
    data = {}
    for arc_id in spec.arcs_at(node):
        s = state.states[arc_id]
        if spec.arc(arc_id).head == node:
            data[arc_id] = float(s.u[-1] + s.v[-1])
        else:
            data[arc_id] = float(s.u[0] - s.v[0])
    return data


def gamma1_from_traces(system: NodeSystem, solution: NodeTraceSolution) -> float:
    """Sum over incoming of lambda*v*u minus the same over outgoing arcs."""
    u = np.array([solution.u_trace[a] for a in system.arc_order])
    v = np.array([solution.v_trace[a] for a in system.arc_order])
    return float(np.sum(system.signs * system.lam * v * u))


def gamma1_from_jumps(system: NodeSystem, solution: NodeTraceSolution) -> float:
    """1/2 sum_ij K_ij (u_j - u_i)^2."""
    u = np.array([solution.u_trace[a] for a in system.arc_order])
    jumps = u[np.newaxis, :] - u[:, np.newaxis]
    return float(0.5 * np.sum(system.K * jumps**2))


def phi_gradient(phi: np.ndarray, h: float) -> np.ndarray:
    """Centered differences inside, second-order one-sided at the arc ends."""
    return np.gradient(phi, h, edge_order=2)


def transport_rates(
    spec: NetworkSpec, state: NetworkState, traces: Mapping[str, ArcTraces]
) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """
    Semi-discrete upwind right-hand side (du/dt, dv/dt) per arc.

    The explicit transport step is forward Euler of these rates, which lets the
    oracle integrator share the exact same space discretization.
    """
    rates = {}
    for arc in spec.arcs:
        s = state.states[arc.id]
        tr = traces[arc.id]
        h = arc.length / s.n_cells
        w_plus, w_minus = to_invariants(s.u, s.v)
        ghost_plus, _ = to_invariants(tr.tail_u, tr.tail_v)
        _, ghost_minus = to_invariants(tr.head_u, tr.head_v)

        upwind_plus = np.concatenate(([ghost_plus], w_plus[:-1]))
        upwind_minus = np.concatenate((w_minus[1:], [ghost_minus]))
        dw_plus = -(arc.lam / h) * (w_plus - upwind_plus)
        dw_minus = -(arc.lam / h) * (w_minus - upwind_minus)
        rates[arc.id] = from_invariants(dw_plus, dw_minus)
    return rates


def check_cfl(spec: NetworkSpec, state: NetworkState, dt: float) -> None:
    for arc in spec.arcs:
        h = arc.length / state.states[arc.id].n_cells
        courant = dt * arc.lam / h
        if courant > 1.0 + CFL_SLACK:
            raise CFLViolation(f"CFL violated on arc {arc.id}: dt*lambda/h = {courant:.6g} > 1")


def transport_step(
    spec: NetworkSpec, state: NetworkState, traces: Mapping[str, ArcTraces], dt: float
) -> NetworkState:
    """
    One first-order upwind step of (u, v) with endpoint traces as ghost values.

    Raises:
        CFLViolation: dt * lambda / h > 1 on some arc
    """
    check_cfl(spec, state, dt)
    rates = transport_rates(spec, state, traces)
    states = {}
    for arc_id, s in state.states.items():
        du, dv = rates[arc_id]
        states[arc_id] = ArcState(s.u + dt * du, s.v + dt * dv, s.phi.copy())
    return NetworkState(state.time, states)


def source_step(
    spec: NetworkSpec,
    state: NetworkState,
    phi_x: Optional[Mapping[str, np.ndarray]],
    dt: float,
    damping: bool = True,
) -> NetworkState:
    """
    Exact integration of v' = phi_x u - beta v with u and phi_x frozen.

    Args:
        phi_x: per-cell gradient of phi per arc; None switches the chemotactic term off
        damping: False drops the friction term (beta treated as 0)
    """
    states = {}
    for arc in spec.arcs:
        s = state.states[arc.id]
        forcing = np.zeros_like(s.u) if phi_x is None else phi_x[arc.id] * s.u
        if damping:
            decay = np.exp(-arc.beta * dt)
            # (1 - e^{-beta dt}) / beta, accurate for tiny beta*dt
            gain = -np.expm1(-arc.beta * dt) / arc.beta
            v = s.v * decay + forcing * gain
        else:
            v = s.v + dt * forcing
        states[arc.id] = ArcState(s.u.copy(), v, s.phi.copy())
    return NetworkState(state.time, states)


class HyperbolicSolver:
    """Node systems are factored once; coefficients never change during a run."""

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.systems: Dict[str, NodeSystem] = {node: build_node_system(spec, node) for node in spec.nodes}
        logger.debug(f"Factored {len(self.systems)} node systems")

    def node_solutions(self, state: NetworkState) -> Dict[str, NodeTraceSolution]:
        return {
            node: solve_node_traces(system, characteristic_data(self.spec, state, node))
            for node, system in self.systems.items()
        }

    def compute_traces(
        self, state: NetworkState
    ) -> Tuple[Dict[str, ArcTraces], Dict[str, NodeTraceSolution]]:
        """
        Gather characteristic data, solve every node, close external ends.

        Returns:
            (arc traces, node solutions)
        """
        solutions = self.node_solutions(state)
        traces = {}
        for arc in self.spec.arcs:
            s = state.states[arc.id]
            if arc.tail in solutions:
                tail = (solutions[arc.tail].u_trace[arc.id], solutions[arc.tail].v_trace[arc.id])
            else:
                _, w_minus = to_invariants(s.u[0], s.v[0])
                tail = external_boundary_traces("tail", w_minus)
            if arc.head in solutions:
                head = (solutions[arc.head].u_trace[arc.id], solutions[arc.head].v_trace[arc.id])
            else:
                w_plus, _ = to_invariants(s.u[-1], s.v[-1])
                head = external_boundary_traces("head", w_plus)
            traces[arc.id] = ArcTraces(tail[0], tail[1], head[0], head[1])
        return traces, solutions

    def phi_gradients(self, state: NetworkState) -> Dict[str, np.ndarray]:
        return {
            arc.id: phi_gradient(state.states[arc.id].phi, arc.length / state.states[arc.id].n_cells)
            for arc in self.spec.arcs
        }

    def step(
        self,
        state: NetworkState,
        dt: float,
        chemotaxis: bool = True,
        damping: bool = True,
    ) -> Tuple[NetworkState, Dict[str, NodeTraceSolution]]:
        """Transport then source; phi_x is frozen from the incoming state."""
        phi_x = self.phi_gradients(state) if chemotaxis else None
        traces, solutions = self.compute_traces(state)
        transported = transport_step(self.spec, state, traces, dt)
        return source_step(self.spec, transported, phi_x, dt, damping=damping), solutions
