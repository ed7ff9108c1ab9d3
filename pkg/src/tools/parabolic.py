"""
Implicit diffusion-reaction step for phi on the whole network.

All cells of all arcs form one sparse system. Inside an arc the usual
three-point finite-volume diffusion applies, external ends are zero-flux and at
a node the flux entering arc i is F_i = sum_j alpha_ij (Phi_j - Phi_i) with Phi
the adjacent cell averages (Kedem-Katchalsky permeability condition).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from src.state.fields import ArcGrid, NetworkState
from src.state.network_spec import NetworkSpec
from src.utils.errors import SolverBreakdown

logger = logging.getLogger("netchemo-parabolic")

REASSEMBLY_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiffusionSystem:
    matrix: sparse.csc_matrix
    dt_built: float
    factorization: object
    offsets: Dict[str, Tuple[int, int]]


def cell_offsets(spec: NetworkSpec, grids: Mapping[str, ArcGrid]) -> Dict[str, Tuple[int, int]]:
    """Arc id -> (first global index, number of cells)."""
    offsets = {}
    start = 0
    for arc in spec.arcs:
        n = grids[arc.id].n_cells
        offsets[arc.id] = (start, n)
        start += n
    return offsets


def adjacent_cell(spec: NetworkSpec, grids: Mapping[str, ArcGrid], arc_id: str, node: str) -> int:
    """Local index of the cell touching ``node``."""
    return grids[arc_id].n_cells - 1 if spec.arc(arc_id).head == node else 0


def assemble_operator(spec: NetworkSpec, grids: Mapping[str, ArcGrid]) -> Tuple[sparse.csr_matrix, Dict[str, Tuple[int, int]]]:
    """
    Semi-discrete operator phi' = L phi (+ a u), diffusion, node fluxes and -b.

    Returns:
        (L as CSR, offsets)
    """
    offsets = cell_offsets(spec, grids)
    size = sum(n for _, n in offsets.values())
    rows, cols, vals = [], [], []

    def add(r: int, c: int, value: float) -> None:
        rows.append(r)
        cols.append(c)
        vals.append(value)

    for arc in spec.arcs:
        start, n = offsets[arc.id]
        h = grids[arc.id].h
        coupling = arc.D / h**2
        for j in range(n - 1):
            p, q = start + j, start + j + 1
            add(p, p, -coupling)
            add(p, q, coupling)
            add(q, q, -coupling)
            add(q, p, coupling)
        for j in range(n):
            add(start + j, start + j, -arc.b)

    for node in spec.nodes:
        matrix = spec.alpha[node]
        weights = matrix.as_array()
        for i, arc_i in enumerate(matrix.arc_order):
            cell_i = offsets[arc_i][0] + adjacent_cell(spec, grids, arc_i, node)
            h_i = grids[arc_i].h
            for j, arc_j in enumerate(matrix.arc_order):
                if i == j or weights[i, j] == 0.0:
                    continue
                cell_j = offsets[arc_j][0] + adjacent_cell(spec, grids, arc_j, node)
                add(cell_i, cell_i, -weights[i, j] / h_i)
                add(cell_i, cell_j, weights[i, j] / h_i)

    operator = sparse.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    return operator, offsets


def assemble(spec: NetworkSpec, grids: Mapping[str, ArcGrid], dt: float) -> DiffusionSystem:
    """
    Implicit Euler system (I/dt + b I - Lap) phi^{n+1} = phi^n/dt + a u^{n+1}.

    Raises:
        ValueError: dt is not positive
        SolverBreakdown: the sparse factorization failed
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    operator, offsets = assemble_operator(spec, grids)
    size = operator.shape[0]
    matrix = (sparse.identity(size, format="csr") / dt - operator).tocsc()
    try:
        factorization = splu(matrix)
    except RuntimeError as e:
        raise SolverBreakdown(f"Diffusion matrix factorization failed: {e}")
    logger.debug(f"Assembled diffusion system of size {size} for dt={dt:.6g}")
    return DiffusionSystem(matrix=matrix, dt_built=dt, factorization=factorization, offsets=offsets)


def flatten(state: NetworkState, field: str, offsets: Mapping[str, Tuple[int, int]]) -> np.ndarray:
    size = sum(n for _, n in offsets.values())
    out = np.empty(size)
    for arc_id, (start, n) in offsets.items():
        out[start:start + n] = getattr(state.states[arc_id], field)
    return out


def diffusion_step(
    spec: NetworkSpec,
    system: DiffusionSystem,
    state: NetworkState,
    u_new: Mapping[str, np.ndarray],
    production: bool = True,
    extra_source: Optional[Mapping[str, np.ndarray]] = None,
) -> Dict[str, np.ndarray]:
    """
    Solve one implicit step for phi.

    Args:
        system: assembled for the current dt
        state: provides phi^n
        u_new: post-transport density per arc (feeds the a*u production)
        production: False drops the a*u term
        extra_source: optional per-arc source added to the right-hand side
            (manufactured-solution tests)

    Returns:
        dict: arc id -> phi^{n+1}
    """
    dt = system.dt_built
    rhs = flatten(state, "phi", system.offsets) / dt
    for arc in spec.arcs:
        start, n = system.offsets[arc.id]
        if production and arc.a != 0.0:
            rhs[start:start + n] += arc.a * np.asarray(u_new[arc.id])
        if extra_source is not None and arc.id in extra_source:
            rhs[start:start + n] += extra_source[arc.id]

    phi = system.factorization.solve(rhs)
    if not np.all(np.isfinite(phi)):
        raise SolverBreakdown("Diffusion solve produced non-finite values")
    return {arc_id: phi[start:start + n].copy() for arc_id, (start, n) in system.offsets.items()}


def _adjacent_phi(spec: NetworkSpec, state: NetworkState, node: str) -> np.ndarray:
    values = []
    for arc_id in spec.arcs_at(node):
        phi = state.states[arc_id].phi
        values.append(phi[-1] if spec.arc(arc_id).head == node else phi[0])
    return np.array(values)


def node_kk_fluxes(spec: NetworkSpec, state: NetworkState, node: str) -> Dict[str, float]:
    """F_i = sum_j alpha_ij (Phi_j - Phi_i): the flux entering arc i through the node."""
    alpha = spec.alpha[node].as_array()
    phi = _adjacent_phi(spec, state, node)
    fluxes = alpha @ phi - alpha.sum(axis=1) * phi
    return {arc_id: float(f) for arc_id, f in zip(spec.arcs_at(node), fluxes)}


def node_phi_dissipation(spec: NetworkSpec, state: NetworkState, node: str) -> float:
    """1/2 sum_ij alpha_ij (Phi_j - Phi_i)^2 on adjacent-cell traces."""
    alpha = spec.alpha[node].as_array()
    phi = _adjacent_phi(spec, state, node)
    jumps = phi[np.newaxis, :] - phi[:, np.newaxis]
    return float(0.5 * np.sum(alpha * jumps**2))


def gamma2_from_traces(spec: NetworkSpec, state: NetworkState, node: str) -> float:
    """Sum over outgoing of D*Phi*phi_x minus the same over incoming arcs."""
    fluxes = node_kk_fluxes(spec, state, node)
    phi = _adjacent_phi(spec, state, node)
    # D phi_x = F on incoming arcs, -F on outgoing arcs
    return float(-sum(p * fluxes[a] for p, a in zip(phi, spec.arcs_at(node))))


class ParabolicSolver:
    """Keeps the factored system and rebuilds it only when dt changes."""

    def __init__(self, spec: NetworkSpec, grids: Mapping[str, ArcGrid]):
        self.spec = spec
        self.grids = dict(grids)
        self.system: Optional[DiffusionSystem] = None
        self.assemblies = 0

    def system_for(self, dt: float) -> DiffusionSystem:
        if self.system is None or abs(dt - self.system.dt_built) > REASSEMBLY_RTOL * self.system.dt_built:
            self.system = assemble(self.spec, self.grids, dt)
            self.assemblies += 1
        return self.system

    def step(
        self,
        state: NetworkState,
        u_new: Mapping[str, np.ndarray],
        dt: float,
        production: bool = True,
        extra_source: Optional[Mapping[str, np.ndarray]] = None,
    ) -> Dict[str, np.ndarray]:
        return diffusion_step(self.spec, self.system_for(dt), state, u_new, production, extra_source)
