"""
Reference integrators.

``oracle_run`` integrates the same semi-discrete system as the main solver
(identical cells, node solves and flux formulas) with classical RK4 and
explicit diffusion, so comparing the two isolates the time-splitting error.
``dense_node_traces`` solves the raw transmission + characteristic equations
of one node as a generic dense system.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from src.state.fields import ArcGrid, ArcState, InitialCondition, NetworkState, build_initial_state
from src.state.network_spec import NetworkSpec
from src.state.run_store import Toggles
from src.tools.engine import Simulator, compute_dt, iter_steps
from src.tools.hyperbolic import HyperbolicSolver, transport_rates
from src.tools.network import node_signs
from src.tools.parabolic import assemble_operator, flatten
from src.utils.errors import ConfigError, StabilityViolation
from src.utils.settings import get_thread_count

logger = logging.getLogger("netchemo-oracle")

Rates = Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]]


def dense_node_traces(
    spec: NetworkSpec, node: str, incoming_data: Mapping[str, float]
) -> Tuple[Dict[str, float], Dict[str, float]]:
    """
    Solve the 2m x 2m system of one node directly:
    -theta_i lambda_i v_i - sum_j K_ij (u_j - u_i) = 0 and u_i + theta_i v_i = c_i.

    Returns:
        (u traces, v traces)
    """
    order = spec.arcs_at(node)
    m = len(order)
    K = spec.K[node].as_array()
    theta = node_signs(spec, node)
    lam = np.array([spec.arc(a).lam for a in order])

    A = np.zeros((2 * m, 2 * m))
    rhs = np.zeros(2 * m)
    for i in range(m):
        # transmission row in the unknowns (u_0..u_{m-1}, v_0..v_{m-1})
        A[i, :m] = -K[i]
        A[i, i] += K[i].sum()
        A[i, m + i] = -theta[i] * lam[i]
        # characteristic row
        A[m + i, i] = 1.0
        A[m + i, m + i] = theta[i]
        rhs[m + i] = incoming_data[order[i]]
    x = np.linalg.solve(A, rhs)
    return (
        {a: float(x[i]) for i, a in enumerate(order)},
        {a: float(x[m + i]) for i, a in enumerate(order)},
    )


class SemiDiscreteSystem:
    """Right-hand side of the method-of-lines system shared with the main solver."""

    def __init__(self, spec: NetworkSpec, grids: Mapping[str, ArcGrid], toggles: Optional[Toggles] = None):
        self.spec = spec
        self.grids = dict(grids)
        self.toggles = toggles or Toggles()
        self.hyperbolic = HyperbolicSolver(spec)
        self.operator, self.offsets = assemble_operator(spec, self.grids)

    def rates(self, state: NetworkState) -> Rates:
        traces, _ = self.hyperbolic.compute_traces(state)
        transport = transport_rates(self.spec, state, traces)
        phi_rate = self.operator @ flatten(state, "phi", self.offsets)
        phi_x = self.hyperbolic.phi_gradients(state)

        rates = {}
        for arc in self.spec.arcs:
            s = state.states[arc.id]
            du, dv = transport[arc.id]
            if self.toggles.chemotaxis_source:
                dv = dv + phi_x[arc.id] * s.u
            if self.toggles.damping:
                dv = dv - arc.beta * s.v
            start, n = self.offsets[arc.id]
            dphi = phi_rate[start:start + n].copy()
            if self.toggles.production:
                dphi += arc.a * s.u
            rates[arc.id] = (du, dv, dphi)
        return rates

    def stable_dt(self) -> float:
        """
        Transport guard h/lambda and 2 / max_i sum_j |L_ij| for the phi operator.

        The spectrum of L is real and bounded by its largest absolute row sum.
        """
        transport = min(self.grids[a.id].h / a.lam for a in self.spec.arcs)
        row_sums = np.asarray(abs(self.operator).sum(axis=1)).ravel()
        if row_sums.size == 0 or row_sums.max() == 0.0:
            return transport
        return min(transport, 2.0 / float(row_sums.max()))


def _axpy(state: NetworkState, rates: Rates, dt: float) -> NetworkState:
    return NetworkState(
        state.time,
        {
            arc_id: ArcState(s.u + dt * rates[arc_id][0], s.v + dt * rates[arc_id][1], s.phi + dt * rates[arc_id][2])
            for arc_id, s in state.states.items()
        },
    )


def rk4_step(system: SemiDiscreteSystem, state: NetworkState, dt: float) -> NetworkState:
    k1 = system.rates(state)
    k2 = system.rates(_axpy(state, k1, 0.5 * dt))
    k3 = system.rates(_axpy(state, k2, 0.5 * dt))
    k4 = system.rates(_axpy(state, k3, dt))
    combined = {
        arc_id: tuple((a + 2.0 * b + 2.0 * c + d) / 6.0 for a, b, c, d in zip(k1[arc_id], k2[arc_id], k3[arc_id], k4[arc_id]))
        for arc_id in k1
    }
    return _axpy(state, combined, dt)


def oracle_run(
    spec: NetworkSpec,
    grids: Mapping[str, ArcGrid],
    ic: Mapping[str, InitialCondition],
    t_final: float,
    dt_oracle: float,
    toggles: Optional[Toggles] = None,
    initial_state: Optional[NetworkState] = None,
) -> NetworkState:
    """
    Integrate the shared semi-discrete system with RK4 to t_final.

    Raises:
        StabilityViolation: dt_oracle exceeds the explicit stability guard, or the
            iteration stops producing finite values
    """
    system = SemiDiscreteSystem(spec, grids, toggles)
    limit = system.stable_dt()
    if dt_oracle > limit:
        raise StabilityViolation(f"dt_oracle={dt_oracle:.3e} exceeds the explicit stability guard {limit:.3e}")

    state = initial_state or build_initial_state(spec, grids, ic, compat_check=False)
    for dt_k, t_k in iter_steps(t_final, dt_oracle):
        try:
            state = rk4_step(system, state, dt_k)
        except (ValueError, np.linalg.LinAlgError) as e:
            raise StabilityViolation(f"Oracle broke down before t={t_k:.6g}: {e}") from e
        if not all(s.is_finite() for s in state.states.values()):
            raise StabilityViolation(f"Oracle state is not finite at t={t_k:.6g} with dt={dt_oracle:.3e}")
        state = NetworkState(t_k, state.states)
    logger.info(f"Oracle reached t={state.time:.6g} with dt={dt_oracle:.3e}")
    return state


def linf_gap(a: NetworkState, b: NetworkState) -> float:
    gap = 0.0
    for arc_id, s in a.states.items():
        o = b.states[arc_id]
        for x, y in ((s.u, o.u), (s.v, o.v), (s.phi, o.phi)):
            gap = max(gap, float(np.max(np.abs(x - y))))
    return gap


def oracle_compare(
    spec: NetworkSpec,
    grids: Mapping[str, ArcGrid],
    ic: Mapping[str, InitialCondition],
    t_final: float,
    cfl: float,
    dt_oracle: float,
    toggles: Optional[Toggles] = None,
    refine: int = 1,
) -> Dict[str, Any]:
    """
    Main solver vs oracle at t_final, then again with the main dt halved
    ``refine`` times (0, 1 or 2).

    Returns:
        dict with dt and gap; one halving adds dt_half, gap_half and ratio,
        a second adds dt_quarter, gap_quarter and ratio_quarter
    """
    if refine not in (0, 1, 2):
        raise ConfigError(f"refine must be 0, 1 or 2, got {refine}")
    initial = build_initial_state(spec, grids, ic, compat_check=False)
    dt = compute_dt(spec, grids, cfl)

    def main_run(step: float) -> NetworkState:
        return Simulator(spec, grids, toggles).run(initial, t_final, step).final_state

    def ratio(coarse_gap: float, fine_gap: float) -> float:
        return coarse_gap / fine_gap if fine_gap > 0 else float("inf")

    steps = [dt * 0.5**k for k in range(int(refine) + 1)]
    with ThreadPoolExecutor(max_workers=get_thread_count()) as pool:
        reference = pool.submit(oracle_run, spec, grids, ic, t_final, dt_oracle, toggles, initial)
        runs = [pool.submit(main_run, step) for step in steps]
        oracle_state = reference.result()
        gaps = [linf_gap(run.result(), oracle_state) for run in runs]

    result: Dict[str, Any] = {"t_final": t_final, "dt_oracle": dt_oracle, "dt": dt, "gap": gaps[0]}
    if refine >= 1:
        result.update(dt_half=steps[1], gap_half=gaps[1], ratio=ratio(gaps[0], gaps[1]))
    if refine == 2:
        result.update(dt_quarter=steps[2], gap_quarter=gaps[2], ratio_quarter=ratio(gaps[1], gaps[2]))
    logger.info(f"Oracle comparison: {result}")
    return result
