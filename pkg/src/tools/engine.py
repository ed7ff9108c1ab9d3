"""Engine layer for netchemo

This module ties the hyperbolic and parabolic solvers into the split time loop
and exposes the functions the CLI and the services call.

Step order (Lie splitting):
1. node/boundary trace solves
2. upwind transport of (u, v)
3. exact exponential v-source with phi_x frozen
4. implicit phi diffusion fed by the transported u
"""

from __future__ import annotations

import logging
import math
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

from src.services.diagnostics import DiagnosticsMonitor
from src.state.fields import ArcGrid, ArcState, InitialCondition, NetworkState, build_grids, build_initial_state
from src.state.network_spec import NetworkSpec
from src.state.run_store import RecordStore, RunResult, SimConfig, Toggles
from src.tools.hyperbolic import HyperbolicSolver
from src.tools.parabolic import ParabolicSolver

logger = logging.getLogger("netchemo-engine")

# steps shorter than this fraction of dt are merged into the previous step
REMAINDER_SLACK = 1e-12


def compute_dt(spec: NetworkSpec, grids: Mapping[str, ArcGrid], cfl: float) -> float:
    """dt = cfl * min over arcs of h / lambda."""
    return cfl * min(grids[arc.id].h / arc.lam for arc in spec.arcs)


def step_times(t_final: float, dt: float) -> List[float]:
    """
    Sample times t_1 < ... < t_n = t_final of a run with nominal step dt.

    t_k = k*dt except the last, which is exactly t_final. Consecutive
    differences are exact in floating point, so the step sizes sum to t_final.
    """
    n_steps = max(1, math.ceil(t_final / dt * (1.0 - REMAINDER_SLACK)))
    return [k * dt for k in range(1, n_steps)] + [t_final]


def iter_steps(t_final: float, dt: float) -> Iterator[Tuple[float, float]]:
    """Yield (dt_k, t_k) for every step of a run."""
    previous = 0.0
    for t in step_times(t_final, dt):
        yield t - previous, t
        previous = t


def grids_from_state(spec: NetworkSpec, state: NetworkState) -> Dict[str, ArcGrid]:
    return {arc.id: ArcGrid(arc.id, state.states[arc.id].n_cells, arc.length) for arc in spec.arcs}


class Simulator:
    """
    Holds the factored node systems and the diffusion system of one network
    and grid set.
    """

    def __init__(self, spec: NetworkSpec, grids: Mapping[str, ArcGrid], toggles: Optional[Toggles] = None):
        self.spec = spec
        self.grids = dict(grids)
        self.toggles = toggles or Toggles()
        self.hyperbolic = HyperbolicSolver(spec)
        self.parabolic = ParabolicSolver(spec, self.grids)
        self.last_node_solutions = {}

    def step(self, state: NetworkState, dt: float, new_time: Optional[float] = None) -> NetworkState:
        """
        Advance one split step.

        Args:
            state: current state (not modified)
            dt: step size, at most the CFL bound
            new_time: exact time label of the result (defaults to state.time + dt)
        """
        moved, self.last_node_solutions = self.hyperbolic.step(
            state,
            dt,
            chemotaxis=self.toggles.chemotaxis_source,
            damping=self.toggles.damping,
        )
        u_new = {arc_id: s.u for arc_id, s in moved.states.items()}
        phi = self.parabolic.step(state, u_new, dt, production=self.toggles.production)
        states = {arc_id: ArcState(s.u, s.v, phi[arc_id]) for arc_id, s in moved.states.items()}
        return NetworkState(state.time + dt if new_time is None else new_time, states)

    def run(
        self,
        state: NetworkState,
        t_final: float,
        dt: float,
        output_every: int = 1,
        keep_snapshots: bool = False,
    ) -> RunResult:
        """
        Loop to t_final, sampling diagnostics at t = 0, every ``output_every``
        steps and at the final step.
        """
        monitor = DiagnosticsMonitor(self.spec, self.hyperbolic)
        store = RecordStore(keep_snapshots=keep_snapshots)
        store.add(monitor.sample(state), state)

        steps = 0
        for dt_k, t_k in iter_steps(t_final, dt):
            state = self.step(state, dt_k, new_time=t_k)
            steps += 1
            if steps % output_every == 0 or t_k == t_final:
                store.add(monitor.sample(state), state)

        logger.info(f"Run finished: {steps} steps to t={state.time:.6g}")
        return RunResult(final_state=state, records=store.records, wall_steps=steps, snapshots=store.snapshots)


def step(spec: NetworkSpec, state: NetworkState, dt: float, toggles: Optional[Toggles] = None) -> NetworkState:
    """One split step on a throwaway simulator (factorizations are not reused)."""
    return Simulator(spec, grids_from_state(spec, state), toggles).step(state, dt)


def run(
    spec: NetworkSpec,
    config: SimConfig,
    ic: Mapping[str, InitialCondition],
    keep_snapshots: bool = False,
) -> RunResult:
    """
    Build grids and initial data, then run to config.t_final.

    Returns:
        RunResult: final state, sampled records and step count
    """
    grids = build_grids(spec, config.n_cells)
    state = build_initial_state(spec, grids, ic, compat_check=config.compat_check)
    dt = compute_dt(spec, grids, config.cfl)
    logger.info(f"Running to t={config.t_final} with dt={dt:.6g} ({len(step_times(config.t_final, dt))} steps)")
    simulator = Simulator(spec, grids, config.toggles)
    return simulator.run(state, config.t_final, dt, int(config.output_every), keep_snapshots)
