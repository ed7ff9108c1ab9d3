"""
Grid-refinement studies.

Every level doubles the cells of each arc. Errors are successive-level
differences: the fine solution is restricted onto the coarse grid by averaging
cell pairs (exact for cell averages) and the L2 difference is taken there.
The phi diffusion operator also has a manufactured solution,
phi = exp(-t) cos(pi x / L) on a sealed arc, giving true errors.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Union

import numpy as np
import pandas as pd

from src.state.fields import ArcGrid, ArcState, InitialCondition, NetworkState, build_grids, build_initial_state
from src.state.network_spec import ArcSpec, NetworkSpec
from src.state.run_store import Toggles
from src.tools.engine import Simulator, iter_steps
from src.tools.parabolic import ParabolicSolver
from src.utils.errors import ConfigError
from src.utils.settings import get_thread_count

logger = logging.getLogger("netchemo-convergence")

FIELDS = ("u", "v", "phi")
EXACT_TOLERANCE = 1e-12
DT_MODES = ("cfl", "parabolic")

Order = Union[float, str, None]


@dataclass
class ConvergenceRow:
    level: int
    n_cells: int
    h: float
    dt: float
    errors: Dict[str, Optional[float]] = field(default_factory=dict)
    orders: Dict[str, Order] = field(default_factory=dict)


def restrict(fine: np.ndarray) -> np.ndarray:
    """Average consecutive cell pairs onto the grid with half the cells."""
    return 0.5 * (fine[0::2] + fine[1::2])


def level_dt(spec: NetworkSpec, grids: Mapping[str, ArcGrid], cfl: float, dt_mode: str) -> float:
    """cfl * min h/lambda, additionally capped by cfl * min h^2/D in "parabolic" mode."""
    transport = min(grids[a.id].h / a.lam for a in spec.arcs)
    if dt_mode == "cfl":
        return cfl * transport
    return cfl * min(transport, min(grids[a.id].h ** 2 / a.D for a in spec.arcs))


def _difference(coarse: NetworkState, fine: NetworkState, spec: NetworkSpec, name: str) -> float:
    total = 0.0
    for arc in spec.arcs:
        c = getattr(coarse.states[arc.id], name)
        f = getattr(fine.states[arc.id], name)
        h = arc.length / c.size
        total += float(np.sum((c - restrict(f)) ** 2)) * h
    return math.sqrt(total)


def _order(coarse_error: Optional[float], fine_error: Optional[float]) -> Order:
    if coarse_error is None or fine_error is None:
        return None
    if coarse_error <= EXACT_TOLERANCE and fine_error <= EXACT_TOLERANCE:
        return "exact"
    if fine_error <= 0.0:
        return math.inf
    return math.log2(coarse_error / fine_error)


def _fill_orders(rows: List[ConvergenceRow], fields) -> None:
    for name in fields:
        rows[0].orders[name] = None
        for previous, row in zip(rows, rows[1:]):
            row.orders[name] = _order(previous.errors.get(name), row.errors.get(name))


def convergence_study(
    spec: NetworkSpec,
    ic: Mapping[str, InitialCondition],
    levels: int,
    base_cells: int = 16,
    t_final: float = 0.25,
    cfl: float = 0.9,
    toggles: Optional[Toggles] = None,
    dt_mode: str = "cfl",
) -> List[ConvergenceRow]:
    """
    Richardson-type study over ``levels`` refinements of ``base_cells``.

    Row k carries the difference between levels k and k+1 and the observed
    order from rows k-1 and k. The finest level has no error row of its own.

    Raises:
        ConfigError: fewer than 3 levels or an unknown dt mode
    """
    if levels < 3:
        raise ConfigError(f"a convergence study needs at least 3 levels, got {levels}")
    if dt_mode not in DT_MODES:
        raise ConfigError(f"dt_mode must be one of {DT_MODES}, got {dt_mode!r}")

    def solve(level: int):
        cells = base_cells * 2**level
        grids = build_grids(spec, cells)
        state = build_initial_state(spec, grids, ic, compat_check=False)
        dt = level_dt(spec, grids, cfl, dt_mode)
        final = Simulator(spec, grids, toggles).run(state, t_final, dt).final_state
        logger.info(f"Level {level}: {cells} cells/arc, dt={dt:.4e}")
        return cells, max(g.h for g in grids.values()), dt, final

    with ThreadPoolExecutor(max_workers=get_thread_count()) as pool:
        solutions = list(pool.map(solve, range(levels)))

    rows = []
    for level in range(levels - 1):
        cells, h, dt, coarse = solutions[level]
        fine = solutions[level + 1][3]
        rows.append(
            ConvergenceRow(level, cells, h, dt, {name: _difference(coarse, fine, spec, name) for name in FIELDS})
        )
    _fill_orders(rows, FIELDS)
    return rows


def manufactured_phi(arc: ArcSpec, grid: ArcGrid, t: float) -> np.ndarray:
    """Cell averages of exp(-t) cos(pi x / L)."""
    k = math.pi / arc.length
    edges = grid.edges
    return math.exp(-t) * (np.sin(k * edges[1:]) - np.sin(k * edges[:-1])) / (k * grid.h)


def manufactured_phi_study(
    arc: ArcSpec,
    levels: int,
    base_cells: int = 16,
    t_final: float = 0.1,
    dt_factor: float = 1.0,
) -> List[ConvergenceRow]:
    """
    Implicit diffusion of phi on one sealed arc against the manufactured solution.

    dt = dt_factor * h^2 / D, so time and space errors both scale with h^2.
    The forcing exp(-t) cos(pi x/L) (-1 + D pi^2/L^2 + b) is applied at the
    new time level, matching the implicit step.
    """
    if levels < 3:
        raise ConfigError(f"a convergence study needs at least 3 levels, got {levels}")
    spec = NetworkSpec(
        nodes=(),
        external_points=(arc.tail, arc.head),
        arcs=(arc,),
        K={},
        alpha={},
        global_condition_hub={},
    )
    forcing = -1.0 + arc.D * (math.pi / arc.length) ** 2 + arc.b

    rows = []
    for level in range(levels):
        cells = base_cells * 2**level
        grid = ArcGrid(arc.id, cells, arc.length)
        solver = ParabolicSolver(spec, {arc.id: grid})
        dt = dt_factor * grid.h**2 / arc.D
        zeros = np.zeros(cells)
        state = NetworkState(0.0, {arc.id: ArcState(zeros, zeros, manufactured_phi(arc, grid, 0.0))})
        for dt_k, t_k in iter_steps(t_final, dt):
            source = {arc.id: forcing * manufactured_phi(arc, grid, t_k)}
            phi = solver.step(state, {arc.id: zeros}, dt_k, production=False, extra_source=source)
            state = NetworkState(t_k, {arc.id: ArcState(zeros, zeros, phi[arc.id])})
        error = state.states[arc.id].phi - manufactured_phi(arc, grid, t_final)
        rows.append(ConvergenceRow(level, cells, grid.h, dt, {"phi": math.sqrt(float(np.sum(error**2)) * grid.h)}))
        logger.info(f"Manufactured phi level {level}: error={rows[-1].errors['phi']:.4e}")
    _fill_orders(rows, ("phi",))
    return rows


def rows_to_frame(rows: List[ConvergenceRow]) -> pd.DataFrame:
    names = sorted({name for row in rows for name in row.errors}, key=lambda n: FIELDS.index(n))
    records = []
    for row in rows:
        record = {"level": row.level, "n_cells": row.n_cells, "h": row.h, "dt": row.dt}
        for name in names:
            record[f"L2_error_{name}"] = row.errors.get(name)
            record[f"order_{name}"] = row.orders.get(name)
        records.append(record)
    return pd.DataFrame(records)
