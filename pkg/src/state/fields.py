"""
Per-arc discrete grids and field containers.

Fields are cell averages on uniform cell-centered grids; arc endpoint traces are
never stored here, they are produced by the node and boundary solves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np
from scipy.special import erf

from src.state.network_spec import ArcSpec, NetworkSpec
from src.utils.errors import ConfigError

logger = logging.getLogger("netchemo-fields")

MIN_CELLS = 4
COMPAT_TOLERANCE = 1e-8
IC_KINDS = ("constant", "gaussian", "steady", "custom-table")


@dataclass(frozen=True)
class ArcGrid:
    arc: str
    n_cells: int
    length: float

    def __post_init__(self):
        if self.n_cells < MIN_CELLS:
            raise ConfigError(f"Arc {self.arc} needs at least {MIN_CELLS} cells, got {self.n_cells}")
        if not self.length > 0:
            raise ConfigError(f"Arc {self.arc} has non-positive length {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.h

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.h


@dataclass
class ArcState:
    u: np.ndarray
    v: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        if not (self.u.shape == self.v.shape == self.phi.shape) or self.u.ndim != 1:
            raise ValueError("u, v and phi must be 1-D arrays of equal length")

    @property
    def n_cells(self) -> int:
        return self.u.size

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.phi)))

    def copy(self) -> "ArcState":
        return ArcState(self.u.copy(), self.v.copy(), self.phi.copy())


@dataclass
class NetworkState:
    time: float
    states: Dict[str, ArcState]

    def copy(self) -> "NetworkState":
        return NetworkState(self.time, {arc_id: s.copy() for arc_id, s in self.states.items()})

    def __getitem__(self, arc_id: str) -> ArcState:
        return self.states[arc_id]


@dataclass(frozen=True)
class InitialCondition:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in IC_KINDS:
            raise ConfigError(f"Unknown initial condition kind {self.kind!r}; expected one of {IC_KINDS}")


# -------- Riemann invariants --------


def to_invariants(u, v) -> Tuple[Any, Any]:
    """w+ = (u + v)/2 travels right at speed lambda, w- = (u - v)/2 travels left."""
    return 0.5 * (u + v), 0.5 * (u - v)


def from_invariants(w_plus, w_minus) -> Tuple[Any, Any]:
    return w_plus + w_minus, w_plus - w_minus


# -------- grids and initial data --------


def build_grids(spec: NetworkSpec, n_cells: Union[int, Mapping[str, int]], default: int = 16) -> Dict[str, ArcGrid]:
    """
    Build one grid per arc.

    Args:
        spec: validated network
        n_cells: a single cell count, or a map arc -> count (optionally with "default")
        default: count for arcs the map does not mention
    """
    if isinstance(n_cells, int):
        counts = {arc.id: n_cells for arc in spec.arcs}
    else:
        fallback = int(n_cells.get("default", default))
        counts = {arc.id: int(n_cells.get(arc.id, fallback)) for arc in spec.arcs}
    return {arc.id: ArcGrid(arc.id, counts[arc.id], arc.length) for arc in spec.arcs}


def _constant(grid: ArcGrid, value: float) -> np.ndarray:
    return np.full(grid.n_cells, float(value))


def _gaussian_cell_averages(grid: ArcGrid, amplitude: float, center: float, width: float) -> np.ndarray:
    # exact average of amplitude * exp(-((x - c)/w)^2 / 2) over each cell
    edges = (grid.edges - center) / (width * math.sqrt(2.0))
    integral = erf(edges[1:]) - erf(edges[:-1])
    return amplitude * width * math.sqrt(math.pi / 2.0) * integral / grid.h


def _table(grid: ArcGrid, params: Mapping[str, Any], name: str) -> np.ndarray:
    samples = params.get(name)
    if samples is None:
        return np.zeros(grid.n_cells)
    try:
        values = np.asarray(samples, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"custom-table '{name}' on arc {grid.arc} must be a list of numbers")
    if values.ndim != 1 or values.size != grid.n_cells:
        raise ConfigError(
            f"custom-table '{name}' on arc {grid.arc} has {values.size} samples, grid has {grid.n_cells} cells"
        )
    return values


def initial_arc_state(arc: ArcSpec, grid: ArcGrid, ic: InitialCondition) -> ArcState:
    """Discretize one arc's initial condition into cell averages."""
    try:
        return _discretize(arc, grid, ic)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid {ic.kind} parameters on arc {arc.id}: {e}")


def _discretize(arc: ArcSpec, grid: ArcGrid, ic: InitialCondition) -> ArcState:
    p = ic.params
    if ic.kind == "constant":
        return ArcState(
            _constant(grid, p.get("u", 0.0)),
            _constant(grid, p.get("v", 0.0)),
            _constant(grid, p.get("phi", 0.0)),
        )
    if ic.kind == "steady":
        value = float(p.get("value", 1.0))
        return ArcState(
            _constant(grid, value),
            np.zeros(grid.n_cells),
            _constant(grid, arc.a / arc.b * value),
        )
    if ic.kind == "gaussian":
        width = float(p.get("width", arc.length / 16.0))
        if width <= 0:
            raise ConfigError(f"gaussian width on arc {arc.id} must be positive")
        u = float(p.get("offset", 0.0)) + _gaussian_cell_averages(
            grid,
            float(p.get("amplitude", 1.0)),
            float(p.get("center", arc.length / 2.0)),
            width,
        )
        return ArcState(u, _constant(grid, p.get("v", 0.0)), _constant(grid, p.get("phi", 0.0)))

    return ArcState(_table(grid, p, "u"), _table(grid, p, "v"), _table(grid, p, "phi"))


def build_initial_state(
    spec: NetworkSpec,
    grids: Mapping[str, ArcGrid],
    ic: Mapping[str, InitialCondition],
    compat_check: bool = True,
) -> NetworkState:
    """
    Construct the state at time 0.

    Args:
        spec: validated network
        grids: one grid per arc
        ic: initial condition per arc; a "default" entry covers unlisted arcs
        compat_check: evaluate the discrete compatibility residual of the data

    Returns:
        NetworkState: the discretized initial data

    Raises:
        ConfigError: malformed or incomplete initial conditions
    """
    unknown = sorted(set(ic) - {arc.id for arc in spec.arcs} - {"default"})
    if unknown:
        raise ConfigError(f"Initial conditions name unknown arcs: {unknown}")

    states: Dict[str, ArcState] = {}
    for arc in spec.arcs:
        condition = ic.get(arc.id, ic.get("default"))
        if condition is None:
            raise ConfigError(f"No initial condition for arc {arc.id}")
        states[arc.id] = initial_arc_state(arc, grids[arc.id], condition)
        if not states[arc.id].is_finite():
            raise ConfigError(f"Initial data on arc {arc.id} is not finite")

    state = NetworkState(0.0, states)

    if compat_check:
        from src.services.diagnostics import compatibility_residual

        residual = compatibility_residual(spec, state)
        if residual > COMPAT_TOLERANCE:
            logger.warning(
                f"Initial data violate the boundary/transmission compatibility conditions "
                f"(residual {residual:.3e} > {COMPAT_TOLERANCE:.0e})"
            )
        else:
            logger.debug(f"Compatibility residual of initial data: {residual:.3e}")
    return state
