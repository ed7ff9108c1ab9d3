from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Mapping, Optional, Union

from src.state.fields import InitialCondition, NetworkState
from src.utils.errors import ConfigError

if TYPE_CHECKING:
    from src.services.diagnostics import DiagnosticsRecord


@dataclass(frozen=True)
class Toggles:
    chemotaxis_source: bool = True  # phi_x * u in the v equation
    damping: bool = True  # -beta * v
    production: bool = True  # a * u in the phi equation

    @classmethod
    def from_dict(cls, raw: Optional[Mapping[str, bool]]) -> "Toggles":
        raw = dict(raw or {})
        unknown = set(raw) - {"chemotaxis_source", "damping", "production"}
        if unknown:
            raise ConfigError(f"Unknown toggles: {sorted(unknown)}")
        return cls(**{k: bool(v) for k, v in raw.items()})

    def to_dict(self) -> Dict[str, bool]:
        return {
            "chemotaxis_source": self.chemotaxis_source,
            "damping": self.damping,
            "production": self.production,
        }


@dataclass(frozen=True)
class SimConfig:
    t_final: float
    cfl: float = 0.9
    n_cells: Union[int, Mapping[str, int]] = 16
    output_every: int = 1
    toggles: Toggles = field(default_factory=Toggles)
    compat_check: bool = True

    def __post_init__(self):
        if not self.t_final > 0:
            raise ConfigError(f"t_final must be positive, got {self.t_final}")
        if not 0 < self.cfl <= 1:
            raise ConfigError(f"cfl must lie in (0, 1], got {self.cfl}")
        if int(self.output_every) < 1:
            raise ConfigError(f"output_every must be a positive integer, got {self.output_every}")


@dataclass(frozen=True)
class OutputPaths:
    csv: Optional[Path] = None
    snapshots: Optional[Path] = None


@dataclass(frozen=True)
class RunConfig:
    network_path: Path
    sim: SimConfig
    initial: Mapping[str, InitialCondition]
    outputs: OutputPaths = field(default_factory=OutputPaths)


@dataclass
class RunResult:
    final_state: NetworkState
    records: List["DiagnosticsRecord"]
    wall_steps: int
    snapshots: List[NetworkState] = field(default_factory=list)


class RecordStore:
    """Collects diagnostics records and the matching state snapshots of a run."""

    def __init__(self, keep_snapshots: bool = False):
        self._records: List["DiagnosticsRecord"] = []
        self._snapshots: List[NetworkState] = []
        self.keep_snapshots = keep_snapshots

    def add(self, record: "DiagnosticsRecord", state: NetworkState) -> None:
        self._records.append(record)
        if self.keep_snapshots:
            self._snapshots.append(state)

    @property
    def records(self) -> List["DiagnosticsRecord"]:
        return list(self._records)

    @property
    def snapshots(self) -> List[NetworkState]:
        return list(self._snapshots)
