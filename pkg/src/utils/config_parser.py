"""
Run-configuration document -> RunConfig.

Relative paths resolve against the directory of the configuration file.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from src.state.fields import InitialCondition
from src.state.run_store import OutputPaths, RunConfig, SimConfig, Toggles
from src.utils.document_parser import DocumentParser
from src.utils.errors import ConfigError

logger = logging.getLogger("netchemo-config")

DEFAULT_CELLS = 16

_parser = DocumentParser(required_keys=("network", "t_final"))


def _resolve(base: Path, value: Optional[str]) -> Optional[Path]:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else base / path


def _n_cells(raw: Any) -> Union[int, Dict[str, int]]:
    if raw is None:
        return DEFAULT_CELLS
    if isinstance(raw, int) and not isinstance(raw, bool):
        return raw
    if isinstance(raw, dict) and all(isinstance(v, int) and not isinstance(v, bool) for v in raw.values()):
        counts = dict(raw)
        counts.setdefault("default", DEFAULT_CELLS)
        return counts
    raise ConfigError("n_cells must be an integer or a map of arc -> integer")


def parse_initial(raw: Mapping[str, Any]) -> Dict[str, InitialCondition]:
    """Per-arc ``{kind, params}`` objects; a "default" key covers unlisted arcs."""
    if not isinstance(raw, dict):
        raise ConfigError("'initial' must map arc ids to {kind, params} objects")
    conditions = {}
    for arc_id, entry in raw.items():
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ConfigError(f"initial condition for {arc_id} needs a 'kind'")
        params = entry.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError(f"params of initial condition {arc_id} must be an object")
        conditions[arc_id] = InitialCondition(entry["kind"], params)
    return conditions


def parse_run_config(text: str, base_dir: Union[str, Path] = ".") -> RunConfig:
    """
    Parse a run-configuration document.

    Args:
        text: JSON document
        base_dir: directory relative paths are resolved against

    Returns:
        RunConfig

    Raises:
        ConfigError: malformed document or values outside their ranges
    """
    try:
        document = _parser.parse(text)
    except ValueError as e:
        raise ConfigError(str(e))

    base = Path(base_dir)
    try:
        sim = SimConfig(
            t_final=float(document["t_final"]),
            cfl=float(document.get("cfl", 0.9)),
            n_cells=_n_cells(document.get("n_cells")),
            output_every=int(document.get("output_every", 1)),
            toggles=Toggles.from_dict(document.get("toggles")),
            compat_check=bool(document.get("compat_check", True)),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid run configuration: {e}")

    outputs = document.get("outputs") or {}
    if not isinstance(outputs, dict):
        raise ConfigError("'outputs' must be an object")

    config = RunConfig(
        network_path=_resolve(base, document["network"]),
        sim=sim,
        initial=parse_initial(document.get("initial", {"default": {"kind": "steady", "params": {"value": 1.0}}})),
        outputs=OutputPaths(
            csv=_resolve(base, outputs.get("csv")),
            snapshots=_resolve(base, outputs.get("snapshots")),
        ),
    )
    logger.debug(f"Loaded run configuration for network {config.network_path}")
    return config


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read run configuration {path}: {e}")
    return parse_run_config(text, path.parent)
