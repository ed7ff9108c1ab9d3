from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from src.services.diagnostics import DiagnosticsRecord
from src.state.fields import NetworkState
from src.state.network_spec import NetworkSpec
from src.tools.network import arc_sign_at_node, collect_violations

logger = logging.getLogger("netchemo-report")

FLOAT_FORMAT = "%.16e"


def build_validation_report(text: str) -> Dict[str, Any]:
    spec, violations = collect_violations(text)
    report: Dict[str, Any] = {
        "valid": spec is not None,
        "violations": [v.to_dict() for v in violations],
    }
    if spec is None:
        return report

    nodes = {}
    for node in spec.nodes:
        arcs = spec.arcs_at(node)
        hub = spec.global_condition_hub.get(node)
        nodes[node] = {
            "degree": len(arcs),
            "incoming": [a for a in arcs if arc_sign_at_node(spec, a, node) > 0],
            "outgoing": [a for a in arcs if arc_sign_at_node(spec, a, node) < 0],
            "global_condition": hub is not None,
            "hub": hub,
        }
    report.update(
        {
            "n_nodes": len(spec.nodes),
            "n_external_points": len(spec.external_points),
            "n_arcs": len(spec.arcs),
            "production_ratio": spec.production_ratio(),
            "nodes": nodes,
            "global_condition": all(n["global_condition"] for n in nodes.values()),
        }
    )
    return report


def records_to_frame(records: Sequence[DiagnosticsRecord], nodes: Sequence[str]) -> pd.DataFrame:
    rows = []
    for r in records:
        row: Dict[str, float] = {"time": r.time, "mass": r.mass, "E1": r.E1, "E2": r.E2}
        for node in nodes:
            row[f"gamma1_{node}"] = r.gamma1[node]
        for node in nodes:
            row[f"gamma2_{node}"] = r.gamma2[node]
        row.update(
            {
                "FT_sup_u": r.FT_sup_terms.total_u,
                "FT_sup_v": r.FT_sup_terms.total_v,
                "FT_sup_phi": r.FT_sup_terms.total_phi,
                "FT_int_ux": r.FT_int_terms.ux,
                "FT_int_v": r.FT_int_terms.v,
                "FT_int_vt": r.FT_int_terms.vt,
                "FT_int_phix": r.FT_int_terms.phix,
                "FT_int_phixt": r.FT_int_terms.phixt,
                "compat_residual": r.compat_residual,
            }
        )
        rows.append(row)
    columns = (
        ["time", "mass", "E1", "E2"]
        + [f"gamma1_{n}" for n in nodes]
        + [f"gamma2_{n}" for n in nodes]
        + ["FT_sup_u", "FT_sup_v", "FT_sup_phi", "FT_int_ux", "FT_int_v", "FT_int_vt",
           "FT_int_phix", "FT_int_phixt", "compat_residual"]
    )
    return pd.DataFrame(rows, columns=columns)


def write_records_csv(records: Sequence[DiagnosticsRecord], nodes: Sequence[str], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records_to_frame(records, nodes).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(records)} diagnostics rows to {path}")
    return path


def snapshot_frame(spec: NetworkSpec, state: NetworkState) -> pd.DataFrame:
    frames = []
    for arc in spec.arcs:
        s = state.states[arc.id]
        h = arc.length / s.n_cells
        frames.append(
            pd.DataFrame(
                {
                    "arc": arc.id,
                    "x": (np.arange(s.n_cells) + 0.5) * h,
                    "u": s.u,
                    "v": s.v,
                    "phi": s.phi,
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def write_snapshots(spec: NetworkSpec, states: Sequence[NetworkState], directory: Union[str, Path]) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for index, state in enumerate(states):
        path = directory / f"snapshot_{index:05d}.csv"
        snapshot_frame(spec, state).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        paths.append(path)
    logger.info(f"Wrote {len(paths)} snapshots to {directory}")
    return paths


def build_run_summary(records: Sequence[DiagnosticsRecord], wall_steps: int) -> Dict[str, Any]:
    first, last = records[0], records[-1]
    return {
        "steps": wall_steps,
        "t_final": last.time,
        "mass_initial": first.mass,
        "mass_final": last.mass,
        "mass_drift": abs(last.mass - first.mass),
        "max_flux_residual": max(r.flux_residual for r in records),
        "max_phi_flux_residual": max(r.phi_flux_residual for r in records),
        "max_hub_gap": max(r.hub_gap for r in records),
        "min_gamma1": min((min(r.gamma1.values()) for r in records if r.gamma1), default=None),
        "min_gamma2": min((min(r.gamma2.values()) for r in records if r.gamma2), default=None),
        "FT_final": last.FT,
        "FT_ratio_to_initial_squared": last.cubic_ratio,
    }
