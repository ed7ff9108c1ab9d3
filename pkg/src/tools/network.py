"""
Network description parsing, validation and graph queries.

The document format is the JSON schema of the network module: ``nodes``,
``external_points``, ``arcs`` and ``transmission``. ``parse_network`` collects
every violated invariant before raising, so a single ``validate`` run reports
all problems at once.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from src.state.network_spec import ArcSpec, NetworkSpec, TransmissionMatrix
from src.utils.document_parser import DocumentParser
from src.utils.errors import NetworkValidationError, NumericalError, Violation

logger = logging.getLogger("netchemo-network")

RATIO_RTOL = 1e-12
ARC_KEYS = ("id", "tail", "head", "length", "lambda", "D", "beta", "a", "b")

_parser = DocumentParser(required_keys=("nodes", "external_points", "arcs"))


# -------- parsing --------


def _as_real(value: Any) -> float:
    # bool is an int subclass in Python; JSON true/false is not a coefficient
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"expected a number, got {value!r}")
    return float(value)


def _id_list(document: Dict[str, Any], key: str, violations: List[Violation]) -> List[str]:
    raw = document.get(key, [])
    if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
        violations.append(Violation("SCHEMA", f"'{key}' must be a list of string ids", key))
        return []
    return list(raw)


def _parse_arcs(raw_arcs: Any, violations: List[Violation]) -> List[ArcSpec]:
    if not isinstance(raw_arcs, list):
        violations.append(Violation("SCHEMA", "'arcs' must be a list of objects", "arcs"))
        return []

    arcs: List[ArcSpec] = []
    for position, raw in enumerate(raw_arcs):
        subject = raw.get("id", f"arcs[{position}]") if isinstance(raw, dict) else f"arcs[{position}]"
        if not isinstance(raw, dict):
            violations.append(Violation("SCHEMA", "arc entry must be an object", subject))
            continue
        missing = [k for k in ARC_KEYS if k not in raw]
        if missing:
            violations.append(Violation("SCHEMA", f"arc is missing keys {missing}", subject))
            continue
        if not all(isinstance(raw[k], str) for k in ("id", "tail", "head")):
            violations.append(Violation("SCHEMA", "arc id/tail/head must be strings", subject))
            continue
        try:
            arcs.append(
                ArcSpec(
                    id=raw["id"],
                    tail=raw["tail"],
                    head=raw["head"],
                    length=_as_real(raw["length"]),
                    lam=_as_real(raw["lambda"]),
                    D=_as_real(raw["D"]),
                    beta=_as_real(raw["beta"]),
                    a=_as_real(raw["a"]),
                    b=_as_real(raw["b"]),
                )
            )
        except TypeError as e:
            violations.append(Violation("SCHEMA", f"arc coefficient: {e}", subject))
    return arcs


def _parse_matrix(raw: Any, size: int, name: str, node: str, violations: List[Violation]) -> Optional[np.ndarray]:
    try:
        if not isinstance(raw, list) or len(raw) != size:
            raise ValueError
        rows = []
        for row in raw:
            if not isinstance(row, list) or len(row) != size:
                raise ValueError
            rows.append([_as_real(x) for x in row])
    except (TypeError, ValueError):
        violations.append(
            Violation("NOT_SQUARE", f"{name} must be a {size}x{size} matrix of numbers", node)
        )
        return None
    return np.array(rows, dtype=float).reshape(size, size)


def _check_weights(matrix: np.ndarray, name: str, node: str, violations: List[Violation]) -> None:
    off = ~np.eye(matrix.shape[0], dtype=bool)
    if np.any(matrix[off] != matrix.T[off]):
        violations.append(Violation(f"ASYMMETRIC_{name.upper()}", f"{name} is not symmetric", node))
    if np.any(matrix[off] < 0) or not np.all(np.isfinite(matrix[off])):
        violations.append(Violation(f"NEGATIVE_{name.upper()}", f"{name} has negative entries", node))


def _check_arcs(
    arcs: Sequence[ArcSpec],
    nodes: Sequence[str],
    externals: Sequence[str],
    violations: List[Violation],
) -> None:
    points = set(nodes) | set(externals)
    for arc in arcs:
        for end in (arc.tail, arc.head):
            if end not in points:
                violations.append(
                    Violation("DANGLING_ENDPOINT", f"endpoint {end!r} is neither a node nor an external point", arc.id)
                )
        if arc.tail == arc.head:
            violations.append(Violation("SELF_LOOP", "arc starts and ends at the same point", arc.id))

        values = (arc.length, arc.lam, arc.D, arc.beta, arc.a, arc.b)
        if not all(math.isfinite(x) for x in values):
            violations.append(Violation("BAD_COEFFICIENT", "coefficients must be finite", arc.id))
            continue
        if arc.length <= 0 or arc.D <= 0 or arc.beta <= 0 or arc.b <= 0 or arc.a < 0 or arc.lam < 0:
            violations.append(
                Violation("BAD_COEFFICIENT", "need length, D, beta, b > 0 and lambda, a >= 0", arc.id)
            )
        elif arc.lam == 0:
            violations.append(Violation("ZERO_LAMBDA", "lambda = 0 is outside the supported envelope", arc.id))

    ratios = [(arc.id, arc.a / arc.b) for arc in arcs if math.isfinite(arc.a) and arc.b > 0]
    if ratios:
        _, reference = ratios[0]
        for arc_id, ratio in ratios[1:]:
            if abs(ratio - reference) > RATIO_RTOL * max(abs(ratio), abs(reference)):
                violations.append(
                    Violation("BAD_RATIO_AB", f"a/b = {ratio!r} differs from {reference!r}", arc_id)
                )


def _check_topology(
    arcs: Sequence[ArcSpec],
    nodes: Sequence[str],
    externals: Sequence[str],
    violations: List[Violation],
) -> Dict[str, List[str]]:
    """Degree and connectivity checks. Returns the arcs meeting each node."""
    meeting: Dict[str, List[str]] = {node: [] for node in nodes}
    external_degree = {point: 0 for point in externals}
    for arc in arcs:
        if arc.tail == arc.head:
            continue
        for end in (arc.tail, arc.head):
            if end in meeting:
                meeting[end].append(arc.id)
            elif end in external_degree:
                external_degree[end] += 1

    for node, arc_ids in meeting.items():
        if len(arc_ids) < 2:
            violations.append(
                Violation("NODE_DEGREE", f"node meets {len(arc_ids)} arc(s); declare it as an external point", node)
            )
    for point, degree in external_degree.items():
        if degree != 1:
            violations.append(Violation("EXTERNAL_DEGREE", f"external point touches {degree} arcs", point))

    graph = nx.MultiGraph()
    graph.add_nodes_from(nodes)
    graph.add_nodes_from(externals)
    for arc in arcs:
        graph.add_edge(arc.tail, arc.head, key=arc.id)
    if graph.number_of_nodes() == 0 or not nx.is_connected(graph):
        violations.append(Violation("DISCONNECTED", "the network graph is not connected"))
    return meeting


def _parse_transmission(
    raw_entries: Any,
    meeting: Mapping[str, List[str]],
    violations: List[Violation],
) -> Tuple[Dict[str, TransmissionMatrix], Dict[str, TransmissionMatrix]]:
    K: Dict[str, TransmissionMatrix] = {}
    alpha: Dict[str, TransmissionMatrix] = {}
    if raw_entries is None:
        raw_entries = []
    if not isinstance(raw_entries, list):
        violations.append(Violation("SCHEMA", "'transmission' must be a list of objects", "transmission"))
        return K, alpha

    for raw in raw_entries:
        if not isinstance(raw, dict) or not all(k in raw for k in ("node", "K", "alpha", "arc_order")):
            violations.append(
                Violation("SCHEMA", "transmission entry needs node, K, alpha and arc_order", "transmission")
            )
            continue
        node = raw["node"]
        if node not in meeting:
            violations.append(Violation("DANGLING_ENDPOINT", "transmission entry for an unknown node", str(node)))
            continue
        if node in K:
            violations.append(Violation("DUPLICATE_ID", "more than one transmission entry", node))
            continue

        order = raw["arc_order"]
        if (
            not isinstance(order, list)
            or not all(isinstance(x, str) for x in order)
            or sorted(order) != sorted(meeting[node])
        ):
            violations.append(
                Violation("BAD_ARC_ORDER", f"arc_order must list exactly the arcs {sorted(meeting[node])}", node)
            )
            continue

        size = len(order)
        matrices = {}
        for name in ("K", "alpha"):
            matrix = _parse_matrix(raw[name], size, name, node, violations)
            if matrix is None:
                continue
            _check_weights(matrix, name, node, violations)
            # diagonal carries no meaning in the transmission conditions
            np.fill_diagonal(matrix, 0.0)
            matrices[name] = TransmissionMatrix(
                node=node,
                arc_order=tuple(order),
                entries=tuple(tuple(float(x) for x in row) for row in matrix),
            )
        if len(matrices) == 2:
            K[node] = matrices["K"]
            alpha[node] = matrices["alpha"]

    for node in meeting:
        if node not in K and not any(v.subject == node for v in violations):
            violations.append(Violation("MISSING_TRANSMISSION", "no K/alpha matrices for node", node))
    return K, alpha


def collect_violations(text: str) -> Tuple[Optional[NetworkSpec], List[Violation]]:
    """
    Validate a network document without raising.

    Args:
        text: the JSON network description

    Returns:
        (spec or None, list of violations); spec is None whenever violations exist
    """
    violations: List[Violation] = []
    try:
        document = _parser.parse(text)
    except ValueError as e:
        return None, [Violation("SYNTAX", str(e))]

    nodes = _id_list(document, "nodes", violations)
    externals = _id_list(document, "external_points", violations)
    arcs = _parse_arcs(document.get("arcs"), violations)
    if violations:
        return None, violations

    all_ids = nodes + externals + [arc.id for arc in arcs]
    seen = set()
    for ident in all_ids:
        if ident in seen:
            violations.append(Violation("DUPLICATE_ID", "identifier used more than once", ident))
        seen.add(ident)

    _check_arcs(arcs, nodes, externals, violations)
    meeting = _check_topology(arcs, nodes, externals, violations)
    K, alpha = _parse_transmission(document.get("transmission"), meeting, violations)
    if violations:
        return None, violations

    spec = NetworkSpec(
        nodes=tuple(nodes),
        external_points=tuple(externals),
        arcs=tuple(arcs),
        K=K,
        alpha=alpha,
    )
    hubs = global_condition_hubs(spec)
    spec = NetworkSpec(
        nodes=spec.nodes,
        external_points=spec.external_points,
        arcs=spec.arcs,
        K=spec.K,
        alpha=spec.alpha,
        global_condition_hub=hubs,
    )
    return spec, []


def parse_network(text: str) -> NetworkSpec:
    """
    Parse and validate a network description.

    Args:
        text: the JSON network description

    Returns:
        NetworkSpec: the validated network

    Raises:
        NetworkValidationError: one violation per broken invariant
    """
    spec, violations = collect_violations(text)
    if violations:
        logger.info(f"Network rejected: {[v.code for v in violations]}")
        raise NetworkValidationError(violations)
    logger.debug(f"Parsed network with {len(spec.nodes)} nodes and {len(spec.arcs)} arcs")
    return spec


def serialize_network(spec: NetworkSpec) -> str:
    """Write a spec back to the JSON document format."""
    document = {
        "nodes": list(spec.nodes),
        "external_points": list(spec.external_points),
        "arcs": [
            {
                "id": arc.id,
                "tail": arc.tail,
                "head": arc.head,
                "length": arc.length,
                "lambda": arc.lam,
                "D": arc.D,
                "beta": arc.beta,
                "a": arc.a,
                "b": arc.b,
            }
            for arc in spec.arcs
        ],
        "transmission": [
            {
                "node": node,
                "arc_order": list(spec.K[node].arc_order),
                "K": [list(row) for row in spec.K[node].entries],
                "alpha": [list(row) for row in spec.alpha[node].entries],
            }
            for node in spec.nodes
        ],
    }
    return json.dumps(document, indent=2)


# -------- graph queries --------


def _hub_for(matrix: TransmissionMatrix) -> Optional[str]:
    K = matrix.as_array()
    for k in range(matrix.size):
        others = [i for i in range(matrix.size) if i != k]
        if all(K[i, k] > 0 for i in others):
            return matrix.arc_order[k]
    return None


def global_condition_hubs(spec: NetworkSpec) -> Dict[str, Optional[str]]:
    """For each node, the first arc k with K[i][k] > 0 for every i != k, or None."""
    return {node: _hub_for(spec.K[node]) for node in spec.nodes}


def check_global_condition(spec: NetworkSpec) -> Dict[str, bool]:
    """
    Check the coefficient condition needed for global existence.

    Returns:
        dict: node -> True iff some column of K has all off-diagonal entries > 0
    """
    return {node: hub is not None for node, hub in global_condition_hubs(spec).items()}


def arc_sign_at_node(spec: NetworkSpec, arc_id: str, node: str) -> int:
    """
    Orientation sign of an arc at a node.

    Returns:
        int: +1 if the arc heads into the node, -1 if it leaves from it

    Raises:
        ValueError: if the arc does not meet the node
    """
    arc = spec.arc(arc_id)
    if arc.head == node:
        return 1
    if arc.tail == node:
        return -1
    raise ValueError(f"Arc {arc_id} does not meet node {node}")


def node_signs(spec: NetworkSpec, node: str) -> np.ndarray:
    """Orientation signs of the arcs at ``node`` in matrix index order."""
    return np.array([arc_sign_at_node(spec, arc_id, node) for arc_id in spec.arcs_at(node)], dtype=float)


@dataclass(frozen=True, eq=False)
class HubRepresentation:
    """u_j(N) = u_k(N) + sum over i != k of theta[j, i] * v_i(N)."""

    node: str
    hub: str
    arc_order: Tuple[str, ...]
    others: Tuple[str, ...]
    theta: np.ndarray

    def reconstruct(self, u_hub: float, v_traces: Mapping[str, float]) -> Dict[str, float]:
        v = np.array([v_traces[i] for i in self.others])
        values = u_hub + self.theta @ v
        return {arc_id: float(x) for arc_id, x in zip(self.arc_order, values)}


def hub_trace_coefficients(spec: NetworkSpec, node: str, hub: Optional[str] = None) -> HubRepresentation:
    """
    Express every trace at a node through the hub trace and the flux traces.

    The transmission relations of the arcs other than the hub form a square system in
    the jumps u_j - u_hub; it is nonsingular when every K[i][hub] > 0.

    Raises:
        ValueError: no hub is given and the node has none
        NumericalError: the reduced system is singular for the chosen hub
    """
    hub = hub or spec.global_condition_hub.get(node)
    if hub is None:
        raise ValueError(f"Node {node} does not satisfy the global-existence condition")

    order = spec.arcs_at(node)
    K = spec.K[node].as_array()
    lam = np.array([spec.arc(a).lam for a in order])
    # gamma_i * lambda_i * v_i = sum_j K_ij (u_j - u_i), gamma = -theta
    gamma = -node_signs(spec, node)
    k = order.index(hub)
    rest = [i for i in range(len(order)) if i != k]

    A = K[np.ix_(rest, rest)] - np.diag(K[rest, :].sum(axis=1))
    try:
        A_inv = np.linalg.inv(A)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"Hub system at node {node} is singular: {e}")

    theta = np.zeros((len(order), len(rest)))
    theta[rest, :] = A_inv * (gamma[rest] * lam[rest])[np.newaxis, :]
    return HubRepresentation(
        node=node,
        hub=hub,
        arc_order=order,
        others=tuple(order[i] for i in rest),
        theta=theta,
    )
