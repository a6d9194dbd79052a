"""Local updates to an existing reconciliation without a full re-solve.

Three situations are covered:

* a new edge opens and flow must be routed onto paths that use it
  (:func:`add_edge_update`, cost proportional to the affected paths);
* a single base forecast component changes and we want a constant-time
  check of whether the old reconciliation can be kept
  (:func:`check_data_update`, :func:`apply_monotone_sequence`);
* an edge disappears and its flow has to be rerouted along surviving
  routes (:func:`remove_edge`).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    BadParameter,
    BrokenPath,
    DanglingEdge,
    Disconnected,
    DuplicateId,
    EdgeExists,
    NoAffectedPaths,
    UnknownComponent,
    UnknownEdge,
    ValidationError,
)
from .network import FlowAggregationMatrix, IndexMap, Network
from .series import ForecastVector, check_coherence, _as_component_vector


# --- edge addition ------------------------------------------------------------


@dataclass
class EdgeAdditionResult:
    """Updated structure and values after opening one new edge.

    ``affected_paths`` indexes into the updated network's path list; the
    new paths absorb the edge forecast in equal shares on top of their
    initial values, and every pre-existing path keeps its value bit for
    bit.
    """

    network: Network
    y_tilde: ForecastVector
    delta: float
    per_path_adjustment: float
    affected_paths: tuple[int, ...]


def _validate_new_path(
    net: Network, edges: tuple[tuple[str, str], ...], path: tuple[int, ...], label: str
) -> None:
    if len(path) == 0:
        raise BrokenPath(f"{label} is empty")
    for e in path:
        if not 0 <= e < len(edges):
            raise BrokenPath(f"{label} uses edge index {e}, valid range is [0, {len(edges)})")
    visited = [edges[path[0]][0]]
    for k, e in enumerate(path):
        tail, head = edges[e]
        if tail != visited[-1]:
            raise BrokenPath(
                f"{label} breaks at position {k}: edge {e} starts at {tail!r}, "
                f"previous edge ends at {visited[-1]!r}"
            )
        if head in visited:
            raise BrokenPath(f"{label} revisits node {head!r}")
        visited.append(head)


def add_edge_update(
    net: Network,
    y_tilde,
    edge: tuple[str, str],
    edge_forecast: float,
    new_paths,
    initial_values=None,
    validate: bool = True,
) -> EdgeAdditionResult:
    """Open a new edge and spread its forecast over the paths that use it.

    The shortfall between the edge forecast and what the supplied paths
    already carry is split equally: with k new paths each gains
    (forecast - sum of initial values) / k, which is the minimum-movement
    adjustment meeting the edge total under any symmetric penalty.  Node
    and edge aggregates along the new paths are updated incrementally, so
    the vector work is linear in the total length of the affected paths.

    Args:
        net: current network; must not already contain ``edge``.
        y_tilde: current coherent vector for ``net``.
        edge: (tail, head) node names of the edge to add.  The new edge
            receives index ``len(net.edges)``.
        edge_forecast: base forecast for the new edge.
        new_paths: sequences of edge indices in the updated indexing, each
            containing the new edge.  Routing through a new edge is a
            modelling decision, so the caller supplies these explicitly.
        initial_values: starting value per new path (default all zero, the
            natural choice for genuinely new routes).
        validate: check coherence of ``y_tilde`` and fully validate the
            updated network.  Turning this off keeps the update local when
            the caller already trusts its inputs.
    """
    imap = net.index_map
    y = _as_component_vector(y_tilde, imap.n)
    tail, head = str(edge[0]), str(edge[1])
    if tail not in net.node_index or head not in net.node_index:
        raise DanglingEdge(f"edge ({tail!r}, {head!r}) references an undeclared node")
    if (tail, head) in net.edge_index:
        raise EdgeExists(f"edge ({tail!r}, {head!r}) is already present")
    if not np.isfinite(edge_forecast):
        raise BadParameter("edge forecast must be finite")

    paths = [tuple(int(e) for e in p) for p in new_paths]
    if len(paths) == 0:
        raise NoAffectedPaths("adding an edge needs at least one path using it")
    if len(set(paths)) != len(paths):
        raise DuplicateId("two new paths share the same edge sequence")
    new_edge_idx = len(net.edges)
    edges = net.edges + ((tail, head),)
    for i, p in enumerate(paths):
        if new_edge_idx not in p:
            raise BadParameter(f"new path {i} does not use the added edge")
        _validate_new_path(net, edges, p, f"new path {i}")

    k = len(paths)
    if initial_values is None:
        init = np.zeros(k)
    else:
        init = np.asarray(initial_values, dtype=float)
        if init.shape != (k,):
            raise BadParameter(f"initial_values must have length {k}")
        if not np.all(np.isfinite(init)):
            raise BadParameter("initial_values must be finite")

    if validate:
        report = check_coherence(y, FlowAggregationMatrix.from_network(net))
        if not report.coherent:
            raise ValidationError(
                "prior vector is not coherent "
                f"(max node residual {report.max_node_residual:.3e}, "
                f"max edge residual {report.max_edge_residual:.3e})"
            )

    delta = float(edge_forecast) - float(init.sum())
    adjustment = delta / k
    values = init + adjustment

    n_new = imap.n + 1 + k
    out = np.empty(n_new)
    node_block = out[: imap.n_nodes]
    node_block[:] = y[imap.node_slice]
    edge_block = out[imap.n_nodes : imap.n_nodes + imap.n_edges + 1]
    edge_block[: imap.n_edges] = y[imap.edge_slice]
    edge_block[imap.n_edges] = 0.0
    path_block = out[imap.n_nodes + imap.n_edges + 1 :]
    path_block[: imap.n_paths] = y[imap.path_slice]
    path_block[imap.n_paths :] = values

    node_index = net.node_index
    for p, val in zip(paths, values):
        edge_block[list(p)] += val
        nodes = [node_index[edges[p[0]][0]]]
        nodes.extend(node_index[edges[e][1]] for e in p)
        node_block[nodes] += val

    if validate:
        updated = Network(net.nodes, edges, net.paths + tuple(paths), net.roles)
    else:
        updated = Network.__new__(Network)
        updated.nodes = net.nodes
        updated.edges = edges
        updated.paths = net.paths + tuple(paths)
        updated.roles = net.roles
        updated._build_derived()

    affected = tuple(range(imap.n_paths, imap.n_paths + k))
    return EdgeAdditionResult(
        network=updated,
        y_tilde=ForecastVector(out),
        delta=delta,
        per_path_adjustment=adjustment,
        affected_paths=affected,
    )


# --- single-component data updates ---------------------------------------------


class UpdateVerdict(str, Enum):
    STILL_OPTIMAL = "still-optimal"
    NEEDS_RERECONCILE = "needs-rereconcile"


@dataclass
class UpdateRecord:
    component: int
    old_value: float
    new_value: float
    verdict: UpdateVerdict


@dataclass
class UpdateLedger:
    """Tracks a reconciliation as single-component data updates arrive.

    ``reconciled`` is frozen at creation; ``forecast`` mutates as updates
    are applied.  ``valid`` stays true while every applied update moved its
    component strictly toward the reconciled value, which is the regime in
    which keeping ``reconciled`` unchanged is justified.
    """

    reconciled: np.ndarray
    forecast: np.ndarray
    index_map: IndexMap | None = None
    records: list[UpdateRecord] = field(default_factory=list)
    valid: bool = True
    first_invalid: int | None = None

    def __post_init__(self):
        self.reconciled = np.asarray(self.reconciled, dtype=float).copy()
        self.forecast = np.asarray(self.forecast, dtype=float).copy()
        if self.reconciled.shape != self.forecast.shape or self.reconciled.ndim != 1:
            raise BadParameter("ledger needs two equal-length vectors")

    @classmethod
    def from_reconciliation(cls, result, base_forecast, index_map=None) -> "UpdateLedger":
        y = np.asarray(getattr(result, "y_tilde", result).data, dtype=float)
        base = np.asarray(getattr(base_forecast, "data", base_forecast), dtype=float)
        return cls(reconciled=y, forecast=base, index_map=index_map)

    def resolve(self, component) -> int:
        if isinstance(component, tuple):
            if self.index_map is None:
                raise UnknownComponent("ledger has no index map to resolve (kind, index)")
            return self.index_map.global_index(*component)
        x = int(component)
        if not 0 <= x < self.reconciled.shape[0]:
            raise UnknownComponent(
                f"component {x} out of range [0, {self.reconciled.shape[0]})"
            )
        return x


def check_data_update(ledger: UpdateLedger, component, new_value: float) -> UpdateVerdict:
    """Constant-time test of whether one changed input forecast is benign.

    The reconciliation can be kept when the new value lies strictly closer
    to the reconciled value than the current one does; ties and moves away
    trigger a re-reconcile.  Only the single component is inspected.
    """
    x = ledger.resolve(component)
    if not np.isfinite(new_value):
        raise BadParameter("updated value must be finite")
    kept = ledger.reconciled[x]
    current = ledger.forecast[x]
    if abs(kept - float(new_value)) < abs(kept - current):
        return UpdateVerdict.STILL_OPTIMAL
    return UpdateVerdict.NEEDS_RERECONCILE


def apply_monotone_sequence(ledger: UpdateLedger, updates) -> UpdateLedger:
    """Apply a sequence of (component, new value) updates to the ledger.

    Every update is recorded and written into the tracked forecast (the
    data really did change), but validity survives only while each check
    passes; the first failure index is kept for reporting.
    """
    for component, new_value in updates:
        x = ledger.resolve(component)
        verdict = check_data_update(ledger, x, new_value)
        ledger.records.append(
            UpdateRecord(x, float(ledger.forecast[x]), float(new_value), verdict)
        )
        ledger.forecast[x] = float(new_value)
        if verdict is UpdateVerdict.NEEDS_RERECONCILE and ledger.valid:
            ledger.valid = False
            ledger.first_invalid = len(ledger.records) - 1
    return ledger


# --- edge removal ---------------------------------------------------------------


@dataclass
class RemovalPlan:
    """What happened when an edge was removed.

    ``squared_change`` is the redistribution magnitude: the sum over
    replacement routes of the squared flow mass moved onto each.  ``bound``
    is the square of the total rerouted mass; redistribution can never
    exceed it when the rerouted values share a sign, with equality when a
    single replacement route receives everything.
    """

    removed_edge: int
    affected_paths: tuple[int, ...]
    phi: dict[int, tuple[int, ...]]
    target_paths: dict[int, int]
    squared_change: float
    bound: float


def _shortest_route(net: Network, banned_edge: int, origin: int) -> dict[int, int]:
    """Hop-shortest search from origin avoiding one edge.

    Unit edge weights make breadth-first order optimal.  Returns the
    parent edge per reached node; ties break toward lower edge indices
    for determinism.
    """
    parent: dict[int, int] = {origin: -1}
    queue = deque([origin])
    while queue:
        v = queue.popleft()
        for e in net.out_edges(v):
            if e == banned_edge:
                continue
            w = net.node_index[net.edges[e][1]]
            if w not in parent:
                parent[w] = e
                queue.append(w)
    return parent


def _route_edges(net: Network, parent: dict[int, int], origin: int, dest: int) -> tuple[int, ...]:
    route = []
    v = dest
    while v != origin:
        e = parent[v]
        route.append(e)
        v = net.node_index[net.edges[e][0]]
    return tuple(reversed(route))


def remove_edge(
    net: Network, y_tilde, edge, validate: bool = True
) -> tuple[RemovalPlan, Network, ForecastVector]:
    """Delete an edge and reroute the flow of every path that used it.

    Each affected path's value moves onto the hop-shortest surviving route
    between the same origin and destination: onto an existing path when one
    matches that route, otherwise onto a newly created path (several
    affected paths can land on the same route; their flows sum).  Affected
    paths disappear from the path list and all aggregates are rebuilt.

    Args:
        net: current network.
        y_tilde: current coherent vector for ``net``.
        edge: edge index or (tail, head) pair to remove.
        validate: check coherence of the prior vector first.

    Returns:
        (plan, updated network, updated vector); see :class:`RemovalPlan`.

    Raises:
        UnknownEdge: the edge does not exist.
        Disconnected: some affected origin-destination pair has no
            surviving route.
    """
    imap = net.index_map
    y = _as_component_vector(y_tilde, imap.n)
    if isinstance(edge, tuple) and len(edge) == 2 and not isinstance(edge[0], (int, np.integer)):
        key = (str(edge[0]), str(edge[1]))
        if key not in net.edge_index:
            raise UnknownEdge(f"edge ({key[0]!r}, {key[1]!r}) does not exist")
        e_star = net.edge_index[key]
    else:
        e_star = int(edge)
        if not 0 <= e_star < len(net.edges):
            raise UnknownEdge(f"edge index {e_star} out of range [0, {len(net.edges)})")

    if validate:
        report = check_coherence(y, FlowAggregationMatrix.from_network(net))
        if not report.coherent:
            raise ValidationError(
                "prior vector is not coherent "
                f"(max node residual {report.max_node_residual:.3e}, "
                f"max edge residual {report.max_edge_residual:.3e})"
            )

    affected = net.paths_through("edge", e_star)
    path_vals = y[imap.path_slice]

    # Hop-shortest replacement route per affected origin-destination pair.
    search_cache: dict[int, dict[int, int]] = {}
    phi: dict[int, tuple[int, ...]] = {}
    for q in affected:
        origin = net.path_origin(q)
        dest = net.path_destination(q)
        if origin not in search_cache:
            search_cache[origin] = _shortest_route(net, e_star, origin)
        parent = search_cache[origin]
        if dest not in parent:
            raise Disconnected(
                f"removing edge {e_star} leaves no route from "
                f"{net.nodes[origin]!r} to {net.nodes[dest]!r}"
            )
        phi[q] = _route_edges(net, parent, origin, dest)

    # Sum rerouted mass per distinct replacement route.
    mass: dict[tuple[int, ...], float] = {}
    for q in affected:
        mass[phi[q]] = mass.get(phi[q], 0.0) + float(path_vals[q])

    old_to_new_edge = lambda e: e if e < e_star else e - 1
    affected_set = set(affected)
    surviving = [j for j in range(imap.n_paths) if j not in affected_set]
    new_paths: list[tuple[int, ...]] = []
    new_values: list[float] = []
    route_of_path: dict[tuple[int, ...], int] = {}
    for j in surviving:
        route_of_path[net.paths[j]] = len(new_paths)
        new_paths.append(tuple(old_to_new_edge(e) for e in net.paths[j]))
        new_values.append(float(path_vals[j]))

    for route, flow in mass.items():
        if route in route_of_path:
            new_values[route_of_path[route]] += flow
        elif flow != 0.0:
            route_of_path[route] = len(new_paths)
            new_paths.append(tuple(old_to_new_edge(e) for e in route))
            new_values.append(flow)
    target_paths = {
        q: route_of_path[phi[q]] for q in affected if phi[q] in route_of_path
    }

    edges = tuple(e for i, e in enumerate(net.edges) if i != e_star)
    updated = Network(net.nodes, edges, tuple(new_paths), net.roles)
    agg = FlowAggregationMatrix.from_network(updated)
    out = agg.aggregate(np.array(new_values, dtype=float))

    squared_change = float(sum(m * m for m in mass.values()))
    total = float(sum(path_vals[q] for q in affected))
    plan = RemovalPlan(
        removed_edge=e_star,
        affected_paths=tuple(affected),
        phi={q: tuple(old_to_new_edge(e) for e in phi[q]) for q in affected},
        target_paths=target_paths,
        squared_change=squared_change,
        bound=total * total,
    )
    return plan, updated, ForecastVector(out)
