"""On-disk formats: network JSON, forecast/weights/box CSV, diagnostics JSON.

Structure goes to JSON (sorted keys, two-space indent, trailing newline),
numeric panels go to CSV.  Floats are serialized with ``repr``, the
shortest representation that round-trips exactly, so write-read-write is
byte-stable.

Component ids in CSV files are: the node name for nodes, ``tail->head``
for edges, and ``P{i}`` for paths (i is the path index).
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import IoFailure, UnknownComponent
from .network import Network
from .reconcile import BoxConstraints
from .series import ForecastVector

_KINDS = ("node", "edge", "path")


# --- network JSON ------------------------------------------------------------------


def read_network(path: str) -> Network:
    """Load a network from its JSON document.

    Raises:
        IoFailure: unreadable file, bad JSON, or a malformed document.
        ValidationError: structurally invalid network content.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoFailure(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise IoFailure(f"{path}: top level must be a JSON object")
    for key in ("nodes", "edges", "paths"):
        if key not in doc or not isinstance(doc[key], list):
            raise IoFailure(f"{path}: missing or non-array {key!r} entry")
    try:
        edges = [(str(e[0]), str(e[1])) for e in doc["edges"]]
    except (IndexError, TypeError) as exc:
        raise IoFailure(f"{path}: each edge must be a [tail, head] pair") from exc
    roles = doc.get("roles")
    if roles is not None and not isinstance(roles, dict):
        raise IoFailure(f"{path}: roles must be an object")
    return Network(doc["nodes"], edges, doc["paths"], roles)


def write_network(net: Network, path: str) -> None:
    doc = {
        "nodes": list(net.nodes),
        "edges": [list(e) for e in net.edges],
        "paths": [list(p) for p in net.paths],
    }
    if net.roles:
        doc["roles"] = dict(net.roles)
    _dump_json(doc, path)


# --- component ids ------------------------------------------------------------------


def edge_id(edge: tuple[str, str]) -> str:
    return f"{edge[0]}->{edge[1]}"


def component_ids(net: Network) -> list[str]:
    """Ids for every component in canonical [nodes; edges; paths] order."""
    ids = list(net.nodes)
    ids.extend(edge_id(e) for e in net.edges)
    ids.extend(f"P{i}" for i in range(len(net.paths)))
    return ids


def component_index(net: Network, kind: str, ident: str) -> int:
    """Global index of the component named ``ident`` of the given kind."""
    imap = net.index_map
    if kind == "node":
        if ident in net.node_index:
            return imap.global_index("node", net.node_index[ident])
    elif kind == "edge":
        for e, pair in enumerate(net.edges):
            if edge_id(pair) == ident:
                return imap.global_index("edge", e)
    elif kind == "path":
        if ident.startswith("P") and ident[1:].isdigit():
            j = int(ident[1:])
            if j < len(net.paths):
                return imap.global_index("path", j)
    else:
        raise UnknownComponent(f"unknown component kind {kind!r}")
    raise UnknownComponent(f"no {kind} with id {ident!r}")


def _id_table(net: Network) -> dict[tuple[str, str], int]:
    table = {("node", v): i for i, v in enumerate(net.nodes)}
    offset = len(net.nodes)
    for e, pair in enumerate(net.edges):
        table[("edge", edge_id(pair))] = offset + e
    offset += len(net.edges)
    for j in range(len(net.paths)):
        table[("path", f"P{j}")] = offset + j
    return table


# --- forecast CSV -------------------------------------------------------------------


def write_forecast(path: str, vectors, net: Network) -> None:
    """Write one or more horizons of component values as CSV.

    ``vectors`` may be a single vector (array or ForecastVector) or a list
    of them; multiple horizons become columns value1..valueH.
    """
    if isinstance(vectors, (list, tuple)):
        cols = [np.asarray(getattr(v, "data", v), dtype=float) for v in vectors]
    else:
        cols = [np.asarray(getattr(vectors, "data", vectors), dtype=float)]
    ids = component_ids(net)
    n = len(ids)
    for c in cols:
        if c.shape != (n,):
            raise IoFailure(
                f"forecast column has {c.shape[0] if c.ndim == 1 else '?'} values, "
                f"network has {n} components"
            )
    header = ["kind", "id", "value"] if len(cols) == 1 else [
        "kind",
        "id",
        *[f"value{h}" for h in range(1, len(cols) + 1)],
    ]
    kinds = (
        ["node"] * len(net.nodes) + ["edge"] * len(net.edges) + ["path"] * len(net.paths)
    )
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for i in range(n):
                writer.writerow([kinds[i], ids[i], *[repr(float(c[i])) for c in cols]])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_rows(path: str) -> list[list[str]]:
    try:
        with open(path, newline="") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def read_forecast(path: str, net: Network) -> list[ForecastVector]:
    """Read a forecast CSV back; one ForecastVector per horizon column.

    The file must contain exactly one row per component of ``net``.
    Errors carry the 1-based row number of the offending line.

    Raises:
        IoFailure: bad header, unknown/duplicate/missing components, or
            unparseable values.
    """
    rows = _read_rows(path)
    if not rows:
        raise IoFailure(f"{path} is empty")
    header = rows[0]
    single = header == ["kind", "id", "value"]
    horizons = 1 if single else len(header) - 2
    multi = [f"value{h}" for h in range(1, horizons + 1)]
    if not single and (horizons < 1 or header != ["kind", "id", *multi]):
        raise IoFailure(
            f"{path} row 1: header must be kind,id,value or kind,id,value1..valueH, "
            f"got {','.join(header)}"
        )
    table = _id_table(net)
    n = net.index_map.n
    values = np.full((horizons, n), np.nan)
    seen = np.zeros(n, dtype=bool)
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2 + horizons:
            raise IoFailure(
                f"{path} row {lineno}: expected {2 + horizons} fields, got {len(row)}"
            )
        kind, ident = row[0], row[1]
        if kind not in _KINDS:
            raise IoFailure(f"{path} row {lineno}: unknown kind {kind!r}")
        key = (kind, ident)
        if key not in table:
            raise IoFailure(f"{path} row {lineno}: no {kind} with id {ident!r}")
        i = table[key]
        if seen[i]:
            raise IoFailure(f"{path} row {lineno}: duplicate entry for {kind} {ident!r}")
        seen[i] = True
        for h, cell in enumerate(row[2:]):
            try:
                v = float(cell)
            except ValueError:
                raise IoFailure(
                    f"{path} row {lineno}: {cell!r} is not a number"
                ) from None
            if not np.isfinite(v):
                raise IoFailure(f"{path} row {lineno}: value {cell!r} is not finite")
            values[h, i] = v
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        kind, local = net.index_map.component(missing)
        ident = component_ids(net)[missing]
        raise IoFailure(
            f"{path}: {int((~seen).sum())} component(s) missing, "
            f"first is {kind} {ident!r}"
        )
    return [ForecastVector(values[h], horizon=h + 1) for h in range(horizons)]


def read_weights(path: str, net: Network) -> np.ndarray:
    """Read per-component weights (same layout as a single-horizon forecast)."""
    vectors = read_forecast(path, net)
    if len(vectors) != 1:
        raise IoFailure(f"{path}: weights must have a single value column")
    w = vectors[0].data
    if np.any(w < 0):
        raise IoFailure(f"{path}: weights must be nonnegative")
    return w


def read_box(path: str, net: Network) -> BoxConstraints:
    """Read box constraints: header kind,id,lower,upper, one row per bound.

    Components may appear at most once; omitted components are unbounded.
    Empty cells (or inf/-inf) leave the corresponding side open.
    """
    rows = _read_rows(path)
    if not rows or rows[0] != ["kind", "id", "lower", "upper"]:
        got = ",".join(rows[0]) if rows else "(empty file)"
        raise IoFailure(f"{path} row 1: header must be kind,id,lower,upper, got {got}")
    table = _id_table(net)
    n = net.index_map.n
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    seen = np.zeros(n, dtype=bool)
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise IoFailure(f"{path} row {lineno}: expected 4 fields, got {len(row)}")
        kind, ident, lo_s, hi_s = row
        key = (kind, ident)
        if kind not in _KINDS:
            raise IoFailure(f"{path} row {lineno}: unknown kind {kind!r}")
        if key not in table:
            raise IoFailure(f"{path} row {lineno}: no {kind} with id {ident!r}")
        i = table[key]
        if seen[i]:
            raise IoFailure(f"{path} row {lineno}: duplicate bound for {kind} {ident!r}")
        seen[i] = True
        for s, arr in ((lo_s, lower), (hi_s, upper)):
            if s.strip() == "":
                continue
            try:
                arr[i] = float(s)
            except ValueError:
                raise IoFailure(
                    f"{path} row {lineno}: {s!r} is not a number"
                ) from None
    return BoxConstraints(lower, upper)


# --- diagnostics JSON ---------------------------------------------------------------


def jsonable(value):
    """Recursively convert numpy scalars/arrays so json.dump accepts them."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    return value


def _dump_json(payload: dict, path: str) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(jsonable(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_diagnostics(path: str, payload: dict) -> None:
    """Write a machine-readable JSON sidecar next to a primary output."""
    _dump_json(payload, path)
