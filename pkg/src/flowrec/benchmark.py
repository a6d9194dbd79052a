"""Random instance generation and the method-comparison harness.

Instances are layered networks: sources feed intermediates, intermediates
feed each other (respecting a fixed order, so the graph is acyclic) and
finally the sinks.  Ground truth is built coherent by construction —
draw path flows, aggregate — and base forecasts are truth plus i.i.d.
Gaussian noise, so every method can be scored against a known answer.

Determinism contract: each instance derives its own RNG stream from
``seed + index``, which makes generation independent of evaluation order
and thread scheduling.  Metric CSVs are byte-reproducible for a fixed
config; wall times, which cannot be, go to a separate timings file.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import evaluate, reconcile_bottom_up, reconcile_mint_ols
from .errors import BadParameter, InfeasibleTopology, IoFailure
from .network import FlowAggregationMatrix, Network
from .reconcile import (
    LossSpec,
    coherence_constraints,
    reconcile_general,
    reconcile_l1,
    reconcile_l2,
    reconcile_weighted,
)
from .relaxed import reconcile_relaxed
from .series import ForecastVector, check_coherence

DEFAULT_METHODS = ("base", "bu", "l2")

_PATH_ATTEMPT_FACTOR = 50


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the random instance generator.

    Args:
        nodes: total node count, >= 3 (at least one source, sink and
            intermediate).
        instances: how many instances a benchmark run generates.
        density: edge-count parameter in [0, 1]; 0 targets ~n edges, 1 the
            maximum the layered topology permits.  None draws it uniformly
            per instance, covering the sparse-to-dense range in one run.
        sigma: noise standard deviation; None picks 5% of the mean absolute
            truth value per instance.  The value used is always recorded.
        max_paths: cap on sampled paths (default 4 * nodes).
        max_hops: cap on path length in edges.
        flow_low / flow_high: uniform range for ground-truth path flows.
        source_frac / sink_frac: fraction of nodes per role.
        seed: master seed; instance i uses stream seed + i.
    """

    nodes: int = 50
    instances: int = 100
    density: float | None = None
    sigma: float | None = None
    max_paths: int | None = None
    max_hops: int = 8
    flow_low: float = 5.0
    flow_high: float = 15.0
    source_frac: float = 0.2
    sink_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.nodes < 3:
            raise BadParameter(f"need at least 3 nodes, got {self.nodes}")
        if self.instances < 1:
            raise BadParameter(f"need at least 1 instance, got {self.instances}")
        if self.density is not None and not 0.0 <= self.density <= 1.0:
            raise BadParameter(f"density must lie in [0, 1], got {self.density}")
        if self.sigma is not None and not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise BadParameter(f"sigma must be finite and >= 0, got {self.sigma}")
        if self.max_paths is not None and self.max_paths < 1:
            raise BadParameter("max_paths must be >= 1")
        if self.max_hops < 1:
            raise BadParameter("max_hops must be >= 1")
        if not self.flow_low <= self.flow_high:
            raise BadParameter("flow_low must not exceed flow_high")
        if min(self.source_frac, self.sink_frac) <= 0 or (
            self.source_frac + self.sink_frac >= 1.0
        ):
            raise BadParameter("role fractions must be positive and sum below 1")


@dataclass
class BenchmarkInstance:
    """One generated problem: a network, its truth, and a noisy forecast."""

    index: int
    seed: int
    network: Network
    agg: FlowAggregationMatrix
    y_true: ForecastVector
    y_base: ForecastVector
    sigma: float
    density: float  # mean node degree normalised by (n - 1)
    max_path_hops: int


def _role_sizes(cfg: GeneratorConfig) -> tuple[int, int, int]:
    n_src = max(1, round(cfg.nodes * cfg.source_frac))
    n_snk = max(1, round(cfg.nodes * cfg.sink_frac))
    n_mid = cfg.nodes - n_src - n_snk
    if n_mid < 1:
        raise InfeasibleTopology(
            f"{cfg.nodes} nodes with fractions ({cfg.source_frac}, {cfg.sink_frac}) "
            "leave no intermediate node"
        )
    return n_src, n_mid, n_snk


def permitted_edge_count(cfg: GeneratorConfig) -> int:
    """Largest edge count the layered topology allows for this config."""
    n_src, n_mid, n_snk = _role_sizes(cfg)
    return n_src * n_mid + n_mid * (n_mid - 1) // 2 + n_mid * n_snk


def density_for_edge_target(cfg: GeneratorConfig, target_edges: int) -> float:
    """Density parameter whose expected edge count is ``target_edges``."""
    m_max = permitted_edge_count(cfg)
    if m_max <= cfg.nodes:
        return 0.0
    u = (target_edges - cfg.nodes) / (m_max - cfg.nodes)
    return float(min(1.0, max(0.0, u)))


def generate_instance(cfg: GeneratorConfig, index: int) -> BenchmarkInstance:
    """Build the ``index``-th instance of a config, deterministically.

    Baseline connectivity comes from a chain over the intermediates plus
    one edge per source and sink, so walks never dead-end; extra edges are
    sampled uniformly from the remaining permitted pairs until the density
    target.  Paths are random source-to-sink walks, deduplicated.

    Raises:
        InfeasibleTopology: no source-sink path within the hop limit was
            found after the retry budget.
    """
    rng = np.random.default_rng(cfg.seed + index)
    n_src, n_mid, n_snk = _role_sizes(cfg)
    sources = [f"s{i}" for i in range(n_src)]
    mids = [f"m{i}" for i in range(n_mid)]
    sinks = [f"t{i}" for i in range(n_snk)]
    nodes = sources + mids + sinks
    roles = {v: "source" for v in sources}
    roles.update({v: "intermediate" for v in mids})
    roles.update({v: "sink" for v in sinks})

    edges: list[tuple[str, str]] = []
    edge_set: set[tuple[str, str]] = set()

    def add(t: str, h: str) -> None:
        if (t, h) not in edge_set:
            edge_set.add((t, h))
            edges.append((t, h))

    for i in range(n_mid - 1):
        add(mids[i], mids[i + 1])
    for s in sources:
        add(s, mids[int(rng.integers(n_mid))])
    for t in sinks:
        add(mids[int(rng.integers(n_mid))], t)
    if not any(e[0] == mids[-1] for e in edge_set if e[1] in sinks):
        add(mids[-1], sinks[int(rng.integers(n_snk))])

    candidates = [
        (s, m) for s in sources for m in mids if (s, m) not in edge_set
    ]
    candidates += [
        (mids[i], mids[j])
        for i in range(n_mid)
        for j in range(i + 1, n_mid)
        if (mids[i], mids[j]) not in edge_set
    ]
    candidates += [
        (m, t) for m in mids for t in sinks if (m, t) not in edge_set
    ]
    m_max = len(edges) + len(candidates)
    u = cfg.density if cfg.density is not None else float(rng.uniform())
    m_target = int(round(cfg.nodes + u * (m_max - cfg.nodes)))
    extra = min(max(m_target - len(edges), 0), len(candidates))
    if extra:
        for k in rng.choice(len(candidates), size=extra, replace=False):
            add(*candidates[int(k)])

    out_edges: dict[str, list[int]] = {v: [] for v in nodes}
    for i, (t, _) in enumerate(edges):
        out_edges[t].append(i)
    sink_set = set(sinks)

    p_target = cfg.max_paths if cfg.max_paths is not None else 4 * cfg.nodes
    paths: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    for _ in range(_PATH_ATTEMPT_FACTOR * p_target):
        if len(paths) >= p_target:
            break
        v = sources[int(rng.integers(n_src))]
        walk: list[int] = []
        while len(walk) < cfg.max_hops:
            outs = out_edges[v]
            if not outs:
                break
            e = outs[int(rng.integers(len(outs)))]
            walk.append(e)
            v = edges[e][1]
            if v in sink_set:
                key = tuple(walk)
                if key not in seen:
                    seen.add(key)
                    paths.append(key)
                break
    if not paths:
        raise InfeasibleTopology(
            f"instance {index}: no source-sink walk of at most {cfg.max_hops} "
            "hops found within the retry budget"
        )

    net = Network(nodes, edges, paths, roles)
    agg = FlowAggregationMatrix.from_network(net)
    flows = rng.uniform(cfg.flow_low, cfg.flow_high, len(paths))
    y_true = agg.aggregate(flows)
    sigma = cfg.sigma if cfg.sigma is not None else 0.05 * float(np.mean(np.abs(y_true)))
    noise = rng.normal(0.0, sigma, y_true.shape) if sigma > 0 else np.zeros_like(y_true)
    n = cfg.nodes
    return BenchmarkInstance(
        index=index,
        seed=cfg.seed + index,
        network=net,
        agg=agg,
        y_true=ForecastVector(y_true),
        y_base=ForecastVector(y_true + noise),
        sigma=float(sigma),
        density=2.0 * len(edges) / (n * (n - 1)),
        max_path_hops=max(len(p) for p in paths),
    )


# --- methods ---------------------------------------------------------------------


def _parse_parameter(name: str, prefix: str) -> float:
    raw = name[len(prefix) :]
    try:
        return float(raw)
    except ValueError:
        raise BadParameter(f"method {name!r}: {raw!r} is not a number") from None


def method_callable(name: str):
    """Map a method name to a function instance -> reconciled vector.

    Known names: base, bu, l2, l1, mint, mint_nonneg, l2_dense,
    huber:<delta>, relaxed:<epsilon>.
    """
    if name == "base":
        return lambda inst: inst.y_base.data.copy()
    if name == "bu":
        return lambda inst: reconcile_bottom_up(inst.y_base, inst.agg).data
    if name == "l2":
        return lambda inst: reconcile_l2(inst.y_base, inst.agg).y_tilde.data
    if name == "l1":
        return lambda inst: reconcile_l1(inst.y_base, inst.agg).y_tilde.data
    if name == "mint":
        return lambda inst: reconcile_mint_ols(inst.y_base, inst.agg).data
    if name == "mint_nonneg":
        return lambda inst: reconcile_mint_ols(inst.y_base, inst.agg, nonneg=True).data
    if name == "l2_dense":

        def dense_arm(inst: BenchmarkInstance) -> np.ndarray:
            a, c = coherence_constraints(inst.agg)
            return reconcile_weighted(inst.y_base.data, a, c, np.eye(inst.agg.n))

        return dense_arm
    if name.startswith("huber:"):
        delta = _parse_parameter(name, "huber:")
        loss = LossSpec("huber", delta=delta)
        return lambda inst: reconcile_general(inst.y_base, inst.agg, loss).y_tilde.data
    if name.startswith("relaxed:"):
        eps = _parse_parameter(name, "relaxed:")
        return lambda inst: reconcile_relaxed(inst.y_base, inst.agg, eps).y_epsilon.data
    raise BadParameter(f"unknown method {name!r}")


def thread_count() -> int:
    """Worker count from FLOWREC_THREADS: unset means 1, 0 means all cores."""
    raw = os.environ.get("FLOWREC_THREADS", "").strip()
    if raw == "":
        return 1
    try:
        k = int(raw)
    except ValueError:
        raise BadParameter(f"FLOWREC_THREADS={raw!r} is not an integer") from None
    if k < 0:
        raise BadParameter(f"FLOWREC_THREADS must be >= 0, got {k}")
    return k if k > 0 else (os.cpu_count() or 1)


# --- harness ---------------------------------------------------------------------


_METRIC_FIELDS = (
    "rmse_overall",
    "rmse_nodes",
    "rmse_edges",
    "rmse_paths",
    "mae_overall",
    "mae_nodes",
    "mae_edges",
    "mae_paths",
)


@dataclass
class BenchmarkReport:
    """Everything a benchmark run produced, before and after serialization."""

    config: GeneratorConfig
    methods: tuple[str, ...]
    per_instance: list[dict]
    summary: list[dict]
    timings: list[dict]
    out_dir: str | None = None
    files: dict = field(default_factory=dict)

    def mean_time(self, method: str) -> float:
        times = [r["wall_time_s"] for r in self.timings if r["method"] == method]
        return float(np.mean(times))


def _run_one(cfg: GeneratorConfig, index: int, methods, fns) -> tuple[list[dict], list[dict]]:
    inst = generate_instance(cfg, index)
    imap = inst.agg.index_map
    metric_rows, timing_rows = [], []
    for name, fn in zip(methods, fns):
        t0 = time.perf_counter()
        out = np.asarray(fn(inst), dtype=float)
        wall = time.perf_counter() - t0
        report = evaluate(out, inst.y_true.data, imap)
        coh = check_coherence(out, inst.agg)
        row = {
            "instance": index,
            "seed": inst.seed,
            "nodes": imap.n_nodes,
            "edges": imap.n_edges,
            "paths": imap.n_paths,
            "density": inst.density,
            "max_path_hops": inst.max_path_hops,
            "sigma": inst.sigma,
            "method": name,
            "rmse_overall": report.rmse.overall,
            "rmse_nodes": report.rmse.nodes,
            "rmse_edges": report.rmse.edges,
            "rmse_paths": report.rmse.paths,
            "mae_overall": report.mae.overall,
            "mae_nodes": report.mae.nodes,
            "mae_edges": report.mae.edges,
            "mae_paths": report.mae.paths,
            "coherent": bool(coh.coherent),
            "max_residual": max(coh.max_node_residual, coh.max_edge_residual),
        }
        metric_rows.append(row)
        timing_rows.append({"instance": index, "method": name, "wall_time_s": wall})
    return metric_rows, timing_rows


def run_benchmark(
    cfg: GeneratorConfig, methods=DEFAULT_METHODS, out_dir: str | None = None
) -> BenchmarkReport:
    """Generate instances, run every method on each, score and summarise.

    Args:
        cfg: generator configuration.
        methods: method names, see :func:`method_callable`.
        out_dir: when given, write per_instance.csv, summary.csv,
            timings.csv and config.json there (directory is created).
            The two metric CSVs and config.json are byte-reproducible for
            a fixed config; timings.csv is wall-clock and is not.

    Raises:
        BadParameter: no methods, or an unknown method name.
        IoFailure: output directory or files cannot be written.
    """
    methods = tuple(methods)
    if not methods:
        raise BadParameter("run_benchmark needs at least one method")
    if len(set(methods)) != len(methods):
        raise BadParameter("duplicate method names")
    fns = [method_callable(name) for name in methods]

    workers = thread_count()
    indices = range(cfg.instances)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: _run_one(cfg, i, methods, fns), indices))
    else:
        results = [_run_one(cfg, i, methods, fns) for i in indices]

    per_instance: list[dict] = []
    timings: list[dict] = []
    for metric_rows, timing_rows in results:
        per_instance.extend(metric_rows)
        timings.extend(timing_rows)

    summary = []
    for name in methods:
        rows = [r for r in per_instance if r["method"] == name]
        entry = {"method": name, "instances": len(rows)}
        for fld in _METRIC_FIELDS:
            vals = np.array([r[fld] for r in rows])
            entry[f"{fld}_mean"] = float(vals.mean())
            entry[f"{fld}_sd"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        entry["coherent_count"] = sum(1 for r in rows if r["coherent"])
        summary.append(entry)

    report = BenchmarkReport(
        config=cfg,
        methods=methods,
        per_instance=per_instance,
        summary=summary,
        timings=timings,
        out_dir=out_dir,
    )
    if out_dir is not None:
        _write_outputs(report, out_dir, workers)
    return report


def _format_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: str, rows: list[dict]) -> None:
    fields = list(rows[0].keys())
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(fields)
            for row in rows:
                writer.writerow([_format_cell(row[f]) for f in fields])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _write_outputs(report: BenchmarkReport, out_dir: str, workers: int) -> None:
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from exc
    cfg = report.config
    config_payload = {
        "nodes": cfg.nodes,
        "instances": cfg.instances,
        "density": cfg.density,
        "sigma": cfg.sigma,
        "max_paths": cfg.max_paths,
        "max_hops": cfg.max_hops,
        "flow_low": cfg.flow_low,
        "flow_high": cfg.flow_high,
        "source_frac": cfg.source_frac,
        "sink_frac": cfg.sink_frac,
        "seed": cfg.seed,
        "methods": list(report.methods),
        "threads": workers,
    }
    files = {
        "per_instance": os.path.join(out_dir, "per_instance.csv"),
        "summary": os.path.join(out_dir, "summary.csv"),
        "timings": os.path.join(out_dir, "timings.csv"),
        "config": os.path.join(out_dir, "config.json"),
    }
    _write_csv(files["per_instance"], report.per_instance)
    _write_csv(files["summary"], report.summary)
    _write_csv(files["timings"], report.timings)
    try:
        with open(files["config"], "w") as fh:
            json.dump(config_payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {files['config']}: {exc}") from exc
    report.files = files
