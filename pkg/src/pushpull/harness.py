"""Experiment configuration, multi-trial execution, and trace emission.

A run sweeps node counts and trials.  Every (n, trial) cell derives its own
64-bit seed by hashing ``(n, trial)`` into the base seed, then re-derives
component seeds for the dataset, the topology draw, each weight matrix, the
consensual start point, and the per-node gradient streams -- so adding node
counts or trials never perturbs the other cells.

Outputs are a delimited trace file with the fixed eight-column header plus a
``manifest.json`` sidecar that maps each global trial id back to its node
count, algorithm, topology, and seed (the trace columns themselves carry no
grouping metadata).  Floats are serialized with 17 significant digits so
parsing the file back reproduces them exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import algorithms as alg
from .diagnostics import TRACE_COLUMNS, PushPullVerifier, TraceRecord, observe, plateau_estimate
from .mixing import COLUMN_STOCHASTIC, ROW_STOCHASTIC, NetworkMetrics, build_weight_matrix
from .objective import partition, synthesize
from .topology import TopologySpec, build_topology

_MASK64 = (1 << 64) - 1

# Sub-seed tags, hashed together with a cell's run seed.
_TAG_DATASET = 1
_TAG_TOPOLOGY = 2
_TAG_WEIGHTS_A = 3
_TAG_WEIGHTS_B = 4
_TAG_START = 5
_TAG_STREAMS = 6


def mix64(*values: int) -> int:
    """Deterministic 64-bit hash of a tuple of integers (splitmix64 chain)."""
    h = 0x9E3779B97F4A7C15
    for v in values:
        h = (h ^ (v & _MASK64)) * 0xBF58476D1CE4E5B9 & _MASK64
        h ^= h >> 27
        h = h * 0x94D049BB133111EB & _MASK64
        h ^= h >> 31
    return h


@dataclass(frozen=True)
class DatasetSpec:
    L_total: int = 2048
    d: int = 10
    rho: float = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment sweep.

    ``topology`` holds the graph kind and its kind-specific parameters; the
    node count and the draw seed are filled in per cell by the runner.
    ``batch=None`` requests exact full-shard gradients.
    """

    topology: TopologySpec = TopologySpec(kind="exponential", n=1)
    node_counts: tuple = (4, 8, 16)
    algo: str = alg.PUSH_PULL
    alpha: float = 0.005
    batch: int | None = 8
    iters: int = 5000
    trials: int = 5
    base_seed: int = 42
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    verify: bool = False
    out_path: str | None = None
    metric_every: int = 1

    def validate(self) -> None:
        if self.algo not in alg.ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algo!r}")
        if self.iters < 1 or self.trials < 1:
            raise ValueError("iters and trials must be at least 1")
        if self.metric_every < 1:
            raise ValueError("metric_every must be at least 1")
        if self.alpha <= 0.0:
            raise ValueError("step size must be positive")
        if not self.node_counts:
            raise ValueError("node_counts is empty")
        for n in self.node_counts:
            if n < 1 or self.dataset.L_total % n != 0:
                raise ValueError(f"node count {n} must divide L_total={self.dataset.L_total}")
            if self.batch is not None and self.batch > self.dataset.L_total // n:
                raise ValueError(f"batch {self.batch} exceeds shard size at n={n}")
            # raises on kind/parameter inconsistencies:
            replace(self.topology, n=n).resolved()


@dataclass(frozen=True)
class SpeedupSummary:
    """Steady-state plateau per node count and the fitted log-log slope."""

    plateau: dict
    slope: float
    reference_slope: float = -0.5


@dataclass
class CellResult:
    """Everything produced by one (n, trial) cell."""

    n: int
    trial_index: int
    global_trial: int
    seed: int
    records: list
    verifier: PushPullVerifier | None


def cell_seed(base_seed: int, n: int, trial_index: int) -> int:
    return (base_seed ^ mix64(n, trial_index)) & _MASK64


def run_cell(cfg: ExperimentConfig, n: int, trial_index: int, global_trial: int) -> CellResult:
    """Run one fully seeded trial at one node count."""
    seed = cell_seed(cfg.base_seed, n, trial_index)
    ds = synthesize(cfg.dataset.L_total, cfg.dataset.d, mix64(seed, _TAG_DATASET),
                    cfg.dataset.rho)
    shards = partition(ds, n)
    graph = build_topology(replace(cfg.topology, n=n, seed=mix64(seed, _TAG_TOPOLOGY)))

    needs_a = cfg.algo in (alg.PUSH_PULL, alg.FROST)
    needs_b = cfg.algo in (alg.PUSH_PULL, alg.PUSH_DIGING)
    a = build_weight_matrix(graph, ROW_STOCHASTIC, mix64(seed, _TAG_WEIGHTS_A)) if needs_a else None
    b = build_weight_matrix(graph, COLUMN_STOCHASTIC, mix64(seed, _TAG_WEIGHTS_B)) if needs_b else None

    # Consensual start: mean of per-node perturbations of the planted optimum.
    start_rng = np.random.default_rng(mix64(seed, _TAG_START))
    x0 = (ds.x_opt[None, :] + start_rng.normal(0.0, 10.0, size=(n, ds.d))).mean(axis=0)

    state = alg.init_state(cfg.algo, a, b, shards, x0, cfg.alpha, cfg.batch,
                           mix64(seed, _TAG_STREAMS))
    verifier = None
    if cfg.verify and cfg.algo == alg.PUSH_PULL:
        verifier = PushPullVerifier(a, b, cfg.alpha)

    records = []
    for t in range(cfg.iters):
        if t % cfg.metric_every == 0:
            records.append(observe(state, global_trial, n_meta=n))
        if verifier is not None:
            verifier.record(state)
        alg.step(state)
    return CellResult(n=n, trial_index=trial_index, global_trial=global_trial,
                      seed=seed, records=records, verifier=verifier)


def run_cells(cfg: ExperimentConfig):
    """Generate CellResults for the full (node count x trial) sweep, in order."""
    cfg.validate()
    global_trial = 0
    for n in cfg.node_counts:
        for trial_index in range(cfg.trials):
            yield run_cell(cfg, n, trial_index, global_trial)
            global_trial += 1


def run_experiment(cfg: ExperimentConfig) -> list:
    """All trace records of the sweep, ordered by (node count, trial, t)."""
    records = []
    for cell in run_cells(cfg):
        records.extend(cell.records)
    return records


def summarize_speedup(traces: list, tail_frac: float = 0.2) -> SpeedupSummary:
    """Per-node-count plateau levels and the least-squares log-log slope."""
    series: dict[tuple, list] = {}
    for rec in traces:
        if rec.n is None:
            raise ValueError("trace records lack node-count metadata; "
                             "load the manifest alongside the trace file")
        series.setdefault((rec.n, rec.trial), []).append((rec.t, rec.grad_metric))
    counts = sorted({n for n, _ in series})
    if len(counts) < 2:
        raise ValueError("need at least two distinct node counts to fit a speedup slope")
    plateau = {}
    for n in counts:
        per_trial = [plateau_estimate([g for _, g in sorted(vals)], tail_frac)
                     for (nn, _), vals in sorted(series.items()) if nn == n]
        plateau[n] = float(np.mean(per_trial))
    logs_n = np.log([float(n) for n in counts])
    logs_p = np.log([plateau[n] for n in counts])
    slope = float(np.polyfit(logs_n, logs_p, 1)[0])
    return SpeedupSummary(plateau=plateau, slope=slope)


def _fmt(x: float) -> str:
    return format(x, ".17g")


def emit_csv(traces: list, path) -> None:
    """Write trace rows under the fixed header; floats keep full precision."""
    path = Path(path)
    lines = [",".join(TRACE_COLUMNS)]
    for r in traces:
        lines.append(",".join([
            str(r.trial), str(r.t), _fmt(r.grad_metric), _fmt(r.eps_norm),
            _fmt(r.consensus_x), _fmt(r.delta_y_norm), _fmt(r.mass_residual),
            _fmt(r.loss_mean),
        ]))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise RuntimeError(f"cannot write trace file {path}: {exc}") from exc


def read_traces(path, trial_meta: dict | None = None) -> list:
    """Parse a trace file back into records; ``trial_meta`` restores node counts."""
    path = Path(path)
    records = []
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != list(TRACE_COLUMNS):
                raise ValueError(f"unexpected trace header in {path}: {reader.fieldnames}")
            for row in reader:
                trial = int(row["trial"])
                meta = trial_meta.get(trial) if trial_meta else None
                records.append(TraceRecord(
                    trial=trial, t=int(row["t"]),
                    grad_metric=float(row["grad_metric"]), eps_norm=float(row["eps_norm"]),
                    consensus_x=float(row["consensus_x"]),
                    delta_y_norm=float(row["delta_y_norm"]),
                    mass_residual=float(row["mass_residual"]),
                    loss_mean=float(row["loss_mean"]),
                    n=meta["n"] if meta else None,
                ))
    except OSError as exc:
        raise RuntimeError(f"cannot read trace file {path}: {exc}") from exc
    return records


def emit_metrics_json(metrics: NetworkMetrics, path) -> None:
    path = Path(path)
    try:
        path.write_text(metrics_to_json(metrics) + "\n")
    except OSError as exc:
        raise RuntimeError(f"cannot write metrics file {path}: {exc}") from exc


def metrics_to_json(metrics: NetworkMetrics) -> str:
    return json.dumps(asdict(metrics), sort_keys=True, indent=2)


def summary_to_json(summary: SpeedupSummary) -> str:
    payload = {
        "plateau": {str(n): v for n, v in sorted(summary.plateau.items())},
        "slope": summary.slope,
        "reference_slope": summary.reference_slope,
    }
    return json.dumps(payload, indent=2)


def write_outputs(cfg: ExperimentConfig, cells: list, out_dir) -> tuple:
    """Write ``traces.csv`` and ``manifest.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for cell in cells:
        records.extend(cell.records)
    trace_path = out_dir / "traces.csv"
    emit_csv(records, trace_path)
    entries = []
    for c in cells:
        entries.append({"trial": c.global_trial, "n": c.n, "trial_index": c.trial_index,
                        "seed": c.seed, "algo": cfg.algo, "topology": cfg.topology.kind})
    manifest = {
        "columns": list(TRACE_COLUMNS),
        "trials": entries,
        "config": config_to_dict(cfg),
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return trace_path, manifest_path


def read_manifest(path) -> dict:
    """Load a manifest and return ``{trial id: entry}``."""
    data = json.loads(Path(path).read_text())
    return {int(e["trial"]): e for e in data["trials"]}


def config_to_dict(cfg: ExperimentConfig) -> dict:
    topo = {k: v for k, v in asdict(cfg.topology).items()
            if v is not None and k not in ("n", "seed")}
    return {
        "topology": topo,
        "node_counts": list(cfg.node_counts),
        "algo": cfg.algo,
        "alpha": cfg.alpha,
        "batch": cfg.batch,
        "iters": cfg.iters,
        "trials": cfg.trials,
        "base_seed": cfg.base_seed,
        "dataset": asdict(cfg.dataset),
        "verify": cfg.verify,
        "out_path": cfg.out_path,
        "metric_every": cfg.metric_every,
    }


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from parsed JSON, applying defaults for absent fields."""
    known = {"topology", "node_counts", "algo", "alpha", "batch", "iters", "trials",
             "base_seed", "dataset", "verify", "out_path", "metric_every"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    topo_data = dict(data.get("topology", {"kind": "exponential"}))
    topo_data.pop("n", None)
    topo_data.pop("seed", None)
    topology = TopologySpec(n=1, **topo_data)
    ds = DatasetSpec(**data.get("dataset", {}))
    batch = data.get("batch", 8)
    if batch == 0:
        batch = None  # full-shard gradients
    cfg = ExperimentConfig(
        topology=topology,
        node_counts=tuple(data.get("node_counts", (4, 8, 16))),
        algo=data.get("algo", alg.PUSH_PULL),
        alpha=data.get("alpha", 0.005),
        batch=batch,
        iters=data.get("iters", 5000),
        trials=data.get("trials", 5),
        base_seed=data.get("base_seed", 42),
        dataset=ds,
        verify=data.get("verify", False),
        out_path=data.get("out_path"),
        metric_every=data.get("metric_every", 1),
    )
    return cfg


def plateau_series(records: list) -> dict:
    """Group grad_metric series by (n, trial), each sorted by iteration."""
    series: dict[tuple, list] = {}
    for rec in records:
        series.setdefault((rec.n, rec.trial), []).append((rec.t, rec.grad_metric))
    return {key: [g for _, g in sorted(vals)] for key, vals in series.items()}
