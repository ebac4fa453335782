"""Command line entry points: simulate, metrics, summarize."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .harness import ExperimentConfig, config_from_dict, mix64
from .mixing import COLUMN_STOCHASTIC, ROW_STOCHASTIC, build_weight_matrix, compute_metrics
from .topology import KINDS, TopologySpec, build_topology

STEP_RESIDUAL_BOUND = 1e-10
BLOCK_RESIDUAL_BOUND = 1e-9


def _parse_nodes(text: str):
    return tuple(int(tok) for tok in text.split(",") if tok)


def _load_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = config_from_dict(json.loads(Path(args.config).read_text()))
    else:
        cfg = ExperimentConfig()
    if args.topology is not None:
        cfg = replace(cfg, topology=TopologySpec(kind=args.topology, n=1))
    if args.nodes is not None:
        cfg = replace(cfg, node_counts=_parse_nodes(args.nodes))
    if args.algo is not None:
        cfg = replace(cfg, algo=args.algo)
    if args.lr is not None:
        cfg = replace(cfg, alpha=args.lr)
    if args.batch is not None:
        cfg = replace(cfg, batch=args.batch if args.batch > 0 else None)
    if args.iters is not None:
        cfg = replace(cfg, iters=args.iters)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if args.verify:
        cfg = replace(cfg, verify=True)
    if args.out is not None:
        cfg = replace(cfg, out_path=str(args.out))
    if args.metric_every is not None:
        cfg = replace(cfg, metric_every=args.metric_every)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    cfg.validate()
    out_dir = Path(cfg.out_path) if cfg.out_path else Path("out")
    cells = list(harness.run_cells(cfg))
    trace_path, manifest_path = harness.write_outputs(cfg, cells, out_dir)
    rows = sum(len(c.records) for c in cells)
    print(f"wrote {rows} trace rows to {trace_path} (manifest: {manifest_path})")

    ok = True
    if cfg.verify:
        for cell in cells:
            if cell.verifier is None:
                continue
            step_res = cell.verifier.max_step_residual()
            block_res = cell.verifier.max_block_residual()
            status = "ok"
            if step_res > STEP_RESIDUAL_BOUND or block_res > BLOCK_RESIDUAL_BOUND:
                status = "FAIL"
                ok = False
            print(f"verify n={cell.n} trial={cell.trial_index}: "
                  f"step residual {step_res:.3e}, block residual {block_res:.3e} [{status}]")
    return 0 if ok else 1


def cmd_metrics(args) -> int:
    spec = TopologySpec(kind=args.topology, n=args.nodes, seed=args.seed)
    graph = build_topology(spec)
    a = build_weight_matrix(graph, ROW_STOCHASTIC, mix64(args.seed, 1))
    b = build_weight_matrix(graph, COLUMN_STOCHASTIC, mix64(args.seed, 2))
    metrics = compute_metrics(a, b)
    if args.out is not None:
        harness.emit_metrics_json(metrics, args.out)
        print(f"wrote metrics to {args.out}")
    else:
        print(harness.metrics_to_json(metrics))
    return 0


def cmd_summarize(args) -> int:
    trace_path = Path(args.inp)
    manifest_path = trace_path.with_name("manifest.json")
    if not manifest_path.exists():
        print(f"error: no manifest next to {trace_path}; cannot group rows by node count",
              file=sys.stderr)
        return 1
    meta = harness.read_manifest(manifest_path)
    traces = harness.read_traces(trace_path, trial_meta=meta)
    summary = harness.summarize_speedup(traces, tail_frac=args.tail)
    print(harness.summary_to_json(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pushpull",
                                     description="decentralized SGD simulator over digraphs")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a seeded multi-trial experiment sweep")
    sim.add_argument("--config", type=Path, help="JSON experiment config")
    sim.add_argument("--algo", choices=("push_pull", "push_diging", "frost", "centralized"))
    sim.add_argument("--topology", choices=KINDS)
    sim.add_argument("--nodes", help="comma-separated node counts, e.g. 4,8,16")
    sim.add_argument("--lr", type=float, help="constant step size")
    sim.add_argument("--batch", type=int, help="minibatch size per node (0 = full shard)")
    sim.add_argument("--iters", type=int)
    sim.add_argument("--trials", type=int)
    sim.add_argument("--seed", type=int, help="base seed for the cell hash")
    sim.add_argument("--verify", action="store_true",
                     help="record gradient blocks and check the tracker identities")
    sim.add_argument("--out", type=Path, help="output directory")
    sim.add_argument("--metric-every", dest="metric_every", type=int,
                     help="evaluate the full-gradient metric every k-th iteration")
    sim.set_defaults(func=cmd_simulate)

    met = sub.add_parser("metrics", help="spectral metrics of one topology's matrix pair")
    met.add_argument("--topology", required=True, choices=KINDS)
    met.add_argument("--nodes", required=True, type=int)
    met.add_argument("--seed", type=int, default=0)
    met.add_argument("--out", type=Path)
    met.set_defaults(func=cmd_metrics)

    summ = sub.add_parser("summarize", help="fit the plateau-vs-nodes speedup slope")
    summ.add_argument("--in", dest="inp", required=True, type=Path, help="trace csv path")
    summ.add_argument("--tail", type=float, default=0.2)
    summ.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
