"""Trace-file loading and trial-mean aggregation.

This package consumes the simulator's file interface only: a delimited trace
file with the fixed header

    trial,t,grad_metric,eps_norm,consensus_x,delta_y_norm,mass_residual,loss_mean

plus the ``manifest.json`` sidecar that maps each trial id to its node count,
algorithm, and topology.  Grouping by ``n``/``topology``/``algo`` therefore
requires the manifest; the trace columns alone carry no grouping metadata.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

EXPECTED_COLUMNS = ("trial", "t", "grad_metric", "eps_norm", "consensus_x",
                    "delta_y_norm", "mass_residual", "loss_mean")
GROUP_KEYS = ("n", "topology", "algo")
Y_FIELDS = ("grad_metric", "eps_norm")


@dataclass(frozen=True)
class PlotJob:
    csv_path: str
    group_key: str
    y_field: str
    log_y: bool
    out_image_path: str

    def validate(self) -> None:
        if self.group_key not in GROUP_KEYS:
            raise ValueError(f"group key must be one of {GROUP_KEYS}, got {self.group_key!r}")
        if self.y_field not in EXPECTED_COLUMNS:
            raise ValueError(f"{self.y_field!r} is not a trace column")


def load_rows(csv_path) -> list[dict]:
    """Parse the trace file; every row comes back with typed fields."""
    csv_path = Path(csv_path)
    with csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(EXPECTED_COLUMNS):
            raise ValueError(f"unexpected trace header in {csv_path}: {reader.fieldnames}")
        rows = []
        for raw in reader:
            row = {"trial": int(raw["trial"]), "t": int(raw["t"])}
            for col in EXPECTED_COLUMNS[2:]:
                row[col] = float(raw[col])
            rows.append(row)
    return rows


def load_manifest(path) -> dict[int, dict]:
    data = json.loads(Path(path).read_text())
    return {int(entry["trial"]): entry for entry in data["trials"]}


def manifest_for(csv_path) -> dict[int, dict]:
    sidecar = Path(csv_path).with_name("manifest.json")
    if not sidecar.exists():
        raise FileNotFoundError(
            f"no manifest next to {csv_path}; grouping needs the run metadata")
    return load_manifest(sidecar)


def aggregate(rows: list[dict], meta: dict[int, dict], group_key: str,
              y_field: str) -> dict[object, tuple[list[int], list[float]]]:
    """Per-iteration mean over trials, one series per group value.

    Returns ``{group value: (ts, means)}`` with ``ts`` sorted.  Iterations
    present in only a subset of a group's trials are averaged over the trials
    that recorded them.
    """
    if group_key not in GROUP_KEYS:
        raise ValueError(f"group key must be one of {GROUP_KEYS}, got {group_key!r}")
    if not rows:
        raise ValueError("trace file holds no rows")
    buckets: dict[object, dict[int, list[float]]] = {}
    for row in rows:
        entry = meta.get(row["trial"])
        if entry is None:
            raise ValueError(f"trial {row['trial']} missing from the manifest")
        group = entry[group_key]
        buckets.setdefault(group, {}).setdefault(row["t"], []).append(row[y_field])
    out = {}
    for group, per_t in buckets.items():
        ts = sorted(per_t)
        out[group] = (ts, [sum(per_t[t]) / len(per_t[t]) for t in ts])
    return out
