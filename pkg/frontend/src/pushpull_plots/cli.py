"""``plot`` command: render trial-averaged trace curves to an image file."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .aggregate import GROUP_KEYS, PlotJob, aggregate, load_rows, manifest_for


def _group_order(value):
    return (0, value, "") if isinstance(value, (int, float)) else (1, 0, str(value))


def make_figure(curves, job: PlotJob):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for group in sorted(curves, key=_group_order):
        ts, means = curves[group]
        ax.plot(ts, means, label=f"{job.group_key}={group}")
    if job.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel(job.y_field)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def render(job: PlotJob):
    """Aggregate the trace file and write the figure; returns the curves."""
    job.validate()
    rows = load_rows(job.csv_path)
    meta = manifest_for(job.csv_path)
    curves = aggregate(rows, meta, job.group_key, job.y_field)
    fig = make_figure(curves, job)
    out = Path(job.out_image_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return curves


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plot",
                                     description="render trace curves grouped by run metadata")
    parser.add_argument("--csv", required=True, help="trace csv (manifest.json beside it)")
    parser.add_argument("--group", default="n", choices=GROUP_KEYS)
    parser.add_argument("--y", default="grad_metric", dest="y_field")
    parser.add_argument("--logy", action="store_true")
    parser.add_argument("--out", required=True, help="output image path (png)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = PlotJob(csv_path=args.csv, group_key=args.group, y_field=args.y_field,
                  log_y=args.logy, out_image_path=args.out)
    curves = render(job)
    print(f"wrote {args.out} with {len(curves)} curve(s): "
          + ", ".join(str(g) for g in sorted(curves, key=_group_order)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
