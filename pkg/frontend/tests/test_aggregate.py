import json
import math

import pytest

from pushpull_plots.aggregate import PlotJob, aggregate, load_rows, manifest_for
from pushpull_plots.cli import main, make_figure, render

HEADER = "trial,t,grad_metric,eps_norm,consensus_x,delta_y_norm,mass_residual,loss_mean"


def _write_run(tmp_path, levels, trials=3, iters=40, jitter=None):
    """Hand-built trace file + manifest: one constant-level series per (n, trial)."""
    lines = [HEADER]
    entries = []
    trial = 0
    for n, level in levels.items():
        for k in range(trials):
            for t in range(iters):
                y = level if jitter is None else level * (1.0 + jitter * ((trial + t) % 5 - 2))
                lines.append(f"{trial},{t},{y!r},{0.5 * y!r},0,0,0,1.0")
            entries.append({"trial": trial, "n": n, "trial_index": k,
                            "seed": 100 + trial, "algo": "push_pull", "topology": "exponential"})
            trial += 1
    csv_path = tmp_path / "traces.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    (tmp_path / "manifest.json").write_text(json.dumps({"trials": entries}))
    return csv_path


def test_aggregation_matches_independent_recompute(tmp_path):
    csv_path = _write_run(tmp_path, {4: 0.5, 16: 0.25}, trials=3, iters=25, jitter=0.01)
    rows = load_rows(csv_path)
    meta = manifest_for(csv_path)
    curves = aggregate(rows, meta, "n", "grad_metric")

    # independent re-aggregation straight from the parsed rows
    for n, (ts, means) in curves.items():
        trials = [e["trial"] for e in meta.values() if e["n"] == n]
        for t, mean in zip(ts, means):
            vals = [r["grad_metric"] for r in rows if r["t"] == t and r["trial"] in trials]
            assert abs(mean - sum(vals) / len(vals)) <= 1e-12


def test_planted_sqrt_law_separates_by_factor_two(tmp_path):
    levels = {n: n ** -0.5 for n in (4, 16)}
    csv_path = _write_run(tmp_path, levels, trials=2, iters=30)
    curves = aggregate(load_rows(csv_path), manifest_for(csv_path), "n", "grad_metric")
    mean4 = sum(curves[4][1]) / len(curves[4][1])
    mean16 = sum(curves[16][1]) / len(curves[16][1])
    assert mean4 / mean16 == pytest.approx(2.0, abs=1e-12)


def test_single_trial_single_group(tmp_path):
    csv_path = _write_run(tmp_path, {8: 0.1}, trials=1, iters=17)
    curves = aggregate(load_rows(csv_path), manifest_for(csv_path), "n", "grad_metric")
    assert list(curves) == [8]
    ts, means = curves[8]
    assert len(ts) == 17 and ts == list(range(17))
    job = PlotJob(str(csv_path), "n", "grad_metric", True, str(csv_path.parent / "one.png"))
    fig = make_figure(curves, job)
    assert len(fig.axes[0].lines) == 1


def test_two_groups_two_legend_entries(tmp_path):
    csv_path = _write_run(tmp_path, {4: 0.5, 16: 0.25})
    job = PlotJob(str(csv_path), "n", "grad_metric", True, str(csv_path.parent / "two.png"))
    curves = render(job)
    assert sorted(curves) == [4, 16]
    fig = make_figure(curves, job)
    labels = [t.get_text() for t in fig.axes[0].get_legend().get_texts()]
    assert labels == ["n=4", "n=16"]
    assert fig.axes[0].get_yscale() == "log"


def test_grouping_by_topology_and_algo(tmp_path):
    csv_path = _write_run(tmp_path, {4: 0.5})
    meta = manifest_for(csv_path)
    rows = load_rows(csv_path)
    assert list(aggregate(rows, meta, "topology", "eps_norm")) == ["exponential"]
    assert list(aggregate(rows, meta, "algo", "eps_norm")) == ["push_pull"]


def test_cli_writes_image(tmp_path, capsys):
    csv_path = _write_run(tmp_path, {4: 0.5, 16: 0.25})
    out = tmp_path / "fig.png"
    rc = main(["--csv", str(csv_path), "--group", "n", "--y", "grad_metric",
               "--logy", "--out", str(out)])
    assert rc == 0
    assert out.exists() and out.stat().st_size > 0
    assert "2 curve(s)" in capsys.readouterr().out


def test_validation_errors(tmp_path):
    csv_path = _write_run(tmp_path, {4: 0.5})
    with pytest.raises(ValueError):
        PlotJob(str(csv_path), "n", "nonexistent_column", False, "x.png").validate()
    with pytest.raises(ValueError):
        PlotJob(str(csv_path), "seed", "grad_metric", False, "x.png").validate()
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_rows(bad)
    lonely = tmp_path / "lonely"
    lonely.mkdir()
    lone_csv = lonely / "traces.csv"
    lone_csv.write_text(HEADER + "\n0,0,1,0,0,0,0,1\n")
    with pytest.raises(FileNotFoundError):
        manifest_for(lone_csv)
    with pytest.raises(ValueError):
        aggregate([], {}, "n", "grad_metric")


def test_losses_parse_with_full_precision(tmp_path):
    value = 0.1234567891234567
    lines = [HEADER, f"0,0,{value!r},0,0,0,0,{math.pi!r}"]
    csv_path = tmp_path / "traces.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    (tmp_path / "manifest.json").write_text(json.dumps(
        {"trials": [{"trial": 0, "n": 2, "trial_index": 0, "seed": 1,
                     "algo": "push_pull", "topology": "ring"}]}))
    row = load_rows(csv_path)[0]
    assert row["grad_metric"] == value
    assert row["loss_mean"] == math.pi
