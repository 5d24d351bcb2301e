import csv
import subprocess
import sys
from pathlib import Path

import pytest

from sybilplots import FIGURE_IDS, FigureSpec, SchemaError, render, render_all
from sybilplots.figures import EXPECTED_HEADERS, MOVEMENTS


def write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def synthetic_run(root, episodes=5, steps=40, action=4, wait_scale=1.0):
    """A schema-conforming run directory with fabricated numbers."""
    write_csv(root / "los.csv", EXPECTED_HEADERS["los.csv"],
              [(m, 10 + i, 50.0, 3.0 + 0.5 * i)
               for i, m in enumerate(MOVEMENTS)])
    write_csv(root / "episodes.csv", EXPECTED_HEADERS["episodes.csv"],
              [(e, 1000.0 * wait_scale * (e + 1), 800 - 50 * e, 30, 200,
                40.0, 0.05) for e in range(episodes)])
    write_csv(root / "steps.csv", EXPECTED_HEADERS["steps.csv"],
              [(0, t, action if t % 3 else 0, 5.0 * t, 0.5, 1, 0, 0,
                20.0 * t, 3, 7, t % 4, 0) for t in range(steps)])
    write_csv(root / f"movements_ep{episodes - 1}.csv",
              ["step"] + [f"wait_{m}" for m in MOVEMENTS]
              + [f"acc_{m}" for m in MOVEMENTS],
              [[t] + [wait_scale * (t % 11) * (i + 1) for i in range(8)]
               + [wait_scale * t * 0.3 * (i + 1) for i in range(8)]
               for t in range(steps)])
    return root


def test_fig6_points_match_rows(tmp_path):
    run = synthetic_run(tmp_path / "run")
    report = render(FigureSpec("fig6", run, tmp_path / "fig6.png"))
    assert (tmp_path / "fig6.png").exists()
    assert report.panels[0]["points"] == 5


def test_fig8_degenerate_single_action(tmp_path):
    run = tmp_path / "run"
    synthetic_run(run)
    write_csv(run / "steps.csv", EXPECTED_HEADERS["steps.csv"],
              [(0, t, 0, 1.0 * t, 0.5, 0, 0, 0, 0.0, 0, 0, 0, 0)
               for t in range(30)])
    report = render(FigureSpec("fig8", run, tmp_path / "fig8.png"))
    assert report.panels[0]["actions"] == [0]


def test_fig9_overlay_contains_both_series(tmp_path):
    attack = synthetic_run(tmp_path / "attack", wait_scale=3.0)
    clean = synthetic_run(tmp_path / "clean", wait_scale=1.0)
    report = render(FigureSpec("fig9", attack, tmp_path / "fig9.png",
                               overlay_dir=clean))
    assert report.series_names() == {"under attack", "attack free"}
    assert len(report.panels) == 4


def test_schema_mismatch_is_named(tmp_path):
    run = tmp_path / "run"
    synthetic_run(run)
    # corrupt one column name
    rows = list(csv.reader(open(run / "episodes.csv")))
    rows[0][1] = "total_wait"
    write_csv(run / "episodes.csv", rows[0], rows[1:])
    with pytest.raises(SchemaError, match="total_waiting_time"):
        render(FigureSpec("fig6", run, tmp_path / "x.png"))


def test_missing_file_is_reported(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(SchemaError, match="los.csv"):
        render(FigureSpec("fig3", tmp_path / "empty", tmp_path / "x.png"))


def test_empty_csv_is_rejected(tmp_path):
    run = tmp_path / "run"
    synthetic_run(run)
    write_csv(run / "episodes.csv", EXPECTED_HEADERS["episodes.csv"], [])
    with pytest.raises(SchemaError, match="no data rows"):
        render(FigureSpec("fig6", run, tmp_path / "x.png"))


def test_unknown_figure_id_rejected(tmp_path):
    with pytest.raises(ValueError):
        FigureSpec("fig99", tmp_path, tmp_path / "x.png")


def test_render_is_read_only(tmp_path):
    run = synthetic_run(tmp_path / "run")
    before = {p.name: p.read_bytes() for p in run.glob("*.csv")}
    render_all(run, tmp_path / "figs")
    after = {p.name: p.read_bytes() for p in run.glob("*.csv")}
    assert before == after


def test_render_all_synthetic(tmp_path):
    attack = synthetic_run(tmp_path / "attack", wait_scale=3.0)
    clean = synthetic_run(tmp_path / "clean")
    base = synthetic_run(tmp_path / "base", action=2)
    reports = render_all(attack, tmp_path / "figs", noattack_dir=clean,
                         baseline_dir=base)
    assert [r.figure_id for r in reports] == list(FIGURE_IDS)
    for r in reports:
        assert r.out_path.exists() and r.out_path.stat().st_size > 0


@pytest.mark.acceptance
def test_figure_pipeline_from_real_run(tmp_path):
    """Secondary acceptance: all eight figures render from a completed run,
    and the movement figures carry both attack and attack-free series.
    The primary package is driven through its CLI only."""
    run = tmp_path / "attack"
    clean = tmp_path / "noattack"
    base = tmp_path / "baseline"
    common = ["--episodes", "2", "--steps", "150", "--seed", "3"]
    for cmd, outdir in (("train", run), ("noattack", clean),
                        ("train-baseline", base)):
        proc = subprocess.run(
            [sys.executable, "-m", "sybilsim.cli", cmd, "--outdir",
             str(outdir)] + common,
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr

    reports = render_all(run, tmp_path / "figs", noattack_dir=clean,
                         baseline_dir=base)
    assert [r.figure_id for r in reports] == list(FIGURE_IDS)
    for r in reports:
        assert r.out_path.exists() and r.out_path.stat().st_size > 0
    for r in reports:
        if r.figure_id in ("fig9", "fig10", "fig11", "fig12"):
            assert r.series_names() == {"under attack", "attack free"}, \
                f"{r.figure_id} lacks the overlay"
    print("\n[PASS] figure pipeline: 8 figures rendered, fig9-fig12 carry "
          "attack and attack-free series")
