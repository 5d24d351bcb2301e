"""Offline figure rendering from sybilsim run directories.

Input is strictly the documented CSV schemas; nothing here imports the
simulator. Each render returns a small report describing what was drawn,
so tests can assert on content without decoding image files.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

MOVEMENTS = ("EBT", "EBL", "WBT", "WBL", "NBT", "NBL", "SBT", "SBL")
THROUGH = ("EBT", "WBT", "NBT", "SBT")
LEFT = ("EBL", "WBL", "NBL", "SBL")

FIGURE_IDS = ("fig3", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11", "fig12")

EXPECTED_HEADERS = {
    "los.csv": ["movement", "vehicles", "wait_seconds", "avg_wait_per_vehicle"],
    "episodes.csv": ["episode", "total_waiting_time", "vehicles_injected",
                     "skipped_injections", "removals", "mean_reward",
                     "epsilon_end"],
    "steps.csv": ["episode", "step", "action", "reward", "epsilon", "injected",
                  "skipped", "removed", "total_waiting", "n_halted", "n_moving",
                  "phase", "yellow"],
}


class SchemaError(ValueError):
    """A CSV is missing or does not carry the documented columns."""


@dataclass
class FigureSpec:
    figure_id: str
    run_dir: Path
    out_path: Path
    overlay_dir: Path | None = None     # attack-free run for fig9-fig12
    baseline_dir: Path | None = None    # comparison agent run for fig6-fig8

    def __post_init__(self):
        if self.figure_id not in FIGURE_IDS:
            raise ValueError(f"unknown figure id {self.figure_id!r}")
        self.run_dir = Path(self.run_dir)
        self.out_path = Path(self.out_path)
        if self.overlay_dir is not None:
            self.overlay_dir = Path(self.overlay_dir)
        if self.baseline_dir is not None:
            self.baseline_dir = Path(self.baseline_dir)


@dataclass
class RenderReport:
    figure_id: str
    out_path: Path
    panels: list[dict] = field(default_factory=list)

    def series_names(self) -> set[str]:
        names: set[str] = set()
        for panel in self.panels:
            names.update(panel["series"])
        return names


def read_csv_checked(path: Path, expected: list[str] | None = None,
                     prefix_ok: bool = False) -> list[dict]:
    if not path.exists():
        raise SchemaError(f"missing input CSV: {path}")
    with open(path) as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if expected is not None:
            missing = [c for c in expected if c not in header]
            if missing:
                raise SchemaError(
                    f"{path} lacks required columns {missing}; found {header}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path} has a header but no data rows")
    return rows


def find_movement_series(run_dir: Path) -> Path:
    candidates = sorted(run_dir.glob("movements_ep*.csv"),
                        key=lambda p: int(p.stem.split("ep")[-1]))
    if not candidates:
        raise SchemaError(f"no movements_ep<N>.csv in {run_dir}")
    return candidates[-1]


def _movement_columns(kind: str, movements) -> list[str]:
    return [f"{kind}_{m}" for m in movements]


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render(spec: FigureSpec) -> RenderReport:
    """Render one figure; returns the report of panels and series drawn."""
    handler = {
        "fig3": _render_los,
        "fig6": _render_episode_curve("total_waiting_time",
                                      "total waiting time (veh*s)"),
        "fig7": _render_episode_curve("vehicles_injected",
                                      "sybil vehicles injected"),
        "fig8": _render_action_reward,
        "fig9": _render_movement_panels("wait", THROUGH,
                                        "waiting time (s), through movements"),
        "fig10": _render_movement_panels("wait", LEFT,
                                         "waiting time (s), left turns"),
        "fig11": _render_movement_panels("acc", THROUGH,
                                         "accumulated waiting (s), through movements"),
        "fig12": _render_movement_panels("acc", LEFT,
                                         "accumulated waiting (s), left turns"),
    }[spec.figure_id]
    return handler(spec)


def _render_los(spec: FigureSpec) -> RenderReport:
    rows = read_csv_checked(spec.run_dir / "los.csv",
                            EXPECTED_HEADERS["los.csv"])
    values = {r["movement"]: float(r["avg_wait_per_vehicle"]) for r in rows}
    missing = [m for m in MOVEMENTS if m not in values]
    if missing:
        raise SchemaError(f"los.csv lacks movements {missing}")
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(MOVEMENTS, [values[m] for m in MOVEMENTS], color="#4477aa")
    ax.axhline(10.0, color="#cc3311", linestyle="--", linewidth=1,
               label="10 s level-of-service bound")
    ax.set_ylabel("average waiting time per vehicle (s)")
    ax.set_xlabel("movement")
    ax.set_title("Attack-free waiting per movement")
    ax.legend()
    _save(fig, spec.out_path)
    return RenderReport("fig3", spec.out_path,
                        [{"title": "los", "series": list(MOVEMENTS)}])


def _render_episode_curve(column: str, ylabel: str):
    def _inner(spec: FigureSpec) -> RenderReport:
        rows = read_csv_checked(spec.run_dir / "episodes.csv",
                                EXPECTED_HEADERS["episodes.csv"])
        panels = [("attack model", rows)]
        if spec.baseline_dir is not None:
            panels.append(("baseline model",
                           read_csv_checked(spec.baseline_dir / "episodes.csv",
                                            EXPECTED_HEADERS["episodes.csv"])))
        fig, axes = plt.subplots(1, len(panels),
                                 figsize=(6 * len(panels), 4), squeeze=False)
        report_panels = []
        for ax, (label, data) in zip(axes[0], panels):
            xs = [int(r["episode"]) + 1 for r in data]
            ys = [float(r[column]) for r in data]
            ax.plot(xs, ys, marker="o", markersize=2.5, linewidth=1.2)
            ax.set_xlabel("training episode")
            ax.set_ylabel(ylabel)
            ax.set_title(label)
            report_panels.append({"title": label, "series": [column],
                                  "points": len(xs)})
        fig.tight_layout()
        _save(fig, spec.out_path)
        fig_id = "fig6" if column == "total_waiting_time" else "fig7"
        return RenderReport(fig_id, spec.out_path, report_panels)
    return _inner


def _render_action_reward(spec: FigureSpec) -> RenderReport:
    rows = read_csv_checked(spec.run_dir / "steps.csv",
                            EXPECTED_HEADERS["steps.csv"])
    panels = [("attack model", rows)]
    if spec.baseline_dir is not None:
        panels.append(("baseline model",
                       read_csv_checked(spec.baseline_dir / "steps.csv",
                                        EXPECTED_HEADERS["steps.csv"])))
    fig, axes = plt.subplots(1, len(panels),
                             figsize=(6 * len(panels), 4), squeeze=False)
    report_panels = []
    for ax, (label, data) in zip(axes[0], panels):
        actions = [int(r["action"]) for r in data]
        rewards = [float(r["reward"]) for r in data]
        ax.scatter(actions, rewards, s=4, alpha=0.25, color="#4477aa")
        ax.set_xlabel("action")
        ax.set_ylabel("reward")
        ax.set_xticks(sorted(set(actions)))
        ax.set_title(label)
        report_panels.append({"title": label, "series": ["action_vs_reward"],
                              "actions": sorted(set(actions))})
    fig.tight_layout()
    _save(fig, spec.out_path)
    return RenderReport("fig8", spec.out_path, report_panels)


def _render_movement_panels(kind: str, movements, title: str):
    def _inner(spec: FigureSpec) -> RenderReport:
        path = find_movement_series(spec.run_dir)
        columns = ["step"] + _movement_columns(kind, movements)
        rows = read_csv_checked(path, columns)
        overlay_rows = None
        if spec.overlay_dir is not None:
            overlay_rows = read_csv_checked(find_movement_series(spec.overlay_dir),
                                            columns)
        fig, axes = plt.subplots(2, 2, figsize=(11, 7), squeeze=False)
        report_panels = []
        for ax, movement in zip(axes.ravel(), movements):
            col = f"{kind}_{movement}"
            xs = [int(r["step"]) for r in rows]
            ax.plot(xs, [float(r[col]) for r in rows],
                    label="under attack", color="#cc3311", linewidth=1.0)
            series = ["under attack"]
            if overlay_rows is not None:
                ax.plot([int(r["step"]) for r in overlay_rows],
                        [float(r[col]) for r in overlay_rows],
                        label="attack free", color="#228833", linewidth=1.0)
                series.append("attack free")
            ax.set_title(movement)
            ax.set_xlabel("simulation step")
            ax.set_ylabel(title)
            ax.legend(fontsize=8)
            report_panels.append({"title": movement, "series": series})
        fig.suptitle(title)
        fig.tight_layout()
        _save(fig, spec.out_path)
        fig_id = {("wait", THROUGH): "fig9", ("wait", LEFT): "fig10",
                  ("acc", THROUGH): "fig11", ("acc", LEFT): "fig12"}[
                      (kind, tuple(movements))]
        return RenderReport(fig_id, spec.out_path, report_panels)
    return _inner


def render_all(run_dir, out_dir, noattack_dir=None,
               baseline_dir=None) -> list[RenderReport]:
    """Render the full figure set for a completed run directory."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir)
    reports = []
    for figure_id in FIGURE_IDS:
        source = run_dir
        if figure_id == "fig3":
            # level of service comes from the attack-free run when supplied
            source = Path(noattack_dir) if noattack_dir else run_dir
        spec = FigureSpec(
            figure_id, source, out_dir / f"{figure_id}.png",
            overlay_dir=Path(noattack_dir) if (
                noattack_dir and figure_id in ("fig9", "fig10", "fig11", "fig12"))
            else None,
            baseline_dir=Path(baseline_dir) if (
                baseline_dir and figure_id in ("fig6", "fig7", "fig8"))
            else None)
        reports.append(render(spec))
    return reports
