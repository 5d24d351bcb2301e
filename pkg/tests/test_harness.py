import csv
import json
from pathlib import Path

import numpy as np
import pytest

from sybilsim.config import (ConfigError, RunConfig, dump_config, load_config,
                             save_config)
from sybilsim import harness
from sybilsim.harness import (EPISODE_COLUMNS, STEP_COLUMNS, cmd_calibrate,
                              cmd_noattack, cmd_train, episodes_to_plateau,
                              export_summary, moving_average)


def small_cfg(outdir, episodes=2, steps=120, label="t"):
    cfg = RunConfig()
    cfg.outdir = str(outdir)
    cfg.label = label
    cfg.seed = 5
    cfg.agent.episodes = episodes
    cfg.agent.steps = steps
    cfg.agent.warmup = 60
    cfg.agent.snapshot_every = 0
    return cfg


# -- config files -----------------------------------------------------------------

def test_config_round_trip(tmp_path):
    cfg = RunConfig()
    cfg.sim.demand["NBT"] = 512.5
    cfg.agent.gamma = 0.9
    cfg.seed = 77
    path = tmp_path / "run.ini"
    save_config(cfg, path)
    loaded = load_config(path)
    assert loaded.sim.demand["NBT"] == 512.5
    assert loaded.agent.gamma == 0.9
    assert loaded.seed == 77
    assert dump_config(loaded) == dump_config(cfg)


def test_config_unknown_key_is_diagnosed(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[sim]\nwarp_speed = 9\n")
    with pytest.raises(ConfigError, match="warp_speed"):
        load_config(path)


def test_config_parse_error_has_location(tmp_path):
    path = tmp_path / "broken.ini"
    path.write_text("[sim\ndt = 1.0\n")
    with pytest.raises(ConfigError, match="broken.ini"):
        load_config(path)


def test_config_validation_catches_bad_values(tmp_path):
    path = tmp_path / "bad2.ini"
    path.write_text("[agent]\ngamma = 1.5\n")
    with pytest.raises(ConfigError, match="gamma"):
        load_config(path)


# -- noattack ----------------------------------------------------------------------

def test_noattack_outputs_and_determinism(tmp_path):
    cfg = small_cfg(tmp_path / "a", episodes=1, steps=400)
    result = cmd_noattack(cfg)
    out = Path(cfg.outdir)
    for name in ("config.ini", "episodes.csv", "steps.csv", "los.csv",
                 "noattack.json"):
        assert (out / name).exists()
    assert result["max_avg_wait"] >= 0.0

    first = {p.name: p.read_bytes() for p in out.glob("*.csv")}
    cfg2 = load_config(out / "config.ini")
    cfg2.outdir = str(tmp_path / "b")
    cmd_noattack(cfg2)
    second = {p.name: p.read_bytes() for p in Path(cfg2.outdir).glob("*.csv")}
    assert first == second


def test_noattack_zero_demand_zero_waits(tmp_path):
    cfg = small_cfg(tmp_path / "z", episodes=1, steps=200)
    cfg.sim.demand = {m: 0.0 for m in cfg.sim.demand}
    result = cmd_noattack(cfg)
    assert result["max_avg_wait"] == 0.0
    assert result["total_waiting_time"] == 0.0


def test_movement_series_row_counts(tmp_path):
    cfg = small_cfg(tmp_path / "m", episodes=1, steps=150)
    cmd_noattack(cfg)
    series = list(csv.reader(open(Path(cfg.outdir) / "movements_ep0.csv")))
    assert len(series) == 151  # header + one row per step
    assert series[0] == harness.MOVEMENT_COLUMNS


# -- calibrate --------------------------------------------------------------------

def test_calibrate_outputs_and_median_oracle(tmp_path):
    cfg = small_cfg(tmp_path / "c", episodes=1, steps=500)
    result = cmd_calibrate(cfg)
    out = Path(cfg.outdir)
    assert (out / "calibration_trace.csv").exists()
    assert (out / "calibration_hist.csv").exists()
    assert (out / "threshold.json").exists()
    assert result["samples_isolated"] > 0

    # median percentile equals the sort-based oracle on the trace file
    decels = []
    with open(out / "calibration_trace.csv") as fh:
        for row in csv.DictReader(fh):
            if int(row["green"]) and int(row["free_leader"]) \
                    and float(row["accel"]) < 0:
                decels.append(-float(row["accel"]))
    cfg_med = load_config(out / "config.ini")
    cfg_med.removal.percentile = 0.5
    cfg_med.outdir = str(tmp_path / "c2")
    median_result = cmd_calibrate(cfg_med)
    ordered = sorted(decels)
    rank = int(np.ceil(0.5 * len(ordered) - 1e-12))
    assert median_result["threshold"] == pytest.approx(ordered[rank - 1])


def test_calibrate_deterministic(tmp_path):
    cfg1 = small_cfg(tmp_path / "d1", episodes=1, steps=400)
    cfg2 = small_cfg(tmp_path / "d2", episodes=1, steps=400)
    assert cmd_calibrate(cfg1)["threshold"] == cmd_calibrate(cfg2)["threshold"]


# -- training ---------------------------------------------------------------------

def test_train_smoke_emits_full_output_set(tmp_path):
    cfg = small_cfg(tmp_path / "t", episodes=1, steps=150)
    summary = cmd_train(cfg, mode="attack")
    out = Path(cfg.outdir)
    for name in ("config.ini", "episodes.csv", "steps.csv", "weights_final.npz",
                 "summary.json", "movements_ep0.csv"):
        assert (out / name).exists()
    assert summary["episodes"] == 1
    assert summary["steps_per_episode"] == 150

    with open(out / "episodes.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == EPISODE_COLUMNS
    assert len(rows) == 2
    with open(out / "steps.csv") as fh:
        step_rows = list(csv.reader(fh))
    assert step_rows[0] == STEP_COLUMNS
    assert len(step_rows) == 151


def test_train_rejects_unknown_mode(tmp_path):
    with pytest.raises(ValueError):
        cmd_train(small_cfg(tmp_path / "x"), mode="chaos")


def test_train_baseline_contract_columns(tmp_path):
    cfg = small_cfg(tmp_path / "b", episodes=2, steps=200)
    cmd_train(cfg, mode="baseline")
    with open(Path(cfg.outdir) / "steps.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert max(int(r["action"]) for r in rows) <= 6
    assert all(int(r["removed"]) == 0 for r in rows)
    for r in rows:
        expected = (int(r["n_halted"]) - int(r["n_moving"])
                    - cfg.agent.d_penalty * int(r["injected"]))
        assert float(r["reward"]) == pytest.approx(expected)


def test_train_reexecution_is_byte_identical(tmp_path):
    cfg = small_cfg(tmp_path / "r1", episodes=2, steps=150)
    cmd_train(cfg, mode="attack")
    out1 = Path(cfg.outdir)
    cfg2 = load_config(out1 / "config.ini")
    cfg2.outdir = str(tmp_path / "r2")
    cmd_train(cfg2, mode="attack")
    out2 = Path(cfg2.outdir)
    for name in ("episodes.csv", "steps.csv", "movements_ep1.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_train_resume_matches_uninterrupted(tmp_path):
    cfg = small_cfg(tmp_path / "full", episodes=4, steps=120)
    cfg.agent.snapshot_every = 2
    cmd_train(cfg, mode="attack")

    cfg_i = small_cfg(tmp_path / "half", episodes=2, steps=120)
    cfg_i.agent.snapshot_every = 2
    cmd_train(cfg_i, mode="attack")
    cfg_resume = load_config(Path(cfg_i.outdir) / "config.ini")
    cfg_resume.agent.episodes = 4
    cfg_resume.outdir = cfg_i.outdir
    cmd_train(cfg_resume, mode="attack", resume=True)

    full = (Path(cfg.outdir) / "episodes.csv").read_text()
    resumed = (Path(cfg_i.outdir) / "episodes.csv").read_text()
    assert full == resumed


# -- summary ---------------------------------------------------------------------

def test_moving_average_expanding_head():
    assert moving_average([2.0, 4.0, 6.0], window=5) == [2.0, 3.0, 4.0]


def test_plateau_constant_series():
    assert episodes_to_plateau([5.0] * 30) == 1


def test_plateau_ramp_then_flat_knee():
    knee = 20
    series = [100.0 * min(1.0, i / knee) for i in range(1, 61)]
    got = episodes_to_plateau(series)
    assert abs(got - knee) <= 2


def test_plateau_rejects_empty():
    with pytest.raises(ValueError):
        episodes_to_plateau([])


def test_export_summary_matches_reaggregation(tmp_path):
    cfg = small_cfg(tmp_path / "s", episodes=3, steps=120)
    summary = cmd_train(cfg, mode="attack")
    out = Path(cfg.outdir)

    waits, injected = [], []
    with open(out / "episodes.csv") as fh:
        for row in csv.DictReader(fh):
            waits.append(float(row["total_waiting_time"]))
            injected.append(int(row["vehicles_injected"]))
    per_step_injected = 0
    actions = {}
    with open(out / "steps.csv") as fh:
        for row in csv.DictReader(fh):
            per_step_injected += int(row["injected"])
            a = int(row["action"])
            actions[a] = actions.get(a, 0) + 1
    assert summary["total_injected"] == sum(injected) == per_step_injected
    tail = min(10, len(waits))
    assert summary["converged_total_waiting"] == \
        pytest.approx(sum(waits[-tail:]) / tail)
    best = max(actions.values())
    assert summary["most_frequent_action"] == \
        min(a for a, c in actions.items() if c == best)


def test_export_summary_enumerates_missing_files(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(FileNotFoundError, match="episodes.csv"):
        export_summary(tmp_path / "empty")
