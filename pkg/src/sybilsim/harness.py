"""Experiment orchestration: the noattack / calibrate / train commands,
CSV and JSON exports, and the run-summary aggregation.

Every command persists its exact RunConfig next to its outputs and writes
only seed-derived content into CSVs, so re-executing a persisted config
reproduces the files byte for byte.
"""
from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np

from . import dqn, numerics, sybil
from .atsc import SignalState
from .config import RunConfig, MOVEMENT_NAMES, save_config
from .dqn import Agent, EpisodeSetup, EpisodeMetrics, derive_seed, run_episode
from .simcore import (DemandSchedule, attach_demand, build_network,
                      spawn_real_traffic, step)

EPISODE_COLUMNS = ["episode", "total_waiting_time", "vehicles_injected",
                   "skipped_injections", "removals", "mean_reward", "epsilon_end"]
STEP_COLUMNS = ["episode", "step", "action", "reward", "epsilon", "injected",
                "skipped", "removed", "total_waiting", "n_halted", "n_moving",
                "phase", "yellow"]
MOVEMENT_COLUMNS = ["step"] + [f"wait_{m}" for m in MOVEMENT_NAMES] \
    + [f"acc_{m}" for m in MOVEMENT_NAMES]
LOS_COLUMNS = ["movement", "vehicles", "wait_seconds", "avg_wait_per_vehicle"]
TRACE_COLUMNS = ["step", "vehicle_id", "accel", "green", "free_leader"]


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _setup(cfg: RunConfig, baseline: bool = False) -> EpisodeSetup:
    return EpisodeSetup(cfg.sim, cfg.controller, cfg.removal, cfg.agent,
                        baseline=baseline)


def _prepare_outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.ini")
    return out


def _episode_row(m: EpisodeMetrics) -> list:
    return [m.episode, m.total_waiting_time, m.vehicles_injected,
            m.skipped_injections, m.removals, m.mean_reward, m.epsilon_end]


def _step_rows(m: EpisodeMetrics):
    for row in m.steps:
        yield [m.episode, row["step"], row["action"], row["reward"],
               row["epsilon"], row["injected"], row["skipped"], row["removed"],
               row["total_waiting"], row["n_halted"], row["n_moving"],
               row["phase"], row["yellow"]]


def _movement_rows(m: EpisodeMetrics):
    for t, (wait_row, acc_row) in enumerate(zip(m.movement_wait,
                                                m.movement_accumulated)):
        yield [t, *wait_row, *acc_row]


def write_episode_outputs(out: Path, episodes: list[EpisodeMetrics],
                          final_series: bool = True) -> None:
    _write_csv(out / "episodes.csv", EPISODE_COLUMNS,
               (_episode_row(m) for m in episodes))
    with open(out / "steps.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STEP_COLUMNS)
        for m in episodes:
            writer.writerows(_step_rows(m))
    if final_series and episodes:
        last = episodes[-1]
        _write_csv(out / f"movements_ep{last.episode}.csv", MOVEMENT_COLUMNS,
                   _movement_rows(last))


# -- no-attack ----------------------------------------------------------------


def los_table(metrics: EpisodeMetrics) -> list[tuple[str, int, float, float]]:
    """Per-movement (vehicles, waited seconds, average wait per vehicle)."""
    rows = []
    for name in MOVEMENT_NAMES:
        n = metrics.vehicles_seen_by_movement.get(name, 0)
        waited = metrics.wait_seconds_by_movement.get(name, 0.0)
        avg = waited / n if n > 0 else 0.0
        rows.append((name, n, waited, avg))
    return rows


def cmd_noattack(cfg: RunConfig) -> dict:
    """One episode with injections disabled; exports the per-movement
    level-of-service table and the movement time series."""
    cfg.validate()
    out = _prepare_outdir(cfg)
    metrics = run_episode(None, _setup(cfg), cfg.seed, 0, learn=False)
    write_episode_outputs(out, [metrics])
    table = los_table(metrics)
    _write_csv(out / "los.csv", LOS_COLUMNS, table)
    result = {
        "label": cfg.label,
        "total_waiting_time": metrics.total_waiting_time,
        "avg_wait_per_vehicle": {name: avg for name, _, _, avg in table},
        "max_avg_wait": max(avg for _, _, _, avg in table),
    }
    (out / "noattack.json").write_text(json.dumps(result, indent=2, sort_keys=True))
    return result


# -- calibration ----------------------------------------------------------------


def cmd_calibrate(cfg: RunConfig, injection_period: int = 2) -> dict:
    """Injection-heavy episode with removal disabled; returns the free-flow
    deceleration threshold and writes the trace and histogram CSVs."""
    cfg.validate()
    out = _prepare_outdir(cfg)
    sim_cfg = cfg.sim
    state = build_network(sim_cfg, seed=derive_seed(cfg.seed, 1))
    attach_demand(state, DemandSchedule(sim_cfg.demand, cfg.agent.steps,
                                        derive_seed(cfg.seed, 2), dt=sim_cfg.dt))
    signal = SignalState(cfg.controller)
    trace = sybil.CalibrationTrace()
    action_cycle = [1, 2, 3, 4, 7, 8, 9, 10]
    for t in range(cfg.agent.steps):
        spawn_real_traffic(state)
        if t % injection_period == 0:
            sybil.inject(action_cycle[(t // injection_period) % len(action_cycle)],
                         state)
        step(state, signal, sim_cfg.dt)
        sybil.collect_calibration_samples(state, trace, signal)
        signal.tick(state, sim_cfg.dt)

    threshold = sybil.calibrate_threshold(trace, cfg.removal.percentile)
    _write_csv(out / "calibration_trace.csv", TRACE_COLUMNS,
               ((s.step, s.vehicle_id, s.accel, int(s.green), int(s.free_leader))
                for s in trace.samples))
    _write_hist(out / "calibration_hist.csv", trace)
    isolated = trace.isolated()
    result = {
        "threshold": threshold,
        "percentile": cfg.removal.percentile,
        "samples_raw": len(trace.samples),
        "samples_isolated": len(isolated),
        "samples_decel": sum(1 for s in isolated if s.accel < 0),
    }
    (out / "threshold.json").write_text(json.dumps(result, indent=2, sort_keys=True))
    calibrated = RunConfig(cfg.sim, cfg.controller, cfg.removal, cfg.agent,
                           cfg.seed, cfg.outdir, cfg.label)
    calibrated.removal.threshold = threshold
    save_config(calibrated, out / "config_calibrated.ini")
    return result


def _write_hist(path: Path, trace: sybil.CalibrationTrace, bins: int = 60) -> None:
    raw = np.array([s.accel for s in trace.samples])
    iso = np.array([s.accel for s in trace.isolated()])
    if raw.size == 0:
        _write_csv(path, ["bin_lo", "bin_hi", "raw_count", "isolated_count"], [])
        return
    lo = float(min(raw.min(), iso.min() if iso.size else 0.0))
    hi = float(max(raw.max(), iso.max() if iso.size else 0.0))
    edges = np.linspace(lo, hi, bins + 1)
    raw_counts, _ = np.histogram(raw, bins=edges)
    iso_counts, _ = np.histogram(iso, bins=edges) if iso.size else (np.zeros(bins, int), None)
    rows = [(edges[i], edges[i + 1], int(raw_counts[i]), int(iso_counts[i]))
            for i in range(bins)]
    _write_csv(path, ["bin_lo", "bin_hi", "raw_count", "isolated_count"], rows)


# -- training campaigns ---------------------------------------------------------


def cmd_train(cfg: RunConfig, mode: str = "attack",
              resume: bool = False) -> dict:
    """The full campaign (episodes x steps, paper defaults 100 x 1000).

    ``mode`` is "attack" or "baseline". Writes per-episode and per-step CSVs,
    the final episode's movement series, weight snapshots and summary.json.
    """
    cfg.validate()
    if mode not in ("attack", "baseline"):
        raise ValueError(f"mode must be 'attack' or 'baseline', got {mode!r}")
    baseline = mode == "baseline"
    out = _prepare_outdir(cfg)
    setup = _setup(cfg, baseline=baseline)
    n_actions = sybil.BASELINE_N_ACTIONS if baseline else sybil.N_ACTIONS
    agent = Agent(cfg.agent, n_actions, seed=derive_seed(cfg.seed, 17))

    start_episode = 0
    episodes: list[EpisodeMetrics] = []
    ckpt = out / "checkpoint.npz"
    if resume and ckpt.exists():
        start_episode = _load_checkpoint(ckpt, agent)
        episodes = _reload_episode_metrics(out, start_episode)

    t0 = time.perf_counter()
    for ep in range(start_episode, cfg.agent.episodes):
        metrics = run_episode(agent, setup, cfg.seed, ep)
        episodes.append(metrics)
        if cfg.agent.snapshot_every > 0 and (ep + 1) % cfg.agent.snapshot_every == 0:
            numerics.save_params(out / f"weights_ep{ep + 1}.npz", agent.params)
            _save_checkpoint(ckpt, agent, ep + 1)
    wall_clock = time.perf_counter() - t0

    numerics.save_params(out / "weights_final.npz", agent.params)
    write_episode_outputs(out, episodes)
    summary = export_summary(out)
    summary["wall_clock_s"] = wall_clock
    summary["mode"] = mode
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def _save_checkpoint(path: Path, agent: Agent, next_episode: int) -> None:
    payload = {"next_episode": np.array(next_episode),
               "adam_step": np.array(agent.adam.step),
               "layer_sizes": np.array(agent.params.layer_sizes)}
    for i, (w, b) in enumerate(zip(agent.params.weights, agent.params.biases)):
        payload[f"w{i}"] = w
        payload[f"b{i}"] = b
        payload[f"mw{i}"] = agent.adam.m_w[i]
        payload[f"vw{i}"] = agent.adam.v_w[i]
        payload[f"mb{i}"] = agent.adam.m_b[i]
        payload[f"vb{i}"] = agent.adam.v_b[i]
    for key, arr in agent.buffer.snapshot_arrays().items():
        payload[f"buf_{key}"] = arr
    np.savez(path, **payload)


def _load_checkpoint(path: Path, agent: Agent) -> int:
    with np.load(path) as data:
        n_layers = len(data["layer_sizes"]) - 1
        for i in range(n_layers):
            agent.params.weights[i] = data[f"w{i}"]
            agent.params.biases[i] = data[f"b{i}"]
            agent.adam.m_w[i] = data[f"mw{i}"]
            agent.adam.v_w[i] = data[f"vw{i}"]
            agent.adam.m_b[i] = data[f"mb{i}"]
            agent.adam.v_b[i] = data[f"vb{i}"]
        agent.adam.step = int(data["adam_step"])
        arrays = {key[len("buf_"):]: data[key]
                  for key in data.files if key.startswith("buf_")}
        agent.buffer = dqn.ReplayBuffer.from_arrays(arrays, agent.cfg.replay_capacity)
        if agent.target_params is not None:
            agent.target_params = agent.params.copy()
        return int(data["next_episode"])


def _reload_episode_metrics(out: Path, upto: int) -> list[EpisodeMetrics]:
    """Rebuild headline EpisodeMetrics (totals only) from a previous run's
    CSV so a resumed campaign still exports the full episode table."""
    path = out / "episodes.csv"
    if not path.exists():
        return []
    episodes = []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            ep = int(row["episode"])
            if ep >= upto:
                break
            m = EpisodeMetrics(episode=ep)
            m.total_waiting_time = float(row["total_waiting_time"])
            m.vehicles_injected = int(row["vehicles_injected"])
            m.skipped_injections = int(row["skipped_injections"])
            m.removals = int(row["removals"])
            m.mean_reward = float(row["mean_reward"])
            m.epsilon_end = float(row["epsilon_end"])
            episodes.append(m)
    # per-step rows of finished episodes are reloaded for steps.csv rewrite
    steps_path = out / "steps.csv"
    if steps_path.exists():
        by_ep: dict[int, list[dict]] = {m.episode: [] for m in episodes}
        with open(steps_path) as fh:
            for row in csv.DictReader(fh):
                ep = int(row["episode"])
                if ep in by_ep:
                    by_ep[ep].append({
                        "step": int(row["step"]), "action": int(row["action"]),
                        "reward": float(row["reward"]),
                        "epsilon": float(row["epsilon"]),
                        "injected": int(row["injected"]),
                        "skipped": int(row["skipped"]),
                        "removed": int(row["removed"]),
                        "total_waiting": float(row["total_waiting"]),
                        "n_halted": int(row["n_halted"]),
                        "n_moving": int(row["n_moving"]),
                        "phase": int(row["phase"]), "yellow": int(row["yellow"]),
                    })
        for m in episodes:
            m.steps = by_ep.get(m.episode, [])
    return episodes


# -- summary --------------------------------------------------------------------


def moving_average(series: list[float], window: int = 5) -> list[float]:
    """Trailing mean, expanding over the first ``window - 1`` points."""
    out = []
    for i in range(len(series)):
        lo = max(0, i - window + 1)
        chunk = series[lo:i + 1]
        out.append(sum(chunk) / len(chunk))
    return out


def episodes_to_plateau(series: list[float], window: int = 5,
                        tol: float = 0.10) -> int:
    """First episode (1-based) whose trailing moving average reaches within
    ``tol`` of the converged value (the mean of the last 10 episodes, the
    same definition the summary reports)."""
    if not series:
        raise ValueError("empty series")
    ma = moving_average(series, window)
    tail = min(10, len(series))
    final = sum(series[-tail:]) / tail
    band = tol * abs(final) if final != 0 else 1e-12
    for i, value in enumerate(ma):
        if abs(value - final) <= band:
            return i + 1
    return len(ma)


def export_summary(run_dir: str | Path) -> dict:
    """Headline numbers recomputed from the run's CSVs."""
    run_dir = Path(run_dir)
    missing = [name for name in ("episodes.csv", "steps.csv")
               if not (run_dir / name).exists()]
    if missing:
        raise FileNotFoundError(f"run dir {run_dir} is missing: {', '.join(missing)}")

    waiting, injected, skipped, removed, rewards = [], [], [], [], []
    with open(run_dir / "episodes.csv") as fh:
        for row in csv.DictReader(fh):
            waiting.append(float(row["total_waiting_time"]))
            injected.append(int(row["vehicles_injected"]))
            skipped.append(int(row["skipped_injections"]))
            removed.append(int(row["removals"]))
            rewards.append(float(row["mean_reward"]))
    action_counts: dict[int, int] = {}
    n_steps = 0
    step_episodes = set()
    with open(run_dir / "steps.csv") as fh:
        for row in csv.DictReader(fh):
            a = int(row["action"])
            action_counts[a] = action_counts.get(a, 0) + 1
            n_steps += 1
            step_episodes.add(int(row["episode"]))

    tail = min(10, len(waiting))
    most_frequent = min((a for a, c in action_counts.items()
                         if c == max(action_counts.values())), default=0)
    return {
        "episodes": len(waiting),
        "steps_per_episode": n_steps // max(1, len(step_episodes)),
        "converged_total_waiting": sum(waiting[-tail:]) / tail,
        "mean_reward_last10": sum(rewards[-tail:]) / tail,
        "total_injected": sum(injected),
        "total_skipped": sum(skipped),
        "total_removed": sum(removed),
        "first_episode_injected": injected[0] if injected else 0,
        "converged_injections": sum(injected[-tail:]) / tail,
        "most_frequent_action": most_frequent,
        "episodes_to_plateau": episodes_to_plateau(waiting),
    }
