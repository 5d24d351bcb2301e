"""Training the attacking agent end to end.

Runs a shortened campaign (20 episodes by default; pass --full for the
paper-scale 100 x 1000) and prints the headline numbers afterwards. The
full campaign is what the acceptance suite measures; this demo is for
watching the loop work.

Outputs (per-episode CSV, per-step CSV, weight snapshots, summary.json) land
in a temporary run directory printed at the end.
"""
import sys
import tempfile

from sybilsim.config import RunConfig
from sybilsim.harness import cmd_noattack, cmd_train

full = "--full" in sys.argv

cfg = RunConfig()
cfg.outdir = tempfile.mkdtemp(prefix="sybilsim_train_")
if not full:
    cfg.agent.episodes = 20

base_cfg = RunConfig()
base_cfg.outdir = tempfile.mkdtemp(prefix="sybilsim_noattack_")
baseline = cmd_noattack(base_cfg)
print(f"no-attack episode total: {baseline['total_waiting_time']:.0f} veh*s\n")

summary = cmd_train(cfg, mode="attack")
ratio = summary["converged_total_waiting"] / baseline["total_waiting_time"]
print(f"\nepisodes:             {summary['episodes']}")
print(f"converged waiting:    {summary['converged_total_waiting']:.0f} veh*s "
      f"({ratio:.2f}x the no-attack episode)")
print(f"episode-1 injections: {summary['first_episode_injected']}")
print(f"converged injections: {summary['converged_injections']:.0f}")
print(f"most frequent action: {summary['most_frequent_action']}")
print(f"plateau at episode:   {summary['episodes_to_plateau']}")
print(f"wall clock:           {summary['wall_clock_s']:.0f} s")
print(f"run directory:        {cfg.outdir}")
