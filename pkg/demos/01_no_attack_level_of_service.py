"""Baseline behavior of the adaptive controller without any attack.

Runs one 1000-step episode at the default demand and prints the
per-movement average waiting time per vehicle. Every movement should come
in well under 10 seconds: the intersection operates at level of service A,
which is the precondition for the attack experiments to mean anything.
"""
from sybilsim.config import RunConfig
from sybilsim.dqn import EpisodeSetup, run_episode
from sybilsim.harness import los_table

cfg = RunConfig()
setup = EpisodeSetup(cfg.sim, cfg.controller, cfg.removal, cfg.agent)
metrics = run_episode(None, setup, seed=1, episode_index=0, learn=False)

print(f"episode total waiting: {metrics.total_waiting_time:.0f} veh*s")
print(f"{'movement':>8}  {'vehicles':>8}  {'avg wait (s)':>12}")
for name, n, _, avg in los_table(metrics):
    print(f"{name:>8}  {n:>8}  {avg:>12.2f}")
worst = max(avg for _, _, _, avg in los_table(metrics))
print(f"\nworst movement: {worst:.2f} s  ({'LOS A' if worst < 10 else 'degraded'})")
