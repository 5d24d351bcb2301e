"""Anatomy of the attack, without any learning.

Injecting one sybil per step at the northbound-through entry (action 4)
smothers that movement's priority: the controller ranks movements by
average waiting per vehicle, and a stream of slow fake vehicles inflates
the movement's vehicle count while contributing almost no waiting. The
real queue behind the phantoms then loses review after review.

This script compares the no-attack episode with a constant action-4
episode and prints the waiting-time ratio and sybil bookkeeping.
"""
from sybilsim.config import RunConfig
from sybilsim.dqn import EpisodeSetup, run_episode
from sybilsim.harness import los_table

cfg = RunConfig()
setup = EpisodeSetup(cfg.sim, cfg.controller, cfg.removal, cfg.agent)

base = run_episode(None, setup, seed=1, episode_index=0, learn=False)
attack = run_episode(None, setup, seed=1, episode_index=0, learn=False,
                     forced_action=4)

print(f"no attack:  total waiting {base.total_waiting_time:9.0f} veh*s")
print(f"action 4:   total waiting {attack.total_waiting_time:9.0f} veh*s "
      f"({attack.total_waiting_time / base.total_waiting_time:.2f}x)")
print(f"sybils placed {attack.vehicles_injected}, broadcasts wasted on "
      f"blocked entries {attack.skipped_injections}, removed by the "
      f"deceleration threshold {attack.removals}")

print("\nper-movement average wait (s), no-attack vs attack:")
for (name, _, _, avg0), (_, _, _, avg1) in zip(los_table(base),
                                               los_table(attack)):
    print(f"  {name}: {avg0:6.2f} -> {avg1:7.2f}")
