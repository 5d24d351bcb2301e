"""Ghost mode: the physically faithful reading of a fake broadcast.

A sybil is only a message. Real drivers cannot see it, so in ghost mode
real vehicles never follow a sybil, and with a fixed-time signal (so the
controller cannot react either) the real traffic must evolve bit-identically
whether the attacker broadcasts or not. This script runs both worlds for
1000 steps and compares a hash of every real vehicle's kinematic state at
every step.
"""
from sybilsim.config import SimConfig
from sybilsim import sybil
from sybilsim.atsc import FixedTimeController
from sybilsim.simcore import (DemandSchedule, attach_demand, build_network,
                              real_state_digest, spawn_real_traffic, step)


def run(inject: bool):
    cfg = SimConfig(interference_mode="ghost")
    state = build_network(cfg, seed=31)
    attach_demand(state, DemandSchedule(cfg.demand, 1000, 37))
    signal = FixedTimeController([30.0, 20.0, 30.0, 20.0])
    policy = sybil.RemovalPolicy(1.0174)
    digests = []
    for t in range(1000):
        spawn_real_traffic(state)
        if inject:
            sybil.inject(1 + (t % 10), state)
        step(state, signal)
        sybil.apply_removals(state, policy)
        signal.tick(state, 1.0)
        digests.append(real_state_digest(state))
    return digests


clean = run(False)
attacked = run(True)
same = sum(1 for a, b in zip(clean, attacked) if a == b)
print(f"steps compared: {len(clean)}")
print(f"identical real-traffic states: {same}")
print("isolation holds" if same == len(clean) else "ISOLATION VIOLATED")
