"""Fake-vehicle injection, non-interference removal, threshold calibration.

The attacker's action space maps action indices to sybil insertions at the
approach entries. A sybil is just a broadcast: it must imitate a law-abiding
vehicle, so once its simulated deceleration exceeds the removal threshold
(the signature of braking for a light or a queue rather than holding speed)
it is deleted before it can visibly sit in traffic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .simcore import (Light, Movement, SimState, Vehicle, VehicleKind,
                      _entry_lane, _place, _spawn_speed)

# action index -> movements receiving one sybil each at their entry
ACTION_TABLE: dict[int, tuple[Movement, ...]] = {
    0: (),
    1: (Movement.WBT,),
    2: (Movement.EBT,),
    3: (Movement.SBT,),
    4: (Movement.NBT,),
    5: (Movement.WBT, Movement.EBT),
    6: (Movement.SBT, Movement.NBT),
    7: (Movement.WBL,),
    8: (Movement.EBL,),
    9: (Movement.SBL,),
    10: (Movement.NBL,),
}

N_ACTIONS = len(ACTION_TABLE)
BASELINE_N_ACTIONS = 7  # the comparison agent never injects into left turns


def action_size(action: int) -> int:
    """Vehicles a given action attempts to inject (0, 1 or 2)."""
    return len(ACTION_TABLE[action])


@dataclass
class RemovalPolicy:
    threshold: float = 1.0174   # |deceleration| bound, m/s^2
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


def inject(action: int, state: SimState) -> tuple[int, int]:
    """Execute one action: returns (attempted, skipped) sybil counts.

    A blocked entry wastes the broadcast: the insertion is skipped and
    counted, never queued for later.
    """
    if action not in ACTION_TABLE:
        raise ValueError(f"action must be in 0..{N_ACTIONS - 1}, got {action}")
    attempted = 0
    skipped = 0
    for movement in ACTION_TABLE[action]:
        attempted += 1
        key = _entry_lane(state, movement, VehicleKind.SYBIL)
        speed = _spawn_speed(state, key, VehicleKind.SYBIL)
        if speed is None:
            skipped += 1
            state.counters["skipped"] += 1
            continue
        _place(state, movement, VehicleKind.SYBIL, key, speed)
        state.counters["injected"] += 1
    return attempted, skipped


def removal_check(vehicle: Vehicle, policy: RemovalPolicy) -> bool:
    """True when a sybil must be removed: it is decelerating harder than the
    calibrated free-flow bound. Real vehicles are never candidates."""
    if vehicle.kind is not VehicleKind.SYBIL:
        return False
    if not policy.enabled:
        return False
    return vehicle.accel < 0.0 and -vehicle.accel > policy.threshold


def apply_removals(state: SimState, policy: RemovalPolicy) -> int:
    """Run the removal check across all sybils after a kinematics step."""
    removed = 0
    for lane in state.lanes.values():
        kept = []
        for veh in lane:
            if removal_check(veh, policy):
                removed += 1
                state.counters["removed"] += 1
            else:
                kept.append(veh)
        lane[:] = kept
    return removed


@dataclass
class CalibrationSample:
    step: int
    vehicle_id: int
    accel: float
    green: bool
    free_leader: bool


@dataclass
class CalibrationTrace:
    samples: list[CalibrationSample] = field(default_factory=list)

    def record(self, step: int, vehicle_id: int, accel: float,
               green: bool, free_leader: bool) -> None:
        self.samples.append(CalibrationSample(step, vehicle_id, accel,
                                              green, free_leader))

    def isolated(self) -> list[CalibrationSample]:
        """Free-flow subset: green light and nothing visible in front."""
        return [s for s in self.samples if s.green and s.free_leader]


def collect_calibration_samples(state: SimState, trace: CalibrationTrace,
                                signal) -> None:
    """Log every sybil's acceleration for this step, tagged with the light
    it saw and whether its lookahead was clear. Call after kinematics."""
    cfg = state.config
    for key, lane in state.lanes.items():
        for i, veh in enumerate(lane):
            if veh.kind is not VehicleKind.SYBIL:
                continue
            if veh.position >= cfg.lane_length:
                continue
            light = signal.light_for(veh.movement)
            leader = state.visible_leader(lane, i, veh)
            free = leader is None or \
                (leader.position - leader.length - veh.position) > cfg.free_leader_range
            trace.record(state.clock, veh.id, veh.accel,
                         light is Light.GREEN, free)


def nearest_rank_percentile(values: list[float], tail: float) -> float:
    """Value v such that a fraction (1 - tail) of the samples are <= v,
    using the nearest-rank rule (always an actual sample)."""
    if not values:
        raise ValueError("no samples")
    if not (0.0 < tail < 1.0):
        raise ValueError("tail fraction must be in (0, 1)")
    ordered = sorted(values)
    n = len(ordered)
    rank = math.ceil((1.0 - tail) * n - 1e-12)
    rank = min(n, max(1, rank))
    return ordered[rank - 1]


def calibrate_threshold(trace: CalibrationTrace, percentile: float = 0.05) -> float:
    """Deceleration magnitude exceeded by only ``percentile`` of free-flow
    braking samples; sybils decelerating harder than this are not merely
    holding speed."""
    decels = [-s.accel for s in trace.isolated() if s.accel < 0.0]
    if not decels:
        raise ValueError(
            "calibration trace has no free-flow deceleration samples; "
            "run a longer calibration episode or raise the injection rate")
    return nearest_rank_percentile(decels, percentile)
