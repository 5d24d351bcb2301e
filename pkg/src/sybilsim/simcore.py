"""Discrete-time microsimulation of the subject four-way intersection.

One 1-D track per lane: position 0 at the approach entry, the stop line at
``lane_length``, despawn past ``lane_length + exit_length``. Twelve lanes
(four approaches x {left, through, shared through/right}) feed eight signal
movements; right turns ride the shared lane and are treated as through
traffic.

Real vehicles and sybil vehicles share the same kinematics. Interference
between the two populations depends on the mode:

* ``paper`` - sybils act as car-following leaders for everyone (the mode the
  removal threshold exists to tame);
* ``ghost`` - real vehicles never see sybils, which is the physically
  faithful model of a fake broadcast.

All randomness is derived: demand comes from a seeded generator attached to
the state, and cruise speed jitter is a pure hash of (seed, vehicle id,
step), so a vehicle's trajectory is a function of things it can see.
"""
from __future__ import annotations

import enum
import hashlib
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig, MOVEMENT_NAMES

SYBIL_ID_BASE = 10_000_000  # real and sybil ids come from disjoint ranges


class Movement(enum.IntEnum):
    """The eight signalized traffic streams, in tie-breaking order."""

    EBT = 0
    EBL = 1
    WBT = 2
    WBL = 3
    NBT = 4
    NBL = 5
    SBT = 6
    SBL = 7

    @property
    def approach(self) -> str:
        # Approaches are labeled by travel direction: EBT/EBL arrive on E.
        return self.name[0]

    @property
    def is_left(self) -> bool:
        return self.name.endswith("L")


APPROACHES = ("E", "W", "N", "S")


class LaneClass(enum.Enum):
    LEFT_ONLY = "left"
    THROUGH_ONLY = "through"
    THROUGH_RIGHT_SHARED = "shared"


THROUGH_LANES = (LaneClass.THROUGH_ONLY, LaneClass.THROUGH_RIGHT_SHARED)

LaneKey = tuple[str, LaneClass]


def lanes_for_movement(movement: Movement) -> tuple[LaneKey, ...]:
    if movement.is_left:
        return ((movement.approach, LaneClass.LEFT_ONLY),)
    return tuple((movement.approach, lc) for lc in THROUGH_LANES)


def movement_for_lane(key: LaneKey) -> Movement:
    approach, lane_class = key
    suffix = "L" if lane_class is LaneClass.LEFT_ONLY else "T"
    return Movement[f"{approach}B{suffix}"]


class Light(enum.Enum):
    GREEN = "G"
    YELLOW = "y"
    RED = "r"


@dataclass
class LaneGeometry:
    approach: str
    lane_class: LaneClass
    length: float
    speed_limit: float


@dataclass
class SignalView:
    """What a driver can see of the signal: the light for its movement and
    the distance from the lane entry to the stop line."""

    light: Light
    stop_line: float


class VehicleKind(enum.Enum):
    REAL = "real"
    SYBIL = "sybil"


class Vehicle:
    """A single simulated vehicle on one lane track."""

    __slots__ = ("id", "kind", "movement", "lane", "position", "speed",
                 "accel", "length", "v_max", "waiting_time", "wait_history",
                 "spawn_step")

    def __init__(self, vid: int, kind: VehicleKind, movement: Movement,
                 lane: LaneKey, position: float, speed: float, length: float,
                 v_max: float, spawn_step: int):
        self.id = vid
        self.kind = kind
        self.movement = movement
        self.lane = lane
        self.position = position
        self.speed = speed
        self.accel = 0.0
        self.length = length
        self.v_max = v_max          # personal cruise cap, <= lane speed limit
        self.waiting_time = 0.0
        self.wait_history: deque[tuple[float, float]] = deque()  # (time, waited)
        self.spawn_step = spawn_step

    def __repr__(self) -> str:  # debugging aid only
        return (f"Vehicle({self.id}, {self.kind.value}, {self.movement.name}, "
                f"pos={self.position:.2f}, v={self.speed:.2f})")


@dataclass
class DemandSchedule:
    """Per-movement Poisson arrivals, pre-drawn for the whole horizon."""

    rates: dict[str, float]          # vehicles/hour per movement name
    horizon: int                     # steps
    rng_seed: int
    dt: float = 1.0
    arrivals: dict[Movement, np.ndarray] = field(init=False)

    def __post_init__(self) -> None:
        rng = np.random.Generator(np.random.PCG64(self.rng_seed))
        self.arrivals = {}
        for name in MOVEMENT_NAMES:
            per_step = self.rates.get(name, 0.0) / 3600.0 * self.dt
            self.arrivals[Movement[name]] = rng.poisson(per_step, size=self.horizon)

    def due(self, step: int, movement: Movement) -> int:
        if step >= self.horizon:
            return 0
        return int(self.arrivals[movement][step])


class SimState:
    """Mutable world state: the clock, twelve lanes of vehicles, counters."""

    def __init__(self, config: SimConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.seed = seed
        self.clock = 0                        # step counter
        self.lanes: dict[LaneKey, list[Vehicle]] = {}
        self.geometry: dict[LaneKey, LaneGeometry] = {}
        for approach in APPROACHES:
            for lane_class in (LaneClass.LEFT_ONLY, LaneClass.THROUGH_ONLY,
                               LaneClass.THROUGH_RIGHT_SHARED):
                key = (approach, lane_class)
                self.lanes[key] = []
                self.geometry[key] = LaneGeometry(
                    approach, lane_class, config.lane_length, config.speed_limit)
        self.pending: dict[Movement, int] = {m: 0 for m in Movement}
        self.schedule: DemandSchedule | None = None
        self._next_real_id = 0
        self._next_sybil_id = SYBIL_ID_BASE
        self._lane_bias_acc = {m: 0.0 for m in Movement}
        # per-episode bookkeeping read by the harness
        self.counters = {"spawned": 0, "injected": 0, "skipped": 0,
                         "removed": 0, "sybil_despawned": 0}

    # -- time ---------------------------------------------------------------

    @property
    def time(self) -> float:
        return self.clock * self.config.dt

    # -- vehicle queries ----------------------------------------------------

    def all_vehicles(self):
        for key in self.lanes:
            yield from self.lanes[key]

    def vehicles_on_movement(self, movement: Movement, upstream_only: bool = True):
        stop_line = self.config.lane_length
        for key in lanes_for_movement(movement):
            for veh in self.lanes[key]:
                if not upstream_only or veh.position < stop_line:
                    yield veh

    def visible_leader(self, lane: list[Vehicle], index: int,
                       follower: Vehicle) -> Vehicle | None:
        """Nearest vehicle ahead of ``lane[index]`` that the follower can see.

        Lanes are kept sorted by position descending, so candidates are at
        smaller indices. Ghost mode hides sybils from real vehicles.
        """
        ghost = self.config.interference_mode == "ghost"
        for j in range(index - 1, -1, -1):
            cand = lane[j]
            if ghost and follower.kind is VehicleKind.REAL \
                    and cand.kind is VehicleKind.SYBIL:
                continue
            return cand
        return None

    def _lane_tail(self, key: LaneKey, observer_kind: VehicleKind) -> Vehicle | None:
        """Rearmost vehicle the observer can see on a lane (for spawn checks)."""
        ghost = self.config.interference_mode == "ghost"
        lane = self.lanes[key]
        for veh in reversed(lane):
            if ghost and observer_kind is VehicleKind.REAL \
                    and veh.kind is VehicleKind.SYBIL:
                continue
            return veh
        return None

    def _insert_sorted(self, key: LaneKey, veh: Vehicle) -> None:
        lane = self.lanes[key]
        i = len(lane)
        while i > 0 and lane[i - 1].position < veh.position:
            i -= 1
        lane.insert(i, veh)


# -- deterministic per-vehicle jitter ----------------------------------------

_M64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def speed_jitter(seed: int, vehicle_id: int, step: int, half_width: float) -> float:
    """Zero-mean uniform speed noise in [-half_width, +half_width].

    A pure hash of (seed, vehicle id, step): one vehicle's draw never depends
    on how many other vehicles exist, which is what keeps ghost-mode real
    trajectories independent of injections.
    """
    h = _splitmix64(_splitmix64(seed & _M64) ^ (vehicle_id * 0x9E3779B97F4A7C15 & _M64))
    h = _splitmix64(h ^ (step & _M64))
    u = h / float(1 << 64)
    return (2.0 * u - 1.0) * half_width


# -- construction -------------------------------------------------------------


def build_network(config: SimConfig, seed: int = 0) -> SimState:
    """Empty network: 4 approaches x 3 lanes around the subject intersection."""
    return SimState(config, seed=seed)


def attach_demand(state: SimState, schedule: DemandSchedule) -> None:
    state.schedule = schedule


# -- spawning -----------------------------------------------------------------


def _cruise_cap(config: SimConfig, kind: VehicleKind) -> float:
    if kind is VehicleKind.SYBIL:
        return config.sybil_speed_factor * config.speed_limit
    return config.speed_limit


def _spawn_speed(state: SimState, key: LaneKey, kind: VehicleKind) -> float | None:
    """Feasible entry speed on a lane, or None when the entry is blocked.

    Real vehicles are physical: they may enter slowly behind a moving tail
    but defer when there is no room. A sybil is a broadcast that must look
    like free-flowing traffic, so it only appears at near its cruise speed.
    """
    cfg = state.config
    tail = state._lane_tail(key, kind)
    v_max = _cruise_cap(cfg, kind)
    if tail is None:
        return v_max
    gap = tail.position - tail.length - 0.0 - cfg.min_gap
    if gap <= 0.0:
        return None
    v_safe = krauss_safe_speed(gap, tail.speed, cfg.decel_max, cfg.headway)
    v = min(v_max, v_safe)
    if kind is VehicleKind.SYBIL:
        return v if v >= 0.8 * v_max else None
    return v if v >= 1.0 else None


def _place(state: SimState, movement: Movement, kind: VehicleKind,
           key: LaneKey, speed: float) -> Vehicle:
    if kind is VehicleKind.REAL:
        vid = state._next_real_id
        state._next_real_id += 1
    else:
        vid = state._next_sybil_id
        state._next_sybil_id += 1
    veh = Vehicle(vid, kind, movement, key, 0.0, speed,
                  state.config.vehicle_length, _cruise_cap(state.config, kind),
                  state.clock)
    state._insert_sorted(key, veh)
    return veh


def _entry_lane(state: SimState, movement: Movement, kind: VehicleKind) -> LaneKey:
    """Entry lane for a new vehicle.

    Real through traffic favors the dedicated through lane over the shared
    through/right lane (``through_lane_bias``, error-diffused so the split is
    exact and deterministic). A sybil picks whichever through-capable lane
    currently holds fewer vehicles: the attacker wants its broadcasts to look
    like smoothly flowing traffic, and the thin lane is where that is
    plausible.
    """
    keys = lanes_for_movement(movement)
    if len(keys) == 1:
        return keys[0]
    through, shared = keys
    if kind is VehicleKind.SYBIL:
        return shared if len(state.lanes[shared]) <= len(state.lanes[through]) \
            else through
    acc = state._lane_bias_acc[movement] + state.config.through_lane_bias
    return through if acc >= 1.0 else shared


def _commit_entry_lane(state: SimState, movement: Movement,
                       kind: VehicleKind) -> None:
    """Advance the lane split accumulator after a successful real spawn."""
    if kind is not VehicleKind.REAL:
        return
    if len(lanes_for_movement(movement)) == 1:
        return
    acc = state._lane_bias_acc[movement] + state.config.through_lane_bias
    state._lane_bias_acc[movement] = acc - 1.0 if acc >= 1.0 else acc


def spawn_real_traffic(state: SimState) -> int:
    """Place this step's due arrivals; blocked ones defer, never drop."""
    if state.schedule is None:
        return 0
    spawned = 0
    for movement in Movement:
        state.pending[movement] += state.schedule.due(state.clock, movement)
        while state.pending[movement] > 0:
            key = _entry_lane(state, movement, VehicleKind.REAL)
            speed = _spawn_speed(state, key, VehicleKind.REAL)
            if speed is None:
                break
            _place(state, movement, VehicleKind.REAL, key, speed)
            _commit_entry_lane(state, movement, VehicleKind.REAL)
            state.pending[movement] -= 1
            spawned += 1
            state.counters["spawned"] += 1
    return spawned


# -- car following ------------------------------------------------------------


def krauss_safe_speed(net_gap: float, leader_speed: float,
                      decel: float, tau: float) -> float:
    """Safe-speed bound: fastest speed from which the follower, reacting
    after ``tau`` seconds, can always keep out of its leader's stopping
    envelope at braking rate ``decel``."""
    radicand = decel * decel * tau * tau + leader_speed * leader_speed \
        + 2.0 * decel * net_gap
    if radicand <= 0.0:
        return 0.0
    return max(0.0, math.sqrt(radicand) - decel * tau)


def _line_safe_speed(dist: float, decel: float, tau: float) -> float:
    # Stopped virtual leader just before the stop line.
    return krauss_safe_speed(dist, 0.0, decel, tau)


STOP_BUFFER = 1.0  # vehicles aim to halt this far before the stop line


def car_following_accel(ego: Vehicle, leader: Vehicle | None,
                        signal: SignalView, config: SimConfig,
                        jitter: float = 0.0) -> float:
    """Acceleration for one step given the visible leader and the signal.

    Normal operation is bounded by [-decel_max, accel_max]. A red stop line
    is the one hard constraint allowed to exceed the comfortable braking
    bound, so the model never carries a vehicle across a red light.
    """
    dt = config.dt
    tau = config.headway
    v = ego.speed
    v_max = min(ego.v_max, config.speed_limit)
    v_target = min(v + config.accel_max * dt, v_max)

    if leader is not None:
        net_gap = leader.position - leader.length - ego.position - config.min_gap
        v_lead = krauss_safe_speed(net_gap, leader.speed, config.decel_max, tau)
        # comfortable braking only: followers never exceed decel_max
        v_lead = max(v_lead, v - config.decel_max * dt)
        v_target = min(v_target, v_lead)

    hard_floor = max(0.0, v - config.decel_max * dt)
    emergency = False
    before_line = ego.position < signal.stop_line
    if before_line and signal.light is not Light.GREEN:
        dist = signal.stop_line - STOP_BUFFER - ego.position
        v_line = _line_safe_speed(max(dist, 0.0), config.decel_max, tau)
        if signal.light is Light.RED:
            if v_line < v_target:
                v_target = v_line
                emergency = True
        else:  # yellow: stop only when comfortably possible, else proceed
            if v_line >= v - config.decel_max * dt:
                v_target = min(v_target, v_line)

    if v_target >= v_max - 1e-12 and config.speed_jitter > 0.0:
        # free flow at the limit: drivers dither slightly above and below it
        v_next = v_max + jitter
        v_next = min(v_next, v + config.accel_max * dt)
        v_next = max(v_next, hard_floor)
    elif emergency:
        v_next = max(0.0, v_target)
    else:
        v_next = max(v_target, hard_floor)

    return (v_next - v) / dt


# -- stepping -----------------------------------------------------------------


def step(state: SimState, signal, dt: float | None = None) -> None:
    """Advance every vehicle one step and update waiting bookkeeping.

    ``signal`` is anything with ``light_for(movement) -> Light``. Lanes are
    updated front-to-back so a follower reacts to its leader's new position
    within the same step.
    """
    cfg = state.config
    if dt is None:
        dt = cfg.dt
    if dt <= 0:
        raise ValueError("dt must be positive")
    stop_line = cfg.lane_length
    despawn_at = cfg.lane_length + cfg.exit_length

    for key, lane in state.lanes.items():
        if not lane:
            continue
        movement = movement_for_lane(key)
        light = signal.light_for(movement)
        view = SignalView(light, stop_line)
        for i, veh in enumerate(lane):
            leader = state.visible_leader(lane, i, veh)
            jit = speed_jitter(state.seed, veh.id, state.clock, cfg.speed_jitter)
            accel = car_following_accel(veh, leader, view, cfg, jit)
            veh.accel = accel
            veh.speed = max(0.0, veh.speed + accel * dt)
            veh.position += veh.speed * dt

    state.clock += 1
    now = state.time
    for lane in state.lanes.values():
        kept = []
        for veh in lane:
            update_waiting(veh, dt, now, cfg)
            if veh.position > despawn_at:
                if veh.kind is VehicleKind.SYBIL:
                    state.counters["sybil_despawned"] += 1
                continue
            kept.append(veh)
        lane[:] = kept


def update_waiting(vehicle: Vehicle, dt: float, now: float,
                   config: SimConfig) -> Vehicle:
    """Waiting bookkeeping for one step: a vehicle at or below the crawl
    threshold accrues wait; any faster movement resets the current wait."""
    if vehicle.speed <= config.wait_speed_threshold:
        vehicle.waiting_time += dt
        vehicle.wait_history.append((now, dt))
    else:
        vehicle.waiting_time = 0.0
    horizon = now - config.wait_window
    while vehicle.wait_history and vehicle.wait_history[0][0] <= horizon:
        vehicle.wait_history.popleft()
    return vehicle


def accumulated_waiting(vehicle: Vehicle) -> float:
    """Sum of the vehicle's waits over the trailing window; movement never
    resets it (entries only expire)."""
    return sum(amount for _, amount in vehicle.wait_history)


# -- census -------------------------------------------------------------------


def count_vehicles(state: SimState, approach: str) -> int:
    """All vehicles (real and sybil) still heading toward the intersection
    on an approach. Broadcasts are indistinguishable, so sybils count."""
    if approach not in APPROACHES:
        raise ValueError(f"unknown approach {approach!r}")
    stop_line = state.config.lane_length
    total = 0
    for (app, _), lane in state.lanes.items():
        if app != approach:
            continue
        total += sum(1 for veh in lane if veh.position < stop_line)
    return total


def total_current_waiting(state: SimState) -> float:
    """Sum of current waiting_time over all upstream vehicles (the reward's
    waiting ingredient)."""
    stop_line = state.config.lane_length
    return sum(veh.waiting_time for veh in state.all_vehicles()
               if veh.position < stop_line)


def halted_and_moving(state: SimState) -> tuple[int, int]:
    stop_line = state.config.lane_length
    threshold = state.config.wait_speed_threshold
    halted = moving = 0
    for veh in state.all_vehicles():
        if veh.position >= stop_line:
            continue
        if veh.speed <= threshold:
            halted += 1
        else:
            moving += 1
    return halted, moving


def real_state_digest(state: SimState) -> str:
    """Hash of every real vehicle's kinematic tuple, for determinism and
    ghost-isolation checks."""
    h = hashlib.sha256()
    rows = []
    for veh in state.all_vehicles():
        if veh.kind is VehicleKind.REAL:
            rows.append((veh.id, veh.lane[0], veh.lane[1].value, veh.position,
                         veh.speed, veh.accel, veh.waiting_time))
    for row in sorted(rows):
        h.update(repr(row).encode())
    return h.hexdigest()


def state_digest(state: SimState) -> str:
    """Hash of the full vehicle population plus the clock."""
    h = hashlib.sha256()
    h.update(str(state.clock).encode())
    rows = []
    for veh in state.all_vehicles():
        rows.append((veh.id, veh.kind.value, veh.lane[0], veh.lane[1].value,
                     veh.position, veh.speed, veh.accel, veh.waiting_time))
    for row in sorted(rows):
        h.update(repr(row).encode())
    return h.hexdigest()
