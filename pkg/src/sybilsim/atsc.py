"""Waiting-time-based adaptive signal control.

Every review interval the controller recomputes, for each of the eight
movements, the approach waiting time (AWT: sum of the current waits of the
vehicles heading to the intersection on that movement) and the average
AAWT = AWT / n, and gives green to the compatible pair containing the
movement with the highest AAWT. A yellow interval separates distinct greens.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .config import ControllerConfig
from .simcore import Light, Movement, SimState


class Phase(enum.IntEnum):
    """Compatible movement pairs; together they cover all eight movements."""

    EW_THROUGH = 0   # EBT + WBT
    EW_LEFT = 1      # EBL + WBL
    NS_THROUGH = 2   # NBT + SBT
    NS_LEFT = 3      # NBL + SBL

    @property
    def movements(self) -> tuple[Movement, Movement]:
        return _PHASE_MOVEMENTS[self]


_PHASE_MOVEMENTS = {
    Phase.EW_THROUGH: (Movement.EBT, Movement.WBT),
    Phase.EW_LEFT: (Movement.EBL, Movement.WBL),
    Phase.NS_THROUGH: (Movement.NBT, Movement.SBT),
    Phase.NS_LEFT: (Movement.NBL, Movement.SBL),
}

_MOVEMENT_PHASE = {m: p for p, pair in _PHASE_MOVEMENTS.items() for m in pair}


def phase_of(movement: Movement) -> Phase:
    return _MOVEMENT_PHASE[movement]


@dataclass
class AawtRecord:
    movement: Movement
    awt: float       # summed current waiting over the movement's vehicles, s
    n: int           # vehicles heading to the intersection on the movement
    aawt: float      # awt / n, or 0 for an empty movement


def compute_aawt(state: SimState) -> list[AawtRecord]:
    """One record per movement; empty movements average to zero rather than
    being undefined, so they can never win a green."""
    records = []
    for movement in Movement:
        awt = 0.0
        n = 0
        for veh in state.vehicles_on_movement(movement):
            awt += veh.waiting_time
            n += 1
        aawt = awt / n if n > 0 else 0.0
        records.append(AawtRecord(movement, awt, n, aawt))
    return records


def select_phase(records: list[AawtRecord], current: Phase) -> Phase:
    """Phase containing the movement with maximum AAWT.

    Ties keep the current phase when one of its movements is tied at the
    max, otherwise the lowest movement in enum order wins.
    """
    if len(records) != len(Movement):
        raise ValueError("need one record per movement")
    best = max(rec.aawt for rec in records)
    tied = [rec.movement for rec in records if rec.aawt == best]
    for movement in tied:
        if phase_of(movement) is current:
            return current
    return phase_of(min(tied))


class SignalState:
    """Controller state machine: green phase, age, review timer, yellow."""

    def __init__(self, config: ControllerConfig, initial: Phase = Phase.EW_THROUGH):
        config.validate()
        self.config = config
        self.current = initial
        self.pending: Phase | None = None
        self.phase_age = 0.0          # seconds since this green began
        self.review_timer = 0.0       # green seconds since the last review
        self.yellow_remaining = 0.0
        self.reviews = 0
        self.changes = 0

    @property
    def in_yellow(self) -> bool:
        return self.yellow_remaining > 0.0

    def light_for(self, movement: Movement) -> Light:
        if self.in_yellow:
            return Light.YELLOW if phase_of(movement) is self.current else Light.RED
        return Light.GREEN if phase_of(movement) is self.current else Light.RED

    def remaining_review_time(self) -> float:
        """Seconds of green left until the next review, in [0, interval]."""
        if self.in_yellow:
            return self.config.review_interval
        return max(0.0, self.config.review_interval - self.review_timer)

    def tick(self, state: SimState, dt: float) -> bool:
        """Advance timers by one step; returns True when a review ran."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        if self.in_yellow:
            self.yellow_remaining -= dt
            if self.yellow_remaining <= 1e-9:
                self.yellow_remaining = 0.0
                assert self.pending is not None
                self.current = self.pending
                self.pending = None
                self.phase_age = 0.0
                self.review_timer = 0.0
            return False

        self.phase_age += dt
        self.review_timer += dt
        if self.review_timer + 1e-9 < self.config.review_interval:
            return False

        self.reviews += 1
        self.review_timer = 0.0
        choice = select_phase(compute_aawt(state), self.current)
        if choice is not self.current:
            self.changes += 1
            if self.config.yellow_time > 0:
                self.pending = choice
                self.yellow_remaining = self.config.yellow_time
            else:
                self.current = choice
                self.phase_age = 0.0
        return True


class FixedTimeController:
    """Traffic-insensitive fixed cycle, used as the ghost-isolation fixture.

    Each phase owns a slot of its configured duration; the last
    ``yellow_time`` seconds of a slot show yellow, so the cycle length is
    exactly the sum of the durations.
    """

    def __init__(self, durations: dict[Phase, float] | list[float],
                 yellow_time: float = 3.0):
        if isinstance(durations, dict):
            slots = [float(durations[p]) for p in Phase]
        else:
            slots = [float(d) for d in durations]
        if len(slots) != len(Phase):
            raise ValueError("need one duration per phase")
        if any(d <= 0 for d in slots):
            raise ValueError("phase durations must be positive")
        if any(d <= yellow_time for d in slots):
            raise ValueError("each slot must be longer than the yellow")
        self.slots = slots
        self.yellow_time = yellow_time
        self.cycle = sum(slots)
        self.elapsed = 0.0

    def _locate(self) -> tuple[Phase, float]:
        t = self.elapsed % self.cycle
        for phase, dur in zip(Phase, self.slots):
            if t < dur:
                return phase, t
            t -= dur
        return Phase(len(Phase) - 1), t  # unreachable, guards float edge

    @property
    def current(self) -> Phase:
        return self._locate()[0]

    @property
    def in_yellow(self) -> bool:
        phase, t = self._locate()
        return t >= self.slots[phase] - self.yellow_time

    def light_for(self, movement: Movement) -> Light:
        phase, t = self._locate()
        if phase_of(movement) is not phase:
            return Light.RED
        if t >= self.slots[phase] - self.yellow_time:
            return Light.YELLOW
        return Light.GREEN

    def remaining_review_time(self) -> float:
        return 0.0

    def tick(self, state: SimState, dt: float) -> bool:
        self.elapsed += dt
        return False
