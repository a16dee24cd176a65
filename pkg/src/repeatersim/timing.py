"""Experiment clocking: trap loading, write trains, feedback, fiber delay.

Each duty period loads the traps for mot_load_ms, then runs a window of
experiment cycles.  A cycle fires writes_per_cycle write pulses spaced by
write_interval_us; the heralding window of a write sits one fiber flight
later.  A heralded success stops the remaining writes of that cycle and
schedules the readout after the storage time.  Cycles that do not fill the
window leave the remainder idle rather than packing extra cycles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

SPEED_OF_LIGHT_M_PER_NS = 0.299792458

WRITE = "write"
BSM_WINDOW = "bsm_window"
FEEDBACK_STOP = "feedback_stop"
RETRIEVE = "retrieve"
DETECT = "detect"


class TimingError(ValueError):
    """A timing configuration violates one of its feasibility inequalities."""


@dataclass(frozen=True)
class TimingConfig:
    cycles_per_window: int
    cycle_us: float
    writes_per_cycle: int
    write_interval_us: float
    storage_time_us: float
    fiber_length_m: float
    mot_load_ms: float = 20.0
    window_ms: float = 5.0
    fiber_index: float = 1.46

    def __post_init__(self):
        if self.cycles_per_window < 0 or self.writes_per_cycle < 1:
            raise TimingError("cycle and write counts must be positive")
        if min(self.cycle_us, self.write_interval_us) <= 0:
            raise TimingError("cycle_us and write_interval_us must be positive")
        if self.storage_time_us < 0 or self.fiber_length_m < 0:
            raise TimingError("storage time and fiber length must be >= 0")
        if self.writes_per_cycle * self.write_interval_us > self.cycle_us:
            raise TimingError(
                f"writes_per_cycle * write_interval_us = "
                f"{self.writes_per_cycle * self.write_interval_us} us exceeds "
                f"cycle_us = {self.cycle_us} us"
            )
        if self.cycles_per_window * self.cycle_us > self.window_ms * 1000.0:
            raise TimingError(
                f"cycles_per_window * cycle_us = "
                f"{self.cycles_per_window * self.cycle_us} us exceeds "
                f"window_ms = {self.window_ms} ms"
            )

    @property
    def fiber_delay_ns(self) -> float:
        return self.fiber_index * self.fiber_length_m / SPEED_OF_LIGHT_M_PER_NS

    @property
    def write_slots_per_window(self) -> int:
        return self.cycles_per_window * self.writes_per_cycle

    @property
    def period_ms(self) -> float:
        return self.mot_load_ms + self.window_ms


@dataclass(frozen=True)
class Event:
    time_ns: float
    kind: str
    site: str
    payload: Optional[dict] = None


@dataclass
class EventLog:
    events: list = field(default_factory=list)

    def append(self, event: Event) -> None:
        if self.events and event.time_ns < self.events[-1].time_ns - 1e-9:
            raise ValueError("events must be appended in nondecreasing time order")
        self.events.append(event)

    def of_kind(self, kind: str) -> list:
        return [e for e in self.events if e.kind == kind]

    def validate(self) -> "EventLog":
        last = -float("inf")
        success_seen = False
        for e in self.events:
            if e.time_ns < last - 1e-9:
                raise ValueError("event log times are not nondecreasing")
            last = e.time_ns
            if e.kind == BSM_WINDOW and e.payload and e.payload.get("success"):
                success_seen = True
            if e.kind == FEEDBACK_STOP and not success_seen:
                raise ValueError("feedback_stop without a preceding successful herald")
        return self


def schedule(tc: TimingConfig, bsm_success_slots=None) -> EventLog:
    """Event log of one duty period; slot indices count writes per window.

    bsm_success_slots is the set of write slots whose heralding window is
    flagged successful; each suppresses the remaining writes of its cycle
    and schedules the retrieval at the storage time.
    """
    successes = frozenset(bsm_success_slots or ())
    log = EventLog()
    pending = []  # deferred events, merged in time order at the end
    start_ns = tc.mot_load_ms * 1e6
    delay = tc.fiber_delay_ns
    for cycle in range(tc.cycles_per_window):
        cycle_start = start_ns + cycle * tc.cycle_us * 1e3
        stop_time = None  # when the feedback of this cycle's first success lands
        for w in range(tc.writes_per_cycle):
            slot = cycle * tc.writes_per_cycle + w
            t_write = cycle_start + w * tc.write_interval_us * 1e3
            if stop_time is not None and t_write >= stop_time - 1e-9:
                continue  # suppressed by the feedback circuit
            pending.append(Event(t_write, WRITE, "both", {"slot": slot, "cycle": cycle}))
            t_bsm = t_write + delay
            success = slot in successes
            pending.append(
                Event(t_bsm, BSM_WINDOW, "mid", {"slot": slot, "success": success})
            )
            if success and stop_time is None:
                stop_time = t_bsm
                pending.append(Event(t_bsm, FEEDBACK_STOP, "both", {"cycle": cycle}))
                t_retrieve = t_write + tc.storage_time_us * 1e3
                for site in ("I", "II"):
                    pending.append(Event(t_retrieve, RETRIEVE, site, {"slot": slot}))
                    pending.append(Event(t_retrieve, DETECT, site, {"slot": slot}))
    order = {WRITE: 0, BSM_WINDOW: 1, FEEDBACK_STOP: 2, RETRIEVE: 3, DETECT: 4}
    pending.sort(key=lambda e: (e.time_ns, order[e.kind]))
    for e in pending:
        log.append(e)
    return log.validate()


def attempt_rate(tc: TimingConfig) -> float:
    """Write attempts per second over the full load+window duty period."""
    return tc.write_slots_per_window / (tc.period_ms * 1e-3)
