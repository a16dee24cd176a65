"""Schedule arithmetic, fiber delay, feedback suppression."""

import numpy as np
import pytest

from repeatersim.timing import (
    BSM_WINDOW,
    FEEDBACK_STOP,
    RETRIEVE,
    WRITE,
    Event,
    EventLog,
    TimingConfig,
    TimingError,
    attempt_rate,
    schedule,
)

SHORT_LINK = TimingConfig(
    cycles_per_window=250, cycle_us=16.0, writes_per_cycle=10,
    write_interval_us=1.0, storage_time_us=0.5, fiber_length_m=3.0,
)
LONG_LINK = TimingConfig(
    cycles_per_window=200, cycle_us=20.0, writes_per_cycle=8,
    write_interval_us=1.5, storage_time_us=1.23, fiber_length_m=150.0,
)


class TestCounts:
    def test_short_link_write_slots(self):
        log = schedule(SHORT_LINK)
        assert len(log.of_kind(WRITE)) == 2500
        assert SHORT_LINK.write_slots_per_window == 2500

    def test_long_link_write_slots(self):
        log = schedule(LONG_LINK)
        assert len(log.of_kind(WRITE)) == 1600

    def test_attempt_rates(self):
        assert np.isclose(attempt_rate(SHORT_LINK), 1.0e5)
        assert np.isclose(attempt_rate(LONG_LINK), 6.4e4)

    def test_zero_cycles(self):
        tc = TimingConfig(cycles_per_window=0, cycle_us=16.0, writes_per_cycle=10,
                          write_interval_us=1.0, storage_time_us=0.5, fiber_length_m=3.0)
        assert attempt_rate(tc) == 0.0


class TestFiberDelay:
    def test_150_m_delay(self):
        assert abs(LONG_LINK.fiber_delay_ns - 730.0) < 1.0

    def test_direct_formula(self):
        tc = SHORT_LINK
        assert np.isclose(tc.fiber_delay_ns, 1.46 * 3.0 / 0.299792458)


class TestFeedback:
    def test_success_stops_remaining_writes_of_cycle(self):
        log = schedule(SHORT_LINK, bsm_success_slots={3})
        writes = [e for e in log.of_kind(WRITE) if e.payload["cycle"] == 0]
        # slots 0..3 written, then the feedback suppresses 4..9
        assert [e.payload["slot"] for e in writes] == [0, 1, 2, 3]
        assert len(log.of_kind(WRITE)) == 2500 - 6
        assert len(log.of_kind(FEEDBACK_STOP)) == 1
        retrieves = log.of_kind(RETRIEVE)
        assert {e.site for e in retrieves} == {"I", "II"}
        t_write = [e for e in log.of_kind(WRITE) if e.payload["slot"] == 3][0].time_ns
        assert np.isclose(retrieves[0].time_ns - t_write, 0.5 * 1e3)

    def test_no_write_after_feedback_in_same_cycle(self):
        rng = np.random.default_rng(17)
        slots = set(rng.choice(2500, size=40, replace=False).tolist())
        log = schedule(SHORT_LINK, bsm_success_slots=slots)
        log.validate()
        stops = {}
        for e in log.of_kind(FEEDBACK_STOP):
            stops[e.payload["cycle"]] = e.time_ns
        for e in log.of_kind(WRITE):
            cyc = e.payload["cycle"]
            if cyc in stops:
                assert e.time_ns < stops[cyc] + 1e-9

    def test_long_delay_lets_inflight_writes_through(self):
        # feedback lands one fiber flight later; writes already fired stay
        tc = TimingConfig(cycles_per_window=10, cycle_us=30.0, writes_per_cycle=8,
                          write_interval_us=1.0, storage_time_us=5.0,
                          fiber_length_m=500.0)
        assert tc.fiber_delay_ns > 2 * tc.write_interval_us * 1e3
        log = schedule(tc, bsm_success_slots={0})
        cycle0 = [e.payload["slot"] for e in log.of_kind(WRITE) if e.payload["cycle"] == 0]
        assert cycle0 == [0, 1, 2]  # slots 1, 2 were in flight before the stop

    def test_events_time_ordered(self):
        log = schedule(LONG_LINK, bsm_success_slots={0, 100, 1599})
        times = [e.time_ns for e in log.events]
        assert all(b >= a - 1e-9 for a, b in zip(times, times[1:]))

    def test_feedback_without_success_rejected(self):
        log = EventLog()
        log.append(Event(0.0, WRITE, "both", {"slot": 0, "cycle": 0}))
        log.append(Event(1.0, FEEDBACK_STOP, "both", {"cycle": 0}))
        with pytest.raises(ValueError):
            log.validate()


class TestValidation:
    def test_write_train_must_fit_cycle(self):
        with pytest.raises(TimingError, match="cycle_us"):
            TimingConfig(cycles_per_window=250, cycle_us=8.0, writes_per_cycle=10,
                         write_interval_us=1.0, storage_time_us=0.5, fiber_length_m=3.0)

    def test_cycles_must_fit_window(self):
        with pytest.raises(TimingError, match="window_ms"):
            TimingConfig(cycles_per_window=400, cycle_us=16.0, writes_per_cycle=10,
                         write_interval_us=1.0, storage_time_us=0.5, fiber_length_m=3.0)

    def test_idle_remainder_allowed(self):
        # 250 cycles x 16 us = 4 ms inside a 5 ms window, remainder idle
        log = schedule(SHORT_LINK)
        last_write = log.of_kind(WRITE)[-1].time_ns
        window_end = (SHORT_LINK.mot_load_ms + SHORT_LINK.window_ms) * 1e6
        assert last_write < window_end
