from fractions import Fraction
from unittest import TestCase, mock

import pytest

from capacity import no_fb_sum_capacity
from errors import RegimeError
from halfduplex import (
    CHAINED,
    NO_FEEDBACK,
    RELAY,
    FeedbackSchedule,
    admissible_strategies,
    design_rate,
    half_duplex_session,
    sweep_t,
    sweep_workers,
)
from models import FeedbackTopology, OperatingPoint
from oracle import clear_memo
from schemes import decode_check, format_trace


def point(n, m):
    return OperatingPoint(n=n, m=m)


@pytest.fixture(autouse=True)
def fresh_allocations():
    clear_memo()
    yield
    clear_memo()


class TestFeedbackSchedule(TestCase):
    def test_bits_cross_in_order(self):
        schedule = FeedbackSchedule(3, 2, 2, need=1, capacity=2)
        self.assertEqual(schedule.serves, {1: None, 2: None, 3: 1, 4: 2})
        self.assertEqual(schedule.sent, [2, 2])
        self.assertEqual(schedule.served_count, 2)

    def test_slow_reverse_link_backs_up(self):
        # three bits per forward slot, one per reverse slot
        schedule = FeedbackSchedule(2, 1, 4, need=3, capacity=1)
        self.assertEqual(schedule.sent, [1, 1, 1, 1])
        # slot 1's bits finish crossing in the third frame
        self.assertEqual(schedule.serves, {1: None, 2: None, 3: None,
                                           4: 1})

    def test_nothing_to_send(self):
        schedule = FeedbackSchedule(4, 2, 3, need=0, capacity=2)
        self.assertEqual(schedule.sent, [0] * 6)
        self.assertEqual(schedule.served_count, 0)

    def test_no_reverse_slots(self):
        schedule = FeedbackSchedule(2, 2, 3, need=1, capacity=1)
        self.assertEqual(schedule.sent, [])
        self.assertEqual(schedule.served_count, 0)


class TestHalfDuplexSession(TestCase):
    def test_full_forward_frame_matches_no_feedback(self):
        trace, report = half_duplex_session(
            point(3, 2), FeedbackTopology.half_duplex(1, 1), 8, NO_FEEDBACK)
        self.assertEqual(report.finite_sum_rate, 4)
        self.assertEqual(report.reverse_slots, 0)
        self.assertTrue(decode_check(trace, report).passed)

    def test_relay_over_reverse_link(self):
        trace, report = half_duplex_session(
            point(1, 2), FeedbackTopology.half_duplex(2, 1), 10, RELAY)
        self.assertEqual((report.delivered_u1, report.delivered_u2), (0, 19))
        self.assertEqual(report.forward_slots, 10)
        self.assertEqual(report.reverse_slots, 10)
        self.assertEqual(report.finite_sum_rate, Fraction(19, 20))
        self.assertLessEqual(report.finite_sum_rate, 1)
        self.assertTrue(decode_check(trace, report).passed)

    def test_chained_is_feedback_limited(self):
        trace, report = half_duplex_session(
            point(2, 1), FeedbackTopology.half_duplex(3, 2), 10, CHAINED)
        self.assertEqual((report.delivered_u1, report.delivered_u2), (18, 40))
        self.assertEqual(report.finite_sum_rate, Fraction(58, 30))
        self.assertLessEqual(report.finite_sum_rate, 2)
        self.assertEqual(report.formula_capacity.render(), "[2,3]")
        self.assertTrue(decode_check(trace, report).passed)

    def test_reverse_slots_carry_receiver_one(self):
        trace, _ = half_duplex_session(
            point(2, 1), FeedbackTopology.half_duplex(3, 2), 2, CHAINED)
        reverse = [r for r in trace.records if r.direction == "R"]
        self.assertEqual([r.slot for r in reverse], [3, 6])
        for r in reverse:
            self.assertEqual(r.x2, 0)
            self.assertEqual(r.y1, r.x1)

    def test_all_reverse_frame_delivers_nothing(self):
        trace, report = half_duplex_session(
            point(2, 1), FeedbackTopology.half_duplex(2, 0), 3, CHAINED)
        self.assertEqual(report.delivered, 0)
        self.assertEqual(report.finite_sum_rate, 0)
        self.assertTrue(decode_check(trace, report).passed)

    def test_trace_header_names_frame(self):
        trace, _ = half_duplex_session(
            point(1, 2), FeedbackTopology.half_duplex(2, 1), 3, RELAY)
        header = format_trace(trace).splitlines()[0]
        self.assertTrue(header.endswith("L=2 f=1"))
        self.assertIn("topology=half-duplex", header)

    def test_regime_mismatch(self):
        hd = FeedbackTopology.half_duplex(3, 2)
        with self.assertRaises(RegimeError):
            half_duplex_session(point(2, 1), hd, 4, RELAY)
        with self.assertRaises(RegimeError):
            half_duplex_session(point(1, 2), hd, 4, CHAINED)
        with self.assertRaises(RegimeError):
            half_duplex_session(point(2, 1), hd, 4, NO_FEEDBACK)
        with self.assertRaises(RegimeError):
            half_duplex_session(point(2, 1), hd, 4, "oracle")

    def test_needs_half_duplex_topology(self):
        with self.assertRaises(RegimeError):
            half_duplex_session(point(2, 1),
                                FeedbackTopology.dedicated_link("one-link"),
                                4, CHAINED)


class TestDesignRate(TestCase):
    def test_chained(self):
        self.assertEqual(design_rate(point(2, 1), CHAINED, Fraction(2, 3)),
                         2)
        self.assertEqual(design_rate(point(3, 0), CHAINED, Fraction(1, 2)),
                         3)

    def test_relay(self):
        self.assertEqual(design_rate(point(1, 2), RELAY, Fraction(1, 2)), 1)


def test_admissible_strategies():
    assert admissible_strategies(point(2, 1), 3, 3) == [NO_FEEDBACK, CHAINED]
    assert admissible_strategies(point(2, 1), 3, 1) == [CHAINED]
    assert admissible_strategies(point(2, 3), 3, 1) == []
    assert admissible_strategies(point(1, 2), 2, 2) == [NO_FEEDBACK, RELAY]


@pytest.mark.parametrize("n,m,L,rate", [
    (1, 2, 10, 2), (3, 2, 6, 4), (2, 1, 6, 2),
])
def test_sweep_examples(n, m, L, rate):
    result = sweep_t(point(n, m), L, 2)
    assert result.best.f == L
    assert result.best.rate == rate
    assert result.best.strategy == NO_FEEDBACK
    assert [r.sort_key for r in result.rows] == \
        sorted(r.sort_key for r in result.rows)


def test_sweep_keeps_every_split():
    result = sweep_t(point(2, 1), 3, 2)
    assert [(r.f, r.strategy) for r in result.rows] == [
        (0, CHAINED), (1, CHAINED), (2, CHAINED), (3, CHAINED),
        (3, NO_FEEDBACK)]


def test_sweep_needs_direct_link():
    with pytest.raises(RegimeError):
        sweep_t(point(0, 2), 3, 2)


def test_feedback_never_helps_in_time_sharing():
    for n in range(1, 7):
        for m in range(13):
            if 3 * m < 2 * n:
                continue
            target = no_fb_sum_capacity(point(n, m)).bits_per_forward_slot
            for L in (2, 3, 6):
                best = sweep_t(point(n, m), L, 2).best
                assert (best.f, best.rate) == (L, target), (n, m, L)


def test_sweep_is_thread_count_independent():
    single = sweep_t(point(3, 1), 4, 3, seed=5, workers=1)
    pooled = sweep_t(point(3, 1), 4, 3, seed=5, workers=4)
    assert single == pooled


@mock.patch.dict('os.environ', {'SWEEP_WORKERS': '3'})
def test_sweep_workers_from_environment():
    assert sweep_workers() == 3
