from fractions import Fraction
from unittest import TestCase

import pytest
from hypothesis import given, strategies as st
from pydantic import ValidationError

from errors import ChannelError, DecodeFailure
from models import (
    Allocation,
    BoundKind,
    CapacityValue,
    FeedbackTopology,
    FeedbackVariant,
    LevelVector,
    OperatingPoint,
    RunConfig,
    ShiftOperator,
    VerificationFailure,
    VerificationReport,
)


class TestLevelVector(TestCase):
    def test_level_one_is_most_significant(self):
        v = LevelVector.from_string("100")
        self.assertEqual(v.to_int(), 4)
        self.assertEqual(v.level(1), 1)
        self.assertEqual(v.level(3), 0)

    def test_from_int_checks_width(self):
        with self.assertRaises(ChannelError):
            LevelVector.from_int(8, 3)
        with self.assertRaises(ChannelError):
            LevelVector.from_int(-1, 3)

    def test_bits_must_match_width(self):
        with self.assertRaises(ValidationError):
            LevelVector(width=3, bits=(1, 0))
        with self.assertRaises(ValidationError):
            LevelVector(width=2, bits=(1, 2))

    def test_xor(self):
        v = LevelVector.from_string("110") ^ LevelVector.from_string("011")
        self.assertEqual(str(v), "101")

    def test_xor_needs_equal_width(self):
        with self.assertRaises(ChannelError):
            LevelVector.from_string("11") ^ LevelVector.from_string("110")

    def test_level_out_of_range(self):
        with self.assertRaises(ChannelError):
            LevelVector.zeros(2).level(3)

    def test_shift_operator(self):
        op = ShiftOperator(width=3, drop=1)
        self.assertEqual(str(op.apply(LevelVector.from_string("101"))),
                         "010")
        identity = ShiftOperator(width=3, drop=0)
        self.assertEqual(str(identity.apply(LevelVector.from_string("101"))),
                         "101")
        with self.assertRaises(ValidationError):
            ShiftOperator(width=2, drop=3)


@given(st.integers(0, 12).flatmap(
    lambda w: st.tuples(st.just(w), st.integers(0, (1 << w) - 1))))
def test_int_and_string_forms_agree(case):
    width, value = case
    v = LevelVector.from_int(value, width)
    assert LevelVector.from_string(str(v)) == v
    assert v.to_int() == value


class TestTopology(TestCase):
    def test_dedicated_takes_no_frame(self):
        topo = FeedbackTopology.dedicated_link("two-link")
        self.assertTrue(topo.dedicated)
        self.assertEqual(topo.t, 1)
        self.assertEqual(topo.reverse_slots, 0)
        with self.assertRaises(ValidationError):
            FeedbackTopology(variant=FeedbackVariant.ONE_LINK,
                             frame_length=2, forward_slots=1)

    def test_half_duplex_frame(self):
        topo = FeedbackTopology.half_duplex(3, 2)
        self.assertFalse(topo.dedicated)
        self.assertEqual(topo.t, Fraction(2, 3))
        self.assertEqual(topo.reverse_slots, 1)
        self.assertEqual(str(topo), "half-duplex(L=3,f=2)")

    def test_half_duplex_bounds(self):
        with self.assertRaises(ValidationError):
            FeedbackTopology.half_duplex(3, 4)
        with self.assertRaises(ValidationError):
            FeedbackTopology.half_duplex(0, 0)
        with self.assertRaises(ValidationError):
            FeedbackTopology(variant=FeedbackVariant.HALF_DUPLEX)


class TestCapacityValue(TestCase):
    def test_exact_render(self):
        value = CapacityValue(bits_per_forward_slot=Fraction(3),
                              model=FeedbackVariant.ONE_LINK)
        self.assertEqual(value.render(), "3")
        self.assertEqual(value.high, 3)

    def test_interval_render(self):
        value = CapacityValue(bits_per_forward_slot=Fraction(2),
                              upper=Fraction(3),
                              model=FeedbackVariant.HALF_DUPLEX,
                              bound_kind=BoundKind.INTERVAL)
        self.assertEqual(value.render(), "[2,3]")
        self.assertEqual((value.lower, value.high), (2, 3))

    def test_interval_needs_ordered_ends(self):
        with self.assertRaises(ValidationError):
            CapacityValue(bits_per_forward_slot=Fraction(3),
                          upper=Fraction(2),
                          model=FeedbackVariant.HALF_DUPLEX,
                          bound_kind=BoundKind.INTERVAL)


class TestAllocation(TestCase):
    def test_rate_and_levels(self):
        alloc = Allocation(width=3, block_len=1, generators_u1=(0b100, 0b001),
                           generators_u2=(0b100, 0b001))
        self.assertEqual(alloc.sum_bits, 4)
        self.assertEqual(alloc.rate, 4)
        self.assertEqual(alloc.levels(1), {(1, 1), (1, 3)})

    def test_block_rate(self):
        alloc = Allocation(width=2, block_len=2, generators_u1=(0b1000,),
                           generators_u2=(0b0100, 0b0010, 0b0001))
        self.assertEqual(alloc.rate, 2)
        self.assertEqual(alloc.levels(2), {(1, 2), (2, 1), (2, 2)})

    def test_generator_outside_block(self):
        with self.assertRaises(ValidationError):
            Allocation(width=2, block_len=1, generators_u1=(0b100,),
                       generators_u2=())


class TestVerificationReport(TestCase):
    def test_failure_names_slot_user_level(self):
        failure = VerificationFailure(slot=3, user=1, level=2,
                                      reason="flipped")
        self.assertEqual(str(failure), "slot 3 user 1 level 2: flipped")
        report = VerificationReport(failures=(failure,))
        self.assertFalse(report.passed)
        with self.assertRaises(DecodeFailure) as ctx:
            report.raise_for_failures()
        self.assertIn("slot 3", str(ctx.exception))

    def test_empty_report_passes(self):
        VerificationReport().raise_for_failures()


class TestRunConfig(TestCase):
    def test_simulate_needs_point(self):
        with self.assertRaises(ValidationError):
            RunConfig(command="simulate", n=2)

    def test_half_duplex_needs_frame(self):
        with self.assertRaises(ValidationError):
            RunConfig(command="simulate", n=2, m=1, topology="half-duplex",
                      L=3)
        with self.assertRaises(ValidationError):
            RunConfig(command="simulate", n=2, m=1, topology="half-duplex",
                      L=3, f=4)

    def test_dedicated_refuses_frame_flags(self):
        with self.assertRaises(ValidationError):
            RunConfig(command="simulate", n=2, m=1, f=1)

    def test_curve_bounds(self):
        with self.assertRaises(ValidationError):
            RunConfig(command="curve", n=61)
        RunConfig(command="curve", n=60)

    def test_unknown_command(self):
        with self.assertRaises(ValidationError):
            RunConfig(command="plot", n=1, m=1)

    def test_echo_leaves_out_paths_and_threads(self):
        config = RunConfig(command="sweep", n=3, m=2, L=6, seed=5,
                           workers=4, output="out.csv")
        line = config.echo()
        self.assertTrue(line.startswith("# config command=sweep n=3 m=2"))
        self.assertIn("L=6", line)
        self.assertIn("seed=5", line)
        self.assertIn("topology=one-link", line)
        self.assertNotIn("workers", line)
        self.assertNotIn("out.csv", line)


@pytest.mark.parametrize("n,m", [(-1, 1), (0, 0)])
def test_operating_point_rejects(n, m):
    with pytest.raises(ValidationError):
        OperatingPoint(n=n, m=m)
