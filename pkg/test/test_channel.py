from unittest import TestCase

import numpy as np
import pytest

from channel import (
    downshift,
    feedback_view,
    forward_law,
    forward_transmit,
    make_operating_point,
    observation,
    reverse_law,
    reverse_transmit,
)
from errors import ChannelError
from models import FeedbackTopology, FeedbackVariant, LevelVector

LINEARITY_SAMPLES = 10_000


def vec(text):
    return LevelVector.from_string(text)


class TestOperatingPoint(TestCase):
    def test_low_interference(self):
        op = make_operating_point(2, 1)
        self.assertEqual(op.q, 2)
        self.assertEqual(str(op.alpha), "1/2")

    def test_strong_interference(self):
        op = make_operating_point(1, 2)
        self.assertEqual(op.q, 2)
        self.assertEqual(op.alpha, 2)

    def test_no_direct_link_has_no_alpha(self):
        self.assertIsNone(make_operating_point(0, 3).alpha)

    def test_negative_levels_rejected(self):
        with self.assertRaises(ChannelError):
            make_operating_point(-1, 2)

    def test_empty_channel_rejected(self):
        with self.assertRaises(ChannelError):
            make_operating_point(0, 0)


class TestDownshift(TestCase):
    def test_partial_link(self):
        x = vec("101")
        self.assertEqual(str(downshift(x, 2, 3)), "010")
        self.assertEqual(str(downshift(vec("110"), 2, 3)), "011")

    def test_full_link_is_identity(self):
        self.assertEqual(str(downshift(vec("10"), 2, 2)), "10")

    def test_zero_link_erases(self):
        self.assertEqual(str(downshift(vec("11"), 0, 2)), "00")

    def test_width_mismatch(self):
        with self.assertRaises(ChannelError):
            downshift(vec("101"), 1, 2)

    def test_link_wider_than_vector(self):
        with self.assertRaises(ChannelError):
            downshift(vec("10"), 3, 2)

    def test_composition_drops_add_up(self):
        # A single set bit at level j lands at level j + both drops
        for j in range(1, 6):
            x = LevelVector.from_int(1 << (5 - j), 5)
            out = downshift(downshift(x, 4, 5), 3, 5)
            target = j + 1 + 2
            expected = 1 << (5 - target) if target <= 5 else 0
            self.assertEqual(out.to_int(), expected)


class TestForwardTransmit(TestCase):
    def test_hand_evaluated_example(self):
        op = make_operating_point(2, 1)
        y1, y2 = forward_transmit(vec("10"), vec("11"), op)
        self.assertEqual((str(y1), str(y2)), ("11", "10"))

    def test_no_cross_link_decouples(self):
        op = make_operating_point(3, 0)
        y1, y2 = forward_transmit(vec("101"), vec("011"), op)
        self.assertEqual((str(y1), str(y2)), ("101", "011"))

    def test_equal_inputs_cancel_at_alpha_one(self):
        op = make_operating_point(3, 3)
        y1, y2 = forward_transmit(vec("110"), vec("110"), op)
        self.assertEqual((str(y1), str(y2)), ("000", "000"))

    def test_width_mismatch(self):
        with self.assertRaises(ChannelError):
            forward_transmit(vec("10"), vec("1"), make_operating_point(2, 1))

    def test_integer_law_matches_vectors(self):
        op = make_operating_point(3, 2)
        for a in range(8):
            for b in range(8):
                y1, y2 = forward_transmit(LevelVector.from_int(a, 3),
                                          LevelVector.from_int(b, 3), op)
                self.assertEqual((y1.to_int(), y2.to_int()),
                                 forward_law(a, b, op))


class TestReverseTransmit(TestCase):
    def test_hand_evaluated_example(self):
        op = make_operating_point(2, 1)
        z1, z2 = reverse_transmit(vec("10"), vec("00"), op)
        self.assertEqual((str(z1), str(z2)), ("10", "01"))

    def test_no_cross_link_decouples(self):
        op = make_operating_point(2, 0)
        z1, z2 = reverse_transmit(vec("11"), vec("01"), op)
        self.assertEqual((str(z1), str(z2)), ("11", "01"))

    def test_zero_input_fixed_point(self):
        for n, m in ((1, 0), (2, 1), (3, 5)):
            op = make_operating_point(n, m)
            self.assertEqual(forward_law(0, 0, op), (0, 0))
            self.assertEqual(reverse_law(0, 0, op), (0, 0))

    def test_reverse_is_forward_law(self):
        op = make_operating_point(2, 3)
        for a in range(8):
            for b in range(8):
                self.assertEqual(reverse_law(a, b, op), forward_law(a, b, op))


def test_forward_law_is_linear():
    rng = np.random.default_rng(20240601)
    for _ in range(LINEARITY_SAMPLES):
        n, m = (int(v) for v in rng.integers(0, 9, size=2))
        if n + m == 0:
            continue
        op = make_operating_point(n, m)
        a, a2, b, b2 = (int(v) for v in rng.integers(0, 1 << op.q, size=4))
        y = forward_law(a, b, op)
        y_prime = forward_law(a2, b2, op)
        y_sum = forward_law(a ^ a2, b ^ b2, op)
        assert y_sum == (y[0] ^ y_prime[0], y[1] ^ y_prime[1])


@pytest.mark.parametrize("variant,tx1,tx2", [
    (FeedbackVariant.NONE, (), ()),
    (FeedbackVariant.ONE_LINK, ("10",), ()),
    (FeedbackVariant.TWO_LINK, ("10",), ("01",)),
    (FeedbackVariant.FOUR_LINK, ("10", "01"), ("10", "01")),
])
def test_feedback_view_routes_outputs(variant, tx1, tx2):
    view = feedback_view(FeedbackTopology.dedicated_link(variant),
                         vec("10"), vec("01"))
    assert tuple(str(v) for v in view.tx1) == tx1
    assert tuple(str(v) for v in view.tx2) == tx2
    topo = FeedbackTopology.dedicated_link(variant)
    assert observation(topo, 1, 0b10, 0b01) == tuple(int(v, 2) for v in tx1)
    assert observation(topo, 2, 0b10, 0b01) == tuple(int(v, 2) for v in tx2)


def test_feedback_view_refuses_half_duplex():
    topo = FeedbackTopology.half_duplex(3, 2)
    with pytest.raises(ChannelError):
        feedback_view(topo, vec("10"), vec("01"))
    with pytest.raises(ChannelError):
        observation(topo, 1, 0, 0)
