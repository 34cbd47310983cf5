"""
Closed-form sum capacities of the symmetric deterministic interference
channel. Everything here is exact integer or Fraction arithmetic so that
the boundary regimes (alpha = 1/2, 2/3, 1, 2) are decided correctly.
"""
from fractions import Fraction

from errors import ChannelError, RegimeError
from models import (
    BoundKind,
    CapacityValue,
    FeedbackTopology,
    FeedbackVariant,
    OperatingPoint,
    SchemeConstants,
)

DEDICATED = (FeedbackVariant.ONE_LINK, FeedbackVariant.TWO_LINK,
             FeedbackVariant.FOUR_LINK)


def _require_alpha(op: OperatingPoint):
    if op.n == 0:
        raise ChannelError(f"alpha is undefined at {op} (n = 0)")


def fb_sum_capacity(op: OperatingPoint,
                    model: FeedbackVariant = FeedbackVariant.ONE_LINK
                    ) -> CapacityValue:
    """
    Sum capacity with dedicated feedback, max(n, m) + (n - m)^+.

    One, two and four links all give the same value.
    """
    model = FeedbackVariant(model)
    if model not in DEDICATED:
        raise ChannelError(f"{model.value} is not a dedicated feedback model")
    value = max(op.n, op.m) + max(op.n - op.m, 0)
    return CapacityValue(bits_per_forward_slot=Fraction(value), model=model)


def _no_fb_branches(n: int, m: int) -> list[int]:
    # Every branch of the W-curve whose closed alpha range holds m/n
    values = []
    if 2 * m <= n:
        values.append(2 * (n - m))
    if n <= 2 * m and 3 * m <= 2 * n:
        values.append(2 * m)
    if 2 * n <= 3 * m and m <= n:
        values.append(2 * n - m)
    if n <= m <= 2 * n:
        values.append(m)
    if m >= 2 * n:
        values.append(2 * n)
    return values


def no_fb_sum_capacity(op: OperatingPoint) -> CapacityValue:
    _require_alpha(op)
    values = _no_fb_branches(op.n, op.m)
    if not values or len(set(values)) != 1:
        raise ArithmeticError(f"W-curve branches disagree at {op}: {values}")
    return CapacityValue(bits_per_forward_slot=Fraction(values[0]),
                         model=FeedbackVariant.NONE)


def feedback_gain(op: OperatingPoint) -> Fraction:
    _require_alpha(op)
    return (fb_sum_capacity(op).bits_per_forward_slot
            - no_fb_sum_capacity(op).bits_per_forward_slot)


def in_no_gain_region(op: OperatingPoint) -> bool:
    # Without interference both capacities are 2n
    if op.m == 0:
        return True
    return 3 * op.m >= 2 * op.n and op.m <= 2 * op.n


def half_duplex_sum_capacity(op: OperatingPoint) -> CapacityValue:
    """
    Time-shared feedback cannot beat the no-feedback value once 3m >= 2n,
    nor without interference.
    Below that only the interval [no feedback, dedicated feedback] is known.
    """
    _require_alpha(op)
    lower = no_fb_sum_capacity(op).bits_per_forward_slot
    if op.m == 0 or 3 * op.m >= 2 * op.n:
        return CapacityValue(bits_per_forward_slot=lower,
                             model=FeedbackVariant.HALF_DUPLEX)
    return CapacityValue(bits_per_forward_slot=lower,
                         upper=fb_sum_capacity(op).bits_per_forward_slot,
                         model=FeedbackVariant.HALF_DUPLEX,
                         bound_kind=BoundKind.INTERVAL)


def capacity_for(op: OperatingPoint,
                 topology: FeedbackTopology) -> CapacityValue:
    if topology.variant == FeedbackVariant.NONE:
        return no_fb_sum_capacity(op)
    if topology.variant == FeedbackVariant.HALF_DUPLEX:
        return half_duplex_sum_capacity(op)
    return fb_sum_capacity(op, topology.variant)


def scheme_constants(op: OperatingPoint) -> SchemeConstants:
    return SchemeConstants(l_min=min(op.n, op.n - op.m),
                           l_max=max(op.n, op.n - op.m))


def chained_rate_limit(op: OperatingPoint) -> int:
    if op.m > op.n:
        raise RegimeError(f"bit-count formula needs m <= n, got {op}")
    n, m = op.n, op.m
    limit = max(n - m, m) + min(n, 2 * (n - m))
    # The two specializations of the limit, low and high interference
    if 2 * m <= n and limit != (n - m) + n:
        raise ArithmeticError(f"low-interference branch fails at {op}")
    if 2 * m >= n and limit != m + 2 * (n - m):
        raise ArithmeticError(f"high-interference branch fails at {op}")
    return limit


def appendix_bits_formula(op: OperatingPoint, T: int) -> int:
    """
    Total data bits of the chained one-link bookkeeping over T slots.

    Parameters:
        op (OperatingPoint): channel with m <= n
        T (int): horizon in slots, at least 1

    Returns:
        int: (T - 1) * limit + max(n - m, m) + (n - m)
    """
    if T < 1:
        raise RegimeError(f"horizon must be positive, got {T}")
    limit = chained_rate_limit(op)
    n, m = op.n, op.m
    return (T - 1) * limit + max(n - m, m) + (n - m)


def normalized(value: Fraction, op: OperatingPoint) -> Fraction:
    # Sum capacity per user per direct level, C / 2n
    _require_alpha(op)
    return Fraction(value) / (2 * op.n)
