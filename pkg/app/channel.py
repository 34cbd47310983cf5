import logging

from pydantic import ValidationError

from errors import ChannelError
from models import (
    FeedbackTopology,
    FeedbackVariant,
    FeedbackView,
    LevelVector,
    OperatingPoint,
    ShiftOperator,
)

logger = logging.getLogger(__name__)


def make_operating_point(n: int, m: int) -> OperatingPoint:
    try:
        return OperatingPoint(n=n, m=m)
    except ValidationError as e:
        raise ChannelError(f"invalid operating point ({n},{m}): "
                           f"{e.errors()[0]['msg']}") from e


def downshift(x: LevelVector, link_levels: int, q: int) -> LevelVector:
    """
    Pass x through a link that carries `link_levels` of the q levels.

    Output level j is input level j - (q - link_levels), zero above that.
    """
    if not 0 <= link_levels <= q:
        raise ChannelError(f"link of {link_levels} levels at width {q}")
    return ShiftOperator(width=q, drop=q - link_levels).apply(x)


def forward_law(x1: int, x2: int, op: OperatingPoint) -> tuple[int, int]:
    # Integer form of the channel law, used by the session engines
    q = op.q
    y1 = (x1 >> (q - op.n)) ^ (x2 >> (q - op.m))
    y2 = (x1 >> (q - op.m)) ^ (x2 >> (q - op.n))
    return y1, y2


def _check_widths(a: LevelVector, b: LevelVector, op: OperatingPoint):
    if a.width != op.q or b.width != op.q:
        raise ChannelError(f"inputs of widths {a.width},{b.width} "
                           f"on a width {op.q} channel")


def forward_transmit(x1: LevelVector, x2: LevelVector,
                     op: OperatingPoint) -> tuple[LevelVector, LevelVector]:
    _check_widths(x1, x2, op)
    q = op.q
    y1 = downshift(x1, op.n, q) ^ downshift(x2, op.m, q)
    y2 = downshift(x1, op.m, q) ^ downshift(x2, op.n, q)
    return y1, y2


def reverse_transmit(r1: LevelVector, r2: LevelVector,
                     op: OperatingPoint) -> tuple[LevelVector, LevelVector]:
    """
    Receivers talk back to the transmitters through a channel with the
    same operating point: z_k is what transmitter k hears.
    """
    _check_widths(r1, r2, op)
    # Node rows swap roles; the law itself is unchanged
    return forward_transmit(r1, r2, op)


def reverse_law(r1: int, r2: int, op: OperatingPoint) -> tuple[int, int]:
    return forward_law(r1, r2, op)


def feedback_view(topology: FeedbackTopology, y1: LevelVector,
                  y2: LevelVector) -> FeedbackView:
    variant = topology.variant
    if variant == FeedbackVariant.HALF_DUPLEX:
        raise ChannelError("half-duplex feedback travels through "
                           "reverse_transmit, not a dedicated view")
    if variant == FeedbackVariant.NONE:
        return FeedbackView(tx1=(), tx2=())
    if variant == FeedbackVariant.ONE_LINK:
        return FeedbackView(tx1=(y1,), tx2=())
    if variant == FeedbackVariant.TWO_LINK:
        return FeedbackView(tx1=(y1,), tx2=(y2,))
    return FeedbackView(tx1=(y1, y2), tx2=(y1, y2))


def observation(topology: FeedbackTopology, user: int, y1: int,
                y2: int) -> tuple[int, ...]:
    # Integer form of feedback_view for one transmitter
    variant = topology.variant
    if variant == FeedbackVariant.HALF_DUPLEX:
        raise ChannelError("no dedicated observation under half-duplex")
    if variant == FeedbackVariant.FOUR_LINK:
        return y1, y2
    if variant == FeedbackVariant.TWO_LINK:
        return (y1,) if user == 1 else (y2,)
    if variant == FeedbackVariant.ONE_LINK and user == 1:
        return (y1,)
    return ()
