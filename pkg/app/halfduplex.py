"""
Half-duplex sessions: each frame has f forward slots followed by L - f
reverse slots in which receiver 1 talks back to transmitter 1 through the
reverse channel. Rates count every slot of the frame.
"""
import logging
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

from capacity import half_duplex_sum_capacity
from errors import RegimeError
from models import FeedbackTopology, OperatingPoint, SweepResult, SweepRow
from oracle import allocation_for
from schemes import SessionEngine, Signal, transmit_allocation

logger = logging.getLogger(__name__)

NO_FEEDBACK = "no-feedback"
CHAINED = "chained-one-link-hd"
RELAY = "relay-hd"
STRATEGIES = (NO_FEEDBACK, CHAINED, RELAY)


def sweep_workers() -> int:
    return int(os.environ.get("SWEEP_WORKERS", 1))  # pragma: no mutate


class FeedbackSchedule:
    """
    Public timetable of the feedback pipeline.

    Receiver 1 queues `need` bits after every forward slot and sends up to
    `capacity` of them, oldest first, in every reverse slot. Once all bits
    of a forward slot have crossed, transmitter 1 may serve that slot; it
    serves ready slots in order, one per forward slot. Both receivers know
    the timetable, so they know what every forward slot carries.
    """

    def __init__(self, frame_length: int, forward_slots: int, frames: int,
                 need: int, capacity: int):
        self.need = need
        self.capacity = capacity
        # forward slot number (1-based) -> earlier forward slot it serves
        self.serves: dict[int, int | None] = {}
        # reverse slot order -> bits carried
        self.sent: list[int] = []
        queued = sent = complete = 0
        ready: deque[int] = deque()
        k = 0
        for _ in range(frames):
            for _ in range(forward_slots):
                k += 1
                self.serves[k] = ready.popleft() if ready else None
                queued += need
            for _ in range(frame_length - forward_slots):
                burst = min(capacity, queued - sent)
                sent += burst
                self.sent.append(burst)
                while need and complete < k and (complete + 1) * need <= sent:
                    complete += 1
                    ready.append(complete)

    @property
    def served_count(self) -> int:
        return sum(1 for s in self.serves.values() if s is not None)


def _strategy_regime(op: OperatingPoint, strategy: str,
                     topology: FeedbackTopology):
    if strategy not in STRATEGIES:
        raise RegimeError(f"unknown half-duplex strategy {strategy!r}")
    if strategy == NO_FEEDBACK and topology.forward_slots != \
            topology.frame_length:
        raise RegimeError("no-feedback strategy needs f = L")
    if strategy == CHAINED and op.m >= op.n:
        raise RegimeError(f"{CHAINED} needs m < n, got {op}")
    if strategy == RELAY and op.m < 2 * op.n:
        raise RegimeError(f"{RELAY} needs m >= 2n, got {op}")


def design_rate(op: OperatingPoint, strategy: str, t: Fraction) -> Fraction:
    """Throughput the strategy is built for; sessions count real bits."""
    n, m = op.n, op.m
    if strategy == NO_FEEDBACK:
        return allocation_for(op).rate
    if strategy == CHAINED:
        if m == 0:
            return t * 2 * n
        return min(t * (2 * n - m),
                   t * n + (1 - t) * Fraction(n * (n - m), m))
    return t * n + min(t * (m - n), (1 - t) * n)


def half_duplex_session(op: OperatingPoint, topology: FeedbackTopology,
                        T_frames: int, strategy: str, seed: int = 0,
                        cache=None):
    """
    Run T_frames frames of the half-duplex schedule with one strategy.

    Parameters:
        op (OperatingPoint): channel, n > 0
        topology (FeedbackTopology): half-duplex(L, f)
        T_frames (int): number of frames
        strategy (str): no-feedback, chained-one-link-hd or relay-hd
        seed (int): payload seed

    Returns:
        (TransmissionTrace, RateReport)
    """
    if topology.dedicated:
        raise RegimeError(f"{topology} is not a half-duplex topology")
    if op.n == 0:
        raise RegimeError(f"half-duplex sessions need n > 0, got {op}")
    if T_frames < 1:
        raise RegimeError(f"need at least one frame, got {T_frames}")
    _strategy_regime(op, strategy, topology)
    L, f = topology.frame_length, topology.forward_slots
    capacity = half_duplex_sum_capacity(op)
    if strategy == NO_FEEDBACK:
        alloc = allocation_for(op, cache)
        engine = SessionEngine(op, topology, NO_FEEDBACK, T_frames, seed,
                               decoder="block", block_len=alloc.block_len)
        transmit_allocation(engine, alloc, list(range(1, L * T_frames + 1)))
        return engine.finish(asymptotic=alloc.rate, capacity=capacity)
    return _feedback_frames(op, topology, T_frames, strategy, seed, L, f,
                            capacity)


def _feedback_frames(op, topology, T_frames, strategy, seed, L, f,
                     capacity):
    n, m, q = op.n, op.m, op.q
    # Bits of y1 transmitter 1 is missing per forward slot: its lowest
    # `need` levels, the image of x2 levels m - need + 1 .. m
    need = m if strategy == CHAINED else m - n
    fresh_u1 = range(m + 1, n + 1) if strategy == CHAINED else range(0)
    mask = (1 << need) - 1
    schedule = FeedbackSchedule(L, f, T_frames, need, capacity=n)
    engine = SessionEngine(op, topology, strategy, T_frames, seed)

    queue: deque[int] = deque()
    heard: list[int] = []
    x1_sent: dict[int, int] = {}
    x2_plans: dict[int, list] = {}
    learned: dict[int, int] = {}
    slot = k = reverse_index = next_learn = 0
    for _ in range(T_frames):
        for _ in range(f):
            slot += 1
            k += 1
            x2 = Signal(q)
            for j in range(1, q + 1):
                x2.put(j, *engine.fresh(2, slot, j))
            x1 = Signal(q)
            served = schedule.serves[k]
            if served is not None:
                bits = learned.pop(served)
                plan = x2_plans.pop(served)
                for i in range(1, need + 1):
                    x1.put(i, plan[m - need + i - 1],
                           (bits >> (need - i)) & 1)
            for j in fresh_u1:
                x1.put(j, *engine.fresh(1, slot, j))
            record = engine.forward(slot, x1, x2)
            x1_sent[k] = x1.value
            if need:
                x2_plans[k] = x2.plan
                low = record.y1 & mask
                queue.extend((low >> (need - i)) & 1
                             for i in range(1, need + 1))
        for _ in range(L - f):
            slot += 1
            burst = schedule.sent[reverse_index]
            reverse_index += 1
            r1 = 0
            for i in range(1, burst + 1):
                r1 |= queue.popleft() << (q - i)
            record = engine.reverse(slot, r1, 0)
            # Receiver 1's top n levels arrive on transmitter 1's lowest n
            for i in range(1, burst + 1):
                heard.append((record.y1 >> (n - i)) & 1)
            while need and len(heard) >= need:
                next_learn += 1
                word = 0
                for b in heard[:need]:
                    word = (word << 1) | b
                del heard[:need]
                own = (x1_sent.pop(next_learn) >> (q - n)) & mask
                learned[next_learn] = word ^ own
    logger.debug(f"{strategy} at {op}: transmitter 1 served "
                 f"{schedule.served_count} of {f * T_frames} forward slots")
    design = design_rate(op, strategy, topology.t)
    return engine.finish(asymptotic=design, capacity=capacity)


def admissible_strategies(op: OperatingPoint, L: int, f: int) -> list[str]:
    found = []
    if f == L:
        found.append(NO_FEEDBACK)
    if op.m < op.n:
        found.append(CHAINED)
    if op.m >= 2 * op.n:
        found.append(RELAY)
    return found


def sweep_t(op: OperatingPoint, L: int, T_frames: int, seed: int = 0,
            workers: int | None = None, cache=None) -> SweepResult:
    """
    Run every admissible strategy at every split f = 0..L and keep the best
    finite-horizon sum rate. Ties go to the larger f, then to no-feedback.
    """
    if op.n == 0:
        raise RegimeError(f"half-duplex sweep needs n > 0, got {op}")
    if L < 1:
        raise RegimeError(f"frame length must be positive, got {L}")
    workers = workers or sweep_workers()
    # Memo is filled before the pool starts
    allocation_for(op, cache)
    cells = [(f, s) for f in range(L + 1)
             for s in admissible_strategies(op, L, f)]

    def run(cell):
        f, strategy = cell
        topology = FeedbackTopology.half_duplex(L, f)
        _, report = half_duplex_session(op, topology, T_frames, strategy,
                                        seed, cache)
        return SweepRow(f=f, strategy=strategy,
                        bits_u1=report.delivered_u1,
                        bits_u2=report.delivered_u2,
                        rate=report.finite_sum_rate)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = sorted(pool.map(run, cells), key=lambda r: r.sort_key)
    best = max(rows, key=lambda r: (r.rate, r.f, r.strategy == NO_FEEDBACK))
    logger.info(f"Sweep at {op}, L={L}: best f={best.f} "
                f"({best.strategy}) rate {best.rate}")
    return SweepResult(op=op, L=L, T_frames=T_frames, rows=rows, best=best)
