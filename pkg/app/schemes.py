"""
Session engines for the dedicated-feedback and no-feedback schemes.

Encoders work on real bits: transmitter 1 learns user 2's bits only from
what its feedback link carries. Receivers decode from their outputs and
the public per-level plans, never from the payload.
"""
import logging
from fractions import Fraction

from capacity import capacity_for, fb_sum_capacity
from channel import forward_law, observation, reverse_law
from errors import RegimeError
from models import (
    Allocation,
    FeedbackTopology,
    FeedbackVariant,
    LedgerEntry,
    LevelVector,
    OperatingPoint,
    RateReport,
    SlotRecord,
    Symbol,
    TransmissionTrace,
    VerificationFailure,
    VerificationReport,
)
from oracle import allocation_for
from payload import BlockDecoder, PayloadSource, PeelingDecoder, evaluate

logger = logging.getLogger(__name__)

EMPTY: frozenset = frozenset()


def shift_plan(plan: tuple, drop: int) -> tuple:
    q = len(plan)
    if drop >= q:
        return (EMPTY,) * q
    return (EMPTY,) * drop + tuple(plan[:q - drop])


def forward_plan(p1: tuple, p2: tuple, op: OperatingPoint):
    """Symbolic channel law: which payload symbols reach every output level."""
    q = op.q
    y1 = tuple(a ^ b for a, b in zip(shift_plan(p1, q - op.n),
                                      shift_plan(p2, q - op.m)))
    y2 = tuple(a ^ b for a, b in zip(shift_plan(p1, q - op.m),
                                      shift_plan(p2, q - op.n)))
    return y1, y2


class Signal:
    """A transmit vector under construction: plan and bits, level by level."""

    def __init__(self, width: int):
        self.width = width
        self.plan = [EMPTY] * width
        self.value = 0

    def put(self, level: int, symbols: frozenset, bit: int):
        self.plan[level - 1] = symbols
        self.value |= bit << (self.width - level)


class SessionEngine:
    """
    Single-threaded state machine shared by all schemes: draws payload,
    pushes slots through the channel, feeds both receivers and keeps the
    records that become the trace.
    """

    def __init__(self, op: OperatingPoint, topology: FeedbackTopology,
                 scheme: str, horizon: int, seed: int,
                 decoder: str = "peeling", block_len: int = 1):
        self.op = op
        self.topology = topology
        self.scheme = scheme
        self.horizon = horizon
        self.seed = seed
        self.decoder = decoder
        self.block_len = block_len
        self.source = PayloadSource(seed)
        self.decoders = make_decoders(decoder)
        self.records: list[SlotRecord] = []
        self.emitted: dict[Symbol, tuple[int, int]] = {}
        self.forward_slots = 0
        self.reverse_slots = 0

    def fresh(self, user: int, slot: int, level: int):
        symbol, bit = self.source.draw(user)
        self.emitted[symbol] = (slot, level)
        return frozenset((symbol,)), bit

    def forward(self, slot: int, x1: Signal, x2: Signal) -> SlotRecord:
        y1, y2 = forward_law(x1.value, x2.value, self.op)
        y1_plan, y2_plan = forward_plan(tuple(x1.plan), tuple(x2.plan),
                                        self.op)
        self.decoders[1].observe(slot, y1_plan, y1)
        self.decoders[2].observe(slot, y2_plan, y2)
        fb1 = fb2 = ()
        if self.topology.dedicated:
            fb1 = observation(self.topology, 1, y1, y2)
            fb2 = observation(self.topology, 2, y1, y2)
        record = SlotRecord(slot=slot, direction="F", x1=x1.value,
                            x2=x2.value, y1=y1, y2=y2, fb1=fb1, fb2=fb2,
                            x1_plan=tuple(x1.plan), x2_plan=tuple(x2.plan),
                            y1_plan=y1_plan, y2_plan=y2_plan)
        self.records.append(record)
        self.forward_slots += 1
        return record

    def reverse(self, slot: int, r1: int, r2: int) -> SlotRecord:
        z1, z2 = reverse_law(r1, r2, self.op)
        record = SlotRecord(slot=slot, direction="R", x1=r1, x2=r2,
                            y1=z1, y2=z2)
        self.records.append(record)
        self.reverse_slots += 1
        return record

    def start_block(self):
        for dec in self.decoders.values():
            if isinstance(dec, BlockDecoder):
                dec.start_block()

    def finish(self, asymptotic: Fraction, capacity):
        ledger = []
        for symbol in sorted(self.emitted):
            slot, level = self.emitted[symbol]
            dec = self.decoders[symbol.user]
            resolved = dec.resolved_at.get(symbol)
            value = dec.known.get(symbol) if resolved is not None else None
            ledger.append(LedgerEntry(user=symbol.user, index=symbol.index,
                                      slot=slot, level=level,
                                      resolved_slot=resolved, value=value))
        for user, dec in self.decoders.items():
            for slot, level in dec.conflicts:
                logger.error(f"Receiver {user} inconsistent at slot {slot} "
                             f"level {level} ({self.scheme} at {self.op})")
        emitted = {u: self.source.drawn(u) for u in (1, 2)}
        slots = self.forward_slots + self.reverse_slots
        trace = TransmissionTrace(op=self.op, topology=self.topology,
                                  scheme=self.scheme, horizon=self.horizon,
                                  seed=self.seed, records=tuple(self.records),
                                  ledger=tuple(ledger), decoder=self.decoder,
                                  block_len=self.block_len)
        delivered = {u: len(trace.resolved(u)) for u in (1, 2)}
        max_delay = max((e.delay for e in trace.ledger
                         if e.delay is not None), default=0)
        report = RateReport(
            scheme=self.scheme,
            delivered_u1=delivered[1],
            delivered_u2=delivered[2],
            undelivered_u1=emitted[1] - delivered[1],
            undelivered_u2=emitted[2] - delivered[2],
            forward_slots=self.forward_slots,
            reverse_slots=self.reverse_slots,
            finite_sum_rate=Fraction(delivered[1] + delivered[2],
                                     max(slots, 1)),
            asymptotic_rate=Fraction(asymptotic),
            formula_capacity=capacity,
            max_decoding_delay=max_delay)
        logger.info(f"{self.scheme} session {self.op} {self.topology} "
                    f"horizon {self.horizon}: delivered "
                    f"({delivered[1]}, {delivered[2]}) over {slots} slots")
        return trace, report


def make_decoders(decoder: str):
    cls = BlockDecoder if decoder == "block" else PeelingDecoder
    return {1: cls(1), 2: cls(2)}


def _feedback_topology(topology: FeedbackTopology | None) -> FeedbackTopology:
    topology = topology or FeedbackTopology.dedicated_link(
        FeedbackVariant.ONE_LINK)
    if topology.variant in (FeedbackVariant.NONE,
                            FeedbackVariant.HALF_DUPLEX):
        raise RegimeError(f"{topology} gives transmitter 1 no dedicated "
                          f"view of receiver 1")
    return topology


def one_link_session(op: OperatingPoint, T: int, seed: int = 0,
                     topology: FeedbackTopology | None = None):
    """
    Chained interference cancellation with feedback from receiver 1 only.

    Transmitter 2 sends n fresh bits every slot. Transmitter 1 repeats the
    top m levels of user 2's previous slot, recovered from its feedback,
    on its own levels 1..m and puts n - m fresh bits below them. Receiver
    1 peels the interference level by level as the repeats arrive.

    Parameters:
        op (OperatingPoint): channel with m <= n
        T (int): horizon in slots, at least 2
        seed (int): payload seed
        topology (FeedbackTopology): dedicated variant, one-link by default

    Returns:
        (TransmissionTrace, RateReport)
    """
    topology = _feedback_topology(topology)
    if op.m > op.n:
        raise RegimeError(f"one-link scheme needs m <= n, got {op}; "
                          f"use the relay or no-feedback session")
    if op.m == op.n:
        logger.info(f"alpha = 1 at {op}: feedback gains nothing, "
                    f"running the no-feedback session")
        return no_feedback_session(op, T, seed, topology=topology)
    if T < 2:
        raise RegimeError(f"one-link scheme needs T >= 2, got {T}")
    n, m = op.n, op.m
    engine = SessionEngine(op, topology, "one-link", T, seed)
    heard_mask = (1 << m) - 1
    prev = None
    for slot in range(1, T + 1):
        x2 = Signal(n)
        for j in range(1, n + 1):
            x2.put(j, *engine.fresh(2, slot, j))
        x1 = Signal(n)
        if prev is not None:
            prev_x1, prev_y1, prev_x2_plan = prev
            # y1 ^ x1 is x2 seen through the cross link: its top m levels
            heard = (prev_y1 ^ prev_x1) & heard_mask
            for j in range(1, m + 1):
                x1.put(j, prev_x2_plan[j - 1], (heard >> (m - j)) & 1)
        for j in range(m + 1, n + 1):
            x1.put(j, *engine.fresh(1, slot, j))
        record = engine.forward(slot, x1, x2)
        prev = (x1.value, record.fb1[0], x2.plan)
    return engine.finish(asymptotic=2 * n - m,
                         capacity=fb_sum_capacity(op, topology.variant))


def relay_session(op: OperatingPoint, T: int, seed: int = 0,
                  topology: FeedbackTopology | None = None):
    """
    User 1 idles and its pair acts as a relay for user 2.

    Transmitter 2 sends m fresh bits per slot. The top n reach receiver 2
    directly; the other m - n reach receiver 1, come back to transmitter 1
    over feedback and are forwarded on its top m - n levels in the next
    slot, where they land clear of the direct signal at receiver 2.
    """
    topology = _feedback_topology(topology)
    if op.m < 2 * op.n:
        raise RegimeError(f"relay needs m >= 2n, got {op}: relayed levels "
                          f"would collide at receiver 2")
    if T < 2:
        raise RegimeError(f"relay needs T >= 2, got {T}")
    n, m = op.n, op.m
    extra = m - n
    engine = SessionEngine(op, topology, "relay", T, seed)
    prev = None
    for slot in range(1, T + 1):
        x2 = Signal(m)
        for j in range(1, m + 1):
            x2.put(j, *engine.fresh(2, slot, j))
        x1 = Signal(m)
        if prev is not None:
            prev_x1, prev_y1, prev_x2_plan = prev
            learned = prev_y1 ^ (prev_x1 >> extra)
            for j in range(1, extra + 1):
                level = n + j
                x1.put(j, prev_x2_plan[level - 1],
                       (learned >> (m - level)) & 1)
        record = engine.forward(slot, x1, x2)
        prev = (x1.value, record.fb1[0], x2.plan)
    return engine.finish(asymptotic=m,
                         capacity=fb_sum_capacity(op, topology.variant))


def transmit_allocation(engine: SessionEngine, alloc: Allocation,
                        slots: list[int]):
    """Send a linear allocation block by block over the given slots."""
    q, b = alloc.width, alloc.block_len
    v = q * b
    chunk = (1 << q) - 1
    for start in range(0, len(slots), b):
        block_slots = slots[start:start + b]
        engine.start_block()
        words = {}
        for user in (1, 2):
            plan, value = [EMPTY] * v, 0
            for g in alloc.generators(user):
                lead = v - g.bit_length()
                if lead // q >= len(block_slots):
                    continue
                symbols, bit = engine.fresh(user, block_slots[lead // q],
                                            lead % q + 1)
                for pos in range(v):
                    if g >> (v - 1 - pos) & 1:
                        plan[pos] = plan[pos] | symbols
                if bit:
                    value ^= g
            words[user] = (plan, value)
        for s, slot in enumerate(block_slots):
            signals = []
            for user in (1, 2):
                plan, value = words[user]
                sig = Signal(q)
                sig.plan = plan[s * q:(s + 1) * q]
                sig.value = (value >> ((b - 1 - s) * q)) & chunk
                signals.append(sig)
            engine.forward(slot, *signals)


def no_feedback_session(op: OperatingPoint, T: int, seed: int = 0,
                        topology: FeedbackTopology | None = None,
                        cache=None):
    """
    Fixed linear allocation reaching the no-feedback sum capacity; the
    allocation comes certified from the oracle.
    """
    topology = topology or FeedbackTopology.dedicated_link(
        FeedbackVariant.NONE)
    if op.n == 0:
        raise RegimeError(f"no-feedback session needs n > 0, got {op}")
    if T < 1:
        raise RegimeError(f"horizon must be positive, got {T}")
    alloc = allocation_for(op, cache)
    engine = SessionEngine(op, topology, "no-feedback", T, seed,
                           decoder="block", block_len=alloc.block_len)
    transmit_allocation(engine, alloc, list(range(1, T + 1)))
    return engine.finish(asymptotic=alloc.rate,
                         capacity=capacity_for(op, topology))


def dedicated_session(op: OperatingPoint, topology: FeedbackTopology,
                      T: int, seed: int = 0, cache=None):
    """
    Pick the scheme for a dedicated topology: chained cancellation below
    alpha = 1, relay from alpha = 2 on, no feedback in between.
    """
    if topology.variant == FeedbackVariant.NONE:
        return no_feedback_session(op, T, seed, topology=topology,
                                   cache=cache)
    if not topology.dedicated:
        raise RegimeError("half-duplex runs through half_duplex_session")
    if op.m < op.n:
        return one_link_session(op, T, seed, topology=topology)
    if op.m >= 2 * op.n:
        return relay_session(op, T, seed, topology=topology)
    return no_feedback_session(op, T, seed, topology=topology, cache=cache)


def _channel_failures(record: SlotRecord, op: OperatingPoint):
    law = forward_law if record.direction == "F" else reverse_law
    expected = law(record.x1, record.x2, op)
    q = op.q
    for user, got, want in ((1, record.y1, expected[0]),
                            (2, record.y2, expected[1])):
        diff = got ^ want
        for j in range(1, q + 1):
            if diff >> (q - j) & 1:
                yield VerificationFailure(
                    slot=record.slot, user=user, level=j,
                    reason="recorded output disagrees with the channel law")


def decode_check(trace: TransmissionTrace,
                 report: RateReport | None = None) -> VerificationReport:
    """
    Re-verify a finished session.

    Recomputes every output from the recorded inputs, checks the inputs
    against their plans, replays both receivers from the recorded outputs
    alone and compares what they resolve with the ledger and the payload.
    With a report, delivered counts and the maximum delay are checked too.
    """
    op = trace.op
    q = op.q
    source = PayloadSource(trace.seed)
    failures = []
    decoders = make_decoders(trace.decoder)
    forward_seen = 0
    for record in trace.records:
        failures.extend(_channel_failures(record, op))
        if record.direction != "F":
            continue
        if trace.decoder == "block" and forward_seen % trace.block_len == 0:
            for dec in decoders.values():
                dec.start_block()
        forward_seen += 1
        for user, plan, x in ((1, record.x1_plan, record.x1),
                              (2, record.x2_plan, record.x2)):
            if len(plan) != q:
                failures.append(VerificationFailure(
                    slot=record.slot, user=user,
                    reason="no decoding plan recorded"))
                continue
            values = {s: source.bit(s) for symbols in plan for s in symbols}
            diff = evaluate(plan, values) ^ x
            for j in range(1, q + 1):
                if diff >> (q - j) & 1:
                    failures.append(VerificationFailure(
                        slot=record.slot, user=user, level=j,
                        reason="transmitted level disagrees with its plan"))
        if len(record.y1_plan) == q and len(record.y2_plan) == q:
            decoders[1].observe(record.slot, record.y1_plan, record.y1)
            decoders[2].observe(record.slot, record.y2_plan, record.y2)
    for user, dec in decoders.items():
        for slot, level in dec.conflicts:
            failures.append(VerificationFailure(
                slot=slot, user=user, level=level,
                reason="received equations are inconsistent"))
    for entry in trace.ledger:
        symbol = Symbol(entry.user, entry.index)
        dec = decoders[entry.user]
        replayed = dec.resolved_at.get(symbol)
        if replayed != entry.resolved_slot or (
                replayed is not None and dec.known[symbol] != entry.value):
            failures.append(VerificationFailure(
                slot=entry.slot, user=entry.user, level=entry.level,
                reason="ledger disagrees with the replayed receiver"))
        if entry.resolved_slot is None:
            continue
        if entry.delay < 0:
            failures.append(VerificationFailure(
                slot=entry.slot, user=entry.user, level=entry.level,
                reason="bit resolved before it was sent"))
        if entry.value != source.bit(symbol):
            failures.append(VerificationFailure(
                slot=entry.resolved_slot, user=entry.user, level=entry.level,
                reason="decoded bit differs from the payload"))
    delivered = {u: len(trace.resolved(u)) for u in (1, 2)}
    max_delay = max((e.delay for e in trace.ledger
                     if e.delay is not None), default=0)
    if report is not None:
        last = trace.records[-1].slot if trace.records else 0
        if (report.delivered_u1, report.delivered_u2) != (delivered[1],
                                                         delivered[2]):
            failures.append(VerificationFailure(
                slot=last, reason="report counts differ from the ledger"))
        if report.max_decoding_delay != max_delay:
            failures.append(VerificationFailure(
                slot=last, reason=f"report delay "
                                  f"{report.max_decoding_delay} but ledger "
                                  f"says {max_delay}"))
    for failure in failures:
        logger.error(f"decode_check {trace.scheme} {op}: {failure}")
    return VerificationReport(failures=tuple(failures),
                              checked_slots=len(trace.records),
                              checked_bits=len(trace.ledger))


def _vector(value: int, q: int) -> str:
    return str(LevelVector.from_int(value, q))


def _views(views: tuple[int, ...], q: int) -> str:
    if not views:
        return "-"
    return "+".join(_vector(v, q) for v in views)


def format_trace(trace: TransmissionTrace) -> str:
    """
    Line-oriented trace: a `#` header, then one line per slot,
    `slot|dir|x1|x2|y1|y2|fb1|fb2`, vectors as MSB-first 0/1 strings.
    """
    op, topo = trace.op, trace.topology
    header = (f"# scheme={trace.scheme} n={op.n} m={op.m} "
              f"topology={topo.variant.value} horizon={trace.horizon} "
              f"seed={trace.seed}")
    if not topo.dedicated:
        header += f" L={topo.frame_length} f={topo.forward_slots}"
    lines = [header]
    q = op.q
    for r in trace.records:
        lines.append("|".join([
            str(r.slot), r.direction, _vector(r.x1, q), _vector(r.x2, q),
            _vector(r.y1, q), _vector(r.y2, q), _views(r.fb1, q),
            _views(r.fb2, q)]))
    return "\n".join(lines) + "\n"


def write_trace(trace: TransmissionTrace, path: str):
    with open(path, "w") as fh:
        fh.write(format_trace(trace))


def parse_trace(text: str) -> tuple[dict[str, str], list[SlotRecord]]:
    header: dict[str, str] = {}
    records = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            for item in line[1:].split():
                key, _, value = item.partition("=")
                header[key] = value
            continue
        fields = line.split("|")
        if len(fields) != 8:
            raise ValueError(f"trace line needs 8 fields: {line!r}")

        def views(text):
            if text == "-":
                return ()
            return tuple(LevelVector.from_string(v).to_int()
                         for v in text.split("+"))
        vec = [LevelVector.from_string(f).to_int() for f in fields[2:6]]
        records.append(SlotRecord(slot=int(fields[0]), direction=fields[1],
                                  x1=vec[0], x2=vec[1], y1=vec[2], y2=vec[3],
                                  fb1=views(fields[6]), fb2=views(fields[7])))
    return header, records


def check_trace_text(text: str) -> VerificationReport:
    """Channel-law check of an exported trace; plans are not exported."""
    header, records = parse_trace(text)
    op = OperatingPoint(n=int(header["n"]), m=int(header["m"]))
    failures = []
    for record in records:
        failures.extend(_channel_failures(record, op))
    return VerificationReport(failures=tuple(failures),
                              checked_slots=len(records))
