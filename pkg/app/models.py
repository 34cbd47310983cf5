from enum import Enum
from fractions import Fraction
from typing import NamedTuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import ChannelError, DecodeFailure


class Symbol(NamedTuple):
    # Payload bit number `index` (0-based draw order) of `user`
    user: int
    index: int


class OperatingPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=0)
    m: int = Field(ge=0)

    @model_validator(mode="after")
    def _has_levels(self):
        if self.n + self.m == 0:
            raise ValueError("n = m = 0 leaves the channel without levels")
        return self

    @property
    def q(self) -> int:
        return max(self.n, self.m)

    @property
    def alpha(self) -> Fraction | None:
        if self.n == 0:
            return None
        return Fraction(self.m, self.n)

    def __str__(self):
        return f"({self.n},{self.m})"


class LevelVector(BaseModel):
    """
    Fixed-width binary signal vector, level 1 is the most significant bit.

    The integer form keeps level j at bit (width - j), so the MSB-first
    string and the integer describe the same vector.
    """
    model_config = ConfigDict(frozen=True)

    width: int = Field(ge=0)
    bits: tuple[int, ...]

    @model_validator(mode="after")
    def _check_bits(self):
        if len(self.bits) != self.width:
            raise ValueError(f"{len(self.bits)} bits for width {self.width}")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("levels must hold 0 or 1")
        return self

    @classmethod
    def zeros(cls, width: int) -> "LevelVector":
        return cls(width=width, bits=(0,) * width)

    @classmethod
    def from_int(cls, value: int, width: int) -> "LevelVector":
        if value < 0 or value >> width:
            raise ChannelError(f"{value} does not fit in {width} levels")
        return cls(width=width,
                   bits=tuple((value >> (width - j)) & 1
                              for j in range(1, width + 1)))

    @classmethod
    def from_string(cls, text: str) -> "LevelVector":
        if any(c not in "01" for c in text):
            raise ChannelError(f"not a level string: {text!r}")
        return cls(width=len(text), bits=tuple(int(c) for c in text))

    def to_int(self) -> int:
        value = 0
        for b in self.bits:
            value = (value << 1) | b
        return value

    def level(self, j: int) -> int:
        if not 1 <= j <= self.width:
            raise ChannelError(f"level {j} outside 1..{self.width}")
        return self.bits[j - 1]

    def __xor__(self, other: "LevelVector") -> "LevelVector":
        if not isinstance(other, LevelVector):
            return NotImplemented
        if other.width != self.width:
            raise ChannelError(
                f"XOR of widths {self.width} and {other.width}")
        return LevelVector(width=self.width,
                           bits=tuple(a ^ b for a, b in
                                      zip(self.bits, other.bits)))

    def __str__(self):
        return "".join(str(b) for b in self.bits)


class ShiftOperator(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: int = Field(ge=0)
    drop: int = Field(ge=0)

    @model_validator(mode="after")
    def _drop_fits(self):
        if self.drop > self.width:
            raise ValueError(f"drop {self.drop} exceeds width {self.width}")
        return self

    def apply(self, x: LevelVector) -> LevelVector:
        if x.width != self.width:
            raise ChannelError(
                f"vector of width {x.width} on a width {self.width} shift")
        return LevelVector.from_int(x.to_int() >> self.drop, self.width)


class FeedbackVariant(str, Enum):
    NONE = "none"
    ONE_LINK = "one-link"
    TWO_LINK = "two-link"
    FOUR_LINK = "four-link"
    HALF_DUPLEX = "half-duplex"


class FeedbackTopology(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: FeedbackVariant
    # Only for half-duplex: f forward slots, then L - f reverse slots
    frame_length: int | None = None
    forward_slots: int | None = None

    @model_validator(mode="after")
    def _check_frame(self):
        if self.variant == FeedbackVariant.HALF_DUPLEX:
            if self.frame_length is None or self.forward_slots is None:
                raise ValueError("half-duplex needs frame_length and "
                                 "forward_slots")
            if self.frame_length < 1:
                raise ValueError("frame_length must be positive")
            if not 0 <= self.forward_slots <= self.frame_length:
                raise ValueError("forward_slots must lie in 0..frame_length")
        elif self.frame_length is not None or self.forward_slots is not None:
            raise ValueError(f"{self.variant.value} takes no frame schedule")
        return self

    @classmethod
    def dedicated_link(cls, variant: FeedbackVariant | str):
        return cls(variant=FeedbackVariant(variant))

    @classmethod
    def half_duplex(cls, frame_length: int, forward_slots: int):
        return cls(variant=FeedbackVariant.HALF_DUPLEX,
                   frame_length=frame_length, forward_slots=forward_slots)

    @property
    def dedicated(self) -> bool:
        return self.variant != FeedbackVariant.HALF_DUPLEX

    @property
    def t(self) -> Fraction:
        if self.dedicated:
            return Fraction(1)
        return Fraction(self.forward_slots, self.frame_length)

    @property
    def reverse_slots(self) -> int:
        if self.dedicated:
            return 0
        return self.frame_length - self.forward_slots

    def __str__(self):
        if self.dedicated:
            return self.variant.value
        return f"half-duplex(L={self.frame_length},f={self.forward_slots})"


class FeedbackView(BaseModel):
    tx1: tuple[LevelVector, ...]
    tx2: tuple[LevelVector, ...]


class BoundKind(str, Enum):
    EXACT = "exact"
    INTERVAL = "interval"


class CapacityValue(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    # Lower end of the interval when bound_kind is interval
    bits_per_forward_slot: Fraction
    upper: Fraction | None = None
    model: FeedbackVariant
    bound_kind: BoundKind = BoundKind.EXACT

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.bits_per_forward_slot < 0:
            raise ValueError("capacity cannot be negative")
        if self.bound_kind == BoundKind.INTERVAL:
            if self.upper is None or self.upper < self.bits_per_forward_slot:
                raise ValueError("interval needs lower <= upper")
        elif self.upper is not None:
            raise ValueError("exact capacity carries no upper end")
        return self

    @property
    def lower(self) -> Fraction:
        return self.bits_per_forward_slot

    @property
    def high(self) -> Fraction:
        if self.upper is None:
            return self.bits_per_forward_slot
        return self.upper

    def render(self) -> str:
        if self.bound_kind == BoundKind.INTERVAL:
            return f"[{self.bits_per_forward_slot},{self.upper}]"
        return str(self.bits_per_forward_slot)


class SchemeConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    l_min: int
    l_max: int

    @model_validator(mode="after")
    def _ordered(self):
        if self.l_min > self.l_max:
            raise ValueError("l_min must not exceed l_max")
        return self


class SlotRecord(BaseModel):
    """
    One channel use.

    Forward slots ("F") hold transmitter inputs in x1/x2 and receiver
    outputs in y1/y2. Reverse slots ("R") hold what the receivers send in
    x1/x2 and what the transmitters hear in y1/y2. Plans give, per level,
    the payload symbols XORed into that level; receivers decode from the
    y plans, which depend only on the public scheme, never on the payload.
    """
    slot: int = Field(ge=1)
    direction: str = Field(pattern="^[FR]$")
    x1: int
    x2: int
    y1: int
    y2: int
    fb1: tuple[int, ...] = ()
    fb2: tuple[int, ...] = ()
    x1_plan: tuple[frozenset[Symbol], ...] = ()
    x2_plan: tuple[frozenset[Symbol], ...] = ()
    y1_plan: tuple[frozenset[Symbol], ...] = ()
    y2_plan: tuple[frozenset[Symbol], ...] = ()


class LedgerEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    user: int = Field(ge=1, le=2)
    index: int = Field(ge=0)
    slot: int = Field(ge=1)
    level: int = Field(ge=1)
    resolved_slot: int | None = None
    value: int | None = None

    @property
    def delay(self) -> int | None:
        if self.resolved_slot is None:
            return None
        return self.resolved_slot - self.slot


class TransmissionTrace(BaseModel):
    op: OperatingPoint
    topology: FeedbackTopology
    scheme: str
    # Forward slots for dedicated sessions, frames for half-duplex ones
    horizon: int = Field(ge=1)
    seed: int
    records: tuple[SlotRecord, ...]
    ledger: tuple[LedgerEntry, ...]
    # How receivers decode: "peeling" or "block" (restarted every block)
    decoder: str = "peeling"
    block_len: int = 1

    def resolved(self, user: int) -> list[LedgerEntry]:
        return [e for e in self.ledger
                if e.user == user and e.resolved_slot is not None]


class RateReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    scheme: str
    delivered_u1: int
    delivered_u2: int
    undelivered_u1: int = 0
    undelivered_u2: int = 0
    forward_slots: int
    reverse_slots: int = 0
    finite_sum_rate: Fraction
    asymptotic_rate: Fraction
    formula_capacity: CapacityValue
    max_decoding_delay: int = 0

    @property
    def delivered(self) -> int:
        return self.delivered_u1 + self.delivered_u2


class Allocation(BaseModel):
    """
    Linear no-feedback code over a block of slots.

    Each generator is a (block_len * width)-bit vector, slot 1 of the block
    in the most significant chunk. A user sends the XOR of the generators
    selected by its payload bits, one bit per generator.
    """
    model_config = ConfigDict(frozen=True)

    width: int = Field(ge=0)
    block_len: int = Field(ge=1, le=2)
    generators_u1: tuple[int, ...]
    generators_u2: tuple[int, ...]
    certified: bool = False
    source: str = "search"

    @model_validator(mode="after")
    def _fits(self):
        top = 1 << (self.width * self.block_len)
        for g in self.generators_u1 + self.generators_u2:
            if not 0 < g < top:
                raise ValueError(f"generator {g} outside the block")
        return self

    @property
    def bits_u1(self) -> int:
        return len(self.generators_u1)

    @property
    def bits_u2(self) -> int:
        return len(self.generators_u2)

    @property
    def sum_bits(self) -> int:
        return self.bits_u1 + self.bits_u2

    @property
    def rate(self) -> Fraction:
        return Fraction(self.sum_bits, self.block_len)

    def generators(self, user: int) -> tuple[int, ...]:
        return self.generators_u1 if user == 1 else self.generators_u2

    def levels(self, user: int) -> set[tuple[int, int]]:
        # (slot in block, level) pairs the user ever drives
        used = 0
        for g in self.generators(user):
            used |= g
        v = self.width * self.block_len
        return {(pos // self.width + 1, pos % self.width + 1)
                for pos in range(v) if (used >> (v - 1 - pos)) & 1}


class StrategySpace(BaseModel):
    op: OperatingPoint
    T: int = Field(ge=1)
    topology: FeedbackTopology
    # Message sets are powers of two: M_k = 2 ** bits_cap_uk
    bits_cap_u1: int = Field(ge=0)
    bits_cap_u2: int = Field(ge=0)


class FeedbackSearchReport(BaseModel):
    space: StrategySpace
    best_bits: int
    best_pair: tuple[int, int]
    explored_nodes: int

    @property
    def caps(self) -> tuple[int, int]:
        return self.space.bits_cap_u1, self.space.bits_cap_u2


class WCurveRow(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    op: OperatingPoint
    block_len: int
    oracle_rate: Fraction | None
    formula: Fraction
    detail: str = ""

    @property
    def match(self) -> bool:
        return self.oracle_rate == self.formula


class WCurveReport(BaseModel):
    rows: tuple[WCurveRow, ...]

    @property
    def mismatches(self) -> list[WCurveRow]:
        return [r for r in self.rows if not r.match]

    @property
    def passed(self) -> bool:
        return not self.mismatches


class VerificationFailure(BaseModel):
    model_config = ConfigDict(frozen=True)

    slot: int
    user: int | None = None
    level: int | None = None
    reason: str

    def __str__(self):
        where = f"slot {self.slot}"
        if self.user is not None:
            where += f" user {self.user}"
        if self.level is not None:
            where += f" level {self.level}"
        return f"{where}: {self.reason}"


class VerificationReport(BaseModel):
    failures: tuple[VerificationFailure, ...] = ()
    checked_slots: int = 0
    checked_bits: int = 0

    @property
    def passed(self) -> bool:
        return not self.failures

    def raise_for_failures(self):
        if self.failures:
            raise DecodeFailure(self.failures)


class SweepRow(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    f: int
    strategy: str
    bits_u1: int
    bits_u2: int
    rate: Fraction

    @property
    def sort_key(self):
        return self.f, self.strategy


class SweepResult(BaseModel):
    op: OperatingPoint
    L: int
    T_frames: int
    rows: tuple[SweepRow, ...]
    best: SweepRow


class RunConfig(BaseModel):
    """Validated command line of one run, echoed as the `# config` line."""
    model_config = ConfigDict(frozen=True)

    command: str = Field(pattern="^(capacity|simulate|sweep|curve|verify)$")
    n: int | None = Field(default=None, ge=0)
    m: int | None = Field(default=None, ge=0)
    T: int = Field(default=10, ge=1)
    topology: FeedbackVariant = FeedbackVariant.ONE_LINK
    L: int | None = Field(default=None, ge=1)
    f: int | None = Field(default=None, ge=0)
    strategy: str | None = None
    seed: int = Field(default=0, ge=0, lt=1 << 64)
    n_max: int = Field(default=4, ge=1)
    m_max: int = Field(default=8, ge=0)
    m_step: int = Field(default=1, ge=1)
    alpha_max: int = Field(default=3, ge=0)
    workers: int = Field(default=1, ge=1)
    output: str | None = None
    trace: str | None = None
    cache: str | None = None

    @model_validator(mode="after")
    def _check_flags(self):
        if self.command in ("capacity", "simulate", "sweep") and (
                self.n is None or self.m is None):
            raise ValueError(f"{self.command} needs --n and --m")
        if self.command == "curve":
            if self.n is None or not 1 <= self.n <= 60:
                raise ValueError("curve needs 1 <= --n <= 60")
        if self.command == "sweep" and self.L is None:
            raise ValueError("sweep needs --L")
        half_duplex = self.topology == FeedbackVariant.HALF_DUPLEX
        if self.command == "simulate" and half_duplex:
            if self.L is None or self.f is None:
                raise ValueError("half-duplex simulate needs --L and --f")
            if self.f > self.L:
                raise ValueError("--f must not exceed --L")
        elif self.command == "simulate" and (self.f is not None
                                             or self.strategy is not None):
            raise ValueError("--f and --strategy apply to half-duplex only")
        return self

    def echo(self) -> str:
        # Paths and thread count never change the output bytes
        fields = self.model_dump(exclude_none=True,
                                 exclude={"workers", "output", "trace",
                                          "cache"})
        fields["topology"] = self.topology.value
        return "# config " + " ".join(f"{k}={v}" for k, v in fields.items())
