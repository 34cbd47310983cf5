import logging

import numpy as np

from errors import ChannelError
from gf2 import solve_own
from models import Symbol

logger = logging.getLogger(__name__)

CHUNK_BITS = 64


class PayloadSource:
    """
    Per-user stream of uniform payload bits.

    Bit k of a user depends only on (seed, user, k), so any order of draws
    replays to the same values.
    """

    def __init__(self, seed: int):
        if not 0 <= seed < 2 ** 64:
            raise ChannelError(f"seed must be a 64-bit unsigned int: {seed}")
        self.seed = seed
        self._rngs = {u: np.random.default_rng([seed, u]) for u in (1, 2)}
        self._bits: dict[int, list[int]] = {1: [], 2: []}
        self._drawn = {1: 0, 2: 0}

    def _extend(self, user: int, size: int):
        bits = self._bits[user]
        while len(bits) < size:
            chunk = self._rngs[user].integers(0, 2, size=CHUNK_BITS,
                                              dtype=np.uint8)
            bits.extend(int(b) for b in chunk)

    def bit(self, symbol: Symbol) -> int:
        self._extend(symbol.user, symbol.index + 1)
        return self._bits[symbol.user][symbol.index]

    def draw(self, user: int) -> tuple[Symbol, int]:
        symbol = Symbol(user, self._drawn[user])
        self._drawn[user] += 1
        return symbol, self.bit(symbol)

    def drawn(self, user: int) -> int:
        return self._drawn[user]


def evaluate(plan, values: dict[Symbol, int]) -> int:
    """Integer value of a per-level plan (level 1 first) under `values`."""
    out = 0
    for symbols in plan:
        bit = 0
        for s in symbols:
            bit ^= values[s]
        out = (out << 1) | bit
    return out


class PeelingDecoder:
    """
    Receiver that resolves XOR equations one unknown at a time.

    Every received level is an equation: the XOR of its plan symbols
    equals the observed bit. Known symbols are substituted, and any
    equation left with a single unknown resolves it. Symbols of both users
    are tracked; only the receiver's own user goes into the ledger.
    """

    def __init__(self, user: int):
        self.user = user
        self.known: dict[Symbol, int] = {}
        self.resolved_at: dict[Symbol, int] = {}
        self.conflicts: list[tuple[int, int | None]] = []
        self._pending: list[list] = []
        self._watch: dict[Symbol, list[int]] = {}

    def observe(self, slot: int, plan, value: int):
        width = len(plan)
        queue = []
        for j, symbols in enumerate(plan, start=1):
            bit = (value >> (width - j)) & 1
            unknown = set()
            for s in symbols:
                if s in self.known:
                    bit ^= self.known[s]
                else:
                    unknown.add(s)
            if not unknown:
                if bit:
                    self.conflicts.append((slot, j))
                continue
            eq = [unknown, bit, slot, j]
            idx = len(self._pending)
            self._pending.append(eq)
            for s in unknown:
                self._watch.setdefault(s, []).append(idx)
            if len(unknown) == 1:
                queue.append(idx)
        self._peel(slot, queue)

    def _peel(self, slot: int, queue: list[int]):
        while queue:
            eq = self._pending[queue.pop()]
            unknown, bit = eq[0], eq[1]
            if len(unknown) != 1:
                continue
            s = next(iter(unknown))
            unknown.clear()
            if s in self.known:
                if self.known[s] != bit:
                    self.conflicts.append((eq[2], eq[3]))
                continue
            self.known[s] = bit
            if s.user == self.user:
                self.resolved_at[s] = slot
            for idx in self._watch.pop(s, []):
                other = self._pending[idx]
                if s in other[0]:
                    other[0].discard(s)
                    other[1] ^= bit
                    if len(other[0]) == 1:
                        queue.append(idx)
                    elif not other[0] and other[1]:
                        self.conflicts.append((other[2], other[3]))


class BlockDecoder:
    """
    Receiver for linear block codes: Gaussian elimination over the
    symbols of the current block, restarted at every block boundary.
    """

    def __init__(self, user: int):
        self.user = user
        self.known: dict[Symbol, int] = {}
        self.resolved_at: dict[Symbol, int] = {}
        self.conflicts: list[tuple[int, int | None]] = []
        self._equations: list[tuple[frozenset, int]] = []

    def start_block(self):
        self._equations = []

    def observe(self, slot: int, plan, value: int):
        width = len(plan)
        for j, symbols in enumerate(plan, start=1):
            bit = (value >> (width - j)) & 1
            if symbols:
                self._equations.append((symbols, bit))
            elif bit:
                self.conflicts.append((slot, j))
        self._solve(slot)

    def _solve(self, slot: int):
        index: dict[Symbol, int] = {}
        for symbols, _ in self._equations:
            for s in symbols:
                index.setdefault(s, len(index))
        rows = []
        for symbols, bit in self._equations:
            mask = 0
            for s in symbols:
                mask |= 1 << index[s]
            rows.append((mask, bit))
        own = [index[s] for s in index
               if s.user == self.user and s not in self.known]
        try:
            solved = solve_own(rows, own)
        except ValueError:
            self.conflicts.append((slot, None))
            return
        by_position = {v: s for s, v in index.items()}
        for pos, bit in solved.items():
            s = by_position[pos]
            self.known[s] = bit
            self.resolved_at[s] = slot
