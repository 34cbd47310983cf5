"""
Exhaustive verification of the capacity formulas.

Two independent searches live here: the zero-error linear allocation search
that backs the no-feedback baseline, and the encoder-table search that
bounds what feedback can buy on tiny instances. A constructive allocation
covers points too wide for the search.
"""
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

from capacity import fb_sum_capacity, no_fb_sum_capacity
from channel import forward_law, observation
from errors import GuardExceeded, OracleError
from gf2 import Span, block_shift, dim_of_sum, image, kernel, subspaces
from models import (
    Allocation,
    FeedbackSearchReport,
    FeedbackVariant,
    OperatingPoint,
    StrategySpace,
    WCurveReport,
    WCurveRow,
)

logger = logging.getLogger(__name__)

EXHAUSTIVE_CERTIFY_BITS = 16
FEEDBACK_SEARCH_MAX_WIDTH = 2
FEEDBACK_SEARCH_MAX_HORIZON = 2
FEEDBACK_SEARCH_MAX_BITS = 8

_memo: dict[OperatingPoint, Allocation] = {}
_memo_lock = threading.Lock()


def search_max_dimension() -> int:
    return int(os.environ.get(
        "SEARCH_MAX_DIMENSION", 8))  # pragma: no mutate


def session_search_max_width() -> int:
    return int(os.environ.get(
        "SESSION_SEARCH_MAX_WIDTH", 6))  # pragma: no mutate


def feedback_search_node_budget() -> int:
    return int(os.environ.get(
        "FEEDBACK_SEARCH_NODE_BUDGET", 2_000_000))  # pragma: no mutate


class _BlockMaps:
    """Direct and cross maps of the channel acting on a block of slots."""

    def __init__(self, op: OperatingPoint, block: int):
        q = op.q
        self.op = op
        self.block = block
        self.v = q * block
        self.direct = lambda x: block_shift(x, q - op.n, q, block)
        self.cross = lambda x: block_shift(x, q - op.m, q, block)
        units = [1 << i for i in range(self.v)]
        self.im_direct = image(units, self.direct)
        self.im_cross = image(units, self.cross)
        self.ker_cross = kernel(self.cross, self.v)
        self.direct_of_ker_cross = image(self.ker_cross, self.direct)
        v = self.v
        both = kernel(lambda x: (self.direct(x) << v) | self.cross(x), v)
        self.dim_ker_both = len(both)

    def partner_dim(self, u1: tuple[int, ...]) -> int | None:
        """
        Largest user-2 dimension compatible with user-1 space u1, or None
        when the direct link cannot carry u1 injectively.

        With A = D^-1(C u1), B = C^-1(D u1) and Z = ker C the answer is
        min(v - dim A, v - dim B + dim Z - dim(Z and A)).
        """
        v = self.v
        d_u1 = image(u1, self.direct)
        if len(d_u1) < len(u1):
            return None
        c_u1 = image(u1, self.cross)
        dim_a = v + len(c_u1) - dim_of_sum(self.im_direct, c_u1)
        dim_b = v + len(d_u1) - dim_of_sum(self.im_cross, d_u1)
        dim_z = len(self.ker_cross)
        dim_za = (self.dim_ker_both + len(self.direct_of_ker_cross)
                  + len(c_u1) - dim_of_sum(self.direct_of_ker_cross, c_u1))
        return min(v - dim_a, v - dim_b + dim_z - dim_za)

    def partner(self, u1: tuple[int, ...]) -> list[int]:
        """A user-2 basis reaching partner_dim(u1)."""
        c_u1 = image(u1, self.cross)
        d_u1 = image(u1, self.direct)
        everything = range(1, 1 << self.v)
        a = Span(x for x in everything if c_u1.contains(self.direct(x)))
        b = Span(x for x in everything if d_u1.contains(self.cross(x)))
        z_and_a = Span(x for x in everything
                       if self.ker_cross.contains(x) and a.contains(x))
        # Complement of (Z and A) inside Z goes in first
        chosen = []
        grown = z_and_a.copy()
        for z in self.ker_cross:
            if grown.add(z):
                chosen.append(z)
        avoid_a = Span(a.basis() + chosen)
        avoid_b = b.copy()
        for x in everything:
            if avoid_a.contains(x) or avoid_b.contains(x):
                continue
            chosen.append(x)
            avoid_a.add(x)
            avoid_b.add(x)
        return chosen


def _search_block(op: OperatingPoint, block: int) -> Allocation:
    maps = _BlockMaps(op, block)
    rank_direct = len(maps.im_direct)
    best_sum, best_u1 = -1, ()
    explored = 0
    for k in range(rank_direct, -1, -1):
        if k + rank_direct <= best_sum:
            break
        for u1 in subspaces(maps.v, k):
            explored += 1
            d2 = maps.partner_dim(u1)
            if d2 is not None and k + d2 > best_sum:
                best_sum, best_u1 = k + d2, u1
            if best_sum == 2 * rank_direct:
                break
        if best_sum == 2 * rank_direct:
            break
    logger.info(f"Allocation search {op} block {block}: {explored} user-1 "
                f"spaces, best {best_sum} bits")
    u2 = maps.partner(best_u1)
    if len(best_u1) + len(u2) != best_sum:
        raise OracleError(f"witness for {op} block {block} has "
                          f"{len(best_u1) + len(u2)} bits, expected "
                          f"{best_sum}")
    return Allocation(width=op.q, block_len=block,
                      generators_u1=tuple(best_u1),
                      generators_u2=tuple(u2), source="search")


def search_level_allocations(op: OperatingPoint,
                             max_block: int = 1) -> Allocation:
    """
    Best zero-error linear allocation over blocks of 1..max_block slots.

    Every user-1 subspace is enumerated and paired with the largest
    compatible user-2 subspace, so the result is exact over linear codes
    and a certified lower bound on the no-feedback sum capacity.
    """
    if max_block not in (1, 2):
        raise GuardExceeded(f"block length {max_block} is not 1 or 2")
    guard = search_max_dimension()
    if op.q * max_block > guard:
        raise GuardExceeded(f"search over {op.q * max_block} block levels "
                            f"at {op} exceeds the guard of {guard}")
    best = None
    for block in range(1, max_block + 1):
        found = certify(op, _search_block(op, block))
        if best is None or found.rate > best.rate:
            best = found
    return best


def _chain_positions(op: OperatingPoint, step: int, start: int) -> list[int]:
    return list(range(start, op.q + 1, step))


def construct_allocation(op: OperatingPoint) -> Allocation:
    """
    Explicit block-1 allocation reaching the no-feedback sum capacity.

    Levels that map onto each other under the |n - m| offset form chains,
    and every chain is an independent small channel tiled with gadgets.
    """
    if op.n == 0:
        raise OracleError(f"no allocation is defined at {op} (n = 0)")
    q, n, m = op.q, op.n, op.m

    def unit(level):
        return 1 << (q - level)

    u1, u2 = [], []
    if m == n:
        u1 = [unit(j) for j in range(1, n + 1)]
    elif m < n:
        step = n - m
        for r in range(1, step + 1):
            chain = _chain_positions(op, step, r)
            length = len(chain)

            def e(p):
                return unit(chain[p - 1])
            if length <= 2:
                u1.append(e(length))
                u2.append(e(length))
                continue
            top = length if length % 2 else length - 4
            for p in range(1, top + 1, 2):
                u1.append(e(p))
                u2.append(e(p))
            if length % 2 == 0:
                p = length - 3
                u1 += [e(p), e(p + 1), e(p + 3)]
                u2 += [e(p + 3), e(p) ^ e(p + 1)]
    else:
        step = m - n
        for r in range(1, step + 1):
            chain = _chain_positions(op, step, r)
            length = len(chain)

            def e(p):
                return unit(chain[p - 1])
            first = 1
            if length % 2 and length >= 3:
                u1 += [e(1), e(2)]
                u2.append(e(1) ^ e(2))
                first = 4
            for p in range(first, length, 2):
                u1.append(e(p))
                u2.append(e(p))
    return Allocation(width=q, block_len=1, generators_u1=tuple(u1),
                      generators_u2=tuple(u2), source="construction")


def _rank_certificate(op: OperatingPoint, alloc: Allocation) -> str | None:
    maps = _BlockMaps(op, alloc.block_len)
    g1, g2 = alloc.generators_u1, alloc.generators_u2
    for user, own, other in ((1, g1, g2), (2, g2, g1)):
        if len(Span(own)) != len(own):
            return f"user {user} generators are dependent"
        d_own = image(own, maps.direct)
        if len(d_own) != len(own):
            return f"direct link folds user {user} generators"
        c_other = image(other, maps.cross)
        if dim_of_sum(d_own, c_other) != len(d_own) + len(c_other):
            return f"receiver {user} sees its signal under interference"
    return None


def _exhaustive_certificate(op: OperatingPoint,
                            alloc: Allocation) -> str | None:
    maps = _BlockMaps(op, alloc.block_len)

    def codewords(gens):
        words = []
        for w in range(1 << len(gens)):
            x = 0
            for i, g in enumerate(gens):
                if w >> i & 1:
                    x ^= g
            words.append(x)
        return words

    x1s, x2s = codewords(alloc.generators_u1), codewords(alloc.generators_u2)
    seen1: dict[int, int] = {}
    seen2: dict[int, int] = {}
    for w1, x1 in enumerate(x1s):
        for w2, x2 in enumerate(x2s):
            y1 = maps.direct(x1) ^ maps.cross(x2)
            y2 = maps.cross(x1) ^ maps.direct(x2)
            if seen1.setdefault(y1, w1) != w1:
                return f"receiver 1 confuses messages at output {y1}"
            if seen2.setdefault(y2, w2) != w2:
                return f"receiver 2 confuses messages at output {y2}"
    return None


def certify(op: OperatingPoint, alloc: Allocation) -> Allocation:
    """
    Attach the decodability certificate: every receiver maps its output
    block to its own payload unambiguously. Exhaustive over all payloads
    when small enough, by the equivalent rank conditions otherwise.
    """
    if alloc.width != op.q:
        raise OracleError(f"allocation of width {alloc.width} at {op}")
    if alloc.sum_bits <= EXHAUSTIVE_CERTIFY_BITS:
        problem = _exhaustive_certificate(op, alloc)
    else:
        problem = _rank_certificate(op, alloc)
    if problem:
        raise OracleError(f"allocation at {op} is not zero-error: {problem}")
    return alloc.model_copy(update={"certified": True})


def allocation_for(op: OperatingPoint, cache=None) -> Allocation:
    """
    Certified block-1 allocation achieving the no-feedback sum capacity,
    memoized per operating point and optionally kept in a result cache.
    """
    with _memo_lock:
        if op in _memo:
            return _memo[op]
    target = no_fb_sum_capacity(op).bits_per_forward_slot
    alloc = cache.get(op) if cache is not None else None
    if alloc is not None:
        alloc = certify(op, alloc)
    elif op.q <= session_search_max_width():
        alloc = search_level_allocations(op, max_block=1)
    else:
        alloc = certify(op, construct_allocation(op))
    if alloc.rate != target:
        raise OracleError(f"no allocation at {op} matches the no-feedback "
                          f"sum capacity {target}: best {alloc.rate}")
    if cache is not None:
        cache.put(op, alloc)
    with _memo_lock:
        _memo[op] = alloc
    return alloc


def clear_memo():
    with _memo_lock:
        _memo.clear()


def _block_two_permitted(op: OperatingPoint) -> bool:
    return op.m % 2 == 1 and op.n <= op.m <= 2 * op.n


def _w_curve_row(op: OperatingPoint) -> WCurveRow:
    formula = no_fb_sum_capacity(op).bits_per_forward_slot
    try:
        alloc = search_level_allocations(op, max_block=1)
    except OracleError as e:
        return WCurveRow(op=op, block_len=1, oracle_rate=None,
                         formula=formula, detail=str(e))
    if (alloc.rate < formula and _block_two_permitted(op)
            and 2 * op.q <= search_max_dimension()):
        alloc = search_level_allocations(op, max_block=2)
    detail = "" if alloc.rate == formula else \
        f"oracle {alloc.rate} vs formula {formula}"
    if alloc.rate > formula:
        detail = f"oracle {alloc.rate} exceeds formula {formula}"
    return WCurveRow(op=op, block_len=alloc.block_len,
                     oracle_rate=alloc.rate, formula=formula, detail=detail)


def verify_w_curve(grid, workers: int = 1) -> WCurveReport:
    """
    Check the no-feedback formula against the allocation search on every
    grid point; mismatches are reported, not raised.
    """
    points = sorted(set(grid), key=lambda p: (p.n, p.m))
    guard = search_max_dimension()
    for op in points:
        if op.n == 0:
            raise GuardExceeded(f"{op} has no alpha; W-curve needs n > 0")
        if op.q > guard:
            raise GuardExceeded(f"{op} has width {op.q} above the "
                                f"search guard of {guard}")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(_w_curve_row, points))
    report = WCurveReport(rows=tuple(rows))
    for row in report.mismatches:
        logger.error(f"W-curve mismatch at {row.op}: {row.detail}")
    logger.info(f"W-curve check over {len(rows)} points: "
                f"{len(report.mismatches)} mismatches")
    return report


class _TableSearch:
    """
    Depth-first search over encoder tables for fixed message-set sizes.

    Message pairs are visited in lexicographic order and encoder entries
    are assigned the first time a pair needs them. Each completed pair
    must keep both receivers' output sequences unambiguous.
    """

    def __init__(self, space: StrategySpace, bits_u1: int, bits_u2: int,
                 budget: int):
        self.space = space
        self.op = space.op
        self.values = range(1 << space.op.q)
        self.pairs = [(w1, w2) for w1 in range(1 << bits_u1)
                      for w2 in range(1 << bits_u2)]
        self.table: dict[tuple, int] = {}
        self.out1: dict[tuple, int] = {}
        self.out2: dict[tuple, int] = {}
        self.budget = budget
        self.nodes = 0

    def _observed(self, user: int, y1s: tuple, y2s: tuple) -> tuple:
        seen = ()
        for y1, y2 in zip(y1s, y2s):
            seen += observation(self.space.topology, user, y1, y2)
        return seen

    def _floor(self, user: int, slot: int, w: int) -> int:
        # Message labels of one user are interchangeable: relabelling them
        # maps a zero-error code to a zero-error code with the same sizes,
        # so slot-1 codewords may be taken nondecreasing in the label.
        if slot == 0 and w > 0:
            return self.table[(user, 0, w - 1, ())]
        return 0

    def _choices(self, key: tuple):
        if key in self.table:
            yield self.table[key]
            return
        for value in self.values:
            if value < self._floor(key[0], key[1], key[2]):
                continue
            self.nodes += 1
            if self.nodes > self.budget:
                raise GuardExceeded(
                    f"feedback search at {self.op} passed the node budget "
                    f"of {self.budget}")
            self.table[key] = value
            yield value
            del self.table[key]

    def run(self) -> bool:
        return self._slot(0, 0, (), ())

    def _slot(self, pi: int, t: int, y1s: tuple, y2s: tuple) -> bool:
        if pi == len(self.pairs):
            return True
        w1, w2 = self.pairs[pi]
        if t == self.space.T:
            return self._register(pi, w1, w2, y1s, y2s)
        key1 = (1, t, w1, self._observed(1, y1s, y2s))
        key2 = (2, t, w2, self._observed(2, y1s, y2s))
        for x1 in self._choices(key1):
            for x2 in self._choices(key2):
                y1, y2 = forward_law(x1, x2, self.op)
                if self._slot(pi, t + 1, y1s + (y1,), y2s + (y2,)):
                    return True
        return False

    def _register(self, pi, w1, w2, y1s, y2s) -> bool:
        if self.out1.get(y1s, w1) != w1 or self.out2.get(y2s, w2) != w2:
            return False
        added1 = y1s not in self.out1
        added2 = y2s not in self.out2
        self.out1[y1s] = w1
        self.out2[y2s] = w2
        ok = self._slot(pi + 1, 0, (), ())
        if not ok:
            if added1:
                del self.out1[y1s]
            if added2:
                del self.out2[y2s]
        return ok


def exhaustive_feedback_search(space: StrategySpace) -> FeedbackSearchReport:
    """
    Largest zero-error total bits log2(M1 * M2) over T slots.

    Message sizes are powers of two within the caps of the space. The
    search walks the staircase of feasible (bits_u1, bits_u2) pairs, which
    is monotone because any code restricts to smaller message sets.
    """
    op = space.op
    if not space.topology.dedicated:
        raise GuardExceeded("feedback search covers dedicated topologies")
    if op.q > FEEDBACK_SEARCH_MAX_WIDTH:
        raise GuardExceeded(f"feedback search needs q <= "
                            f"{FEEDBACK_SEARCH_MAX_WIDTH}, got {op}")
    if space.T > FEEDBACK_SEARCH_MAX_HORIZON:
        raise GuardExceeded(f"feedback search needs T <= "
                            f"{FEEDBACK_SEARCH_MAX_HORIZON}, got {space.T}")
    if space.bits_cap_u1 + space.bits_cap_u2 > FEEDBACK_SEARCH_MAX_BITS:
        raise GuardExceeded("message caps exceed M1 * M2 <= 256")
    budget = feedback_search_node_budget()
    nodes = 0

    def feasible(b1, b2):
        nonlocal nodes
        search = _TableSearch(space, b1, b2, budget - nodes)
        try:
            return search.run()
        finally:
            nodes += search.nodes

    best, best_pair = 0, (0, 0)
    b2, anchored = 0, False
    for b1 in range(space.bits_cap_u1, -1, -1):
        if not anchored:
            if not feasible(b1, 0):
                continue
            anchored = True
        while b2 < space.bits_cap_u2 and feasible(b1, b2 + 1):
            b2 += 1
        if b1 + b2 > best:
            best, best_pair = b1 + b2, (b1, b2)
    logger.info(f"Feedback search {op} T={space.T} "
                f"{space.topology.variant.value}: best {best} bits "
                f"{best_pair}, {nodes} nodes")
    return FeedbackSearchReport(space=space, best_bits=best,
                                best_pair=best_pair, explored_nodes=nodes)


def feedback_upper_bound(space: StrategySpace) -> Fraction:
    # Dedicated-feedback sum capacity over the horizon; no feedback sits below
    variant = space.topology.variant
    model = FeedbackVariant.ONE_LINK if variant == FeedbackVariant.NONE \
        else variant
    return fb_sum_capacity(space.op, model).bits_per_forward_slot * space.T
