"""
Linear algebra over GF(2) on integer bit masks.

A vector of dimension v is an int below 2 ** v. Bit v - 1 is coordinate 1,
matching the MSB-first level order used by the channel.
"""
from itertools import combinations
from typing import Callable, Iterable, Iterator


class Span:
    """Subspace kept as rows with distinct leading bits."""

    def __init__(self, vectors: Iterable[int] = ()):
        self._rows: dict[int, int] = {}
        for v in vectors:
            self.add(v)

    def reduce(self, v: int) -> int:
        # Zero exactly when v lies in the span
        while v:
            row = self._rows.get(v.bit_length() - 1)
            if row is None:
                return v
            v ^= row
        return 0

    def add(self, v: int) -> bool:
        r = self.reduce(v)
        if r:
            self._rows[r.bit_length() - 1] = r
            return True
        return False

    def contains(self, v: int) -> bool:
        return self.reduce(v) == 0

    def copy(self) -> "Span":
        clone = Span()
        clone._rows = dict(self._rows)
        return clone

    def basis(self) -> list[int]:
        return [self._rows[k] for k in sorted(self._rows, reverse=True)]

    def __len__(self):
        return len(self._rows)

    def __iter__(self):
        return iter(self.basis())


def dim_of_sum(*spans: Iterable[int]) -> int:
    total = Span()
    for s in spans:
        for v in s:
            total.add(v)
    return len(total)


def block_shift(v: int, drop: int, width: int, block: int) -> int:
    """Shift every width-bit chunk of v down by `drop` levels."""
    if drop >= width:
        return 0
    if block == 1:
        return v >> drop
    keep = (1 << (width - drop)) - 1
    out = 0
    for s in range(block):
        chunk = (v >> (s * width)) & ((1 << width) - 1)
        out |= ((chunk >> drop) & keep) << (s * width)
    return out


def image(vectors: Iterable[int], fn: Callable[[int], int]) -> Span:
    return Span(fn(v) for v in vectors)


def kernel(fn: Callable[[int], int], dim: int) -> Span:
    """Kernel of a linear map given by its action on ints of `dim` bits."""
    rows: dict[int, tuple[int, int]] = {}
    ker = Span()
    for i in range(dim):
        img, combo = fn(1 << i), 1 << i
        while img:
            top = img.bit_length() - 1
            if top not in rows:
                rows[top] = (img, combo)
                break
            r_img, r_combo = rows[top]
            img ^= r_img
            combo ^= r_combo
        if not img:
            ker.add(combo)
    return ker


def subspaces(dim: int, k: int) -> Iterator[tuple[int, ...]]:
    """
    Every k-dimensional subspace of GF(2)^dim exactly once, as the rows of
    its reduced echelon basis.
    """
    if k == 0:
        yield ()
        return
    for pivots in combinations(range(dim - 1, -1, -1), k):
        pivot_mask = 0
        for p in pivots:
            pivot_mask |= 1 << p
        frees = []
        for p in pivots:
            frees.append([b for b in range(p) if not pivot_mask >> b & 1])
        yield from _fill(pivots, frees, 0, ())


def _fill(pivots, frees, i, rows):
    if i == len(pivots):
        yield rows
        return
    free = frees[i]
    for pattern in range(1 << len(free)):
        row = 1 << pivots[i]
        for j, b in enumerate(free):
            if pattern >> j & 1:
                row |= 1 << b
        yield from _fill(pivots, frees, i + 1, rows + (row,))


def solve_own(equations: Iterable[tuple[int, int]], unknowns: Iterable[int]):
    """
    Values of the listed unknowns that the equations pin down.

    Equations are (mask, value) pairs over variable bits; the result maps
    each determined unknown bit position to its value. Raises ValueError
    when the equations are inconsistent.
    """
    aug = Span()
    for mask, value in equations:
        row = (mask << 1) | value
        r = aug.reduce(row)
        if r == 1:
            raise ValueError("inconsistent equations")
        if r:
            aug.add(r)
    solved = {}
    for u in unknowns:
        r = aug.reduce(1 << (u + 1))
        if r >> 1 == 0:
            solved[u] = r & 1
    return solved
