import logging
import os
import threading

from errors import OracleError
from models import Allocation, OperatingPoint

logger = logging.getLogger(__name__)


def _encode_generators(gens: tuple[int, ...], bits: int) -> str:
    if not gens:
        return "-"
    return ",".join(format(g, f"0{bits}b") for g in gens)


def _decode_generators(text: str, bits: int) -> tuple[int, ...]:
    if text == "-":
        return ()
    gens = []
    for word in text.split(","):
        if len(word) != bits or any(c not in "01" for c in word):
            raise ValueError(f"bad generator {word!r}")
        gens.append(int(word, 2))
    return tuple(gens)


class AllocationCache:
    """
    Text file of certified no-feedback allocations, one per line:
    `n m block sum_bits witness`, where the witness lists user-1 generators,
    a semicolon, then user-2 generators, each an MSB-first bit string of
    block * q levels, `-` for a user with none.
    """
    path: str

    def __init__(self, path: str | None = None):
        self.path = path or os.environ.get("allocation_cache",
                                           "allocations.txt")
        self._lock = threading.Lock()
        self._entries: dict[tuple[int, int, int], Allocation] = {}
        self._load()

    def _load(self):
        if not os.path.exists(self.path):
            return
        with open(self.path) as fh:
            for number, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    key, alloc = self.parse_line(line)
                except ValueError as e:
                    raise OracleError(f"{self.path}:{number}: {e}") from e
                self._entries[key] = alloc
        logger.info(f"Loaded {len(self._entries)} cached allocations "
                    f"from {self.path}")

    @staticmethod
    def parse_line(line: str) -> tuple[tuple[int, int, int], Allocation]:
        fields = line.split()
        if len(fields) != 5:
            raise ValueError(f"expected 5 fields, got {len(fields)}")
        n, m, block, sum_bits = (int(x) for x in fields[:4])
        if fields[4].count(";") != 1:
            raise ValueError("witness needs exactly one ';'")
        left, right = fields[4].split(";")
        op = OperatingPoint(n=n, m=m)
        bits = op.q * block
        alloc = Allocation(width=op.q, block_len=block,
                           generators_u1=_decode_generators(left, bits),
                           generators_u2=_decode_generators(right, bits),
                           source="cache")
        if alloc.sum_bits != sum_bits:
            raise ValueError(f"sum_bits {sum_bits} but witness carries "
                             f"{alloc.sum_bits}")
        return (n, m, block), alloc

    @staticmethod
    def format_line(op: OperatingPoint, alloc: Allocation) -> str:
        bits = alloc.width * alloc.block_len
        witness = (_encode_generators(alloc.generators_u1, bits) + ";"
                   + _encode_generators(alloc.generators_u2, bits))
        return f"{op.n} {op.m} {alloc.block_len} {alloc.sum_bits} {witness}"

    def _write(self):
        lines = []
        for (n, m, _), alloc in sorted(self._entries.items()):
            lines.append(self.format_line(OperatingPoint(n=n, m=m), alloc))
        with open(self.path, "w") as fh:
            fh.write("".join(line + "\n" for line in lines))

    def get(self, op: OperatingPoint) -> Allocation | None:
        # Highest-rate entry over the cached block lengths
        with self._lock:
            found = [a for (n, m, _), a in self._entries.items()
                     if (n, m) == (op.n, op.m)]
        if not found:
            return None
        return max(found, key=lambda a: (a.rate, -a.block_len))

    def put(self, op: OperatingPoint, alloc: Allocation) -> bool:
        key = (op.n, op.m, alloc.block_len)
        stored = alloc.model_copy(update={"source": "cache",
                                          "certified": False})
        with self._lock:
            if self._entries.get(key) == stored:
                return False
            self._entries[key] = stored
            self._write()
        return True

    def entries(self) -> list[tuple[OperatingPoint, Allocation]]:
        with self._lock:
            items = sorted(self._entries.items())
        return [(OperatingPoint(n=n, m=m), a) for (n, m, _), a in items]

    def reset(self):
        with self._lock:
            self._entries.clear()
            self._write()
