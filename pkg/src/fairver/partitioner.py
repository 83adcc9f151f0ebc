"""Input-domain partitioning and accumulation of per-region verdicts.

Every attribute whose range exceeds the query's maximum attribute size is
chopped into consecutive chunks of at most that width; the cross product of
per-attribute chunks forms the regions.  Relaxed attributes (an epsilon is
present) and the protected attribute are never split: both network copies
share each region's box, so splitting an attribute on which the two inputs
may legitimately differ would silently drop cross-region pairs and make an
all-regions-certified verdict unsound.

Regions are a deterministic stream indexed by id (mixed-radix over the
per-attribute chunk counts) and are visited in an order shuffled by a
seeded index permutation, so memory stays constant in the number of
regions.  Ids are independent of the shuffle seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

from .errors import QueryError
from .model_io import AttributeSchema
from .query import FairnessQuery


class Status(str, Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"
    ERROR = "error"


@dataclass(frozen=True)
class Partition:
    """One rectangular sub-region of the input domain."""

    id: int
    box: tuple[tuple[float, float], ...]


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


class _IndexPermutation:
    """Seeded bijection on [0, n) with O(1) memory (Feistel + cycle walking)."""

    _ROUNDS = 4

    def __init__(self, n: int, seed: int):
        self.n = n
        bits = max(2, (max(n - 1, 1)).bit_length())
        self._half = (bits + 1) // 2
        self._mask = (1 << self._half) - 1
        self._size = 1 << (2 * self._half)
        self._keys = [_splitmix64(seed * 0x51_7C_C1 + r + 1) for r in range(self._ROUNDS)]

    def _round(self, value: int, key: int) -> int:
        return _splitmix64(value ^ key) & self._mask

    def _encrypt(self, v: int) -> int:
        left = (v >> self._half) & self._mask
        right = v & self._mask
        for key in self._keys:
            left, right = right, left ^ self._round(right, key)
        return (left << self._half) | right

    def __call__(self, position: int) -> int:
        if self.n <= 1:
            return 0
        v = self._encrypt(position)
        while v >= self.n:
            v = self._encrypt(v)
        return v


@dataclass(frozen=True)
class _AttrChunks:
    """Chunking of one attribute: count plus enough data to rebuild any chunk."""

    lb: float
    ub: float
    integer: bool
    width: float
    count: int

    def chunk(self, j: int) -> tuple[float, float]:
        if not 0 <= j < self.count:
            raise IndexError(j)
        if self.count == 1:
            return (self.lb, self.ub)
        lo = self.lb + j * self.width
        if j == self.count - 1:
            return (lo, self.ub)
        if self.integer:
            return (lo, self.lb + (j + 1) * self.width - 1)
        return (lo, self.lb + (j + 1) * self.width)


class PartitionSet:
    """Lazy, shuffled stream of disjoint regions covering the domain box.

    ``box(id)`` is O(attributes); iteration yields regions in the seeded
    shuffle order.  ``diagnostic`` explains an empty set.
    """

    def __init__(
        self,
        chunks: Sequence[_AttrChunks],
        shuffle_seed: int,
        diagnostic: str | None = None,
    ):
        self._chunks = tuple(chunks)
        self.shuffle_seed = shuffle_seed
        self.diagnostic = diagnostic
        self.total = 0 if diagnostic else math.prod(c.count for c in self._chunks)
        self._perm = _IndexPermutation(self.total, shuffle_seed)

    def __len__(self) -> int:
        return self.total

    @property
    def chunk_counts(self) -> tuple[int, ...]:
        return tuple(c.count for c in self._chunks)

    def box(self, pid: int) -> Partition:
        if not 0 <= pid < self.total:
            raise IndexError(f"partition id {pid} out of range [0, {self.total})")
        digits = []
        rem = pid
        for count in reversed(self.chunk_counts):
            digits.append(rem % count)
            rem //= count
        digits.reverse()
        return Partition(
            id=pid, box=tuple(c.chunk(j) for c, j in zip(self._chunks, digits))
        )

    def ids_shuffled(self) -> Iterator[int]:
        for pos in range(self.total):
            yield self._perm(pos)

    def __iter__(self) -> Iterator[Partition]:
        for pid in self.ids_shuffled():
            yield self.box(pid)


def partition(
    domain_box: Sequence[tuple[float, float]],
    query: FairnessQuery,
    schema: AttributeSchema,
    shuffle_seed: int = 0,
) -> PartitionSet:
    """Split the domain box into regions of per-attribute width at most
    ``query.max_attribute_size``.

    Integer attributes get disjoint integer chunks ``[lo, lo+MS-1]``; real
    attributes get closed intervals sharing endpoints (a shared endpoint
    counts toward the lower chunk).  The final chunk absorbs any remainder.
    """
    ms = query.max_attribute_size
    if ms < 1:
        raise QueryError("max attribute size must be >= 1")
    never_split = set(query.protected) | set(query.epsilon.keys())
    chunks = []
    for i, ((lo, hi), attr) in enumerate(zip(domain_box, schema.attributes)):
        if lo > hi:
            return PartitionSet(
                [],
                shuffle_seed,
                diagnostic=(
                    f"empty domain: attribute {attr.name!r} has lo {lo} > hi {hi}"
                ),
            )
        if attr.integer:
            lo, hi = float(math.ceil(lo)), float(math.floor(hi))
            if lo > hi:
                return PartitionSet(
                    [],
                    shuffle_seed,
                    diagnostic=(
                        f"empty domain: attribute {attr.name!r} contains no integers"
                    ),
                )
        count = 1
        if i not in never_split and hi - lo > ms:
            count = math.ceil((hi - lo) / ms)
        chunks.append(
            _AttrChunks(lb=lo, ub=hi, integer=attr.integer, width=float(ms), count=count)
        )
    return PartitionSet(chunks, shuffle_seed)


@dataclass(frozen=True)
class Verdict:
    """Accumulated outcome over a set of region results."""

    status: Status
    counterexample: tuple | None
    coverage_pct: float
    counts: dict = field(default_factory=dict)


def accumulate(results: Sequence, total: int | None = None) -> Verdict:
    """Fold per-region results into an overall verdict.

    Any sat region makes the whole problem sat (first counterexample in the
    given order is reported); the problem is unsat only when every one of
    ``total`` regions is unsat; otherwise unknown.  Coverage is the fraction
    of regions decided either way.  ``results`` entries need ``status`` and
    ``counterexample`` attributes (or are bare ``Status`` values).
    """
    statuses = []
    witnesses = []
    for r in results:
        if isinstance(r, Status):
            statuses.append(r)
            witnesses.append(None)
        else:
            statuses.append(Status(r.status))
            witnesses.append(getattr(r, "counterexample", None))
    if total is None:
        total = len(statuses)
    if total < len(statuses):
        raise ValueError("total is smaller than the number of results")
    n_sat = sum(s is Status.SAT for s in statuses)
    n_unsat = sum(s is Status.UNSAT for s in statuses)
    n_unknown = sum(s is Status.UNKNOWN for s in statuses)
    n_error = sum(s is Status.ERROR for s in statuses)
    decided = n_sat + n_unsat
    coverage = 100.0 * decided / total if total else 100.0
    counts = {
        "total": total,
        "attempted": len(statuses),
        "sat": n_sat,
        "unsat": n_unsat,
        "unknown": n_unknown,
        "error": n_error,
    }
    if n_sat:
        first = next(i for i, s in enumerate(statuses) if s is Status.SAT)
        return Verdict(Status.SAT, witnesses[first], coverage, counts)
    if n_unsat == total:
        return Verdict(Status.UNSAT, None, coverage, counts)
    return Verdict(Status.UNKNOWN, None, coverage, counts)
