"""Brute-force ground truth on integer grids.

Exhaustively enumerates admissible input pairs for a region and decides the
fairness question exactly, with no solver and no timeouts.  Deliberately
written against the concrete evaluator only, so it stays an independent
check on the partition/prune/encode pipeline.  Tractable only for small
grids; enumeration is capped and refuses rather than truncates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import OracleCapError
from .model_io import Network, classify_batch, classify_logits, forward
from .partitioner import Partition, Status
from .query import FairnessPredicate, PairRelationKind

DEFAULT_PAIR_CAP = 10_000_000


@dataclass(frozen=True)
class GridSpec:
    """Finite integer ranges for each attribute plus an enumeration cap."""

    ranges: tuple[tuple[int, int], ...]
    pair_cap: int = DEFAULT_PAIR_CAP

    def __post_init__(self) -> None:
        for lo, hi in self.ranges:
            if lo > hi:
                raise ValueError(f"empty range [{lo}, {hi}]")

    @property
    def point_count(self) -> int:
        return math.prod(hi - lo + 1 for lo, hi in self.ranges)

    @classmethod
    def from_box(
        cls, box: Sequence[tuple[float, float]], pair_cap: int = DEFAULT_PAIR_CAP
    ) -> "GridSpec":
        ranges = []
        for lo, hi in box:
            ilo, ihi = math.ceil(lo), math.floor(hi)
            if ilo > ihi:
                raise ValueError(f"box interval [{lo}, {hi}] contains no integers")
            ranges.append((ilo, ihi))
        return cls(tuple(ranges), pair_cap)


@dataclass(frozen=True)
class OracleResult:
    status: Status
    witness: tuple[np.ndarray, np.ndarray] | None = None
    pairs_checked: int = 0


def _as_box(box) -> tuple[tuple[float, float], ...]:
    return box.box if isinstance(box, Partition) else tuple(box)


def _partner_values(
    grid: GridSpec, pred: FairnessPredicate, x: Sequence[int]
) -> list[np.ndarray]:
    """Admissible x' values per attribute, given x (ε-ball ∩ grid; protected
    takes every other value in range)."""
    out = []
    for i, ((lo, hi), rel) in enumerate(zip(grid.ranges, pred.pair_constraints)):
        if rel.kind is PairRelationKind.EQUAL:
            out.append(np.array([x[i]], dtype=np.int64))
        elif rel.kind is PairRelationKind.ABS_DIFF_AT_MOST:
            a = max(lo, math.ceil(x[i] - rel.epsilon))
            b = min(hi, math.floor(x[i] + rel.epsilon))
            out.append(np.arange(a, b + 1, dtype=np.int64))
        else:
            vals = np.arange(lo, hi + 1, dtype=np.int64)
            out.append(vals[vals != x[i]])
    return out


def brute_force(
    net: Network,
    pred: FairnessPredicate,
    box,
    pair_cap: int | None = None,
) -> OracleResult:
    """Exact verdict for one region: enumerate every admissible pair and
    return the first classification-differing one, else unsat.

    ``x`` advances lexicographically; for each ``x``, partners are the cross
    product of per-attribute admissible values, so the total work is far
    below the naive all-pairs square.
    """
    grid = GridSpec.from_box(_as_box(box), pair_cap or DEFAULT_PAIR_CAP)
    axes = [np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in grid.ranges]
    pairs_budgeted = 0
    pairs_checked = 0
    kind = net.output_activation
    for x in itertools.product(*axes):
        partners = _partner_values(grid, pred, x)
        count = math.prod(v.size for v in partners)
        if count == 0:
            continue
        pairs_budgeted += count
        if pairs_budgeted > grid.pair_cap:
            raise OracleCapError(
                f"enumeration needs more than {grid.pair_cap} pairs; "
                f"shrink the region or raise the cap"
            )
        label_x = classify_logits(kind, forward(net, np.asarray(x, dtype=np.float64)))
        mesh = np.meshgrid(*partners, indexing="ij")
        xp_batch = np.column_stack([m.reshape(-1) for m in mesh]).astype(np.float64)
        labels = classify_batch(net, xp_batch)
        pairs_checked += xp_batch.shape[0]
        differ = np.nonzero(labels != label_x)[0]
        if differ.size:
            j = int(differ[0])
            return OracleResult(
                Status.SAT,
                witness=(np.asarray(x, dtype=np.float64), xp_batch[j]),
                pairs_checked=pairs_checked,
            )
    return OracleResult(Status.UNSAT, witness=None, pairs_checked=pairs_checked)


def brute_force_bounds(
    net: Network, box, point_cap: int = 1_000_000
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact per-neuron weighted-sum extrema over the integer grid of the
    region, one (min, max) array pair per layer.

    Grid extrema always lie inside sound interval bounds; on wide layers
    they may be strictly inside because interval arithmetic forgets input
    correlations.
    """
    grid = GridSpec.from_box(_as_box(box))
    if grid.point_count > point_cap:
        raise OracleCapError(
            f"grid has {grid.point_count} points, cap is {point_cap}"
        )
    axes = [np.arange(lo, hi + 1, dtype=np.float64) for lo, hi in grid.ranges]
    mesh = np.meshgrid(*axes, indexing="ij")
    a = np.column_stack([m.reshape(-1) for m in mesh])
    out = []
    for layer in net.layers:
        z = a @ layer.weights.T + layer.biases
        out.append((z.min(axis=0), z.max(axis=0)))
        a = np.maximum(z, 0.0) if layer.activation.value == "relu" else z
    return out
