"""Per-region network pruning: provably sound removal/linearization plus a
profile-driven heuristic stage.

Sound pruning inspects the interval bounds of each hidden neuron over the
region: an upper bound <= 0 means the neuron never fires (drop it, it
contributes a constant 0), a lower bound >= 0 means its ReLU is the
identity (keep the weighted sum, drop the conditional).  Neurons whose
interval straddles zero get one exact-arithmetic solver query each, layer
by layer; proving the positive phase unsatisfiable removes them too.  A
failed or inconclusive query keeps the neuron: removals require proof.

Heuristic pruning profiles the network on uniform samples of the whole
input domain.  Neurons that never fire during profiling are candidates;
a candidate is dropped when even its largest negative-side magnitude stays
below a percentile of the same layer's non-candidate positive magnitudes.
That stage is not behaviour-preserving by proof, so its removals carry a
distinct provenance tag and are only used after the sound attempt ran out
of time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from . import smt
from .bounds import NeuronBounds
from .errors import InputError, SolverBackendError
from .model_io import (
    Activation,
    AttributeSchema,
    Layer,
    Network,
    OutputActivation,
    classify_logits,
)
from .partitioner import Status


class Provenance(str, Enum):
    INTERVAL_UB = "interval_ub"
    INTERVAL_LB = "interval_lb"
    INDIVIDUAL_VERIFICATION = "individual_verification"
    HEURISTIC = "heuristic"


NeuronId = tuple[int, int]


@dataclass(frozen=True)
class PrunedNetwork:
    """A network plus removal/linearization masks over its hidden neurons.

    ``removed`` neurons evaluate to the constant 0, ``linearized`` neurons
    to their bare weighted sum.  ``provenance`` records why each id was
    pruned; heuristic removals are the only ones not backed by proof.
    """

    base: Network
    removed: frozenset[NeuronId] = frozenset()
    linearized: frozenset[NeuronId] = frozenset()
    provenance: Mapping[NeuronId, Provenance] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "removed", frozenset(self.removed))
        object.__setattr__(self, "linearized", frozenset(self.linearized))
        object.__setattr__(self, "provenance", dict(self.provenance))
        overlap = self.removed & self.linearized
        if overlap:
            raise ValueError(f"neurons both removed and linearized: {sorted(overlap)}")
        hidden = set(self.base.hidden_ids())
        for nid in self.removed | self.linearized:
            if nid not in hidden:
                raise ValueError(f"{nid} is not a hidden neuron of the base network")
        for nid in self.removed | self.linearized:
            if nid not in self.provenance:
                raise ValueError(f"pruned neuron {nid} has no provenance")

    @property
    def has_heuristic_removals(self) -> bool:
        return any(p is Provenance.HEURISTIC for p in self.provenance.values())

    def remaining_hidden(self) -> int:
        return self.base.hidden_neuron_count - len(self.removed)


def compression_ratio(p: PrunedNetwork) -> float:
    """1 - remaining/original over hidden neuron counts; linearized neurons
    still count as remaining."""
    total = p.base.hidden_neuron_count
    if total == 0:
        return 0.0
    return 1.0 - p.remaining_hidden() / total


def sound_prune(
    net: Network,
    box: Sequence[tuple[float, float]],
    bnds: NeuronBounds,
    solver: "smt.SmtSession | None" = None,
    timeout_s: float = 100.0,
) -> PrunedNetwork:
    """Behaviour-preserving pruning over the region the bounds were computed
    for.  ``solver`` enables the per-neuron exact queries; without one only
    the interval stage runs (still sound, possibly less pruning)."""
    removed: set[NeuronId] = set()
    linearized: set[NeuronId] = set()
    provenance: dict[NeuronId, Provenance] = {}
    for li in range(len(net.layers) - 1):
        lb, ub = bnds.pre[li]
        undecided: list[int] = []
        for ni in range(net.layers[li].fan_out):
            if ub[ni] <= 0.0:
                removed.add((li, ni))
                provenance[(li, ni)] = Provenance.INTERVAL_UB
            elif lb[ni] >= 0.0:
                linearized.add((li, ni))
                provenance[(li, ni)] = Provenance.INTERVAL_LB
            else:
                undecided.append(ni)
        if solver is None or not undecided:
            continue
        pred_lo, pred_hi = bnds.predecessor(net, li)
        for ni in undecided:
            try:
                outcome = smt.individual_query(
                    pred_lo,
                    pred_hi,
                    net.layers[li].weights[ni],
                    float(net.layers[li].biases[ni]),
                    solver,
                    timeout_s=timeout_s,
                )
            except SolverBackendError:
                continue  # keep the neuron; removal needs proof
            if outcome.status is Status.UNSAT:
                removed.add((li, ni))
                provenance[(li, ni)] = Provenance.INDIVIDUAL_VERIFICATION
    return PrunedNetwork(
        base=net,
        removed=frozenset(removed),
        linearized=frozenset(linearized),
        provenance=provenance,
    )


def apply_pruning(p: PrunedNetwork, x: Sequence[float]) -> np.ndarray:
    """Evaluate the pruned network on one input (raw output logits)."""
    net = p.base
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != net.input_arity:
        raise InputError(
            f"expected input of length {net.input_arity}, got shape {v.shape}"
        )
    last = len(net.layers) - 1
    for li, layer in enumerate(net.layers):
        v = layer.weights @ v + layer.biases
        if li == last:
            break
        relu = np.maximum(v, 0.0)
        out = np.empty_like(v)
        for ni in range(v.shape[0]):
            if (li, ni) in p.removed:
                out[ni] = 0.0
            elif (li, ni) in p.linearized:
                out[ni] = v[ni]
            else:
                out[ni] = relu[ni]
        v = out
    return v


def apply_pruning_batch(p: PrunedNetwork, xs: np.ndarray) -> np.ndarray:
    """Batch variant of :func:`apply_pruning` (rows are inputs)."""
    net = p.base
    a = np.asarray(xs, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.input_arity:
        raise InputError(
            f"expected batch of shape (n, {net.input_arity}), got {a.shape}"
        )
    last = len(net.layers) - 1
    for li, layer in enumerate(net.layers):
        a = a @ layer.weights.T + layer.biases
        if li == last:
            break
        relu = np.maximum(a, 0.0)
        keep_linear = np.zeros(a.shape[1], dtype=bool)
        zero_out = np.zeros(a.shape[1], dtype=bool)
        for ni in range(a.shape[1]):
            if (li, ni) in p.removed:
                zero_out[ni] = True
            elif (li, ni) in p.linearized:
                keep_linear[ni] = True
        mixed = np.where(keep_linear, a, relu)
        mixed[:, zero_out] = 0.0
        a = mixed
    return a


def classify_pruned(p: PrunedNetwork, x: Sequence[float]) -> int:
    return classify_logits(p.base.output_activation, apply_pruning(p, x))


# ---------------------------------------------------------------------------
# Heuristic stage


@dataclass(frozen=True)
class NeuronProfile:
    """Simulation profile: per hidden neuron, the |WS| samples split by sign
    of the weighted sum, and whether the neuron ever fired."""

    seed: int
    sample_count: int
    mag_pos: Mapping[NeuronId, np.ndarray]
    mag_neg: Mapping[NeuronId, np.ndarray]
    candidates: frozenset[NeuronId]

    def layer_noncandidate_pool(self, li: int, layer_width: int) -> np.ndarray:
        """Pooled positive magnitudes of the layer's non-candidate neurons."""
        parts = [
            self.mag_pos[(li, ni)]
            for ni in range(layer_width)
            if (li, ni) not in self.candidates and self.mag_pos[(li, ni)].size
        ]
        if not parts:
            return np.empty(0, dtype=np.float64)
        return np.concatenate(parts)

    def layer_percentiles(
        self, li: int, layer_width: int, qs: Sequence[float] = (5, 25, 50, 75, 95)
    ) -> dict[float, float]:
        pool = self.layer_noncandidate_pool(li, layer_width)
        if pool.size == 0:
            return {}
        return {float(q): float(np.percentile(pool, q)) for q in qs}


def profile(
    net: Network, schema: AttributeSchema, size: int = 1000, seed: int = 0
) -> NeuronProfile:
    """Profile hidden neurons on ``size`` uniform valid inputs.

    Deterministic for a given seed.  A neuron stays a removal candidate only
    if its weighted sum never goes positive across every simulation.
    """
    if size < 1:
        raise ValueError("profile size must be >= 1")
    rng = np.random.default_rng(seed)
    xs = schema.sample(rng, size)
    mag_pos: dict[NeuronId, np.ndarray] = {}
    mag_neg: dict[NeuronId, np.ndarray] = {}
    candidates: set[NeuronId] = set()
    a = xs
    for li, layer in enumerate(net.layers[:-1]):
        z = a @ layer.weights.T + layer.biases
        for ni in range(layer.fan_out):
            col = z[:, ni]
            pos = col >= 0.0
            mag_pos[(li, ni)] = np.abs(col[pos])
            mag_neg[(li, ni)] = np.abs(col[~pos])
            if not (col > 0.0).any():
                candidates.add((li, ni))
        a = np.maximum(z, 0.0)
    return NeuronProfile(
        seed=seed,
        sample_count=size,
        mag_pos=mag_pos,
        mag_neg=mag_neg,
        candidates=frozenset(candidates),
    )


def heuristic_prune(
    p: PrunedNetwork, prof: NeuronProfile, tolerance_pct: float = 5.0
) -> PrunedNetwork:
    """Additionally remove profile-inactive neurons whose largest negative
    magnitude stays below the tolerance percentile of the same layer's
    non-candidate positive magnitudes.

    Only candidates (never fired during profiling) are ever touched; layers
    with no non-candidates offer no comparison distribution and are left
    alone, as is everything at tolerance <= 0.  Tolerance is a percentile in
    [0, 100].
    """
    if not 0.0 <= tolerance_pct <= 100.0:
        raise ValueError("tolerance must be a percentile in [0, 100]")
    if tolerance_pct <= 0.0:
        return p
    removed = set(p.removed)
    linearized = set(p.linearized)
    provenance = dict(p.provenance)
    net = p.base
    for li, layer in enumerate(net.layers[:-1]):
        pool = prof.layer_noncandidate_pool(li, layer.fan_out)
        if pool.size == 0:
            continue
        threshold = float(np.percentile(pool, tolerance_pct))
        for ni in range(layer.fan_out):
            nid = (li, ni)
            if nid not in prof.candidates or nid in removed:
                continue
            neg = prof.mag_neg[nid]
            worst = float(neg.max()) if neg.size else 0.0
            if worst < threshold:
                removed.add(nid)
                linearized.discard(nid)
                provenance[nid] = Provenance.HEURISTIC
    return PrunedNetwork(
        base=net,
        removed=frozenset(removed),
        linearized=frozenset(linearized),
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# Export


def pruned_to_network(p: PrunedNetwork) -> Network:
    """Physically drop removed neurons (their rows, and the matching columns
    downstream).  Linearized neurons stay as ordinary ReLU neurons: on the
    region that justified linearization the two are equal."""
    net = p.base
    layers: list[Layer] = []
    keep_prev = np.ones(net.input_arity, dtype=bool)
    for li, layer in enumerate(net.layers):
        if li == len(net.layers) - 1:
            keep = np.ones(layer.fan_out, dtype=bool)
        else:
            keep = np.array(
                [(li, ni) not in p.removed for ni in range(layer.fan_out)], dtype=bool
            )
        layers.append(
            Layer(
                weights=layer.weights[np.ix_(keep, keep_prev)],
                biases=layer.biases[keep],
                activation=layer.activation,
            )
        )
        keep_prev = keep
    return Network(
        layers=tuple(layers),
        input_arity=net.input_arity,
        output_arity=net.output_arity,
        output_activation=net.output_activation,
    )


def pruning_sidecar(p: PrunedNetwork, box=None) -> dict:
    """Provenance record to ship next to an exported pruned network."""
    doc = {
        "removed": sorted([list(nid) for nid in p.removed]),
        "linearized": sorted([list(nid) for nid in p.linearized]),
        "provenance": {
            f"{li},{ni}": prov.value for (li, ni), prov in sorted(p.provenance.items())
        },
        "behaviour_preserving": not p.has_heuristic_removals,
        "compression_ratio": compression_ratio(p),
    }
    if box is not None:
        doc["region"] = [[float(lo), float(hi)] for lo, hi in box]
    return doc
