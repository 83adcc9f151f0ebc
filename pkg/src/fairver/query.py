"""Fairness queries and the output-layer form of the fairness postcondition.

A query names one protected attribute, optional per-attribute similarity
relaxations (two inputs count as "the same individual" when each relaxed
attribute differs by at most its epsilon), and an optional target sub-box
restricting the verified population.  Building a predicate turns the query
into per-attribute pair constraints plus the violation condition expressed
directly over the final-layer logits of the two network copies, which
removes the output nonlinearity from the solved formula:

* sigmoid:  (y < 0 and y' > 0) or (y > 0 and y' < 0)
* binary softmax: (y0 > y1 and y0' < y1') or (y0 < y1 and y0' > y1')

Both use strict inequalities, so inputs landing exactly on a decision
boundary can never witness a violation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import FormatError, QueryError, UnsupportedModelError
from .model_io import (
    AttributeSchema,
    Network,
    OutputActivation,
    classify_logits,
    forward,
)


class PairRelationKind(Enum):
    EQUAL = "equal"
    ABS_DIFF_AT_MOST = "abs_diff_at_most"
    DIFFER = "differ"


@dataclass(frozen=True)
class PairRelation:
    """Constraint between x_i and x'_i for one attribute."""

    kind: PairRelationKind
    epsilon: float = 0.0

    def holds(self, a: float, b: float) -> bool:
        if self.kind is PairRelationKind.EQUAL:
            return a == b
        if self.kind is PairRelationKind.ABS_DIFF_AT_MOST:
            return abs(a - b) <= self.epsilon
        return a != b


@dataclass(frozen=True)
class FairnessQuery:
    """One verification request.

    ``protected`` holds attribute indices; exactly one per query (studies
    over several protected attributes are separate runs).  ``epsilon`` maps
    non-protected attribute indices to their allowed absolute difference;
    absent means the attribute must match exactly.  ``target`` optionally
    narrows the verified domain per attribute.
    """

    protected: tuple[int, ...]
    epsilon: Mapping[int, float] = field(default_factory=dict)
    target: Mapping[int, tuple[float, float]] | None = None
    soft_timeout_s: float = 100.0
    hard_timeout_s: float = 1800.0
    max_attribute_size: int = 100

    def __post_init__(self) -> None:
        object.__setattr__(self, "protected", tuple(self.protected))
        object.__setattr__(self, "epsilon", dict(self.epsilon))
        if self.target is not None:
            object.__setattr__(
                self,
                "target",
                {int(k): (float(v[0]), float(v[1])) for k, v in self.target.items()},
            )

    def validate(self, schema: AttributeSchema) -> None:
        n = len(schema)
        if not self.protected:
            raise QueryError("query names no protected attribute")
        if len(self.protected) != 1:
            raise QueryError(
                "a query verifies exactly one protected attribute; "
                "run one query per protected attribute"
            )
        for p in self.protected:
            if not 0 <= p < n:
                raise QueryError(f"protected attribute index {p} out of range")
        for i, eps in self.epsilon.items():
            if not 0 <= i < n:
                raise QueryError(f"epsilon names attribute index {i} out of range")
            if i in self.protected:
                raise QueryError(
                    f"attribute {schema.attributes[i].name!r} is protected and "
                    f"cannot also be relaxed"
                )
            if not (np.isfinite(eps) and eps >= 0):
                raise QueryError(f"epsilon for attribute index {i} must be >= 0")
        if self.target is not None:
            for i, (lo, hi) in self.target.items():
                if not 0 <= i < n:
                    raise QueryError(f"target names attribute index {i} out of range")
                a = schema.attributes[i]
                if lo > hi:
                    raise QueryError(
                        f"target interval for {a.name!r} is empty ({lo} > {hi})"
                    )
                if lo < a.lb or hi > a.ub:
                    raise QueryError(
                        f"target interval for {a.name!r} exceeds its domain "
                        f"[{a.lb}, {a.ub}]"
                    )
        if self.soft_timeout_s > self.hard_timeout_s:
            raise QueryError("soft timeout exceeds hard timeout")
        if self.max_attribute_size < 1:
            raise QueryError("max attribute size must be >= 1")


@dataclass(frozen=True)
class WpPredicate:
    """Violation condition over the final-layer logits of both copies."""

    kind: OutputActivation
    output_arity: int

    def evaluate(self, y: Sequence[float], yp: Sequence[float]) -> bool:
        if self.kind is OutputActivation.SIGMOID:
            a, b = float(y[0]), float(yp[0])
            return (a < 0 and b > 0) or (a > 0 and b < 0)
        a0, a1 = float(y[0]), float(y[1])
        b0, b1 = float(yp[0]), float(yp[1])
        return (a0 > a1 and b0 < b1) or (a0 < a1 and b0 > b1)


def wp_of_output(kind: OutputActivation, output_arity: int) -> WpPredicate:
    """Violation predicate for the supported output activations.

    Only sigmoid (one output) and binary softmax are supported; anything
    else has no classification semantics here.
    """
    if kind is OutputActivation.SIGMOID:
        if output_arity != 1:
            raise UnsupportedModelError("sigmoid output requires exactly one logit")
        return WpPredicate(kind, 1)
    if kind is OutputActivation.SOFTMAX:
        if output_arity != 2:
            raise UnsupportedModelError(
                f"softmax supported for binary classification only, "
                f"got {output_arity} outputs"
            )
        return WpPredicate(kind, 2)
    raise UnsupportedModelError(
        f"no violation predicate for output activation {kind.value!r}"
    )


@dataclass(frozen=True)
class FairnessPredicate:
    """A query lowered against a schema and network: domain box, per-attribute
    pair constraints, and the logit-level violation condition."""

    domain_box: tuple[tuple[float, float], ...]
    pair_constraints: tuple[PairRelation, ...]
    post_wp: WpPredicate

    def __post_init__(self) -> None:
        if len(self.domain_box) != len(self.pair_constraints):
            raise QueryError("domain box and pair constraints disagree on arity")

    @property
    def protected_indices(self) -> tuple[int, ...]:
        return tuple(
            i
            for i, rel in enumerate(self.pair_constraints)
            if rel.kind is PairRelationKind.DIFFER
        )

    @property
    def relaxed_indices(self) -> tuple[int, ...]:
        return tuple(
            i
            for i, rel in enumerate(self.pair_constraints)
            if rel.kind is PairRelationKind.ABS_DIFF_AT_MOST
        )

    def in_box(self, x: Sequence[float]) -> bool:
        return all(
            lo <= float(v) <= hi for v, (lo, hi) in zip(x, self.domain_box)
        ) and len(x) == len(self.domain_box)

    def pair_admissible(self, x: Sequence[float], xp: Sequence[float]) -> bool:
        return all(
            rel.holds(float(a), float(b))
            for rel, a, b in zip(self.pair_constraints, x, xp)
        )


def build_predicate(
    query: FairnessQuery, schema: AttributeSchema, net: Network
) -> FairnessPredicate:
    """Lower a query to a predicate: target narrows the schema box, relaxed
    attributes get |x - x'| <= eps, the protected attribute must differ."""
    query.validate(schema)
    if len(schema) != net.input_arity:
        raise QueryError(
            f"schema arity {len(schema)} does not match network input arity "
            f"{net.input_arity}"
        )
    box = []
    for i, a in enumerate(schema.attributes):
        if query.target is not None and i in query.target:
            box.append(query.target[i])
        else:
            box.append((a.lb, a.ub))
    constraints = []
    for i in range(len(schema)):
        if i in query.protected:
            constraints.append(PairRelation(PairRelationKind.DIFFER))
        elif i in query.epsilon:
            constraints.append(
                PairRelation(PairRelationKind.ABS_DIFF_AT_MOST, float(query.epsilon[i]))
            )
        else:
            constraints.append(PairRelation(PairRelationKind.EQUAL))
    return FairnessPredicate(
        domain_box=tuple(box),
        pair_constraints=tuple(constraints),
        post_wp=wp_of_output(net.output_activation, net.output_arity),
    )


def check_counterexample(
    pred: FairnessPredicate,
    net: Network,
    x: Sequence[float],
    xp: Sequence[float],
    forward_fn: Callable[[Sequence[float]], np.ndarray] | None = None,
) -> bool:
    """True iff (x, x') lies in the domain box, satisfies the pair
    constraints, and the two classifications differ.

    ``forward_fn`` substitutes the evaluator (e.g. a pruned network's);
    classification semantics stay those of ``net.output_activation``.
    """
    if len(x) != len(pred.domain_box) or len(xp) != len(pred.domain_box):
        return False
    if not (pred.in_box(x) and pred.in_box(xp)):
        return False
    if not pred.pair_admissible(x, xp):
        return False
    run = forward_fn if forward_fn is not None else (lambda v: forward(net, v))
    ya = run(x)
    yb = run(xp)
    kind = net.output_activation
    return classify_logits(kind, ya) != classify_logits(kind, yb)


# ---------------------------------------------------------------------------
# Query files


def _resolve_attr(token, schema: AttributeSchema, what: str) -> int:
    if isinstance(token, bool):
        raise FormatError(f"{what}: expected attribute name or index, got {token!r}")
    if isinstance(token, int):
        return token
    if isinstance(token, str):
        try:
            return schema.index_of(token)
        except KeyError:
            raise QueryError(f"{what}: unknown attribute {token!r}") from None
    raise FormatError(f"{what}: expected attribute name or index, got {token!r}")


def query_from_doc(doc: dict, schema: AttributeSchema) -> FairnessQuery:
    if "protected" not in doc:
        raise FormatError("missing field 'protected' in query")
    raw_protected = doc["protected"]
    if not isinstance(raw_protected, list):
        raw_protected = [raw_protected]
    protected = tuple(_resolve_attr(t, schema, "protected") for t in raw_protected)
    epsilon = {
        _resolve_attr(k, schema, "epsilon"): float(v)
        for k, v in (doc.get("epsilon") or {}).items()
    }
    target = None
    if doc.get("target"):
        target = {}
        for k, v in doc["target"].items():
            if not (isinstance(v, list) and len(v) == 2):
                raise FormatError(f"target[{k!r}] must be a [lo, hi] pair")
            target[_resolve_attr(k, schema, "target")] = (float(v[0]), float(v[1]))
    query = FairnessQuery(
        protected=protected,
        epsilon=epsilon,
        target=target,
        soft_timeout_s=float(doc.get("soft_timeout_s", 100.0)),
        hard_timeout_s=float(doc.get("hard_timeout_s", 1800.0)),
        max_attribute_size=int(doc.get("max_attribute_size", 100)),
    )
    query.validate(schema)
    return query


def load_query(path, schema: AttributeSchema) -> FairnessQuery:
    """Load a query document (JSON: protected, epsilon, target, timeouts, max
    attribute size); attribute references may be names or indices."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"not a valid JSON document: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("query document must be a JSON object")
    return query_from_doc(doc, schema)


def query_to_doc(query: FairnessQuery, schema: AttributeSchema) -> dict:
    doc: dict = {
        "protected": [schema.attributes[i].name for i in query.protected],
        "epsilon": {
            schema.attributes[i].name: v for i, v in sorted(query.epsilon.items())
        },
        "soft_timeout_s": query.soft_timeout_s,
        "hard_timeout_s": query.hard_timeout_s,
        "max_attribute_size": query.max_attribute_size,
    }
    if query.target is not None:
        doc["target"] = {
            schema.attributes[i].name: [lo, hi]
            for i, (lo, hi) in sorted(query.target.items())
        }
    return doc
