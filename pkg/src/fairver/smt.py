"""SMT-LIB2 encoding of split queries and a driver for external solvers.

Scripts are self-contained text: weights and bounds appear as exact decimal
expansions of their 64-bit values (every double is a dyadic rational, so
the expansion is finite), integer attributes become ``Int`` constants and
everything else ``Real``.  Each hidden ReLU neuron contributes a
conditional term ``(ite (> ws 0) ws 0)`` per network copy; removed neurons
are the literal 0 and linearized neurons the bare weighted sum.

Any solver that reads SMT-LIB2 on stdin works.  A session wraps one solver
process and frames each exchange with an ``(echo ...)`` sentinel so that
responses can be read without knowing the solver's prompt behaviour; a
wall-clock backstop kills the process when the per-query timeout plus grace
is exceeded (solvers honouring the ``:timeout`` option normally return
``unknown`` on their own well before that).
"""

from __future__ import annotations

import os
import shlex
import shutil
import subprocess
import threading
import time
from collections import deque
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from queue import Empty, Queue
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import (
    EncodingError,
    SolverBackendError,
    SolverNotFoundError,
    SolverProtocolError,
)
from .model_io import Activation, AttributeSchema, Network, OutputActivation
from .partitioner import Partition, Status
from .query import FairnessPredicate, PairRelationKind, WpPredicate

if TYPE_CHECKING:
    from .pruning import PrunedNetwork

SOLVER_ENV_VAR = "FAIRVER_SOLVER"
DEFAULT_GRACE_S = 5.0


# ---------------------------------------------------------------------------
# Exact literals


def real_literal(value: float) -> str:
    """Exact SMT-LIB Real literal for a double (finite decimal expansion)."""
    v = float(value)
    if v != v or v in (float("inf"), float("-inf")):
        raise EncodingError(f"non-finite value {value!r} cannot be encoded")
    text = format(Decimal(abs(v)), "f")
    if "." not in text:
        text += ".0"
    return f"(- {text})" if v < 0 or (v == 0 and str(v)[0] == "-") else text


def int_literal(value: float) -> str:
    v = float(value)
    if not v.is_integer():
        raise EncodingError(f"expected an integer value, got {value!r}")
    n = int(v)
    return f"(- {-n})" if n < 0 else str(n)


def literal_to_fraction(text: str) -> Fraction:
    """Inverse of the literal emitters (used by tests and model parsing)."""
    return _value_from_sexpr(_parse_sexpr(text))


# ---------------------------------------------------------------------------
# S-expression reading (solver responses)


def _tokenize(text: str):
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            yield c
            i += 1
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            yield text[i : j + 1]
            i = j + 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            yield text[i:j]
            i = j


def _parse_sexpr(text: str):
    tokens = list(_tokenize(text))
    if not tokens:
        raise SolverProtocolError("empty solver response")
    pos = 0

    def parse():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while pos < len(tokens) and tokens[pos] != ")":
                items.append(parse())
            if pos >= len(tokens):
                raise SolverProtocolError(f"unbalanced solver response: {text!r}")
            pos += 1
            return items
        if tok == ")":
            raise SolverProtocolError(f"unbalanced solver response: {text!r}")
        return tok

    return parse()


def _value_from_sexpr(node) -> Fraction:
    if isinstance(node, str):
        if "." in node:
            return Fraction(Decimal(node))
        return Fraction(int(node))
    if not node:
        raise SolverProtocolError("empty value expression")
    head = node[0]
    if head == "-" and len(node) == 2:
        return -_value_from_sexpr(node[1])
    if head == "/" and len(node) == 3:
        return _value_from_sexpr(node[1]) / _value_from_sexpr(node[2])
    raise SolverProtocolError(f"unsupported model value form: {node!r}")


def parse_value_bindings(text: str) -> dict[str, Fraction]:
    """Parse a ``get-value`` response into name -> exact rational."""
    node = _parse_sexpr(text)
    if not isinstance(node, list):
        raise SolverProtocolError(f"expected a binding list, got {node!r}")
    out: dict[str, Fraction] = {}
    for entry in node:
        if not (isinstance(entry, list) and len(entry) == 2 and isinstance(entry[0], str)):
            raise SolverProtocolError(f"bad value binding: {entry!r}")
        out[entry[0]] = _value_from_sexpr(entry[1])
    return out


# ---------------------------------------------------------------------------
# Script construction


@dataclass(frozen=True)
class SmtScript:
    """A complete split query: preamble (options, declarations, assertions),
    the satisfiability check, and the model request."""

    preamble: tuple[str, ...]
    input_vars: tuple[str, ...]
    check_line: str = "(check-sat)"

    @property
    def get_value_line(self) -> str:
        return "(get-value (" + " ".join(self.input_vars) + "))"

    @property
    def text(self) -> str:
        parts = list(self.preamble) + [self.check_line]
        if self.input_vars:
            parts.append(self.get_value_line)
        return "\n".join(parts) + "\n"


def _bounds_literal(value: float, integer: bool) -> str:
    return int_literal(value) if integer else real_literal(value)


def _sum_term(terms: list[str], bias: float) -> str:
    args = terms + [real_literal(bias)]
    if len(args) == 1:
        return args[0]
    return "(+ " + " ".join(args) + ")"


def _input_ref(name: str, integer: bool) -> str:
    return f"(to_real {name})" if integer else name


def _wp_assertion(wp: WpPredicate, y: Sequence[str], yp: Sequence[str]) -> str:
    if wp.kind is OutputActivation.SIGMOID:
        return (
            f"(assert (or (and (< {y[0]} 0.0) (> {yp[0]} 0.0)) "
            f"(and (> {y[0]} 0.0) (< {yp[0]} 0.0))))"
        )
    return (
        f"(assert (or (and (> {y[0]} {y[1]}) (< {yp[0]} {yp[1]})) "
        f"(and (< {y[0]} {y[1]}) (> {yp[0]} {yp[1]}))))"
    )


def _network_defs(
    net: Network,
    removed: frozenset[tuple[int, int]],
    linearized: frozenset[tuple[int, int]],
    schema: AttributeSchema,
    suffix: str,
    input_names: Sequence[str],
) -> tuple[list[str], list[str]]:
    """define-fun lines for one network copy; returns (lines, output names)."""
    lines: list[str] = []
    prev_refs = [
        _input_ref(name, attr.integer)
        for name, attr in zip(input_names, schema.attributes)
    ]
    n_layers = len(net.layers)
    for li, layer in enumerate(net.layers):
        is_output = li == n_layers - 1
        refs: list[str] = []
        for ni in range(layer.fan_out):
            terms = [
                f"(* {real_literal(w)} {prev_refs[t]})"
                for t, w in enumerate(layer.weights[ni])
                if w != 0.0
            ]
            ws = _sum_term(terms, float(layer.biases[ni]))
            if is_output:
                name = f"y{suffix}{ni}"
                lines.append(f"(define-fun {name} () Real {ws})")
                refs.append(name)
                continue
            nid = (li, ni)
            name = f"h{suffix}{li}_{ni}"
            if nid in removed:
                lines.append(f"(define-fun {name} () Real 0.0)")
            elif nid in linearized:
                lines.append(f"(define-fun {name} () Real {ws})")
            else:
                sname = f"s{suffix}{li}_{ni}"
                lines.append(f"(define-fun {sname} () Real {ws})")
                lines.append(
                    f"(define-fun {name} () Real (ite (> {sname} 0.0) {sname} 0.0))"
                )
            refs.append(name)
        prev_refs = refs
    return lines, prev_refs


def encode(
    pruned: "PrunedNetwork | Network",
    pred: FairnessPredicate,
    box: Partition | Sequence[tuple[float, float]],
    schema: AttributeSchema,
    timeout_s: float | None = None,
    seed: int | None = None,
) -> SmtScript:
    """Encode one split query over the given region.

    Satisfiable iff the region contains an admissible input pair whose
    classifications differ (modulo the pruning applied to the network).
    """
    if hasattr(pruned, "base"):
        net: Network = pruned.base
        removed = frozenset(pruned.removed)
        linearized = frozenset(pruned.linearized)
    else:
        net = pruned
        removed = frozenset()
        linearized = frozenset()
    intervals = box.box if isinstance(box, Partition) else tuple(box)
    if len(intervals) != net.input_arity or len(schema) != net.input_arity:
        raise EncodingError("box/schema arity does not match the network")
    if pred.post_wp.kind is not net.output_activation:
        raise EncodingError(
            "predicate was built for a different output activation"
        )
    for li, layer in enumerate(net.layers[:-1]):
        if layer.activation is not Activation.RELU:
            raise EncodingError(f"hidden layer {li + 1} is not relu")
    if net.layers[-1].activation is not Activation.LINEAR:
        raise EncodingError("final layer must be linear")

    any_int = any(a.integer for a in schema.attributes)
    lines: list[str] = []
    if timeout_s is not None:
        lines.append(f"(set-option :timeout {int(round(timeout_s * 1000))})")
    if seed is not None:
        lines.append(f"(set-option :smt.random_seed {int(seed)})")
    lines.append(f"(set-logic {'QF_LIRA' if any_int else 'QF_LRA'})")

    x_names = [f"x{i}" for i in range(net.input_arity)]
    xp_names = [f"xp{i}" for i in range(net.input_arity)]
    for i, attr in enumerate(schema.attributes):
        sort = "Int" if attr.integer else "Real"
        lines.append(f"(declare-const {x_names[i]} {sort})")
        lines.append(f"(declare-const {xp_names[i]} {sort})")

    for i, (attr, (lo, hi)) in enumerate(zip(schema.attributes, intervals)):
        if attr.integer and not (float(lo).is_integer() and float(hi).is_integer()):
            raise EncodingError(
                f"integer attribute {attr.name!r} has non-integer box "
                f"endpoints [{lo}, {hi}]"
            )
        lo_lit = _bounds_literal(lo, attr.integer)
        hi_lit = _bounds_literal(hi, attr.integer)
        for name in (x_names[i], xp_names[i]):
            lines.append(f"(assert (<= {lo_lit} {name}))")
            lines.append(f"(assert (<= {name} {hi_lit}))")

    for i, (attr, rel) in enumerate(zip(schema.attributes, pred.pair_constraints)):
        a, b = x_names[i], xp_names[i]
        if rel.kind is PairRelationKind.EQUAL:
            lines.append(f"(assert (= {a} {b}))")
        elif rel.kind is PairRelationKind.DIFFER:
            lines.append(f"(assert (not (= {a} {b})))")
        else:
            if attr.integer and float(rel.epsilon).is_integer():
                eps = int_literal(rel.epsilon)
                lines.append(f"(assert (<= (- {a} {b}) {eps}))")
                lines.append(f"(assert (<= (- {b} {a}) {eps}))")
            else:
                eps = real_literal(rel.epsilon)
                diff_ab = f"(- {a} {b})" if not attr.integer else f"(to_real (- {a} {b}))"
                diff_ba = f"(- {b} {a})" if not attr.integer else f"(to_real (- {b} {a}))"
                lines.append(f"(assert (<= {diff_ab} {eps}))")
                lines.append(f"(assert (<= {diff_ba} {eps}))")

    defs_a, y_a = _network_defs(net, removed, linearized, schema, "_", x_names)
    defs_b, y_b = _network_defs(net, removed, linearized, schema, "p_", xp_names)
    lines.extend(defs_a)
    lines.extend(defs_b)
    lines.append(_wp_assertion(pred.post_wp, y_a, y_b))
    return SmtScript(
        preamble=tuple(lines), input_vars=tuple(x_names) + tuple(xp_names)
    )


def encode_inactivity_query(
    lo: np.ndarray,
    hi: np.ndarray,
    weights: np.ndarray,
    bias: float,
    timeout_s: float | None = None,
) -> SmtScript:
    """Linear query: can this neuron's weighted sum be positive when each
    predecessor value lies within its bounds?  ``unsat`` proves inactivity."""
    lines: list[str] = []
    if timeout_s is not None:
        lines.append(f"(set-option :timeout {int(round(timeout_s * 1000))})")
    lines.append("(set-logic QF_LRA)")
    names = [f"u{t}" for t in range(len(weights))]
    for t, name in enumerate(names):
        lines.append(f"(declare-const {name} Real)")
        lines.append(f"(assert (<= {real_literal(float(lo[t]))} {name}))")
        lines.append(f"(assert (<= {name} {real_literal(float(hi[t]))}))")
    terms = [
        f"(* {real_literal(float(w))} {names[t]})"
        for t, w in enumerate(weights)
        if w != 0.0
    ]
    lines.append(f"(assert (> {_sum_term(terms, float(bias))} 0.0))")
    return SmtScript(preamble=tuple(lines), input_vars=())


# ---------------------------------------------------------------------------
# Solver processes


def _bundled_shim_candidates() -> list[Path]:
    here = Path(__file__).resolve()
    roots = [Path.cwd()]
    # Editable/checkout layout: <repo>/src/fairver/smt.py -> <repo>/solver/
    if len(here.parents) >= 3:
        roots.append(here.parents[2])
    return [root / "solver" / "smt_stdio.js" for root in roots]


def resolve_solver(spec: str | Sequence[str] | None = None) -> list[str]:
    """Turn a solver specification into an argv list.

    Order: explicit argument, the FAIRVER_SOLVER environment variable, a
    ``z3`` binary on PATH (run as ``z3 -in``), then the bundled Node shim.
    A ``.js`` path is run through ``node``.
    """
    if spec is None:
        env = os.environ.get(SOLVER_ENV_VAR)
        if env:
            spec = env
    if spec is not None:
        argv = list(spec) if not isinstance(spec, str) else shlex.split(spec)
        if not argv:
            raise SolverNotFoundError("empty solver command")
        if argv[0].endswith(".js"):
            argv = ["node"] + argv
        return argv
    z3 = shutil.which("z3")
    if z3:
        return [z3, "-in"]
    node = shutil.which("node")
    if node:
        for shim in _bundled_shim_candidates():
            if shim.exists():
                return [node, str(shim)]
    raise SolverNotFoundError(
        "no SMT solver found: pass --solver, set FAIRVER_SOLVER, put z3 on "
        "PATH, or install the bundled shim (npm install --prefix solver)"
    )


@dataclass
class SolverOutcome:
    """Result of one solver query."""

    status: Status
    model: dict[str, Fraction] | None = None
    wall_time_s: float = 0.0
    timed_out: bool = False
    messages: tuple[str, ...] = ()


class _SessionDied(Exception):
    def __init__(self, timed_out: bool, lines: list[str]):
        super().__init__("solver session ended")
        self.timed_out = timed_out
        self.lines = lines


_STATUS_TOKENS = {
    "sat": Status.SAT,
    "unsat": Status.UNSAT,
    "unknown": Status.UNKNOWN,
    "timeout": Status.UNKNOWN,
}


class SmtSession:
    """One solver process, reusable across queries via ``(reset)``.

    Not thread-safe; give each worker its own session.
    """

    def __init__(self, command: Sequence[str] | str | None = None, grace_s: float = DEFAULT_GRACE_S):
        self.command = resolve_solver(command)
        self.grace_s = grace_s
        self._proc: subprocess.Popen | None = None
        self._out: Queue = Queue()
        self._stderr_tail: deque[str] = deque(maxlen=20)
        self._counter = 0
        self._needs_reset = False

    # -- process management

    def _spawn(self) -> None:
        self._out = Queue()
        self._stderr_tail.clear()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SolverBackendError(
                f"cannot start solver {self.command!r}: {exc}"
            ) from exc
        threading.Thread(
            target=self._pump, args=(self._proc.stdout, self._out), daemon=True
        ).start()
        threading.Thread(
            target=self._pump_err, args=(self._proc.stderr,), daemon=True
        ).start()
        self._needs_reset = False

    @staticmethod
    def _pump(stream, out: Queue) -> None:
        for line in stream:
            out.put(line.rstrip("\n"))
        out.put(None)

    def _pump_err(self, stream) -> None:
        for line in stream:
            self._stderr_tail.append(line.rstrip("\n"))

    def _ensure(self) -> None:
        if self._proc is None or self._proc.poll() is not None:
            self._spawn()

    def _apply_pending_reset(self) -> None:
        """Clear assertions left by the previous query (start of a new one)."""
        if self._proc is None or self._proc.poll() is not None:
            self._spawn()
            return
        if not self._needs_reset:
            return
        try:
            self.eval("(reset)", timeout_s=10.0)
            self._needs_reset = False
        except _SessionDied:
            self._spawn()

    def kill(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass
        self._proc = None

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.write("(exit)\n")
                self._proc.stdin.flush()
                self._proc.wait(timeout=2)
            except (OSError, subprocess.TimeoutExpired):
                self.kill()
        self._proc = None

    def __enter__(self) -> "SmtSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- framed exchange

    def _drain_until(self, sentinel: str, deadline: float) -> list[str]:
        lines: list[str] = []
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self.kill()
                raise _SessionDied(timed_out=True, lines=lines)
            try:
                item = self._out.get(timeout=min(remaining, 0.25))
            except Empty:
                continue
            if item is None:
                self._proc = None
                raise _SessionDied(timed_out=False, lines=lines)
            if item.strip() == sentinel:
                return lines
            lines.append(item)

    def eval(self, text: str, timeout_s: float) -> list[str]:
        """Send commands, return every response line (sentinel-framed)."""
        self._ensure()
        self._counter += 1
        sentinel = f"fairver-sync-{self._counter}"
        deadline = time.monotonic() + timeout_s
        try:
            self._proc.stdin.write(text.rstrip("\n") + f'\n(echo "{sentinel}")\n')
            self._proc.stdin.flush()
        except OSError:
            self._proc = None
            raise _SessionDied(timed_out=False, lines=[])
        return self._drain_until(sentinel, deadline)

    def version(self) -> str | None:
        try:
            lines = self.eval("(get-info :version)", timeout_s=10.0)
        except _SessionDied:
            return None
        for line in lines:
            if ":version" in line:
                try:
                    node = _parse_sexpr(line)
                    return str(node[1]).strip('"')
                except (SolverProtocolError, IndexError):
                    return line.strip()
        return None

    # -- query execution

    def check(self, script: SmtScript, timeout_s: float) -> SolverOutcome:
        """Run one script; on sat, fetch model values for its input vars."""
        start = time.monotonic()
        budget = timeout_s + self.grace_s
        self._apply_pending_reset()
        try:
            lines = self.eval(
                "\n".join(script.preamble) + "\n" + script.check_line, budget
            )
        except _SessionDied as died:
            wall = time.monotonic() - start
            if died.timed_out:
                return SolverOutcome(
                    Status.UNKNOWN, None, wall, timed_out=True, messages=tuple(died.lines)
                )
            raise SolverBackendError(
                "solver process ended unexpectedly"
                + (f"; stderr: {list(self._stderr_tail)}" if self._stderr_tail else "")
            ) from None
        self._needs_reset = True
        status = None
        timed_out = False
        for line in lines:
            token = line.strip()
            if token in _STATUS_TOKENS:
                status = _STATUS_TOKENS[token]
                timed_out = token == "timeout"
        if status is None:
            self.kill()
            raise SolverBackendError(
                f"no sat/unsat/unknown in solver output: {lines!r}"
                + (f"; stderr: {list(self._stderr_tail)}" if self._stderr_tail else "")
            )
        model = None
        if status is Status.SAT and script.input_vars:
            try:
                vlines = self.eval(script.get_value_line, max(self.grace_s, 10.0))
            except _SessionDied:
                raise SolverProtocolError("solver reported sat but gave no model") from None
            body = "\n".join(vlines).strip()
            if not body or body.startswith("(error"):
                raise SolverProtocolError(
                    f"solver reported sat but gave no model: {body!r}"
                )
            model = parse_value_bindings(body)
            missing = [v for v in script.input_vars if v not in model]
            if missing:
                raise SolverProtocolError(f"model is missing variables {missing}")
        wall = time.monotonic() - start
        return SolverOutcome(
            status,
            model,
            wall,
            timed_out=timed_out or (status is Status.UNKNOWN and wall >= timeout_s),
            messages=tuple(l for l in lines if l.startswith("(error")),
        )


def solve(
    script: SmtScript,
    solver: str | Sequence[str] | None = None,
    timeout_s: float = 100.0,
    session: SmtSession | None = None,
) -> SolverOutcome:
    """Run one script, either on an existing session or a fresh process."""
    if session is not None:
        return session.check(script, timeout_s)
    with SmtSession(solver) as fresh:
        return fresh.check(script, timeout_s)


def individual_query(
    layer_lo: np.ndarray,
    layer_hi: np.ndarray,
    weights: np.ndarray,
    bias: float,
    session: SmtSession,
    timeout_s: float = 100.0,
) -> SolverOutcome:
    """Decide whether a neuron's weighted sum can exceed zero when its
    predecessors range over the given bounds (exact rational arithmetic)."""
    script = encode_inactivity_query(layer_lo, layer_hi, weights, bias, timeout_s)
    return session.check(script, timeout_s)


def decode_pair(
    model: dict[str, Fraction], schema: AttributeSchema
) -> tuple[np.ndarray, np.ndarray]:
    """Convert a model over x*/xp* variables into two input vectors.

    Integer attributes must come back as exact integers.
    """
    n = len(schema)
    x = np.empty(n, dtype=np.float64)
    xp = np.empty(n, dtype=np.float64)
    for i, attr in enumerate(schema.attributes):
        for vec, prefix in ((x, "x"), (xp, "xp")):
            name = f"{prefix}{i}"
            if name not in model:
                raise SolverProtocolError(f"model is missing variable {name}")
            val = model[name]
            if attr.integer:
                if val.denominator != 1:
                    raise SolverProtocolError(
                        f"integer attribute {attr.name!r} got non-integer value {val}"
                    )
                vec[i] = float(int(val))
            else:
                vec[i] = float(val)
    return x, xp
