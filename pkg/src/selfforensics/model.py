"""Evidence algebra and finite system models.

Observations, observation sequences and evidential statements are plain
immutable values.  A run of a :class:`SystemModel` is viewed as a list of
*points* ``(valuation, event)``; the first point of every run carries no
event.  Observation sequences are matched against point lists by covering
partitions (see :func:`find_partition`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence, Union

INF = math.inf

Value = Union[int, bool, str]
Loc = tuple  # (line, column), 1-based

KINDS = ("int", "bool", "string")


class ModelError(ValueError):
    """Raised for malformed models, observations or evaluation misuse."""


class ObservationError(ModelError):
    def __init__(self, fieldname: str, message: str) -> None:
        self.field = fieldname
        super().__init__(message)


class PropertyError(ModelError):
    """A property referenced a field that the point does not carry."""


def kind_of(value: Value) -> str:
    # bool before int: bool is an int subclass
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, str):
        return "string"
    raise ModelError(f"unsupported literal type {type(value).__name__}")


# --------------------------------------------------------------------------
# property expressions


@dataclass(frozen=True)
class Const:
    value: bool
    loc: Loc | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Cmp:
    fieldname: str
    op: str
    literal: Value
    loc: Loc | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.op not in _CMP_OPS:
            raise ModelError(f"unknown comparison operator {self.op!r}")


@dataclass(frozen=True)
class EventIs:
    name: str
    loc: Loc | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Not:
    operand: "PropertyExpr"
    loc: Loc | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class And:
    left: "PropertyExpr"
    right: "PropertyExpr"
    loc: Loc | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Or:
    left: "PropertyExpr"
    right: "PropertyExpr"
    loc: Loc | None = field(default=None, compare=False, repr=False)


PropertyExpr = Union[Const, Cmp, EventIs, Not, And, Or]

TRUE = Const(True)
FALSE = Const(False)

_CMP_OPS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}
ORDERING_OPS = frozenset({"<", "<=", ">", ">="})


def conjunction(parts: Sequence[PropertyExpr]) -> PropertyExpr:
    """Left-nested ``&&`` of *parts*; ``true`` when empty."""
    if not parts:
        return TRUE
    expr = parts[0]
    for part in parts[1:]:
        expr = And(expr, part)
    return expr


def walk(expr: PropertyExpr) -> Iterator[PropertyExpr]:
    yield expr
    if isinstance(expr, Not):
        yield from walk(expr.operand)
    elif isinstance(expr, (And, Or)):
        yield from walk(expr.left)
        yield from walk(expr.right)


Point = tuple  # (valuation mapping, event name or None)


def eval_property(expr: PropertyExpr, point: Point) -> bool:
    valuation, event = point
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Cmp):
        try:
            value = valuation[expr.fieldname]
        except KeyError:
            raise PropertyError(f"field {expr.fieldname!r} is not part of the valuation") from None
        return _CMP_OPS[expr.op](value, expr.literal)
    if isinstance(expr, EventIs):
        return event is not None and event == expr.name
    if isinstance(expr, Not):
        return not eval_property(expr.operand, point)
    if isinstance(expr, And):
        return eval_property(expr.left, point) and eval_property(expr.right, point)
    if isinstance(expr, Or):
        return eval_property(expr.left, point) or eval_property(expr.right, point)
    raise ModelError(f"not a property expression: {expr!r}")


def schema_problems(expr: PropertyExpr, schema: Mapping[str, str]) -> Iterator[tuple[str, str, Loc | None]]:
    """Yield ``(code, message, loc)`` for every reference *schema* cannot type."""
    for node in walk(expr):
        if not isinstance(node, Cmp):
            continue
        kind = schema.get(node.fieldname)
        if kind is None:
            yield "name", f"unknown field {node.fieldname}", node.loc
            continue
        lit_kind = kind_of(node.literal)
        if lit_kind != kind:
            yield "type", f"field {node.fieldname} is {kind} but is compared with a {lit_kind} literal", node.loc
        elif node.op in ORDERING_OPS and kind != "int":
            yield "type", f"operator {node.op} needs int operands, {node.fieldname} is {kind}", node.loc


# --------------------------------------------------------------------------
# evidence


def _as_weight(w) -> Fraction:
    if isinstance(w, Fraction):
        return w
    if isinstance(w, bool):
        raise ObservationError("w", "w must be a number")
    if isinstance(w, int):
        return Fraction(w)
    if isinstance(w, float):
        if not math.isfinite(w):
            raise ObservationError("w", "w out of range")
        # decimal repr, not the binary expansion
        return Fraction(repr(w))
    if isinstance(w, str):
        try:
            return Fraction(w)
        except ValueError:
            raise ObservationError("w", f"w is not a number: {w!r}") from None
    raise ObservationError("w", "w must be a number")


@dataclass(frozen=True)
class Observation:
    """A property held for ``min`` up to ``min + max`` consecutive points.

    ``w`` is the credibility in [0, 1] and ``t`` an optional timestamp in
    microseconds; neither influences matching.
    """

    prop: PropertyExpr
    min: int
    max: float | int
    w: Fraction = Fraction(1)
    t: int | None = None
    loc: Loc | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "w", _as_weight(self.w))
        if isinstance(self.min, bool) or not isinstance(self.min, int):
            raise ObservationError("min", "min must be an integer")
        if self.min < 0:
            raise ObservationError("min", "min out of range")
        if self.max != INF:
            if isinstance(self.max, bool) or not isinstance(self.max, int):
                raise ObservationError("max", "max must be an integer or INF")
            if self.max < 0:
                raise ObservationError("max", "max out of range")
        if not 0 <= self.w <= 1:
            raise ObservationError("w", "w out of range")
        if self.t is not None and (isinstance(self.t, bool) or not isinstance(self.t, int)):
            raise ObservationError("t", "t must be an integer timestamp")

    @property
    def upper(self) -> float | int:
        """Longest admissible segment length (``INF`` for open windows)."""
        return self.min + self.max

    def admits(self, length: int) -> bool:
        return self.min <= length <= self.upper

    @property
    def is_wildcard(self) -> bool:
        return self == WILDCARD


def make_observation(prop: PropertyExpr, t: int | None, min: int, max, w=1) -> Observation:
    return Observation(prop, min, max, w, t)


WILDCARD = Observation(TRUE, 0, INF, Fraction(1), None)


@dataclass(frozen=True)
class ObservationSequence:
    name: str
    observations: tuple[Observation, ...]
    kind: str = "seq"  # "seq" (evidence story) or "theory"
    loc: Loc | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "observations", tuple(self.observations))
        if self.kind not in ("seq", "theory"):
            raise ModelError(f"sequence kind must be 'seq' or 'theory', not {self.kind!r}")

    def __len__(self) -> int:
        return len(self.observations)

    def timestamps_ordered(self) -> bool:
        ts = [o.t for o in self.observations]
        if any(t is None for t in ts):
            return True
        return all(a <= b for a, b in zip(ts, ts[1:]))


@dataclass(frozen=True)
class EvidentialStatement:
    name: str
    sequences: tuple[str, ...]
    loc: Loc | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sequences", tuple(self.sequences))


# --------------------------------------------------------------------------
# system models


@dataclass(frozen=True)
class Transition:
    src: str
    event: str
    dst: str
    loc: Loc | None = field(default=None, compare=False, repr=False)

    def key(self) -> tuple[str, str, str]:
        return (self.src, self.event, self.dst)


@dataclass(frozen=True)
class SystemModel:
    """A finite, possibly nondeterministic transition system.

    ``states`` maps each state name to its full field valuation.  ``final``
    of ``None`` means every state is final.
    """

    name: str
    schema: Mapping[str, str]
    states: Mapping[str, Mapping[str, Value]]
    events: tuple[str, ...]
    transitions: tuple[Transition, ...]
    initial: tuple[str, ...]
    final: tuple[str, ...] | None = None
    loc: Loc | None = field(default=None, compare=False, repr=False)
    locs: Mapping = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "initial", tuple(self.initial))
        object.__setattr__(
            self,
            "transitions",
            tuple(t if isinstance(t, Transition) else Transition(*t) for t in self.transitions),
        )
        if self.final is not None:
            object.__setattr__(self, "final", tuple(self.final))

    @property
    def final_states(self) -> frozenset[str]:
        if self.final is None:
            return frozenset(self.states)
        return frozenset(self.final)

    def successors(self, state: str) -> list[tuple[str, str]]:
        """Enabled ``(event, next_state)`` choices from *state*, sorted."""
        cache = self.__dict__.get("_succ")
        if cache is None:
            cache = {}
            for tr in self.transitions:
                cache.setdefault(tr.src, set()).add((tr.event, tr.dst))
            cache = {s: sorted(v) for s, v in cache.items()}
            object.__setattr__(self, "_succ", cache)
        return cache.get(state, [])

    def point(self, state: str, event: str | None = None) -> Point:
        return (self.states[state], event)

    def problems(self) -> Iterator[tuple[str, str, Loc | None]]:
        """Yield ``(code, message, loc)`` for each violated model invariant."""
        for fname, kind in self.schema.items():
            if kind not in KINDS:
                yield "type", f"unknown field kind {kind}", self.locs.get(("field", fname))
        for sname, valuation in self.states.items():
            loc = self.locs.get(("state", sname))
            for fname, value in valuation.items():
                vloc = self.locs.get(("value", sname, fname), loc)
                if fname not in self.schema:
                    yield "name", f"state {sname} assigns unknown field {fname}", vloc
                elif kind_of(value) != self.schema[fname]:
                    yield "type", f"state {sname}: field {fname} is {self.schema[fname]}, got {kind_of(value)}", vloc
            for fname in self.schema:
                if fname not in valuation:
                    yield "name", f"state {sname} does not assign field {fname}", loc
        events = set(self.events)
        seen = set()
        for tr in self.transitions:
            for end in (tr.src, tr.dst):
                if end not in self.states:
                    yield "name", f"unknown state {end}", tr.loc
            if tr.event not in events:
                yield "name", f"unknown event {tr.event}", tr.loc
            if tr.key() in seen:
                yield "name", f"duplicate transition {tr.src} -{tr.event}-> {tr.dst}", tr.loc
            seen.add(tr.key())
        if not self.initial:
            yield "name", "model has no initial state", self.loc
        for group, names in (("initial", self.initial), ("final", self.final or ())):
            for sname in names:
                if sname not in self.states:
                    yield "name", f"unknown state {sname}", self.locs.get((group, sname), self.loc)

    def check(self) -> None:
        for _, message, _ in self.problems():
            raise ModelError(f"model {self.name}: {message}")


@dataclass(frozen=True)
class Run:
    """``states[0] events[0] states[1] ...`` with ``len(states) == len(events) + 1``."""

    states: tuple[str, ...]
    events: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "events", tuple(self.events))
        if len(self.states) != len(self.events) + 1:
            raise ModelError("a run has exactly one more state than events")

    @property
    def length(self) -> int:
        return len(self.events)

    def points(self, model: SystemModel) -> list[Point]:
        pts = [model.point(self.states[0])]
        for event, state in zip(self.events, self.states[1:]):
            pts.append(model.point(state, event))
        return pts

    def steps(self) -> list[tuple[str, str, str]]:
        return list(zip(self.states, self.events, self.states[1:]))

    def is_valid(self, model: SystemModel) -> bool:
        if self.states[0] not in model.initial or self.states[-1] not in model.final_states:
            return False
        triples = {t.key() for t in model.transitions}
        return all(step in triples for step in self.steps())

    def __str__(self) -> str:
        out = self.states[0]
        for event, state in zip(self.events, self.states[1:]):
            out += f" --{event}--> {state}"
        return out


# --------------------------------------------------------------------------
# matching


def find_partition(os: ObservationSequence, points: Sequence[Point]) -> tuple[int, ...] | None:
    """Block lengths ``(k_1, ..., k_n)`` covering *points*, or ``None``.

    Block ``i`` has ``min_i <= k_i <= min_i + max_i`` and observation ``i``'s
    property holds at each of its points.  Among valid partitions the one
    with the longest leading blocks is returned.
    """
    obs = os.observations
    n, m = len(obs), len(points)
    truth = [[eval_property(o.prop, p) for p in points] for o in obs]
    # run[i][j]: number of consecutive points from j on where obs i holds
    run = []
    for row in truth:
        r = [0] * (m + 1)
        for j in range(m - 1, -1, -1):
            r[j] = r[j + 1] + 1 if row[j] else 0
        run.append(r)
    # ok[i][j]: observations i.. can cover points j..
    ok = [[False] * (m + 1) for _ in range(n + 1)]
    ok[n][m] = True
    for i in range(n - 1, -1, -1):
        o = obs[i]
        for j in range(m + 1):
            hi = min(run[i][j], o.upper, m - j)
            ok[i][j] = any(ok[i + 1][j + k] for k in range(o.min, int(hi) + 1))
    if not ok[0][0]:
        return None
    lengths = []
    j = 0
    for i, o in enumerate(obs):
        hi = int(min(run[i][j], o.upper, m - j))
        k = next(k for k in range(hi, o.min - 1, -1) if ok[i + 1][j + k])
        lengths.append(k)
        j += k
    return tuple(lengths)


def matches_sequence(os: ObservationSequence, points: Sequence[Point]) -> bool:
    return find_partition(os, points) is not None


def blocks(lengths: Sequence[int]) -> list[tuple[int, int]]:
    """Half-open point ranges for block *lengths*."""
    out, start = [], 0
    for k in lengths:
        out.append((start, start + k))
        start += k
    return out
