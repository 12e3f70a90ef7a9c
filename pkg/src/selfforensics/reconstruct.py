"""Event reconstruction over the product of a model and compiled stories.

Each observation sequence compiles to a small counter automaton
(:class:`StoryAutomaton`).  A :class:`Product` pairs a system model with the
automata of an evidential statement; :func:`psi` advances a configuration by
one run point and :func:`psi_inverse` walks an explored product graph
backwards.  :func:`reconstruct` enumerates every run of bounded length that
all stories match, in a fixed order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .model import (
    INF,
    ObservationSequence,
    Point,
    Run,
    SystemModel,
    blocks,
    eval_property,
    find_partition,
)

RANK_MODES = ("sum", "product", "min")


class EngineError(RuntimeError):
    """Misuse of the engine (illegal choice, unknown configuration)."""


# --------------------------------------------------------------------------
# story automata


@dataclass(frozen=True)
class StoryAutomaton:
    """Counter automaton for one observation sequence.

    States are ``(i, c)``: inside observation ``i`` having consumed ``c``
    points.  ``(n, 0)`` is the accept marker.  Sets of states handed out by
    :meth:`start` and :meth:`step` are already epsilon-closed.
    """

    sequence: ObservationSequence

    @property
    def accept(self) -> tuple[int, int]:
        return (len(self.sequence.observations), 0)

    def _cap(self, i: int) -> int:
        o = self.sequence.observations[i]
        return o.min if o.max == INF else o.min + o.max

    def states(self) -> list[tuple[int, int]]:
        out = [(i, c) for i in range(len(self.sequence.observations)) for c in range(self._cap(i) + 1)]
        return out + [self.accept]

    def closure(self, states: Iterable[tuple[int, int]]) -> frozenset:
        obs = self.sequence.observations
        todo = list(states)
        seen = set(todo)
        while todo:
            i, c = todo.pop()
            if i < len(obs) and c >= obs[i].min:
                nxt = (i + 1, 0)
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return frozenset(seen)

    def start(self) -> frozenset:
        return self.closure([(0, 0)])

    def step(self, states: frozenset, point: Point) -> frozenset:
        obs = self.sequence.observations
        moved = set()
        holds: dict[int, bool] = {}
        for i, c in states:
            if i == len(obs):
                continue
            o = obs[i]
            if o.max == INF:
                nxt = (i, min(c + 1, o.min))
            elif c < o.min + o.max:
                nxt = (i, c + 1)
            else:
                continue
            if i not in holds:
                holds[i] = eval_property(o.prop, point)
            if holds[i]:
                moved.add(nxt)
        return self.closure(moved)

    def accepts(self, points: Sequence[Point]) -> bool:
        current = self.start()
        for p in points:
            current = self.step(current, p)
            if not current:
                return False
        return self.accept in current


def compile_story(os: ObservationSequence) -> StoryAutomaton:
    return StoryAutomaton(os)


# --------------------------------------------------------------------------
# product


@dataclass(frozen=True)
class ProductConfig:
    """Model position (``None`` before the initial state) plus story states."""

    position: str | None
    stories: tuple[frozenset, ...]

    @property
    def dead(self) -> bool:
        return bool(self.stories) and not any(self.stories)


Choice = tuple  # (event or None, next state)


class Product:
    """A system model paired with the compiled stories of an evidential statement."""

    def __init__(self, model: SystemModel, sequences: Sequence[ObservationSequence]) -> None:
        self.model = model
        self.sequences = tuple(sequences)
        self.automata = tuple(compile_story(s) for s in self.sequences)
        self._final = model.final_states

    def initial(self) -> ProductConfig:
        return ProductConfig(None, tuple(a.start() for a in self.automata))

    def choices(self, config: ProductConfig) -> list[Choice]:
        """Legal choices from *config* in (event, state) order."""
        if config.position is None:
            return [(None, s) for s in sorted(set(self.model.initial))]
        return self.model.successors(config.position)

    def psi(self, config: ProductConfig, choice: Choice) -> ProductConfig:
        event, state = choice
        if config.position is None:
            if event is not None or state not in self.model.initial:
                raise EngineError(f"{choice!r} is not an initial-state choice")
        elif (event, state) not in self.model.successors(config.position):
            raise EngineError(f"no transition {config.position} -{event}-> {state}")
        point = self.model.point(state, event)
        stories = tuple(a.step(s, point) for a, s in zip(self.automata, config.stories))
        if stories and not all(stories):
            stories = tuple(frozenset() for _ in stories)
        return ProductConfig(state, stories)

    def accepting(self, config: ProductConfig) -> bool:
        return (
            config.position is not None
            and config.position in self._final
            and all(a.accept in s for a, s in zip(self.automata, config.stories))
        )


def psi(product: Product, config: ProductConfig, choice: Choice) -> ProductConfig:
    return product.psi(config, choice)


@dataclass
class ProductGraph:
    """Live (non-dead) configurations reachable within a step bound."""

    product: Product
    forward: dict = field(default_factory=dict)  # config -> [(choice, config)]
    backward: dict = field(default_factory=dict)  # config -> {(config, choice)}

    def edges(self) -> set:
        return {(c, ch, d) for c, outs in self.forward.items() for ch, d in outs}

    def reverse_edges(self) -> set:
        return {(c, ch, d) for d, ins in self.backward.items() for c, ch in ins}


def explore(product: Product, max_len: int) -> ProductGraph:
    """Breadth-first product graph covering runs of at most *max_len* transitions."""
    graph = ProductGraph(product)
    start = product.initial()
    graph.forward[start] = []
    graph.backward[start] = set()
    depth = {start: -1}
    queue = deque([start])
    while queue:
        config = queue.popleft()
        if depth[config] >= max_len:
            continue
        for choice in product.choices(config):
            nxt = product.psi(config, choice)
            if nxt.dead:
                continue
            graph.forward[config].append((choice, nxt))
            if nxt not in depth:
                depth[nxt] = depth[config] + 1
                graph.forward[nxt] = []
                graph.backward[nxt] = set()
                queue.append(nxt)
            graph.backward[nxt].add((config, choice))
    return graph


def psi_inverse(graph: ProductGraph, config: ProductConfig) -> frozenset:
    """All ``(predecessor, choice)`` pairs with ``psi(predecessor, choice) == config``."""
    try:
        return frozenset(graph.backward[config])
    except KeyError:
        raise EngineError("configuration is not part of the explored product graph") from None


# --------------------------------------------------------------------------
# explanations


@dataclass(frozen=True)
class Explanation:
    run: Run
    partitions: tuple[tuple[str, tuple[tuple[int, int], ...]], ...]

    @property
    def length(self) -> int:
        return self.run.length + 1

    @property
    def matched(self) -> tuple[tuple[str, int], ...]:
        """Per sequence, how many observations cover at least one point."""
        return tuple((name, sum(1 for a, b in ranges if b > a)) for name, ranges in self.partitions)

    def to_dict(self) -> dict:
        return {
            "length": self.length,
            "states": list(self.run.states),
            "events": list(self.run.events),
            "partitions": {name: [list(r) for r in ranges] for name, ranges in self.partitions},
        }


def explain(model: SystemModel, sequences: Sequence[ObservationSequence], run: Run) -> Explanation | None:
    """Explanation of *run* against every sequence, or ``None`` if one fails."""
    points = run.points(model)
    parts = []
    for os in sequences:
        lengths = find_partition(os, points)
        if lengths is None:
            return None
        parts.append((os.name, tuple(blocks(lengths))))
    return Explanation(run, tuple(parts))


class Reconstruction(Sequence):
    """Ordered explanations plus a flag telling whether *limit* cut the list."""

    def __init__(self, explanations: list[Explanation], truncated: bool = False) -> None:
        self.explanations = explanations
        self.truncated = truncated

    def __getitem__(self, index):
        return self.explanations[index]

    def __len__(self) -> int:
        return len(self.explanations)

    def runs(self) -> list[Run]:
        return [e.run for e in self.explanations]

    def __repr__(self) -> str:
        return f"Reconstruction({len(self)} explanations, truncated={self.truncated})"


class _Search:
    def __init__(self, product: Product) -> None:
        self.product = product
        self.memo: dict = {}

    def viable(self, config: ProductConfig, remaining: int) -> bool:
        """Can *config* reach acceptance in exactly *remaining* steps?"""
        key = (config, remaining)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        if config.dead:
            ok = False
        elif remaining == 0:
            ok = self.product.accepting(config)
        else:
            ok = any(
                self.viable(self.product.psi(config, ch), remaining - 1)
                for ch in self.product.choices(config)
            )
        self.memo[key] = ok
        return ok

    def runs(self, transitions: int) -> Iterator[tuple[list, list]]:
        """Runs with exactly *transitions* steps, lexicographic by (event, state)."""
        product = self.product
        path: list[Choice] = []

        def dfs(config: ProductConfig, remaining: int):
            if remaining < 0:
                yield [s for _, s in path], [e for e, _ in path[1:]]
                return
            for ch in product.choices(config):
                nxt = product.psi(config, ch)
                if self.viable(nxt, remaining):
                    path.append(ch)
                    yield from dfs(nxt, remaining - 1)
                    path.pop()

        yield from dfs(product.initial(), transitions)


def reconstruct(
    model: SystemModel,
    sequences: Sequence[ObservationSequence],
    max_len: int,
    limit: int | None = None,
) -> Reconstruction:
    """Every run with at most *max_len* transitions matched by all *sequences*.

    Runs come shortest first, then lexicographically by ``(event, state)``
    per step.
    """
    if max_len < 0:
        raise ValueError("max_len must be non-negative")
    search = _Search(Product(model, sequences))
    out: list[Explanation] = []
    for transitions in range(max_len + 1):
        for states, events in search.runs(transitions):
            if limit is not None and len(out) == limit:
                return Reconstruction(out, truncated=True)
            explanation = explain(model, sequences, Run(states, events))
            assert explanation is not None, "product accepted a run a story rejects"
            out.append(explanation)
    return Reconstruction(out)


# --------------------------------------------------------------------------
# theories


def agrees(
    model: SystemModel,
    sequences: Sequence[ObservationSequence],
    theory: ObservationSequence,
    max_len: int,
) -> tuple[bool, Explanation | None]:
    found = reconstruct(model, [*sequences, theory], max_len, limit=1)
    return (True, found[0]) if found else (False, None)


def cumulative_weight(theory: ObservationSequence, mode: str = "sum") -> Fraction:
    weights = [o.w for o in theory.observations]
    if mode == "sum":
        return sum(weights, Fraction(0))
    if mode == "product":
        out = Fraction(1)
        for w in weights:
            out *= w
        return out
    if mode == "min":
        return min(weights)
    raise ValueError(f"rank mode must be one of {', '.join(RANK_MODES)}")


@dataclass(frozen=True)
class RankedTheory:
    name: str
    agrees: bool
    observations: int
    weight: Fraction
    mode: str
    witness: Explanation | None = None


def rank_theories(
    model: SystemModel,
    sequences: Sequence[ObservationSequence],
    theories: Sequence[ObservationSequence],
    max_len: int,
    mode: str = "sum",
) -> list[RankedTheory]:
    """Agreeing theories by (observations, weight) descending, then the rest.

    Ties keep declaration order; non-agreeing theories follow in
    declaration order.
    """
    if not theories:
        raise ValueError("no theories to rank")
    if mode not in RANK_MODES:
        raise ValueError(f"rank mode must be one of {', '.join(RANK_MODES)}")
    ranked = []
    for theory in theories:
        ok, witness = agrees(model, sequences, theory, max_len)
        ranked.append(RankedTheory(theory.name, ok, len(theory), cumulative_weight(theory, mode), mode, witness))
    order = sorted(range(len(ranked)), key=lambda i: (-ranked[i].observations, -ranked[i].weight, i))
    good = [ranked[i] for i in order if ranked[i].agrees]
    return good + [r for r in ranked if not r.agrees]
