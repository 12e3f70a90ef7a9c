"""Seeded random walks over a system model, with fault injection.

Faults are written one per statement::

    inject at 2 event go;
    inject at 3 set power = 0;

Step 0 is the initial state; step ``k >= 1`` is the k-th transition.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .dsl import CaseError, _Failure, _Parser, tokenize
from .model import Run, SystemModel, Value, kind_of


class SimulationError(RuntimeError):
    def __init__(self, step: int | None, message: str) -> None:
        self.step = step
        super().__init__(message if step is None else f"step {step}: {message}")


@dataclass(frozen=True)
class Injection:
    step: int
    event: str | None = None
    fieldname: str | None = None
    value: Value | None = None


@dataclass(frozen=True)
class FaultSpec:
    injections: tuple[Injection, ...] = ()

    def __add__(self, other: "FaultSpec") -> "FaultSpec":
        return FaultSpec(self.injections + other.injections)

    def check(self, model: SystemModel, steps: int) -> None:
        forced: set[int] = set()
        for inj in self.injections:
            if inj.step < 0:
                raise SimulationError(inj.step, "injection steps are non-negative")
            if inj.step > steps:
                raise SimulationError(inj.step, f"injection beyond the last step ({steps})")
            if inj.event is not None:
                if inj.step == 0:
                    raise SimulationError(0, "the initial record carries no event")
                if inj.event not in model.events:
                    raise SimulationError(inj.step, f"unknown event {inj.event}")
                if inj.step in forced:
                    raise SimulationError(inj.step, "two events forced at one step")
                forced.add(inj.step)
            else:
                kind = model.schema.get(inj.fieldname)
                if kind is None:
                    raise SimulationError(inj.step, f"unknown field {inj.fieldname}")
                if kind_of(inj.value) != kind:
                    raise SimulationError(inj.step, f"field {inj.fieldname} is {kind}, got {kind_of(inj.value)}")


def parse_faults(text: str) -> FaultSpec:
    """Parse ``inject at ...;`` statements; raises :class:`CaseError`."""
    try:
        p = _Parser(tokenize(text))
        p.deferred = []
        out = []
        while p.tok.kind != "EOF":
            p.expect("inject")
            p.expect("at")
            step = int(p.integer("step (integer)").text)
            if p.accept("event"):
                out.append(Injection(step, event=p.ident("event name").text))
            elif p.accept("set"):
                name = p.ident("field name").text
                p.expect("=")
                out.append(Injection(step, fieldname=name, value=p.literal()))
            else:
                p.fail(f"expected 'event' or 'set', found {p._describe(p.tok)}")
            p.expect(";")
    except _Failure as failure:
        raise CaseError([failure.diagnostic]) from None
    return FaultSpec(tuple(out))


def simulate(model: SystemModel, steps: int, seed: int, faults: FaultSpec = FaultSpec(), **kwargs) -> list[dict]:
    """Emit ``steps + 1`` journal payloads for one seeded walk of *model*.

    Choices are uniform over the sorted initial states and the sorted
    ``(event, state)`` successors that can still complete the walk (honouring
    later forced events).  When no choice can, the walk proceeds anyway and
    fails at the step that breaks.  Field overrides only touch the emitted
    record; the walk continues from the true state.
    """
    return walk(model, steps, seed, faults, **kwargs)[0]


def walk(
    model: SystemModel,
    steps: int,
    seed: int,
    faults: FaultSpec = FaultSpec(),
    sensor: str = "S1",
    subsystem: str | None = None,
    start_ts: int = 0,
    period: int = 1000,
) -> tuple[list[dict], Run]:
    """Like :func:`simulate` but also returns the walked run."""
    if steps < 0:
        raise SimulationError(None, "steps must be non-negative")
    faults.check(model, steps)
    rng = random.Random(seed)
    subsystem = subsystem or model.name
    forced = {i.step: i.event for i in faults.injections if i.event is not None}
    overrides: dict[int, dict[str, Value]] = {}
    for inj in faults.injections:
        if inj.fieldname is not None:
            overrides.setdefault(inj.step, {})[inj.fieldname] = inj.value

    # completes[k]: states from which steps k+1..steps can all be taken
    completes = [set()] * steps + [set(model.states)]
    for k in range(steps - 1, -1, -1):
        completes[k] = {
            s for s in model.states
            if any(dst in completes[k + 1] for ev, dst in model.successors(s) if forced.get(k + 1, ev) == ev)
        }

    def pick(options, k, target):
        viable = [o for o in options if target(o) in completes[k]]
        return rng.choice(viable or options)

    initial = sorted(set(model.initial))
    if not initial:
        raise SimulationError(0, "model has no initial state")
    state = pick(initial, 0, lambda s: s)
    event = None
    payloads = []
    states, events = [], []
    for step in range(steps + 1):
        if step > 0:
            options = model.successors(state)
            if not options:
                raise SimulationError(step, f"state {state} has no outgoing transition")
            if step in forced:
                options = [o for o in options if o[0] == forced[step]]
                if not options:
                    raise SimulationError(step, f"event {forced[step]} is not enabled in state {state}")
            event, state = pick(options, step, lambda o: o[1])
            events.append(event)
        states.append(state)
        values = dict(model.states[state])
        values.update(overrides.get(step, {}))
        payloads.append({
            "ts": start_ts + step * period,
            "sensor": sensor,
            "subsystem": subsystem,
            "values": values,
            "event": event,
        })
    return payloads, Run(states, events)
