"""Finite-state layer: steps a dialogue machine over the observed act stream.

Acts the machine does not admit are logged as an inconsistency and the
tracker jumps to the most probable state instead of stopping, so the event
log doubles as the signal to the planner.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .errors import UnknownActError
from .model import ANYWHERE, CLARIFY_CLOSE, CLARIFY_OPEN, ActInventory, DialogueMachine
from .predictor import Predictor

ACCEPTED = "accepted"
ANYWHERE_ACCEPTED = "anywhere-accepted"
CLARIFICATION_OPENED = "clarification-opened"
CLARIFICATION_CLOSED = "clarification-closed"
INCONSISTENCY = "inconsistency"
FALLBACK_APPLIED = "fallback-applied"

EVENT_KINDS = (
    ACCEPTED,
    ANYWHERE_ACCEPTED,
    CLARIFICATION_OPENED,
    CLARIFICATION_CLOSED,
    INCONSISTENCY,
    FALLBACK_APPLIED,
)


@dataclass(frozen=True)
class TrackerEvent:
    kind: str
    act: str
    from_state: str
    to_state: str

    def format(self) -> str:
        return f"{self.kind}\t{self.act}\t{self.from_state}\t{self.to_state}"

    @classmethod
    def parse(cls, line: str) -> "TrackerEvent":
        kind, act, src, dst = line.rstrip("\n").split("\t")
        return cls(kind, act, src, dst)

    @property
    def is_inconsistent(self) -> bool:
        return self.kind in (INCONSISTENCY, FALLBACK_APPLIED)


@dataclass(frozen=True)
class TrackerState:
    machine: DialogueMachine
    inventory: ActInventory
    current: str
    clarification_stack: tuple[str, ...] = ()
    history: tuple[str, ...] = ()
    event_log: tuple[TrackerEvent, ...] = ()

    @property
    def depth(self) -> int:
        return len(self.clarification_stack)


def start(machine: DialogueMachine, inventory: ActInventory) -> TrackerState:
    return TrackerState(machine, inventory, machine.initial)


def fallback(state: TrackerState, act: str, predictor: Predictor | None = None) -> str:
    """State to resume from after ``act`` was inconsistent in ``state.current``.

    Candidates are the states ``act`` can lead into.  Each is scored by the
    probability mass the predictor gives to that state's outgoing labels once
    ``act`` is part of the history; the earliest-defined state wins ties.
    """
    candidates = state.machine.states_entered_by(act)
    if not candidates:
        return state.current
    if len(candidates) == 1:
        return candidates[0]
    if predictor is None:
        return state.current
    history = [*state.history, act]
    dist = predictor.distribution(history)
    best, best_score = None, -1.0
    for s in candidates:
        score = sum(dist[label] for label in state.machine.outgoing_labels(s))
        if score > best_score:
            best, best_score = s, score
    return best


def step(
    state: TrackerState,
    act: str,
    predictor: Predictor | None = None,
) -> tuple[TrackerState, TrackerEvent]:
    """Consume one act; returns the new state and its terminal event."""
    if act not in state.inventory:
        raise UnknownActError(act)
    machine = state.machine
    cls = state.inventory.classes[act]
    cur = state.current
    history = (*state.history, act)
    stack = state.clarification_stack
    events: list[TrackerEvent] = []

    if cls == CLARIFY_OPEN:
        # the opening act may itself move the machine, e.g. into a
        # dedicated clarification state
        nxt = machine.next_state(cur, act) or cur
        stack = (*stack, cur)
        events.append(TrackerEvent(CLARIFICATION_OPENED, act, cur, nxt))
    elif cls == CLARIFY_CLOSE and stack:
        nxt = stack[-1]
        stack = stack[:-1]
        events.append(TrackerEvent(CLARIFICATION_CLOSED, act, cur, nxt))
    elif act in machine.anywhere or cls == ANYWHERE:
        nxt = cur
        events.append(TrackerEvent(ANYWHERE_ACCEPTED, act, cur, cur))
    elif (nxt := machine.next_state(cur, act)) is not None:
        events.append(TrackerEvent(ACCEPTED, act, cur, nxt))
    else:
        events.append(TrackerEvent(INCONSISTENCY, act, cur, cur))
        nxt = fallback(state, act, predictor)
        events.append(TrackerEvent(FALLBACK_APPLIED, act, cur, nxt))

    new = replace(
        state,
        current=nxt,
        clarification_stack=stack,
        history=history,
        event_log=state.event_log + tuple(events),
    )
    return new, events[-1]


def run(
    machine: DialogueMachine,
    inventory: ActInventory,
    acts: Sequence[str],
    predictor: Predictor | None = None,
) -> TrackerState:
    state = start(machine, inventory)
    for act in acts:
        state, _ = step(state, act, predictor)
    return state


def is_complete(state: TrackerState) -> bool:
    return state.current in state.machine.final and not state.clarification_stack


def inconsistencies(state: TrackerState) -> int:
    return sum(e.kind == INCONSISTENCY for e in state.event_log)


def format_log(events: Sequence[TrackerEvent]) -> str:
    return "".join(e.format() + "\n" for e in events)


def parse_log(text: str) -> list[TrackerEvent]:
    return [TrackerEvent.parse(line) for line in text.splitlines() if line.strip()]
