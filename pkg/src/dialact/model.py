"""Speech-act inventory and dialogue machine definitions.

A model definition is a small section-based text file::

    [acts]
    VORSCHLAG phase
    [machine]
    initial S0
    final S9
    S0 VORSCHLAG S1
    [anywhere]
    [keywords]
    VORSCHLAG: how about, suggest

See ``data/default.model`` for the shipped model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from types import MappingProxyType
from typing import Mapping

from .errors import ParseError, UnknownActError, ValidationError

PHASE = "phase"
ANYWHERE = "anywhere"
CLARIFY_OPEN = "clarify-open"
CLARIFY_CLOSE = "clarify-close"
ACT_CLASSES = (PHASE, ANYWHERE, CLARIFY_OPEN, CLARIFY_CLOSE)

CORE_ACTS = (
    "BEGRUESSUNG",
    "VERABSCHIEDUNG",
    "INIT_TERMINABSPRACHE",
    "BESTAETIGUNG",
    "AKZEPTANZ",
    "ABLEHNUNG",
    "VORSCHLAG",
    "AUFFORDERUNG_VORSCHLAG",
    "AUFFORDERUNG_STELLUNG",
)

SECTIONS = ("acts", "machine", "anywhere", "keywords")


@dataclass(frozen=True)
class ActInventory:
    """The closed set of speech-act labels a model recognizes.

    ``counterparts`` maps each clarification-opening act to the act that
    closes it.
    """

    acts: tuple[str, ...]
    classes: Mapping[str, str]
    keywords: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    counterparts: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "classes", MappingProxyType(dict(self.classes)))
        object.__setattr__(self, "keywords", MappingProxyType(dict(self.keywords)))
        object.__setattr__(self, "counterparts", MappingProxyType(dict(self.counterparts)))
        object.__setattr__(self, "_index", {a: i for i, a in enumerate(self.acts)})

    def __contains__(self, label) -> bool:
        return label in self._index

    def __len__(self) -> int:
        return len(self.acts)

    def __iter__(self):
        return iter(self.acts)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownActError(label) from None

    def of_class(self, cls: str) -> tuple[str, ...]:
        return tuple(a for a in self.acts if self.classes[a] == cls)

    def __eq__(self, other):
        if not isinstance(other, ActInventory):
            return NotImplemented
        return (
            self.acts == other.acts
            and dict(self.classes) == dict(other.classes)
            and dict(self.keywords) == dict(other.keywords)
            and dict(self.counterparts) == dict(other.counterparts)
        )

    def __hash__(self):
        return hash(self.acts)


@dataclass(frozen=True)
class DialogueMachine:
    """Deterministic finite-state description of admissible act sequences.

    States keep definition order (first mention in the model file), which
    the tracker uses for tie-breaking.
    """

    states: tuple[str, ...]
    initial: str
    final: frozenset[str]
    transitions: tuple[tuple[str, str, str], ...]
    anywhere: frozenset[str] = frozenset()
    phases: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "phases", MappingProxyType(dict(self.phases)))
        delta = {}
        incoming: dict[str, list[str]] = {}
        outgoing: dict[str, list[str]] = {}
        for src, act, dst in self.transitions:
            delta[(src, act)] = dst
            incoming.setdefault(act, [])
            if dst not in incoming[act]:
                incoming[act].append(dst)
            outgoing.setdefault(src, []).append(act)
        object.__setattr__(self, "_delta", delta)
        object.__setattr__(self, "_incoming", {a: tuple(s) for a, s in incoming.items()})
        object.__setattr__(self, "_outgoing", {s: tuple(a) for s, a in outgoing.items()})

    def next_state(self, state: str, act: str) -> str | None:
        return self._delta.get((state, act))

    def states_entered_by(self, act: str) -> tuple[str, ...]:
        """States with an incoming transition labelled ``act``, in definition order."""
        found = set(self._incoming.get(act, ()))
        return tuple(s for s in self.states if s in found)

    def outgoing_labels(self, state: str) -> tuple[str, ...]:
        return self._outgoing.get(state, ())

    def phase_of(self, state: str) -> str | None:
        for name, members in self.phases.items():
            if state in members:
                return name
        return None

    def accepts(self, acts) -> bool:
        """True if the plain machine (no anywhere/clarification handling) accepts ``acts``."""
        state = self.initial
        for act in acts:
            if act in self.anywhere:
                continue
            state = self.next_state(state, act)
            if state is None:
                return False
        return state in self.final


def validate_act(inventory: ActInventory, label: str) -> bool:
    return label in inventory


def keywords_for(inventory: ActInventory, label: str) -> list[str]:
    """Keywords configured for ``label``, in file order."""
    if label not in inventory:
        raise UnknownActError(label)
    return list(inventory.keywords.get(label, ()))


def _check_inventory(acts, classes, counterparts):
    if not acts:
        raise ValidationError("inventory empty")
    missing = [a for a in CORE_ACTS if a not in classes]
    if missing:
        raise ValidationError(f"inventory lacks core acts: {', '.join(missing)}")
    for opener, closer in counterparts.items():
        if classes.get(closer) != CLARIFY_CLOSE:
            raise ValidationError(
                f"clarification act {opener} needs a clarify-close counterpart, got {closer!r}"
            )
    for act in acts:
        if classes[act] == CLARIFY_OPEN and act not in counterparts:
            raise ValidationError(f"clarification act {act} has no closing counterpart")


def _check_machine(machine: DialogueMachine, inventory: ActInventory):
    seen = {}
    for src, act, dst in machine.transitions:
        if act not in inventory:
            raise ValidationError(f"unknown act in transition: {src} {act} {dst}")
        if (src, act) in seen and seen[(src, act)] != dst:
            raise ValidationError(
                f"nondeterministic transitions: {src} {act} -> {seen[(src, act)]} / {dst}"
            )
        seen[(src, act)] = dst
    states = set(machine.states)
    if not machine.final:
        raise ValidationError("machine has no final state")
    for s in (machine.initial, *machine.final):
        if s not in states:
            raise ValidationError(f"unknown state {s}")
    for name, members in machine.phases.items():
        for s in members:
            if s not in states:
                raise ValidationError(f"phase {name} names unknown state {s}")
    for act in machine.anywhere:
        if act not in inventory:
            raise ValidationError(f"unknown anywhere act {act}")
        if inventory.classes[act] != ANYWHERE:
            raise ValidationError(f"anywhere act {act} is not of class anywhere")
    reach = {machine.initial}
    frontier = [machine.initial]
    while frontier:
        s = frontier.pop()
        for act in machine.outgoing_labels(s):
            t = machine.next_state(s, act)
            if t not in reach:
                reach.add(t)
                frontier.append(t)
    unreachable = sorted(machine.final - reach)
    if unreachable:
        raise ValidationError(f"final state unreachable: {', '.join(unreachable)}")


def _split_sections(text: str):
    current = None
    order = []
    body: dict[str, list[tuple[int, str]]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in SECTIONS:
                raise ParseError(f"unknown section [{name}]", lineno)
            if name in body:
                raise ParseError(f"duplicate section [{name}]", lineno)
            if order and SECTIONS.index(name) < SECTIONS.index(order[-1]):
                raise ParseError(f"section [{name}] out of order", lineno)
            order.append(name)
            body[name] = []
            current = name
            continue
        if current is None:
            raise ParseError("content before first section", lineno)
        body[current].append((lineno, line))
    return body


def load_model(definition_text: str) -> tuple[ActInventory, DialogueMachine]:
    """Parse and validate a model definition."""
    body = _split_sections(definition_text)
    if "acts" not in body:
        raise ParseError("missing [acts] section")
    if "machine" not in body:
        raise ParseError("missing [machine] section")

    acts: list[str] = []
    classes: dict[str, str] = {}
    counterparts: dict[str, str] = {}
    for lineno, line in body["acts"]:
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ParseError(f"expected 'NAME class', got {line!r}", lineno)
        name, cls = parts[0], parts[1]
        if cls not in ACT_CLASSES:
            raise ParseError(f"unknown act class {cls!r}", lineno)
        if name in classes:
            raise ValidationError(f"duplicate act {name} (line {lineno})")
        if cls == CLARIFY_OPEN:
            if len(parts) != 3:
                raise ParseError(f"clarify-open act {name} needs a closing counterpart", lineno)
            counterparts[name] = parts[2]
        elif len(parts) == 3:
            raise ParseError(f"unexpected token {parts[2]!r}", lineno)
        acts.append(name)
        classes[name] = cls
    _check_inventory(acts, classes, counterparts)

    keywords: dict[str, tuple[str, ...]] = {}
    for lineno, line in body.get("keywords", []):
        name, sep, rest = line.partition(":")
        name = name.strip()
        if not sep:
            raise ParseError(f"expected 'ACT: word, ...', got {line!r}", lineno)
        if name not in classes:
            raise UnknownActError(name, lineno)
        words = tuple(w.strip() for w in rest.split(",") if w.strip())
        keywords[name] = keywords.get(name, ()) + words
    inventory = ActInventory(tuple(acts), classes, keywords, counterparts)

    initial = None
    final: list[str] = []
    transitions: list[tuple[str, str, str]] = []
    phases: dict[str, tuple[str, ...]] = {}
    states: list[str] = []

    def note(*ss):
        for s in ss:
            if s not in states:
                states.append(s)

    for lineno, line in body["machine"]:
        parts = line.split()
        if parts[0] == "initial":
            if len(parts) != 2:
                raise ParseError("expected 'initial STATE'", lineno)
            initial = parts[1]
            note(initial)
        elif parts[0] == "final":
            if len(parts) < 2:
                raise ParseError("expected 'final STATE ...'", lineno)
            final.extend(parts[1:])
        elif parts[0] == "phase":
            if len(parts) < 3:
                raise ParseError("expected 'phase NAME STATE ...'", lineno)
            phases[parts[1]] = tuple(parts[2:])
        elif len(parts) == 3:
            src, act, dst = parts
            if act not in inventory:
                raise ValidationError(f"unknown act in transition: {line} (line {lineno})")
            transitions.append((src, act, dst))
            note(src, dst)
        else:
            raise ParseError(f"expected 'FROM ACT TO', got {line!r}", lineno)
    if initial is None:
        raise ParseError("machine has no initial state")

    anywhere = []
    for lineno, line in body.get("anywhere", []):
        if line not in inventory:
            raise UnknownActError(line, lineno)
        anywhere.append(line)

    machine = DialogueMachine(
        states=tuple(states),
        initial=initial,
        final=frozenset(final),
        transitions=tuple(transitions),
        anywhere=frozenset(anywhere),
        phases=phases,
    )
    _check_machine(machine, inventory)
    return inventory, machine


def dump_model(inventory: ActInventory, machine: DialogueMachine) -> str:
    """Serialize a model; ``load_model(dump_model(i, m)) == (i, m)``."""
    out = ["[acts]"]
    for act in inventory.acts:
        cls = inventory.classes[act]
        tail = f" {inventory.counterparts[act]}" if cls == CLARIFY_OPEN else ""
        out.append(f"{act} {cls}{tail}")
    out += ["", "[machine]", f"initial {machine.initial}"]
    out.append("final " + " ".join(s for s in machine.states if s in machine.final))
    for name, members in machine.phases.items():
        out.append(f"phase {name} {' '.join(members)}")
    # states never mentioned by a transition only survive through initial/final
    out += [f"{s} {a} {d}" for s, a, d in machine.transitions]
    out += ["", "[anywhere]"]
    out += [a for a in inventory.acts if a in machine.anywhere]
    out += ["", "[keywords]"]
    for act in inventory.acts:
        if act in inventory.keywords:
            out.append(f"{act}: {', '.join(inventory.keywords[act])}")
    return "\n".join(out) + "\n"


def default_model_text() -> str:
    return resources.files("dialact.data").joinpath("default.model").read_text("utf-8")


def load_default_model() -> tuple[ActInventory, DialogueMachine]:
    return load_model(default_model_text())


def read_model(path) -> tuple[ActInventory, DialogueMachine]:
    with open(path, encoding="utf-8") as fh:
        return load_model(fh.read())
