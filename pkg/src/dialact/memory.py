"""Three-layer dialogue memory: intentional, thematic and referential."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

PROPOSED = "proposed"
REFINED = "refined"
REJECTED = "rejected"
ACCEPTED = "accepted"
CONFIRMED = "confirmed"

OPEN_STATUSES = (PROPOSED, REFINED)

# allowed status changes of an existing record; "refined" is assigned to
# a new record at creation and never reached by a transition
TRANSITIONS = {
    PROPOSED: {REJECTED, ACCEPTED},
    REFINED: {REJECTED, ACCEPTED},
    ACCEPTED: {CONFIRMED},
    REJECTED: set(),
    CONFIRMED: set(),
}

TIME_KEYS = frozenset(
    {"month", "week", "day", "day_from", "day_to", "weekday", "date", "time", "hour", "year", "daytime"}
)
PLACE_KEYS = frozenset({"place", "location", "city", "room"})

RANGE = ("day_from", "day_to")

ACCEPT_ACT = "AKZEPTANZ"
REJECT_ACT = "ABLEHNUNG"
CONFIRM_ACT = "BESTAETIGUNG"


@dataclass
class ThematicRecord:
    round: int
    slots: dict[str, str]
    status: str
    proposed_in: str
    resolved_in: str | None = None
    parent: int | None = None  # index into DialogueMemory.thematic
    trail: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.trail:
            self.trail = [self.status]

    def move_to(self, status: str, turn_id: str):
        if status not in TRANSITIONS[self.status]:
            raise ValueError(f"illegal thematic transition {self.status} -> {status}")
        self.status = status
        self.resolved_in = turn_id
        self.trail.append(status)

    @property
    def is_open(self) -> bool:
        return self.status in OPEN_STATUSES


def _as_int(value):
    try:
        return int(value)
    except (TypeError, ValueError):
        return None


def narrows(old: dict[str, str], new: dict[str, str]) -> bool:
    """True if ``new`` keeps every slot of ``old`` and is strictly more specific.

    A ``day_from``/``day_to`` range counts as kept when the new range lies
    inside the old one.
    """
    if not old or new == old:
        return False
    for key, value in old.items():
        if key not in new:
            return False
        if key in RANGE and all(k in old and k in new for k in RANGE):
            continue
        if new[key] != value:
            return False
    if all(k in old and k in new for k in RANGE):
        lo, hi = _as_int(old["day_from"]), _as_int(old["day_to"])
        nlo, nhi = _as_int(new["day_from"]), _as_int(new["day_to"])
        if None in (lo, hi, nlo, nhi) or not (lo <= nlo <= nhi <= hi):
            return False
    return True


class DialogueMemory:
    """Discourse record built up turn by turn by the planner.

    ``intentional`` points at the plan tree; ``thematic`` lists negotiated
    items in creation order; ``referential`` maps an object key to its
    surface realizations as ``(turn_id, surface)`` pairs.
    """

    def __init__(self, intentional=None):
        self.intentional = intentional
        self.thematic: list[ThematicRecord] = []
        self.referential: dict[str, list[tuple[str, str]]] = {}
        self.turn_ids: list[str] = []
        self.warnings: list[str] = []

    def note_turn(self, turn_id: str):
        if turn_id not in self.turn_ids:
            self.turn_ids.append(turn_id)

    def _last_open(self) -> ThematicRecord | None:
        if self.thematic and self.thematic[-1].is_open:
            return self.thematic[-1]
        return None

    def retrieve_theme(self, turn, round: int = 0) -> ThematicRecord:
        """Record the negotiated content of a proposal turn."""
        self.note_turn(turn.turn_id)
        slots = dict(turn.slots)
        if not slots:
            self.warnings.append(f"{turn.turn_id}: missing theme")
        prev = self._last_open()
        if prev is not None and prev.round == round and narrows(prev.slots, slots):
            rec = ThematicRecord(round, slots, REFINED, turn.turn_id, parent=self.thematic.index(prev))
        else:
            rec = ThematicRecord(round, slots, PROPOSED, turn.turn_id)
        self.thematic.append(rec)
        return rec

    def resolve_theme(self, act: str, turn_id: str) -> ThematicRecord | None:
        """Apply an acceptance, rejection or confirmation to the latest record."""
        self.note_turn(turn_id)
        last = self.thematic[-1] if self.thematic else None
        if act == CONFIRM_ACT:
            if last is None or last.status != ACCEPTED:
                self.warnings.append(f"{turn_id}: nothing accepted to confirm")
                return None
            last.move_to(CONFIRMED, turn_id)
            return last
        if act not in (ACCEPT_ACT, REJECT_ACT):
            raise ValueError(f"{act} does not resolve a theme")
        if last is None or not last.is_open:
            self.warnings.append(f"{turn_id}: no open proposal for {act}")
            return None
        if act == ACCEPT_ACT:
            if any(r.round == last.round and r.status in (ACCEPTED, CONFIRMED) for r in self.thematic):
                self.warnings.append(f"{turn_id}: round {last.round} already has an accepted record")
                return None
            last.move_to(ACCEPTED, turn_id)
        else:
            last.move_to(REJECTED, turn_id)
        return last

    def record_realization(self, turn, object_key: str, surface: str):
        self.note_turn(turn.turn_id)
        self.referential.setdefault(object_key, []).append((turn.turn_id, surface))

    # queries

    def latest_accepted(self) -> ThematicRecord | None:
        for rec in reversed(self.thematic):
            if rec.status in (ACCEPTED, CONFIRMED):
                return rec
        return None

    def open_proposals(self) -> list[ThematicRecord]:
        return [r for r in self.thematic if r.is_open]

    def last_topic_kind(self) -> str:
        if not self.thematic:
            return "none"
        keys = set(self.thematic[-1].slots)
        if keys & TIME_KEYS:
            return "time"
        if keys & PLACE_KEYS:
            return "place"
        return "none"

    def realizations(self, object_key: str) -> list[tuple[str, str]]:
        return list(self.referential.get(object_key, ()))

    def query(self, selector: str, object_key: str | None = None):
        if selector == "latest-accepted":
            return self.latest_accepted()
        if selector == "open-proposals":
            return self.open_proposals()
        if selector == "last-topic-kind":
            return self.last_topic_kind()
        if selector == "realizations":
            return self.realizations(object_key)
        raise ValueError(f"unknown selector {selector!r}")

    def snapshot(self) -> "DialogueMemory":
        return copy.deepcopy(self)

    def check(self) -> list[str]:
        """Invariant violations, empty when the memory is well-formed."""
        problems = []
        per_round: dict[int, int] = {}
        for i, rec in enumerate(self.thematic):
            if rec.status == ACCEPTED:
                per_round[rec.round] = per_round.get(rec.round, 0) + 1
            first = rec.trail[0]
            if first not in (PROPOSED, REFINED):
                problems.append(f"record {i + 1} born as {first}")
            for a, b in zip(rec.trail, rec.trail[1:]):
                if b not in TRANSITIONS[a]:
                    problems.append(f"record {i + 1}: {a} -> {b}")
            if rec.parent is not None and not 0 <= rec.parent < i:
                problems.append(f"record {i + 1}: bad parent {rec.parent}")
        problems += [f"round {r} has {n} accepted records" for r, n in per_round.items() if n > 1]
        known = set(self.turn_ids)
        for key, entries in self.referential.items():
            problems += [f"{key}: unknown turn {t}" for t, _ in entries if t not in known]
        return problems

    def dump(self) -> str:
        """Thematic lines: number, round, status, slots, proposed in, resolved in, parent."""
        out = ["[intentional]"]
        if self.intentional is not None:
            out.append(self.intentional.dump().rstrip("\n"))
        out.append("[thematic]")
        for n, rec in enumerate(self.thematic, 1):
            slots = ";".join(f"{k}={v}" for k, v in rec.slots.items()) or "-"
            parent = "-" if rec.parent is None else f"#{rec.parent + 1}"
            out.append(
                "\t".join(
                    (f"#{n}", str(rec.round), rec.status, slots, rec.proposed_in, rec.resolved_in or "-", parent)
                )
            )
        out.append("[referential]")
        for key, entries in self.referential.items():
            body = "; ".join(f"{t} {json.dumps(s, ensure_ascii=False)}" for t, s in entries)
            out.append(f"{key}: {body}")
        return "\n".join(out) + "\n"
