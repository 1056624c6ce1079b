"""One dialogue run through all three layers, turn by turn."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import tracker
from .corpus import Dialogue, Turn
from .model import ActInventory, DialogueMachine
from .planner import OperatorLibrary, PlanRecognizer, RepairDecision
from .predictor import Predictor, ScoredPrediction

FAILED_MARK = "****Failed****"


@dataclass
class TurnRecord:
    turn: Turn
    prediction: list[ScoredPrediction]  # made before the act was seen
    events: list[tracker.TrackerEvent]
    repair: RepairDecision | None

    @property
    def predicted(self) -> bool:
        return any(p.act == self.turn.act for p in self.prediction)


@dataclass
class Session:
    inventory: ActInventory
    machine: DialogueMachine
    library: OperatorLibrary
    predictor: Predictor | None = None
    k: int = 2
    records: list[TurnRecord] = field(default_factory=list)

    def __post_init__(self):
        self.state = tracker.start(self.machine, self.inventory)
        self.planner = PlanRecognizer(self.library, predictor=self.predictor)

    @property
    def memory(self):
        return self.planner.memory

    @property
    def history(self) -> tuple[str, ...]:
        return self.state.history

    def predict(self, k: int | None = None) -> list[ScoredPrediction]:
        if self.predictor is None:
            return []
        return self.predictor.top_k(self.history, k or self.k)

    def process(self, turn: Turn) -> TurnRecord:
        prediction = self.predict()
        before = len(self.state.event_log)
        self.state, event = tracker.step(self.state, turn.act, self.predictor)
        repair = self.planner.advance(turn, event)
        rec = TurnRecord(turn, prediction, list(self.state.event_log[before:]), repair)
        self.records.append(rec)
        return rec

    def run(self, turns) -> "Session":
        for t in turns:
            self.process(t)
        return self

    @property
    def inconsistencies(self) -> int:
        return tracker.inconsistencies(self.state)

    @property
    def repairs(self) -> int:
        return len(self.planner.repairs)

    def transcript(self) -> str:
        """Per-turn trace followed by the final memory dump."""
        out = []
        for i, rec in enumerate(self.records):
            out.append(f"{rec.turn.turn_id}: {rec.turn.act}")
            for ev in rec.events:
                out.append(ev.format())
            if rec.repair is not None:
                out.append(f"  repair: {rec.repair.format()}")
            if self.predictor is not None:
                nxt = self.records[i + 1].turn.act if i + 1 < len(self.records) else None
                line = "Prediction: (" + " ".join(p.act for p in self._after(i)) + ")"
                if nxt is not None and nxt not in (p.act for p in self._after(i)):
                    line += " " + FAILED_MARK
                out.append(line)
        out.append("")
        out.append(self.memory.dump().rstrip("\n"))
        out.append("")
        out.append(self.summary())
        return "\n".join(out) + "\n"

    def _after(self, i: int) -> list[ScoredPrediction]:
        if i + 1 < len(self.records):
            return self.records[i + 1].prediction
        return self.predictor.top_k(self.history, self.k)

    def summary(self) -> str:
        complete = tracker.is_complete(self.state)
        return (
            f"turns={len(self.records)} inconsistencies={self.inconsistencies} "
            f"repairs={self.repairs} complete={'yes' if complete else 'no'}"
        )


def replay(
    dialogue: Dialogue,
    inventory: ActInventory,
    machine: DialogueMachine,
    library: OperatorLibrary,
    predictor: Predictor | None = None,
    k: int = 2,
) -> Session:
    return Session(inventory, machine, library, predictor, k).run(dialogue.turns)
