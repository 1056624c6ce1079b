"""Top-k prediction accuracy over annotated corpora."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .corpus import Corpus, act_sequences
from .predictor import Predictor

DEFAULT_KS = (1, 2, 3)


@dataclass
class EvaluationReport:
    """Hit counts per k for one test set."""

    name: str
    ks: tuple[int, ...]
    hits: dict[int, int]
    positions: int
    dialogues: int
    per_dialogue: dict[str, dict[int, int]] = field(default_factory=dict)

    def accuracy(self, k: int) -> float:
        if not self.positions:
            return 0.0
        return 100.0 * self.hits[k] / self.positions

    @property
    def acts(self) -> int:
        return self.positions


def evaluate(
    predictor: Predictor,
    corpus: Corpus,
    ks: Sequence[int] = DEFAULT_KS,
    skip_initial: bool = False,
    name: str = "TS1",
    skip_speakers=(),
) -> EvaluationReport:
    """Count, for every act position, whether the true act is in the top k.

    The first act of each dialogue is predicted from the boundary context
    alone; ``skip_initial`` leaves those positions out.
    """
    ks = tuple(sorted(set(ks)))
    if not ks or ks[0] < 1:
        raise ValueError("k values must be positive")
    kmax = ks[-1]
    hits = {k: 0 for k in ks}
    per_dialogue = {}
    positions = 0
    for did, seq in act_sequences(corpus, skip_speakers):
        local = {k: 0 for k in ks}
        for i, act in enumerate(seq):
            if skip_initial and i == 0:
                continue
            ranked = [p.act for p in predictor.top_k(seq[:i], kmax)]
            positions += 1
            if act in ranked:
                r = ranked.index(act) + 1
                for k in ks:
                    if r <= k:
                        local[k] += 1
        for k in ks:
            hits[k] += local[k]
        per_dialogue[did] = local
    return EvaluationReport(name, ks, hits, positions, len(corpus.dialogues), per_dialogue)


def format_percent(value: float) -> str:
    return f"{value:.2f} %"


def format_table(reports: Sequence[EvaluationReport]) -> str:
    """Rows are numbers of predictions, columns are test sets."""
    if not reports:
        return ""
    ks = reports[0].ks
    lines = ["\t".join(["Pred.", *(r.name for r in reports)])]
    for k in ks:
        lines.append("\t".join([str(k), *(format_percent(r.accuracy(k)) for r in reports)]))
    return "\n".join(lines) + "\n"


def format_totals(reports: Sequence[EvaluationReport]) -> str:
    return "".join(f"{r.name}: {r.dialogues} dialogues, {r.positions} acts\n" for r in reports)
