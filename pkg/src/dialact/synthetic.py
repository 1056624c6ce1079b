"""Synthetic dialogue sources with a known generating distribution.

A source is stored in the predictor persistence format and read as the
exact distribution it describes: the next act given the two previous acts
is whatever the interpolated model assigns.  Because the distribution is
known, the accuracy of predicting with the source itself is an upper bound
for any model trained on its samples.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from typing import Sequence

from .corpus import Corpus, Dialogue, Turn
from .errors import NonterminatingSourceError, UnknownActError, ValidationError
from .predictor import (
    BOUNDARY,
    InterpolationWeights,
    NGramTables,
    Predictor,
    count_sequences,
    parse_predictor,
)

MAX_DIALOGUE_LENGTH = 10_000
DEFAULT_TERMINAL = "VERABSCHIEDUNG"
SPEAKERS = ("A", "B")


def read_source(path) -> Predictor:
    with open(path, encoding="utf-8") as fh:
        source = parse_predictor(fh.read())
    check_source(source)
    return source


def check_source(source: Predictor, tolerance: float = 1e-12) -> None:
    """Every reachable conditional distribution must sum to one."""
    contexts = {(BOUNDARY, BOUNDARY)} | {k[:2] for k in source.tables.trigrams}
    for ctx in sorted(contexts):
        history = [x for x in ctx if x != BOUNDARY]
        total = math.fsum(source.distribution(history).values())
        if abs(total - 1.0) > tolerance:
            raise ValidationError(f"distribution after ({' '.join(ctx)}) sums to {total!r}")


def generate_dialogue(source: Predictor, rng: random.Random, terminal: str = DEFAULT_TERMINAL) -> list[str]:
    acts = list(source.acts)
    history: list[str] = []
    while len(history) < MAX_DIALOGUE_LENGTH:
        dist = source.distribution(history)
        act = rng.choices(acts, weights=[dist[a] for a in acts])[0]
        history.append(act)
        if act == terminal:
            return history
    raise NonterminatingSourceError(f"no {terminal} within {MAX_DIALOGUE_LENGTH} acts")


def generate(source: Predictor, count: int, seed: int, terminal: str = DEFAULT_TERMINAL, prefix: str = "S") -> Corpus:
    """``count`` dialogues sampled with ``random.Random(seed)``."""
    if terminal not in source.acts:
        raise UnknownActError(terminal)
    rng = random.Random(seed)
    width = max(4, len(str(count)))
    dialogues = []
    for n in range(1, count + 1):
        did = f"{prefix}{n:0{width}d}"
        turns = tuple(
            Turn(did, f"{did}/{i}", SPEAKERS[(i - 1) % 2], act)
            for i, act in enumerate(generate_dialogue(source, rng, terminal), 1)
        )
        dialogues.append(Dialogue(did, turns))
    return Corpus(tuple(dialogues))


# ready-made sources


def unigram_source(probs: dict[str, float], acts: Sequence[str] | None = None) -> Predictor:
    """Acts drawn independently from ``probs``."""
    acts = tuple(acts or probs)
    total = math.fsum(probs.values())
    tables = NGramTables(acts, Counter({a: probs.get(a, 0) / total for a in acts}))
    return Predictor(tables, InterpolationWeights(1.0, 0.0, 0.0))


def uniform_source(acts: Sequence[str]) -> Predictor:
    return unigram_source({a: 1 for a in acts}, acts)


def deterministic_source(acts: Sequence[str], sequences: Sequence[Sequence[str]]) -> Predictor:
    """Trigram source in which every seen context has a single successor.

    The sequences must not give one context two different successors.
    """
    tables = count_sequences(acts, sequences)
    seen: dict[tuple, str] = {}
    for a, b, c in tables.trigrams:
        if seen.setdefault((a, b), c) != c:
            raise ValidationError(f"context ({a} {b}) has two successors")
    return Predictor(tables, InterpolationWeights(0.0, 0.0, 1.0))


def empirical_source(tables: NGramTables, weights: InterpolationWeights) -> Predictor:
    return Predictor(tables, weights)


def bayes_ceiling(source: Predictor, sample: Corpus, ks=(1, 2, 3), skip_initial: bool = False):
    """Top-k accuracy of the generating source itself on ``sample``."""
    from .evaluation import evaluate

    return evaluate(source, sample, ks, skip_initial, name="Bayes")
