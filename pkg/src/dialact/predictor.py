"""Statistical layer: trigram speech-act prediction with deleted interpolation.

Every dialogue is padded with two leading boundary symbols, so the first
act of a dialogue is counted with the context ``(<s>, <s>)``.  Only real
acts are counted as unigram events and only real acts are ever predicted.

The interpolated estimate is::

    P(s | a, b) = q1 f(s) + q2 f(s | b) + q3 f(s | a, b)

where a context that never occurred in training hands its weight down to
the next lower order.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import Corpus, act_sequences
from .errors import (
    DegenerateHeldOutError,
    ParseError,
    UnknownActError,
    UntrainedModelError,
    ValidationError,
)
from .model import ActInventory, keywords_for

BOUNDARY = "<s>"

EM_TOLERANCE = 1e-6
EM_MAX_ITERATIONS = 200


@dataclass(frozen=True)
class InterpolationWeights:
    q1: float
    q2: float
    q3: float

    def __post_init__(self):
        if min(self.q1, self.q2, self.q3) < 0:
            raise ValidationError(f"negative interpolation weight in {self.as_tuple()}")
        if abs(self.q1 + self.q2 + self.q3 - 1.0) > 1e-12:
            raise ValidationError(f"interpolation weights must sum to 1, got {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.q1, self.q2, self.q3)


UNIFORM_WEIGHTS = InterpolationWeights(1 / 3, 1 / 3, 1 - 2 / 3)


@dataclass(frozen=True)
class NGramTables:
    """Unigram, bigram and trigram counts over a fixed act inventory.

    Counts are usually integers; a synthetic source file may hold real
    valued weights instead, which every function here accepts unchanged.
    """

    acts: tuple[str, ...]
    unigrams: Mapping[str, float] = field(default_factory=dict)
    bigrams: Mapping[tuple[str, str], float] = field(default_factory=dict)
    trigrams: Mapping[tuple[str, str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        uni = Counter({a: 0 for a in self.acts})
        uni.update(self.unigrams)
        object.__setattr__(self, "unigrams", uni)
        object.__setattr__(self, "bigrams", Counter(self.bigrams))
        object.__setattr__(self, "trigrams", Counter(self.trigrams))
        bictx: Counter = Counter()
        for (a, _), n in self.bigrams.items():
            bictx[a] += n
        trictx: Counter = Counter()
        for (a, b, _), n in self.trigrams.items():
            trictx[(a, b)] += n
        object.__setattr__(self, "bigram_context", bictx)
        object.__setattr__(self, "trigram_context", trictx)
        object.__setattr__(self, "total_unigrams", sum(uni.values()))
        object.__setattr__(self, "_index", {a: i for i, a in enumerate(self.acts)})

    def __eq__(self, other):
        if not isinstance(other, NGramTables):
            return NotImplemented
        strip = lambda c: {k: v for k, v in c.items() if v}  # noqa: E731
        return (
            self.acts == other.acts
            and strip(self.unigrams) == strip(other.unigrams)
            and strip(self.bigrams) == strip(other.bigrams)
            and strip(self.trigrams) == strip(other.trigrams)
        )

    __hash__ = None

    def f(self, act: str) -> float:
        """Unigram relative frequency."""
        if not self.total_unigrams:
            raise UntrainedModelError("model has no unigram counts")
        return self.unigrams[act] / self.total_unigrams


def _check_acts(acts: Sequence[str], labels: Iterable[str]):
    known = set(acts)
    for label in labels:
        if label not in known:
            raise UnknownActError(label)


def context(history: Sequence[str]) -> tuple[str, str]:
    """The two most recent acts, boundary-padded."""
    padded = [BOUNDARY, BOUNDARY, *history[-2:]]
    return padded[-2], padded[-1]


def empty_tables(acts: Sequence[str]) -> NGramTables:
    return NGramTables(tuple(acts))


def count_sequences(acts: Sequence[str], sequences: Iterable[Sequence[str]]) -> NGramTables:
    uni: Counter = Counter()
    bi: Counter = Counter()
    tri: Counter = Counter()
    for seq in sequences:
        _check_acts(acts, seq)
        a, b = BOUNDARY, BOUNDARY
        for c in seq:
            uni[c] += 1
            bi[(b, c)] += 1
            tri[(a, b, c)] += 1
            a, b = b, c
    return NGramTables(tuple(acts), uni, bi, tri)


def train(corpus: Corpus, inventory: ActInventory, skip_speakers=()) -> NGramTables:
    """Count padded n-grams over every dialogue of ``corpus``."""
    return count_sequences(inventory.acts, (seq for _, seq in act_sequences(corpus, skip_speakers)))


def online_update(tables: NGramTables, observed: str, history: Sequence[str]) -> NGramTables:
    """New tables with the n-grams ending in ``observed`` incremented.

    ``tables`` is left untouched.
    """
    _check_acts(tables.acts, [observed, *history[-2:]])
    a, b = context(history)
    uni = Counter(tables.unigrams)
    bi = Counter(tables.bigrams)
    tri = Counter(tables.trigrams)
    uni[observed] += 1
    bi[(b, observed)] += 1
    tri[(a, b, observed)] += 1
    return NGramTables(tables.acts, uni, bi, tri)


def _components(tables: NGramTables, a: str, b: str, act: str) -> tuple[float, float, float]:
    # unseen contexts reuse the next lower order estimate, which is the same
    # as moving that order's weight down
    p1 = tables.unigrams[act] / tables.total_unigrams
    bctx = tables.bigram_context.get(b, 0)
    p2 = tables.bigrams.get((b, act), 0) / bctx if bctx else p1
    tctx = tables.trigram_context.get((a, b), 0)
    p3 = tables.trigrams.get((a, b, act), 0) / tctx if tctx else p2
    return p1, p2, p3


def probability(
    tables: NGramTables,
    weights: InterpolationWeights,
    history: Sequence[str],
    candidate: str,
) -> float:
    if not tables.total_unigrams:
        raise UntrainedModelError("model has no unigram counts")
    _check_acts(tables.acts, [candidate, *history])
    a, b = context(history)
    p1, p2, p3 = _components(tables, a, b, candidate)
    return weights.q1 * p1 + weights.q2 * p2 + weights.q3 * p3


def distribution(tables: NGramTables, weights: InterpolationWeights, history: Sequence[str]) -> list[float]:
    """Probability of every act, in inventory order."""
    if not tables.total_unigrams:
        raise UntrainedModelError("model has no unigram counts")
    _check_acts(tables.acts, history[-2:])
    a, b = context(history)
    q1, q2, q3 = weights.as_tuple()
    out = []
    for act in tables.acts:
        p1, p2, p3 = _components(tables, a, b, act)
        out.append(q1 * p1 + q2 * p2 + q3 * p3)
    return out


@dataclass(frozen=True)
class ScoredPrediction:
    act: str
    probability: float

    def __str__(self):
        return f"{self.act} ({100 * self.probability:.2f}%)"


def rank(acts: Sequence[str], probs: Sequence[float], k: int) -> list[ScoredPrediction]:
    """Top ``k`` by probability, ties in inventory order."""
    order = sorted(range(len(acts)), key=lambda i: (-probs[i], i))
    return [ScoredPrediction(acts[i], probs[i]) for i in order[:k]]


def predict_top_k(
    tables: NGramTables,
    weights: InterpolationWeights,
    history: Sequence[str],
    k: int,
) -> list[ScoredPrediction]:
    if k < 1:
        raise ValueError("k must be positive")
    return rank(tables.acts, distribution(tables, weights, history), k)


def predict_keywords(
    tables: NGramTables,
    weights: InterpolationWeights,
    inventory: ActInventory,
    history: Sequence[str],
    k: int,
) -> list[str]:
    """Keywords of the top-k predicted acts, deduplicated in rank order."""
    words: list[str] = []
    seen = set()
    for pred in predict_top_k(tables, weights, history, k):
        for w in keywords_for(inventory, pred.act):
            if w not in seen:
                seen.add(w)
                words.append(w)
    return words


def _heldout_events(tables: NGramTables, sequences) -> Counter:
    events: Counter = Counter()
    for seq in sequences:
        _check_acts(tables.acts, seq)
        a, b = BOUNDARY, BOUNDARY
        for c in seq:
            events[_components(tables, a, b, c)] += 1
            a, b = b, c
    return events


def _em_step(q, events, total):
    acc = [0.0, 0.0, 0.0]
    for p, n in events.items():
        mix = q[0] * p[0] + q[1] * p[1] + q[2] * p[2]
        for j in range(3):
            acc[j] += n * q[j] * p[j] / mix
    return [x / total for x in acc]


def _slope(q, d, t, events) -> float:
    """Derivative of the held-out log-likelihood along ``q + t d``."""
    g = 0.0
    for p, n in events.items():
        mix = sum((q[j] + t * d[j]) * p[j] for j in range(3))
        dp = d[0] * p[0] + d[1] * p[1] + d[2] * p[2]
        if mix <= 0:
            return -math.inf if dp < 0 or mix < 0 else math.inf
        g += n * dp / mix
    return g


def _extrapolate(q, new, events):
    """Step from ``q`` along the EM direction as far as the likelihood rises.

    The log-likelihood is concave in the weights, so its slope along the
    line is decreasing and the best step length is found by bisection.
    The plain EM step (length 1) is always within the search range.
    """
    d = [b - a for a, b in zip(q, new)]
    # stop halfway to the simplex boundary: a weight that reaches zero can
    # never be revived by later EM updates
    limits = [-0.5 * q[j] / d[j] for j in range(3) if d[j] < 0]
    hi = min(limits) if limits else 1.0
    if hi <= 1.0 or _slope(q, d, 1.0, events) <= 0:
        return new
    if _slope(q, d, hi, events) >= 0:
        t = hi
    else:
        lo = 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _slope(q, d, mid, events) > 0:
                lo = mid
            else:
                hi = mid
        t = lo
    return [max(0.0, q[j] + t * d[j]) for j in range(3)]


def estimate_weights(
    tables: NGramTables, held_out: Corpus, skip_speakers=(), accelerate: bool = True
) -> InterpolationWeights:
    """Deleted-interpolation weights fitted on held-out data by EM.

    Starts from uniform weights and stops once no weight moves by more than
    ``EM_TOLERANCE`` in an iteration, or after ``EM_MAX_ITERATIONS``.  With
    ``accelerate`` each EM update is stretched by a line search along its
    own direction; on flat likelihood surfaces plain EM crawls and runs out
    of iterations far from the maximum.
    """
    if not tables.total_unigrams:
        raise UntrainedModelError("model has no unigram counts")
    events = _heldout_events(tables, (s for _, s in act_sequences(held_out, skip_speakers)))
    # events unseen in training have probability 0 under every weighting
    events = {p: n for p, n in events.items() if any(p)}
    if not events:
        raise DegenerateHeldOutError("held-out data has no usable trigram events")
    total = sum(events.values())
    q = [1 / 3, 1 / 3, 1 / 3]
    for _ in range(EM_MAX_ITERATIONS):
        new = _em_step(q, events, total)
        if accelerate:
            new = _extrapolate(q, new, events)
            s = math.fsum(new)
            new = [x / s for x in new]
        delta = max(abs(x - y) for x, y in zip(new, q))
        q = new
        if delta < EM_TOLERANCE:
            break
    s = math.fsum(q)
    q1, q2 = q[0] / s, q[1] / s
    return InterpolationWeights(q1, q2, max(0.0, 1.0 - q1 - q2))


def heldout_log_likelihood(tables: NGramTables, weights: InterpolationWeights, held_out: Corpus) -> float:
    events = _heldout_events(tables, (s for _, s in act_sequences(held_out)))
    total = 0.0
    for p, n in events.items():
        mix = weights.q1 * p[0] + weights.q2 * p[1] + weights.q3 * p[2]
        total += n * (math.log(mix) if mix > 0 else -math.inf)
    return total


@dataclass(frozen=True)
class Predictor:
    """A trained snapshot: n-gram tables plus interpolation weights."""

    tables: NGramTables
    weights: InterpolationWeights = UNIFORM_WEIGHTS

    @property
    def acts(self) -> tuple[str, ...]:
        return self.tables.acts

    def probability(self, history: Sequence[str], act: str) -> float:
        return probability(self.tables, self.weights, history, act)

    def distribution(self, history: Sequence[str]) -> dict[str, float]:
        return dict(zip(self.tables.acts, distribution(self.tables, self.weights, history)))

    def top_k(self, history: Sequence[str], k: int) -> list[ScoredPrediction]:
        return predict_top_k(self.tables, self.weights, history, k)

    def updated(self, observed: str, history: Sequence[str]) -> "Predictor":
        return Predictor(online_update(self.tables, observed, history), self.weights)


# persistence


def _fmt(x) -> str:
    if isinstance(x, int) or float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def _num(text: str, lineno: int):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", lineno) from None
    if value < 0 or not math.isfinite(value):
        raise ParseError(f"count must be finite and non-negative: {text!r}", lineno)
    return value


def dump_predictor(predictor: Predictor) -> str:
    tables = predictor.tables
    order = {BOUNDARY: -1, **{a: i for i, a in enumerate(tables.acts)}}
    out = ["[weights]", " ".join(repr(float(q)) for q in predictor.weights.as_tuple()), "", "[unigrams]"]
    out += [f"{a}\t{_fmt(tables.unigrams[a])}" for a in tables.acts]
    out += ["", "[bigrams]"]
    for key in sorted((k for k, v in tables.bigrams.items() if v), key=lambda k: [order[x] for x in k]):
        out.append(f"{' '.join(key)}\t{_fmt(tables.bigrams[key])}")
    out += ["", "[trigrams]"]
    for key in sorted((k for k, v in tables.trigrams.items() if v), key=lambda k: [order[x] for x in k]):
        out.append(f"{' '.join(key)}\t{_fmt(tables.trigrams[key])}")
    return "\n".join(out) + "\n"


def parse_predictor(text: str, inventory: ActInventory | None = None) -> Predictor:
    """Inverse of :func:`dump_predictor`.

    The ``[unigrams]`` section fixes the inventory order.  With an
    ``inventory`` the listed acts must match it exactly.
    """
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    expected = ["weights", "unigrams", "bigrams", "trigrams"]
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1]
            if name not in expected:
                raise ParseError(f"unknown section [{name}]", lineno)
            if name in sections or (sections and expected.index(name) < expected.index(current)):
                raise ParseError(f"section [{name}] repeated or out of order", lineno)
            sections[name] = []
            current = name
            continue
        if current is None:
            raise ParseError("content before first section", lineno)
        sections[current].append((lineno, raw.rstrip("\n")))
    for name in expected:
        if name not in sections:
            raise ParseError(f"missing [{name}] section")

    wlines = sections["weights"]
    if len(wlines) != 1 or len(wlines[0][1].split()) != 3:
        raise ParseError("[weights] must hold one line with three numbers", wlines[0][0] if wlines else None)
    try:
        q = [float(x) for x in wlines[0][1].split()]
    except ValueError:
        raise ParseError("bad weight value", wlines[0][0]) from None
    weights = InterpolationWeights(*q)

    def rows(name, width):
        for lineno, line in sections[name]:
            key, sep, value = line.rpartition("\t")
            parts = key.split()
            if not sep or len(parts) != width:
                raise ParseError(f"expected {width} act(s), a tab and a count", lineno)
            yield lineno, tuple(parts), _num(value.strip(), lineno)

    acts = []
    uni = {}
    for lineno, (a,), n in rows("unigrams", 1):
        if a in uni:
            raise ParseError(f"duplicate unigram {a}", lineno)
        acts.append(a)
        uni[a] = n
    if inventory is not None and tuple(acts) != inventory.acts:
        raise ValidationError("model acts do not match the loaded inventory")
    known = set(acts) | {BOUNDARY}

    def table(name, width):
        out = {}
        for lineno, key, n in rows(name, width):
            for a in key:
                if a not in known:
                    raise UnknownActError(a, lineno)
            if key[-1] == BOUNDARY:
                raise ParseError("the boundary symbol is never predicted", lineno)
            out[key] = n
        return out

    tables = NGramTables(tuple(acts), uni, table("bigrams", 2), table("trigrams", 3))
    return Predictor(tables, weights)


def read_predictor(path, inventory: ActInventory | None = None) -> Predictor:
    with open(path, encoding="utf-8") as fh:
        return parse_predictor(fh.read(), inventory)


def write_predictor(predictor: Predictor, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_predictor(predictor))
