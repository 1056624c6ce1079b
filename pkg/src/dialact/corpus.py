"""Annotated dialogue corpora in a tab-separated line format.

One turn per line::

    dialogue_id <TAB> turn_id <TAB> speaker <TAB> ACT <TAB> theme <TAB> utterance

``theme`` is a ``;``-separated list of ``key=value`` pairs or ``-``; the
utterance is ``-`` when absent.  Backslashes and line-structure characters
(tab, newline, carriage return) inside utterances are backslash-escaped.
Blank lines separate dialogues and ``#`` starts a comment line.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError, UnknownActError, ValidationError
from .model import ActInventory

HEADER = "# dialogue_id\tturn_id\tspeaker\tact\ttheme\tutterance"

# theme keys starting with this prefix are surface realizations for the
# referential layer of the dialogue memory, not negotiated content
REFERENCE_PREFIX = "@"


@dataclass(frozen=True)
class Turn:
    dialogue_id: str
    turn_id: str
    speaker: str
    act: str
    utterance: str | None = None
    theme: tuple[tuple[str, str], ...] = ()

    @property
    def slots(self) -> dict[str, str]:
        """Theme pairs that describe negotiated content."""
        return {k: v for k, v in self.theme if not k.startswith(REFERENCE_PREFIX)}

    @property
    def realizations(self) -> list[tuple[str, str]]:
        """(object key, surface string) pairs for the referential layer."""
        n = len(REFERENCE_PREFIX)
        return [(k[n:], v) for k, v in self.theme if k.startswith(REFERENCE_PREFIX)]


@dataclass(frozen=True)
class Dialogue:
    id: str
    turns: tuple[Turn, ...]

    def __post_init__(self):
        if not self.turns:
            raise ValidationError(f"dialogue {self.id} is empty")
        seen = set()
        for t in self.turns:
            if t.dialogue_id != self.id:
                raise ValidationError(f"turn {t.turn_id} belongs to {t.dialogue_id}, not {self.id}")
            if t.turn_id in seen:
                raise ValidationError(f"duplicate turn id {t.turn_id} in dialogue {self.id}")
            seen.add(t.turn_id)

    @property
    def acts(self) -> list[str]:
        return [t.act for t in self.turns]

    def __len__(self):
        return len(self.turns)


@dataclass(frozen=True)
class Corpus:
    dialogues: tuple[Dialogue, ...] = ()

    @property
    def act_count(self) -> int:
        return sum(len(d.turns) for d in self.dialogues)

    def dialogue(self, dialogue_id: str) -> Dialogue:
        for d in self.dialogues:
            if d.id == dialogue_id:
                return d
        raise KeyError(dialogue_id)

    def split(self, fraction: float) -> tuple["Corpus", "Corpus"]:
        """First ``fraction`` of dialogues (file order) and the remainder."""
        n = int(len(self.dialogues) * fraction + 1e-9)
        return Corpus(self.dialogues[:n]), Corpus(self.dialogues[n:])

    def __len__(self):
        return len(self.dialogues)


def _escape(text: str) -> str:
    if text == "-":
        return "\\-"
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def _unescape(text: str, lineno: int) -> str:
    out = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\":
            if i + 1 >= len(text):
                raise ParseError("dangling backslash", lineno)
            nxt = text[i + 1]
            mapped = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r", "-": "-"}.get(nxt)
            if mapped is None:
                raise ParseError(f"unknown escape \\{nxt}", lineno)
            out.append(mapped)
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _parse_theme(field: str, lineno: int) -> tuple[tuple[str, str], ...]:
    if field == "-":
        return ()
    pairs = []
    for item in field.split(";"):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ParseError(f"theme item {item!r} is not key=value", lineno)
        pairs.append((key, value.strip()))
    return tuple(pairs)


def _format_theme(theme) -> str:
    if not theme:
        return "-"
    return ";".join(f"{k}={v}" for k, v in theme)


def parse_corpus(text: str, inventory: ActInventory | None = None) -> Corpus:
    """Parse corpus text.  With an inventory, every act is validated."""
    dialogues: list[Dialogue] = []
    seen_ids: set[str] = set()
    current: list[Turn] = []

    def flush():
        if current:
            did = current[0].dialogue_id
            if did in seen_ids:
                raise ValidationError(f"dialogue {did} appears twice")
            seen_ids.add(did)
            dialogues.append(Dialogue(did, tuple(current)))
            current.clear()

    turn_lines: dict[str, int] = {}
    # only \n ends a line; other line-break characters are utterance text
    for lineno, raw in enumerate(text.split("\n"), 1):
        raw = raw.removesuffix("\r")
        if not raw.strip():
            flush()
            continue
        if raw.startswith("#"):
            continue
        fields = raw.split("\t")
        if len(fields) != 6:
            raise ParseError(f"expected 6 tab-separated fields, got {len(fields)}", lineno)
        did, tid, speaker, act, theme, utt = fields
        if not did or not tid or not act:
            raise ParseError("empty dialogue id, turn id or act", lineno)
        if inventory is not None and act not in inventory:
            raise UnknownActError(act, lineno)
        if current and current[0].dialogue_id != did:
            flush()
        if current and any(t.turn_id == tid for t in current):
            raise ParseError(f"duplicate turn id {tid} (first at line {turn_lines[tid]})", lineno)
        turn_lines[tid] = lineno
        current.append(
            Turn(
                dialogue_id=did,
                turn_id=tid,
                speaker=speaker,
                act=act,
                utterance=None if utt == "-" else _unescape(utt, lineno),
                theme=_parse_theme(theme, lineno),
            )
        )
    flush()
    return Corpus(tuple(dialogues))


def read_corpus(path, inventory: ActInventory | None = None) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh.read(), inventory)


def write_corpus(corpus: Corpus) -> str:
    """Canonical text form of ``corpus``."""
    lines = [HEADER]
    for i, d in enumerate(corpus.dialogues):
        if i:
            lines.append("")
        for t in d.turns:
            utt = "-" if t.utterance is None else _escape(t.utterance)
            lines.append("\t".join((t.dialogue_id, t.turn_id, t.speaker, t.act, _format_theme(t.theme), utt)))
    return "\n".join(lines) + "\n"


def act_sequences(corpus: Corpus, skip_speakers=()) -> list[tuple[str, list[str]]]:
    """(dialogue id, acts in turn order) per dialogue.

    Turns by any speaker in ``skip_speakers`` are dropped, e.g. to leave out
    the translation turns of a mediated dialogue.
    """
    skip = set(skip_speakers)
    return [(d.id, [t.act for t in d.turns if t.speaker not in skip]) for d in corpus.dialogues]
