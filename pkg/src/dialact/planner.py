"""Plan-recognition layer.

Plan operators decompose a goal into an ordered list of subgoal elements,
each of which occurs once, optionally, or iterated; primitive operators
recognize a single speech act.  The recognizer parses the act stream
top-down and left to right, building a plan tree as it goes.  Acts that do
not fit (or that the finite-state layer flagged) go through repair, which
either inserts the missing acts as virtual leaves, skips ahead, or hangs
the act under a digression node.  Nothing ever makes recognition fail.

Parser positions are kept as a tuple of frames from the root down:
``("g", goal, pos)`` for an operator instance whose element ``pos`` is in
progress, ``("i", goal, 0)`` for an iterated element.  Positions carry no
counters, so there are finitely many of them and every look-ahead question
can be memoized per library.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple, Sequence

from .errors import (
    CyclicGoalError,
    DuplicateGoalError,
    ParseError,
    UndefinedGoalError,
    UnprocessedTurnError,
    ValidationError,
)
from .memory import ACCEPT_ACT, CONFIRM_ACT, REJECT_ACT, DialogueMemory
from .model import ActInventory

SATISFIED = "satisfied"
OPEN = "open"
REPAIRED = "repaired"
GHOST = "ghost"

UNEXPECTED_ACT = "unexpected-act"
MISSING_ACT = "missing-act"
OUT_OF_PHASE = "out-of-phase"
ATTACH_DIGRESSION = "attach-digression"
INSERT_VIRTUAL = "insert-virtual"
ADVANCE_PHASE = "advance-phase"

MAX_VIRTUAL = 2
BRIDGE_LIMIT = 8

_SPAWN = -1
_INF = float("inf")


@dataclass(frozen=True)
class Element:
    goal: str
    iterate: bool = False
    optional: bool = False

    def __str__(self):
        mods = ("optional " if self.optional else "") + ("iterate " if self.iterate else "")
        return f"{mods}[{self.goal}]"


@dataclass(frozen=True)
class PlanOperator:
    name: str
    goal: str
    constraints: tuple = ()
    actions: tuple = ()
    act: str | None = None
    elements: tuple[Element, ...] = ()

    @property
    def is_primitive(self) -> bool:
        return self.act is not None

    @property
    def subgoal_kind(self) -> str:
        if self.is_primitive:
            return "primitive"
        if len(self.elements) == 1 and self.elements[0].iterate and not self.elements[0].optional:
            return "iterate"
        if any(e.iterate for e in self.elements):
            return "sequence-with-iterate"
        return "sequence"


# parsing

_TOKEN = re.compile(r"\[[^\]\s]*\]|\(|\)|[^\s()\[\]]+")


def _tokenize(text: str):
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped.startswith(";") or stripped.startswith("#"):
            continue
        for m in _TOKEN.finditer(line):
            out.append((m.group(), lineno))
    return out


def _sexpr(tokens, i):
    """Read one s-expression starting at ``tokens[i]``."""
    tok, lineno = tokens[i]
    if tok == ")":
        raise ParseError("unexpected ')'", lineno)
    if tok != "(":
        return tok, i + 1
    items = []
    i += 1
    while True:
        if i >= len(tokens):
            raise ParseError("unbalanced '('", lineno)
        if tokens[i][0] == ")":
            return tuple(items), i + 1
        item, i = _sexpr(tokens, i)
        items.append(item)


def _symbol(tok, lineno) -> str:
    if not (isinstance(tok, str) and tok.startswith("[") and tok.endswith("]") and len(tok) > 2):
        raise ParseError(f"expected [SYMBOL], got {tok!r}", lineno)
    return tok[1:-1]


def _elements(body, lineno) -> tuple[Element, ...]:
    items = list(body)
    if not items or items[0] not in ("sequence", "iterate"):
        raise ParseError("subgoals must start with 'sequence' or 'iterate'", lineno)
    if items[0] == "sequence":
        items = items[1:]
    out = []
    optional = iterate = False
    for item in items:
        if item == "optional" and not optional and not iterate:
            optional = True
        elif item == "iterate" and not iterate:
            iterate = True
        else:
            out.append(Element(_symbol(item, lineno), iterate=iterate, optional=optional))
            optional = iterate = False
    if optional or iterate:
        raise ParseError("dangling modifier in subgoals", lineno)
    if not out:
        raise ParseError("empty subgoals", lineno)
    return tuple(out)


def _descriptor_list(value, lineno, single_ok) -> tuple:
    if value == "nil" or value == ():
        return ()
    if isinstance(value, str):
        raise ParseError(f"expected nil or a list, got {value!r}", lineno)
    if single_ok and value and isinstance(value[0], str):
        return (value,)
    return tuple(v if isinstance(v, tuple) else (v,) for v in value)


def parse_operators(text: str) -> list[PlanOperator]:
    tokens = _tokenize(text)
    ops = []
    i = 0
    while i < len(tokens):
        tok, lineno = tokens[i]
        if tok != "begin-plan-operator":
            raise ParseError(f"expected begin-plan-operator, got {tok!r}", lineno)
        if i + 1 >= len(tokens):
            raise ParseError("operator name missing", lineno)
        name = tokens[i + 1][0]
        i += 2
        slots: dict = {}
        start = lineno
        while True:
            if i >= len(tokens):
                raise ParseError(f"operator {name} lacks end-plan-operator", start)
            key, lineno = tokens[i]
            if key == "end-plan-operator":
                i += 1
                break
            if key not in ("goal", "constraints", "actions", "subgoals"):
                raise ParseError(f"unknown slot {key!r}", lineno)
            if key in slots:
                raise ParseError(f"slot {key} given twice", lineno)
            if i + 1 >= len(tokens):
                raise ParseError(f"slot {key} has no value", lineno)
            if key == "subgoals" and tokens[i + 1][0] == "primitive":
                act = None
                nxt = i + 2
                if nxt < len(tokens) and tokens[nxt][0] != "end-plan-operator":
                    act = tokens[nxt][0]
                    nxt += 1
                slots[key] = ("primitive", act, lineno)
                i = nxt
                continue
            value, i = _sexpr(tokens, i + 1)
            slots[key] = (value, lineno)
        if "goal" not in slots or "subgoals" not in slots:
            raise ParseError(f"operator {name} needs goal and subgoals", start)
        goal = _symbol(*slots["goal"])
        constraints = _descriptor_list(*slots.get("constraints", ("nil", start)), single_ok=True)
        actions = _descriptor_list(*slots.get("actions", ("nil", start)), single_ok=False)
        sub = slots["subgoals"]
        if sub[0] == "primitive":
            op = PlanOperator(name, goal, constraints, actions, act=sub[1] or goal)
        else:
            value, sub_line = sub
            if not isinstance(value, tuple):
                raise ParseError("subgoals must be 'primitive ACT' or a list", sub_line)
            op = PlanOperator(name, goal, constraints, actions, elements=_elements(value, sub_line))
        ops.append(op)
    return ops


class OperatorLibrary:
    """A validated set of plan operators plus memoized parsing tables."""

    def __init__(self, operators: Sequence[PlanOperator], root: str | None = None, inventory: ActInventory | None = None):
        if not operators:
            raise ValidationError("operator library is empty")
        self.operators: dict[str, PlanOperator] = {}
        for op in operators:
            if op.goal in self.operators:
                raise DuplicateGoalError(f"goal [{op.goal}] defined by {self.operators[op.goal].name} and {op.name}")
            self.operators[op.goal] = op
        self.root = root or operators[0].goal
        if self.root not in self.operators:
            raise UndefinedGoalError(f"root goal [{self.root}] is not defined")
        for op in operators:
            for el in op.elements:
                if el.goal not in self.operators:
                    raise UndefinedGoalError(f"operator {op.name} references undefined goal [{el.goal}]")
        self.by_act: dict[str, PlanOperator] = {}
        for op in operators:
            if op.is_primitive:
                if inventory is not None and op.act not in inventory:
                    raise ValidationError(f"operator {op.name} recognizes unknown act {op.act}")
                self.by_act.setdefault(op.act, op)
        self._check_cycles()
        self._analyse()
        self.acts = tuple(inventory.acts) if inventory is not None else tuple(self.by_act)
        self._dry: dict = {}
        self._bridge: dict = {}
        self._closed: dict = {}
        self._descent: dict = {}

    def _check_cycles(self):
        # cycles are allowed only through iterated elements
        color: dict[str, int] = {}

        def visit(goal, trail):
            color[goal] = 1
            for el in self.operators[goal].elements:
                if el.iterate:
                    continue
                c = color.get(el.goal, 0)
                if c == 1:
                    raise CyclicGoalError("cyclic goals: " + " -> ".join([*trail, goal, el.goal]))
                if c == 0:
                    visit(el.goal, [*trail, goal])
            color[goal] = 2

        for goal in self.operators:
            if color.get(goal, 0) == 0:
                visit(goal, [])

    def _analyse(self):
        ops = self.operators
        nullable = {g: False for g in ops}
        first: dict[str, set] = {g: set() for g in ops}
        changed = True
        while changed:
            changed = False
            for g, op in ops.items():
                if op.is_primitive:
                    if op.act not in first[g]:
                        first[g].add(op.act)
                        changed = True
                    continue
                acc = set()
                all_null = True
                for el in op.elements:
                    acc |= first[el.goal]
                    if not (el.optional or nullable[el.goal]):
                        all_null = False
                        break
                if not acc <= first[g]:
                    first[g] |= acc
                    changed = True
                if all_null and not nullable[g]:
                    nullable[g] = True
                    changed = True
        self.nullable = nullable
        self.first = {g: frozenset(s) for g, s in first.items()}
        self.first_from: dict[str, list[tuple[frozenset, bool]]] = {}
        for g, op in ops.items():
            rows = []
            for i in range(len(op.elements) + 1):
                acc = set()
                all_null = True
                for el in op.elements[i:]:
                    acc |= first[el.goal]
                    if not (el.optional or nullable[el.goal]):
                        all_null = False
                        break
                rows.append((frozenset(acc), all_null))
            self.first_from[g] = rows

        # shortest act sequence that satisfies each goal
        best: dict[str, tuple] = {g: None for g in ops}
        changed = True
        while changed:
            changed = False
            for g, op in ops.items():
                if op.is_primitive:
                    cand = (op.act,)
                else:
                    cand = ()
                    for el in op.elements:
                        if el.optional:
                            continue
                        sub = best[el.goal]
                        if sub is None:
                            cand = None
                            break
                        cand += sub
                if cand is not None and (best[g] is None or len(cand) < len(best[g])):
                    best[g] = cand
                    changed = True
        unproductive = sorted(g for g, v in best.items() if v is None)
        if unproductive:
            raise CyclicGoalError(f"goals can never be satisfied: {', '.join(unproductive)}")
        self.min_completion = best

        contains: dict[str, set] = {g: set(first[g]) for g in ops}
        changed = True
        while changed:
            changed = False
            for g, op in ops.items():
                for el in op.elements:
                    if not contains[el.goal] <= contains[g]:
                        contains[g] |= contains[el.goal]
                        changed = True
        self.contains = {g: frozenset(s) for g, s in contains.items()}

    # positions

    def initial_state(self) -> tuple:
        return (("g", self.root, -1),)

    def _completeness(self, state) -> list[bool]:
        comp = [False] * len(state)
        for j in range(len(state) - 1, -1, -1):
            kind, goal, pos = state[j]
            if kind == "i":
                comp[j] = comp[j + 1]
            elif self.operators[goal].is_primitive:
                comp[j] = True
            elif pos < 0:
                comp[j] = self.first_from[goal][0][1]
            else:
                comp[j] = comp[j + 1] and self.first_from[goal][pos + 1][1]
        return comp

    def is_complete(self, state) -> bool:
        return self._completeness(state)[0]

    def _entry(self, el: Element, act: str) -> tuple:
        head = (("i", el.goal, 0),) if el.iterate else ()
        return head + self._descend(el.goal, act)

    def _descend(self, goal: str, act: str) -> tuple:
        key = (goal, act)
        if key in self._descent:
            return self._descent[key]
        op = self.operators[goal]
        if op.is_primitive:
            out = (("g", goal, -1),)
        else:
            for e, el in enumerate(op.elements):
                if act in self.first[el.goal]:
                    out = (("g", goal, e),) + self._entry(el, act)
                    break
            else:  # pragma: no cover - guarded by FIRST sets
                raise AssertionError(f"{act} cannot start {goal}")
        self._descent[key] = out
        return out

    def dry_advance(self, state: tuple, act: str):
        """Where ``act`` attaches from ``state``.

        Returns ``(level, element, new_state)`` where ``element`` is the
        element index started at ``level`` (or ``_SPAWN`` for a fresh
        iteration), or None if the act does not fit.
        """
        key = (state, act)
        if key in self._dry:
            return self._dry[key]
        result = self._dry_advance(state, act)
        self._dry[key] = result
        return result

    def _dry_advance(self, state, act):
        comp = self._completeness(state)
        for j in range(len(state) - 1, -1, -1):
            kind, goal, pos = state[j]
            if kind == "i":
                if not comp[j + 1]:
                    return None
                if act in self.first[goal]:
                    _, pgoal, ppos = state[j - 1]
                    if act not in self.first_from[pgoal][ppos + 1][0]:
                        return j, _SPAWN, state[: j + 1] + self._descend(goal, act)
                continue
            op = self.operators[goal]
            if op.is_primitive:
                continue
            if pos >= 0 and not comp[j + 1]:
                return None
            for e in range(pos + 1, len(op.elements)):
                el = op.elements[e]
                if act in self.first[el.goal]:
                    return j, e, state[:j] + (("g", goal, e),) + self._entry(el, act)
                if not (el.optional or self.nullable[el.goal]):
                    break
            if not self.first_from[goal][pos + 1][1]:
                return None
        return None

    def expected(self, state) -> list[str]:
        return [a for a in self.acts if self.dry_advance(state, a) is not None]

    def bridge(self, state, act: str, limit: int = BRIDGE_LIMIT):
        """Shortest list of acts that, inserted first, lets ``act`` attach."""
        key = (state, act)
        if key in self._bridge:
            return self._bridge[key]
        result = None
        if self.dry_advance(state, act) is not None:
            result = ()
        else:
            frontier = [(state, ())]
            seen = {state}
            for _ in range(limit):
                nxt = []
                for s, path in frontier:
                    for v in self.acts:
                        r = self.dry_advance(s, v)
                        if r is None or r[2] in seen:
                            continue
                        seen.add(r[2])
                        p = path + (v,)
                        if self.dry_advance(r[2], act) is not None:
                            result = p
                            break
                        nxt.append((r[2], p))
                    if result is not None:
                        break
                if result is not None or not nxt:
                    break
                frontier = nxt
        self._bridge[key] = result
        return result

    def closed_acts(self, state) -> frozenset:
        """Acts belonging to elements already passed on the current path."""
        if state in self._closed:
            return self._closed[state]
        acc = set()
        for kind, goal, pos in state:
            if kind != "g":
                continue
            for el in self.operators[goal].elements[: max(pos, 0)]:
                acc |= self.contains[el.goal]
        out = frozenset(acc)
        self._closed[state] = out
        return out


def load_operators(definition_text: str, inventory: ActInventory | None = None, root: str | None = None) -> OperatorLibrary:
    return OperatorLibrary(parse_operators(definition_text), root=root, inventory=inventory)


def default_operators_text() -> str:
    return resources.files("dialact.data").joinpath("default.ops").read_text("utf-8")


def load_default_operators(inventory: ActInventory | None = None) -> OperatorLibrary:
    return load_operators(default_operators_text(), inventory)


def read_operators(path, inventory: ActInventory | None = None) -> OperatorLibrary:
    with open(path, encoding="utf-8") as fh:
        return load_operators(fh.read(), inventory)


# plan trees


class PlanNode:
    """One node of a plan tree.

    ``kind`` is ``goal`` (operator instance; primitive ones are leaves),
    ``iterate`` (holds the expansions of an iterated element) or
    ``digression`` (acts that could not be placed in the plan).
    """

    __slots__ = ("kind", "label", "act", "turn_id", "status", "children", "parent", "elem", "tag", "failures", "closed")

    def __init__(self, kind, label, parent=None, elem=None, act=None, turn_id=None, status=None, tag=None):
        self.kind = kind
        self.label = label
        self.act = act
        self.turn_id = turn_id
        self.status = status
        self.children: list[PlanNode] = []
        self.parent = parent
        self.elem = elem
        self.tag = tag
        self.failures: list[str] = []
        self.closed = False
        if parent is not None:
            parent.children.append(self)

    @property
    def is_leaf(self) -> bool:
        return self.act is not None

    def __repr__(self):
        return f"PlanNode({self.kind}, {self.label!r}, act={self.act!r}, turn={self.turn_id!r})"


class PlanTree:
    def __init__(self, library: OperatorLibrary):
        self.library = library
        self.root = PlanNode("goal", library.root)

    def walk(self, node=None):
        node = node or self.root
        yield node
        for c in node.children:
            yield from self.walk(c)

    def leaves(self) -> list[PlanNode]:
        return [n for n in self.walk() if n.is_leaf]

    def turn_leaves(self) -> list[PlanNode]:
        return [n for n in self.leaves() if n.turn_id is not None]

    def non_repaired_acts(self) -> list[str]:
        return [n.act for n in self.leaves() if self.status(n) != REPAIRED]

    def node_complete(self, node: PlanNode) -> bool:
        if node.status == REPAIRED or node.is_leaf:
            return True
        grammar = [c for c in node.children if c.kind != "digression"]
        if node.kind == "iterate":
            return bool(grammar) and self.node_complete(grammar[-1])
        if node.kind == "digression":
            return True
        if not grammar:
            return self.library.first_from[node.label][0][1]
        last = grammar[-1]
        return self.library.first_from[node.label][last.elem + 1][1] and self.node_complete(last)

    def status(self, node: PlanNode) -> str:
        if node.status is not None:
            return node.status
        return SATISFIED if self.node_complete(node) else OPEN

    def repaired_nodes(self) -> list[PlanNode]:
        return [n for n in self.walk() if self.status(n) == REPAIRED]

    def digressions(self) -> list[PlanNode]:
        return [n for n in self.walk() if n.kind == "digression" and n.status == REPAIRED]

    def _line(self, node: PlanNode) -> str:
        if node.kind == "iterate":
            head = f"iterate {node.label}"
        elif node.kind == "digression":
            head = f"digression {node.tag}"
        elif node.is_leaf:
            head = f"{node.label}:{node.act}"
        else:
            head = node.label
        line = f"{head} [{self.status(node)}]"
        if node.is_leaf:
            line += f" {node.turn_id}" if node.turn_id is not None else " (virtual)"
        for f in node.failures:
            line += f" !{f}"
        return line

    def dump(self) -> str:
        out = []

        def rec(node, depth):
            out.append("  " * depth + self._line(node))
            for c in node.children:
                rec(c, depth + 1)

        rec(self.root, 0)
        return "\n".join(out) + "\n"

    def check(self, turn_ids: Sequence[str] = None) -> list[str]:
        """Structural problems; empty for a well-formed tree."""
        problems = []
        for node in self.walk():
            st = self.status(node)
            if st not in (SATISFIED, OPEN, REPAIRED):
                problems.append(f"{node!r}: bad status {st}")
            for c in node.children:
                if c.parent is not node:
                    problems.append(f"{c!r}: parent link broken")
            if node.is_leaf:
                if node.children:
                    problems.append(f"{node!r}: leaf with children")
                if node.turn_id is None and st != REPAIRED:
                    problems.append(f"{node!r}: virtual leaf not marked repaired")
                op = self.library.operators.get(node.label)
                if node.parent is not None and node.parent.kind != "digression":
                    if op is None or op.act != node.act:
                        problems.append(f"{node!r}: leaf does not match its operator")
            elif node.kind == "iterate" and not node.children and st != REPAIRED:
                problems.append(f"{node!r}: iterate without expansions")
            elif node.kind == "digression" and not node.children:
                problems.append(f"{node!r}: empty digression")
        if turn_ids is not None:
            seen = [n.turn_id for n in self.turn_leaves()]
            if seen != list(turn_ids):
                problems.append(f"leaf turns {seen} differ from processed turns {list(turn_ids)}")
        return problems


@dataclass(frozen=True)
class RepairDecision:
    error_kind: str
    resolution: str
    act: str
    turn_id: str | None = None
    inserted: tuple[str, ...] = ()
    justification: tuple = ()

    def format(self) -> str:
        extra = f" inserted={','.join(self.inserted)}" if self.inserted else ""
        alts = "; ".join(f"{k}/{r} p={p:.4f}" for k, r, p in self.justification)
        return f"{self.error_kind} {self.resolution}{extra} (candidates: {alts})"


class Annotation(NamedTuple):
    act: str
    phase: str
    round: int
    repaired: bool


# built-in constraint predicates and actions


def _eval_constraint(desc, context) -> bool | None:
    name, *args = desc
    history, turn, prev_speaker = context
    if name == "occurred":
        return args[0] in history
    if name == "not-occurred":
        return args[0] not in history
    if name == "speaker":
        return turn is not None and turn.speaker == args[0]
    if name == "speaker-changed":
        return turn is not None and prev_speaker is not None and turn.speaker != prev_speaker
    if name == "has-theme":
        return turn is not None and bool(turn.slots)
    return None


def _fmt_desc(desc) -> str:
    return "(" + " ".join(str(x) for x in desc) + ")"


class PlanRecognizer:
    """Incremental plan recognition for one dialogue.

    Feed turns through :meth:`advance`; the plan tree lives in ``tree`` and
    the memory it builds in ``memory``.
    """

    def __init__(self, library: OperatorLibrary, memory: DialogueMemory | None = None, predictor=None, max_virtual: int = MAX_VIRTUAL):
        self.library = library
        self.tree = PlanTree(library)
        self.memory = memory if memory is not None else DialogueMemory()
        self.memory.intentional = self.tree
        self.predictor = predictor
        self.max_virtual = max_virtual
        self.state = library.initial_state()
        self.path: list[PlanNode] = [self.tree.root]
        self.history: list[str] = []
        self.turn_ids: list[str] = []
        self.repairs: list[RepairDecision] = []
        self.clarifications: list[PlanNode] = []
        self._leaf_by_turn: dict[str, PlanNode] = {}
        self._last_speaker = None
        self._ghosts: list[PlanNode] = []

    # tree surgery

    def _close(self, nodes, turn):
        for node in reversed(nodes):
            if node.closed or node.kind != "goal" or node.is_leaf:
                continue
            node.closed = True
            op = self.library.operators[node.label]
            if op.actions:
                self._run_actions(op, node, turn)

    def _apply(self, move, act, turn, status):
        level, elem, new_state = move
        self._close(self.path[level + 1 :], turn)
        del self.path[level + 1 :]
        parent = self.path[level]
        for depth in range(level + 1, len(new_state)):
            kind, goal, _ = new_state[depth]
            parent_frame = new_state[depth - 1]
            node_elem = parent_frame[2] if parent_frame[0] == "g" else None
            op = self.library.operators[goal]
            if kind == "i":
                node = PlanNode("iterate", goal, parent, elem=node_elem)
            elif op.is_primitive:
                node = PlanNode("goal", goal, parent, elem=node_elem, act=act, turn_id=turn.turn_id if turn else None, status=status)
            else:
                node = PlanNode("goal", goal, parent, elem=node_elem)
                self._check_constraints(op, node, turn)
            self.path.append(node)
            parent = node
        self.state = new_state
        return self.path[-1]

    def _attach_point(self) -> PlanNode:
        for node in reversed(self.path):
            if not node.is_leaf:
                return node
        return self.tree.root

    def _digression(self, tag, act, turn, status) -> PlanNode:
        holder = self.clarifications[-1] if self.clarifications else self._attach_point()
        node = PlanNode("digression", tag, holder, tag=tag, status=status)
        leaf = self._leaf(node, act, turn, REPAIRED if status == REPAIRED else SATISFIED)
        return node, leaf

    def _leaf(self, parent, act, turn, status) -> PlanNode:
        op = self.library.by_act.get(act)
        label = op.goal if op is not None else act
        return PlanNode("goal", label, parent, act=act, turn_id=turn.turn_id, status=status)

    # constraints and actions

    def _context(self, turn):
        return (self.history, turn, self._last_speaker)

    def _check_constraints(self, op, node, turn):
        for desc in op.constraints:
            ok = _eval_constraint(desc, self._context(turn))
            if ok is None:
                node.failures.append(f"unknown{_fmt_desc(desc)}")
            elif not ok:
                node.failures.append(_fmt_desc(desc))

    def _run_actions(self, op, node, turn):
        for desc in op.actions:
            name = desc[0]
            if turn is None:
                continue
            if name == "retrieve-theme":
                self.memory.retrieve_theme(turn, self._round_of(node))
            elif name == "resolve-theme" and node.act in (ACCEPT_ACT, REJECT_ACT, CONFIRM_ACT):
                self.memory.resolve_theme(node.act, turn.turn_id)

    def _finish_leaf(self, leaf, turn):
        op = self.library.by_act.get(leaf.act)
        if op is not None:
            self._check_constraints(op, leaf, turn)
            self._run_actions(op, leaf, turn)
        self._leaf_by_turn[turn.turn_id] = leaf

    # phase / round bookkeeping

    def _position(self, node: PlanNode) -> tuple[str, int]:
        chain = []
        while node is not None:
            chain.append(node)
            node = node.parent
        chain.reverse()  # root first
        if len(chain) < 2:
            return self.tree.root.label, 0
        top = chain[1]
        if top.kind == "iterate":
            if len(chain) < 3:
                return top.label, len(top.children)
            grammar = [c for c in top.children if c.kind != "digression"]
            return top.label, grammar.index(chain[2]) + 1 if chain[2] in grammar else 0
        if top.kind == "digression":
            return self.tree.root.label, 0
        return top.label, 0

    def _round_of(self, node) -> int:
        return self._position(node)[1]

    def annotate(self, turn_id: str) -> Annotation:
        try:
            leaf = self._leaf_by_turn[turn_id]
        except KeyError:
            raise UnprocessedTurnError(f"turn {turn_id} has not been processed") from None
        phase, rnd = self._position(leaf)
        return Annotation(leaf.act, phase, rnd, self.tree.status(leaf) == REPAIRED)

    # main entry points

    def advance(self, turn, tracker_event=None) -> RepairDecision | None:
        """Process one turn; returns the repair decision if one was needed."""
        act = turn.act
        self.memory.note_turn(turn.turn_id)
        for key, surface in turn.realizations:
            self.memory.record_realization(turn, key, surface)
        kind = tracker_event.kind if tracker_event is not None else None
        inconsistent = tracker_event is not None and tracker_event.is_inconsistent
        decision = None

        if kind == "clarification-opened":
            node, leaf = self._digression("clarification", act, turn, SATISFIED)
            self.clarifications.append(node)
            self._finish_leaf(leaf, turn)
        elif self.clarifications:
            if inconsistent:
                decision = RepairDecision(UNEXPECTED_ACT, ATTACH_DIGRESSION, act, turn.turn_id)
            leaf = self._leaf(self.clarifications[-1], act, turn, REPAIRED if inconsistent else SATISFIED)
            self._finish_leaf(leaf, turn)
            if kind == "clarification-closed":
                self.clarifications.pop()
        elif kind == "anywhere-accepted":
            _, leaf = self._digression("anywhere", act, turn, SATISFIED)
            self._finish_leaf(leaf, turn)
        else:
            move = None if inconsistent else self.library.dry_advance(self.state, act)
            if move is not None:
                leaf = self._apply(move, act, turn, SATISFIED)
                self._finish_leaf(leaf, turn)
            else:
                decision = self.repair(turn)

        if decision is not None:
            self.repairs.append(decision)
        self.history.append(act)
        self.turn_ids.append(turn.turn_id)
        self._last_speaker = turn.speaker
        return decision

    def _score(self, extra, act) -> float:
        if self.predictor is None:
            return 0.0
        return self.predictor.probability([*self.history, *extra], act)

    def repair(self, turn) -> RepairDecision:
        """Place an act that does not fit the current plan position."""
        act = turn.act
        lib = self.library
        candidates = []  # (error_kind, resolution, inserted, score); rule order
        bridge = lib.bridge(self.state, act)
        if bridge is not None:
            resolution = INSERT_VIRTUAL if len(bridge) <= self.max_virtual else ADVANCE_PHASE
            candidates.append((MISSING_ACT, resolution, bridge, self._score(bridge, act)))
        if act in lib.closed_acts(self.state):
            candidates.append((OUT_OF_PHASE, ATTACH_DIGRESSION, (), self._score((), act)))
        if not candidates:
            candidates.append((UNEXPECTED_ACT, ATTACH_DIGRESSION, (), self._score((), act)))
        best = candidates[0]
        for cand in candidates[1:]:
            if cand[3] > best[3]:
                best = cand
        kind, resolution, inserted, _ = best

        if kind == MISSING_ACT:
            status = REPAIRED if resolution == INSERT_VIRTUAL else GHOST
            for v in inserted:
                self._apply(lib.dry_advance(self.state, v), v, None, status)
            leaf = self._apply(lib.dry_advance(self.state, act), act, turn, SATISFIED)
            if resolution == ADVANCE_PHASE:
                self._drop_ghosts()
        else:
            _, leaf = self._digression(kind, act, turn, REPAIRED)
        self._finish_leaf(leaf, turn)
        return RepairDecision(
            kind,
            resolution,
            act,
            turn.turn_id,
            inserted=tuple(inserted) if resolution == INSERT_VIRTUAL else (),
            justification=tuple((k, r, s) for k, r, _, s in candidates),
        )

    def _drop_ghosts(self):
        for node in list(self.tree.walk()):
            if node.status != GHOST:
                continue
            parent = node.parent
            parent.children.remove(node)
            while parent is not None and parent is not self.tree.root:
                parent.status = REPAIRED
                if parent.children:
                    break
                parent = parent.parent

    def finish(self) -> bool:
        """Close whatever is still open; True if the plan is complete."""
        self._close(self.path[1:], None)
        return self.library.is_complete(self.state) and not self.clarifications


def recognize(library: OperatorLibrary, turns, events=None, predictor=None) -> PlanRecognizer:
    rec = PlanRecognizer(library, predictor=predictor)
    for i, turn in enumerate(turns):
        rec.advance(turn, events[i] if events is not None else None)
    return rec
