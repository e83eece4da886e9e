"""Measure declarations, implicit measures, log evaluation and aggregation.

Declarations are attached to activities, actions and performers as strings
of the form ``Name[=expr], Unit``::

    TotalCost=Sum(tasks.Cost), EUR
    Cost=Mult(ProcessingTime, DeclaredCostRate), EUR
    DeclaredCostRate=2, EUR/tick

Values are exact fractions. Units are opaque tags: ``Minus`` needs equal
units and ``Mult`` of a time by a rate ``X/time`` yields ``X``.
A value that cannot be computed (the element never ran, a reference is
unknown, an aggregation has no members) is absent rather than zero.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Union

from .model.elements import ProcessModel
from .runtime.events import Event

ALL = "*"
TIME_UNIT = "tick"
PROBES = {
    "Start": TIME_UNIT,
    "Finish": TIME_UNIT,
    "ProcessingTime": TIME_UNIT,
    "ExecutionCount": "count",
}
AGGREGATIONS = ("Sum", "Avg", "Min", "Max")
SELECTORS = ("tasks", "instances")


class MeasureError(ValueError):
    pass


class MeasureSyntaxError(MeasureError):
    def __init__(self, text: str, position: int, message: str):
        self.text = text
        self.position = position
        super().__init__(f"measure {text!r}: {message} at column {position + 1}")


class UnitMismatch(MeasureError):
    pass


class MeasureCycle(MeasureError):
    pass


class EmptySelection(MeasureError):
    pass


# expression tree --------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: Fraction


@dataclass(frozen=True)
class MRef:
    name: str
    element: str | None = None  # None: the declaring element


@dataclass(frozen=True)
class Minus:
    left: "MeasureExpr"
    right: "MeasureExpr"


@dataclass(frozen=True)
class Mult:
    left: "MeasureExpr"
    right: "MeasureExpr"


@dataclass(frozen=True)
class Aggregate:
    kind: str  # Sum | Avg | Min | Max
    selector: str  # tasks | instances
    measure: str


MeasureExpr = Union[Num, MRef, Minus, Mult, Aggregate]


@dataclass(frozen=True)
class MeasureDeclaration:
    name: str
    owner: str
    expr: MeasureExpr | None
    unit: str
    kind: str = "declared"  # declared | derived
    owner_kind: str = "action"  # activity | action | performer
    implicit: bool = False

    @property
    def key(self) -> tuple[str, str]:
        return (self.owner, self.name)


@dataclass(frozen=True, order=True)
class MeasureValue:
    element: str
    measure: str
    scope: str  # instance id, or ALL
    value: Fraction
    unit: str


# parsing ----------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d+)?)|([A-Za-z_][A-Za-z0-9_]*)|(.))")


def _lex(text: str) -> list[tuple[str, str, int]]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # only trailing whitespace
            break
        if m.group(1):
            out.append(("num", m.group(1), m.start(1)))
        elif m.group(2):
            out.append(("name", m.group(2), m.start(2)))
        elif m.group(3):
            out.append(("op", m.group(3), m.start(3)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, offset: int, full: str):
        self.toks = _lex(text)
        self.i = 0
        self.offset = offset
        self.full = full

    def fail(self, message: str, tok=None):
        tok = tok or self.toks[self.i]
        raise MeasureSyntaxError(self.full, self.offset + tok[2], message)

    def peek(self):
        return self.toks[self.i]

    def take(self, kind: str, value: str | None = None):
        tok = self.toks[self.i]
        if tok[0] != kind or (value is not None and tok[1] != value):
            self.fail(f"expected {value or kind}")
        self.i += 1
        return tok

    def parse(self) -> MeasureExpr:
        expr = self.product()
        if self.peek()[0] != "end":
            self.fail("unexpected input")
        return expr

    def product(self) -> MeasureExpr:
        expr = self.atom()
        while self.peek()[:2] == ("op", "*"):
            self.i += 1
            expr = Mult(expr, self.atom())
        return expr

    def atom(self) -> MeasureExpr:
        tok = self.peek()
        if tok[0] == "num":
            self.i += 1
            return Num(Fraction(tok[1]))
        if tok[:2] == ("op", "("):
            self.i += 1
            expr = self.product()
            self.take("op", ")")
            return expr
        if tok[0] != "name":
            self.fail("expected a number, reference or function")
        self.i += 1
        if self.peek()[:2] == ("op", "("):
            return self.call(tok)
        if self.peek()[:2] == ("op", "."):
            self.i += 1
            member = self.take("name")[1]
            if tok[1] in SELECTORS:
                self.fail(f"selector {tok[1]} is only valid inside an aggregation", tok)
            return MRef(member, tok[1])
        return MRef(tok[1])

    def call(self, name_tok) -> MeasureExpr:
        name = name_tok[1]
        self.take("op", "(")
        if name in ("Minus", "Mult"):
            left = self.product()
            self.take("op", ",")
            right = self.product()
            self.take("op", ")")
            return Minus(left, right) if name == "Minus" else Mult(left, right)
        if name in AGGREGATIONS:
            sel = self.take("name")
            if sel[1] not in SELECTORS:
                self.fail(f"unknown selector {sel[1]!r} (expected {' or '.join(SELECTORS)})", sel)
            self.take("op", ".")
            member = self.take("name")[1]
            self.take("op", ")")
            return Aggregate(name, sel[1], member)
        self.fail(f"unknown function {name!r}", name_tok)
        raise AssertionError  # unreachable


def _split_top_comma(text: str) -> int:
    depth, last = 0, -1
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            last = i
    return last


def parse_measure(text: str, owner: str = "", owner_kind: str = "action") -> MeasureDeclaration:
    comma = _split_top_comma(text)
    if comma < 0:
        raise MeasureSyntaxError(text, len(text), "expected ', Unit'")
    head, unit = text[:comma], text[comma + 1 :].strip()
    if not unit:
        raise MeasureSyntaxError(text, comma + 1, "expected a unit")
    m = re.match(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*", head)
    if m is None:
        raise MeasureSyntaxError(text, 0, "expected a measure name")
    name, rest = m.group(1), head[m.end() :]
    if not rest:
        return MeasureDeclaration(name, owner, None, unit, "declared", owner_kind)
    if not rest.startswith("="):
        raise MeasureSyntaxError(text, m.end(), "expected '=' or ','")
    expr = _Parser(rest[1:], m.end() + 1, text).parse()
    return MeasureDeclaration(name, owner, expr, unit, "derived", owner_kind)


def to_text(expr: MeasureExpr) -> str:
    if isinstance(expr, Num):
        v = expr.value
        return str(v.numerator) if v.denominator == 1 else f"{float(v)!r}"
    if isinstance(expr, MRef):
        return f"{expr.element}.{expr.name}" if expr.element else expr.name
    if isinstance(expr, Minus):
        return f"Minus({to_text(expr.left)}, {to_text(expr.right)})"
    if isinstance(expr, Mult):
        return f"Mult({to_text(expr.left)}, {to_text(expr.right)})"
    return f"{expr.kind}({expr.selector}.{expr.measure})"


def format_declaration(decl: MeasureDeclaration) -> str:
    body = decl.name if decl.expr is None else f"{decl.name}={to_text(decl.expr)}"
    return f"{body}, {decl.unit}"


# declarations of a model ------------------------------------------------


def declared_measures(model: ProcessModel) -> list[MeasureDeclaration]:
    """User declarations attached to the model's elements, in id order."""
    decls: list[MeasureDeclaration] = []

    def add(owner: str, kind: str, texts: Iterable[str]) -> None:
        seen = set()
        for text in texts:
            decl = parse_measure(text, owner, kind)
            if decl.name in seen:
                raise MeasureError(f"measure {decl.name} declared twice on {owner}")
            seen.add(decl.name)
            decls.append(decl)

    for perf in sorted(model.performers, key=lambda p: p.id):
        add(perf.id, "performer", perf.measures)
    for activity in sorted(model.activities, key=lambda a: a.id):
        add(activity.id, "activity", activity.measures)
        for node in sorted(activity.nodes, key=lambda n: n.id):
            if node.is_action:
                add(node.id, "action", getattr(node, "measures", ()))
    return decls


class DerivedMeasures(list):
    """Implicit declarations; ``collisions`` lists user declarations that shadowed one."""

    def __init__(self, items=(), collisions=()):
        super().__init__(items)
        self.collisions: list[str] = list(collisions)


def _implicit_for(owner: str, kind: str) -> list[MeasureDeclaration]:
    decls = [MeasureDeclaration(p, owner, None, unit, "declared", kind, True) for p, unit in PROBES.items()]
    decls.append(
        MeasureDeclaration("TotalTime", owner, Minus(MRef("Finish"), MRef("Start")), TIME_UNIT, "derived", kind, True)
    )
    return decls


def derive_implicit(model: ProcessModel, user: list[MeasureDeclaration] | None = None) -> DerivedMeasures:
    """Probe-backed timing measures for every activity and action, plus Cost where a rate is declared."""
    user = declared_measures(model) if user is None else user
    by_owner: dict[str, dict[str, MeasureDeclaration]] = defaultdict(dict)
    for d in user:
        by_owner[d.owner][d.name] = d
    owners = []
    for activity in sorted(model.activities, key=lambda a: a.id):
        owners.append((activity.id, "activity"))
        owners.extend((n.id, "action") for n in sorted(activity.nodes, key=lambda n: n.id) if n.is_action)
    out, collisions = [], []
    for owner, kind in owners:
        mine = by_owner.get(owner, {})
        wanted = _implicit_for(owner, kind)
        if "Cost" not in mine:
            if "DeclaredCost" in mine:
                wanted.append(MeasureDeclaration("Cost", owner, MRef("DeclaredCost"), mine["DeclaredCost"].unit,
                                                 "derived", kind, True))
            elif "DeclaredCostRate" in mine:
                rate = mine["DeclaredCostRate"].unit
                wanted.append(MeasureDeclaration("Cost", owner, Mult(MRef("ProcessingTime"), MRef("DeclaredCostRate")),
                                                 _mult_unit(TIME_UNIT, rate) or rate, "derived", kind, True))
        for decl in wanted:
            existing = mine.get(decl.name)
            if existing is None:
                out.append(decl)
            elif (existing.expr, existing.unit) != (decl.expr, decl.unit):
                collisions.append(f"{owner}.{decl.name}: user declaration {format_declaration(existing)!r} kept")
    return DerivedMeasures(out, collisions)


def model_measures(model: ProcessModel) -> list[MeasureDeclaration]:
    user = declared_measures(model)
    return user + list(derive_implicit(model, user))


# units ------------------------------------------------------------------


def _mult_unit(a: str | None, b: str | None) -> str | None:
    if a is None:
        return b
    if b is None:
        return a
    for time, rate in ((a, b), (b, a)):
        if "/" in rate:
            num, den = rate.rsplit("/", 1)
            if den.strip() == time:
                return num.strip()
    return f"{a}*{b}"


def _unit_of(expr: MeasureExpr, owner: str, table: Mapping[tuple[str, str], MeasureDeclaration]) -> str | None:
    """Unit of ``expr`` (``None`` for pure numbers); raises UnitMismatch inside Minus."""
    if isinstance(expr, Num):
        return None
    if isinstance(expr, MRef):
        decl = table.get((expr.element or owner, expr.name))
        if decl is not None:
            return decl.unit
        return PROBES.get(expr.name)
    if isinstance(expr, Minus):
        left, right = _unit_of(expr.left, owner, table), _unit_of(expr.right, owner, table)
        if left is not None and right is not None and left != right:
            raise UnitMismatch(f"{owner}: Minus over {left} and {right}")
        return left if left is not None else right
    if isinstance(expr, Mult):
        return _mult_unit(_unit_of(expr.left, owner, table), _unit_of(expr.right, owner, table))
    return None  # aggregation: checked against members at evaluation time


# log indexing -----------------------------------------------------------

LogInput = Union[Iterable[Event], Mapping[str, Iterable[Event]]]


class _Runs:
    """Per-run index of instance and action ticks."""

    def __init__(self, logs: LogInput):
        if isinstance(logs, Mapping):
            runs = {str(k): list(v) for k, v in sorted(logs.items())}
            label = True
        else:
            runs = {"": list(logs)}
            label = False
        self.activity_of: dict[str, str] = {}
        self.inst_ticks: dict[str, list] = {}
        self.action_ticks: dict[tuple[str, str], list] = {}
        self.tasks: dict[str, list[str]] = defaultdict(list)  # scope -> action ids that ran
        self.scopes_of: dict[str, list[str]] = defaultdict(list)  # element -> scopes
        for run, events in runs.items():
            for ev in events:
                inst = f"{run}/{ev.instance}" if label else ev.instance
                if ev.kind == "instanceStart":
                    self.activity_of[inst] = ev.details.get("activity", "")
                    self.inst_ticks[inst] = [ev.tick, None]
                    self.scopes_of[self.activity_of[inst]].append(inst)
                elif ev.kind == "instanceEnd" and inst in self.inst_ticks:
                    self.inst_ticks[inst][1] = ev.tick
                elif ev.kind == "actionStart":
                    key = (ev.element, inst)
                    if key not in self.action_ticks:
                        self.action_ticks[key] = []
                        self.tasks[inst].append(ev.element)
                        self.scopes_of[ev.element].append(inst)
                    self.action_ticks[key].append([ev.tick, None])
                elif ev.kind == "actionEnd":
                    spans = self.action_ticks.get((ev.element, inst))
                    if spans and spans[-1][1] is None and not ev.details.get("aborted"):
                        spans[-1][1] = ev.tick

    def probe(self, name: str, element: str, scope: str) -> Fraction | None:
        if self.activity_of.get(scope) == element:
            start, end = self.inst_ticks[scope]
            count = 1
        else:
            spans = self.action_ticks.get((element, scope))
            if not spans:
                return None
            start, end = spans[0][0], spans[-1][1]
            count = len(spans)
        if name == "Start":
            return Fraction(start)
        if name == "Finish":
            return None if end is None else Fraction(end)
        if name == "ProcessingTime":
            return None if end is None else Fraction(end - start)
        if name == "ExecutionCount":
            return Fraction(count)
        return None


# evaluation -------------------------------------------------------------


def _check_cycles(table: Mapping[tuple[str, str], MeasureDeclaration]) -> None:
    def deps(decl: MeasureDeclaration) -> list[tuple[str, str]]:
        out = []

        def walk(e):
            if isinstance(e, MRef):
                out.append((e.element or decl.owner, e.name))
            elif isinstance(e, (Minus, Mult)):
                walk(e.left)
                walk(e.right)
            elif isinstance(e, Aggregate) and e.selector == "instances":
                out.append((decl.owner, e.measure))

        if decl.expr is not None:
            walk(decl.expr)
        return out

    state: dict[tuple[str, str], int] = {}

    def visit(key, stack):
        if state.get(key) == 2:
            return
        if state.get(key) == 1:
            cycle = stack[stack.index(key):] + [key]
            raise MeasureCycle("cyclic measure dependency: " + " -> ".join(f"{o}.{n}" for o, n in cycle))
        state[key] = 1
        for dep in deps(table[key]):
            if dep in table:
                visit(dep, stack + [key])
        state[key] = 2

    for key in sorted(table):
        visit(key, [])


def evaluate(logs: LogInput, decls: Iterable[MeasureDeclaration]) -> list[MeasureValue]:
    """One value per declaration and instance scope it can be computed in.

    ``logs`` is a single event log or a mapping ``run name -> log``; with a
    mapping, instance scopes are labelled ``run/instance``.
    """
    decls = list(decls)
    table: dict[tuple[str, str], MeasureDeclaration] = {}
    for d in decls:
        if d.key in table:
            raise MeasureError(f"measure {d.name} declared twice on {d.owner}")
        table[d.key] = d
    _check_cycles(table)
    for d in decls:
        if d.expr is not None:
            _unit_of(d.expr, d.owner, table)
    runs = _Runs(logs)
    memo: dict[tuple[str, str, str], Fraction | None] = {}

    def value(owner: str, name: str, scope: str) -> Fraction | None:
        key = (owner, name, scope)
        if key not in memo:
            decl = table.get((owner, name))
            if decl is None or decl.expr is None:
                memo[key] = runs.probe(name, owner, scope) if scope != ALL and name in PROBES else None
            else:
                memo[key] = compute(decl.expr, decl, scope)
        return memo[key]

    def members(agg: Aggregate, decl: MeasureDeclaration, scope: str) -> list[tuple[Fraction, str]]:
        if agg.selector == "tasks":
            pairs = [(child, scope) for child in runs.tasks.get(scope, ())]
        else:
            pairs = [(decl.owner, s) for s in runs.scopes_of.get(decl.owner, ())]
        out = []
        for element, s in pairs:
            v = value(element, agg.measure, s)
            if v is not None:
                d = table.get((element, agg.measure))
                out.append((v, d.unit if d else PROBES.get(agg.measure, "")))
        return out

    def compute(expr: MeasureExpr, decl: MeasureDeclaration, scope: str) -> Fraction | None:
        if isinstance(expr, Num):
            return expr.value
        if isinstance(expr, MRef):
            return value(expr.element or decl.owner, expr.name, scope)
        if isinstance(expr, (Minus, Mult)):
            left, right = compute(expr.left, decl, scope), compute(expr.right, decl, scope)
            if left is None or right is None:
                return None
            return left - right if isinstance(expr, Minus) else left * right
        found = members(expr, decl, scope)
        units = {u for _, u in found}
        if len(units) > 1:
            raise UnitMismatch(f"{decl.owner}.{decl.name}: mixed units {sorted(units)}")
        if not found and expr.kind != "Sum":
            return None
        return _fold(expr.kind, [v for v, _ in found])

    out: list[MeasureValue] = []
    for d in sorted(decls, key=lambda d: d.key):
        if d.owner_kind == "performer" or _selects_instances(d.expr):
            scopes = [ALL]
        else:
            scopes = runs.scopes_of.get(d.owner, [])
        for scope in scopes:
            v = value(d.owner, d.name, scope) if scope != ALL else compute(d.expr, d, ALL) if d.expr else None
            if v is not None:
                out.append(MeasureValue(d.owner, d.name, scope, v, d.unit))
    return out


def _selects_instances(expr: MeasureExpr | None) -> bool:
    if isinstance(expr, Aggregate):
        return expr.selector == "instances"
    if isinstance(expr, (Minus, Mult)):
        return _selects_instances(expr.left) or _selects_instances(expr.right)
    return False


def _fold(kind: str, nums: list[Fraction]) -> Fraction:
    if kind == "Sum":
        return sum(nums, Fraction(0))
    if not nums:
        raise EmptySelection(f"{kind} over an empty selection")
    if kind == "Avg":
        return sum(nums, Fraction(0)) / len(nums)
    return min(nums) if kind == "Min" else max(nums)


def aggregate(
    values: Iterable[MeasureValue],
    kind: str,
    selector: Callable[[MeasureValue], bool] | None = None,
) -> MeasureValue:
    """Sum/Avg/Min/Max over the selected values (all of them when ``selector`` is None)."""
    if kind not in AGGREGATIONS:
        raise MeasureError(f"unknown aggregation {kind!r}")
    chosen = [v for v in values if selector is None or selector(v)]
    units = {v.unit for v in chosen}
    if len(units) > 1:
        raise UnitMismatch(f"{kind} over mixed units {sorted(units)}")
    result = _fold(kind, [v.value for v in chosen])
    elements = {v.element for v in chosen}
    names = {v.measure for v in chosen}
    return MeasureValue(
        elements.pop() if len(elements) == 1 else ALL,
        f"{kind}({names.pop() if len(names) == 1 else ALL})",
        ALL,
        result,
        units.pop() if units else "",
    )


# output -----------------------------------------------------------------

VALUE_COLUMNS = ("element", "measure", "scope", "value", "unit")


def format_number(value: Fraction) -> str:
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


def value_rows(values: Iterable[MeasureValue]) -> list[tuple[str, ...]]:
    return [(v.element, v.measure, v.scope, format_number(v.value), v.unit) for v in sorted(values)]


def parse_value_rows(rows: Iterable[Mapping[str, str]]) -> list[MeasureValue]:
    return [
        MeasureValue(r["element"], r["measure"], r["scope"], Fraction(r["value"]), r["unit"])
        for r in rows
    ]
