"""Guard and value expressions.

A small OCL-flavoured language used for decision guards, correlation guards
and assignment right-hand sides::

    order.amount > 100 and not (status = "paid")
    payload.orderId = order.id
    count + 1

References starting with ``payload`` read the current token's payload;
every other reference reads an activity variable (dotted segments descend
into record fields).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Mapping


class GuardSyntaxError(ValueError):
    def __init__(self, text: str, position: int, expected: str):
        self.text = text
        self.position = position
        self.expected = expected
        super().__init__(f"guard {text!r}: expected {expected} at column {position + 1}")


class GuardEvalError(RuntimeError):
    pass


# AST --------------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: Any


@dataclass(frozen=True)
class Ref:
    path: tuple[str, ...]

    @property
    def is_payload(self) -> bool:
        return self.path[0] == "payload"


@dataclass(frozen=True)
class Not:
    operand: Expr


@dataclass(frozen=True)
class And:
    operands: tuple[Expr, ...]


@dataclass(frozen=True)
class Or:
    operands: tuple[Expr, ...]


@dataclass(frozen=True)
class Cmp:
    op: str  # one of = <> < <= > >=
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Arith:
    op: str  # one of + - *
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Neg:
    operand: Expr


@dataclass(frozen=True)
class Else:
    pass


Expr = Lit | Ref | Not | And | Or | Cmp | Arith | Neg | Else

TRUE = Lit(True)
ELSE = Else()


# Parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<int>\d+)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<op><=|>=|<>|!=|≠|≤|≥|[=<>+\-*().])
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)

_CMP_ALIASES = {"!=": "<>", "≠": "<>", "≤": "<=", "≥": ">="}
_KEYWORDS = {"and", "or", "not", "true", "false", "else"}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise GuardSyntaxError(text, pos, "a token")
        kind = m.lastgroup
        value = m.group()
        if kind != "ws":
            if kind == "name" and value.lower() in _KEYWORDS:
                kind, value = "kw", value.lower()
            elif kind == "op":
                value = _CMP_ALIASES.get(value, value)
            tokens.append((kind, value, pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def accept(self, kind: str, value: str | None = None) -> bool:
        k, v, _ = self.peek()
        if k == kind and (value is None or v == value):
            self.i += 1
            return True
        return False

    def expect(self, kind: str, value: str, what: str) -> None:
        if not self.accept(kind, value):
            raise GuardSyntaxError(self.text, self.peek()[2], what)

    def parse(self) -> Expr:
        if self.peek()[:2] == ("kw", "else"):
            self.take()
            result: Expr = ELSE
        else:
            result = self.parse_or()
        if self.peek()[0] != "end":
            raise GuardSyntaxError(self.text, self.peek()[2], "end of expression")
        return result

    def parse_or(self) -> Expr:
        items = [self.parse_and()]
        while self.accept("kw", "or"):
            items.append(self.parse_and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def parse_and(self) -> Expr:
        items = [self.parse_not()]
        while self.accept("kw", "and"):
            items.append(self.parse_not())
        return items[0] if len(items) == 1 else And(tuple(items))

    def parse_not(self) -> Expr:
        if self.accept("kw", "not"):
            return Not(self.parse_not())
        return self.parse_cmp()

    def parse_cmp(self) -> Expr:
        left = self.parse_sum()
        kind, value, _ = self.peek()
        if kind == "op" and value in ("=", "<>", "<", "<=", ">", ">="):
            self.take()
            return Cmp(value, left, self.parse_sum())
        return left

    def parse_sum(self) -> Expr:
        left = self.parse_prod()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in ("+", "-"):
                self.take()
                left = Arith(value, left, self.parse_prod())
            else:
                return left

    def parse_prod(self) -> Expr:
        left = self.parse_unary()
        while self.accept("op", "*"):
            left = Arith("*", left, self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        if self.accept("op", "-"):
            return Neg(self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> Expr:
        kind, value, pos = self.take()
        if kind == "int":
            return Lit(int(value))
        if kind == "str":
            return Lit(_unescape(value[1:-1]))
        if kind == "kw" and value in ("true", "false"):
            return Lit(value == "true")
        if kind == "name":
            path = [value]
            while self.accept("op", "."):
                k, v, p = self.take()
                if k != "name":
                    raise GuardSyntaxError(self.text, p, "a field name")
                path.append(v)
            return Ref(tuple(path))
        if kind == "op" and value == "(":
            inner = self.parse_or()
            self.expect("op", ")", "')'")
            return inner
        raise GuardSyntaxError(self.text, pos, "a literal, reference or '('")


def _unescape(body: str) -> str:
    return re.sub(r"\\(.)", r"\1", body)


@lru_cache(maxsize=4096)
def parse_guard(text: str) -> Expr:
    return _Parser(text).parse()


# Evaluation --------------------------------------------------------------


def _lookup(ref: Ref, variables: Mapping[str, Any], payload: Any) -> Any:
    if ref.is_payload:
        if payload is None:
            raise GuardEvalError(f"{'.'.join(ref.path)}: token carries no payload")
        value, rest = payload, ref.path[1:]
    else:
        if ref.path[0] not in variables:
            raise GuardEvalError(f"unknown variable {ref.path[0]!r}")
        value, rest = variables[ref.path[0]], ref.path[1:]
    for name in rest:
        if not isinstance(value, Mapping) or name not in value:
            raise GuardEvalError(f"{'.'.join(ref.path)}: no field {name!r}")
        value = value[name]
    return value


def evaluate(expr: Expr, variables: Mapping[str, Any], payload: Any = None) -> Any:
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Ref):
        return _lookup(expr, variables, payload)
    if isinstance(expr, Not):
        return not _as_bool(evaluate(expr.operand, variables, payload))
    if isinstance(expr, And):
        return all(_as_bool(evaluate(e, variables, payload)) for e in expr.operands)
    if isinstance(expr, Or):
        return any(_as_bool(evaluate(e, variables, payload)) for e in expr.operands)
    if isinstance(expr, Cmp):
        left = evaluate(expr.left, variables, payload)
        right = evaluate(expr.right, variables, payload)
        return _compare(expr.op, left, right)
    if isinstance(expr, Arith):
        left = _as_int(evaluate(expr.left, variables, payload))
        right = _as_int(evaluate(expr.right, variables, payload))
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        return left * right
    if isinstance(expr, Neg):
        return -_as_int(evaluate(expr.operand, variables, payload))
    raise GuardEvalError("'else' is only meaningful as a whole decision branch")


def holds(expr: Expr, variables: Mapping[str, Any], payload: Any = None) -> bool:
    return _as_bool(evaluate(expr, variables, payload))


def _as_bool(value: Any) -> bool:
    if not isinstance(value, bool):
        raise GuardEvalError(f"expected a boolean, got {value!r}")
    return value


def _as_int(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise GuardEvalError(f"expected an integer, got {value!r}")
    return value


def _compare(op: str, left: Any, right: Any) -> bool:
    if op == "=":
        return left == right
    if op == "<>":
        return left != right
    if type(left) is not type(right) or isinstance(left, bool) or not isinstance(left, (int, str)):
        raise GuardEvalError(f"cannot order {left!r} and {right!r}")
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    return left >= right


# Analysis and printing ----------------------------------------------------


def references(expr: Expr) -> list[Ref]:
    found: list[Ref] = []

    def walk(e: Expr) -> None:
        if isinstance(e, Ref):
            found.append(e)
        elif isinstance(e, (Not, Neg)):
            walk(e.operand)
        elif isinstance(e, (And, Or)):
            for item in e.operands:
                walk(item)
        elif isinstance(e, (Cmp, Arith)):
            walk(e.left)
            walk(e.right)

    walk(expr)
    return found


def conjoin(parts: list[Expr]) -> Expr:
    """AND of ``parts`` in order; literal ``true`` entries are dropped."""
    flat: list[Expr] = []
    for part in parts:
        if part == TRUE:
            continue
        flat.extend(part.operands if isinstance(part, And) else (part,))
    if not flat:
        return TRUE
    return flat[0] if len(flat) == 1 else And(tuple(flat))


def negate_any(siblings: list[Expr]) -> Expr:
    """Condition of an ``else`` branch: none of the sibling guards hold."""
    if not siblings:
        return TRUE
    return Not(siblings[0] if len(siblings) == 1 else Or(tuple(siblings)))


_PREC = {Or: 1, And: 2, Not: 3, Cmp: 4}


def to_text(expr: Expr) -> str:
    if isinstance(expr, Lit):
        if isinstance(expr.value, bool):
            return "true" if expr.value else "false"
        if isinstance(expr.value, str):
            return '"' + expr.value.replace("\\", "\\\\").replace('"', '\\"') + '"'
        return str(expr.value)
    if isinstance(expr, Ref):
        return ".".join(expr.path)
    if isinstance(expr, Else):
        return "else"
    if isinstance(expr, Not):
        return "not " + _wrap(expr.operand, compound=(And, Or, Cmp))
    if isinstance(expr, And):
        return " and ".join(_wrap(e, compound=(And, Or, Cmp, Not)) for e in expr.operands)
    if isinstance(expr, Or):
        return " or ".join(_wrap(e, compound=(And, Or, Cmp, Not)) for e in expr.operands)
    if isinstance(expr, Cmp):
        return f"{_wrap(expr.left, (Cmp,))} {expr.op} {_wrap(expr.right, (Cmp,))}"
    if isinstance(expr, Arith):
        left = _wrap(expr.left, (Arith,) if expr.op == "*" else ())
        return f"{left} {expr.op} {_wrap(expr.right, (Arith,))}"
    if isinstance(expr, Neg):
        return "-" + _wrap(expr.operand, (Arith, Neg))
    raise TypeError(expr)


def _wrap(expr: Expr, compound: tuple[type, ...]) -> str:
    text = to_text(expr)
    return f"({text})" if isinstance(expr, compound) else text
