"""Braced key/value tree text, the storage syntax shared by model documents.

::

    model {
      id: "shop"
      activities: [
        activity { id: "sell" main: true }
      ]
    }

A *block* is ``tag { key: value ... }``; values are strings, integers,
booleans, ``null``, lists ``[ ... ]`` (commas optional) or nested blocks.
``#`` starts a comment. :func:`dump` writes the canonical form: sorted keys,
two-space indentation, one entry per line, LF endings.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any


class TreeSyntaxError(ValueError):
    def __init__(self, line: int, column: int, expected: str, found: str):
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        super().__init__(f"line {line}, column {column}: expected {expected}, found {found}")


@dataclass
class Block:
    tag: str
    entries: dict[str, Any] = field(default_factory=dict)
    line: int = 0

    def get(self, key: str, default: Any = None) -> Any:
        return self.entries.get(key, default)


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<int>-?\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}\[\]:,])
    """,
    re.VERBOSE,
)


def _tokens(text: str):
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise TreeSyntaxError(line, pos - line_start + 1, "a token", repr(text[pos]))
        kind, value = m.lastgroup, m.group()
        if kind != "ws":
            yield kind, value, line, pos - line_start + 1
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + value.rfind("\n") + 1
        pos = m.end()
    yield "end", "", line, pos - line_start + 1


class _Reader:
    def __init__(self, text: str):
        self.tokens = list(_tokens(text))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected: str):
        kind, value, line, col = self.peek()
        raise TreeSyntaxError(line, col, expected, "end of input" if kind == "end" else repr(value))

    def expect(self, value: str):
        if self.peek()[1] != value or self.peek()[0] not in ("punct",):
            self.fail(repr(value))
        self.take()

    def document(self) -> Block:
        if self.peek()[0] != "name":
            self.fail("a block tag")
        block = self.block()
        if self.peek()[0] != "end":
            self.fail("end of input")
        return block

    def block(self) -> Block:
        _, tag, line, _ = self.take()
        self.expect("{")
        block = Block(tag, line=line)
        while self.peek()[1] != "}" or self.peek()[0] != "punct":
            kind, key, kline, kcol = self.peek()
            if kind != "name":
                self.fail("a key or '}'")
            self.take()
            if key in block.entries:
                raise TreeSyntaxError(kline, kcol, "a distinct key", f"duplicate key {key!r}")
            self.expect(":")
            block.entries[key] = self.value()
            if self.peek()[:2] == ("punct", ","):
                self.take()
        self.take()
        return block

    def value(self) -> Any:
        kind, value, _, _ = self.peek()
        if kind == "str":
            self.take()
            return json.loads(value)
        if kind == "int":
            self.take()
            return int(value)
        if kind == "name":
            if value in ("true", "false"):
                self.take()
                return value == "true"
            if value == "null":
                self.take()
                return None
            self.take()
            if self.peek()[1] == "{":
                self.i -= 1
                return self.block()
            self.i -= 1
            self.fail("a value")
        if (kind, value) == ("punct", "["):
            self.take()
            items = []
            while self.peek()[:2] != ("punct", "]"):
                if self.peek()[0] == "end":
                    self.fail("']'")
                items.append(self.value())
                if self.peek()[:2] == ("punct", ","):
                    self.take()
            self.take()
            return items
        self.fail("a value")


def load(text: str) -> Block:
    return _Reader(text).document()


def dump(block: Block) -> str:
    lines: list[str] = []
    _emit_block(block, 0, lines, prefix="")
    return "\n".join(lines) + "\n"


def _emit_block(block: Block, depth: int, lines: list[str], prefix: str) -> None:
    pad = "  " * depth
    if not block.entries:
        lines.append(f"{pad}{prefix}{block.tag} {{}}")
        return
    lines.append(f"{pad}{prefix}{block.tag} {{")
    for key in sorted(block.entries):
        _emit_value(block.entries[key], depth + 1, lines, prefix=f"{key}: ")
    lines.append(f"{pad}}}")


def _emit_value(value: Any, depth: int, lines: list[str], prefix: str) -> None:
    pad = "  " * depth
    if isinstance(value, Block):
        _emit_block(value, depth, lines, prefix)
    elif isinstance(value, list):
        if not value:
            lines.append(f"{pad}{prefix}[]")
            return
        lines.append(f"{pad}{prefix}[")
        for item in value:
            _emit_value(item, depth + 1, lines, prefix="")
        lines.append(f"{pad}]")
    else:
        lines.append(f"{pad}{prefix}{_scalar(value)}")


def _scalar(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    raise TypeError(f"unsupported scalar {value!r}")
