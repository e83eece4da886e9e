"""Execution events and the line-oriented trace format.

Each line is ``tick seq kind subject [details]`` where ``details`` is a
compact JSON object with sorted keys. Subjects name an instance (``p1``),
a node inside an instance (``p1:ship``) or a token (``p1:t7``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

EVENT_KINDS = (
    "actionStart",
    "actionEnd",
    "tokenMove",
    "signalSend",
    "signalReceive",
    "instanceStart",
    "instanceEnd",
    "assignment",
)


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    tick: int
    seq: int
    kind: str
    subject: str
    details: dict[str, Any] = field(default_factory=dict, compare=True, hash=False)

    @property
    def instance(self) -> str:
        return self.subject.split(":", 1)[0]

    @property
    def element(self) -> str | None:
        """Node id for node subjects, ``None`` otherwise."""
        _, _, rest = self.subject.partition(":")
        return rest or None

    def to_line(self) -> str:
        line = f"{self.tick} {self.seq} {self.kind} {self.subject}"
        if self.details:
            line += " " + json.dumps(self.details, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return line


def format_trace(events: Iterable[Event]) -> str:
    return "".join(e.to_line() + "\n" for e in events)


def parse_trace(text: str) -> list[Event]:
    events = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(" ", 4)
        if len(parts) < 4:
            raise TraceFormatError(f"line {lineno}: expected 'tick seq kind subject [details]'")
        tick, seq, kind, subject = parts[:4]
        if kind not in EVENT_KINDS:
            raise TraceFormatError(f"line {lineno}: unknown event kind {kind!r}")
        try:
            details = json.loads(parts[4]) if len(parts) == 5 else {}
            events.append(Event(int(tick), int(seq), kind, subject, details))
        except ValueError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from exc
    return events


def load_trace(path) -> list[Event]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())
