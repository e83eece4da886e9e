"""Seeded equivalence campaign between the token machine and the reference interpreter."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from ..model import parse_model, serialize_model, structurally_equal, validate
from ..runtime.advm import run_model
from ..runtime.events import Event
from .generator import GeneratorConfig, generate_case
from .reference import project_action_events, run_reference

CHECKS = ("generator-sound", "round-trip", "both-completed", "projection-equal", "group-timing")


def group_ticks(events: Iterable[Event]) -> dict[tuple[str, str], list[int]]:
    """``(instance, destination pin) -> ticks`` at which a join group was deposited or accepted."""
    seen: dict[tuple[str, str], dict[int, int]] = defaultdict(dict)
    for ev in events:
        if ev.kind == "tokenMove" and "group" in ev.details:
            seen[(ev.instance, ev.details["to"])].setdefault(ev.details["group"], ev.tick)
    return {key: sorted(groups.values()) for key, groups in sorted(seen.items())}


@dataclass
class CaseOutcome:
    seed: int
    checks: dict[str, bool] = field(default_factory=dict)
    note: str = ""

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def check_seed(seed: int, size: int = 8, max_ticks: int = 10_000) -> CaseOutcome:
    case = generate_case(GeneratorConfig(seed=seed, max_actions=size))
    out = CaseOutcome(seed)
    report = validate(case.model)
    out.checks["generator-sound"] = report.ok
    text = serialize_model(case.model)
    out.checks["round-trip"] = structurally_equal(parse_model(text), case.model)
    if not report.ok:
        out.note = "; ".join(str(f) for f in report.errors[:2])
        return out
    advm = run_model(case.model, case.inputs, max_ticks=max_ticks)
    oracle = run_reference(case.model, case.inputs, max_ticks=max_ticks)
    out.checks["both-completed"] = advm.status == oracle.status == "completed"
    out.checks["projection-equal"] = project_action_events(advm.events) == project_action_events(oracle.events)
    out.checks["group-timing"] = group_ticks(advm.events) == group_ticks(oracle.events)
    if not out.ok:
        out.note = f"advm {advm.status}, oracle {oracle.status}"
    return out


def run_campaign(seeds: Iterable[int], size: int = 8) -> list[CaseOutcome]:
    return [check_seed(s, size) for s in sorted(seeds)]


def summary_rows(outcomes: list[CaseOutcome]) -> list[tuple[str, int, int]]:
    rows = []
    for check in CHECKS:
        results = [o.checks[check] for o in outcomes if check in o.checks]
        rows.append((check, sum(results), len(results) - sum(results)))
    return rows
