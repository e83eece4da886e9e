"""Offer/accept interpreter over the uncompiled model.

Tokens stay on output pins until a consumer accepts them. Each round the
offers reaching a consumer's input pins are recomputed from token positions:
a decision forwards an offer along its unique true branch, a merge forwards
everything, a fork replicates, and a join offers one complete set (the oldest
offer on each incoming edge). A consumer fires when every input pin has an
offer and takes them all at once. Consuming an offer that passed a fork
leaves copies buffered on the fork's other outgoing edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable

from ..model import guards
from ..model.elements import DecisionNode, ForkNode, JoinNode, MergeNode, Node, ProcessModel
from ..runtime.events import Event
from ..runtime.scheduler import (
    DEFAULT_DEPTH_LIMIT,
    DEFAULT_MAX_TICKS,
    ExternalSignal,
    GuardConflict,
    Instance,
    RunError,
    RunResult,
    Scheduler,
    Token,
    start_instances,
)


@dataclass(frozen=True)
class Offer:
    tokens: tuple[Token, ...]
    forks: tuple[tuple[str, str], ...]  # (fork id, outgoing edge taken)
    payload: Any

    @property
    def age(self) -> int:
        return min(t.id for t in self.tokens)


class OfferState:
    """Offers visible in one instance, memoised for one consumer scan."""

    def __init__(self, oracle: "ReferenceInterpreter", inst: Instance):
        self.oracle = oracle
        self.inst = inst
        self._memo: dict[str, list[Offer]] = {}

    def into(self, end: str) -> list[Offer]:
        if end not in self._memo:
            offers: list[Offer] = []
            for edge in self.oracle.in_edges.get(end, ()):
                offers.extend(self.along(edge))
            self._memo[end] = offers
        return self._memo[end]

    def along(self, edge) -> list[Offer]:
        inst, oracle = self.inst, self.oracle
        src = edge.source
        node = oracle.control.get(src)
        if node is None:
            offers = [Offer((t,), (), t.payload) for t in inst.places.get(src, ())]
        elif isinstance(node, DecisionNode):
            offers = [o for o in self.into(src) if oracle.branch(inst, node, o) == edge.id]
        elif isinstance(node, MergeNode):
            offers = list(self.into(src))
        elif isinstance(node, ForkNode):
            offers = [Offer(o.tokens, o.forks + ((src, edge.id),), o.payload) for o in self.into(src)]
            offers += [Offer((t,), (), t.payload) for t in inst.places.get(edge.id, ())]
        elif isinstance(node, JoinNode):
            offers = self.join(node)
        else:  # pragma: no cover - validator rejects other control kinds
            raise RunError(f"unknown control node {src}", inst)
        if edge.guard is not None and node is None:
            offers = [o for o in offers if oracle.guard_holds(inst, edge.guard, o.payload)]
        return offers

    def join(self, node: JoinNode) -> list[Offer]:
        members = []
        for edge in self.oracle.in_edges.get(node.id, ()):
            offers = self.along(edge)
            if not offers:
                return []
            members.append(min(offers, key=lambda o: o.age))
        tokens = tuple(t for o in members for t in o.tokens)
        carried = {t.location: t.payload for t in tokens if t.payload is not None}
        payload = next(iter(carried.values())) if len(carried) == 1 else None
        return [Offer(tokens, tuple(f for o in members for f in o.forks), payload)]


class ReferenceInterpreter(Scheduler):
    engine = "oracle"

    def __init__(self, model: ProcessModel, **kwargs):
        super().__init__(model, **kwargs)
        self._offer_seq = 0
        self.control = {n.id: n for _, n in model.iter_nodes() if n.is_control}
        self.in_edges: dict[str, list] = {}
        self.out_edges: dict[str, list] = {}
        for activity in model.activities:
            for edge in sorted(activity.edges, key=lambda e: e.id):
                self.in_edges.setdefault(edge.target, []).append(edge)
                self.out_edges.setdefault(edge.source, []).append(edge)

    def guard_holds(self, inst: Instance, text: str, payload: Any) -> bool:
        try:
            return guards.holds(guards.parse_guard(text), inst.variables, payload)
        except guards.GuardEvalError as exc:
            raise RunError(f"{inst.id}: guard {text!r}: {exc}", inst) from exc

    def branch(self, inst: Instance, node: DecisionNode, offer: Offer) -> str | None:
        """Id of the decision's unique true branch for ``offer`` (``None`` if all false)."""
        chosen, fallback = [], None
        for edge in self.out_edges.get(node.id, ()):
            parsed = guards.parse_guard(edge.guard) if edge.guard else guards.TRUE
            if isinstance(parsed, guards.Else):
                fallback = edge.id
            elif self.guard_holds(inst, edge.guard or "true", offer.payload):
                chosen.append(edge.id)
        if len(chosen) > 1:
            raise GuardConflict(
                f"{inst.id}: guard conflict at {node.id}: branches {', '.join(chosen)} are all true", inst
            )
        return chosen[0] if chosen else fallback

    def select_inputs(self, inst: Instance, node: Node):
        state = OfferState(self, inst)
        picks = []
        for pin in node.input_pins:
            offers = state.into(pin.id)
            if not offers:
                return None
            picks.append(min(offers, key=lambda o: o.age))
        taken = [t.id for o in picks for t in o.tokens]
        if len(taken) != len(set(taken)):
            return None
        return picks

    def seize(self, inst: Instance, node: Node, selection) -> list[list[Token]]:
        units = []
        for pin, offer in zip(node.input_pins, selection):
            details = {"to": pin.id}
            if len(offer.tokens) > 1:  # a set that passed a join
                self._offer_seq += 1
                details["group"] = self._offer_seq
            for token in offer.tokens:
                self.take(inst, token)
                self.emit("tokenMove", f"{inst.id}:t{token.id}", {"from": token.location, **details})
            for fork, used in offer.forks:
                for edge in self.out_edges.get(fork, ()):
                    if edge.id != used:
                        self.new_token(inst, edge.id, offer.tokens[0].payload)
            for token in offer.tokens:
                token.origin = token.location
            units.append(list(offer.tokens))
        return units

    def diagnose(self) -> list[str]:
        notes = []
        for inst in self.instances:
            if inst.status != "running":
                continue
            state = OfferState(self, inst)
            for join in sorted((n for n in inst.activity.nodes if isinstance(n, JoinNode)), key=lambda n: n.id):
                try:
                    filled = [bool(state.along(e)) for e in self.in_edges.get(join.id, ())]
                except RunError:
                    continue
                if any(filled) and not all(filled):
                    notes.append(f"{inst.id}: join {join.id} has an incomplete offer set")
        return notes + super().diagnose()


def run_reference(
    model: ProcessModel,
    inputs: dict | None = None,
    max_ticks: int = DEFAULT_MAX_TICKS,
    signals: Iterable[ExternalSignal] = (),
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
) -> RunResult:
    vm = ReferenceInterpreter(model, max_ticks=max_ticks, depth_limit=depth_limit, signals=signals)
    start_instances(vm, model, inputs)
    return vm.run()


def project_action_events(log: Iterable[Event]) -> list[tuple[int, str, str, str]]:
    """``(tick, kind, action id, instance id)`` for every actionStart/actionEnd, in log order."""
    return [
        (e.tick, e.kind, e.element, e.instance)
        for e in log
        if e.kind in ("actionStart", "actionEnd")
    ]
