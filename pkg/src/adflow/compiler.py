"""Truncate control nodes into push/pull paths between stable places."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .model import guards
from .model.elements import (
    ActivityFinalNode,
    ActivityParameterNode,
    Edge,
    ForkNode,
    InitialNode,
    JoinNode,
    ProcessModel,
)
from .model.validation import validate


class CompileError(RuntimeError):
    """Raised when the compiler meets a model the validator should have rejected."""


@dataclass(frozen=True)
class StablePlace:
    id: str
    kind: str  # inputPin | outputPin | initialOut | finalIn | parameterNode
    definition_ref: str  # owning node id
    activity: str
    direction: str  # "in": tokens wait here for a consumer; "out": tokens leave from here

    @property
    def is_source(self) -> bool:
        return self.direction == "out"


@dataclass(frozen=True)
class Path:
    id: str
    source: str
    destination: str
    edges: tuple[str, ...]
    traversed: tuple[str, ...]
    condition: guards.Expr
    kind: str  # "push" | "pull"

    @property
    def is_pull(self) -> bool:
        return self.kind == "pull"

    def describe(self) -> str:
        via = ", ".join(self.traversed)
        return f"{self.kind.upper()} {self.source} -> {self.destination} via [{via}] when {guards.to_text(self.condition)}"


@dataclass(frozen=True)
class Slot:
    """One join input: filled by a token on any of ``paths`` or by one complete ``nested`` join."""

    join: str
    edge: str
    paths: tuple[str, ...]
    nested: tuple["JoinRequirement", ...] = ()


@dataclass(frozen=True)
class JoinRequirement:
    """A join passes a group only when every incoming edge (slot) is filled."""

    join: str
    slots: tuple[Slot, ...]

    def joins(self) -> list[str]:
        found = [self.join]
        for slot in self.slots:
            for sub in slot.nested:
                found.extend(sub.joins())
        return found

    def leaves(self) -> list[str]:
        found = []
        for slot in self.slots:
            found.extend(slot.paths)
            for sub in slot.nested:
                found.extend(sub.leaves())
        return found


@dataclass(frozen=True)
class PullGroupSpec:
    destination: str
    member_paths: tuple[str, ...]
    join_nodes: tuple[str, ...]
    alternatives: tuple[JoinRequirement, ...]  # topmost joins reachable from the destination


@dataclass(frozen=True)
class CompiledModel:
    model: ProcessModel
    places: tuple[StablePlace, ...]
    paths: tuple[Path, ...]
    pull_groups: tuple[PullGroupSpec, ...]
    push_assignments: dict[str, tuple[str, ...]]
    pull_assignments: dict[str, PullGroupSpec]
    mapping_links: tuple[tuple[str, str], ...]
    warnings: tuple[str, ...] = ()
    _place_index: dict = field(default=None, init=False, repr=False, compare=False)
    _path_index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_place_index", {p.id: p for p in self.places})
        object.__setattr__(self, "_path_index", {p.id: p for p in self.paths})

    def place(self, place_id: str) -> StablePlace:
        return self._place_index[place_id]

    def path(self, path_id: str) -> Path:
        return self._path_index[path_id]

    def paths_from(self, place_id: str) -> list[Path]:
        return [self._path_index[pid] for pid in self.push_assignments.get(place_id, ())] + [
            p for p in self.paths if p.source == place_id and p.is_pull
        ]

    def places_of(self, activity_id: str) -> list[StablePlace]:
        return [p for p in self.places if p.activity == activity_id]

    def dump_paths(self) -> str:
        return "".join(p.describe() + "\n" for p in self.paths)


def _place_kind(node, pin) -> str:
    if isinstance(node, InitialNode):
        return "initialOut"
    if isinstance(node, ActivityFinalNode):
        return "finalIn"
    if isinstance(node, ActivityParameterNode):
        return "parameterNode"
    return "inputPin" if pin.direction == "in" else "outputPin"


def stable_places(model: ProcessModel) -> list[StablePlace]:
    places = []
    for activity in model.activities:
        for node in activity.nodes:
            for pin in node.pins:
                places.append(StablePlace(pin.id, _place_kind(node, pin), node.id, activity.id, pin.direction))
    return sorted(places, key=lambda p: p.id)


def _else_condition(model: ProcessModel, edge: Edge) -> guards.Expr:
    activity = model.owning_activity(edge.id)
    siblings = sorted((e for e in activity.edges if e.source == edge.source and e.id != edge.id), key=lambda e: e.id)
    positives = []
    for sib in siblings:
        if sib.guard is None:
            continue
        parsed = guards.parse_guard(sib.guard)
        if not isinstance(parsed, guards.Else):
            positives.append(parsed)
    return guards.negate_any(positives)


def edge_condition(model: ProcessModel, edge: Edge) -> guards.Expr:
    if edge.guard is None:
        return guards.TRUE
    parsed = guards.parse_guard(edge.guard)
    if isinstance(parsed, guards.Else):
        return _else_condition(model, edge)
    return parsed


def path_condition(model: ProcessModel, edges: list[Edge] | tuple[Edge, ...]) -> guards.Expr:
    """AND of the guards along contiguous ``edges``; ``else`` becomes NOT(any sibling)."""
    for prev, nxt in zip(edges, edges[1:]):
        if prev.target != nxt.source:
            raise ValueError(f"edges {prev.id} and {nxt.id} are not contiguous")
    return guards.conjoin([edge_condition(model, e) for e in edges])


def _edge_table(model: ProcessModel):
    out = defaultdict(list)
    for activity in model.activities:
        for edge in activity.edges:
            out[edge.source].append(edge)
    for key in out:
        out[key].sort(key=lambda e: e.id)
    return out


def _traversals(model: ProcessModel, out_edges, start: str):
    control = {n.id for _, n in model.iter_nodes() if n.is_control}

    def walk(end: str, edges: list[Edge], visited: list[str]):
        for edge in out_edges.get(end, []):
            nxt = edge.target
            if nxt in control:
                if nxt in visited:
                    continue
                if not out_edges.get(nxt):
                    raise CompileError(f"control node {nxt} has no outgoing edge")
                yield from walk(nxt, edges + [edge], visited + [nxt])
            else:
                yield edges + [edge], visited, nxt

    yield from walk(start, [], [])


def enumerate_paths(model: ProcessModel, source: StablePlace | str) -> list[Path]:
    """Every simple control-only traversal from ``source`` to a stable place."""
    source_id = source.id if isinstance(source, StablePlace) else source
    return _enumerate(model, _edge_table(model), source_id, counter=[0])


def _enumerate(model: ProcessModel, out_edges, source_id: str, counter: list[int]) -> list[Path]:
    paths = []
    for edges, visited, dest in _traversals(model, out_edges, source_id):
        try:
            pin = model.pin(dest)
        except KeyError:
            raise CompileError(f"path from {source_id} ends at {dest}, which is not a pin") from None
        if pin.direction != "in":
            raise CompileError(f"path from {source_id} reaches output pin {dest}")
        kinds = [model.node(c) for c in visited]
        has_join = any(isinstance(n, JoinNode) for n in kinds)
        if has_join and any(isinstance(n, ForkNode) for n in kinds):
            raise CompileError(f"path {source_id} -> {dest} mixes fork and join")
        counter[0] += 1
        paths.append(
            Path(
                id=f"path{counter[0]}",
                source=source_id,
                destination=dest,
                edges=tuple(e.id for e in edges),
                traversed=tuple(visited),
                condition=path_condition(model, edges),
                kind="pull" if has_join else "push",
            )
        )
    return paths


def _pull_groups(model: ProcessModel, paths: list[Path]) -> list[PullGroupSpec]:
    in_edges = defaultdict(list)
    for activity in model.activities:
        for edge in activity.edges:
            in_edges[edge.target].append(edge)
    for key in in_edges:
        in_edges[key].sort(key=lambda e: e.id)
    by_route = {p.edges: p.id for p in paths if p.is_pull}

    def kind_of(end: str) -> str:
        try:
            return model.node(end).kind
        except KeyError:
            return "pin"

    def alternatives(end: str, suffix: tuple[str, ...]):
        """Pull leaves and topmost joins feeding ``end`` through merges/decisions only."""
        leaves, joins = [], []
        for edge in in_edges.get(end, ()):
            route = (edge.id, *suffix)
            kind = kind_of(edge.source)
            if kind == "pin":
                if route in by_route:
                    leaves.append(by_route[route])
            elif kind in ("decision", "merge"):
                sub_leaves, sub_joins = alternatives(edge.source, route)
                leaves.extend(sub_leaves)
                joins.extend(sub_joins)
            elif kind == "join":
                joins.append(requirement(edge.source, route))
            # forks only feed push paths
        return leaves, joins

    def requirement(join: str, suffix: tuple[str, ...]) -> JoinRequirement:
        slots = []
        for edge in in_edges.get(join, ()):
            route = (edge.id, *suffix)
            kind = kind_of(edge.source)
            if kind == "pin":
                leaves, nested = [by_route[route]], []
            elif kind == "join":
                leaves, nested = [], [requirement(edge.source, route)]
            else:
                leaves, nested = alternatives(edge.source, route)
            slots.append(Slot(join, edge.id, tuple(leaves), tuple(nested)))
        return JoinRequirement(join, tuple(slots))

    by_dest: dict[str, list[Path]] = defaultdict(list)
    for p in paths:
        if p.is_pull:
            by_dest[p.destination].append(p)
    groups = []
    for dest in sorted(by_dest):
        members = tuple(p.id for p in by_dest[dest])
        stray, tops = alternatives(dest, ())
        covered = [leaf for top in tops for leaf in top.leaves()]
        if stray or sorted(covered) != sorted(members):
            raise CompileError(f"pull paths into {dest} do not form join groups")
        joins = sorted({j for top in tops for j in top.joins()})
        groups.append(PullGroupSpec(dest, members, tuple(joins), tuple(tops)))
    return groups


def compile_model(model: ProcessModel, check: bool = True) -> CompiledModel:
    if check:
        report = validate(model)
        if not report.ok:
            raise CompileError("model has validation errors: " + "; ".join(str(f) for f in report.errors[:3]))
    places = stable_places(model)
    out_edges = _edge_table(model)
    counter = [0]
    paths: list[Path] = []
    for place in places:
        if place.is_source:
            paths.extend(_enumerate(model, out_edges, place.id, counter))
    groups = _pull_groups(model, paths)

    push: dict[str, tuple[str, ...]] = {}
    for place in places:
        ids = tuple(p.id for p in paths if p.source == place.id and not p.is_pull)
        if ids:
            push[place.id] = ids
    pull = {g.destination: g for g in groups}

    links: list[tuple[str, str]] = []
    for place in places:
        links.append((place.id, f"place:{place.id}"))
    for _, node in sorted(model.iter_nodes(), key=lambda an: an[1].id):
        if node.is_action:
            links.append((node.id, f"action:{node.id}"))
    for src in sorted(push):
        links.append((src, f"push:{src}"))
    for dest in sorted(pull):
        links.append((dest, f"pull:{dest}"))
    for p in paths:
        for eid in p.edges:
            links.append((eid, f"path:{p.id}"))
        for c in p.traversed:
            links.append((c, f"path:{p.id}"))

    warnings = []
    for g in groups:
        for top in g.alternatives:
            if len(top.joins()) > 1:
                warnings.append(f"pull group at {g.destination} spans joins {', '.join(top.joins())}")

    return CompiledModel(
        model=model,
        places=tuple(places),
        paths=tuple(paths),
        pull_groups=tuple(groups),
        push_assignments=push,
        pull_assignments=pull,
        mapping_links=tuple(links),
        warnings=tuple(warnings),
    )


compile = compile_model  # noqa: A001  (public name used by callers)
