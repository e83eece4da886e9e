"""BPMN-subset target model, its validator and the ``.bpmnflow`` format.

The document syntax is the same braced tree text used for ``.flow`` models::

    bpmn {
      id: "shop"
      pools: [ pool { id: "pool_sell" name: "Sell" process: "sell" } ]
      processes: [ process { id: "sell" ... } ]
    }
"""

from __future__ import annotations

import dataclasses
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, ClassVar, Iterator

from .model import treetext
from .model.treetext import Block

TASK_KINDS = ("plain", "service", "user", "manual", "send", "receive")


class BpmnSyntaxError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


# elements -----------------------------------------------------------------


@dataclass(frozen=True)
class FlowNode:
    tag: ClassVar[str] = "node"
    id: str
    name: str = ""


@dataclass(frozen=True)
class Task(FlowNode):
    tag: ClassVar[str] = "task"
    kind: str = "plain"
    performer: str | None = None
    signal: str | None = None  # send/receive tasks
    attributes: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class SubProcess(FlowNode):
    tag: ClassVar[str] = "subprocess"
    mode: str = "call"  # call | embedded
    called: str | None = None
    loop: bool = False
    collection: str | None = None
    performer: str | None = None


@dataclass(frozen=True)
class Gateway(FlowNode):
    tag: ClassVar[str] = "gateway"
    kind: str = "exclusive"  # exclusive | parallel
    role: str = "split"  # split | merge


@dataclass(frozen=True)
class StartEvent(FlowNode):
    tag: ClassVar[str] = "start"


@dataclass(frozen=True)
class EndEvent(FlowNode):
    tag: ClassVar[str] = "end"
    kind: str = "plain"  # plain | message
    signal: str | None = None


@dataclass(frozen=True)
class BoundaryEvent(FlowNode):
    tag: ClassVar[str] = "boundary"
    attached_to: str = ""
    signal: str | None = None
    correlation: str | None = None  # boundary events cannot carry conditional flows


NODE_TAGS: dict[str, type[FlowNode]] = {c.tag: c for c in (Task, SubProcess, Gateway, StartEvent, EndEvent, BoundaryEvent)}


@dataclass(frozen=True)
class SequenceFlow:
    id: str
    source: str
    target: str
    condition: str | None = None


@dataclass(frozen=True)
class Property:
    id: str
    name: str
    type: str


@dataclass(frozen=True)
class BpmnAssignment:
    id: str
    owner: str
    target: str
    expr: str


@dataclass(frozen=True)
class Lane:
    id: str
    name: str
    performer: str
    members: tuple[str, ...] = ()


@dataclass(frozen=True)
class Process:
    id: str
    name: str = ""
    nodes: tuple[FlowNode, ...] = ()
    flows: tuple[SequenceFlow, ...] = ()
    properties: tuple[Property, ...] = ()
    assignments: tuple[BpmnAssignment, ...] = ()
    lanes: tuple[Lane, ...] = ()

    def node(self, node_id: str) -> FlowNode | None:
        for n in self.nodes:
            if n.id == node_id:
                return n
        return None


@dataclass(frozen=True)
class Pool:
    id: str
    name: str
    process: str


@dataclass(frozen=True)
class MessageFlow:
    id: str
    source: str
    target: str
    signal: str


@dataclass(frozen=True)
class BpmnModel:
    id: str = "bpmn"
    pools: tuple[Pool, ...] = ()
    processes: tuple[Process, ...] = ()
    global_processes: tuple[Process, ...] = ()  # callees of call subprocesses; not in any pool
    message_flows: tuple[MessageFlow, ...] = ()

    def all_processes(self) -> list[Process]:
        return list(self.processes) + list(self.global_processes)

    def process(self, process_id: str) -> Process | None:
        for p in self.all_processes():
            if p.id == process_id:
                return p
        return None

    def flow_nodes(self) -> Iterator[tuple[Process, FlowNode]]:
        for p in self.all_processes():
            for n in p.nodes:
                yield p, n


def element_ids(model: BpmnModel) -> list[str]:
    """Every identifiable BPMN element, in document order."""
    ids = [p.id for p in model.pools]
    for proc in model.all_processes():
        ids.append(proc.id)
        for group in (proc.nodes, proc.flows, proc.properties, proc.assignments, proc.lanes):
            ids.extend(item.id for item in group)
    ids.extend(m.id for m in model.message_flows)
    return ids


# canonical form and serialisation -----------------------------------------

_LISTS: dict[str, tuple[str, type]] = {
    "pools": ("pool", Pool),
    "processes": ("process", Process),
    "global_processes": ("process", Process),
    "message_flows": ("message", MessageFlow),
    "flows": ("flow", SequenceFlow),
    "properties": ("property", Property),
    "assignments": ("assign", BpmnAssignment),
    "lanes": ("lane", Lane),
}
_ORDERED = {"assignments"}


def canonicalize(obj: Any) -> Any:
    changes = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if f.name == "nodes" or f.name in _LISTS:
            items = [canonicalize(v) for v in value]
            if f.name not in _ORDERED:
                items.sort(key=lambda v: v.id)
            changes[f.name] = tuple(items)
        elif f.name in ("attributes", "members"):
            changes[f.name] = tuple(sorted(value))
    return dataclasses.replace(obj, **changes) if changes else obj


def structurally_equal(a: BpmnModel, b: BpmnModel) -> bool:
    return canonicalize(a) == canonicalize(b)


def _default(f: dataclasses.Field) -> Any:
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:  # type: ignore[misc]
        return f.default_factory()  # type: ignore[misc]
    return dataclasses.MISSING


def _to_block(obj: Any, tag: str) -> Block:
    block = Block(tag)
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if value == _default(f):
            continue
        if f.name == "nodes":
            value = [_to_block(n, n.tag) for n in value]
        elif f.name in _LISTS:
            value = [_to_block(v, _LISTS[f.name][0]) for v in value]
        elif f.name == "attributes":
            value = [Block("attr", {"key": k, "value": v}) for k, v in value]
        elif isinstance(value, tuple):
            value = list(value)
        block.entries[f.name] = value
    return block


def _from_block(block: Block, cls: type) -> Any:
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, raw in block.entries.items():
        if key not in fields:
            raise BpmnSyntaxError(f"unknown key {key!r} in {block.tag} block", block.line)
        if key == "nodes":
            items = []
            for item in _need_list(raw, block, key):
                if not isinstance(item, Block) or item.tag not in NODE_TAGS:
                    raise BpmnSyntaxError("expected a flow node block", block.line)
                items.append(_from_block(item, NODE_TAGS[item.tag]))
            kwargs[key] = tuple(items)
        elif key in _LISTS:
            tag, item_cls = _LISTS[key]
            items = []
            for item in _need_list(raw, block, key):
                if not isinstance(item, Block) or item.tag != tag:
                    raise BpmnSyntaxError(f"expected a {tag} block", block.line)
                items.append(_from_block(item, item_cls))
            kwargs[key] = tuple(items)
        elif key == "attributes":
            kwargs[key] = tuple((a.get("key"), a.get("value")) for a in _need_list(raw, block, key))
        elif key == "members":
            kwargs[key] = tuple(_need_list(raw, block, key))
        else:
            if isinstance(raw, (list, Block)):
                raise BpmnSyntaxError(f"{block.tag}.{key} must be a scalar", block.line)
            kwargs[key] = raw
    missing = [n for n, f in fields.items() if n not in kwargs and _default(f) is dataclasses.MISSING]
    if missing:
        raise BpmnSyntaxError(f"{block.tag} block is missing {', '.join(missing)}", block.line)
    return cls(**kwargs)


def _need_list(raw: Any, block: Block, key: str) -> list:
    if not isinstance(raw, list):
        raise BpmnSyntaxError(f"{block.tag}.{key} must be a list", block.line)
    return raw


def serialize_bpmn(model: BpmnModel) -> str:
    return treetext.dump(_to_block(canonicalize(model), "bpmn"))


def parse_bpmn(text: str) -> BpmnModel:
    try:
        root = treetext.load(text)
    except treetext.TreeSyntaxError as exc:
        raise BpmnSyntaxError(str(exc)) from exc
    if root.tag != "bpmn":
        raise BpmnSyntaxError(f"expected a bpmn block, found {root.tag!r}", root.line)
    return _from_block(root, BpmnModel)


# validation ---------------------------------------------------------------


@dataclass(frozen=True)
class BpmnFinding:
    rule: str
    severity: str
    elements: tuple[str, ...]
    message: str

    def __str__(self) -> str:
        return f"{self.severity} {self.rule} [{', '.join(self.elements)}]: {self.message}"


@dataclass
class BpmnValidationReport:
    findings: list[BpmnFinding]

    @property
    def errors(self) -> list[BpmnFinding]:
        return [f for f in self.findings if f.severity == "error"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def rules(self) -> set[str]:
        return {f.rule for f in self.findings}


def reachable_nodes(process: Process) -> set[str]:
    out = defaultdict(list)
    for flow in process.flows:
        out[flow.source].append(flow.target)
    for n in process.nodes:
        if isinstance(n, BoundaryEvent):
            out[n.attached_to].append(n.id)
    stack = [n.id for n in process.nodes if isinstance(n, StartEvent)]
    seen: set[str] = set()
    while stack:
        cur = stack.pop()
        if cur not in seen:
            seen.add(cur)
            stack.extend(out.get(cur, ()))
    return seen


def validate_bpmn(model: BpmnModel) -> BpmnValidationReport:
    findings: list[BpmnFinding] = []

    def err(rule: str, elements, message: str) -> None:
        findings.append(BpmnFinding(rule, "error", tuple(elements), message))

    owners = defaultdict(list)
    for pool in model.pools:
        owners[pool.process].append(pool.id)
    for proc in model.processes:
        if len(owners.get(proc.id, ())) != 1:
            err("pool-membership", [proc.id], f"process belongs to {len(owners.get(proc.id, ()))} pools")
    known = {p.id for p in model.processes}
    for pool in model.pools:
        if pool.process not in known:
            err("dangling", [pool.id], f"pool refers to unknown process {pool.process!r}")

    all_nodes: dict[str, FlowNode] = {}
    for proc in model.all_processes():
        nodes = {n.id: n for n in proc.nodes}
        all_nodes.update(nodes)
        n_in, n_out = defaultdict(int), defaultdict(int)
        for flow in proc.flows:
            bad = [end for end in (flow.source, flow.target) if end not in nodes]
            if bad:
                err("dangling", [flow.id], f"sequence flow endpoint {', '.join(bad)} is not a node of {proc.id}")
                continue
            n_out[flow.source] += 1
            n_in[flow.target] += 1
            src = nodes[flow.source]
            if flow.condition is not None:
                receive = isinstance(src, Task) and src.kind == "receive"
                exclusive = isinstance(src, Gateway) and src.kind == "exclusive" and src.role == "split"
                if not (receive or exclusive):
                    err("condition-placement", [flow.id], f"conditional flow leaves {src.tag} {src.id}")
        for n in sorted(proc.nodes, key=lambda n: n.id):
            if isinstance(n, Gateway):
                if n.role == "split" and n_out[n.id] < 2:
                    err("gateway-arity", [n.id], f"{n.kind} split has {n_out[n.id]} outgoing flows")
                elif n.role == "merge" and n_in[n.id] < 2:
                    err("gateway-arity", [n.id], f"{n.kind} merge has {n_in[n.id]} incoming flows")
                elif n.role not in ("split", "merge"):
                    err("gateway-arity", [n.id], f"unknown gateway role {n.role!r}")
            elif isinstance(n, BoundaryEvent):
                host = nodes.get(n.attached_to)
                if not isinstance(host, (Task, SubProcess)):
                    err("boundary-attachment", [n.id], f"boundary event attached to {n.attached_to!r}")
            elif isinstance(n, SubProcess) and n.mode == "call" and (n.called is None or model.process(n.called) is None):
                err("dangling", [n.id], f"call subprocess refers to unknown process {n.called!r}")
        unreachable = sorted(set(nodes) - reachable_nodes(proc))
        if unreachable:
            err("unreachable", unreachable, f"not reachable from the start event of {proc.id}")
        for lane in proc.lanes:
            missing = [m for m in lane.members if m not in nodes]
            if missing:
                err("dangling", [lane.id], f"lane members {', '.join(missing)} are not nodes of {proc.id}")
        for a in proc.assignments:
            if a.owner not in nodes:
                err("dangling", [a.id], f"assignment owner {a.owner!r} is not a node of {proc.id}")
    for mf in model.message_flows:
        bad = [end for end in (mf.source, mf.target) if end not in all_nodes and end not in {p.id for p in model.pools}]
        if bad:
            err("dangling", [mf.id], f"message flow endpoint {', '.join(bad)} does not exist")
    return BpmnValidationReport(findings)
