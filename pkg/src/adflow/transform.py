"""Activity-model to BPMN transformation with a canonical-concept trace.

Every produced BPMN element is linked to exactly one source element through
one concept of :data:`CANONICAL_CONCEPTS`; a source element may produce
several targets (a main activity yields a process and a pool). Pins are not
mapped on their own: they collapse, together with their edge, into one
sequence flow.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field

from . import bpmn as B
from .model.elements import (
    AcceptEventAction,
    Activity,
    ActivityFinalNode,
    ActivityParameterNode,
    CallBehaviorAction,
    DecisionNode,
    ForEachNode,
    ForkNode,
    InitialNode,
    JoinNode,
    MergeNode,
    Node,
    ProcessModel,
    SendSignalAction,
    assignment_ref,
    variable_ref,
)

CANONICAL_CONCEPTS = (
    "Task",
    "Performer",
    "SimpleTransition",
    "IncomingTransition",
    "OutgoingTransition",
    "Decision",
    "Fork",
    "Merge",
    "Join",
    "Start",
    "End",
    "ProcessContainer",
    "Variable",
    "AssignmentConcept",
    "MessageSend",
    "MessageReceive",
    "Loop",
)
TRANSITIONS = ("SimpleTransition", "IncomingTransition", "OutgoingTransition")


class UntransformableElement(RuntimeError):
    """The rule table has no entry for an element (a defect, not a user error)."""


@dataclass(frozen=True, order=True)
class TraceLink:
    source: str
    concept: str
    target: str


@dataclass
class TraceMap:
    links: list[TraceLink] = field(default_factory=list)

    def add(self, source: str, concept: str, target: str) -> None:
        if concept not in CANONICAL_CONCEPTS:
            raise UntransformableElement(f"unknown canonical concept {concept!r}")
        self.links.append(TraceLink(source, concept, target))

    def targets_of(self, source: str) -> list[TraceLink]:
        return [link for link in self.links if link.source == source]

    def by_target(self) -> dict[str, list[TraceLink]]:
        out: dict[str, list[TraceLink]] = defaultdict(list)
        for link in self.links:
            out[link.target].append(link)
        return out

    def to_text(self) -> str:
        return "".join(f"{l.source}  {l.concept}  {l.target}\n" for l in sorted(self.links))


class TraceFormatError(ValueError):
    pass


def parse_trace_map(text: str) -> TraceMap:
    trace = TraceMap()
    for number, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise TraceFormatError(f"line {number}: expected 'source  concept  target'")
        trace.links.append(TraceLink(*parts))
    return trace


# node rules -----------------------------------------------------------------

NODE_CONCEPT = {
    DecisionNode: "Decision",
    MergeNode: "Merge",
    ForkNode: "Fork",
    JoinNode: "Join",
    InitialNode: "Start",
    ActivityFinalNode: "End",
    ForEachNode: "Loop",
}
GATEWAYS = {
    DecisionNode: ("exclusive", "split"),
    MergeNode: ("exclusive", "merge"),
    ForkNode: ("parallel", "split"),
    JoinNode: ("parallel", "merge"),
}


def node_concept(node: Node) -> str:
    if isinstance(node, ActivityParameterNode):
        return "Start" if node.direction == "in" else "End"
    if isinstance(node, SendSignalAction):
        return "MessageSend"
    if isinstance(node, AcceptEventAction):
        return "MessageReceive"
    if isinstance(node, CallBehaviorAction):
        return "Task"
    for cls, concept in NODE_CONCEPT.items():
        if isinstance(node, cls):
            return concept
    raise UntransformableElement(f"no mapping rule for {node.kind} {node.id}")


def _map_node(model: ProcessModel, node: Node) -> B.FlowNode:
    name = node.name
    if isinstance(node, CallBehaviorAction):
        if node.invokes and model.has_activity(node.invokes):
            return B.SubProcess(node.id, name, mode="call", called=node.invokes, performer=node.performer)
        return B.Task(node.id, name, kind=node.task, performer=node.performer, attributes=tuple(node.attributes))
    if isinstance(node, SendSignalAction):
        if node.end:
            return B.EndEvent(node.id, name, kind="message", signal=node.signal)
        return B.Task(node.id, name, kind="send", signal=node.signal)
    if isinstance(node, AcceptEventAction):
        if node.interrupting:
            return B.BoundaryEvent(node.id, name, attached_to=node.interrupts, signal=node.signal,
                                   correlation=node.correlation)
        return B.Task(node.id, name, kind="receive", signal=node.signal)
    if isinstance(node, ForEachNode):
        return B.SubProcess(node.id, name, mode="call", called=node.body, loop=True, collection=node.collection)
    if isinstance(node, (InitialNode, ActivityParameterNode)) and getattr(node, "direction", "in") == "in":
        return B.StartEvent(node.id, name)
    if isinstance(node, (ActivityFinalNode, ActivityParameterNode)):
        return B.EndEvent(node.id, name)
    for cls, (kind, role) in GATEWAYS.items():
        if isinstance(node, cls):
            return B.Gateway(node.id, name, kind=kind, role=role)
    raise UntransformableElement(f"no mapping rule for {node.kind} {node.id}")


def edge_concept(model: ProcessModel, source: str, target: str) -> str:
    def control(end: str) -> bool:
        try:
            return model.node(end).is_control
        except KeyError:
            return False

    if control(target):
        return "IncomingTransition"
    if control(source):
        return "OutgoingTransition"
    return "SimpleTransition"


def _owner(model: ProcessModel, end: str) -> str:
    try:
        return model.pin_owner(end).id
    except KeyError:
        return end


def _condition(model: ProcessModel, edge) -> str | None:
    try:
        src = model.pin_owner(edge.source)
    except KeyError:
        return edge.guard
    if isinstance(src, AcceptEventAction) and not src.interrupting and src.correlation:
        return src.correlation if edge.guard is None else f"({src.correlation}) and ({edge.guard})"
    return edge.guard


# transformation ---------------------------------------------------------------


def _transform_activity(model: ProcessModel, activity: Activity, trace: TraceMap) -> B.Process:
    nodes, flows, props, assigns = [], [], [], []
    for node in sorted(activity.nodes, key=lambda n: n.id):
        nodes.append(_map_node(model, node))
        trace.add(node.id, node_concept(node), node.id)
        if isinstance(node, ActivityParameterNode):
            pid = f"{node.id}.param"
            props.append(B.Property(pid, node.name or node.id, node.pin.type or "token"))
            trace.add(node.id, "Variable", pid)
        for group in ("assign", "arg"):
            items = getattr(node, "assignments" if group == "assign" else "arguments", ())
            for i, a in enumerate(items):
                ref = assignment_ref(node, i, group)
                assigns.append(B.BpmnAssignment(ref, node.id, a.target, a.expr))
                trace.add(ref, "AssignmentConcept", ref)
    for edge in sorted(activity.edges, key=lambda e: e.id):
        flows.append(B.SequenceFlow(edge.id, _owner(model, edge.source), _owner(model, edge.target),
                                    _condition(model, edge)))
        trace.add(edge.id, edge_concept(model, edge.source, edge.target), edge.id)
    for var in sorted(activity.variables, key=lambda v: v.name):
        ref = variable_ref(activity, var.name)
        props.append(B.Property(ref, var.name, var.type))
        trace.add(ref, "Variable", ref)
    members: dict[str, list[str]] = defaultdict(list)
    for node in activity.nodes:
        perf = getattr(node, "performer", None)
        if perf:
            members[perf].append(node.id)
    lanes = []
    for perf in sorted(members):
        lane_id = f"{activity.id}.lane.{perf}"
        performer = model.performer(perf)
        lanes.append(B.Lane(lane_id, performer.name if performer else perf, perf, tuple(sorted(members[perf]))))
        trace.add(perf, "Performer", lane_id)
    return B.Process(activity.id, activity.label, tuple(nodes), tuple(flows), tuple(props), tuple(assigns),
                     tuple(lanes))


def _message_flows(model: ProcessModel, trace: TraceMap) -> list[B.MessageFlow]:
    flows = []
    mains = model.main_processes()
    for activity, node in sorted(model.iter_nodes(), key=lambda an: an[1].id):
        if not isinstance(node, SendSignalAction):
            continue
        targets = [model.activity(node.target)] if node.target and model.has_activity(node.target) else mains
        for target in targets:
            receivers = sorted(
                n.id for n in target.nodes if isinstance(n, AcceptEventAction) and n.signal == node.signal
            )
            ends = receivers or [f"pool_{target.id}"]
            for end in ends:
                mid = f"{node.id}->{end}"
                flows.append(B.MessageFlow(mid, node.id, end, node.signal))
                trace.add(node.id, "MessageSend", mid)
    return flows


def transform(ad: ProcessModel) -> tuple[B.BpmnModel, TraceMap]:
    """Map a validated activity model to BPMN; output depends only on ``ad``."""
    trace = TraceMap()
    pools, processes, globals_ = [], [], []
    for activity in sorted(ad.activities, key=lambda a: a.id):
        proc = _transform_activity(ad, activity, trace)
        trace.add(activity.id, "ProcessContainer", proc.id)
        if activity.main:
            pool = B.Pool(f"pool_{activity.id}", activity.label, proc.id)
            pools.append(pool)
            processes.append(proc)
            trace.add(activity.id, "ProcessContainer", pool.id)
        else:
            globals_.append(proc)
    messages = _message_flows(ad, trace)
    model = B.BpmnModel(ad.id, tuple(pools), tuple(processes), tuple(globals_), tuple(messages))
    trace.links.sort()
    return B.canonicalize(model), trace


# trace checks ---------------------------------------------------------------


def in_scope_elements(ad: ProcessModel) -> list[str]:
    """Source elements the transformation must cover (pins collapse into flows)."""
    out = []
    used_performers = set()
    for activity in ad.activities:
        out.append(activity.id)
        out.extend(variable_ref(activity, v.name) for v in activity.variables)
        for node in activity.nodes:
            out.append(node.id)
            out.extend(assignment_ref(node, i) for i in range(len(getattr(node, "assignments", ()))))
            out.extend(assignment_ref(node, i, "arg") for i in range(len(getattr(node, "arguments", ()))))
            if getattr(node, "performer", None):
                used_performers.add(node.performer)
        out.extend(e.id for e in activity.edges)
    out.extend(sorted(used_performers))
    return sorted(out)


@dataclass
class TraceReport:
    unmapped_sources: list[str]  # in-scope source elements without a link
    dangling_sources: list[str]  # links whose source is not a source element
    target_orphans: list[str]  # BPMN elements without a link
    multi_sourced: list[str]  # BPMN elements with more than one link
    dangling_targets: list[str]  # links whose target is not a BPMN element
    unknown_concepts: list[str]

    @property
    def ok(self) -> bool:
        return not any(
            (self.unmapped_sources, self.dangling_sources, self.target_orphans, self.multi_sourced,
             self.dangling_targets, self.unknown_concepts)
        )

    def lines(self) -> list[str]:
        out = []
        for label, items in (
            ("unmapped source", self.unmapped_sources),
            ("dangling source", self.dangling_sources),
            ("target orphan", self.target_orphans),
            ("multi-sourced target", self.multi_sourced),
            ("dangling target", self.dangling_targets),
            ("unknown concept", self.unknown_concepts),
        ):
            out.extend(f"{label}: {item}" for item in items)
        return out


def check_trace_totality(ad: ProcessModel, bpmn: B.BpmnModel, trace: TraceMap) -> TraceReport:
    scope = set(in_scope_elements(ad))
    known_sources = scope | {p.id for p in ad.performers}
    targets = B.element_ids(bpmn)
    target_set = set(targets)
    sources = {l.source for l in trace.links}
    counts = Counter(l.target for l in trace.links)
    return TraceReport(
        unmapped_sources=sorted(scope - sources),
        dangling_sources=sorted(sources - known_sources),
        target_orphans=sorted(t for t in target_set if counts[t] == 0),
        multi_sourced=sorted(t for t in target_set if counts[t] > 1),
        dangling_targets=sorted(set(counts) - target_set),
        unknown_concepts=sorted({l.concept for l in trace.links} - set(CANONICAL_CONCEPTS)),
    )


# skeletons ------------------------------------------------------------------


def bpmn_label(node: B.FlowNode) -> str:
    """Canonical concept implied by a BPMN node's own kind."""
    if isinstance(node, B.Gateway):
        return {
            ("exclusive", "split"): "Decision",
            ("exclusive", "merge"): "Merge",
            ("parallel", "split"): "Fork",
            ("parallel", "merge"): "Join",
        }.get((node.kind, node.role), "?")
    if isinstance(node, B.StartEvent):
        return "Start"
    if isinstance(node, B.EndEvent):
        return "MessageSend" if node.kind == "message" else "End"
    if isinstance(node, B.BoundaryEvent):
        return "MessageReceive"
    if isinstance(node, B.SubProcess):
        return "Loop" if node.loop else "Task"
    if isinstance(node, B.Task):
        return {"send": "MessageSend", "receive": "MessageReceive"}.get(node.kind, "Task")
    return "?"


@dataclass(frozen=True)
class Skeleton:
    labels: dict[str, str]  # node -> concept
    edges: tuple[tuple[str, str, str], ...]  # (edge id, source node, target node)
    attached: tuple[tuple[str, str], ...]  # (boundary node, host node)


def ad_skeleton(ad: ProcessModel) -> Skeleton:
    labels = {n.id: node_concept(n) for _, n in ad.iter_nodes()}
    edges = tuple(
        sorted((e.id, _owner(ad, e.source), _owner(ad, e.target)) for a in ad.activities for e in a.edges)
    )
    attached = tuple(
        sorted((n.id, n.interrupts) for _, n in ad.iter_nodes() if isinstance(n, AcceptEventAction) and n.interrupting)
    )
    return Skeleton(labels, edges, attached)


def bpmn_skeleton(model: B.BpmnModel) -> Skeleton:
    labels = {n.id: bpmn_label(n) for _, n in model.flow_nodes()}
    edges = tuple(sorted((f.id, f.source, f.target) for p in model.all_processes() for f in p.flows))
    attached = tuple(sorted((n.id, n.attached_to) for _, n in model.flow_nodes() if isinstance(n, B.BoundaryEvent)))
    return Skeleton(labels, edges, attached)


@dataclass(frozen=True)
class SkeletonVerdict:
    equivalent: bool
    witness: str | None = None

    def __bool__(self) -> bool:
        return self.equivalent


def structural_skeleton_equivalence(ad: ProcessModel, bpmn: B.BpmnModel, trace: TraceMap) -> SkeletonVerdict:
    """Check that the trace induces a label-preserving isomorphism of the control-flow graphs."""
    left, right = ad_skeleton(ad), bpmn_skeleton(bpmn)
    phi: dict[str, str] = {}
    for link in trace.links:
        if link.source in left.labels and link.target in right.labels:
            if link.source in phi:
                return SkeletonVerdict(False, f"node {link.source} maps to both {phi[link.source]} and {link.target}")
            phi[link.source] = link.target
    for node in sorted(left.labels):
        if node not in phi:
            return SkeletonVerdict(False, f"node {node} has no BPMN counterpart")
    images = Counter(phi.values())
    for target in sorted(right.labels):
        if images[target] != 1:
            return SkeletonVerdict(False, f"BPMN node {target} is the image of {images[target]} nodes")
    for node in sorted(left.labels):
        if left.labels[node] != right.labels[phi[node]]:
            return SkeletonVerdict(
                False, f"node {node} ({left.labels[node]}) maps to {phi[node]} ({right.labels[phi[node]]})"
            )
    mapped = Counter((phi.get(s, s), phi.get(t, t)) for _, s, t in left.edges)
    actual = Counter((s, t) for _, s, t in right.edges)
    for eid, s, t in left.edges:
        pair = (phi.get(s, s), phi.get(t, t))
        if actual[pair] < mapped[pair]:
            return SkeletonVerdict(False, f"edge {eid} ({s} -> {t}) has no flow {pair[0]} -> {pair[1]}")
    for fid, s, t in right.edges:
        if mapped[(s, t)] < actual[(s, t)]:
            return SkeletonVerdict(False, f"flow {fid} ({s} -> {t}) has no source edge")
    if sorted((phi[b], phi[h]) for b, h in left.attached if h in phi) != sorted(right.attached):
        return SkeletonVerdict(False, "boundary attachments differ")
    return SkeletonVerdict(True)


def node_counts(ad: ProcessModel, model: B.BpmnModel) -> dict[str, tuple[int, int]]:
    """``law -> (expected from ad, found in bpmn)`` for the gateway and pool counts."""
    kinds = Counter(type(n) for _, n in ad.iter_nodes())
    gw = Counter(n.kind for _, n in model.flow_nodes() if isinstance(n, B.Gateway))
    return {
        "exclusive": (kinds[DecisionNode] + kinds[MergeNode], gw["exclusive"]),
        "parallel": (kinds[ForkNode] + kinds[JoinNode], gw["parallel"]),
        "pools": (len(ad.main_processes()), len(model.pools)),
    }

