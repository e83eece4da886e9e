"""Static checks on process models.

Rule ids:

* R1 at most one edge leaves any pin
* R2 no control node reaches itself through control nodes only
* R3 no stable-place-to-stable-place path crosses both a fork and a join
* R4 guard placement, decision guard completeness and mutual exclusion
* R5 reference resolution and structural well-formedness
* R6 guard purity: payload fields exist on the incoming token type
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from . import guards
from .document import dangling_references
from .elements import (
    SCALAR_TYPES,
    TASK_KINDS,
    PERFORMER_KINDS,
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
)


@dataclass(frozen=True)
class Finding:
    rule: str
    severity: str  # "error" | "warning"
    elements: tuple[str, ...]
    message: str

    def __str__(self) -> str:
        return f"{self.rule} {self.severity} [{', '.join(self.elements)}] {self.message}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def rules(self, severity: str = "error") -> set[str]:
        return {f.rule for f in self.findings if f.severity == severity}

    def summary(self) -> str:
        return f"{len(self.errors)} errors, {len(self.warnings)} warnings"


class ActivityGraph:
    """Edge adjacency of one activity with pins folded onto their owners."""

    def __init__(self, activity: Activity):
        self.activity = activity
        self.nodes = {n.id: n for n in activity.nodes}
        self.pin_owner = {p.id: n for n in activity.nodes for p in n.pins}
        self.pins = {p.id: p for n in activity.nodes for p in n.pins}
        self.out_edges = defaultdict(list)
        self.in_edges = defaultdict(list)
        for edge in sorted(activity.edges, key=lambda e: e.id):
            self.out_edges[edge.source].append(edge)
            self.in_edges[edge.target].append(edge)

    def is_control(self, end: str) -> bool:
        node = self.nodes.get(end)
        return node is not None and node.is_control

    def owner(self, end: str) -> Node | None:
        if end in self.pin_owner:
            return self.pin_owner[end]
        return self.nodes.get(end)

    def sources(self) -> list[str]:
        """Pins tokens leave from (action outputs, initial and input-parameter pins)."""
        return sorted(pid for pid, pin in self.pins.items() if pin.direction == "out")

    def control_paths(self, start: str):
        """All simple control-only traversals from pin ``start``.

        Yields ``(edges, control node ids, end)`` where ``end`` is the pin the
        traversal stops at, or ``None`` when it dead-ends inside control nodes.
        """

        def walk(end, edges, visited):
            outgoing = self.out_edges.get(end, [])
            if not outgoing:
                yield edges, visited, None
                return
            for edge in outgoing:
                nxt = edge.target
                if self.is_control(nxt):
                    if nxt in visited:
                        continue
                    yield from walk(nxt, edges + [edge], visited + [nxt])
                else:
                    yield edges + [edge], visited, nxt

        if self.out_edges.get(start):
            yield from walk(start, [], [])


def validate(model: ProcessModel) -> ValidationReport:
    report = ValidationReport()
    add = report.findings.append

    for ref, context, owner in dangling_references(model):
        add(Finding("R5", "error", (owner,), f"unresolved reference {ref!r} ({context})"))
    if not model.main_processes():
        add(Finding("R5", "error", (model.id,), "model declares no MainProcess activity"))
    for performer in model.performers:
        if performer.kind not in PERFORMER_KINDS:
            add(Finding("R5", "error", (performer.id,), f"unknown performer kind {performer.kind!r}"))

    for activity in sorted(model.activities, key=lambda a: a.id):
        graph = ActivityGraph(activity)
        _check_r1(graph, add)
        cyclic = _check_r2(graph, add)
        _check_r3(graph, add, cyclic)
        _check_r4(graph, add)
        _check_structure(model, graph, add)
        _check_r6(model, graph, add)
    report.findings.sort(key=lambda f: (f.rule, f.elements, f.message))
    return report


def _check_r1(graph: ActivityGraph, add) -> None:
    for pin_id in sorted(graph.pins):
        edges = graph.out_edges.get(pin_id, [])
        if len(edges) > 1:
            add(Finding("R1", "error", (pin_id, *[e.id for e in edges]), f"{len(edges)} edges leave pin {pin_id}"))


def _check_r2(graph: ActivityGraph, add) -> set[str]:
    control = sorted(nid for nid, n in graph.nodes.items() if n.is_control)
    succ = {
        nid: sorted({e.target for e in graph.out_edges.get(nid, []) if graph.is_control(e.target)})
        for nid in control
    }
    cyclic: set[str] = set()
    for start in control:
        stack, seen = list(succ[start]), set()
        while stack:
            cur = stack.pop()
            if cur == start:
                cyclic.add(start)
                break
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(succ[cur])
    for nid in sorted(cyclic):
        add(Finding("R2", "error", (nid,), f"control node {nid} reaches itself through control nodes only"))
    return cyclic


def _check_r3(graph: ActivityGraph, add, cyclic: set[str]) -> None:
    reported: set[tuple[str, ...]] = set()
    chained: set[tuple[str, ...]] = set()
    for source in graph.sources():
        for edges, visited, end in graph.control_paths(source):
            kinds = [graph.nodes[c] for c in visited]
            has_fork = any(isinstance(n, ForkNode) for n in kinds)
            joins = [n.id for n in kinds if isinstance(n, JoinNode)]
            if has_fork and joins:
                key = tuple(visited)
                if key not in reported:
                    reported.add(key)
                    add(
                        Finding(
                            "R3",
                            "error",
                            (source, *visited, *( [end] if end else [])),
                            "path between stable places crosses both a fork and a join",
                        )
                    )
            elif len(joins) > 1 and tuple(joins) not in chained:
                chained.add(tuple(joins))
                add(Finding("R3", "warning", tuple(joins), "join chain: one pull group spans several joins"))


def _static_discriminator(exprs: list[guards.Expr]):
    """``(ref, literals)`` when every guard is ``ref = literal`` on one ref."""
    ref, literals = None, []
    for e in exprs:
        if not isinstance(e, guards.Cmp) or e.op != "=":
            return None
        if isinstance(e.left, guards.Ref) and isinstance(e.right, guards.Lit):
            r, lit = e.left, e.right
        elif isinstance(e.right, guards.Ref) and isinstance(e.left, guards.Lit):
            r, lit = e.right, e.left
        else:
            return None
        if ref is not None and r != ref:
            return None
        ref = r
        literals.append(lit.value)
    return ref, literals


def _check_r4(graph: ActivityGraph, add) -> None:
    accept_outputs = {
        p.id for n in graph.nodes.values() if isinstance(n, AcceptEventAction) for p in n.output_pins
    }
    for edge in sorted(graph.activity.edges, key=lambda e: e.id):
        if edge.guard is None:
            continue
        src = graph.nodes.get(edge.source)
        if not isinstance(src, DecisionNode) and edge.source not in accept_outputs:
            add(Finding("R4", "error", (edge.id,), "guards are only allowed after decisions or accept events"))
        try:
            parsed = guards.parse_guard(edge.guard)
        except guards.GuardSyntaxError as exc:
            add(Finding("R4", "error", (edge.id,), str(exc)))
            continue
        if isinstance(parsed, guards.Else) and not isinstance(src, DecisionNode):
            add(Finding("R4", "error", (edge.id,), "'else' outside a decision"))
    for node in sorted(graph.activity.nodes, key=lambda n: n.id):
        if isinstance(node, AcceptEventAction) and node.correlation is not None:
            try:
                guards.parse_guard(node.correlation)
            except guards.GuardSyntaxError as exc:
                add(Finding("R4", "error", (node.id,), str(exc)))
        if not isinstance(node, DecisionNode):
            continue
        outgoing = graph.out_edges.get(node.id, [])
        unguarded = [e.id for e in outgoing if e.guard is None]
        if unguarded:
            add(Finding("R4", "error", (node.id, *unguarded), "decision branch without a guard"))
        parsed = []
        for e in outgoing:
            if e.guard is None:
                continue
            try:
                parsed.append(guards.parse_guard(e.guard))
            except guards.GuardSyntaxError:
                pass
        elses = [g for g in parsed if isinstance(g, guards.Else)]
        if len(elses) > 1:
            add(Finding("R4", "error", (node.id,), "decision has more than one else branch"))
        positives = [g for g in parsed if not isinstance(g, guards.Else)]
        if len(positives) < 2:
            continue
        static = _static_discriminator(positives)
        if static is None:
            add(
                Finding(
                    "R4",
                    "warning",
                    (node.id,),
                    "guard exclusivity cannot be decided statically; enforced at run time",
                )
            )
            continue
        ref, literals = static
        dupes = sorted({repr(v) for v in literals if literals.count(v) > 1})
        if dupes:
            add(
                Finding(
                    "R4",
                    "error",
                    (node.id,),
                    f"guards on {'.'.join(ref.path)} overlap for {', '.join(dupes)}",
                )
            )


def _payload_type(graph: ActivityGraph, end: str) -> tuple[str | None, bool]:
    """Type of tokens arriving at control node ``end`` and whether a join intervenes."""
    types: set[str | None] = set()
    grouped = False
    stack, seen = [end], set()
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        if isinstance(graph.nodes.get(cur), JoinNode):
            grouped = True
        for edge in graph.in_edges.get(cur, []):
            if graph.is_control(edge.source):
                stack.append(edge.source)
            elif edge.source in graph.pins:
                types.add(graph.pins[edge.source].type)
    if grouped or len(types) != 1:
        return None, grouped
    return next(iter(types)), grouped


def _check_r6(model: ProcessModel, graph: ActivityGraph, add) -> None:
    def check(expr_text: str, fields: set[str] | None, where: tuple[str, ...], what: str) -> None:
        try:
            expr = guards.parse_guard(expr_text)
        except guards.GuardSyntaxError:
            return
        for ref in guards.references(expr):
            if not ref.is_payload:
                continue
            if fields is None:
                add(Finding("R6", "error", where, f"{what} reads {'.'.join(ref.path)} but the token carries no payload"))
            elif len(ref.path) > 1 and ref.path[1] not in fields:
                add(Finding("R6", "error", where, f"{what} reads unknown payload field {ref.path[1]!r}"))

    for node in sorted(graph.activity.nodes, key=lambda n: n.id):
        if isinstance(node, DecisionNode):
            type_name, _ = _payload_type(graph, node.id)
            cls = model.data_class(type_name) if type_name else None
            fields = {f.name for f in cls.fields} if cls else None
            for edge in graph.out_edges.get(node.id, []):
                if edge.guard is not None:
                    check(edge.guard, fields, (edge.id,), "guard")
        elif isinstance(node, AcceptEventAction):
            signal = model.signal(node.signal)
            fields = set(signal.fields) if signal else set()
            if node.correlation is not None:
                check(node.correlation, fields, (node.id,), "correlation guard")
            for pin in node.output_pins:
                for edge in graph.out_edges.get(pin.id, []):
                    if edge.guard is not None:
                        check(edge.guard, fields, (edge.id,), "correlation guard")


def _ref_known(model: ProcessModel, activity: Activity, ref: guards.Ref) -> str | None:
    """Return an error message if a variable reference does not resolve."""
    if ref.is_payload:
        return None
    var = activity.variable(ref.path[0])
    if var is None:
        return f"unknown variable {ref.path[0]!r}"
    type_name = var.type
    for name in ref.path[1:]:
        cls = model.data_class(type_name)
        if cls is None:
            return f"{'.'.join(ref.path)}: {type_name} has no fields"
        type_name = cls.field_type(name)
        if type_name is None:
            return f"{'.'.join(ref.path)}: no field {name!r} on {cls.id}"
    return None


def resolve_type(model: ProcessModel, activity: Activity, path: str) -> str | None:
    ref = guards.Ref(tuple(path.split(".")))
    if _ref_known(model, activity, ref) is not None:
        return None
    type_name = activity.variable(ref.path[0]).type
    for name in ref.path[1:]:
        type_name = model.data_class(type_name).field_type(name)
    return type_name


def _check_structure(model: ProcessModel, graph: ActivityGraph, add) -> None:
    activity = graph.activity

    def err(ids, message):
        add(Finding("R5", "error", tuple(ids), message))

    initials = activity.nodes_of(InitialNode)
    in_params = activity.input_parameters()
    if len(initials) + len(in_params) != 1:
        err([activity.id], "activity needs exactly one entry: an initial node or one input parameter node")
    terminals = activity.nodes_of(ActivityFinalNode) + activity.output_parameters()
    terminals += [n for n in activity.nodes if isinstance(n, SendSignalAction) and n.end]
    if not terminals:
        err([activity.id], "activity has no final node, output parameter node or end signal action")

    for node in sorted(activity.nodes, key=lambda n: n.id):
        ins, outs = node.input_pins, node.output_pins
        if node.is_control:
            if node.pins:
                err([node.id], "control nodes carry no pins")
            n_in = len(graph.in_edges.get(node.id, []))
            n_out = len(graph.out_edges.get(node.id, []))
            splits = isinstance(node, (DecisionNode, ForkNode))
            want_in, want_out = ("1", ">=2") if splits else (">=2", "1")
            ok = (n_in == 1 and n_out >= 2) if splits else (n_in >= 2 and n_out == 1)
            if not ok:
                err([node.id], f"{node.kind} needs {want_in} incoming and {want_out} outgoing edges, has {n_in}/{n_out}")
            continue
        if isinstance(node, InitialNode):
            if ins or len(outs) != 1:
                err([node.id], "initial node needs exactly one output pin")
        elif isinstance(node, ActivityFinalNode):
            if outs or len(ins) != 1:
                err([node.id], "final node needs exactly one input pin")
        elif isinstance(node, ActivityParameterNode):
            want = "out" if node.direction == "in" else "in"
            if node.direction not in ("in", "out"):
                err([node.id], f"parameter direction must be in or out, not {node.direction!r}")
            elif len(node.pins) != 1 or node.pins[0].direction != want:
                err([node.id], f"{node.direction} parameter node needs exactly one {want} pin")
        elif isinstance(node, AcceptEventAction):
            if len(outs) != 1:
                err([node.id], "accept event action needs exactly one output pin")
            if len(ins) > 1:
                err([node.id], "accept event action takes at most one input pin")
            if node.interrupting:
                target = graph.nodes.get(node.interrupts)
                if ins:
                    err([node.id], "interrupting accept event action cannot have input pins")
                if target is not None and not isinstance(target, (CallBehaviorAction, ForEachNode)):
                    err([node.id], "only call actions and loops can be interrupted")
        else:
            if not ins:
                err([node.id], f"{node.kind} action needs at least one input pin")
            if isinstance(node, SendSignalAction) and node.end and outs:
                err([node.id], "end signal action has no output pins")

        for pin in node.pins:
            if pin.direction not in ("in", "out"):
                err([pin.id], f"pin direction must be in or out, not {pin.direction!r}")
            if pin.direction == "in" and not graph.in_edges.get(pin.id):
                err([pin.id], "input pin never receives a token")
            if pin.direction == "out" and not graph.out_edges.get(pin.id):
                add(Finding("R5", "warning", (pin.id,), "output pin has no outgoing edge"))

        if isinstance(node, CallBehaviorAction):
            if node.task not in TASK_KINDS:
                err([node.id], f"unknown task kind {node.task!r}")
            if node.duration < 0:
                err([node.id], "duration must be non-negative")
            if node.invokes and model.has_activity(node.invokes):
                callee = model.activity(node.invokes)
                if callee.input_parameters() and len(ins) != len(callee.input_parameters()):
                    err([node.id], f"call passes {len(ins)} inputs but {callee.id} takes {len(callee.input_parameters())}")
                if callee.output_parameters() and len(outs) != len(callee.output_parameters()):
                    err([node.id], f"call expects {len(outs)} outputs but {callee.id} yields {len(callee.output_parameters())}")
        elif isinstance(node, SendSignalAction):
            if node.duration < 0:
                err([node.id], "duration must be non-negative")
            if node.target and model.has_activity(node.target) and not model.activity(node.target).main:
                err([node.id], f"signal target {node.target} is not a MainProcess")
            signal = model.signal(node.signal)
            if signal is not None:
                for arg in node.arguments:
                    if arg.target not in signal.fields:
                        err([node.id], f"signal {signal.id} has no field {arg.target!r}")
        elif isinstance(node, ForEachNode):
            if model.has_activity(node.body):
                if len(model.activity(node.body).input_parameters()) != 1:
                    err([node.id], f"loop body {node.body} needs exactly one input parameter")
            col_type = resolve_type(model, activity, node.collection) if node.collection else None
            if col_type != "list":
                err([node.id], f"collection {node.collection!r} is not a list-typed variable or field")

        exprs = [a.expr for a in getattr(node, "assignments", ())] + [a.expr for a in getattr(node, "arguments", ())]
        for text in exprs:
            _check_expr_refs(model, activity, node.id, text, err)
        for a in getattr(node, "assignments", ()):
            root = a.target.split(".")[0]
            if root != "payload" and activity.variable(root) is None:
                err([node.id], f"assignment to unknown variable {root!r}")

    for edge in sorted(activity.edges, key=lambda e: e.id):
        if edge.source in graph.pins and graph.pins[edge.source].direction != "out":
            err([edge.id], f"edge leaves input pin {edge.source}")
        if edge.target in graph.pins and graph.pins[edge.target].direction != "in":
            err([edge.id], f"edge enters output pin {edge.target}")
        if edge.guard is not None:
            _check_expr_refs(model, activity, edge.id, edge.guard, err)
    for node in activity.nodes:
        if isinstance(node, AcceptEventAction) and node.correlation:
            _check_expr_refs(model, activity, node.id, node.correlation, err)

    for var in activity.variables:
        if var.type not in SCALAR_TYPES and model.data_class(var.type) is None:
            pass  # reported as a dangling reference

    _check_reachability(graph, err)


def _check_expr_refs(model, activity, owner_id, text, err) -> None:
    try:
        expr = guards.parse_guard(text)
    except guards.GuardSyntaxError as exc:
        err([owner_id], str(exc))
        return
    for ref in guards.references(expr):
        problem = _ref_known(model, activity, ref)
        if problem:
            err([owner_id], problem)


def _check_reachability(graph: ActivityGraph, err) -> None:
    entries = [n.id for n in graph.nodes.values() if isinstance(n, InitialNode)]
    entries += [n.id for n in graph.activity.input_parameters()]
    attached = defaultdict(list)
    for n in graph.nodes.values():
        if isinstance(n, AcceptEventAction) and n.interrupting:
            attached[n.interrupts].append(n.id)
    seen: set[str] = set()
    stack = list(entries)
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        node = graph.nodes.get(nid)
        if node is None:
            continue
        stack.extend(attached.get(nid, []))
        starts = [nid] if node.is_control else [p.id for p in node.output_pins]
        for start in starts:
            for edge in graph.out_edges.get(start, []):
                owner = graph.owner(edge.target)
                if owner is not None:
                    stack.append(owner.id)
    unreachable = sorted(set(graph.nodes) - seen)
    if entries and unreachable:
        err(unreachable, "nodes unreachable from the activity entry")
