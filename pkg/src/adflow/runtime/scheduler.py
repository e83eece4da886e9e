"""Clock, tie-break order, action semantics and signal bus shared by both interpreters.

Subclasses decide only how tokens travel between stable places
(:meth:`Scheduler.move_tokens`) and when a consumer's inputs are complete
(:meth:`Scheduler.select_inputs` / :meth:`Scheduler.seize`).

A tick runs passes over the live instances in creation order until nothing
changes. Per instance a pass does: due completions (ascending node id), token
movement, then consumer starts (ascending node id). Once quiet, queued signals
are delivered; any delivery re-enters the pass loop at the same tick. The
clock then jumps to the next due completion or scheduled external signal.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Iterable

from ..model import guards
from ..model.elements import (
    AcceptEventAction,
    Activity,
    ActivityFinalNode,
    ActivityParameterNode,
    CallBehaviorAction,
    ForEachNode,
    InitialNode,
    Node,
    ProcessModel,
    SendSignalAction,
    default_value,
    value_conforms,
)
from .events import Event, format_trace

DEFAULT_DEPTH_LIMIT = 64
DEFAULT_MAX_TICKS = 10_000

EXIT_CODES = {"completed": 0, "deadlocked": 2, "failed": 3, "budget": 4}


class RunError(RuntimeError):
    """A run-time failure (guard conflict, bad collection, recursion depth...)."""

    def __init__(self, message: str, instance: "Instance | None" = None):
        super().__init__(message)
        self.instance = instance


class GuardConflict(RunError):
    pass


class RecursionLimitExceeded(RunError):
    pass


class InputError(ValueError):
    """Missing or ill-typed parameter/variable binding."""


class BudgetExhausted(RuntimeError):
    def __init__(self, result: "RunResult"):
        super().__init__(f"tick budget exhausted at tick {result.clock}")
        self.result = result


@dataclass
class Token:
    id: int
    payload: Any
    born_at: int
    location: str
    group_id: int | None = None
    origin: str | None = None


@dataclass(frozen=True)
class ExternalSignal:
    tick: int
    signal: str
    payload: dict
    target: str | None = None


@dataclass(frozen=True)
class Message:
    seq: int
    signal: str
    payload: Any
    sender: str
    target: str | None


@dataclass
class Activation:
    node: Node
    start: int
    units: list[list[Token]]
    payload: Any
    due: int | None = None
    child: "Instance | None" = None
    collection: list | None = None
    index: int = 0
    results: list | None = None


class Instance:
    def __init__(self, number: int, activity: Activity, variables: dict, parent, depth: int):
        self.number = number
        self.activity = activity
        self.variables = variables
        self.parent: tuple[Instance, str] | None = parent
        self.depth = depth
        self.places: dict[str, list[Token]] = {}
        self.active: dict[str, Activation] = {}
        self.outputs: dict[str, Any] = {}
        self.status = "running"
        self.vm: Scheduler | None = None

    @property
    def id(self) -> str:
        return f"p{self.number}"

    def tokens(self) -> list[Token]:
        return [t for key in sorted(self.places) for t in self.places[key]]

    def __repr__(self) -> str:
        return f"Instance({self.id}, {self.activity.id}, {self.status})"


@dataclass
class RunResult:
    status: str
    events: list[Event]
    diagnostics: list[str]
    undeliverable: int
    clock: int
    instances: list[Instance] = field(default_factory=list, repr=False)

    @property
    def trace(self) -> str:
        return format_trace(self.events)

    @property
    def exit_code(self) -> int:
        return EXIT_CODES.get(self.status, 3)


def unit_payload(tokens: list[Token]) -> Any:
    """Payload an action sees for one input: a lone token's payload, or a join group's."""
    if len(tokens) == 1 and tokens[0].group_id is None:
        return tokens[0].payload
    carried = {(t.origin or t.location): t.payload for t in tokens if t.payload is not None}
    if not carried:
        return None
    if len(carried) == 1:
        return next(iter(carried.values()))
    return carried


def combine_inputs(per_pin: list[tuple[str, Any]]) -> Any:
    carried = [(pin, value) for pin, value in per_pin if value is not None]
    if not carried:
        return None
    if len(carried) == 1:
        return carried[0][1]
    return dict(carried)


class SignalBus:
    """Per-signal FIFO queues plus the registry of waiting accept actions."""

    def __init__(self) -> None:
        self.queues: dict[str, list[Message]] = {}
        self.waiting: list[tuple[Instance, AcceptEventAction]] = []
        self._seq = 0
        self.delivered = 0

    def enqueue(self, signal: str, payload: Any, sender: str, target: str | None) -> Message:
        self._seq += 1
        msg = Message(self._seq, signal, payload, sender, target)
        self.queues.setdefault(signal, []).append(msg)
        return msg

    def register(self, instance: Instance, node: AcceptEventAction) -> None:
        if not any(i is instance and n.id == node.id for i, n in self.waiting):
            self.waiting.append((instance, node))

    def unregister(self, instance: Instance, node_id: str) -> None:
        self.waiting = [(i, n) for i, n in self.waiting if not (i is instance and n.id == node_id)]

    def unregister_all(self, instance: Instance) -> None:
        self.waiting = [(i, n) for i, n in self.waiting if i is not instance]

    @property
    def undeliverable(self) -> int:
        return sum(len(q) for q in self.queues.values())

    def candidates(self, msg: Message) -> list[tuple[Instance, AcceptEventAction]]:
        found = [
            (i, n)
            for i, n in self.waiting
            if n.signal == msg.signal
            and i.status == "running"
            and (msg.target is None or i.activity.id == msg.target)
        ]
        return sorted(found, key=lambda pair: (pair[0].number, pair[1].id))

    def deliver(self, accepts, receive) -> bool:
        """Offer every queued signal once; ``accepts(inst, node, msg)`` is the guard."""
        delivered = False
        for signal in sorted(self.queues):
            keep = []
            for msg in self.queues[signal]:
                match = next(((i, n) for i, n in self.candidates(msg) if accepts(i, n, msg)), None)
                if match is None:
                    keep.append(msg)
                    continue
                self.unregister(match[0], match[1].id)
                self.delivered += 1
                delivered = True
                receive(match[0], match[1], msg)
            self.queues[signal] = keep
        return delivered


def send_signal(bus: SignalBus, sender: str, signal: str, payload: Any, target: str | None = None) -> Message:
    return bus.enqueue(signal, payload, sender, target)


def deliver_signals(scheduler: "Scheduler") -> list[Event]:
    mark = len(scheduler.log)
    scheduler.bus.deliver(scheduler.correlates, scheduler.receive)
    return scheduler.log[mark:]


class Scheduler:
    engine = "base"
    pass_limit = 10_000

    def __init__(
        self,
        model: ProcessModel,
        max_ticks: int = DEFAULT_MAX_TICKS,
        depth_limit: int = DEFAULT_DEPTH_LIMIT,
        signals: Iterable[ExternalSignal] = (),
    ):
        if max_ticks <= 0:
            raise ValueError("max_ticks must be positive")
        self.model = model
        self.max_ticks = max_ticks
        self.depth_limit = depth_limit
        self.clock = 0
        self.log: list[Event] = []
        self.instances: list[Instance] = []
        self.roots: list[Instance] = []
        self.bus = SignalBus()
        self.status = "running"
        self.diagnostics: list[str] = []
        self._token_seq = 0
        self._external = sorted(signals, key=lambda s: s.tick)
        self._external_i = 0
        self._consumers: dict[str, list[Node]] = {}
        self._interrupters: dict[tuple[str, str], list[AcceptEventAction]] = {}
        self._correlation: dict[str, guards.Expr] = {}
        self._out_edge: dict[str, Any] = {}
        for activity in model.activities:
            self._consumers[activity.id] = sorted(
                (n for n in activity.nodes if n.input_pins and not getattr(n, "interrupting", False)),
                key=lambda n: n.id,
            )
            for node in activity.nodes:
                if isinstance(node, AcceptEventAction) and node.interrupting:
                    self._interrupters.setdefault((activity.id, node.interrupts), []).append(node)
            for edge in activity.edges:
                self._out_edge[edge.source] = edge

    # hooks ---------------------------------------------------------------
    def move_tokens(self, inst: Instance) -> bool:
        return False

    def select_inputs(self, inst: Instance, node: Node):
        raise NotImplementedError

    def seize(self, inst: Instance, node: Node, selection) -> list[list[Token]]:
        raise NotImplementedError

    def diagnose(self) -> list[str]:
        notes = []
        for inst in self.instances:
            if inst.status != "running":
                continue
            for token in inst.tokens():
                notes.append(f"{inst.id}: token t{token.id} waits at {token.location}")
            for nid, act in sorted(inst.active.items()):
                if isinstance(act.node, AcceptEventAction):
                    notes.append(f"{inst.id}: {nid} waits for signal {act.node.signal}")
        return notes

    # bookkeeping -----------------------------------------------------------
    def emit(self, kind: str, subject: str, details: dict | None = None) -> Event:
        event = Event(self.clock, len(self.log) + 1, kind, subject, details or {})
        self.log.append(event)
        return event

    def new_token(self, inst: Instance, place: str, payload: Any) -> Token:
        self._token_seq += 1
        token = Token(self._token_seq, copy.deepcopy(payload), self.clock, place)
        inst.places.setdefault(place, []).append(token)
        return token

    def take(self, inst: Instance, token: Token) -> None:
        inst.places[token.location].remove(token)

    # instances -------------------------------------------------------------
    def start(self, activity_id: str, bindings: dict | None = None) -> Instance:
        if not self.model.has_activity(activity_id):
            raise InputError(f"unknown activity {activity_id!r}")
        activity = self.model.activity(activity_id)
        params = activity.input_parameters()
        values: dict[str, Any] = {}
        variables: dict[str, Any] = {}
        for key, value in (bindings or {}).items():
            param = next((p for p in params if key in (p.id, p.name)), None)
            if param is not None:
                values[param.id] = value
            elif activity.variable(key) is not None:
                variables[key] = value
            else:
                raise InputError(f"{activity_id}: unknown binding {key!r}")
        for param in params:
            if param.id not in values:
                raise InputError(f"{activity_id}: missing binding for parameter {param.label!r}")
            if not value_conforms(values[param.id], param.pin.type, self.model):
                raise InputError(f"{activity_id}: parameter {param.label!r} expects {param.pin.type}")
        for name, value in variables.items():
            decl = activity.variable(name)
            if not value_conforms(value, decl.type, self.model):
                raise InputError(f"{activity_id}: variable {name!r} expects {decl.type}")
        inst = self._spawn(activity, [values[p.id] for p in params], None, 0, variables)
        self.roots.append(inst)
        return inst

    def _spawn(self, activity: Activity, param_values: list, parent, depth: int, variables=None) -> Instance:
        store = {v.name: default_value(v.type, self.model) for v in activity.variables}
        store.update(copy.deepcopy(variables or {}))
        inst = Instance(len(self.instances) + 1, activity, store, parent, depth)
        inst.vm = self
        self.instances.append(inst)
        self.emit(
            "instanceStart",
            inst.id,
            {"activity": activity.id, "parent": f"{parent[0].id}:{parent[1]}" if parent else None},
        )
        for node in sorted(activity.nodes, key=lambda n: n.id):
            if isinstance(node, InitialNode):
                self.new_token(inst, node.output_pins[0].id, None)
        for param, value in zip(activity.input_parameters(), param_values):
            self.new_token(inst, param.pin.id, value)
        for node in sorted(activity.nodes, key=lambda n: n.id):
            if isinstance(node, AcceptEventAction) and not node.input_pins and not node.interrupting:
                self._begin_accept(inst, node)
        return inst

    def _end_instance(self, inst: Instance, status: str, reason: str | None = None) -> None:
        if inst.status != "running":
            return
        inst.status = status
        for token in inst.tokens():
            self.emit("tokenMove", f"{inst.id}:t{token.id}", {"discarded": True, "from": token.location})
        inst.places.clear()
        for nid in sorted(inst.active):
            act = inst.active.pop(nid)
            if act.child is not None:
                self._end_instance(act.child, "aborted")
            self.emit("actionEnd", f"{inst.id}:{nid}", {"aborted": True})
        self.bus.unregister_all(inst)
        details = {"status": status}
        if reason:
            details["reason"] = reason
        self.emit("instanceEnd", inst.id, details)
        if status == "completed" and inst.parent is not None:
            self._child_done(inst)
        if all(r.status != "running" for r in self.roots) and self.status == "running":
            self.status = "completed" if all(r.status == "completed" for r in self.roots) else "failed"

    def _child_done(self, child: Instance) -> None:
        parent, nid = child.parent
        act = parent.active.get(nid)
        if act is None or act.child is not child:
            return
        act.child = None
        if isinstance(act.node, ForEachNode):
            self._next_iteration(parent, act)
            return
        callee = child.activity
        if callee.output_parameters():
            act.results = [child.outputs.get(p.id) for p in callee.output_parameters()]
        act.due = self.clock

    # signals ---------------------------------------------------------------
    def correlation_guard(self, node: AcceptEventAction) -> guards.Expr:
        if node.id not in self._correlation:
            parts = []
            if node.correlation:
                parts.append(guards.parse_guard(node.correlation))
            for pin in node.output_pins:
                edge = self._out_edge.get(pin.id)
                if edge is not None and edge.guard:
                    parts.append(guards.parse_guard(edge.guard))
            self._correlation[node.id] = guards.conjoin(parts)
        return self._correlation[node.id]

    def correlates(self, inst: Instance, node: AcceptEventAction, msg: Message) -> bool:
        try:
            return guards.holds(self.correlation_guard(node), inst.variables, msg.payload)
        except guards.GuardEvalError:
            return False

    def _begin_accept(self, inst: Instance, node: AcceptEventAction) -> None:
        inst.active[node.id] = Activation(node, self.clock, [], None)
        self.emit("actionStart", f"{inst.id}:{node.id}", {"tokens": []})
        self.bus.register(inst, node)

    def receive(self, inst: Instance, node: AcceptEventAction, msg: Message) -> None:
        subject = f"{inst.id}:{node.id}"
        if node.interrupting:
            self.emit("actionStart", subject, {"tokens": []})
            victim = inst.active.pop(node.interrupts, None)
            if victim is not None:
                self._drop_interrupters(inst, node.interrupts)
                if victim.child is not None:
                    self._end_instance(victim.child, "aborted")
                self.emit("actionEnd", f"{inst.id}:{node.interrupts}", {"interrupted": True})
        else:
            inst.active.pop(node.id, None)
        self.emit("signalReceive", subject, {"payload": msg.payload, "sender": msg.sender, "signal": msg.signal})
        self.emit("actionEnd", subject)
        out = self._assign(inst, node, msg.payload)
        for pin in node.output_pins:
            self.new_token(inst, pin.id, out)
        if not node.input_pins and not node.interrupting and inst.status == "running":
            self._begin_accept(inst, node)

    def _arm_interrupters(self, inst: Instance, node_id: str) -> None:
        for accept in self._interrupters.get((inst.activity.id, node_id), []):
            self.bus.register(inst, accept)

    def _drop_interrupters(self, inst: Instance, node_id: str) -> None:
        for accept in self._interrupters.get((inst.activity.id, node_id), []):
            self.bus.unregister(inst, accept.id)

    def _inject_external(self) -> None:
        while self._external_i < len(self._external) and self._external[self._external_i].tick <= self.clock:
            sig = self._external[self._external_i]
            self._external_i += 1
            self.bus.enqueue(sig.signal, copy.deepcopy(sig.payload), "env", sig.target)

    # actions ---------------------------------------------------------------
    def _eval(self, inst: Instance, text: str, payload: Any) -> Any:
        try:
            return guards.evaluate(guards.parse_guard(text), inst.variables, payload)
        except guards.GuardEvalError as exc:
            raise RunError(f"{inst.id}: {exc}", inst) from exc

    def _assign(self, inst: Instance, node: Node, payload: Any) -> Any:
        out = copy.deepcopy(payload)
        for a in getattr(node, "assignments", ()):
            value = self._eval(inst, a.expr, out)
            path = a.target.split(".")
            if path[0] == "payload":
                if len(path) == 1:
                    out = copy.deepcopy(value)
                else:
                    if not isinstance(out, dict):
                        raise RunError(f"{inst.id}:{node.id}: token carries no record payload", inst)
                    _set_path(out, path[1:], value, inst, node)
            else:
                if len(path) == 1:
                    inst.variables[path[0]] = copy.deepcopy(value)
                else:
                    _set_path(inst.variables[path[0]], path[1:], value, inst, node)
            self.emit("assignment", f"{inst.id}:{node.id}", {"target": a.target, "value": value})
        return out

    def _start(self, inst: Instance, node: Node, units: list[list[Token]]) -> None:
        payloads = [(pin.id, unit_payload(u)) for pin, u in zip(node.input_pins, units)]
        act = Activation(node, self.clock, units, combine_inputs(payloads))
        inst.active[node.id] = act
        self.emit("actionStart", f"{inst.id}:{node.id}", {"tokens": [t.id for u in units for t in u]})
        if isinstance(node, AcceptEventAction):
            self.bus.register(inst, node)
            return
        self._arm_interrupters(inst, node.id)
        if isinstance(node, CallBehaviorAction) and node.invokes and self.model.has_activity(node.invokes):
            self._invoke(inst, act, self.model.activity(node.invokes), [v for _, v in payloads])
        elif isinstance(node, ForEachNode):
            self._run_foreach(inst, act)
        else:
            act.due = self.clock + node.duration

    def _invoke(self, inst: Instance, act: Activation, callee: Activity, args: list) -> Instance:
        if inst.depth + 1 > self.depth_limit:
            raise RecursionLimitExceeded(
                f"{inst.id}:{act.node.id}: recursion depth exceeds limit {self.depth_limit}", inst
            )
        n_params = len(callee.input_parameters())
        args = (list(args) + [None] * n_params)[:n_params]
        act.child = self._spawn(callee, args, (inst, act.node.id), inst.depth + 1)
        return act.child

    def _run_foreach(self, inst: Instance, act: Activation) -> None:
        node: ForEachNode = act.node
        try:
            value = guards.evaluate(guards.Ref(tuple(node.collection.split("."))), inst.variables)
        except guards.GuardEvalError as exc:
            raise RunError(f"{inst.id}:{node.id}: {exc}", inst) from exc
        if not isinstance(value, list):
            raise RunError(f"{inst.id}:{node.id}: collection {node.collection} is not a list", inst)
        act.collection = list(value)
        act.index = 0
        self._next_iteration(inst, act)

    def _next_iteration(self, inst: Instance, act: Activation) -> None:
        if act.index < len(act.collection):
            element = act.collection[act.index]
            act.index += 1
            self._invoke(inst, act, self.model.activity(act.node.body), [element])
        else:
            act.due = self.clock

    def _complete(self, inst: Instance, act: Activation) -> None:
        node = act.node
        del inst.active[node.id]
        self._drop_interrupters(inst, node.id)
        subject = f"{inst.id}:{node.id}"
        if isinstance(node, SendSignalAction):
            payload = {a.target: self._eval(inst, a.expr, act.payload) for a in node.arguments}
            self.emit("signalSend", subject, {"payload": payload, "signal": node.signal, "target": node.target})
            self.bus.enqueue(node.signal, payload, inst.id, node.target)
        self.emit("actionEnd", subject)
        out = self._assign(inst, node, act.payload)
        if isinstance(node, SendSignalAction) and node.end:
            self._end_instance(inst, "completed")
            return
        for k, pin in enumerate(node.output_pins):
            value = act.results[k] if act.results is not None and k < len(act.results) else out
            self.new_token(inst, pin.id, value)

    # passes ----------------------------------------------------------------
    def _complete_due(self, inst: Instance) -> bool:
        due = sorted(nid for nid, a in inst.active.items() if a.due is not None and a.due <= self.clock)
        for nid in due:
            if inst.status != "running":
                break
            act = inst.active.get(nid)
            if act is not None and act.due is not None and act.due <= self.clock:
                self._complete(inst, act)
        return bool(due)

    def _start_consumers(self, inst: Instance) -> bool:
        progress = False
        for node in self._consumers[inst.activity.id]:
            if inst.status != "running":
                break
            if node.id in inst.active:
                continue
            if isinstance(node, ActivityParameterNode) and node.id in inst.outputs:
                continue
            selection = self.select_inputs(inst, node)
            if selection is None:
                continue
            units = self.seize(inst, node, selection)
            progress = True
            if isinstance(node, ActivityFinalNode):
                self._end_instance(inst, "completed")
            elif isinstance(node, ActivityParameterNode):
                inst.outputs[node.id] = unit_payload(units[0])
                if all(p.id in inst.outputs for p in inst.activity.output_parameters()):
                    self._end_instance(inst, "completed")
            else:
                self._start(inst, node, units)
        return progress

    def _fixpoint(self) -> None:
        for _ in range(self.pass_limit):
            progress = False
            for inst in list(self.instances):
                if inst.status != "running":
                    continue
                progress |= self._complete_due(inst)
                if inst.status == "running":
                    progress |= self.move_tokens(inst)
                if inst.status == "running":
                    progress |= self._start_consumers(inst)
                if self.status != "running":
                    return
            if not progress:
                return
        self.status = "budget"
        self.diagnostics.append(f"no quiescence after {self.pass_limit} passes at tick {self.clock}")

    def _advance(self) -> None:
        pending = [
            a.due for inst in self.instances if inst.status == "running" for a in inst.active.values() if a.due is not None
        ]
        if self._external_i < len(self._external):
            pending.append(self._external[self._external_i].tick)
        if not pending:
            self.status = "deadlocked"
            self.diagnostics.extend(self.diagnose() or ["no progress possible"])
            return
        nxt = max(min(pending), self.clock + 1)
        if nxt > self.max_ticks:
            self.status = "budget"
            self.diagnostics.append(f"tick budget {self.max_ticks} exhausted")
            return
        self.clock = nxt

    def _fail(self, exc: RunError) -> None:
        self.status = "failed"
        self.diagnostics.append(str(exc))
        inst = exc.instance
        if inst is not None and inst.status == "running":
            inst.status = "failed"
            self.emit("instanceEnd", inst.id, {"reason": str(exc), "status": "failed"})

    def step(self) -> list[Event]:
        """Run one tick to quiescence, deliver signals, then advance the clock."""
        if self.status != "running":
            raise RunError(f"step on a run that is {self.status}")
        mark = len(self.log)
        try:
            self._inject_external()
            while self.status == "running":
                self._fixpoint()
                if self.status != "running":
                    break
                if not self.bus.deliver(self.correlates, self.receive):
                    break
            if self.status == "running":
                self._advance()
        except RunError as exc:
            self._fail(exc)
        return self.log[mark:]

    def run(self) -> RunResult:
        if not self.roots and self.status == "running":
            self.status = "completed"
        while self.status == "running":
            self.step()
        return self.result()

    def result(self) -> RunResult:
        return RunResult(
            status=self.status,
            events=list(self.log),
            diagnostics=list(self.diagnostics),
            undeliverable=self.bus.undeliverable,
            clock=self.clock,
            instances=list(self.instances),
        )


def _set_path(target: Any, path: list[str], value: Any, inst: Instance, node: Node) -> None:
    for name in path[:-1]:
        if not isinstance(target, dict) or name not in target:
            raise RunError(f"{inst.id}:{node.id}: cannot assign through {name!r}", inst)
        target = target[name]
    if not isinstance(target, dict):
        raise RunError(f"{inst.id}:{node.id}: cannot assign field {path[-1]!r} of a non-record", inst)
    target[path[-1]] = copy.deepcopy(value)


def start_instances(vm: Scheduler, model: ProcessModel, inputs: dict | None) -> list[Instance]:
    """Start the instances listed in an inputs document (default: one per main process)."""
    specs = (inputs or {}).get("instances")
    if specs is None:
        specs = [{"activity": a.id, "bindings": {}} for a in model.main_processes()]
    started = []
    for spec in specs:
        if "activity" not in spec:
            raise InputError("each instance entry needs an 'activity'")
        started.append(vm.start(spec["activity"], spec.get("bindings", {})))
    return started


def parse_signals(raw: list | None) -> list[ExternalSignal]:
    signals = []
    for item in raw or []:
        try:
            signals.append(ExternalSignal(int(item["tick"]), item["signal"], item.get("payload", {}), item.get("target")))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad signal entry {item!r}") from exc
    return signals
