"""Random valid models grown by restriction-preserving rewrites.

Generation starts from ``initial -> a1 -> final`` and repeatedly rewrites one
edge at a time:

* insert an action on the edge;
* split the edge with a decision/merge block whose guards are ``v = c`` over
  a finite domain plus ``else`` (at most one branch is left empty);
* split the edge with a fork/join block, one action per branch, only where
  no join lies upstream and no fork lies downstream through control nodes,
  so no stable-to-stable path can cross both.

Optional features add a sub-activity invoked by call actions and a second
main process that receives a signal sent from the main one.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..model.elements import (
    AcceptEventAction,
    Activity,
    ActivityFinalNode,
    ActivityParameterNode,
    Assignment,
    CallBehaviorAction,
    DecisionNode,
    Edge,
    ForkNode,
    InitialNode,
    JoinNode,
    MergeNode,
    Pin,
    ProcessModel,
    SendSignalAction,
    SignalType,
    VariableDecl,
)

MAX_ACTIONS_LIMIT = 8
MAX_CONTROL_LIMIT = 12


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    max_actions: int = MAX_ACTIONS_LIMIT
    max_control_nodes: int = MAX_CONTROL_LIMIT
    guard_domains: dict[str, tuple[int, ...]] = field(default_factory=lambda: {"x": (0, 1, 2), "y": (0, 1)})
    joins: bool = True
    subactivities: bool = True
    signals: bool = True

    def __post_init__(self) -> None:
        if self.max_actions < 1 or self.max_control_nodes < 0:
            raise ValueError("generator bounds must be positive")
        if not self.guard_domains or any(len(v) < 2 for v in self.guard_domains.values()):
            raise ValueError("every guard domain needs at least two values")


@dataclass
class GeneratedCase:
    model: ProcessModel
    inputs: dict
    seed: int


class _Graph:
    """Mutable single-activity graph used while rewriting."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.nodes: dict[str, tuple[str, dict]] = {}  # id -> (kind, attrs)
        self.edges: list[list] = []  # [id, source, target, guard]
        self._ids = {"a": 0, "d": 0, "f": 0, "e": 0}

    def fresh(self, prefix: str) -> str:
        self._ids[prefix] += 1
        return f"{prefix}{self._ids[prefix]}"

    def edge(self, source: str, target: str, guard: str | None = None) -> None:
        self.edges.append([self.fresh("e"), source, target, guard])

    def action(self, **attrs) -> str:
        aid = self.fresh("a")
        attrs.setdefault("duration", self.rng.randint(0, 3))
        self.nodes[aid] = ("action", attrs)
        return aid

    @property
    def n_actions(self) -> int:
        return sum(1 for k, _ in self.nodes.values() if k in ("action", "send"))

    @property
    def n_control(self) -> int:
        return sum(1 for k, _ in self.nodes.values() if k in ("decision", "merge", "fork", "join"))

    def kind(self, end: str) -> str:
        return self.nodes[end][0] if end in self.nodes else "pin"

    def _control_reach(self, start: str, forward: bool) -> set[str]:
        seen, stack = set(), [start]
        while stack:
            cur = stack.pop()
            if cur in seen or self.kind(cur) == "pin":
                continue
            seen.add(cur)
            for _, s, t, _ in self.edges:
                if forward and s == cur:
                    stack.append(t)
                elif not forward and t == cur:
                    stack.append(s)
        return seen

    def fork_allowed(self, e: list) -> bool:
        _, src, tgt, _ = e
        if self.kind(src) == "join" or any(self.kind(n) == "join" for n in self._control_reach(src, False)):
            return False
        return not any(self.kind(n) == "fork" for n in self._control_reach(tgt, True))

    # rewrites ---------------------------------------------------------------
    def insert_action(self, e: list, **attrs) -> str:
        aid = self.action(**attrs)
        tgt = e[2]
        e[2] = f"{aid}.in"
        self.edge(f"{aid}.out", tgt)
        return aid

    def split_decision(self, e: list, var: str, domain: tuple[int, ...], room: int) -> None:
        rng = self.rng
        picks = sorted(rng.sample(list(domain), rng.randint(1, min(len(domain) - 1, room))))
        branches = [f"{var} = {v}" for v in picks] + ["else"]
        if room >= len(branches) and rng.random() < 0.5:
            empty = None
        else:
            empty = rng.randrange(len(branches))
        d = self.fresh("d")
        m = "m" + d[1:]
        self.nodes[d] = ("decision", {})
        self.nodes[m] = ("merge", {})
        tgt = e[2]
        e[2] = d
        for i, guard in enumerate(branches):
            if i == empty:
                self.edge(d, m, guard)
            else:
                aid = self.action()
                self.edge(d, f"{aid}.in", guard)
                self.edge(f"{aid}.out", m)
        self.edge(m, tgt)

    def split_fork(self, e: list, width: int) -> None:
        f = self.fresh("f")
        j = "j" + f[1:]
        self.nodes[f] = ("fork", {})
        self.nodes[j] = ("join", {})
        tgt = e[2]
        e[2] = f
        for _ in range(width):
            aid = self.action()
            self.edge(f, f"{aid}.in")
            self.edge(f"{aid}.out", j)
        self.edge(j, tgt)


def _materialize(graph: _Graph, activity_id: str, name: str, main: bool, variables, head: tuple, tail: tuple) -> Activity:
    nodes = [*head, *tail]
    for nid, (kind, attrs) in sorted(graph.nodes.items()):
        if kind == "action":
            pins = (Pin(f"{nid}.in", "in"), Pin(f"{nid}.out", "out"))
            nodes.append(
                CallBehaviorAction(
                    id=nid,
                    name=f"Task {nid.upper()}",
                    pins=pins,
                    duration=attrs["duration"],
                    invokes=attrs.get("invokes"),
                    assignments=attrs.get("assignments", ()),
                )
            )
        elif kind == "send":
            pins = (Pin(f"{nid}.in", "in"), Pin(f"{nid}.out", "out"))
            nodes.append(
                SendSignalAction(id=nid, name=f"Send {nid.upper()}", pins=pins, duration=attrs["duration"],
                                 signal=attrs["signal"], target=attrs["target"])
            )
        else:
            cls = {"decision": DecisionNode, "merge": MergeNode, "fork": ForkNode, "join": JoinNode}[kind]
            nodes.append(cls(id=nid))
    edges = tuple(Edge(eid, s, t, g) for eid, s, t, g in graph.edges)
    return Activity(activity_id, name, main, tuple(nodes), edges, tuple(variables))


def generate_case(config: GeneratorConfig) -> GeneratedCase:
    rng = random.Random(config.seed)
    max_actions = min(config.max_actions, MAX_ACTIONS_LIMIT)
    max_control = min(config.max_control_nodes, MAX_CONTROL_LIMIT)
    graph = _Graph(rng)
    graph.action()
    graph.edge("init.out", "a1.in")
    graph.edge("a1.out", "fin.in")

    # the receiver (accept + handler) and the callee task share the action budget
    use_signals = config.signals and max_actions >= 4 and rng.random() < 0.3
    if use_signals:
        max_actions -= 2
    use_sub = config.subactivities and max_actions >= (3 if use_signals else 2) and rng.random() < 0.3
    if use_sub:
        max_actions -= 1
    use_joins = config.joins and rng.random() < 0.8

    if use_signals:
        sid = graph.insert_action(graph.edges[0], signal="Ping", target="recv")
        graph.nodes[sid] = ("send", graph.nodes[sid][1])

    domains = sorted(config.guard_domains.items())
    target = rng.randint(1, max_actions)
    for _ in range(60):
        room = target - graph.n_actions
        if room <= 0:
            break
        ops = ["insert"]
        if graph.n_control + 2 <= max_control:
            ops.append("decision")
            if use_joins and room >= 2:
                ops.append("fork")
        op = rng.choice(ops)
        edge = rng.choice(graph.edges)
        if op == "insert":
            graph.insert_action(edge)
        elif op == "decision":
            var, domain = rng.choice(domains)
            graph.split_decision(edge, var, domain, room)
        else:
            if not graph.fork_allowed(edge):
                continue
            graph.split_fork(edge, rng.randint(2, min(3, room)))
    calls = [nid for nid, (k, _) in sorted(graph.nodes.items()) if k == "action"]
    if use_sub and calls:
        for nid in rng.sample(calls, max(1, len(calls) // 3)):
            graph.nodes[nid][1]["invokes"] = "sub"
    assigns = [nid for nid, (k, a) in sorted(graph.nodes.items()) if k == "action" and "invokes" not in a]
    for nid in assigns:
        if rng.random() < 0.3:
            k = rng.randint(1, 3)
            graph.nodes[nid][1]["assignments"] = (Assignment("acc", f"acc + {k}"),)

    variables = [VariableDecl(name, "int") for name, _ in domains] + [VariableDecl("acc", "int")]
    main = _materialize(
        graph,
        "main",
        "Main Process",
        True,
        variables,
        (InitialNode("init", pins=(Pin("init.out", "out"),)),),
        (ActivityFinalNode("fin", pins=(Pin("fin.in", "in"),)),),
    )
    activities = [main]
    signals = []
    if use_sub:
        activities.append(
            Activity(
                "sub",
                "Sub Activity",
                False,
                (
                    ActivityParameterNode("sub_in", "input", pins=(Pin("sub_in.out", "out"),), direction="in"),
                    CallBehaviorAction("s1", "Sub Task", pins=(Pin("s1.in", "in"), Pin("s1.out", "out")),
                                       duration=rng.randint(0, 3)),
                    ActivityParameterNode("sub_out", "output", pins=(Pin("sub_out.in", "in"),), direction="out"),
                ),
                (Edge("se1", "sub_in.out", "s1.in"), Edge("se2", "s1.out", "sub_out.in")),
            )
        )
    if use_signals:
        signals.append(SignalType("Ping"))
        activities.append(
            Activity(
                "recv",
                "Receiver Process",
                True,
                (
                    InitialNode("r_init", pins=(Pin("r_init.out", "out"),)),
                    AcceptEventAction("r_wait", "Wait Ping", pins=(Pin("r_wait.in", "in"), Pin("r_wait.out", "out")),
                                      signal="Ping"),
                    CallBehaviorAction("r1", "Handle Ping", pins=(Pin("r1.in", "in"), Pin("r1.out", "out")),
                                       duration=rng.randint(0, 3)),
                    ActivityFinalNode("r_fin", pins=(Pin("r_fin.in", "in"),)),
                ),
                (
                    Edge("re1", "r_init.out", "r_wait.in"),
                    Edge("re2", "r_wait.out", "r1.in"),
                    Edge("re3", "r1.out", "r_fin.in"),
                ),
            )
        )
    model = ProcessModel(f"gen{config.seed}", tuple(activities), tuple(signals))
    bindings = {name: rng.choice(domain) for name, domain in domains}
    inputs = {"instances": [{"activity": "main", "bindings": bindings}]}
    if use_signals:
        inputs["instances"].append({"activity": "recv", "bindings": {}})
    return GeneratedCase(model, inputs, config.seed)


def generate_model(config: GeneratorConfig) -> ProcessModel:
    return generate_case(config).model
