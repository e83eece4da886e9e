"""Process-definition model: activities, nodes, pins, edges and declarations.

All elements are frozen dataclasses so a parsed model can be shared between
the compiler, both interpreters and the transformer without copying.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, Iterator

SCALAR_TYPES = ("int", "text", "bool", "list")

TASK_KINDS = ("plain", "service", "user", "manual")
PERFORMER_KINDS = ("position", "orgUnit", "resource")


@dataclass(frozen=True)
class Pin:
    id: str
    direction: str  # "in" | "out"
    type: str | None = None  # DataClass id; None means a control token


@dataclass(frozen=True)
class Assignment:
    target: str
    expr: str


@dataclass(frozen=True)
class Field:
    name: str
    type: str


@dataclass(frozen=True)
class DataClass:
    id: str
    fields: tuple[Field, ...] = ()

    def field_type(self, name: str) -> str | None:
        for f in self.fields:
            if f.name == name:
                return f.type
        return None


@dataclass(frozen=True)
class SignalType:
    id: str
    fields: tuple[str, ...] = ()


@dataclass(frozen=True)
class Performer:
    id: str
    name: str
    kind: str = "position"
    measures: tuple[str, ...] = ()


@dataclass(frozen=True)
class VariableDecl:
    name: str
    type: str


@dataclass(frozen=True)
class Node:
    kind: ClassVar[str] = "node"
    is_action: ClassVar[bool] = False
    is_control: ClassVar[bool] = False

    id: str
    name: str = ""
    pins: tuple[Pin, ...] = ()

    @property
    def label(self) -> str:
        return self.name or self.id

    @property
    def input_pins(self) -> tuple[Pin, ...]:
        return tuple(sorted((p for p in self.pins if p.direction == "in"), key=lambda p: p.id))

    @property
    def output_pins(self) -> tuple[Pin, ...]:
        return tuple(sorted((p for p in self.pins if p.direction == "out"), key=lambda p: p.id))


@dataclass(frozen=True)
class CallBehaviorAction(Node):
    kind: ClassVar[str] = "action"
    is_action: ClassVar[bool] = True

    invokes: str | None = None
    task: str = "plain"
    performer: str | None = None
    duration: int = 1
    assignments: tuple[Assignment, ...] = ()
    measures: tuple[str, ...] = ()
    attributes: tuple[tuple[str, str], ...] = ()  # opaque WebService bag


@dataclass(frozen=True)
class SendSignalAction(Node):
    kind: ClassVar[str] = "send"
    is_action: ClassVar[bool] = True

    signal: str = ""
    target: str | None = None
    end: bool = False
    duration: int = 1
    arguments: tuple[Assignment, ...] = ()
    assignments: tuple[Assignment, ...] = ()
    measures: tuple[str, ...] = ()


@dataclass(frozen=True)
class AcceptEventAction(Node):
    kind: ClassVar[str] = "accept"
    is_action: ClassVar[bool] = True

    signal: str = ""
    correlation: str | None = None
    interrupts: str | None = None
    assignments: tuple[Assignment, ...] = ()
    measures: tuple[str, ...] = ()

    @property
    def interrupting(self) -> bool:
        return self.interrupts is not None


@dataclass(frozen=True)
class ForEachNode(Node):
    kind: ClassVar[str] = "foreach"
    is_action: ClassVar[bool] = True

    collection: str = ""
    body: str = ""
    assignments: tuple[Assignment, ...] = ()
    measures: tuple[str, ...] = ()


@dataclass(frozen=True)
class InitialNode(Node):
    kind: ClassVar[str] = "initial"


@dataclass(frozen=True)
class ActivityFinalNode(Node):
    kind: ClassVar[str] = "final"


@dataclass(frozen=True)
class ActivityParameterNode(Node):
    kind: ClassVar[str] = "param"

    direction: str = "in"

    @property
    def pin(self) -> Pin:
        return self.pins[0]


@dataclass(frozen=True)
class DecisionNode(Node):
    kind: ClassVar[str] = "decision"
    is_control: ClassVar[bool] = True


@dataclass(frozen=True)
class MergeNode(Node):
    kind: ClassVar[str] = "merge"
    is_control: ClassVar[bool] = True


@dataclass(frozen=True)
class ForkNode(Node):
    kind: ClassVar[str] = "fork"
    is_control: ClassVar[bool] = True


@dataclass(frozen=True)
class JoinNode(Node):
    kind: ClassVar[str] = "join"
    is_control: ClassVar[bool] = True


NODE_TYPES: dict[str, type[Node]] = {
    cls.kind: cls
    for cls in (
        CallBehaviorAction,
        SendSignalAction,
        AcceptEventAction,
        ForEachNode,
        InitialNode,
        ActivityFinalNode,
        ActivityParameterNode,
        DecisionNode,
        MergeNode,
        ForkNode,
        JoinNode,
    )
}


@dataclass(frozen=True)
class Edge:
    id: str
    source: str
    target: str
    guard: str | None = None
    object: bool = False


@dataclass(frozen=True)
class Activity:
    id: str
    name: str = ""
    main: bool = False
    nodes: tuple[Node, ...] = ()
    edges: tuple[Edge, ...] = ()
    variables: tuple[VariableDecl, ...] = ()
    measures: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        return self.name or self.id

    def variable(self, name: str) -> VariableDecl | None:
        for v in self.variables:
            if v.name == name:
                return v
        return None

    def nodes_of(self, cls: type[Node]) -> list[Node]:
        return [n for n in self.nodes if isinstance(n, cls)]

    def input_parameters(self) -> list[ActivityParameterNode]:
        return sorted(
            (n for n in self.nodes if isinstance(n, ActivityParameterNode) and n.direction == "in"),
            key=lambda n: n.id,
        )

    def output_parameters(self) -> list[ActivityParameterNode]:
        return sorted(
            (n for n in self.nodes if isinstance(n, ActivityParameterNode) and n.direction == "out"),
            key=lambda n: n.id,
        )


@dataclass(frozen=True)
class ProcessModel:
    id: str = "model"
    activities: tuple[Activity, ...] = ()
    signals: tuple[SignalType, ...] = ()
    classes: tuple[DataClass, ...] = ()
    performers: tuple[Performer, ...] = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", _build_index(self))

    # lookups ---------------------------------------------------------------
    def activity(self, activity_id: str) -> Activity:
        return self._index["activity"][activity_id]

    def has_activity(self, activity_id: str) -> bool:
        return activity_id in self._index["activity"]

    def node(self, node_id: str) -> Node:
        return self._index["node"][node_id]

    def pin(self, pin_id: str) -> Pin:
        return self._index["pin"][pin_id]

    def pin_owner(self, pin_id: str) -> Node:
        return self._index["pin_owner"][pin_id]

    def owning_activity(self, element_id: str) -> Activity:
        return self._index["owner_activity"][element_id]

    def signal(self, signal_id: str) -> SignalType | None:
        return self._index["signal"].get(signal_id)

    def data_class(self, class_id: str) -> DataClass | None:
        return self._index["class"].get(class_id)

    def performer(self, performer_id: str) -> Performer | None:
        return self._index["performer"].get(performer_id)

    def element_exists(self, element_id: str) -> bool:
        return element_id in self._index["all"]

    def main_processes(self) -> list[Activity]:
        return sorted((a for a in self.activities if a.main), key=lambda a: a.id)

    def iter_nodes(self) -> Iterator[tuple[Activity, Node]]:
        for activity in self.activities:
            for node in activity.nodes:
                yield activity, node


def _build_index(model: ProcessModel) -> dict:
    index: dict = {
        "activity": {},
        "node": {},
        "pin": {},
        "pin_owner": {},
        "owner_activity": {},
        "signal": {s.id: s for s in model.signals},
        "class": {c.id: c for c in model.classes},
        "performer": {p.id: p for p in model.performers},
        "all": set(),
    }
    index["all"].update(index["signal"], index["class"], index["performer"])
    for activity in model.activities:
        index["activity"][activity.id] = activity
        index["all"].add(activity.id)
        for node in activity.nodes:
            index["node"][node.id] = node
            index["owner_activity"][node.id] = activity
            index["all"].add(node.id)
            for pin in node.pins:
                index["pin"][pin.id] = pin
                index["pin_owner"][pin.id] = node
                index["owner_activity"][pin.id] = activity
                index["all"].add(pin.id)
        for edge in activity.edges:
            index["owner_activity"][edge.id] = activity
            index["all"].add(edge.id)
    return index


def variable_ref(activity: Activity, name: str) -> str:
    """Model-wide identifier of an activity-scoped variable."""
    return f"{activity.id}.{name}"


def assignment_ref(node: Node, position: int, group: str = "assign") -> str:
    return f"{node.id}.{group}{position}"


def default_value(type_name: str, model: ProcessModel):
    if type_name == "int":
        return 0
    if type_name == "text":
        return ""
    if type_name == "bool":
        return False
    if type_name == "list":
        return []
    cls = model.data_class(type_name)
    if cls is None:
        return None
    return {f.name: default_value(f.type, model) for f in cls.fields}


def value_conforms(value, type_name: str | None, model: ProcessModel) -> bool:
    if type_name is None:
        return True
    if type_name == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if type_name == "text":
        return isinstance(value, str)
    if type_name == "bool":
        return isinstance(value, bool)
    if type_name == "list":
        return isinstance(value, list)
    cls = model.data_class(type_name)
    if cls is None or not isinstance(value, dict):
        return False
    return all(f.name in value and value_conforms(value[f.name], f.type, model) for f in cls.fields)
