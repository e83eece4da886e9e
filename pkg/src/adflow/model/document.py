"""Reading and writing ``.flow`` model documents."""

from __future__ import annotations

import dataclasses
from typing import Any, Iterable

from . import treetext
from .elements import (
    NODE_TYPES,
    Activity,
    AcceptEventAction,
    Assignment,
    CallBehaviorAction,
    DataClass,
    Edge,
    Field,
    ForEachNode,
    Performer,
    Pin,
    ProcessModel,
    SCALAR_TYPES,
    SendSignalAction,
    SignalType,
    VariableDecl,
)
from .treetext import Block


class ModelError(ValueError):
    """Base class for document errors."""


class ModelSyntaxError(ModelError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}" + (f", column {column}" if column else "") + ": " if line else ""
        super().__init__(where + message)


class UnresolvedReference(ModelError):
    def __init__(self, ref: str, context: str):
        self.ref = ref
        self.context = context
        super().__init__(f"unresolved reference {ref!r} in {context}")


class DuplicateIdentifier(ModelError):
    def __init__(self, ident: str):
        self.ident = ident
        super().__init__(f"duplicate identifier {ident!r}")


# Block <-> dataclass mapping ---------------------------------------------------

# tag used for blocks nested under a given field name
_NESTED: dict[str, tuple[str, type]] = {
    "pins": ("pin", Pin),
    "assignments": ("assign", Assignment),
    "arguments": ("assign", Assignment),
    "variables": ("variable", VariableDecl),
    "edges": ("edge", Edge),
    "activities": ("activity", Activity),
    "signals": ("signal", SignalType),
    "classes": ("class", DataClass),
    "performers": ("performer", Performer),
}
_STRING_LISTS = {"measures"}
# list fields whose order carries meaning and must survive canonicalisation
_ORDERED = {"assignments", "arguments", "measures", "fields"}


def _data_fields(cls: type) -> list[dataclasses.Field]:
    return [f for f in dataclasses.fields(cls) if f.init and not f.name.startswith("_")]


def _default_of(f: dataclasses.Field) -> Any:
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:  # type: ignore[misc]
        return f.default_factory()  # type: ignore[misc]
    return dataclasses.MISSING


def _to_block(obj: Any, tag: str) -> Block:
    block = Block(tag)
    for f in _data_fields(type(obj)):
        value = getattr(obj, f.name)
        default = _default_of(f)
        if default is not dataclasses.MISSING and value == default:
            continue
        block.entries[f.name] = _encode(f.name, value, obj)
    return block


def _encode(name: str, value: Any, owner: Any) -> Any:
    if name == "nodes":
        return [_to_block(n, n.kind) for n in value]
    if name == "attributes":
        return [Block("attr", {"key": k, "value": v}) for k, v in value]
    if name == "fields" and isinstance(owner, DataClass):
        return [_to_block(f, "field") for f in value]
    if name in _NESTED:
        tag, _ = _NESTED[name]
        return [_to_block(item, tag) for item in value]
    if isinstance(value, tuple):
        return list(value)
    return value


def _from_block(block: Block, cls: type) -> Any:
    known = {f.name: f for f in _data_fields(cls)}
    for key in block.entries:
        if key not in known:
            raise ModelSyntaxError(f"unknown key {key!r} in {block.tag} block", block.line)
    kwargs: dict[str, Any] = {}
    for name, f in known.items():
        if name not in block.entries:
            if _default_of(f) is dataclasses.MISSING:
                raise ModelSyntaxError(f"{block.tag} block is missing required key {name!r}", block.line)
            continue
        kwargs[name] = _decode(name, block.entries[name], cls, f, block)
    return cls(**kwargs)


def _decode(name: str, raw: Any, cls: type, f: dataclasses.Field, block: Block) -> Any:
    def need_list() -> list:
        if not isinstance(raw, list):
            raise ModelSyntaxError(f"{block.tag}.{name} must be a list", block.line)
        return raw

    if name == "nodes":
        nodes = []
        for item in need_list():
            if not isinstance(item, Block) or item.tag not in NODE_TYPES:
                raise ModelSyntaxError(
                    f"expected a node block ({', '.join(sorted(NODE_TYPES))})", getattr(item, "line", block.line)
                )
            nodes.append(_from_block(item, NODE_TYPES[item.tag]))
        return tuple(nodes)
    if name == "attributes":
        pairs = []
        for item in need_list():
            if not isinstance(item, Block) or item.tag != "attr":
                raise ModelSyntaxError("expected an attr block", block.line)
            key, value = item.get("key"), item.get("value")
            if not isinstance(key, str) or not isinstance(value, str):
                raise ModelSyntaxError("attr needs string key and value", item.line)
            pairs.append((key, value))
        return tuple(pairs)
    if name == "fields" and cls is DataClass:
        return tuple(_nested(item, "field", Field, block) for item in need_list())
    if name in _NESTED and not (name == "fields"):
        tag, item_cls = _NESTED[name]
        return tuple(_nested(item, tag, item_cls, block) for item in need_list())
    if name in _STRING_LISTS or name == "fields":
        items = need_list()
        if not all(isinstance(i, str) for i in items):
            raise ModelSyntaxError(f"{block.tag}.{name} must be a list of strings", block.line)
        return tuple(items)
    _check_scalar(raw, str(f.type), f"{block.tag}.{name}", block.line)
    return raw


def _nested(item: Any, tag: str, cls: type, parent: Block) -> Any:
    if not isinstance(item, Block) or item.tag != tag:
        raise ModelSyntaxError(f"expected a {tag} block", getattr(item, "line", parent.line))
    return _from_block(item, cls)


def _check_scalar(value: Any, annotation: str, where: str, line: int) -> None:
    allowed = [part.strip() for part in annotation.split("|")]
    checks = {
        "str": lambda v: isinstance(v, str),
        "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
        "bool": lambda v: isinstance(v, bool),
        "None": lambda v: v is None,
    }
    if not any(checks[a](value) for a in allowed if a in checks):
        raise ModelSyntaxError(f"{where}: expected {annotation}, got {value!r}", line)


# Canonical form --------------------------------------------------------------


def _sort_key(item: Any) -> Any:
    for attr in ("id", "name", "key"):
        if hasattr(item, attr):
            return getattr(item, attr)
    return item


def canonicalize(obj: Any) -> Any:
    """Return ``obj`` with every unordered element list sorted by identifier."""
    if isinstance(obj, ProcessModel) or (dataclasses.is_dataclass(obj) and not isinstance(obj, type)):
        changes = {}
        for f in _data_fields(type(obj)):
            value = getattr(obj, f.name)
            if isinstance(value, tuple) and value and dataclasses.is_dataclass(value[0]):
                items = [canonicalize(v) for v in value]
                if f.name not in _ORDERED:
                    items.sort(key=_sort_key)
                changes[f.name] = tuple(items)
            elif f.name == "attributes":
                changes[f.name] = tuple(sorted(value))
        return dataclasses.replace(obj, **changes) if changes else obj
    return obj


def structurally_equal(a: Any, b: Any) -> bool:
    return canonicalize(a) == canonicalize(b)


# Public API ------------------------------------------------------------------


def serialize_model(model: ProcessModel) -> str:
    return treetext.dump(_to_block(canonicalize(model), "model"))


def parse_model(text: str) -> ProcessModel:
    try:
        root = treetext.load(text)
    except treetext.TreeSyntaxError as exc:
        raise ModelSyntaxError(f"expected {exc.expected}, found {exc.found}", exc.line, exc.column) from exc
    if root.tag != "model":
        raise ModelSyntaxError(f"expected a model block, found {root.tag!r}", root.line)
    model = _from_block(root, ProcessModel)
    check_identifiers(model)
    check_references(model)
    return model


def check_identifiers(model: ProcessModel) -> None:
    seen: set[str] = set()

    def claim(ident: str) -> None:
        if ident in seen:
            raise DuplicateIdentifier(ident)
        seen.add(ident)

    for group in (model.signals, model.classes, model.performers):
        for item in group:
            claim(item.id)
    for activity in model.activities:
        claim(activity.id)
        names: set[str] = set()
        for var in activity.variables:
            if var.name in names:
                raise DuplicateIdentifier(f"{activity.id}.{var.name}")
            names.add(var.name)
        for node in activity.nodes:
            claim(node.id)
            for pin in node.pins:
                claim(pin.id)
        for edge in activity.edges:
            claim(edge.id)


def dangling_references(model: ProcessModel) -> list[tuple[str, str, str]]:
    """Every reference that fails to resolve, as ``(ref, context, owner id)``."""
    found: list[tuple[str, str, str]] = []

    def type_ok(type_name: str | None) -> bool:
        return type_name is None or type_name in SCALAR_TYPES or model.data_class(type_name) is not None

    for cls in model.classes:
        for f in cls.fields:
            if not type_ok(f.type):
                found.append((f.type, f"class {cls.id} field {f.name}", cls.id))
    for activity in model.activities:
        endpoints = {p.id for n in activity.nodes for p in n.pins}
        endpoints |= {n.id for n in activity.nodes if n.is_control}
        node_ids = {n.id for n in activity.nodes}
        for var in activity.variables:
            if not type_ok(var.type):
                found.append((var.type, f"variable {activity.id}.{var.name}", activity.id))
        for node in activity.nodes:
            for pin in node.pins:
                if not type_ok(pin.type):
                    found.append((pin.type, f"pin {pin.id}", node.id))
            if isinstance(node, CallBehaviorAction):
                if node.invokes is not None and not model.has_activity(node.invokes):
                    found.append((node.invokes, f"action {node.id} invokes", node.id))
                if node.performer is not None and model.performer(node.performer) is None:
                    found.append((node.performer, f"action {node.id} performer", node.id))
            elif isinstance(node, SendSignalAction):
                if model.signal(node.signal) is None:
                    found.append((node.signal, f"send {node.id} signal", node.id))
                if node.target is not None and not model.has_activity(node.target):
                    found.append((node.target, f"send {node.id} target", node.id))
            elif isinstance(node, AcceptEventAction):
                if model.signal(node.signal) is None:
                    found.append((node.signal, f"accept {node.id} signal", node.id))
                if node.interrupts is not None and node.interrupts not in node_ids:
                    found.append((node.interrupts, f"accept {node.id} interrupts", node.id))
            elif isinstance(node, ForEachNode):
                if not model.has_activity(node.body):
                    found.append((node.body, f"foreach {node.id} body", node.id))
        for edge in activity.edges:
            for end, value in (("source", edge.source), ("target", edge.target)):
                if value not in endpoints:
                    found.append((value, f"edge {edge.id} {end}", edge.id))
    return found


def check_references(model: ProcessModel) -> None:
    problems = dangling_references(model)
    if problems:
        ref, context, _ = problems[0]
        raise UnresolvedReference(ref, context)


def load_model(path) -> ProcessModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def iter_elements(model: ProcessModel) -> Iterable[str]:
    for group in (model.signals, model.classes, model.performers):
        for item in group:
            yield item.id
    for activity in model.activities:
        yield activity.id
        for node in activity.nodes:
            yield node.id
            yield from (p.id for p in node.pins)
        yield from (e.id for e in activity.edges)
