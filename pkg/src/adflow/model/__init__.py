"""Process-definition model, guard language, storage format and validator."""

from .document import (
    DuplicateIdentifier,
    ModelError,
    ModelSyntaxError,
    UnresolvedReference,
    canonicalize,
    load_model,
    parse_model,
    serialize_model,
    structurally_equal,
    write_text,
)
from .elements import (
    AcceptEventAction,
    Activity,
    ActivityFinalNode,
    ActivityParameterNode,
    Assignment,
    CallBehaviorAction,
    DataClass,
    DecisionNode,
    Edge,
    Field,
    ForEachNode,
    ForkNode,
    InitialNode,
    JoinNode,
    MergeNode,
    Node,
    Performer,
    Pin,
    ProcessModel,
    SendSignalAction,
    SignalType,
    VariableDecl,
)
from .validation import Finding, ValidationReport, validate

