from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adflow import bpmn as B
from adflow import transform as T
from adflow.model import ProcessModel
from adflow.oracle.generator import GeneratorConfig, generate_model

from conftest import load_fixture


def replace_process(model: B.BpmnModel, pid: str, **changes) -> B.BpmnModel:
    procs = tuple(replace(p, **changes) if p.id == pid else p for p in model.processes)
    return replace(model, processes=procs)


@pytest.fixture
def order():
    model = load_fixture("process_order.flow")
    return (model, *T.transform(model))


def test_process_order_mapping(order):
    ad, result, trace = order
    links = {(l.source, l.concept, l.target) for l in trace.links}
    for expected in [
        ("process_order", "ProcessContainer", "process_order"),
        ("process_order", "ProcessContainer", "pool_process_order"),
        ("make_payment", "ProcessContainer", "make_payment"),
        ("d_valid", "Decision", "d_valid"),
        ("j_both", "Join", "j_both"),
        ("o1", "SimpleTransition", "o1"),
        ("o2", "IncomingTransition", "o2"),
        ("o4", "OutgoingTransition", "o4"),
        ("mp_in", "Start", "mp_in"),
        ("mp_in", "Variable", "mp_in.param"),
        ("clerk", "Performer", "process_order.lane.clerk"),
        ("process_order.order", "Variable", "process_order.order"),
    ]:
        assert expected in links
    assert [p.id for p in result.pools] == ["pool_process_order"]
    assert [p.id for p in result.global_processes] == ["make_payment"]
    main = result.process("process_order")
    assert main.node("pay") == B.SubProcess("pay", "Make Payment", mode="call", called="make_payment")
    assert main.node("d_valid").kind == "exclusive" and main.node("f_split").kind == "parallel"
    flows = {f.id: f for f in main.flows}
    assert flows["o3"].condition == "order.amount > 0"
    assert flows["o4"].condition == "else"  # default flow
    lanes = {l.id: l.members for l in main.lanes}
    assert lanes == {"process_order.lane.clerk": ("register",), "process_order.lane.store": ("pack", "ship")}


def test_supplier_messages():
    ad = load_fixture("supplier.flow")
    result, _ = T.transform(ad)
    flows = {(m.source, m.target, m.signal) for m in result.message_flows}
    assert flows == {("send_order", "recv_order", "OrderMsg"), ("send_invoice", "recv_invoice", "InvoiceMsg"),
                     ("notify", "recv_goods", "Shipment")}
    customer = result.process("customer")
    assert customer.node("recv_goods").kind == "receive"
    assert {f.id: f.condition for f in customer.flows}["c6"] == "payload.orderId = order.id"
    supplier = result.process("supplier")
    assert supplier.node("notify") == B.EndEvent("notify", "Notify Shipment", kind="message", signal="Shipment")
    assert supplier.node("pick_items").loop


@pytest.mark.parametrize("name", ["supplier.flow", "process_order.flow", "correlation.flow"])
def test_laws_on_fixtures(name):
    ad = load_fixture(name)
    result, trace = T.transform(ad)
    assert B.validate_bpmn(result).ok, B.validate_bpmn(result).findings
    assert T.check_trace_totality(ad, result, trace).ok
    assert T.structural_skeleton_equivalence(ad, result, trace)
    assert all(a == b for a, b in T.node_counts(ad, result).values())


def test_element_not_transformable():
    with pytest.raises(T.UntransformableElement):
        T.TraceMap().add("x", "Widget", "y")


# corruption -------------------------------------------------------------


def test_reversed_flow_gives_witness(order):
    ad, result, trace = order
    main = result.process("process_order")
    flows = tuple(replace(f, source=f.target, target=f.source) if f.id == "o12" else f for f in main.flows)
    broken = replace_process(result, "process_order", flows=flows)
    verdict = T.structural_skeleton_equivalence(ad, broken, trace)
    assert not verdict
    assert "o12" in verdict.witness


def test_added_task_is_target_orphan(order):
    ad, result, trace = order
    main = result.process("process_order")
    broken = replace_process(result, "process_order", nodes=main.nodes + (B.Task("extra", "Extra"),))
    report = T.check_trace_totality(ad, broken, trace)
    assert report.target_orphans == ["extra"]
    assert not report.ok
    assert "target orphan: extra" in report.lines()
    assert not B.validate_bpmn(broken).ok  # also unreachable


def test_deleted_source_element_is_dangling(order):
    ad, result, trace = order
    act = ad.activity("process_order")
    nodes = tuple(n for n in act.nodes if n.id != "reject")
    edges = tuple(e for e in act.edges if "reject" not in (e.source.split(".")[0], e.target.split(".")[0]))
    smaller = replace(ad, activities=tuple(replace(a, nodes=nodes, edges=edges) if a.id == act.id else a
                                           for a in ad.activities))
    report = T.check_trace_totality(smaller, result, trace)
    assert "reject" in report.dangling_sources
    assert {"o4", "o11"} <= set(report.dangling_sources)


def test_missing_link_is_unmapped(order):
    ad, result, trace = order
    trimmed = T.TraceMap([l for l in trace.links if l.source != "ship"])
    report = T.check_trace_totality(ad, result, trace=trimmed)
    assert report.unmapped_sources == ["ship"] and report.target_orphans == ["ship"]
    assert not T.structural_skeleton_equivalence(ad, result, trimmed)


# trace map text ---------------------------------------------------------


def test_trace_map_text(order):
    _, _, trace = order
    assert T.parse_trace_map(trace.to_text()).links == sorted(trace.links)
    with pytest.raises(T.TraceFormatError):
        T.parse_trace_map("a  Task\n")



def test_unknown_concept_reported(order):
    ad, result, trace = order
    odd = T.parse_trace_map(trace.to_text() + "ship  Widget  ship\n")
    report = T.check_trace_totality(ad, result, odd)
    assert report.unknown_concepts == ["Widget"]
    assert report.multi_sourced == ["ship"]


# BPMN validator ---------------------------------------------------------


def simple_process(flows, nodes=None) -> B.BpmnModel:
    nodes = nodes or (B.StartEvent("s"), B.Task("t"), B.EndEvent("e"))
    proc = B.Process("p", nodes=tuple(nodes), flows=tuple(flows))
    return B.BpmnModel(pools=(B.Pool("pool_p", "P", "p"),), processes=(proc,))


def test_validator_accepts_sequence():
    model = simple_process([B.SequenceFlow("f1", "s", "t"), B.SequenceFlow("f2", "t", "e")])
    assert B.validate_bpmn(model).ok


@pytest.mark.parametrize(
    "model,rule",
    [
        (simple_process([B.SequenceFlow("f1", "s", "t"), B.SequenceFlow("f2", "t", "zz")]), "dangling"),
        (simple_process([B.SequenceFlow("f1", "s", "t"), B.SequenceFlow("f2", "t", "e", "x > 1")]),
         "condition-placement"),
        (simple_process([B.SequenceFlow("f1", "s", "g"), B.SequenceFlow("f2", "g", "t"), B.SequenceFlow("f3", "t", "e")],
                        (B.StartEvent("s"), B.Gateway("g", kind="exclusive", role="split"), B.Task("t"),
                         B.EndEvent("e"))), "gateway-arity"),
        (simple_process([B.SequenceFlow("f1", "s", "e")], (B.StartEvent("s"), B.Task("t"), B.EndEvent("e"))),
         "unreachable"),
    ],
)
def test_validator_rules(model, rule):
    assert rule in B.validate_bpmn(model).rules()


def test_pool_membership():
    model = simple_process([B.SequenceFlow("f1", "s", "t"), B.SequenceFlow("f2", "t", "e")])
    doubled = replace(model, pools=model.pools + (B.Pool("pool_q", "Q", "p"),))
    assert "pool-membership" in B.validate_bpmn(doubled).rules()


def test_bpmn_syntax_error():
    with pytest.raises(B.BpmnSyntaxError):
        B.parse_bpmn("bpmn { pools: [ pool { id: 3 ")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 50_000))
def test_generated_transform_laws(seed):
    ad: ProcessModel = generate_model(GeneratorConfig(seed=seed))
    result, trace = T.transform(ad)
    assert B.structurally_equal(B.parse_bpmn(B.serialize_bpmn(result)), result)
    assert B.validate_bpmn(result).ok
    assert T.check_trace_totality(ad, result, trace).ok
    assert T.structural_skeleton_equivalence(ad, result, trace)
    counts = T.node_counts(ad, result)
    assert all(a == b for a, b in counts.values()), counts
