import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adflow.model import (
    DuplicateIdentifier,
    ModelSyntaxError,
    UnresolvedReference,
    parse_model,
    serialize_model,
    structurally_equal,
    validate,
)
from adflow.model import guards
from adflow.oracle.generator import GeneratorConfig, generate_model

from conftest import fixture_path, load_fixture

MINIMAL = """
model {
  id: "m"
  activities: [ activity { id: "a" main: true
    nodes: [
      initial { id: "s" pins: [ pin { id: "s.out" direction: "out" } ] }
      action { id: "t" duration: 2 pins: [ pin { id: "t.in" direction: "in" } pin { id: "t.out" direction: "out" } ] }
      final { id: "f" pins: [ pin { id: "f.in" direction: "in" } ] }
    ]
    edges: [
      edge { id: "e1" source: "s.out" target: "t.in" }
      edge { id: "e2" source: "t.out" target: "f.in" }
    ]
  } ]
}
"""


def test_minimal_model_parses_and_validates():
    model = parse_model(MINIMAL)
    assert [a.id for a in model.main_processes()] == ["a"]
    assert model.node("t").duration == 2
    assert validate(model).ok


def test_syntax_error_reports_position():
    with pytest.raises(ModelSyntaxError) as info:
        parse_model('model { id: "m" activities: [ ')
    assert "line" in str(info.value) or ":" in str(info.value)


def test_duplicate_identifier_rejected():
    text = MINIMAL.replace('action { id: "t"', 'action { id: "s"')
    with pytest.raises(DuplicateIdentifier):
        parse_model(text)


def test_unresolved_reference_rejected():
    with pytest.raises(UnresolvedReference):
        parse_model(MINIMAL.replace('target: "f.in"', 'target: "nowhere.in"'))


@pytest.mark.parametrize("name", ["supplier.flow", "process_order.flow", "correlation.flow"])
def test_package_fixtures_validate_and_round_trip(name):
    model = load_fixture(name)
    assert validate(model).ok, validate(model).findings
    again = parse_model(serialize_model(model))
    assert structurally_equal(again, model)
    assert serialize_model(again) == serialize_model(model)


@pytest.mark.parametrize(
    "name,rule",
    [("r1_pin_fanout.flow", "R1"), ("r2_control_cycle.flow", "R2"),
     ("r3_fork_join.flow", "R3"), ("r4_unguarded_branch.flow", "R4")],
)
def test_rule_fixture_rejected_with_its_rule(name, rule):
    report = validate(load_fixture(name))
    assert not report.ok
    assert report.rules() == {rule}
    assert report.summary().startswith(f"{len(report.errors)} error")


def test_unknown_performer_rejected_at_load():
    with pytest.raises(UnresolvedReference, match="ghost"):
        parse_model(MINIMAL.replace('action { id: "t"', 'action { id: "t" performer: "ghost"'))


def test_payload_field_must_exist_on_token_type():
    text = fixture_path("supplier.flow").read_text()
    bad = text.replace('guard: "payload.orderId = order.id" object: true', 'guard: "payload.nope = order.id" object: true')
    assert bad != text
    assert "R6" in validate(parse_model(bad)).rules()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_generated_models_round_trip(seed):
    model = generate_model(GeneratorConfig(seed=seed))
    assert structurally_equal(parse_model(serialize_model(model)), model)


# guard language ----------------------------------------------------------


def test_guard_evaluation():
    expr = guards.parse_guard('order.amount > 100 and not (status = "paid")')
    assert guards.holds(expr, {"order": {"amount": 150}, "status": "open"})
    assert not guards.holds(expr, {"order": {"amount": 150}, "status": "paid"})
    assert guards.holds(guards.parse_guard("payload.orderId = id"), {"id": 3}, {"orderId": 3})


def test_guard_aliases_and_errors():
    assert guards.holds(guards.parse_guard("x ≠ 1"), {"x": 2})
    assert guards.holds(guards.parse_guard("x != 1"), {"x": 2})
    with pytest.raises(guards.GuardSyntaxError):
        guards.parse_guard("x = = 1")
    with pytest.raises(guards.GuardEvalError):
        guards.holds(guards.parse_guard("y = 1"), {"x": 1})
    with pytest.raises(guards.GuardEvalError):
        guards.holds(guards.parse_guard("x + 1"), {"x": 1})


small = st.integers(-50, 50)


@given(small, small, small)
def test_guard_arithmetic_matches_python(a, b, c):
    expr = guards.parse_guard("a + b * c - a")
    assert guards.evaluate(expr, {"a": a, "b": b, "c": c}) == a + b * c - a


@given(small, small, st.sampled_from(["=", "<>", "<", ">", "<=", ">="]))
def test_guard_print_parse_round_trip(a, b, op):
    expr = guards.parse_guard(f"(a {op} b) or not (a = {abs(b)})")
    again = guards.parse_guard(guards.to_text(expr))
    env = {"a": a, "b": b}
    assert guards.holds(again, env) == guards.holds(expr, env)
