from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from adflow import measures, tabular
from adflow.measures import (
    ALL,
    Aggregate,
    EmptySelection,
    MeasureCycle,
    MeasureSyntaxError,
    MeasureValue,
    MRef,
    Mult,
    UnitMismatch,
    parse_measure,
)
from adflow.runtime.advm import run_model
from adflow.runtime.events import parse_trace

from conftest import load_fixture

LOG = parse_trace(
    '0 1 instanceStart p1 {"activity":"main","parent":null}\n'
    "0 2 actionStart p1:a\n"
    "3 3 actionEnd p1:a\n"
    "3 4 actionStart p1:b\n"
    "4 5 actionEnd p1:b\n"
    "4 6 actionStart p1:c\n"
)


def implicit(owners):
    out = []
    for owner, kind in owners:
        out += measures._implicit_for(owner, kind)
    return out


def evaluate(decls, logs=LOG):
    return {(v.element, v.measure, v.scope): v.value for v in measures.evaluate(logs, decls)}


def test_parse_forms():
    d = parse_measure("Cost=2*hour, EUR")
    assert d.expr == Mult(measures.Num(Fraction(2)), MRef("hour")) and d.unit == "EUR"
    d = parse_measure("T=Sum(tasks.Cost), EUR", "main", "activity")
    assert d.expr == Aggregate("Sum", "tasks", "Cost")
    assert parse_measure("Budget, EUR").expr is None
    assert measures.format_declaration(parse_measure("X=Minus(Finish, Start), tick")) == "X=Minus(Finish, Start), tick"


@pytest.mark.parametrize("text,column", [("X=Foo(a), u", 2), ("X=Sum(items.Cost), u", 6), ("X=2*, u", 4)])
def test_syntax_errors_point_at_column(text, column):
    with pytest.raises(MeasureSyntaxError) as info:
        parse_measure(text)
    assert info.value.position == column


def test_missing_unit_rejected():
    with pytest.raises(MeasureSyntaxError):
        parse_measure("X=1")


def test_probes_and_absent_values():
    table = evaluate(implicit([("a", "action"), ("b", "action"), ("c", "action"), ("main", "activity")]))
    assert table[("a", "ProcessingTime", "p1")] == 3
    assert table[("a", "TotalTime", "p1")] == 3
    assert table[("b", "Start", "p1")] == 3
    assert ("c", "Finish", "p1") not in table  # never ended
    assert ("c", "ProcessingTime", "p1") not in table
    assert table[("c", "Start", "p1")] == 4
    assert ("main", "Finish", "p1") not in table


def test_aggregations_skip_absent_members():
    decls = implicit([("a", "action"), ("b", "action"), ("c", "action")]) + [
        parse_measure("S=Sum(tasks.ProcessingTime), tick", "main", "activity"),
        parse_measure("A=Avg(tasks.ProcessingTime), tick", "main", "activity"),
        parse_measure("N=Sum(tasks.ExecutionCount), count", "main", "activity"),
    ]
    decls += measures._implicit_for("main", "activity")
    table = evaluate(decls)
    assert table[("main", "S", "p1")] == 4
    assert table[("main", "A", "p1")] == 2
    assert table[("main", "N", "p1")] == 3


def test_unit_mismatch_and_cycles():
    with pytest.raises(UnitMismatch):
        measures.evaluate(LOG, implicit([("a", "action")]) + [parse_measure("X=Minus(Finish, Cost), tick", "a")]
                          + [parse_measure("Cost, EUR", "a")])
    with pytest.raises(MeasureCycle):
        measures.evaluate(LOG, [parse_measure("X=Mult(Y, 2), u", "a"), parse_measure("Y=Mult(X, 2), u", "a")])


def test_cost_rules():
    model = load_fixture("process_order.flow")
    events = run_model(model, {"instances": [
        {"activity": "process_order", "bindings": {"order": {"id": 1, "amount": 30}}}]}).events
    table = evaluate(measures.model_measures(model), events)
    assert table[("register", "Cost", "p1")] == 6  # 3 ticks at 2 EUR/tick
    assert table[("pack", "Cost", "p1")] == 2
    assert table[("ship", "Cost", "p1")] == 4  # declared cost wins
    assert table[("charge", "Cost", "p2")] == 6  # callee instance
    assert table[("process_order", "TotalCost", "p1")] == 12
    assert table[("process_order", "AvgTime", "p1")] == 2


def test_user_cost_overrides_derivation():
    model = load_fixture("process_order.flow")
    user = measures.declared_measures(model) + [parse_measure("Cost=7, EUR", "register")]
    derived = measures.derive_implicit(model, user)
    assert not any(d.owner == "register" and d.name == "Cost" for d in derived)


def test_performer_measures_are_global(supplier, supplier_inputs):
    events = run_model(supplier, supplier_inputs).events
    values = measures.evaluate(events, measures.model_measures(supplier))
    rate = [v for v in values if v.element == "accounting"]
    assert [(v.measure, v.scope, v.value) for v in rate] == [("HourlyRate", ALL, 4)]


def test_runs_are_labelled():
    table = evaluate(implicit([("a", "action")]), {"r1": LOG, "r2": LOG})
    assert table[("a", "ProcessingTime", "r1/p1")] == table[("a", "ProcessingTime", "r2/p1")] == 3


def test_aggregate_empty_selection():
    with pytest.raises(EmptySelection):
        measures.aggregate([], "Avg")
    assert measures.aggregate([], "Sum").value == 0


fractions = st.fractions(min_value=-1000, max_value=1000, max_denominator=50)


@given(st.lists(fractions, min_size=1, max_size=30))
def test_avg_times_count_is_sum(nums):
    vals = [MeasureValue("a", "M", f"p{i}", v, "tick") for i, v in enumerate(nums)]
    avg, total = measures.aggregate(vals, "Avg"), measures.aggregate(vals, "Sum")
    assert avg.value * len(vals) == total.value
    assert measures.aggregate(vals, "Min").value == min(nums)
    assert measures.aggregate(vals, "Max").value == max(nums)


@given(st.lists(fractions, max_size=20), st.sampled_from(tabular.FORMATS))
def test_value_rows_round_trip(nums, fmt):
    vals = sorted(MeasureValue("a", "M", f"p{i}", v, "EUR") for i, v in enumerate(nums))
    text = tabular.render(measures.VALUE_COLUMNS, measures.value_rows(vals), fmt)
    assert measures.parse_value_rows(tabular.parse(text, fmt)) == vals


cell = st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc", "Zs", "Zl", "Zp")), min_size=1, max_size=8)


@given(st.lists(st.tuples(cell, cell), max_size=10), st.sampled_from(["csv", "json-lines"]))
def test_tabular_round_trip(rows, fmt):
    text = tabular.render(("x", "y"), rows, fmt)
    assert tabular.parse(text, fmt) == [{"x": a, "y": b} for a, b in rows]
