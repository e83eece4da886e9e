import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adflow.compiler import compile_model
from adflow.oracle.campaign import check_seed, group_ticks
from adflow.oracle.generator import GeneratorConfig, generate_case
from adflow.oracle.reference import project_action_events, run_reference
from adflow.runtime.advm import run_model
from adflow.runtime.events import format_trace, parse_trace
from adflow.runtime.scheduler import ExternalSignal, InputError

from conftest import load_fixture, load_json

ENGINES = [run_model, run_reference]


def order_inputs(amount: int) -> dict:
    return {"instances": [{"activity": "process_order", "bindings": {"order": {"id": 1, "amount": amount}}}]}


def starts(events) -> dict[str, int]:
    return {e.element: e.tick for e in events if e.kind == "actionStart"}


# compiler ---------------------------------------------------------------


def test_process_order_paths():
    compiled = compile_model(load_fixture("process_order.flow"))
    lines = compiled.dump_paths().splitlines()
    assert "PUSH register.out -> pay.in via [d_valid, f_split] when order.amount > 0" in lines
    assert "PUSH register.out -> reject.in via [d_valid] when not (order.amount > 0)" in lines
    assert "PULL pay.out -> ship.in via [j_both] when true" in lines
    assert "PULL pack.out -> ship.in via [j_both] when true" in lines
    assert "PUSH ship.out -> po_end.in via [m_done] when true" in lines
    assert len(compiled.pull_groups) == 1
    group = compiled.pull_groups[0]
    assert group.destination == "ship.in"
    assert tuple(group.join_nodes) == ("j_both",)


def test_every_pull_path_in_exactly_one_group():
    for seed in range(200):
        compiled = compile_model(generate_case(GeneratorConfig(seed=seed)).model)
        pulled = sorted(p.id for p in compiled.paths if p.is_pull)
        grouped = sorted(pid for g in compiled.pull_groups for pid in g.member_paths)
        assert pulled == grouped, seed


def test_compile_is_deterministic():
    a = compile_model(load_fixture("supplier.flow")).dump_paths()
    b = compile_model(load_fixture("supplier.flow")).dump_paths()
    assert a == b


# execution --------------------------------------------------------------


@pytest.mark.parametrize("engine", ENGINES)
def test_process_order_happy_path(engine):
    result = engine(load_fixture("process_order.flow"), order_inputs(30))
    assert result.status == "completed" and result.exit_code == 0
    # register 0..3, pay's callee charge and pack in parallel 3..5, ship 5..6
    assert starts(result.events) == {"register": 0, "pay": 3, "charge": 3, "pack": 3, "ship": 5}
    assert result.clock == 6


@pytest.mark.parametrize("engine", ENGINES)
def test_process_order_reject_branch(engine):
    result = engine(load_fixture("process_order.flow"), order_inputs(0))
    assert result.status == "completed"
    assert starts(result.events) == {"register": 0, "reject": 3}
    assert result.clock == 4


@pytest.mark.parametrize("engine", ENGINES)
def test_starving_join_deadlocks(engine):
    result = engine(load_fixture("starving_join.flow"), None, max_ticks=10)
    assert result.status == "deadlocked"
    assert result.exit_code == 2
    assert result.diagnostics


@pytest.mark.parametrize("engine", ENGINES)
def test_tick_budget(engine):
    result = engine(load_fixture("supplier.flow"), load_json("supplier.inputs.json"), max_ticks=3)
    assert result.status == "budget"
    assert result.exit_code == 4


def test_bad_inputs_rejected():
    with pytest.raises(InputError):
        run_model(load_fixture("process_order.flow"), {"instances": [{"activity": "nope"}]})
    with pytest.raises(InputError):
        run_model(load_fixture("process_order.flow"),
                  {"instances": [{"activity": "process_order", "bindings": {"ghost": 1}}]})


def test_unmatched_external_signal_is_undeliverable():
    model = load_fixture("correlation.flow")
    inputs = load_json("correlation.inputs.json")
    signals = [ExternalSignal(0, "Invoice", {"orderId": 1}, None), ExternalSignal(0, "Invoice", {"orderId": 2}, None),
               ExternalSignal(1, "Invoice", {"orderId": 9}, None)]
    result = run_model(model, inputs, signals=signals)
    assert result.status == "completed"
    assert result.undeliverable == 1


@pytest.mark.parametrize("engine", ENGINES)
def test_supplier_runs_identically_twice(engine):
    model, inputs = load_fixture("supplier.flow"), load_json("supplier.inputs.json")
    assert engine(model, inputs).trace == engine(model, inputs).trace


def test_trace_text_round_trip():
    result = run_model(load_fixture("supplier.flow"), load_json("supplier.inputs.json"))
    assert parse_trace(format_trace(result.events)) == result.events
    assert format_trace(parse_trace(result.trace)) == result.trace


def test_supplier_engines_agree():
    model, inputs = load_fixture("supplier.flow"), load_json("supplier.inputs.json")
    a, b = run_model(model, inputs), run_reference(model, inputs)
    assert project_action_events(a.events) == project_action_events(b.events)
    assert group_ticks(a.events) == group_ticks(b.events)
    assert group_ticks(a.events), "supplier has a join, so at least one group forms"


@settings(max_examples=40, deadline=None)
@given(st.integers(1000, 100_000), st.integers(1, 8))
def test_engines_agree_on_generated_models(seed, size):
    outcome = check_seed(seed, size)
    assert outcome.ok, (outcome.checks, outcome.note)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 8), st.integers(0, 12))
def test_generator_respects_bounds(seed, actions, control):
    case = generate_case(GeneratorConfig(seed=seed, max_actions=actions, max_control_nodes=control))
    nodes = [n for _, n in case.model.iter_nodes()]  # receiver and callee count too
    assert sum(1 for n in nodes if n.is_action) <= actions
    assert sum(1 for n in nodes if n.is_control) <= control


def test_generator_is_seed_reproducible():
    from adflow.model import serialize_model

    a = generate_case(GeneratorConfig(seed=42))
    b = generate_case(GeneratorConfig(seed=42))
    assert serialize_model(a.model) == serialize_model(b.model)
    assert a.inputs == b.inputs


def test_generator_config_checks():
    with pytest.raises(ValueError):
        GeneratorConfig(max_actions=0)
    with pytest.raises(ValueError):
        GeneratorConfig(guard_domains={"x": (1,)})
