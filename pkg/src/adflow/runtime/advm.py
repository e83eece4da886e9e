"""Push/pull token virtual machine over a compiled model.

Push engines sit on output places and move a token along its unique true
push path (all branches of a crossed fork at once). Pull engines sit on input
places fed through joins and move one token per join slot as a group, only
when every slot can be filled.
"""

from __future__ import annotations

from typing import Any, Iterable

from ..compiler import CompiledModel, JoinRequirement, Path, compile_model
from ..model import guards
from ..model.elements import ForkNode, Node, ProcessModel
from .scheduler import (
    DEFAULT_DEPTH_LIMIT,
    DEFAULT_MAX_TICKS,
    Activation,
    BudgetExhausted,
    ExternalSignal,
    GuardConflict,
    Instance,
    RunError,
    RunResult,
    Scheduler,
    Token,
    send_signal,
    deliver_signals,
    start_instances,
)
from .events import Event

__all__ = [
    "Advm",
    "instantiate",
    "step",
    "run_to_completion",
    "invoke_subactivity",
    "run_foreach",
    "send_signal",
    "deliver_signals",
    "run_model",
]


class Advm(Scheduler):
    engine = "advm"

    def __init__(self, compiled: CompiledModel, **kwargs):
        super().__init__(compiled.model, **kwargs)
        self.compiled = compiled
        self._group_seq = 0
        self._sources: dict[str, list[tuple[str, list[Path]]]] = {}
        self._groups: dict[str, list] = {}
        for activity in compiled.model.activities:
            places = [p for p in compiled.places_of(activity.id) if p.is_source]
            self._sources[activity.id] = [
                (p.id, paths) for p in places if (paths := sorted(compiled.paths_from(p.id), key=_path_order))
            ]
            self._groups[activity.id] = sorted(
                (g for g in compiled.pull_groups if compiled.place(g.destination).activity == activity.id),
                key=lambda g: g.destination,
            )
        self._fork_out = {
            n.id: sorted(e.id for a in compiled.model.activities for e in a.edges if e.source == n.id)
            for _, n in compiled.model.iter_nodes()
            if isinstance(n, ForkNode)
        }

    def _holds(self, inst: Instance, path: Path, token: Token) -> bool:
        try:
            return guards.holds(path.condition, inst.variables, token.payload)
        except guards.GuardEvalError as exc:
            raise RunError(f"{inst.id}: path {path.id} condition: {exc}", inst) from exc

    def _check_conflict(self, inst: Instance, token: Token, true_paths: list[Path]) -> None:
        first = true_paths[0]
        for other in true_paths[1:]:
            k = next(i for i, (a, b) in enumerate(zip(first.edges, other.edges)) if a != b)
            node = first.traversed[k - 1] if k > 0 else first.source
            if not isinstance(self.model.node(node) if k > 0 else None, ForkNode):
                raise GuardConflict(
                    f"{inst.id}: guard conflict for token t{token.id} at {node}: "
                    f"paths {first.id} and {other.id} are both true",
                    inst,
                )

    def _fork_complete(self, true_paths: list[Path]) -> bool:
        covered: dict[str, set[str]] = {}
        for p in true_paths:
            for i, c in enumerate(p.traversed):
                if c in self._fork_out:
                    covered.setdefault(c, set()).add(p.edges[i + 1])
        return all(set(self._fork_out[f]) == used for f, used in covered.items())

    def _push(self, inst: Instance) -> bool:
        progress = False
        for place, paths in self._sources[inst.activity.id]:
            queue = inst.places.get(place)
            if not queue:
                continue
            for token in list(queue):
                true_paths = [p for p in paths if self._holds(inst, p, token)]
                if not true_paths:
                    continue
                if len(true_paths) > 1:
                    self._check_conflict(inst, token, true_paths)
                if any(p.is_pull for p in true_paths) or not self._fork_complete(true_paths):
                    continue
                queue.remove(token)
                for k, path in enumerate(true_paths):
                    moved = token if k == 0 else self.new_token(inst, path.destination, token.payload)
                    if k == 0:
                        token.location = path.destination
                        inst.places.setdefault(path.destination, []).append(token)
                    self.emit(
                        "tokenMove",
                        f"{inst.id}:t{moved.id}",
                        {"from": place, "path": path.id, "to": path.destination},
                    )
                progress = True
        return progress

    def _fill(self, inst: Instance, req: JoinRequirement, used: set[int]) -> list[tuple[Token, Path]] | None:
        """Oldest complete token set satisfying ``req``, or ``None``."""
        chosen: list[tuple[Token, Path]] = []
        taken = set(used)
        for slot in req.slots:
            options = []
            for pid in slot.paths:
                path = self.compiled.path(pid)
                for token in inst.places.get(path.source, ()):
                    if token.id not in taken and self._holds(inst, path, token):
                        options.append([(token, path)])
            for sub in slot.nested:
                found = self._fill(inst, sub, taken)
                if found:
                    options.append(found)
            if not options:
                return None
            best = min(options, key=_age)
            chosen.extend(best)
            taken.update(t.id for t, _ in best)
        return chosen

    def _pull(self, inst: Instance) -> bool:
        progress = False
        for group in self._groups[inst.activity.id]:
            options = [found for top in group.alternatives if (found := self._fill(inst, top, set()))]
            if not options:
                continue
            chosen = min(options, key=_age)
            self._group_seq += 1
            for token, path in chosen:
                inst.places[path.source].remove(token)
                token.origin = path.source
                token.group_id = self._group_seq
                token.location = group.destination
                inst.places.setdefault(group.destination, []).append(token)
                self.emit(
                    "tokenMove",
                    f"{inst.id}:t{token.id}",
                    {"from": path.source, "group": self._group_seq, "path": path.id, "to": group.destination},
                )
            progress = True
        return progress

    def move_tokens(self, inst: Instance) -> bool:
        pushed = self._push(inst)
        pulled = self._pull(inst)
        return pushed or pulled

    def select_inputs(self, inst: Instance, node: Node):
        units = []
        for pin in node.input_pins:
            queue = inst.places.get(pin.id)
            if not queue:
                return None
            head = queue[0]
            if head.group_id is None:
                units.append([head])
            else:
                units.append([t for t in queue if t.group_id == head.group_id])
        return units

    def seize(self, inst: Instance, node: Node, selection) -> list[list[Token]]:
        for unit in selection:
            for token in unit:
                self.take(inst, token)
        return selection

    def diagnose(self) -> list[str]:
        notes = []
        for inst in self.instances:
            if inst.status != "running":
                continue
            for group in self._groups[inst.activity.id]:
                for top in group.alternatives:
                    filled = []
                    for slot in top.slots:
                        try:
                            ok = self._fill(inst, JoinRequirement(top.join, (slot,)), set()) is not None
                        except RunError:
                            ok = False
                        filled.append(ok)
                    if any(filled) and not all(filled):
                        missing = [s.edge for s, ok in zip(top.slots, filled) if not ok]
                        notes.append(
                            f"{inst.id}: starved pull group at {group.destination}: "
                            f"join {top.join} lacks {', '.join(missing)}"
                        )
        return notes + super().diagnose()


def _age(option: list[tuple[Token, Path]]) -> int:
    return min(t.id for t, _ in option)


def _path_order(path: Path) -> tuple[int, str]:
    return (int(path.id.removeprefix("path")), path.id)


def _compiled(model_or_compiled: ProcessModel | CompiledModel) -> CompiledModel:
    if isinstance(model_or_compiled, CompiledModel):
        return model_or_compiled
    return compile_model(model_or_compiled)


def instantiate(
    compiled: CompiledModel | ProcessModel,
    inputs: dict | None = None,
    activity: str | None = None,
    **options,
) -> Instance:
    """Create a fresh machine holding one instance of ``activity`` (default: first main process)."""
    compiled = _compiled(compiled)
    vm = Advm(compiled, **options)
    if activity is None:
        mains = compiled.model.main_processes()
        activity = (mains[0] if mains else compiled.model.activities[0]).id
    return vm.start(activity, inputs or {})


def step(instance: Instance) -> list[Event]:
    if instance.status != "running":
        raise RunError(f"step on {instance.id}, which is {instance.status}", instance)
    return instance.vm.step()


def run_to_completion(instance: Instance, max_ticks: int | None = None) -> list[Event]:
    vm = instance.vm
    if max_ticks is not None:
        if max_ticks <= 0:
            raise ValueError("max_ticks must be positive")
        vm.max_ticks = max_ticks
    result = vm.run()
    if result.status == "budget":
        raise BudgetExhausted(result)
    return result.events


def invoke_subactivity(caller: Instance, call_site: Node, args: list[Any]) -> Instance:
    """Start the activity ``call_site`` invokes as a child of ``caller``."""
    vm = caller.vm
    act = caller.active.get(call_site.id)
    if act is None:
        act = Activation(call_site, vm.clock, [], None)
        caller.active[call_site.id] = act
    return vm._invoke(caller, act, vm.model.activity(call_site.invokes), args)


def run_foreach(instance: Instance, node: Node, collection_value: Any) -> list[Event]:
    """Drive ``node``'s loop over ``collection_value`` to completion on its own machine."""
    if not isinstance(collection_value, list):
        raise RunError(f"{instance.id}:{node.id}: collection is not a list", instance)
    vm = instance.vm
    mark = len(vm.log)
    act = Activation(node, vm.clock, [], None, collection=list(collection_value))
    instance.active[node.id] = act
    vm._next_iteration(instance, act)
    while vm.status == "running" and node.id in instance.active:
        vm.step()
    return vm.log[mark:]


def run_model(
    model: ProcessModel | CompiledModel,
    inputs: dict | None = None,
    signals: Iterable[ExternalSignal] = (),
    max_ticks: int = DEFAULT_MAX_TICKS,
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
) -> RunResult:
    compiled = _compiled(model)
    vm = Advm(compiled, max_ticks=max_ticks, depth_limit=depth_limit, signals=signals)
    start_instances(vm, compiled.model, inputs)
    return vm.run()
