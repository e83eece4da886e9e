"""Command-line pipeline: validate, compile, run, oracle, measure, transform, trace-check."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bpmn, measures, tabular, transform
from .compiler import CompileError, compile_model
from .model import ModelError, load_model, validate, write_text
from .oracle import campaign
from .oracle.reference import run_reference
from .runtime.advm import run_model
from .runtime.events import TraceFormatError, load_trace
from .runtime.scheduler import InputError, RunError, parse_signals

EXIT_OK, EXIT_USAGE, EXIT_DEADLOCK, EXIT_FAILED, EXIT_BUDGET, EXIT_INVALID = 0, 1, 2, 3, 4, 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, which means deadlock here
        raise UsageError(f"{message} (try '{self.prog} --help')")


def _err(text: str) -> None:
    print(text, file=sys.stderr)


def _read_json(path: str | None, what: str):
    if path is None:
        return None
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {what} file {path}: {exc}") from exc


def _load_valid(path: str):
    """Load a model and stop with exit 5 when it has validation errors."""
    model = load_model(path)
    report = validate(model)
    for finding in report.findings:
        _err(str(finding))
    if not report.ok:
        _err(report.summary())
        return None
    return model


def _emit(text: str, out: str | None) -> None:
    if out:
        write_text(out, text)
    else:
        sys.stdout.write(text)


# commands -------------------------------------------------------------------


def cmd_validate(args) -> int:
    model = load_model(args.file or args.model)
    report = validate(model)
    rows = [(f.rule, f.severity, ",".join(f.elements), f.message) for f in report.findings]
    if args.format == "table":
        for f in report.findings:
            print(f)
        print(report.summary())
    else:
        sys.stdout.write(tabular.render(("rule", "severity", "elements", "message"), rows, args.format))
        _err(report.summary())
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_compile(args) -> int:
    model = _load_valid(args.model)
    if model is None:
        return EXIT_INVALID
    compiled = compile_model(model)
    for warning in compiled.warnings:
        _err(f"warning: {warning}")
    if args.dump_paths:
        sys.stdout.write(compiled.dump_paths())
    else:
        pull = sum(1 for p in compiled.paths if p.is_pull)
        print(
            f"{len(compiled.places)} places, {len(compiled.paths) - pull} push paths, "
            f"{pull} pull paths, {len(compiled.pull_groups)} pull groups"
        )
    return EXIT_OK


def _run(args, engine) -> int:
    model = _load_valid(args.model)
    if model is None:
        return EXIT_INVALID
    inputs = _read_json(args.inputs, "inputs")
    signals = parse_signals(_read_json(args.signals, "signals"))
    result = engine(model, inputs, signals=signals, max_ticks=args.max_ticks)
    _emit(result.trace, args.trace)
    for note in result.diagnostics:
        _err(note)
    _err(f"{result.status} at tick {result.clock}, {len(result.events)} events")
    return result.exit_code


def cmd_run(args) -> int:
    return _run(args, run_model)


def cmd_oracle_run(args) -> int:
    return _run(args, run_reference)


def cmd_oracle_fuzz(args) -> int:
    if args.seeds < 1 or not 1 <= args.size <= 8:
        raise UsageError("--seeds must be positive and --size between 1 and 8")
    outcomes = campaign.run_campaign(range(args.start, args.start + args.seeds), args.size)
    for o in outcomes:
        if not o.ok:
            failed = ", ".join(c for c, ok in o.checks.items() if not ok)
            _err(f"seed {o.seed}: {failed} {o.note}".rstrip())
    rows = [(check, passed, failed, "pass" if failed == 0 else "FAIL") for check, passed, failed in
            campaign.summary_rows(outcomes)]
    sys.stdout.write(tabular.render(("check", "passed", "failed", "verdict"), rows, args.format))
    return EXIT_OK if all(o.ok for o in outcomes) else EXIT_FAILED


def cmd_measure(args) -> int:
    model = _load_valid(args.model)
    if model is None:
        return EXIT_INVALID
    if not args.trace and not args.runs:
        raise UsageError("measure needs --trace or --runs")
    user = measures.declared_measures(model)
    implicit = measures.derive_implicit(model, user)
    for note in implicit.collisions:
        _err(f"note: {note}")
    if args.runs:
        files = sorted(Path(args.runs).glob("*.trace"))
        if not files:
            raise UsageError(f"no .trace files in {args.runs}")
        logs = {f.stem: load_trace(f) for f in files}
        if args.trace:
            logs[Path(args.trace).stem] = load_trace(args.trace)
    else:
        logs = load_trace(args.trace)
    values = measures.evaluate(logs, user + list(implicit))
    sys.stdout.write(tabular.render(measures.VALUE_COLUMNS, measures.value_rows(values), args.format))
    return EXIT_OK


def cmd_transform(args) -> int:
    model = _load_valid(args.model)
    if model is None:
        return EXIT_INVALID
    result, trace = transform.transform(model)
    report = bpmn.validate_bpmn(result)
    for finding in report.findings:
        _err(str(finding))
    _emit(bpmn.serialize_bpmn(result), args.out)
    if args.trace:
        write_text(args.trace, trace.to_text())
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_trace_check(args) -> int:
    model = load_model(args.model)
    target = bpmn.parse_bpmn(Path(args.bpmn).read_text(encoding="utf-8"))
    trace = transform.parse_trace_map(Path(args.trace).read_text(encoding="utf-8"))
    report = transform.check_trace_totality(model, target, trace)
    verdict = transform.structural_skeleton_equivalence(model, target, trace)
    for line in report.lines():
        print(line)
    print(f"trace {'total' if report.ok else 'incomplete'}; skeleton "
          f"{'equivalent' if verdict else 'differs: ' + (verdict.witness or '')}")
    return EXIT_OK if report.ok and verdict else EXIT_INVALID


# parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def fmt(p, choices=tabular.FORMATS):
        p.add_argument("--format", choices=choices, default="table")

    p = sub.add_parser("validate", help="check a .flow model")
    p.add_argument("file", nargs="?")
    p.add_argument("--model")
    fmt(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compile", help="compile stable places and paths")
    p.add_argument("--model", required=True)
    p.add_argument("--dump-paths", action="store_true")
    p.set_defaults(func=cmd_compile)

    def run_flags(p):
        p.add_argument("--model", required=True)
        p.add_argument("--inputs")
        p.add_argument("--signals")
        p.add_argument("--max-ticks", type=int, default=10_000)
        p.add_argument("--trace", help="write the event trace here (default: standard output)")

    p = sub.add_parser("run", help="execute on the token machine")
    run_flags(p)
    p.set_defaults(func=cmd_run)

    oracle = sub.add_parser("oracle", help="reference interpreter")
    osub = oracle.add_subparsers(dest="oracle_command", parser_class=_Parser)
    p = osub.add_parser("run", help="execute on the reference interpreter")
    run_flags(p)
    p.set_defaults(func=cmd_oracle_run)
    p = osub.add_parser("fuzz", help="seeded equivalence campaign")
    p.add_argument("--seeds", type=int, default=1000)
    p.add_argument("--size", type=int, default=8, help="maximum actions per generated model")
    p.add_argument("--start", type=int, default=0, help="first seed")
    fmt(p)
    p.set_defaults(func=cmd_oracle_fuzz)

    p = sub.add_parser("measure", help="evaluate measures over event traces")
    p.add_argument("--model", required=True)
    p.add_argument("--trace")
    p.add_argument("--runs", help="directory of .trace files, one per run")
    fmt(p)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("transform", help="translate to BPMN")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.add_argument("--trace")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("trace-check", help="check a transformation trace")
    p.add_argument("--model", required=True)
    p.add_argument("--bpmn", required=True)
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_trace_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        func = getattr(args, "func", None)
        if func is None:
            raise UsageError("missing command (try 'adflow --help')")
        if args.command == "validate" and not (args.file or args.model):
            raise UsageError("validate needs a model file")
        if getattr(args, "max_ticks", 1) <= 0:
            raise UsageError("--max-ticks must be positive")
        return func(args)
    except UsageError as exc:
        _err(f"usage error: {exc}")
        return EXIT_USAGE
    except (ModelError, bpmn.BpmnSyntaxError, transform.TraceFormatError, TraceFormatError, measures.MeasureError) as exc:
        _err(f"error: {exc}")
        return EXIT_INVALID
    except (InputError, OSError) as exc:
        _err(f"usage error: {exc}")
        return EXIT_USAGE
    except (RunError, CompileError) as exc:
        _err(f"run failed: {exc}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
