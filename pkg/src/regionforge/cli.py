"""Command line front end.

Exit codes:
  0  success: admitted, proved, instance found, artifacts produced
  1  findings: refutation, admission failure, bad scoring input
  2  usage errors
  3  internal errors
  4  inconclusive: unknown or bound-limited results
"""
from __future__ import annotations

import argparse
import json
import os
import signal
import sys
from pathlib import Path

from . import __version__
from . import syntax as S
from . import values as V
from .admission import AdmissionReport, AdmissionStatus, Diagnostic, admit
from .decomp import DecompError, DecompOptions, DecompResult, decompose
from .evaluator import DEFAULT_STEP_BUDGET, EvalError, eval_call
from .metrics import KINDS, MetricError, aggregate_scores, load_table, round3
from .parser import ParseError, parse_program
from .project import (ERROR, Metamodel, Plan, ProjectError, ServeOptions,
                      admit_closure, apply_plan, dependency_closure,
                      load_state, module_context, plan_reformalization,
                      save_state, scan_project, serve)
from .testgen import (TemplateSpec, TestgenError, generate_tests,
                      render_tests, vectors_dumps)
from .verify import Verdict, VerifyError, find_instance, verify_goal

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3
EXIT_INCONCLUSIVE = 4

_STATUS_EXIT = {
    "Proved": EXIT_OK,
    "InstanceFound": EXIT_OK,
    "Refuted": EXIT_FINDINGS,
    "ProvedUpToBound": EXIT_INCONCLUSIVE,
    "NoInstanceUpToBound": EXIT_INCONCLUSIVE,
    "Unknown": EXIT_INCONCLUSIVE,
}

_CANON = dict(sort_keys=True, separators=(",", ":"))


class UsageError(Exception):
    pass


class CliExit(Exception):
    """Stops a handler after output has already been written."""

    def __init__(self, code: int):
        super().__init__(str(code))
        self.code = code


# ---------------------------------------------------------------------------
# Shared plumbing

def _resolve_file(args) -> tuple[Path, Path, str]:
    path = Path(args.file)
    if not path.is_file():
        raise UsageError(f"no such file: {args.file}")
    root = Path(args.root) if getattr(args, "root", None) else path.parent
    if not root.is_dir():
        raise UsageError(f"no such directory: {args.root}")
    try:
        rel = path.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        raise UsageError(f"{args.file} is not under the project root {root}")
    return path, root, rel


def _resolve_depth(args) -> int | None:
    depth = getattr(args, "depth", None)
    origin = "--depth"
    if depth is None:
        raw = os.environ.get("REGIONFORGE_DEPTH")
        if raw is None or raw.strip() == "":
            return None
        origin = "REGIONFORGE_DEPTH"
        try:
            depth = int(raw)
        except ValueError:
            raise UsageError(f"{origin} must be an integer, got {raw!r}")
    if depth < 0:
        raise UsageError(f"{origin} must be non-negative")
    return depth


def _build_options(args) -> DecompOptions:
    opts = DecompOptions()
    depth = _resolve_depth(args)
    if depth is not None:
        opts.unroll_depth = depth
    if getattr(args, "assuming", None):
        opts.side_condition = args.assuming
    if getattr(args, "basis", None):
        opts.basis = tuple(args.basis)
    return opts


def _print_diagnostics(report: AdmissionReport, stream) -> None:
    for d in report.diagnostics:
        loc = "" if d.span.line == 0 else f" at {d.span}"
        print(f"  {d.severity}: {d.message}{loc}", file=stream)


def _emit_admission(report: AdmissionReport, args) -> None:
    if args.json:
        print(report.dumps())
        return
    print(f"{report.source}: {report.status.value}")
    _print_diagnostics(report, sys.stdout)
    if report.opaque_symbols:
        print("opaque symbols: " + ", ".join(report.opaque_symbols))


def _load_model(args, need_context: bool = False):
    """Parse, resolve imports, and admit the model named on the command line.

    Returns (program, text, rel, context). Prints diagnostics and raises
    CliExit when the model does not admit cleanly.
    """
    path, root, rel = _resolve_file(args)
    text = path.read_text(encoding="utf-8")
    program = parse_program(text, source=rel)
    context: dict = {}
    if program.imports():
        mm = scan_project(root)
        if rel not in mm.entries:
            raise UsageError(f"{rel} is not part of the project under {root}")
        report = admit_closure(mm, rel)
        entry = mm.entries[rel]
        program = entry.admitted_program or entry.program or program
        if need_context:
            context = module_context(mm, rel)
    else:
        report = admit(program)
    if report.status is AdmissionStatus.ERROR_DURING_VALIDATION:
        print(f"{rel}: {report.status.value}", file=sys.stderr)
        _print_diagnostics(report, sys.stderr)
        raise CliExit(EXIT_FINDINGS)
    return program, text, rel, context


def _require_symbol(program: S.Program, name: str, file_arg: str) -> None:
    if name not in (program.symbols or {}):
        raise UsageError(f"no function {name!r} in {file_arg}")


def _scan_and_load(root_arg: str) -> Metamodel:
    root = Path(root_arg)
    if not root.is_dir():
        raise UsageError(f"no such directory: {root_arg}")
    mm = scan_project(root)
    load_state(mm)
    return mm


def _pretty_bindings(cx) -> None:
    for name, value in cx.bindings:
        print(f"  {name} = {V.pretty_value(value)}")


# ---------------------------------------------------------------------------
# Commands

def cmd_admit(args) -> int:
    path, root, rel = _resolve_file(args)
    text = path.read_text(encoding="utf-8")
    try:
        program = parse_program(text, source=rel)
    except ParseError as e:
        report = AdmissionReport(
            source=rel, status=AdmissionStatus.ERROR_DURING_VALIDATION,
            diagnostics=(Diagnostic("error", e.message,
                                    S.Span(e.line, e.col, e.line, e.col)),),
            opaque_symbols=())
        _emit_admission(report, args)
        return EXIT_OK if args.findings_ok else EXIT_FINDINGS
    if program.imports():
        mm = scan_project(root)
        if rel not in mm.entries:
            raise UsageError(f"{rel} is not part of the project under {root}")
        report = admit_closure(mm, rel)
    else:
        report = admit(program)
    _emit_admission(report, args)
    if report.status is AdmissionStatus.ERROR_DURING_VALIDATION:
        return EXIT_OK if args.findings_ok else EXIT_FINDINGS
    if report.status is AdmissionStatus.UNKNOWN:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_eval(args) -> int:
    program, text, rel, context = _load_model(args, need_context=True)
    taken = set(program.symbols or {})
    name = "cli_eval_"
    while name in taken:
        name += "x"
    wrapper_src = f"{text}\nlet {name} (cli_arg_: int) =\n{args.expr}\n"
    try:
        wrapped = parse_program(wrapper_src, source=rel)
    except ParseError as e:
        line = e.line - text.count("\n") - 2  # wrapper body starts the count
        loc = f" at {line}:{e.col}" if line >= 1 else ""
        raise UsageError(f"invalid expression{loc}: {e.message}")
    report = admit(wrapped, context or None)
    if report.status is AdmissionStatus.ERROR_DURING_VALIDATION:
        print("expression does not type-check:", file=sys.stderr)
        _print_diagnostics(report, sys.stderr)
        return EXIT_FINDINGS
    budget = args.steps if args.steps else DEFAULT_STEP_BUDGET
    value = eval_call(wrapped, name, [V.IntV(0)], step_budget=budget)
    print(V.dumps(value) if args.json else V.pretty_value(value))
    return EXIT_OK


def _print_regions(result: DecompResult) -> None:
    marker = "exhaustive" if result.exhaustive else "not exhaustive"
    print(f"function: {result.function}")
    print(f"regions: {len(result.regions)} ({marker})")
    for region in result.regions:
        kind = "" if region.kind == "normal" else f" [{region.kind}]"
        print(f"\nregion {region.region_id[:12]}{kind}")
        constraints = region.constraint_strings()
        if constraints:
            print("  constraints:")
            for c in constraints:
                print(f"    {c}")
        else:
            print("  constraints: (none)")
        inv = region.to_json()["invariant"]
        print(f"  invariant: {inv['pretty'] if inv else '(none)'}")
        if region.sample is not None:
            pretty = ", ".join(f"{k} = {V.pretty_value(v)}"
                               for k, v in sorted(region.sample.items()))
            print(f"  sample: {pretty}")
        if region.path_count > 1:
            print(f"  paths: {region.path_count}")
        if region.note:
            print(f"  note: {region.note}")


def cmd_decompose(args) -> int:
    program, _, _, _ = _load_model(args)
    _require_symbol(program, args.fn, args.file)
    result = decompose(program, args.fn, _build_options(args))
    if args.json:
        print(result.dumps())
    else:
        _print_regions(result)
    return EXIT_OK


def _emit_verdict(verdict: Verdict, args, witness_label: str) -> int:
    if args.json:
        print(verdict.dumps())
    else:
        print(f"goal: {verdict.goal}")
        print(f"status: {verdict.status} (unroll depth {verdict.depth})")
        if verdict.unknown_reason:
            print(f"reason: {verdict.unknown_reason}")
        if verdict.counterexample is not None:
            print(f"{witness_label}:")
            _pretty_bindings(verdict.counterexample)
            print(f"{witness_label} (json):")
            print(f"  {verdict.counterexample.dumps()}")
        if verdict.replay is not None:
            state = "confirmed" if verdict.replay.confirmed else "NOT confirmed"
            print(f"replay: {state} under concrete evaluation")
        if verdict.candidate is not None:
            print("candidate (unconfirmed):")
            _pretty_bindings(verdict.candidate)
    code = _STATUS_EXIT.get(verdict.status, EXIT_INTERNAL)
    if code == EXIT_FINDINGS and getattr(args, "findings_ok", False):
        return EXIT_OK
    return code


def cmd_verify(args) -> int:
    program, _, _, _ = _load_model(args)
    _require_symbol(program, args.fn, args.file)
    verdict = verify_goal(program, args.fn, _build_options(args))
    return _emit_verdict(verdict, args, "counterexample")


def cmd_instance(args) -> int:
    program, _, _, _ = _load_model(args)
    _require_symbol(program, args.fn, args.file)
    verdict = find_instance(program, args.fn, _build_options(args))
    return _emit_verdict(verdict, args, "instance")


def cmd_testgen(args) -> int:
    program, _, _, _ = _load_model(args)
    _require_symbol(program, args.fn, args.file)
    result = decompose(program, args.fn, _build_options(args))
    vectors = generate_tests(result, program)
    if args.json:
        out_text = vectors_dumps(vectors) + "\n"
    else:
        template = (TemplateSpec.load(args.template) if args.template
                    else TemplateSpec.bundled())
        out_text = render_tests(vectors, template, program=program)
    if args.out:
        Path(args.out).write_text(out_text, encoding="utf-8")
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(out_text)
    return EXIT_OK


def cmd_scan(args) -> int:
    mm = _scan_and_load(args.root)
    if args.json:
        print(json.dumps(mm.status_doc(), **_CANON))
        return EXIT_OK
    for path in sorted(mm.entries):
        entry = mm.entries[path]
        deps = f"  deps: {', '.join(entry.deps)}" if entry.deps else ""
        print(f"{path} [{entry.status}]{deps}")
    return EXIT_OK


def cmd_plan(args) -> int:
    mm = _scan_and_load(args.root)
    plan = plan_reformalization(mm)
    if args.json:
        print(plan.dumps())
        return EXIT_OK
    for warning in plan.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if not plan.tasks:
        print("nothing to formalize")
    for task in plan.tasks:
        print(f"{task.path} ({task.reason})")
    return EXIT_OK


def cmd_formalize(args) -> int:
    mm = _scan_and_load(args.root)
    plan = plan_reformalization(mm)
    if args.path:
        rel = args.path.replace(os.sep, "/")
        if rel not in mm.entries:
            try:
                rel = (Path(args.path).resolve()
                       .relative_to(Path(args.root).resolve()).as_posix())
            except (ValueError, OSError):
                pass
        if rel not in mm.entries:
            raise UsageError(f"{args.path} is not a model in {args.root}")
        keep = dependency_closure(mm, rel)
        plan = Plan(tuple(t for t in plan.tasks if t.path in keep),
                    plan.mm_state, plan.warnings)
    apply_plan(mm, plan, unroll_depth=_resolve_depth(args))
    save_state(mm)
    errors = sorted(p for p, e in mm.entries.items() if e.status == ERROR)
    if args.json:
        print(json.dumps(mm.status_doc(), **_CANON))
    else:
        for warning in plan.warnings:
            print(f"warning: {warning}", file=sys.stderr)
        if not plan.tasks:
            print("nothing to formalize")
        for task in plan.tasks:
            entry = mm.entries.get(task.path)
            status = entry.status if entry else "removed"
            print(f"{task.path}: {status} ({task.reason})")
        if errors:
            print(f"{len(errors)} model(s) in error: " + ", ".join(errors))
    if errors and not args.findings_ok:
        return EXIT_FINDINGS
    return EXIT_OK


def cmd_serve(args) -> int:
    root = Path(args.root)
    if not root.is_dir():
        raise UsageError(f"no such directory: {args.root}")
    options = ServeOptions(poll_interval=args.poll_interval,
                           debounce_ms=args.debounce_ms,
                           socket_path=args.socket,
                           unroll_depth=_resolve_depth(args))
    print(f"serving {root} (poll {args.poll_interval}s,"
          f" debounce {args.debounce_ms}ms)", file=sys.stderr)

    def _terminate(signum, frame):
        raise KeyboardInterrupt

    previous = signal.signal(signal.SIGTERM, _terminate)
    try:
        serve(root, options)
    except KeyboardInterrupt:
        print("stopped", file=sys.stderr)
    finally:
        signal.signal(signal.SIGTERM, previous)
    return EXIT_OK


def cmd_score(args) -> int:
    infile = Path(args.infile)
    if not infile.is_file():
        raise UsageError(f"no such file: {args.infile}")
    table = load_table(str(infile))
    report = aggregate_scores(table)
    if args.report:
        Path(args.report).write_text(report.dumps() + "\n", encoding="utf-8")
        print(f"wrote {args.report}", file=sys.stderr)
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
        print(f"wrote {args.csv}", file=sys.stderr)
    if args.json:
        print(report.dumps())
        return EXIT_OK
    ranked = sorted(report.models.items(),
                    key=lambda kv: (-kv[1]["overall"], kv[0]))
    width = max(len(m) for m, _ in ranked)
    print(f"{'model'.ljust(width)}  overall")
    for model, row in ranked:
        print(f"{model.ljust(width)}  {round3(row['overall'])}")
    print()
    kind_width = max(len(k) for k in KINDS)
    print(f"{'metric'.ljust(kind_width)}  mean   median")
    for kind in KINDS:
        stats = report.metrics[kind]
        print(f"{kind.ljust(kind_width)}  {round3(stats['mean'])}"
              f"  {round3(stats['median'])}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing

def _add_file_fn(sp, with_goal: bool = True) -> None:
    sp.add_argument("file", help="model source file (.mml)")
    if with_goal:
        sp.add_argument("fn", help="function to analyze")
    sp.add_argument("--root", help="project root for import resolution"
                    " (default: the file's directory)")


def _add_analysis_flags(sp) -> None:
    sp.add_argument("--depth", type=int, default=None,
                    help="recursion unroll bound (default 8; the"
                    " REGIONFORGE_DEPTH variable also sets it)")
    sp.add_argument("--assuming", metavar="FN",
                    help="keep only inputs on which this predicate holds")
    sp.add_argument("--basis", nargs="+", metavar="FN",
                    help="decompose through these interpreted functions")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="regionforge",
        description="Region-based analysis for small functional models.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="command")

    sp = sub.add_parser("admit", help="type-check a model file")
    _add_file_fn(sp, with_goal=False)
    sp.add_argument("--json", action="store_true",
                    help="emit the admission report as JSON")
    sp.add_argument("--findings-ok", action="store_true",
                    help="exit 0 even when admission fails")
    sp.set_defaults(handler=cmd_admit)

    sp = sub.add_parser("eval", help="evaluate an expression against a model")
    sp.add_argument("file", help="model source file (.mml)")
    sp.add_argument("expr", help="expression to evaluate")
    sp.add_argument("--root", help="project root for import resolution")
    sp.add_argument("--steps", type=int, default=None,
                    help="evaluation step budget")
    sp.add_argument("--json", action="store_true",
                    help="emit the result value as JSON")
    sp.set_defaults(handler=cmd_eval)

    sp = sub.add_parser("decompose",
                        help="partition a function's input space into regions")
    _add_file_fn(sp)
    _add_analysis_flags(sp)
    sp.add_argument("--json", action="store_true",
                    help="emit the region table as JSON")
    sp.set_defaults(handler=cmd_decompose)

    sp = sub.add_parser("verify",
                        help="check a boolean goal over all inputs up to the"
                        " unroll bound")
    _add_file_fn(sp)
    _add_analysis_flags(sp)
    sp.add_argument("--json", action="store_true",
                    help="emit the verdict as JSON")
    sp.add_argument("--findings-ok", action="store_true",
                    help="exit 0 even when the goal is refuted")
    sp.set_defaults(handler=cmd_verify)

    sp = sub.add_parser("instance",
                        help="search for an input that satisfies a goal")
    _add_file_fn(sp)
    _add_analysis_flags(sp)
    sp.add_argument("--json", action="store_true",
                    help="emit the verdict as JSON")
    sp.set_defaults(handler=cmd_instance)

    sp = sub.add_parser("testgen",
                        help="render unit tests from a region decomposition")
    _add_file_fn(sp)
    _add_analysis_flags(sp)
    sp.add_argument("--template", help="test template file"
                    " (default: the bundled Python template)")
    sp.add_argument("--out", help="write the rendered tests to this file")
    sp.add_argument("--json", action="store_true",
                    help="emit test vectors as JSON instead of rendering")
    sp.set_defaults(handler=cmd_testgen)

    sp = sub.add_parser("scan", help="list a project's models and imports")
    sp.add_argument("root", help="project root directory")
    sp.add_argument("--json", action="store_true",
                    help="emit the project status as JSON")
    sp.set_defaults(handler=cmd_scan)

    sp = sub.add_parser("plan",
                        help="show which models need (re)formalization")
    sp.add_argument("root", help="project root directory")
    sp.add_argument("--json", action="store_true",
                    help="emit the plan as JSON")
    sp.set_defaults(handler=cmd_plan)

    sp = sub.add_parser("formalize",
                        help="admit stale models, run their directives, and"
                        " cache the artifacts")
    sp.add_argument("root", help="project root directory")
    sp.add_argument("path", nargs="?",
                    help="limit work to this model and its dependencies")
    sp.add_argument("--depth", type=int, default=None,
                    help="recursion unroll bound for directives")
    sp.add_argument("--json", action="store_true",
                    help="emit the resulting project status as JSON")
    sp.add_argument("--findings-ok", action="store_true",
                    help="exit 0 even when models fail to admit")
    sp.set_defaults(handler=cmd_formalize)

    sp = sub.add_parser("serve",
                        help="watch a project tree and keep artifacts fresh")
    sp.add_argument("--root", default=".", help="project root directory")
    sp.add_argument("--poll-interval", type=float, default=0.5,
                    metavar="SECONDS", help="filesystem poll interval")
    sp.add_argument("--debounce-ms", type=int, default=200, metavar="MS",
                    help="quiet window before changes are applied")
    sp.add_argument("--socket", metavar="PATH",
                    help="answer status/formalize requests on this unix socket")
    sp.add_argument("--depth", type=int, default=None,
                    help="recursion unroll bound for directives")
    sp.set_defaults(handler=cmd_serve)

    sp = sub.add_parser("score",
                        help="score assessment rows and aggregate a report")
    sp.add_argument("--in", dest="infile", required=True, metavar="FILE",
                    help="assessments or scores document (JSON)")
    sp.add_argument("--report", metavar="FILE",
                    help="also write the JSON report here")
    sp.add_argument("--csv", metavar="FILE",
                    help="also write a CSV summary here")
    sp.add_argument("--json", action="store_true",
                    help="emit the report as JSON")
    sp.set_defaults(handler=cmd_score)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.handler(args)
    except CliExit as e:
        return e.code
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_FINDINGS
    except (DecompError, VerifyError, EvalError, TestgenError, MetricError,
            ProjectError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FINDINGS
    except BrokenPipeError:
        return EXIT_OK
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FINDINGS
    except Exception as e:  # pragma: no cover - guarded by REGIONFORGE_DEBUG
        if os.environ.get("REGIONFORGE_DEBUG"):
            raise
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
