"""Incremental, dependency-aware project formalization.

A project is a directory tree of model files.  Scanning parses every file,
resolves `import` declarations to sibling files, and records one entry per
file in a metamodel.  Formalization admits a file against the admitted
programs of its dependencies and executes its directives, caching every
artifact as canonical JSON.  When sources change, planning computes the
minimal re-formalization: the changed entries that were previously
formalized plus the formalized entries whose (transitive) dependency
context that invalidates — never anything else, so untouched entries keep
byte-identical artifacts.

Entries that were never formalized stay untouched by change-driven plans
(editing a file nobody formalized schedules no work); an empty change list
is the formalize-everything request.  Errored or unformalized dependencies
degrade to their declared signatures, imported as opaque symbols, so one
broken file lowers its dependents to admission-with-opaqueness instead of
failing them.  Import cycles are rejected per entry.

Change detection is by content hash, not timestamps.  The server loop
polls for changes, debounces them, applies the resulting plan, and
publishes a status file plus a line-delimited JSON query socket.
"""

from __future__ import annotations

import hashlib
import json
import os
import selectors
import socket
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import syntax as S
from .admission import AdmissionReport, AdmissionStatus, Diagnostic, admit
from .decomp import DecompError, decompose
from .parser import ParseError, parse_program
from .verify import VerifyError, find_instance, options_for_directive, verify_goal

UNKNOWN = AdmissionStatus.UNKNOWN.value
ERROR = AdmissionStatus.ERROR_DURING_VALIDATION.value
OPAQUE = AdmissionStatus.ADMITTED_WITH_OPAQUENESS.value
TRANSPARENT = AdmissionStatus.ADMITTED_TRANSPARENT.value

STATUS_DIR = ".regionforge"
STATUS_FILE = "status.json"

_CANON = dict(sort_keys=True, separators=(",", ":"))


class ProjectError(Exception):
    pass


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def module_of(path: str) -> str:
    """Root-relative file path -> dotted module name."""
    return path[:-len(".mml")].replace("/", ".") if path.endswith(".mml") else path


def path_of(module: str) -> str:
    """Dotted module name -> root-relative file path."""
    return module.replace(".", "/") + ".mml"


# ---------------------------------------------------------------------------
# Entries and the metamodel

@dataclass(frozen=True)
class CachedArtifacts:
    admission: str  # canonical AdmissionReport JSON
    directives: tuple[tuple[str, str], ...]  # (label, canonical JSON)

    @property
    def digest(self) -> str:
        h = hashlib.sha256(self.admission.encode())
        for label, text in self.directives:
            h.update(label.encode())
            h.update(text.encode())
        return h.hexdigest()


@dataclass
class ModelEntry:
    path: str  # root-relative, "/"-separated
    src_hash: Optional[str] = None  # None when the file is unreadable
    deps: tuple[str, ...] = ()  # resolved import target paths
    status: str = UNKNOWN
    program: Optional[S.Program] = None  # last successful parse
    program_src_hash: Optional[str] = None  # source that `program` parsed from
    parse_error: Optional[str] = None
    in_cycle: bool = False
    admitted_program: Optional[S.Program] = None
    # snapshot taken when the entry was last (re)formalized:
    formalized_src_hash: Optional[str] = None
    dependency_context_hash: Optional[str] = None
    artifacts: Optional[CachedArtifacts] = None
    last_good: Optional[CachedArtifacts] = None

    @property
    def is_last_good(self) -> bool:
        return self.artifacts is not None and self.artifacts is self.last_good

    @property
    def formalized(self) -> bool:
        return self.status != UNKNOWN


@dataclass
class Metamodel:
    root: Path
    entries: dict[str, ModelEntry] = field(default_factory=dict)

    def dependents_of(self, path: str) -> list[str]:
        return sorted(p for p, e in self.entries.items() if path in e.deps)

    def context_hash(self, path: str, _memo: Optional[dict] = None) -> str:
        """Hash of the entry's (transitive) dependency context."""
        memo = _memo if _memo is not None else {}
        if path in memo:
            return memo[path]
        memo[path] = "..."  # cycle guard; cyclic entries never formalize
        entry = self.entries.get(path)
        if entry is None:
            memo[path] = _sha(f"missing:{path}")
            return memo[path]
        parts = []
        for dep in sorted(entry.deps):
            d = self.entries.get(dep)
            if d is None:
                parts.append([dep, None, "missing", None])
            else:
                parts.append([dep, d.src_hash, d.status,
                              self.context_hash(dep, memo)])
        memo[path] = _sha(json.dumps(parts, **_CANON))
        return memo[path]

    def state_hash(self) -> str:
        memo: dict = {}
        rows = [[p, e.src_hash, e.status, self.context_hash(p, memo)]
                for p, e in sorted(self.entries.items())]
        return _sha(json.dumps(rows, **_CANON))

    def status_doc(self) -> dict:
        memo: dict = {}
        entries = {}
        for p, e in sorted(self.entries.items()):
            entries[p] = {
                "status": e.status,
                "src_hash": e.src_hash,
                "deps": sorted(e.deps),
                "dependency_context_hash": self.context_hash(p, memo),
                "artifact_digest": None if e.artifacts is None else e.artifacts.digest,
                "last_good": e.is_last_good,
                "diagnostic": e.parse_error,
            }
        return {
            "schema": "regionforge.status/1",
            "root": str(self.root),
            "entries": entries,
            "state": self.state_hash(),
        }


# ---------------------------------------------------------------------------
# Scanning

def _read_file(root: Path, path: str) -> tuple[Optional[str], Optional[str]]:
    try:
        text = (root / path).read_text(encoding="utf-8")
    except OSError as e:
        return None, e.strerror or str(e)
    return text, None


def _rescan_entry(mm: Metamodel, path: str) -> None:
    """Refresh one entry's source hash, parse, and import edges in place."""
    entry = mm.entries.setdefault(path, ModelEntry(path))
    text, err = _read_file(mm.root, path)
    if text is None:
        entry.src_hash = None
        entry.parse_error = err
        if entry.program is None:
            entry.status = ERROR
        return
    entry.src_hash = _sha(text)
    if entry.src_hash == entry.program_src_hash:
        entry.parse_error = None
        return
    try:
        program = parse_program(text, source=path)
    except ParseError as e:
        # keep the last-good parse (and its edges) for graceful degradation
        entry.parse_error = str(e)
        if entry.program is None:
            entry.status = ERROR
        return
    entry.parse_error = None
    entry.program = program
    entry.program_src_hash = entry.src_hash
    entry.deps = tuple(sorted({path_of(imp.module) for imp in program.imports()}))


def _mark_cycles(mm: Metamodel) -> None:
    """Entries on an import cycle are unformalizable and flagged as errors."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    counter = [0]
    cyclic: set[str] = set()

    def strongconnect(v: str) -> None:
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        entry = mm.entries.get(v)
        deps = entry.deps if entry else ()
        for w in deps:
            if w not in mm.entries:
                continue
            if w not in index:
                strongconnect(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            scc = []
            while True:
                w = stack.pop()
                on_stack.discard(w)
                scc.append(w)
                if w == v:
                    break
            if len(scc) > 1 or v in (mm.entries[v].deps if v in mm.entries else ()):
                cyclic.update(scc)

    for v in sorted(mm.entries):
        if v not in index:
            strongconnect(v)

    for p, e in mm.entries.items():
        was = e.in_cycle
        e.in_cycle = p in cyclic
        if e.in_cycle:
            e.status = ERROR
            e.parse_error = e.parse_error or "import cycle"
        elif was and e.parse_error == "import cycle":
            # cycle broken by an edit; entry must be formalized afresh
            e.parse_error = None
            e.status = UNKNOWN


def scan_project(root) -> Metamodel:
    root = Path(root)
    if not root.is_dir():
        raise ProjectError(f"project root is not a readable directory: {root}")
    mm = Metamodel(root=root)
    for file in sorted(root.rglob("*.mml")):
        rel = file.relative_to(root).as_posix()
        if STATUS_DIR in rel.split("/"):
            continue
        _rescan_entry(mm, rel)
    _mark_cycles(mm)
    return mm


# ---------------------------------------------------------------------------
# Planning

@dataclass(frozen=True)
class ChangeEvent:
    kind: str  # "created" | "modified" | "deleted"
    path: str


@dataclass(frozen=True)
class PlanTask:
    path: str
    reason: str  # "never-formalized" | "source-changed" | "dependency-changed"


@dataclass
class Plan:
    tasks: tuple[PlanTask, ...]
    mm_state: str
    warnings: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "schema": "regionforge.plan/1",
            "tasks": [{"path": t.path, "reason": t.reason} for t in self.tasks],
            "state": self.mm_state,
            "warnings": list(self.warnings),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), **_CANON)


def _toposort(mm: Metamodel, paths: set[str]) -> list[str]:
    pending = dict.fromkeys(sorted(paths))
    order: list[str] = []
    placed: set[str] = set()
    while pending:
        progressed = False
        for p in list(pending):
            deps = mm.entries[p].deps if p in mm.entries else ()
            if all(d not in pending or d in placed for d in deps):
                order.append(p)
                placed.add(p)
                del pending[p]
                progressed = True
        if not progressed:  # cycle among tasks; excluded earlier, be safe
            order.extend(sorted(pending))
            break
    return order


def plan_reformalization(mm: Metamodel,
                         changes: Optional[list[ChangeEvent]] = None) -> Plan:
    """Compute the minimal plan; an empty change list requests formalize-all.

    Change events are folded into the metamodel (rescans, removals) before
    task selection, so the plan binds to the post-change state hash.
    """
    warnings: list[str] = []
    reasons: dict[str, str] = {}
    deleted: set[str] = set()
    touched: set[str] = set()

    if changes:
        for ev in changes:
            if ev.kind == "deleted":
                if ev.path in mm.entries:
                    del mm.entries[ev.path]
                    deleted.add(ev.path)
                else:
                    warnings.append(f"unknown path ignored: {ev.path}")
            elif ev.kind in ("created", "modified"):
                if not (mm.root / ev.path).is_file():
                    warnings.append(f"unknown path ignored: {ev.path}")
                    continue
                prior = mm.entries.get(ev.path)
                prev_hash = prior.src_hash if prior else None
                _rescan_entry(mm, ev.path)
                if prior is None or mm.entries[ev.path].src_hash != prev_hash:
                    touched.add(ev.path)
            else:
                warnings.append(f"unknown change kind ignored: {ev.kind}")
        _mark_cycles(mm)
        for p in sorted(touched):
            if mm.entries[p].formalized and not mm.entries[p].in_cycle:
                reasons[p] = "source-changed"
    else:
        # formalize-all: everything never formalized, plus anything stale
        memo: dict = {}
        for p, e in sorted(mm.entries.items()):
            if e.in_cycle:
                continue
            if not e.formalized:
                reasons[p] = "never-formalized"
            elif e.formalized_src_hash != e.src_hash:
                reasons[p] = "source-changed"
            elif e.dependency_context_hash != mm.context_hash(p, memo):
                reasons[p] = "dependency-changed"

    # propagate to formalized dependents until no new invalidation appears
    while True:
        grew = False
        memo = {}
        for p, e in sorted(mm.entries.items()):
            if p in reasons or e.in_cycle or not e.formalized:
                continue
            stale_dep = any(
                d in reasons or d in deleted or d not in mm.entries
                for d in e.deps)
            if stale_dep or e.dependency_context_hash != mm.context_hash(p, memo):
                reasons[p] = "dependency-changed"
                grew = True
        if not grew:
            break

    # formalizing a task raises its unformalized dependencies too
    frontier = list(reasons)
    while frontier:
        p = frontier.pop()
        for d in mm.entries[p].deps if p in mm.entries else ():
            de = mm.entries.get(d)
            if de is None or d in reasons or de.in_cycle or de.formalized:
                continue
            reasons[d] = "never-formalized"
            frontier.append(d)

    order = _toposort(mm, set(reasons))
    tasks = tuple(PlanTask(p, reasons[p]) for p in order)
    return Plan(tasks=tasks, mm_state=mm.state_hash(), warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# Applying plans

def _signature_program(program: S.Program) -> S.Program:
    """Declared signatures only: types verbatim, functions made opaque."""
    decls: list[S.Decl] = []
    for d in program.decls:
        if isinstance(d, S.TypeDef):
            decls.append(d)
        elif isinstance(d, S.OpaqueDecl):
            decls.append(d)
        elif isinstance(d, S.FunDef):
            ret = d.ret_ty or d.inferred_ret
            if ret is not None:
                decls.append(S.OpaqueDecl(
                    name=d.name,
                    param_tys=tuple(p.ty for p in d.params),
                    ret_ty=ret,
                    span=d.span,
                ))
    return S.Program(decls=tuple(decls), source=program.source)


def _directive_label(d: S.Directive) -> str:
    label = f"{d.kind} {d.target}"
    if d.assuming:
        label += f" assuming {d.assuming}"
    if d.basis:
        label += " basis " + " ".join(d.basis)
    return label


def _run_directive(program: S.Program, d: S.Directive,
                   unroll_depth: Optional[int] = None) -> str:
    opts = options_for_directive(program, d, unroll_depth)
    try:
        if d.kind == "decompose":
            return decompose(program, d.target, opts).dumps()
        if d.kind == "verify":
            return verify_goal(program, d.target, opts).dumps()
        if d.kind == "instance":
            return find_instance(program, d.target, opts).dumps()
        raise ProjectError(f"unknown directive kind {d.kind!r}")
    except (DecompError, VerifyError, RecursionError) as e:
        return json.dumps({"schema": "regionforge.directive-error/1",
                           "directive": _directive_label(d),
                           "error": str(e)}, **_CANON)


def _error_report(path: str, message: str) -> AdmissionReport:
    diag = Diagnostic("error", message, S.DUMMY_SPAN)
    return AdmissionReport(source=path,
                           status=AdmissionStatus.ERROR_DURING_VALIDATION,
                           diagnostics=(diag,), opaque_symbols=())


class _ContextBuilder:
    """Resolves dependency programs, re-admitting restored entries on demand."""

    def __init__(self, mm: Metamodel):
        self.mm = mm

    def dependency_context(self, entry: ModelEntry) -> dict:
        ctx: dict = {}
        for dep in entry.deps:
            prog = self._dep_program(dep)
            if prog is not None:
                ctx[module_of(dep)] = prog
        return ctx

    def _dep_program(self, path: str, _seen: Optional[set] = None) -> Optional[S.Program]:
        seen = _seen if _seen is not None else set()
        if path in seen:
            return None
        seen.add(path)
        e = self.mm.entries.get(path)
        if e is None or e.program is None:
            return None
        admitted = e.status in (TRANSPARENT, OPAQUE)
        fresh = (e.formalized_src_hash == e.src_hash
                 and e.program_src_hash == e.src_hash)
        if admitted and fresh:
            if e.admitted_program is not None:
                return e.admitted_program
            # entry restored from cache: rebuild the admitted namespace
            ctx = {}
            for dep in e.deps:
                prog = self._dep_program(dep, seen)
                if prog is not None:
                    ctx[module_of(dep)] = prog
            report = admit(e.program, ctx)
            if report.status.value == e.status:
                e.admitted_program = e.program
                return e.program
        return _signature_program(e.program)


def apply_plan(mm: Metamodel, plan: Plan,
               unroll_depth: Optional[int] = None) -> Metamodel:
    if plan.mm_state != mm.state_hash():
        raise ProjectError("stale plan: metamodel changed since planning")
    builder = _ContextBuilder(mm)
    for task in plan.tasks:
        entry = mm.entries.get(task.path)
        if entry is None:
            continue
        _formalize(mm, builder, entry, unroll_depth)
    return mm


def _formalize(mm: Metamodel, builder: _ContextBuilder, entry: ModelEntry,
               unroll_depth: Optional[int] = None) -> None:
    entry.admitted_program = None
    entry.formalized_src_hash = entry.src_hash
    entry.dependency_context_hash = mm.context_hash(entry.path)
    stale_parse = (entry.program is None
                   or entry.program_src_hash != entry.src_hash)
    if entry.in_cycle or stale_parse:
        message = entry.parse_error or "source is not parseable"
        report = _error_report(entry.path, message)
        entry.status = ERROR
        entry.artifacts = CachedArtifacts(report.dumps(), ())
        # recompute: status switched to ERROR above changes dependent hashes
        entry.dependency_context_hash = mm.context_hash(entry.path)
        return

    program = entry.program
    context = builder.dependency_context(entry)
    try:
        report = admit(program, context)
    except RecursionError as e:  # defensive: malformed deep nesting
        report = _error_report(entry.path, f"admission crashed: {e}")

    directives: list[tuple[str, str]] = []
    if report.status in (AdmissionStatus.ADMITTED_TRANSPARENT,
                         AdmissionStatus.ADMITTED_WITH_OPAQUENESS):
        entry.admitted_program = program
        for d in program.directives():
            directives.append((_directive_label(d),
                               _run_directive(program, d, unroll_depth)))
    entry.status = report.status.value
    entry.artifacts = CachedArtifacts(report.dumps(), tuple(directives))
    if entry.status != ERROR:
        entry.last_good = entry.artifacts
    # the entry's own status feeds its dependents' hashes, not its own;
    # still, recompute defensively in case a dep was re-admitted on demand
    entry.dependency_context_hash = mm.context_hash(entry.path)


def dependency_closure(mm: Metamodel, path: str) -> set[str]:
    """All entries reachable from path through import edges, path included."""
    out: set[str] = set()
    frontier = [path]
    while frontier:
        p = frontier.pop()
        if p in out:
            continue
        out.add(p)
        entry = mm.entries.get(p)
        if entry is not None:
            frontier.extend(entry.deps)
    return out


def admit_closure(mm: Metamodel, path: str) -> AdmissionReport:
    """Admit one model plus its dependency closure, skipping directives.

    One-shot commands use this to resolve imports; entries are updated in
    place so the target's admitted program can be read back afterwards.
    """
    if path not in mm.entries:
        raise ProjectError(f"not a model in this project: {path}")
    builder = _ContextBuilder(mm)
    report: Optional[AdmissionReport] = None
    for p in _toposort(mm, dependency_closure(mm, path)):
        entry = mm.entries.get(p)
        if entry is None:
            continue
        stale_parse = (entry.program is None
                       or entry.program_src_hash != entry.src_hash)
        if entry.in_cycle or stale_parse:
            entry.status = ERROR
            entry.formalized_src_hash = entry.src_hash
            if p == path:
                message = entry.parse_error or "source is not parseable"
                report = _error_report(p, message)
            continue
        out = admit(entry.program, builder.dependency_context(entry))
        entry.status = out.status.value
        entry.formalized_src_hash = entry.src_hash
        if out.status in (AdmissionStatus.ADMITTED_TRANSPARENT,
                          AdmissionStatus.ADMITTED_WITH_OPAQUENESS):
            entry.admitted_program = entry.program
        if p == path:
            report = out
    if report is None:  # defensive: the toposort always yields path itself
        report = _error_report(path, "missing module file")
    return report


def module_context(mm: Metamodel, path: str) -> dict:
    """Dependency context (module name to admitted program) for one entry."""
    entry = mm.entries.get(path)
    if entry is None:
        raise ProjectError(f"not a model in this project: {path}")
    return _ContextBuilder(mm).dependency_context(entry)


# ---------------------------------------------------------------------------
# Persistence

def _artifact_file(root: Path, path: str) -> Path:
    return root / STATUS_DIR / "artifacts" / (_sha(path)[:32] + ".json")


def save_state(mm: Metamodel) -> None:
    out = mm.root / STATUS_DIR
    out.mkdir(parents=True, exist_ok=True)
    (out / "artifacts").mkdir(exist_ok=True)
    kept = set()
    for p, e in mm.entries.items():
        if e.artifacts is None:
            continue
        bundle = {
            "schema": "regionforge.artifacts/1",
            "path": p,
            "status": e.status,
            "src_hash": e.formalized_src_hash,
            "dependency_context_hash": e.dependency_context_hash,
            "admission": e.artifacts.admission,
            "directives": [list(pair) for pair in e.artifacts.directives],
        }
        file = _artifact_file(mm.root, p)
        kept.add(file.name)
        _atomic_write(file, json.dumps(bundle, **_CANON))
    for stray in (out / "artifacts").glob("*.json"):
        if stray.name not in kept:
            stray.unlink()
    _atomic_write(out / STATUS_FILE, json.dumps(mm.status_doc(), **_CANON))


def load_state(mm: Metamodel) -> None:
    """Adopt cached statuses/artifacts for entries whose source still matches."""
    for p, e in mm.entries.items():
        file = _artifact_file(mm.root, p)
        if not file.is_file():
            continue
        try:
            bundle = json.loads(file.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            continue
        if bundle.get("schema") != "regionforge.artifacts/1":
            continue
        if bundle.get("path") != p or bundle.get("src_hash") != e.src_hash:
            continue
        if e.in_cycle or e.parse_error:
            continue
        e.status = bundle["status"]
        e.formalized_src_hash = bundle["src_hash"]
        e.dependency_context_hash = bundle["dependency_context_hash"]
        e.artifacts = CachedArtifacts(
            bundle["admission"],
            tuple((label, text) for label, text in bundle["directives"]))
        if e.status != ERROR:
            e.last_good = e.artifacts


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Server loop

@dataclass
class ServeOptions:
    poll_interval: float = 0.5
    debounce_ms: int = 200
    socket_path: Optional[str] = None
    unroll_depth: Optional[int] = None


class ProjectServer:
    """Single-writer loop: poll for content changes, debounce, plan, apply."""

    def __init__(self, root, options: Optional[ServeOptions] = None):
        self.root = Path(root)
        self.options = options or ServeOptions()
        self.mm = scan_project(self.root)
        load_state(self.mm)
        self._known: dict[str, Optional[str]] = {
            p: e.src_hash for p, e in self.mm.entries.items()}
        self._pending: dict[str, ChangeEvent] = {}
        self._last_event = 0.0
        self._selector: Optional[selectors.BaseSelector] = None
        self._listener: Optional[socket.socket] = None
        self._buffers: dict = {}

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        plan = plan_reformalization(self.mm)  # formalize-all
        apply_plan(self.mm, plan, self.options.unroll_depth)
        save_state(self.mm)
        if self.options.socket_path:
            self._open_socket(self.options.socket_path)

    def close(self) -> None:
        if self._selector is not None:
            for key in list(self._selector.get_map().values()):
                try:
                    key.fileobj.close()
                except OSError:
                    pass
            self._selector.close()
            self._selector = None
        self._listener = None
        if self.options.socket_path and os.path.exists(self.options.socket_path):
            os.unlink(self.options.socket_path)

    def run_forever(self, should_stop=None) -> None:
        next_poll = 0.0
        while should_stop is None or not should_stop():
            now = time.monotonic()
            if now >= next_poll:
                self.poll_once()
                next_poll = now + self.options.poll_interval
            self.flush_due()
            self._serve_socket(timeout=0.05)

    # -- change detection --------------------------------------------------

    def poll_once(self) -> list[ChangeEvent]:
        """Hash the tree, queue change events; returns what was seen."""
        seen: dict[str, str] = {}
        for file in sorted(self.root.rglob("*.mml")):
            rel = file.relative_to(self.root).as_posix()
            if STATUS_DIR in rel.split("/"):
                continue
            try:
                seen[rel] = _sha(file.read_text(encoding="utf-8"))
            except OSError:
                continue
        events = []
        for rel, digest in seen.items():
            if rel not in self._known:
                events.append(ChangeEvent("created", rel))
            elif self._known[rel] != digest:
                events.append(ChangeEvent("modified", rel))
        for rel in self._known:
            if rel not in seen:
                events.append(ChangeEvent("deleted", rel))
        self._known = seen
        for ev in events:
            self._pending[ev.path] = ev
        if events:
            self._last_event = time.monotonic()
        return events

    def flush_due(self, now: Optional[float] = None) -> Optional[Plan]:
        """Apply pending changes once the debounce window has passed."""
        if not self._pending:
            return None
        now = time.monotonic() if now is None else now
        if (now - self._last_event) * 1000 < self.options.debounce_ms:
            return None
        events = [self._pending[p] for p in sorted(self._pending)]
        self._pending.clear()
        plan = plan_reformalization(self.mm, events)
        apply_plan(self.mm, plan, self.options.unroll_depth)
        # a newly created file is an implicit formalization request; the
        # change plan alone leaves it Unknown unless something imports it
        created = sorted({ev.path for ev in events
                          if ev.kind == "created" and ev.path in self.mm.entries
                          and not self.mm.entries[ev.path].formalized})
        extra: tuple[PlanTask, ...] = ()
        if created:
            target_plan = self._plan_targets(created)
            if target_plan.tasks:
                apply_plan(self.mm, target_plan, self.options.unroll_depth)
                extra = target_plan.tasks
        save_state(self.mm)
        return Plan(tasks=plan.tasks + extra, mm_state=self.mm.state_hash(),
                    warnings=plan.warnings)

    def _plan_targets(self, paths: list[str]) -> Plan:
        """Formalize-all plan restricted to the targets' dependency closures."""
        plan = plan_reformalization(self.mm)
        keep: set[str] = set()
        for p in paths:
            keep |= self._closure(p)
        return Plan(tasks=tuple(t for t in plan.tasks if t.path in keep),
                    mm_state=plan.mm_state, warnings=plan.warnings)

    # -- queries -----------------------------------------------------------

    def handle_request(self, request: dict) -> dict:
        cmd = request.get("cmd")
        if cmd == "status":
            return self.mm.status_doc()
        if cmd == "formalize":
            path = request.get("path")
            if path is not None and path not in self.mm.entries:
                return {"error": f"unknown path: {path}"}
            if path is None:
                plan = plan_reformalization(self.mm)
            else:
                plan = self._plan_targets([path])
            apply_plan(self.mm, plan, self.options.unroll_depth)
            save_state(self.mm)
            return {
                "applied": [t.path for t in plan.tasks],
                "entries": self.mm.status_doc()["entries"],
            }
        return {"error": f"unknown command: {cmd!r}"}

    def _closure(self, path: str) -> set[str]:
        return dependency_closure(self.mm, path)

    # -- socket plumbing ----------------------------------------------------

    def _open_socket(self, path: str) -> None:
        if os.path.exists(path):
            raise ProjectError(f"socket path already exists: {path}")
        listener = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        try:
            listener.bind(path)
        except OSError as e:
            listener.close()
            raise ProjectError(f"cannot bind socket {path}: {e.strerror}")
        listener.listen()
        listener.setblocking(False)
        self._selector = selectors.DefaultSelector()
        self._selector.register(listener, selectors.EVENT_READ, "accept")
        self._listener = listener

    def _serve_socket(self, timeout: float = 0.0) -> None:
        if self._selector is None:
            if timeout:
                time.sleep(timeout)
            return
        for key, _ in self._selector.select(timeout):
            if key.data == "accept":
                conn, _addr = key.fileobj.accept()
                conn.setblocking(False)
                self._selector.register(conn, selectors.EVENT_READ, "conn")
                self._buffers[conn] = b""
            else:
                conn = key.fileobj
                try:
                    chunk = conn.recv(65536)
                except OSError:
                    chunk = b""
                if not chunk:
                    self._drop(conn)
                    continue
                self._buffers[conn] += chunk
                while b"\n" in self._buffers[conn]:
                    line, self._buffers[conn] = self._buffers[conn].split(b"\n", 1)
                    if not line.strip():
                        continue
                    try:
                        request = json.loads(line)
                    except json.JSONDecodeError as e:
                        response = {"error": f"bad request: {e.msg}"}
                    else:
                        response = self.handle_request(request)
                    try:
                        conn.sendall(json.dumps(response, **_CANON).encode() + b"\n")
                    except OSError:
                        self._drop(conn)
                        break

    def _drop(self, conn) -> None:
        try:
            self._selector.unregister(conn)
        except (KeyError, ValueError):
            pass
        self._buffers.pop(conn, None)
        try:
            conn.close()
        except OSError:
            pass


def serve(root, options: Optional[ServeOptions] = None,
          should_stop=None) -> None:
    server = ProjectServer(root, options)
    try:
        server.start()
        server.run_forever(should_stop)
    finally:
        server.close()
