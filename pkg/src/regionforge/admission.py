"""Admission: static validation of parsed programs.

Admission binds imports against a dependency context, checks types,
arities, match exhaustiveness, declaration order, and guarded type
recursion, then grades the program: AdmittedTransparent (no diagnostics,
no opaque symbols), AdmittedWithOpaqueness (clean but some symbols lack
bodies), or ErrorDuringValidation.  Every expression node receives exactly
one inferred type; the evaluator, solver, and decomposer all consume these
annotations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import syntax as S
from .syntax import Span


class AdmissionStatus(Enum):
    UNKNOWN = "Unknown"
    ERROR_DURING_VALIDATION = "ErrorDuringValidation"
    ADMITTED_WITH_OPAQUENESS = "AdmittedWithOpaqueness"
    ADMITTED_TRANSPARENT = "AdmittedTransparent"


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error"
    message: str
    span: Span

    def to_json(self) -> dict:
        return {
            "severity": self.severity,
            "message": self.message,
            "line": self.span.line,
            "col": self.span.col,
        }


@dataclass
class AdmissionReport:
    source: str
    status: AdmissionStatus
    diagnostics: tuple[Diagnostic, ...]
    opaque_symbols: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "schema": "regionforge.admission/1",
            "source": self.source,
            "status": self.status.value,
            "diagnostics": [d.to_json() for d in self.diagnostics],
            "opaque_symbols": list(self.opaque_symbols),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


# module path -> admitted (or signature-degraded) Program
DependencyContext = dict


class _Checker:
    def __init__(self, program: S.Program, context: Optional[DependencyContext]):
        self.program = program
        self.context = context or {}
        self.diags: list[Diagnostic] = []
        self.types: dict[str, S.TypeDef] = {}
        self.ctor_index: dict[str, S.TypeDef] = {}
        self.values: dict[str, object] = {}  # FunDef | OpaqueDecl
        self.axioms: dict[str, S.AxiomDecl] = {}
        self.opaque: set[str] = set()
        self.current_fn: Optional[S.FunDef] = None

    def error(self, message: str, span: Span) -> None:
        self.diags.append(Diagnostic("error", message, span))

    # -- declarations --------------------------------------------------------

    def run(self) -> AdmissionReport:
        for decl in self.program.decls:
            if isinstance(decl, S.ImportDecl):
                self.check_import(decl)
            elif isinstance(decl, S.TypeDef):
                self.declare_type(decl)
            elif isinstance(decl, S.OpaqueDecl):
                self.declare_opaque(decl)
            elif isinstance(decl, S.FunDef):
                self.check_fundef(decl)
            elif isinstance(decl, S.AxiomDecl):
                self.check_axiom(decl)
            elif isinstance(decl, S.Directive):
                self.check_directive(decl)
        self.check_type_recursion()

        has_error = any(d.severity == "error" for d in self.diags)
        if has_error:
            status = AdmissionStatus.ERROR_DURING_VALIDATION
        elif self.opaque:
            status = AdmissionStatus.ADMITTED_WITH_OPAQUENESS
        else:
            status = AdmissionStatus.ADMITTED_TRANSPARENT

        self.program.symbols = dict(self.values)
        self.program.types = dict(self.types)
        self.program.ctor_index = dict(self.ctor_index)
        return AdmissionReport(
            source=self.program.source,
            status=status,
            diagnostics=tuple(self.diags),
            opaque_symbols=tuple(sorted(self.opaque)),
        )

    def check_import(self, decl: S.ImportDecl) -> None:
        dep = self.context.get(decl.module)
        if dep is None:
            self.error(f"unresolved import: module {decl.module!r} is not in the dependency context", decl.span)
            return
        # the dependency's resolved namespace includes symbols it imported
        # itself, so transparent bodies stay evaluable in dependents
        values = dep.symbols or {
            d.name: d for d in dep.decls if isinstance(d, (S.FunDef, S.OpaqueDecl))}
        types = dep.types or {
            d.name: d for d in dep.decls if isinstance(d, S.TypeDef)}
        dep_opaque = {
            n for n, d in values.items() if isinstance(d, S.OpaqueDecl)}
        for name in decl.names:
            if name not in values and name not in types:
                self.error(f"unresolved import: {decl.module!r} does not declare {name!r}", decl.span)
        # requested names document intent; the whole admitted context is
        # injected so cross-module evaluation resolves transitively
        for name, d in types.items():
            self.bind_imported_type(name, d, decl.span)
        for name, d in values.items():
            self.bind_imported_value(name, d, decl.span,
                                     opaque=name in dep_opaque)

    def bind_imported_value(self, name: str, d, span: Span, opaque: bool) -> None:
        prior = self.values.get(name)
        if prior is d:
            return
        if prior is not None:
            self.error(f"duplicate value name {name!r}", span)
            return
        self.values[name] = d
        if opaque:
            self.opaque.add(name)

    def bind_imported_type(self, name: str, d: S.TypeDef, span: Span) -> None:
        prior = self.types.get(name)
        if prior is d:
            return
        if prior is not None:
            self.error(f"duplicate type name {name!r}", span)
            return
        self.declare_type(d, imported=True)

    def declare_type(self, decl: S.TypeDef, imported: bool = False) -> None:
        if decl.name in self.types:
            self.error(f"duplicate type name {decl.name!r}", decl.span)
            return
        self.types[decl.name] = decl
        if decl.is_record:
            names = [n for n, _ in decl.record_fields]
            if len(names) != len(set(names)):
                self.error(f"duplicate field name in record type {decl.name!r}", decl.span)
            for _, fty in decl.record_fields:
                self.check_ty(fty, decl.span)
        else:
            for c in decl.ctors:
                if c.name in self.ctor_index:
                    self.error(f"duplicate constructor name {c.name!r}", c.span if not imported else decl.span)
                    continue
                self.ctor_index[c.name] = decl
                for t in c.arg_tys:
                    self.check_ty(t, decl.span)

    def declare_opaque(self, decl: S.OpaqueDecl) -> None:
        if decl.name in self.values:
            self.error(f"duplicate value name {decl.name!r}", decl.span)
            return
        for t in decl.param_tys:
            self.check_ty(t, decl.span)
        self.check_ty(decl.ret_ty, decl.span)
        self.values[decl.name] = decl
        self.opaque.add(decl.name)

    def check_ty(self, ty: S.Ty, span: Span) -> None:
        if isinstance(ty, S.NamedTy):
            if ty.name not in self.types:
                self.error(f"unknown type {ty.name!r}", span)
        elif isinstance(ty, S.ListTy):
            self.check_ty(ty.elem, span)
        elif isinstance(ty, S.TupleTy):
            for t in ty.items:
                self.check_ty(t, span)

    def check_type_recursion(self) -> None:
        # recursion must pass through a variant constructor or a list;
        # record fields and tuple slots alone cannot close a cycle
        def unguarded(ty: S.Ty, acc: set[str]) -> None:
            if isinstance(ty, S.NamedTy):
                acc.add(ty.name)
            elif isinstance(ty, S.TupleTy):
                for t in ty.items:
                    unguarded(t, acc)

        edges: dict[str, set[str]] = {}
        for name, td in self.types.items():
            acc: set[str] = set()
            if td.is_record:
                for _, fty in td.record_fields:
                    unguarded(fty, acc)
            edges[name] = acc

        state: dict[str, int] = {}

        def visit(n: str, origin_span: Span) -> bool:
            if state.get(n) == 1:
                return True
            if state.get(n) == 2:
                return False
            state[n] = 1
            for m in sorted(edges.get(n, ())):
                if m in edges and visit(m, origin_span):
                    return True
            state[n] = 2
            return False

        for name in sorted(edges):
            if state.get(name) is None and visit(name, self.types[name].span):
                self.error(
                    f"type {name!r} recurses through record fields or tuple slots only; "
                    "recursion must pass through a variant constructor",
                    self.types[name].span,
                )
                return

    def check_fundef(self, decl: S.FunDef) -> None:
        if decl.name in self.values:
            self.error(f"duplicate value name {decl.name!r}", decl.span)
            return
        env: dict[str, S.Ty] = {}
        seen_params = set()
        for p in decl.params:
            if p.name in seen_params:
                self.error(f"duplicate parameter {p.name!r}", p.span)
            seen_params.add(p.name)
            self.check_ty(p.ty, p.span)
            env[p.name] = p.ty
        if decl.ret_ty is not None:
            self.check_ty(decl.ret_ty, decl.span)
        if decl.is_rec and decl.ret_ty is None:
            self.error(f"recursive function {decl.name!r} needs a declared return type", decl.span)
        prev = self.current_fn
        self.current_fn = decl
        if decl.is_rec:
            self.values[decl.name] = decl  # visible to its own body
        body_ty = self.synth(decl.body, env, decl.ret_ty)
        self.current_fn = prev
        if decl.ret_ty is not None and body_ty is not None and body_ty != decl.ret_ty:
            self.error(
                f"function {decl.name!r} declares return type {decl.ret_ty} but its body has type {body_ty}",
                decl.span,
            )
        decl.inferred_ret = decl.ret_ty if decl.ret_ty is not None else body_ty
        self.values[decl.name] = decl

    def check_axiom(self, decl: S.AxiomDecl) -> None:
        if decl.name in self.axioms:
            self.error(f"duplicate axiom name {decl.name!r}", decl.span)
            return
        env: dict[str, S.Ty] = {}
        for p in decl.params:
            self.check_ty(p.ty, p.span)
            env[p.name] = p.ty
        ty = self.synth(decl.body, env, S.BOOL)
        if ty is not None and ty != S.BOOL:
            self.error(f"axiom {decl.name!r} must be boolean, found {ty}", decl.span)
        self.axioms[decl.name] = decl

    def check_directive(self, decl: S.Directive) -> None:
        target = self.values.get(decl.target)
        if target is None:
            self.error(f"directive target {decl.target!r} is not declared (declarations must precede use)", decl.span)
            return
        if decl.kind in ("verify", "instance"):
            ret = target.return_ty if isinstance(target, S.FunDef) else target.ret_ty
            if ret is not None and ret != S.BOOL:
                self.error(f"{decl.kind} target {decl.target!r} must return bool, found {ret}", decl.span)
        if decl.assuming is not None:
            side = self.values.get(decl.assuming)
            if side is None or not isinstance(side, S.FunDef):
                self.error(f"side condition {decl.assuming!r} must name a function", decl.span)
            else:
                tgt_params = tuple(p.ty for p in target.params) if isinstance(target, S.FunDef) else target.param_tys
                side_params = tuple(p.ty for p in side.params)
                if side_params != tgt_params:
                    self.error(
                        f"side condition {decl.assuming!r} must take the same parameters as {decl.target!r}",
                        decl.span,
                    )
                if side.return_ty is not None and side.return_ty != S.BOOL:
                    self.error(f"side condition {decl.assuming!r} must return bool", decl.span)
        for b in decl.basis:
            if b not in self.values:
                self.error(f"basis symbol {b!r} is not declared", decl.span)

    # -- expressions ----------------------------------------------------------

    def synth(self, e: S.Expr, env: dict[str, S.Ty], hint: Optional[S.Ty]) -> Optional[S.Ty]:
        ty = self._synth(e, env, hint)
        e.ty = ty
        return ty

    def _synth(self, e: S.Expr, env: dict[str, S.Ty], hint: Optional[S.Ty]) -> Optional[S.Ty]:
        if isinstance(e, S.IntLit):
            return S.INT
        if isinstance(e, S.RatLit):
            return S.RAT
        if isinstance(e, S.BoolLit):
            return S.BOOL
        if isinstance(e, S.Var):
            if e.name in env:
                return env[e.name]
            if e.name in self.values:
                self.error(f"{e.name!r} is a function; functions are not values in a first-order language", e.span)
                return None
            self.error(f"unbound symbol {e.name!r}", e.span)
            return None
        if isinstance(e, S.Unary):
            if e.op == "not":
                self.expect(e.arg, env, S.BOOL)
                return S.BOOL
            t = self.synth(e.arg, env, hint if hint in (S.INT, S.RAT) else None)
            if t is not None and t not in (S.INT, S.RAT):
                self.error(f"unary '-' needs int or rat, found {t}", e.span)
                return None
            return t
        if isinstance(e, S.Binary):
            return self.synth_binary(e, env)
        if isinstance(e, S.If):
            self.expect(e.cond, env, S.BOOL)
            t = self.synth(e.then, env, hint)
            if t is None:
                return self.synth(e.orelse, env, hint)
            self.expect(e.orelse, env, t)
            return t
        if isinstance(e, S.Match):
            return self.synth_match(e, env, hint)
        if isinstance(e, S.Let):
            bt = self.synth(e.bound, env, None)
            inner = dict(env)
            if bt is not None:
                inner[e.name] = bt
            return self.synth(e.body, inner, hint)
        if isinstance(e, S.Call):
            return self.synth_call(e, env)
        if isinstance(e, S.RecordCtor):
            return self.synth_record(e, env, hint)
        if isinstance(e, S.RecordUpdate):
            return self.synth_update(e, env, hint)
        if isinstance(e, S.FieldProj):
            return self.synth_proj(e, env)
        if isinstance(e, S.VariantCtor):
            return self.synth_variant(e, env, hint)
        if isinstance(e, S.TupleCtor):
            hints: list[Optional[S.Ty]] = [None] * len(e.items)
            if isinstance(hint, S.TupleTy) and len(hint.items) == len(e.items):
                hints = list(hint.items)
            tys = [self.synth(item, env, h) for item, h in zip(e.items, hints)]
            if any(t is None for t in tys):
                return None
            return S.TupleTy(tuple(tys))
        raise TypeError(f"unhandled expression {type(e).__name__}")

    def expect(self, e: S.Expr, env: dict[str, S.Ty], want: S.Ty) -> None:
        got = self.synth(e, env, want)
        if got is not None and got != want:
            self.error(f"expected {want}, found {got}", e.span)

    def synth_binary(self, e: S.Binary, env: dict[str, S.Ty]) -> Optional[S.Ty]:
        op = e.op
        if op in ("&&", "||", "==>"):
            self.expect(e.left, env, S.BOOL)
            self.expect(e.right, env, S.BOOL)
            return S.BOOL
        if op in ("=", "<>"):
            lt = self.synth(e.left, env, None)
            if lt is None:
                self.synth(e.right, env, None)
                return S.BOOL
            self.expect(e.right, env, lt)
            return S.BOOL
        if op in ("<", "<=", ">", ">="):
            lt = self.synth(e.left, env, None)
            if lt is not None and lt not in (S.INT, S.RAT):
                self.error(f"comparison needs int or rat operands, found {lt}", e.span)
                self.synth(e.right, env, None)
                return S.BOOL
            self.expect(e.right, env, lt if lt is not None else S.INT)
            return S.BOOL
        if op in ("div", "mod"):
            self.expect(e.left, env, S.INT)
            self.expect(e.right, env, S.INT)
            return S.INT
        # + - *
        lt = self.synth(e.left, env, None)
        if lt is None:
            self.synth(e.right, env, None)
            return None
        if lt not in (S.INT, S.RAT):
            self.error(f"arithmetic needs int or rat operands, found {lt}", e.span)
            self.synth(e.right, env, None)
            return None
        self.expect(e.right, env, lt)
        return lt

    def synth_match(self, e: S.Match, env: dict[str, S.Ty], hint: Optional[S.Ty]) -> Optional[S.Ty]:
        st = self.synth(e.scrutinee, env, None)
        result: Optional[S.Ty] = None
        if st is None:
            for arm in e.arms:
                self.synth(arm.body, env, hint)
            return None
        if isinstance(st, S.ListTy):
            ctor_args = {S.LIST_NIL: (), S.LIST_CONS: (st.elem, st)}
            universe = [S.LIST_NIL, S.LIST_CONS]
            what = f"{st}"
        elif isinstance(st, S.NamedTy) and st.name in self.types and not self.types[st.name].is_record:
            td = self.types[st.name]
            ctor_args = {c.name: c.arg_tys for c in td.ctors}
            universe = [c.name for c in td.ctors]
            what = st.name
        else:
            self.error(f"match needs a variant or list scrutinee, found {st}", e.span)
            for arm in e.arms:
                self.synth(arm.body, env, hint)
            return None
        seen = set()
        for arm in e.arms:
            if arm.ctor not in ctor_args:
                self.error(f"constructor {arm.ctor!r} does not belong to {what}", arm.span)
                self.synth(arm.body, env, hint)
                continue
            if arm.ctor in seen:
                self.error(f"duplicate match arm for {arm.ctor!r}", arm.span)
            seen.add(arm.ctor)
            args = ctor_args[arm.ctor]
            inner = dict(env)
            if len(arm.binders) != len(args):
                self.error(
                    f"constructor {arm.ctor!r} has {len(args)} field(s), pattern binds {len(arm.binders)}",
                    arm.span,
                )
            else:
                for name, ty in zip(arm.binders, args):
                    inner[name] = ty
            t = self.synth(arm.body, inner, hint if result is None else result)
            if t is not None:
                if result is None:
                    result = t
                elif t != result:
                    self.error(f"match arms disagree: {result} vs {t}", arm.span)
        missing = [c for c in universe if c not in seen]
        if missing:
            self.error(
                f"match is not exhaustive; missing constructor(s): {', '.join(missing)}",
                e.span,
            )
        return result

    def synth_call(self, e: S.Call, env: dict[str, S.Ty]) -> Optional[S.Ty]:
        target = self.values.get(e.fn)
        if target is None:
            if e.fn in env:
                self.error(f"{e.fn!r} is a value, not a function (calls must be fully applied)", e.span)
            else:
                self.error(f"unbound symbol {e.fn!r}", e.span)
            for a in e.args:
                self.synth(a, env, None)
            return None
        if isinstance(target, S.FunDef):
            if target is self.current_fn and not target.is_rec:
                self.error(f"{e.fn!r} calls itself but is not declared 'rec'", e.span)
            param_tys = tuple(p.ty for p in target.params)
            ret = target.return_ty
        else:
            param_tys = target.param_tys
            ret = target.ret_ty
        if len(e.args) != len(param_tys):
            self.error(
                f"{e.fn!r} takes {len(param_tys)} argument(s), got {len(e.args)} (calls are fully applied)",
                e.span,
            )
            for a in e.args:
                self.synth(a, env, None)
            return ret
        for a, pt in zip(e.args, param_tys):
            self.expect(a, env, pt)
        return ret

    def synth_record(self, e: S.RecordCtor, env: dict[str, S.Ty], hint: Optional[S.Ty]) -> Optional[S.Ty]:
        written = [n for n, _ in e.fields]
        if len(written) != len(set(written)):
            self.error("duplicate field in record literal", e.span)
        fset = frozenset(written)
        candidates = []
        if isinstance(hint, S.NamedTy) and hint.name in self.types and self.types[hint.name].is_record:
            td = self.types[hint.name]
            if frozenset(n for n, _ in td.record_fields) == fset:
                candidates = [td]
        if not candidates:
            candidates = [
                td for td in self.types.values()
                if td.is_record and frozenset(n for n, _ in td.record_fields) == fset
            ]
        if not candidates:
            self.error(f"no record type has exactly the fields {{{', '.join(sorted(fset))}}}", e.span)
            for _, v in e.fields:
                self.synth(v, env, None)
            return None
        if len(candidates) > 1:
            names = ", ".join(sorted(td.name for td in candidates))
            self.error(f"ambiguous record literal; could be any of: {names}", e.span)
            return None
        td = candidates[0]
        by_name = dict(td.record_fields)
        for n, v in e.fields:
            self.expect(v, env, by_name[n])
        e.type_name = td.name
        return S.NamedTy(td.name)

    def synth_update(self, e: S.RecordUpdate, env: dict[str, S.Ty], hint: Optional[S.Ty]) -> Optional[S.Ty]:
        bt = self.synth(e.base, env, hint)
        if bt is None:
            for _, v in e.fields:
                self.synth(v, env, None)
            return None
        if not (isinstance(bt, S.NamedTy) and bt.name in self.types and self.types[bt.name].is_record):
            self.error(f"record update needs a record, found {bt}", e.span)
            return None
        td = self.types[bt.name]
        by_name = dict(td.record_fields)
        written = [n for n, _ in e.fields]
        if len(written) != len(set(written)):
            self.error("duplicate field in record update", e.span)
        for n, v in e.fields:
            if n not in by_name:
                self.error(f"record type {bt.name!r} has no field {n!r}", e.span)
                self.synth(v, env, None)
                continue
            self.expect(v, env, by_name[n])
        e.type_name = td.name
        return S.NamedTy(td.name)

    def synth_proj(self, e: S.FieldProj, env: dict[str, S.Ty]) -> Optional[S.Ty]:
        at = self.synth(e.arg, env, None)
        if at is None:
            return None
        if isinstance(e.field, int):
            if not isinstance(at, S.TupleTy):
                self.error(f"positional projection .{e.field} needs a tuple, found {at}", e.span)
                return None
            if not (0 <= e.field < len(at.items)):
                self.error(f"tuple has {len(at.items)} slots; .{e.field} is out of range", e.span)
                return None
            return at.items[e.field]
        if isinstance(at, S.NamedTy) and at.name in self.types and self.types[at.name].is_record:
            td = self.types[at.name]
            for n, t in td.record_fields:
                if n == e.field:
                    return t
            self.error(f"record type {at.name!r} has no field {e.field!r}", e.span)
            return None
        self.error(f"field projection needs a record, found {at}", e.span)
        return None

    def synth_variant(self, e: S.VariantCtor, env: dict[str, S.Ty], hint: Optional[S.Ty]) -> Optional[S.Ty]:
        if e.ctor == S.LIST_NIL:
            if isinstance(hint, S.ListTy):
                return hint
            self.error("cannot infer the element type of []; add context", e.span)
            return None
        if e.ctor == S.LIST_CONS:
            head_hint = hint.elem if isinstance(hint, S.ListTy) else None
            ht = self.synth(e.args[0], env, head_hint)
            if ht is None and isinstance(hint, S.ListTy):
                ht = hint.elem
            if ht is None:
                self.synth(e.args[1], env, hint)
                return hint if isinstance(hint, S.ListTy) else None
            lt = S.ListTy(ht)
            self.expect(e.args[1], env, lt)
            return lt
        td = self.ctor_index.get(e.ctor)
        if td is None:
            self.error(f"unknown constructor {e.ctor!r}", e.span)
            for a in e.args:
                self.synth(a, env, None)
            return None
        ctor = next(c for c in td.ctors if c.name == e.ctor)
        if len(e.args) != len(ctor.arg_tys):
            self.error(
                f"constructor {e.ctor!r} takes {len(ctor.arg_tys)} argument(s), got {len(e.args)}",
                e.span,
            )
            for a in e.args:
                self.synth(a, env, None)
            return S.NamedTy(td.name)
        for a, t in zip(e.args, ctor.arg_tys):
            self.expect(a, env, t)
        e.type_name = td.name
        return S.NamedTy(td.name)


def admit(program: S.Program, context: Optional[DependencyContext] = None) -> AdmissionReport:
    return _Checker(program, context).run()
