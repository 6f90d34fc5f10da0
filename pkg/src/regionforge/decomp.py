"""Region decomposition by symbolic execution.

A function's input space is split into regions: each region is a canonical
set of path constraints over flattened input leaves plus the value the
function produces there (a concrete value when the path computes one, a
symbolic term otherwise).  Records and tuples are flattened eagerly into
dotted leaf names ("o.amount"); variant and list inputs stay packed until a
match or equality forces a constructor split, which forks the path once per
constructor and caches the refined shape.

Recursion is handled by bounded inlining: entering a function already being
inlined on the current path consumes one unit of unroll budget, and paths
that would exceed it are closed as bound-exhausted regions.  Fresh symbolic
values of recursive type carry a construction-depth budget with the same
bound; a constructor whose payload would need more depth than remains is
likewise closed off as bound-exhausted.

Functions named in a directive's basis list are not inlined: calls to them
become uninterpreted atoms, shared by structural equality.  Declared-only
(opaque) functions always become atoms, and any axioms mentioning them are
instantiated over each new atom's arguments.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Union

from . import solver as SL
from . import syntax as S
from . import values as V
from .solver import (
    ConstraintSet, SApp, SBoolConst, SCtorTest, SFieldSel, SIntConst,
    SRatConst, STerm, SValConst, SVar, TypeContext, canonicalize, check_sat,
    eval_sterm, key_of, pretty_term, s_and, s_cmp, s_not, s_or, serialize,
)
from .values import Value

if sys.getrecursionlimit() < 100_000:
    sys.setrecursionlimit(100_000)

DEFAULT_UNROLL_DEPTH = 8


class DecompError(Exception):
    pass


# ---------------------------------------------------------------------------
# Symbolic values

@dataclass(frozen=True)
class SymRecord:
    type_name: str
    fields: tuple[tuple[str, "SymVal"], ...]  # declaration order

    def get(self, name: str) -> "SymVal":
        for k, v in self.fields:
            if k == name:
                return v
        raise DecompError(f"no field {name!r}")


@dataclass(frozen=True)
class SymTuple:
    items: tuple["SymVal", ...]


@dataclass(frozen=True)
class SymVariant:
    ctor: str
    args: tuple["SymVal", ...]
    ty: S.Ty


@dataclass(frozen=True)
class SymFree:
    """Unexpanded symbolic ADT value, keyed by the term that names it."""
    term: STerm  # SVar, SFieldSel, or SApp
    ty: S.Ty
    depth: int


SymVal = Union[Value, STerm, SymRecord, SymTuple, SymVariant, SymFree]

_SCALAR_TYS = (S.INT, S.RAT, S.BOOL)


def _is_term(sv: SymVal) -> bool:
    return isinstance(sv, (SVar, SIntConst, SRatConst, SBoolConst, SValConst,
                           SL.SAdd, SL.SSub, SL.SMul, SL.SDiv, SL.SMod,
                           SL.SNeg, SL.SCmp, SL.SNot, SL.SAnd, SL.SOr,
                           SL.SCtorTest, SFieldSel, SApp, SL.SConstruct,
                           SL.LinAtom))


def _unconst(t: STerm) -> SymVal:
    """Constant terms collapse back to concrete values."""
    if isinstance(t, SBoolConst):
        return V.BoolV(t.value)
    if isinstance(t, SIntConst):
        return V.IntV(t.value)
    if isinstance(t, SRatConst):
        return V.RatV(t.value)
    if isinstance(t, SValConst):
        return t.value
    return t


def as_term(sv: SymVal) -> STerm:
    """Lower any symbolic value to a term (values become constants)."""
    if isinstance(sv, V.IntV):
        return SIntConst(sv.value)
    if isinstance(sv, V.RatV):
        return SRatConst(sv.value)
    if isinstance(sv, V.BoolV):
        return SBoolConst(sv.value)
    if isinstance(sv, (V.TupleV, V.ListV, V.RecordV, V.VariantV)):
        return SValConst(sv)
    if isinstance(sv, SymRecord):
        tag = "rec:" + ",".join([sv.type_name] + [k for k, _ in sv.fields])
        return SL.SConstruct(tag, tuple(as_term(v) for _, v in sv.fields))
    if isinstance(sv, SymTuple):
        return SL.SConstruct("tuple", tuple(as_term(i) for i in sv.items))
    if isinstance(sv, SymVariant):
        return SL.SConstruct(f"ctor:{sv.ctor}", tuple(as_term(a) for a in sv.args))
    if isinstance(sv, SymFree):
        return sv.term
    if _is_term(sv):
        return sv
    raise DecompError(f"cannot lower to a term: {sv!r}")


def _value_as_variant(v: Value) -> tuple[str, tuple[Value, ...]]:
    if isinstance(v, V.VariantV):
        return v.ctor, v.args
    if isinstance(v, V.ListV):
        if not v.items:
            return S.LIST_NIL, ()
        return S.LIST_CONS, (v.items[0], V.ListV(v.items[1:]))
    raise DecompError("not a constructor value")


# ---------------------------------------------------------------------------
# Options and results

@dataclass
class DecompOptions:
    unroll_depth: int = DEFAULT_UNROLL_DEPTH
    side_condition: Optional[str] = None  # function name; only its true-paths kept
    basis: tuple[str, ...] = ()
    solver_budget: int = SL.DEFAULT_SOLVER_BUDGET
    synthesize_samples: bool = True
    prune: str = "solver"  # "solver" | "syntactic" | "none"


@dataclass
class Region:
    region_id: str
    constraints: ConstraintSet
    kind: str  # "normal" | "bound_exhausted"
    invariant: Optional[SymVal]
    sample: Optional[dict[str, Value]]
    executable: bool
    path_count: int = 1
    note: Optional[str] = None

    def constraint_strings(self) -> list[str]:
        return [pretty_term(t) for t in self.constraints]

    def to_json(self) -> dict:
        inv: Optional[dict]
        if self.invariant is None:
            inv = None
        elif isinstance(self.invariant, (V.IntV, V.RatV, V.BoolV, V.TupleV,
                                         V.ListV, V.RecordV, V.VariantV)):
            inv = {"kind": "value", "value": V.to_json(self.invariant),
                   "pretty": V.pretty_value(self.invariant)}
        else:
            t = as_term(self.invariant)
            inv = {"kind": "term", "term": serialize(t), "pretty": pretty_term(t)}
        return {
            "id": self.region_id,
            "kind": self.kind,
            "constraints": [serialize(t) for t in self.constraints],
            "constraints_pretty": self.constraint_strings(),
            "invariant": inv,
            "sample": None if self.sample is None
            else {k: V.to_json(v) for k, v in sorted(self.sample.items())},
            "executable": self.executable,
            "path_count": self.path_count,
            "note": self.note,
        }


@dataclass
class DecompStats:
    paths_explored: int = 0
    forks: int = 0
    pruned: int = 0
    exhausted_paths: int = 0
    raw_regions: int = 0
    collapsed: int = 0
    dropped_infeasible: int = 0
    solver_unknowns: int = 0

    def to_json(self) -> dict:
        return dict(sorted(self.__dict__.items()))


@dataclass
class DecompResult:
    function: str
    params: list[tuple[str, S.Ty]]
    regions: list[Region]
    options: DecompOptions
    stats: DecompStats
    program_hash: str

    @property
    def exhaustive(self) -> bool:
        """True when the regions provably tile the restricted input space."""
        return self.stats.solver_unknowns == 0 and all(
            r.kind == "normal" for r in self.regions)

    def to_json(self) -> dict:
        return {
            "schema": "regionforge.decomp/1",
            "function": self.function,
            "params": [{"name": n, "ty": str(t)} for n, t in self.params],
            "unroll_depth": self.options.unroll_depth,
            "side_condition": self.options.side_condition,
            "basis": list(self.options.basis),
            "program_hash": self.program_hash,
            "exhaustive": self.exhaustive,
            "regions": [r.to_json() for r in self.regions],
            "stats": self.stats.to_json(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Paths

_EXHAUSTED = object()  # sentinel result for closed paths


@dataclass
class _Path:
    constraints: tuple[STerm, ...]
    keys: frozenset  # serializations of constraints, for dup/complement checks
    shapes: dict[str, SymVal]  # refined shapes of split free values
    exhausted: Optional[str] = None  # reason, when closed

    def with_constraint(self, c: STerm) -> "_Path":
        return _Path(self.constraints + (c,), self.keys | {serialize(c)},
                     self.shapes, self.exhausted)

    def with_shape(self, key: str, sv: SymVal) -> "_Path":
        shapes = dict(self.shapes)
        shapes[key] = sv
        return _Path(self.constraints, self.keys, shapes, self.exhausted)

    def closed(self, reason: str) -> "_Path":
        return _Path(self.constraints, self.keys, self.shapes, reason)


def _program_hash(program: S.Program) -> str:
    from .pretty import program_str
    text = program.source or ""
    return hashlib.sha256((text + "\n" + program_str(program)).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Engine

class _Engine:
    def __init__(self, program: S.Program, options: DecompOptions):
        if program.symbols is None or program.types is None:
            raise DecompError("program must be admitted before decomposition")
        self.program = program
        self.options = options
        self.types = TypeContext(program.types)
        self.universe = V.TypeUniverse(program.types)
        self.stats = DecompStats()
        self.opaque: set[str] = {
            name for name, d in program.symbols.items()
            if isinstance(d, S.OpaqueDecl)
        }
        self.basis: set[str] = set(options.basis)
        self.axioms: list[S.AxiomDecl] = [
            d for d in program.decls if isinstance(d, S.AxiomDecl)
        ]
        self.axiom_instances: dict[str, list[STerm]] = {}

    # -- symbolic input construction -----------------------------------------

    def free_input(self, name: str, ty: S.Ty, depth: int) -> SymVal:
        if ty in _SCALAR_TYS:
            return SVar(name, ty)
        if isinstance(ty, S.TupleTy):
            return SymTuple(tuple(
                self.free_input(f"{name}.{i}", t, depth)
                for i, t in enumerate(ty.items)))
        if isinstance(ty, S.NamedTy):
            td = self.program.types.get(ty.name)
            if td is None:
                raise DecompError(f"unknown type {ty.name!r}")
            if td.is_record:
                return SymRecord(ty.name, tuple(
                    (f, self.free_input(f"{name}.{f}", t, depth))
                    for f, t in td.record_fields))
            return SymFree(SVar(name, ty), ty, depth)
        if isinstance(ty, S.ListTy):
            return SymFree(SVar(name, ty), ty, depth)
        raise DecompError(f"cannot build symbolic input of type {ty}")

    # -- constructor splitting ------------------------------------------------

    def _ctor_payload(self, base: str, root: STerm, ctor: str,
                      arg_tys: list[S.Ty], depth: int) -> tuple[SymVal, ...]:
        """Fresh payload symbolic values for one constructor split."""
        out: list[SymVal] = []
        simple_root = isinstance(root, SVar)
        for i, t in enumerate(arg_tys):
            if simple_root:
                if ctor == S.LIST_CONS:
                    nm = f"{base}.hd" if i == 0 else f"{base}.tl"
                elif len(arg_tys) == 1:
                    nm = f"{base}.{ctor}"
                else:
                    nm = f"{base}.{ctor}.{i}"
                out.append(self.free_input(nm, t, depth))
            else:
                # payload of an atom-rooted value: select positionally
                sel = SFieldSel(root, i, t)
                if t in _SCALAR_TYS:
                    out.append(sel)
                else:
                    out.append(SymFree(sel, t, depth))
        return tuple(out)

    def _split_cases(self, sv: SymFree) -> list[tuple[str, list[S.Ty], bool]]:
        """(ctor, payload types, needs_depth) for each constructor of sv."""
        if isinstance(sv.ty, S.ListTy):
            return [(S.LIST_NIL, [], False),
                    (S.LIST_CONS, [sv.ty.elem, sv.ty], True)]
        td = self.program.types[sv.ty.name]
        if td.is_record:
            raise DecompError(f"cannot case-split the record type {sv.ty.name!r}")
        out = []
        for c in td.ctors:
            needs = any(not S.is_base_ty(t) for t in c.arg_tys)
            out.append((c.name, list(c.arg_tys), needs))
        return out

    def _ctor_literal(self, term: STerm, ctor: str, ty: S.Ty) -> STerm:
        """Canonical literal for a constructor test.

        Two-constructor enumerations are boolean-like: the test for the
        second-declared constructor is the positive literal, so the first
        one's test is its negation.
        """
        if isinstance(ty, S.NamedTy):
            td = self.program.types.get(ty.name)
            if td is not None and td.ctors is not None and len(td.ctors) == 2 \
                    and all(not c.arg_tys for c in td.ctors) \
                    and ctor == td.ctors[0].name:
                return s_not(SCtorTest(term, td.ctors[1].name))
        return SCtorTest(term, ctor)

    def split_free(self, sv: SymFree, path: _Path) -> list[tuple[_Path, SymVal]]:
        """Fork a free ADT value across its constructors (cached per path)."""
        key = key_of(sv.term)
        cached = path.shapes.get(key)
        if cached is not None:
            return [(path, cached)]
        forks: list[tuple[_Path, SymVal]] = []
        base = sv.term.name if isinstance(sv.term, SVar) else key
        for ctor, arg_tys, needs_depth in self._split_cases(sv):
            test = self._ctor_literal(sv.term, ctor, sv.ty)
            if self._infeasible(path, test):
                self.stats.pruned += 1
                continue
            p2 = path.with_constraint(test)
            if needs_depth and sv.depth <= 0:
                forks.append((p2.closed(f"depth:{key}"), _EXHAUSTED))
                continue
            child_depth = sv.depth - 1 if needs_depth else sv.depth
            payload = self._ctor_payload(base, sv.term, ctor, arg_tys, child_depth)
            shaped = SymVariant(ctor, payload, sv.ty)
            forks.append((p2.with_shape(key, shaped), shaped))
        self.stats.forks += 1
        if not forks:
            return [(path.closed(f"depth:{key}"), _EXHAUSTED)]
        return forks

    # -- feasibility ----------------------------------------------------------

    def _infeasible(self, path: _Path, new: STerm) -> bool:
        mode = self.options.prune
        if mode == "none":
            return False
        comp = serialize(s_not(new))
        if comp in path.keys:
            return True
        if isinstance(new, SCtorTest):
            # a different constructor already chosen for the same value
            for c in path.constraints:
                if isinstance(c, SCtorTest) and serialize(c.arg) == serialize(new.arg) \
                        and c.ctor != new.ctor:
                    return True
            return False
        if mode != "solver":
            return False
        if isinstance(new, SL.LinAtom) or (isinstance(new, SL.SNot)):
            r = check_sat(list(path.constraints) + [new], self.types,
                          budget=50_000, want_model=False)
            return r.is_unsat
        return False

    def _add_constraint(self, path: _Path, c: STerm) -> Optional[_Path]:
        c = SL.nnf(c)
        if isinstance(c, SBoolConst):
            return path if c.value else None
        if serialize(c) in path.keys:
            return path
        if self._infeasible(path, c):
            self.stats.pruned += 1
            return None
        return path.with_constraint(c)

    # -- atoms and axioms -----------------------------------------------------

    def _register_atom(self, path: _Path, atom: SApp) -> Optional[_Path]:
        """Conjoin axiom instances for the atom onto this path.

        Instantiation happens on every path that touches the atom; the
        path's constraint-key set already deduplicates repeats, and the
        instance cache avoids re-matching axiom bodies.  None means the
        axioms contradict the path, which is then infeasible.
        """
        key = key_of(atom)
        instances = self.axiom_instances.get(key)
        if instances is None:
            instances = []
            for ax in self.axioms:
                inst = self._instantiate_axiom(ax, atom)
                if inst is not None:
                    instances.append(inst)
            self.axiom_instances[key] = instances
        p: Optional[_Path] = path
        for inst in instances:
            p = self._add_constraint(p, inst)
            if p is None:
                return None
        return p

    def _instantiate_axiom(self, ax: S.AxiomDecl, atom: SApp) -> Optional[STerm]:
        binding = _match_axiom_call(ax, atom)
        if binding is None:
            return None
        env = dict(binding)
        return self._term_of_expr(ax.body, env, depth=16)

    def _term_of_expr(self, e: S.Expr, env: dict[str, STerm],
                      depth: int) -> Optional[STerm]:
        """Non-forking translation of a pure expression into a term."""
        if depth <= 0:
            return None
        if isinstance(e, S.IntLit):
            return SIntConst(e.value)
        if isinstance(e, S.RatLit):
            return SRatConst(Fraction(e.num, e.den))
        if isinstance(e, S.BoolLit):
            return SBoolConst(e.value)
        if isinstance(e, S.Var):
            return env.get(e.name)
        if isinstance(e, S.Unary):
            a = self._term_of_expr(e.arg, env, depth)
            if a is None:
                return None
            return s_not(a) if e.op == "not" else SL.SNeg(a)
        if isinstance(e, S.Binary):
            l = self._term_of_expr(e.left, env, depth)
            r = self._term_of_expr(e.right, env, depth)
            if l is None or r is None:
                return None
            if e.op == "&&":
                return s_and(l, r)
            if e.op == "||":
                return s_or(l, r)
            if e.op == "==>":
                return s_or(s_not(l), r)
            if e.op in ("=", "<>", "<", "<=", ">", ">="):
                return s_cmp(e.op, l, r)
            node = {"+": SL.SAdd, "-": SL.SSub, "*": SL.SMul,
                    "div": SL.SDiv, "mod": SL.SMod}[e.op]
            return node(l, r)
        if isinstance(e, S.If):
            c = self._term_of_expr(e.cond, env, depth)
            t = self._term_of_expr(e.then, env, depth)
            f = self._term_of_expr(e.orelse, env, depth)
            if c is None or t is None or f is None:
                return None
            if S.BOOL == e.ty or isinstance(t, (SBoolConst, SL.SAnd, SL.SOr, SL.SNot)):
                return s_or(s_and(c, t), s_and(s_not(c), f))
            return None
        if isinstance(e, S.Call):
            args = []
            for a in e.args:
                t = self._term_of_expr(a, env, depth)
                if t is None:
                    return None
                args.append(t)
            decl = self.program.symbols.get(e.fn)
            if isinstance(decl, S.OpaqueDecl):
                return SApp(e.fn, tuple(args), decl.ret_ty)
            if isinstance(decl, S.FunDef) and not decl.is_rec:
                inner = dict(zip((p.name for p in decl.params), args))
                return self._term_of_expr(decl.body, inner, depth - 1)
            return None
        return None

    # -- main evaluator ---------------------------------------------------------

    def eval(self, e: S.Expr, env: dict[str, SymVal], stack: tuple[str, ...],
             path: _Path) -> list[tuple[_Path, SymVal]]:
        if path.exhausted:
            return [(path, _EXHAUSTED)]
        if isinstance(e, S.IntLit):
            return [(path, V.IntV(e.value))]
        if isinstance(e, S.RatLit):
            return [(path, V.RatV(Fraction(e.num, e.den)))]
        if isinstance(e, S.BoolLit):
            return [(path, V.BoolV(e.value))]
        if isinstance(e, S.Var):
            try:
                return [(path, env[e.name])]
            except KeyError:
                raise DecompError(f"unbound variable {e.name!r}") from None
        if isinstance(e, S.Unary):
            return self._eval_unary(e, env, stack, path)
        if isinstance(e, S.Binary):
            return self._eval_binary(e, env, stack, path)
        if isinstance(e, S.If):
            return self._eval_if(e.cond, e.then, e.orelse, env, stack, path)
        if isinstance(e, S.Match):
            return self._eval_match(e, env, stack, path)
        if isinstance(e, S.Let):
            out: list[tuple[_Path, SymVal]] = []
            for p1, bound in self.eval(e.bound, env, stack, path):
                if bound is _EXHAUSTED:
                    out.append((p1, _EXHAUSTED))
                    continue
                env2 = dict(env)
                env2[e.name] = bound
                out.extend(self.eval(e.body, env2, stack, p1))
            return out
        if isinstance(e, S.Call):
            return self._eval_call(e, env, stack, path)
        if isinstance(e, S.RecordCtor):
            td = self.program.types[e.type_name]
            order = [f for f, _ in td.record_fields]
            written = dict(e.fields)
            return self._eval_seq(
                [written[f] for f in order], env, stack, path,
                lambda vals: _pack_record(e.type_name, tuple(zip(order, vals))))
        if isinstance(e, S.RecordUpdate):
            td = self.program.types[e.type_name]
            order = [f for f, _ in td.record_fields]
            written = dict(e.fields)
            out = []
            for p1, base in self.eval(e.base, env, stack, path):
                if base is _EXHAUSTED:
                    out.append((p1, _EXHAUSTED))
                    continue
                def build(vals, base=base):
                    fresh = dict(zip([f for f in order if f in written], vals))
                    return _pack_record(e.type_name, tuple(
                        (f, fresh[f] if f in fresh else self._project(base, f))
                        for f in order))
                out.extend(self._eval_seq(
                    [written[f] for f in order if f in written],
                    env, stack, p1, build))
            return out
        if isinstance(e, S.FieldProj):
            out = []
            for p1, base in self.eval(e.arg, env, stack, path):
                if base is _EXHAUSTED:
                    out.append((p1, _EXHAUSTED))
                    continue
                out.append((p1, self._project(base, e.field)))
            return out
        if isinstance(e, S.VariantCtor):
            ty = e.ty if e.ty is not None else None
            return self._eval_seq(
                list(e.args), env, stack, path,
                lambda vals: self._mk_variant(e, vals, ty))
        if isinstance(e, S.TupleCtor):
            return self._eval_seq(list(e.items), env, stack, path,
                                  lambda vals: _pack_tuple(vals))
        raise DecompError(f"cannot evaluate {type(e).__name__}")

    def _eval_seq(self, exprs: list[S.Expr], env, stack, path, build):
        """Evaluate a list of expressions left to right, then combine."""
        acc: list[tuple[_Path, list[SymVal]]] = [(path, [])]
        for ex in exprs:
            nxt: list[tuple[_Path, list[SymVal]]] = []
            for p, vals in acc:
                if p.exhausted:
                    nxt.append((p, vals))
                    continue
                for p2, v in self.eval(ex, env, stack, p):
                    if v is _EXHAUSTED:
                        nxt.append((p2, vals))
                        continue
                    nxt.append((p2, vals + [v]))
            acc = nxt
        out: list[tuple[_Path, SymVal]] = []
        for p, vals in acc:
            if p.exhausted:
                out.append((p, _EXHAUSTED))
            else:
                out.append((p, build(vals)))
        return out

    def _project(self, base: SymVal, fld) -> SymVal:
        if isinstance(base, SymRecord):
            return base.get(fld)
        if isinstance(base, SymTuple):
            return base.items[fld]
        if isinstance(base, V.RecordV):
            return base.get(fld)
        if isinstance(base, V.TupleV):
            return base.items[fld]
        if isinstance(base, SymFree):
            # record-typed atom root: select lazily
            td = self.program.types.get(base.ty.name) if isinstance(base.ty, S.NamedTy) else None
            if td is not None and td.is_record:
                for f, t in td.record_fields:
                    if f == fld:
                        sel = SFieldSel(base.term, f, t)
                        return sel if t in _SCALAR_TYS else SymFree(sel, t, base.depth)
        raise DecompError(f"cannot project field {fld!r}")

    def _mk_variant(self, e: S.VariantCtor, vals: list[SymVal], ty) -> SymVal:
        if all(isinstance(v, (V.IntV, V.RatV, V.BoolV, V.TupleV, V.ListV,
                              V.RecordV, V.VariantV)) for v in vals):
            if e.ctor == S.LIST_NIL:
                return V.ListV(())
            if e.ctor == S.LIST_CONS:
                tail = vals[1]
                if isinstance(tail, V.ListV):
                    return V.ListV((vals[0],) + tail.items)
            else:
                return V.VariantV(e.ctor, tuple(vals))
        vty = e.ty if e.ty is not None else S.NamedTy(e.type_name or "?")
        return SymVariant(e.ctor, tuple(vals), vty)

    def _eval_unary(self, e, env, stack, path):
        out = []
        for p1, v in self.eval(e.arg, env, stack, path):
            if v is _EXHAUSTED:
                out.append((p1, _EXHAUSTED))
                continue
            if e.op == "not":
                if isinstance(v, V.BoolV):
                    out.append((p1, V.BoolV(not v.value)))
                else:
                    out.append((p1, _unconst(s_not(as_term(v)))))
            else:  # negation
                if isinstance(v, V.IntV):
                    out.append((p1, V.IntV(-v.value)))
                elif isinstance(v, V.RatV):
                    out.append((p1, V.RatV(-v.value)))
                else:
                    out.append((p1, _fold_arith("-", V.IntV(0), v)))
        return out

    def _eval_binary(self, e: S.Binary, env, stack, path):
        if e.op in ("&&", "||", "==>"):
            if e.op == "&&":
                return self._eval_if(e.left, e.right, S.BoolLit(False), env, stack, path)
            if e.op == "||":
                return self._eval_if(e.left, S.BoolLit(True), e.right, env, stack, path)
            return self._eval_if(e.left, e.right, S.BoolLit(True), env, stack, path)
        out: list[tuple[_Path, SymVal]] = []
        for p1, l in self.eval(e.left, env, stack, path):
            if l is _EXHAUSTED:
                out.append((p1, _EXHAUSTED))
                continue
            for p2, r in self.eval(e.right, env, stack, p1):
                if r is _EXHAUSTED:
                    out.append((p2, _EXHAUSTED))
                    continue
                if e.op in ("=", "<>"):
                    out.extend(self._eval_equality(e.op, l, r, p2))
                elif e.op in ("<", "<=", ">", ">="):
                    out.append((p2, _fold_cmp(e.op, l, r)))
                else:
                    out.append((p2, _fold_arith(e.op, l, r)))
        return out

    def _eval_if(self, cond, then, orelse, env, stack, path):
        out: list[tuple[_Path, SymVal]] = []
        for p1, c in self.eval(cond, env, stack, path):
            if c is _EXHAUSTED:
                out.append((p1, _EXHAUSTED))
                continue
            if isinstance(c, V.BoolV):
                out.extend(self.eval(then if c.value else orelse, env, stack, p1))
                continue
            ct = as_term(c)
            p_then = self._add_constraint(p1, ct)
            if p_then is not None:
                out.extend(self.eval(then, env, stack, p_then))
            p_else = self._add_constraint(p1, s_not(ct))
            if p_else is not None:
                out.extend(self.eval(orelse, env, stack, p_else))
        return out

    def _eval_equality(self, op: str, l: SymVal, r: SymVal,
                       path: _Path) -> list[tuple[_Path, SymVal]]:
        out = []
        for p2, t in self._equal_sym(l, r, path):
            if t is _EXHAUSTED:
                out.append((p2, _EXHAUSTED))
                continue
            if op == "<>":
                t = V.BoolV(not t.value) if isinstance(t, V.BoolV) else _unconst(s_not(t))
            out.append((p2, t))
        return out

    def _equal_sym(self, l: SymVal, r: SymVal,
                   path: _Path) -> list[tuple[_Path, SymVal]]:
        """Structural equality, forking to resolve unknown constructors."""
        lv = isinstance(l, (V.IntV, V.RatV, V.BoolV, V.TupleV, V.ListV,
                            V.RecordV, V.VariantV))
        rv = isinstance(r, (V.IntV, V.RatV, V.BoolV, V.TupleV, V.ListV,
                            V.RecordV, V.VariantV))
        if lv and rv:
            return [(path, V.BoolV(l == r))]
        # unpack concrete ADT values so the structural cases line up
        if lv and isinstance(l, (V.VariantV, V.ListV)):
            ctor, args = _value_as_variant(l)
            l = SymVariant(ctor, args, S.NamedTy("?"))
        if rv and isinstance(r, (V.VariantV, V.ListV)):
            ctor, args = _value_as_variant(r)
            r = SymVariant(ctor, args, S.NamedTy("?"))
        if lv and isinstance(l, V.RecordV):
            l = SymRecord(l.type_name, l.fields)
        if rv and isinstance(r, V.RecordV):
            r = SymRecord(r.type_name, r.fields)
        if lv and isinstance(l, V.TupleV):
            l = SymTuple(l.items)
        if rv and isinstance(r, V.TupleV):
            r = SymTuple(r.items)

        if isinstance(l, SymFree):
            cached = path.shapes.get(key_of(l.term))
            if cached is not None:
                return self._equal_sym(cached, r, path)
            if isinstance(r, SymVariant) and not r.args:
                # equality against a nullary constructor is just a test;
                # no structural split is needed
                return [(path, self._ctor_literal(l.term, r.ctor, l.ty))]
            out = []
            for p2, shaped in self.split_free(l, path):
                if shaped is _EXHAUSTED:
                    out.append((p2, _EXHAUSTED))
                    continue
                out.extend(self._equal_sym(shaped, r, p2))
            return out
        if isinstance(r, SymFree):
            cached = path.shapes.get(key_of(r.term))
            if cached is not None:
                return self._equal_sym(l, cached, path)
            if isinstance(l, SymVariant) and not l.args:
                return [(path, self._ctor_literal(r.term, l.ctor, r.ty))]
            out = []
            for p2, shaped in self.split_free(r, path):
                if shaped is _EXHAUSTED:
                    out.append((p2, _EXHAUSTED))
                    continue
                out.extend(self._equal_sym(l, shaped, p2))
            return out
        if isinstance(l, SymVariant) and isinstance(r, SymVariant):
            if l.ctor != r.ctor:
                return [(path, V.FALSE)]
            return self._equal_all(list(l.args), list(r.args), path)
        if isinstance(l, SymRecord) and isinstance(r, SymRecord):
            return self._equal_all([v for _, v in l.fields],
                                   [v for _, v in r.fields], path)
        if isinstance(l, SymTuple) and isinstance(r, SymTuple):
            return self._equal_all(list(l.items), list(r.items), path)
        # scalar terms (possibly one side concrete)
        lt, rt = as_term(l), as_term(r)
        lty = SL.term_ty(lt)
        if lty == S.BOOL or SL.term_ty(rt) == S.BOOL:
            # (a && b) || (!a && !b)
            return [(path, _unconst(s_or(s_and(lt, rt), s_and(s_not(lt), s_not(rt)))))]
        return [(path, _unconst(s_cmp("=", lt, rt)))]

    def _equal_all(self, ls: list[SymVal], rs: list[SymVal],
                   path: _Path) -> list[tuple[_Path, SymVal]]:
        if len(ls) != len(rs):
            return [(path, V.FALSE)]
        acc: list[tuple[_Path, SymVal]] = [(path, V.TRUE)]
        for a, b in zip(ls, rs):
            nxt = []
            for p, t in acc:
                if t is _EXHAUSTED or (isinstance(t, V.BoolV) and not t.value):
                    nxt.append((p, t))
                    continue
                for p2, u in self._equal_sym(a, b, p):
                    if u is _EXHAUSTED:
                        nxt.append((p2, u))
                        continue
                    if isinstance(t, V.BoolV):  # t is true here
                        nxt.append((p2, u))
                    elif isinstance(u, V.BoolV):
                        nxt.append((p2, t if u.value else u))
                    else:
                        nxt.append((p2, s_and(t, u)))
            acc = nxt
        return acc

    def _eval_match(self, e: S.Match, env, stack, path):
        out: list[tuple[_Path, SymVal]] = []
        for p1, scrut in self.eval(e.scrutinee, env, stack, path):
            if scrut is _EXHAUSTED:
                out.append((p1, _EXHAUSTED))
                continue
            cases: list[tuple[_Path, SymVal]]
            if isinstance(scrut, (V.VariantV, V.ListV)):
                ctor, args = _value_as_variant(scrut)
                cases = [(p1, SymVariant(ctor, args, S.NamedTy("?")))]
            elif isinstance(scrut, SymVariant):
                cases = [(p1, scrut)]
            elif isinstance(scrut, SymFree):
                cases = self.split_free(scrut, p1)
            else:
                raise DecompError("match scrutinee is not a constructor value")
            for p2, shaped in cases:
                if shaped is _EXHAUSTED:
                    out.append((p2, _EXHAUSTED))
                    continue
                arm = _find_arm(e, shaped.ctor)
                env2 = dict(env)
                for binder, val in zip(arm.binders, shaped.args):
                    if binder != "_":
                        env2[binder] = val
                out.extend(self.eval(arm.body, env2, stack, p2))
        return out

    def _eval_call(self, e: S.Call, env, stack, path):
        decl = self.program.symbols.get(e.fn)
        if decl is None:
            raise DecompError(f"unknown function {e.fn!r}")
        as_atom = isinstance(decl, S.OpaqueDecl) or e.fn in self.basis

        def finish(p: _Path, vals: list[SymVal]) -> list[tuple[_Path, SymVal]]:
            if as_atom:
                # concrete args to a transparent basis function still run
                if e.fn not in self.opaque and all(
                        isinstance(v, (V.IntV, V.RatV, V.BoolV, V.TupleV,
                                       V.ListV, V.RecordV, V.VariantV))
                        for v in vals):
                    from .evaluator import eval_call
                    return [(p, eval_call(self.program, e.fn, list(vals)))]
                ret = decl.ret_ty if isinstance(decl, S.OpaqueDecl) else decl.return_ty
                atom = SApp(e.fn, tuple(as_term(v) for v in vals), ret)
                p2 = self._register_atom(p, atom)
                if p2 is None:
                    return []  # axioms contradict this path
                if ret in _SCALAR_TYS:
                    return [(p2, atom)]
                return [(p2, SymFree(atom, ret, self.options.unroll_depth))]
            count = stack.count(e.fn)
            if count >= 1 and count > self.options.unroll_depth:
                return [(p.closed(f"unroll:{e.fn}"), _EXHAUSTED)]
            env2 = {prm.name: v for prm, v in zip(decl.params, vals)}
            return self.eval(decl.body, env2, stack + (e.fn,), p)

        out: list[tuple[_Path, SymVal]] = []
        for p, vals in self._eval_args(e.args, env, stack, path):
            if p.exhausted:
                out.append((p, _EXHAUSTED))
                continue
            out.extend(finish(p, vals))
        return out

    def _eval_args(self, exprs, env, stack, path):
        acc: list[tuple[_Path, list[SymVal]]] = [(path, [])]
        for ex in exprs:
            nxt = []
            for p, vals in acc:
                if p.exhausted:
                    nxt.append((p, vals))
                    continue
                for p2, v in self.eval(ex, env, stack, p):
                    if v is _EXHAUSTED:
                        nxt.append((p2, vals))
                    else:
                        nxt.append((p2, vals + [v]))
            acc = nxt
        return acc


def _find_arm(e: S.Match, ctor: str) -> S.MatchArm:
    for arm in e.arms:
        if arm.ctor == ctor:
            return arm
    raise DecompError(f"no match arm for constructor {ctor!r}")


def _pack_tuple(vals: list[SymVal]) -> SymVal:
    if all(isinstance(v, (V.IntV, V.RatV, V.BoolV, V.TupleV, V.ListV,
                          V.RecordV, V.VariantV)) for v in vals):
        return V.TupleV(tuple(vals))
    return SymTuple(tuple(vals))


def _pack_record(type_name: str, fields: tuple) -> SymVal:
    if all(isinstance(v, (V.IntV, V.RatV, V.BoolV, V.TupleV, V.ListV,
                          V.RecordV, V.VariantV)) for _, v in fields):
        return V.RecordV(type_name, fields)
    return SymRecord(type_name, fields)


def _match_axiom_call(ax: S.AxiomDecl, atom: SApp) -> Optional[dict[str, STerm]]:
    """Positional binding of axiom parameters from the atom's arguments,
    using the first call to the atom's head inside the axiom body."""
    target: Optional[S.Call] = None

    def find(e: S.Expr) -> None:
        nonlocal target
        if target is not None:
            return
        if isinstance(e, S.Call) and e.fn == atom.fn:
            target = e
            return
        for child in _expr_children(e):
            find(child)

    find(ax.body)
    if target is None or len(target.args) != len(atom.args):
        return None
    binding: dict[str, STerm] = {}
    param_names = {p.name for p in ax.params}
    for arg_expr, arg_term in zip(target.args, atom.args):
        if not isinstance(arg_expr, S.Var) or arg_expr.name not in param_names:
            return None
        if arg_expr.name in binding:
            return None
        binding[arg_expr.name] = arg_term
    if set(binding) != param_names:
        return None
    return binding


def _expr_children(e: S.Expr) -> list[S.Expr]:
    if isinstance(e, S.Unary):
        return [e.arg]
    if isinstance(e, S.Binary):
        return [e.left, e.right]
    if isinstance(e, S.If):
        return [e.cond, e.then, e.orelse]
    if isinstance(e, S.Match):
        return [e.scrutinee] + [a.body for a in e.arms]
    if isinstance(e, S.Let):
        return [e.bound, e.body]
    if isinstance(e, S.Call):
        return list(e.args)
    if isinstance(e, S.RecordCtor):
        return [x for _, x in e.fields]
    if isinstance(e, S.RecordUpdate):
        return [e.base] + [x for _, x in e.fields]
    if isinstance(e, S.FieldProj):
        return [e.arg]
    if isinstance(e, S.VariantCtor):
        return list(e.args)
    if isinstance(e, S.TupleCtor):
        return list(e.items)
    return []


# ---------------------------------------------------------------------------
# Arithmetic folding over mixed symbolic/concrete scalars

def _fold_arith(op: str, l: SymVal, r: SymVal) -> SymVal:
    if isinstance(l, (V.IntV, V.RatV)) and isinstance(r, (V.IntV, V.RatV)):
        x, y = l.value, r.value
        if op == "+":
            out = x + y
        elif op == "-":
            out = x - y
        elif op == "*":
            out = x * y
        elif op == "div":
            if y == 0:
                raise DecompError("division by zero on a concrete path")
            out = V.int_div(x, y)
        else:
            if y == 0:
                raise DecompError("division by zero on a concrete path")
            out = V.int_mod(x, y)
        if isinstance(l, V.IntV) and isinstance(r, V.IntV):
            return V.IntV(out)
        return V.RatV(Fraction(out))
    lt, rt = as_term(l), as_term(r)
    node = {"+": SL.SAdd, "-": SL.SSub, "*": SL.SMul,
            "div": SL.SDiv, "mod": SL.SMod}[op]
    return node(lt, rt)


def _fold_cmp(op: str, l: SymVal, r: SymVal) -> SymVal:
    if isinstance(l, (V.IntV, V.RatV)) and isinstance(r, (V.IntV, V.RatV)):
        x, y = l.value, r.value
        return V.BoolV({"<": x < y, "<=": x <= y, ">": x > y, ">=": x >= y}[op])
    return _unconst(s_cmp(op, as_term(l), as_term(r)))


# ---------------------------------------------------------------------------
# Decomposition driver

def decompose(program: S.Program, fn_name: str,
              options: Optional[DecompOptions] = None) -> DecompResult:
    options = options or DecompOptions()
    engine = _Engine(program, options)
    decl = program.symbols.get(fn_name)
    if not isinstance(decl, S.FunDef):
        raise DecompError(f"{fn_name!r} is not a defined function")

    env: dict[str, SymVal] = {}
    params: list[tuple[str, S.Ty]] = []
    for p in decl.params:
        env[p.name] = engine.free_input(p.name, p.ty, options.unroll_depth)
        params.append((p.name, p.ty))

    seeds: list[_Path] = [_Path((), frozenset(), {})]
    if options.side_condition:
        guard = program.symbols.get(options.side_condition)
        if not isinstance(guard, S.FunDef):
            raise DecompError(
                f"side condition {options.side_condition!r} is not a defined function")
        if [p.ty for p in guard.params] != [p.ty for p in decl.params]:
            raise DecompError("side condition signature differs from the target's")
        genv = {gp.name: env[p.name] for gp, p in zip(guard.params, decl.params)}
        seeds = []
        for p, v in engine.eval(guard.body, genv, (guard.name,),
                                _Path((), frozenset(), {})):
            if v is _EXHAUSTED:
                continue
            if isinstance(v, V.BoolV):
                if v.value:
                    seeds.append(p)
                continue
            p2 = engine._add_constraint(p, as_term(v))
            if p2 is not None:
                seeds.append(p2)

    raw: list[tuple[_Path, SymVal]] = []
    for seed in seeds:
        raw.extend(engine.eval(decl.body, env, (fn_name,), seed))
    engine.stats.paths_explored = len(raw)

    return _finalize(program, engine, fn_name, params, raw, options)


def _finalize(program: S.Program, engine: _Engine, fn_name: str,
              params: list[tuple[str, S.Ty]], raw, options: DecompOptions) -> DecompResult:
    by_id: dict[str, Region] = {}
    for path, sv in raw:
        canon = canonicalize(path.constraints)
        if any(isinstance(t, SBoolConst) and not t.value for t in canon):
            engine.stats.dropped_infeasible += 1
            continue
        if path.exhausted:
            kind, inv = "bound_exhausted", None
            inv_key = f"exhausted:{path.exhausted}"
            engine.stats.exhausted_paths += 1
        else:
            kind = "normal"
            inv = sv
            inv_key = serialize(as_term(sv))
        digest = hashlib.sha256()
        for t in canon:
            digest.update(serialize(t).encode())
            digest.update(b"\n")
        digest.update(inv_key.encode())
        rid = digest.hexdigest()
        prior = by_id.get(rid)
        if prior is not None:
            prior.path_count += 1
            engine.stats.collapsed += 1
            continue
        executable = _region_executable(canon, inv, engine.opaque)
        by_id[rid] = Region(rid, canon, kind, inv, None, executable,
                            note=path.exhausted)
    engine.stats.raw_regions = len(by_id)

    regions: list[Region] = []
    for rid in sorted(by_id):
        region = by_id[rid]
        feasible = _attach_sample(program, engine, params, region, options)
        if not feasible:
            engine.stats.dropped_infeasible += 1
            continue
        regions.append(region)

    return DecompResult(fn_name, params, regions, options, engine.stats,
                        _program_hash(program))


def _region_executable(canon: ConstraintSet, inv: Optional[SymVal],
                       opaque: set[str]) -> bool:
    terms = list(canon)
    if inv is not None and not isinstance(inv, (V.IntV, V.RatV, V.BoolV, V.TupleV,
                                                V.ListV, V.RecordV, V.VariantV)):
        terms.append(as_term(inv))
    for t in terms:
        if SL.opaque_heads(t, opaque):
            return False
        if SL.out_of_fragment_reason(t) == "incomplete-theory":
            return False
    return True


def _attach_sample(program: S.Program, engine: _Engine,
                   params: list[tuple[str, S.Ty]], region: Region,
                   options: DecompOptions) -> bool:
    """Synthesize a concrete sample for the region; returns feasibility."""
    if not options.synthesize_samples:
        probe = check_sat(region.constraints, engine.types,
                          budget=options.solver_budget, want_model=False)
        if not probe.is_unsat and not probe.is_sat:
            engine.stats.solver_unknowns += 1
        return not probe.is_unsat
    constraints = list(region.constraints)
    basis_fns = {
        name for name in engine.basis
        if isinstance(program.symbols.get(name), S.FunDef)
    }
    for _ in range(8):
        r = check_sat(constraints, engine.types, budget=options.solver_budget)
        if r.is_unsat:
            return False
        if not r.is_sat:
            engine.stats.solver_unknowns += 1
            return True  # unknown: keep the region, but without a sample
        sample = {name: rebuild_value(name, ty, r.model, program.types)
                  for name, ty in params}
        if not basis_fns:
            region.sample = sample
            return True
        # repair loop: force each basis atom to its real value under the
        # candidate model, then re-solve until the model is self-consistent
        from .evaluator import EvalError, eval_call
        adjusted = False
        for t in list(region.constraints):
            for atom in SL.atoms_of(t):
                if not isinstance(atom, SApp) or atom.fn not in basis_fns:
                    continue
                try:
                    arg_vals = [
                        eval_sterm(a, r.model.scalars, r.model.ctors, r.model.atoms)
                        for a in atom.args
                    ]
                    actual = eval_call(program, atom.fn, arg_vals)
                except (SL.SolverInternalError, EvalError):
                    return True
                assumed = r.model.atoms.get(key_of(atom))
                if assumed == actual:
                    continue
                adjusted = True
                if isinstance(actual, V.IntV):
                    constraints.append(s_cmp("=", atom, SIntConst(actual.value)))
                elif isinstance(actual, V.RatV):
                    constraints.append(s_cmp("=", atom, SRatConst(actual.value)))
                elif isinstance(actual, V.BoolV):
                    constraints.append(atom if actual.value else s_not(atom))
                else:
                    return True
        if not adjusted:
            region.sample = sample
            return True
    return True  # repair did not converge; region stays, sample omitted


def rebuild_value(name: str, ty: S.Ty, model: SL.Model,
                  types: dict[str, S.TypeDef]) -> Value:
    """Reconstruct a concrete value for one input from a solver model."""
    universe = V.TypeUniverse(types)
    if ty == S.INT:
        return model.scalars.get(name, V.IntV(0))
    if ty == S.RAT:
        return model.scalars.get(name, V.RatV(Fraction(0)))
    if ty == S.BOOL:
        return model.scalars.get(name, V.FALSE)
    if isinstance(ty, S.TupleTy):
        return V.TupleV(tuple(
            rebuild_value(f"{name}.{i}", t, model, types)
            for i, t in enumerate(ty.items)))
    if isinstance(ty, S.ListTy):
        ctor = model.ctors.get(name)
        if ctor is None:
            return universe.default(ty)
        if ctor == S.LIST_NIL:
            return V.ListV(())
        head = rebuild_value(f"{name}.hd", ty.elem, model, types)
        tail = rebuild_value(f"{name}.tl", ty, model, types)
        return V.ListV((head,) + tail.items)
    if isinstance(ty, S.NamedTy):
        td = types.get(ty.name)
        if td is None:
            raise DecompError(f"unknown type {ty.name!r}")
        if td.is_record:
            return V.RecordV(ty.name, tuple(
                (f, rebuild_value(f"{name}.{f}", t, model, types))
                for f, t in td.record_fields))
        ctor = model.ctors.get(name)
        if ctor is None:
            return universe.default(ty)
        cd = next(c for c in td.ctors if c.name == ctor)
        if len(cd.arg_tys) == 1:
            args = (rebuild_value(f"{name}.{ctor}", cd.arg_tys[0], model, types),)
        else:
            args = tuple(
                rebuild_value(f"{name}.{ctor}.{i}", t, model, types)
                for i, t in enumerate(cd.arg_tys))
        return V.VariantV(ctor, args)
    raise DecompError(f"cannot rebuild a value of type {ty}")


# ---------------------------------------------------------------------------
# Concrete classification

class _LeafEnv:
    """Resolves dotted leaf names against concrete argument values."""

    def __init__(self, bindings: dict[str, Value]):
        self.bindings = bindings

    def _resolve(self, key: str) -> Value:
        segs = key.split(".")
        if segs[0] not in self.bindings:
            raise KeyError(key)
        cur: Value = self.bindings[segs[0]]
        i = 1
        while i < len(segs):
            seg = segs[i]
            if isinstance(cur, V.RecordV):
                cur = cur.get(seg)
            elif isinstance(cur, V.TupleV):
                cur = cur.items[int(seg)]
            elif isinstance(cur, V.ListV):
                if not cur.items:
                    raise KeyError(key)
                cur = cur.items[0] if seg == "hd" else V.ListV(cur.items[1:]) \
                    if seg == "tl" else _bad_seg(key)
            elif isinstance(cur, V.VariantV):
                if seg != cur.ctor:
                    raise KeyError(key)
                if len(cur.args) == 1:
                    cur = cur.args[0]
                else:
                    cur = V.TupleV(cur.args)
            else:
                raise KeyError(key)
            i += 1
        return cur

    def __contains__(self, key: str) -> bool:
        try:
            self._resolve(key)
            return True
        except (KeyError, IndexError, ValueError):
            return False

    def __getitem__(self, key: str) -> Value:
        return self._resolve(key)


def classify_input(program: S.Program, result: DecompResult,
                   args: list[Value]) -> list[str]:
    """Region ids whose constraints hold for the given concrete arguments."""
    from .evaluator import eval_call
    bindings = {name: v for (name, _), v in zip(result.params, args)}
    env = _LeafEnv(bindings)

    def app_eval(fn: str, vals: list[Value]) -> Value:
        return eval_call(program, fn, vals)

    hits = []
    for region in result.regions:
        ok = True
        for t in region.constraints:
            try:
                out = eval_sterm(t, env, {}, {}, app_eval=app_eval)
            except (SL.SolverInternalError, KeyError, IndexError):
                ok = False
                break
            if not (isinstance(out, V.BoolV) and out.value):
                ok = False
                break
        if ok:
            hits.append(region.region_id)
    return hits


def _bad_seg(key: str):
    raise KeyError(key)
