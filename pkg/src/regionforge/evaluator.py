"""Deterministic call-by-value evaluator with a step budget.

Boolean connectives short-circuit left to right; ==> with a false antecedent
never evaluates its consequent.  Integer div/mod truncate toward zero and
trap on zero divisors.  Applying an opaque symbol is an evaluation error:
opaque functions have no executable semantics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Optional

from . import syntax as S
from . import values as V
from .values import Value

DEFAULT_STEP_BUDGET = 10_000_000


class EvalError(Exception):
    def __init__(self, message: str, span: Optional[S.Span] = None):
        at = f" at {span}" if span else ""
        super().__init__(f"{message}{at}")
        self.message = message
        self.span = span


class _Budget:
    __slots__ = ("left",)

    def __init__(self, steps: int):
        self.left = steps

    def tick(self, span: Optional[S.Span]) -> None:
        self.left -= 1
        if self.left < 0:
            raise EvalError("step budget exhausted", span)


def _lookup_fn(program: S.Program, name: str):
    symbols = program.symbols or {}
    return symbols.get(name)


def eval_call(
    program: S.Program,
    fn: str,
    args: list[Value],
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> Value:
    """Evaluate a named function on concrete argument values."""
    decl = _lookup_fn(program, fn)
    if decl is None:
        raise EvalError(f"unbound function {fn!r}")
    if isinstance(decl, S.OpaqueDecl):
        raise EvalError(f"{fn!r} is opaque and cannot be evaluated")
    if not isinstance(decl, S.FunDef):
        raise EvalError(f"{fn!r} is not a function")
    if len(args) != len(decl.params):
        raise EvalError(f"{fn!r} takes {len(decl.params)} argument(s), got {len(args)}")
    universe = V.TypeUniverse(program.types or {})
    for a, p in zip(args, decl.params):
        if not universe.conforms(a, p.ty):
            raise EvalError(f"argument for {p.name!r} does not have type {p.ty}")
    budget = _Budget(step_budget)
    env = {p.name: a for p, a in zip(decl.params, args)}
    return _eval(program, decl.body, env, budget)


def _as_bool(v: Value, span) -> bool:
    if not isinstance(v, V.BoolV):
        raise EvalError("expected a boolean", span)
    return v.value


def _eval(program: S.Program, e: S.Expr, env: dict, budget: _Budget) -> Value:
    budget.tick(e.span)
    if isinstance(e, S.IntLit):
        return V.IntV(e.value)
    if isinstance(e, S.RatLit):
        return V.RatV(Fraction(e.num, e.den))
    if isinstance(e, S.BoolLit):
        return V.BoolV(e.value)
    if isinstance(e, S.Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound symbol {e.name!r}", e.span) from None
    if isinstance(e, S.Unary):
        v = _eval(program, e.arg, env, budget)
        if e.op == "not":
            return V.BoolV(not _as_bool(v, e.span))
        if isinstance(v, V.IntV):
            return V.IntV(-v.value)
        if isinstance(v, V.RatV):
            return V.RatV(-v.value)
        raise EvalError("unary '-' needs a number", e.span)
    if isinstance(e, S.Binary):
        return _eval_binary(program, e, env, budget)
    if isinstance(e, S.If):
        c = _as_bool(_eval(program, e.cond, env, budget), e.span)
        return _eval(program, e.then if c else e.orelse, env, budget)
    if isinstance(e, S.Match):
        scrut = _eval(program, e.scrutinee, env, budget)
        if isinstance(scrut, V.ListV):
            ctor = S.LIST_NIL if not scrut.items else S.LIST_CONS
            payload: tuple[Value, ...] = ()
            if scrut.items:
                payload = (scrut.items[0], V.ListV(scrut.items[1:]))
        elif isinstance(scrut, V.VariantV):
            ctor, payload = scrut.ctor, scrut.args
        else:
            raise EvalError("match needs a variant or list value", e.span)
        for arm in e.arms:
            if arm.ctor == ctor:
                inner = dict(env)
                for name, val in zip(arm.binders, payload):
                    inner[name] = val
                return _eval(program, arm.body, inner, budget)
        raise EvalError(f"no arm matches constructor {ctor!r}", e.span)
    if isinstance(e, S.Let):
        bound = _eval(program, e.bound, env, budget)
        inner = dict(env)
        inner[e.name] = bound
        return _eval(program, e.body, inner, budget)
    if isinstance(e, S.Call):
        decl = _lookup_fn(program, e.fn)
        if decl is None:
            raise EvalError(f"unbound symbol {e.fn!r}", e.span)
        if isinstance(decl, S.OpaqueDecl):
            raise EvalError(f"{e.fn!r} is opaque and cannot be evaluated", e.span)
        argv = [_eval(program, a, env, budget) for a in e.args]
        inner = {p.name: v for p, v in zip(decl.params, argv)}
        return _eval(program, decl.body, inner, budget)
    if isinstance(e, S.RecordCtor):
        td = (program.types or {}).get(e.type_name or "")
        if td is None:
            raise EvalError("record literal was not resolved at admission", e.span)
        written = dict()
        for n, sub in e.fields:
            written[n] = _eval(program, sub, env, budget)
        ordered = tuple((n, written[n]) for n, _ in td.record_fields)
        return V.RecordV(td.name, ordered)
    if isinstance(e, S.RecordUpdate):
        base = _eval(program, e.base, env, budget)
        if not isinstance(base, V.RecordV):
            raise EvalError("record update needs a record", e.span)
        overrides = {n: _eval(program, sub, env, budget) for n, sub in e.fields}
        ordered = tuple((n, overrides.get(n, old)) for n, old in base.fields)
        return V.RecordV(base.type_name, ordered)
    if isinstance(e, S.FieldProj):
        base = _eval(program, e.arg, env, budget)
        if isinstance(e.field, int):
            if not isinstance(base, V.TupleV):
                raise EvalError("positional projection needs a tuple", e.span)
            return base.items[e.field]
        if not isinstance(base, V.RecordV):
            raise EvalError("field projection needs a record", e.span)
        return base.get(e.field)
    if isinstance(e, S.VariantCtor):
        argv = tuple(_eval(program, a, env, budget) for a in e.args)
        if e.ctor == S.LIST_NIL:
            return V.ListV(())
        if e.ctor == S.LIST_CONS:
            tail = argv[1]
            if not isinstance(tail, V.ListV):
                raise EvalError("cons needs a list tail", e.span)
            return V.ListV((argv[0],) + tail.items)
        return V.VariantV(e.ctor, argv)
    if isinstance(e, S.TupleCtor):
        return V.TupleV(tuple(_eval(program, i, env, budget) for i in e.items))
    raise EvalError(f"unhandled expression {type(e).__name__}", e.span)


def _eval_binary(program: S.Program, e: S.Binary, env: dict, budget: _Budget) -> Value:
    op = e.op
    if op == "&&":
        if not _as_bool(_eval(program, e.left, env, budget), e.span):
            return V.FALSE
        return V.BoolV(_as_bool(_eval(program, e.right, env, budget), e.span))
    if op == "||":
        if _as_bool(_eval(program, e.left, env, budget), e.span):
            return V.TRUE
        return V.BoolV(_as_bool(_eval(program, e.right, env, budget), e.span))
    if op == "==>":
        if not _as_bool(_eval(program, e.left, env, budget), e.span):
            return V.TRUE
        return V.BoolV(_as_bool(_eval(program, e.right, env, budget), e.span))
    lv = _eval(program, e.left, env, budget)
    rv = _eval(program, e.right, env, budget)
    if op == "=":
        return V.BoolV(lv == rv)
    if op == "<>":
        return V.BoolV(lv != rv)
    if op in ("<", "<=", ">", ">="):
        if isinstance(lv, V.IntV) and isinstance(rv, V.IntV):
            a, b = lv.value, rv.value
        elif isinstance(lv, V.RatV) and isinstance(rv, V.RatV):
            a, b = lv.value, rv.value
        else:
            raise EvalError("comparison needs two ints or two rats", e.span)
        return V.BoolV({"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op])
    if op in ("div", "mod"):
        if not (isinstance(lv, V.IntV) and isinstance(rv, V.IntV)):
            raise EvalError("div/mod need int operands", e.span)
        if rv.value == 0:
            raise EvalError("division by zero", e.span)
        fn = V.int_div if op == "div" else V.int_mod
        return V.IntV(fn(lv.value, rv.value))
    if op in ("+", "-", "*"):
        if isinstance(lv, V.IntV) and isinstance(rv, V.IntV):
            a, b = lv.value, rv.value
            out = a + b if op == "+" else a - b if op == "-" else a * b
            return V.IntV(out)
        if isinstance(lv, V.RatV) and isinstance(rv, V.RatV):
            a, b = lv.value, rv.value
            out = a + b if op == "+" else a - b if op == "-" else a * b
            return V.RatV(out)
        raise EvalError("arithmetic needs two ints or two rats", e.span)
    raise EvalError(f"unhandled operator {op!r}", e.span)


# ---------------------------------------------------------------------------
# Counterexamples and replay

@dataclass
class Counterexample:
    """A concrete binding for every parameter of a goal function."""

    goal: str
    bindings: tuple[tuple[str, Value], ...]  # parameter order

    def values(self) -> list[Value]:
        return [v for _, v in self.bindings]

    def to_json(self) -> dict:
        return {
            "schema": "regionforge.counterexample/1",
            "goal": self.goal,
            "bindings": {n: V.to_json(v) for n, v in self.bindings},
            "order": [n for n, _ in self.bindings],
        }

    @staticmethod
    def from_json(obj: dict) -> "Counterexample":
        order = obj.get("order") or list(obj["bindings"].keys())
        return Counterexample(
            goal=obj["goal"],
            bindings=tuple((n, V.from_json(obj["bindings"][n])) for n in order),
        )

    def pretty(self) -> str:
        return ", ".join(f"{n} = {V.pretty_value(v)}" for n, v in self.bindings)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


@dataclass
class ReplayReport:
    goal: str
    semantics: str  # "verify" | "instance"
    replayed: bool
    result: Optional[bool]
    confirmed: bool
    error: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "schema": "regionforge.replay/1",
            "goal": self.goal,
            "semantics": self.semantics,
            "replayed": self.replayed,
            "result": self.result,
            "confirmed": self.confirmed,
            "error": self.error,
        }


def replay_counterexample(
    program: S.Program,
    vg: str,
    cx: Counterexample,
    semantics: str = "verify",
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> ReplayReport:
    """Re-run a goal on a witness binding.

    verify semantics confirm when the goal evaluates to false; instance
    semantics confirm when it evaluates to true.
    """
    if semantics not in ("verify", "instance"):
        raise ValueError("semantics must be 'verify' or 'instance'")
    try:
        out = eval_call(program, vg, cx.values(), step_budget=step_budget)
    except EvalError as err:
        return ReplayReport(vg, semantics, replayed=False, result=None, confirmed=False, error=str(err))
    if not isinstance(out, V.BoolV):
        return ReplayReport(vg, semantics, replayed=True, result=None, confirmed=False,
                            error="goal did not evaluate to a boolean")
    want_false = semantics == "verify"
    confirmed = (out.value is False) if want_false else (out.value is True)
    return ReplayReport(vg, semantics, replayed=True, result=out.value, confirmed=confirmed)
