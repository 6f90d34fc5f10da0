"""Runtime values and their canonical JSON encoding.

Values are immutable and structurally comparable.  The wire format is a
tagged union: {"k": "Int", "v": "2699"}; rationals carry separate numerator
and denominator strings so arbitrary precision survives JSON.  Integer
division and modulo truncate toward zero; every consumer (evaluator, solver
model checks, symbolic constant folding) must go through int_div/int_mod so
the semantics stay aligned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from . import syntax as S


@dataclass(frozen=True)
class IntV:
    value: int


@dataclass(frozen=True)
class RatV:
    value: Fraction


@dataclass(frozen=True)
class BoolV:
    value: bool


@dataclass(frozen=True)
class TupleV:
    items: tuple["Value", ...]


@dataclass(frozen=True)
class ListV:
    items: tuple["Value", ...]


@dataclass(frozen=True)
class RecordV:
    type_name: str
    fields: tuple[tuple[str, "Value"], ...]  # declaration order

    def get(self, name: str) -> "Value":
        for fname, v in self.fields:
            if fname == name:
                return v
        raise KeyError(name)


@dataclass(frozen=True)
class VariantV:
    ctor: str
    args: tuple["Value", ...]


Value = Union[IntV, RatV, BoolV, TupleV, ListV, RecordV, VariantV]

TRUE = BoolV(True)
FALSE = BoolV(False)


def rat(num: int, den: int = 1) -> RatV:
    return RatV(Fraction(num, den))


def int_div(a: int, b: int) -> int:
    # truncation toward zero, not Python floor division
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def int_mod(a: int, b: int) -> int:
    return a - b * int_div(a, b)


def to_json(v: Value) -> dict:
    if isinstance(v, IntV):
        return {"k": "Int", "v": str(v.value)}
    if isinstance(v, RatV):
        return {"k": "Rat", "num": str(v.value.numerator), "den": str(v.value.denominator)}
    if isinstance(v, BoolV):
        return {"k": "Bool", "v": v.value}
    if isinstance(v, TupleV):
        return {"k": "Tuple", "items": [to_json(i) for i in v.items]}
    if isinstance(v, ListV):
        return {"k": "List", "items": [to_json(i) for i in v.items]}
    if isinstance(v, RecordV):
        return {
            "k": "Record",
            "type": v.type_name,
            "fields": {name: to_json(val) for name, val in v.fields},
            "order": [name for name, _ in v.fields],
        }
    if isinstance(v, VariantV):
        return {"k": "Variant", "ctor": v.ctor, "args": [to_json(a) for a in v.args]}
    raise TypeError(f"not a Value: {v!r}")


def from_json(obj: dict) -> Value:
    kind = obj.get("k")
    if kind == "Int":
        return IntV(int(obj["v"]))
    if kind == "Rat":
        return RatV(Fraction(int(obj["num"]), int(obj["den"])))
    if kind == "Bool":
        return BoolV(bool(obj["v"]))
    if kind == "Tuple":
        return TupleV(tuple(from_json(i) for i in obj["items"]))
    if kind == "List":
        return ListV(tuple(from_json(i) for i in obj["items"]))
    if kind == "Record":
        order = obj.get("order") or list(obj["fields"].keys())
        return RecordV(obj["type"], tuple((n, from_json(obj["fields"][n])) for n in order))
    if kind == "Variant":
        return VariantV(obj["ctor"], tuple(from_json(a) for a in obj["args"]))
    raise ValueError(f"unknown value tag {kind!r}")


def dumps(v: Value) -> str:
    return json.dumps(to_json(v), sort_keys=True, separators=(",", ":"))


def loads(text: str) -> Value:
    return from_json(json.loads(text))


def pretty_value(v: Value) -> str:
    """Render a value in MML surface syntax."""
    if isinstance(v, IntV):
        return str(v.value)
    if isinstance(v, RatV):
        f = v.value
        return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"
    if isinstance(v, BoolV):
        return "true" if v.value else "false"
    if isinstance(v, TupleV):
        return "(" + ", ".join(pretty_value(i) for i in v.items) + ")"
    if isinstance(v, ListV):
        return "[" + "; ".join(pretty_value(i) for i in v.items) + "]"
    if isinstance(v, RecordV):
        inner = "; ".join(f"{n} = {pretty_value(val)}" for n, val in v.fields)
        return "{ " + inner + " }"
    if isinstance(v, VariantV):
        if not v.args:
            return v.ctor
        if len(v.args) == 1:
            inner = pretty_value(v.args[0])
            arg = inner if isinstance(v.args[0], (IntV, BoolV, TupleV, ListV)) else f"({inner})"
            return f"{v.ctor} {arg}"
        return f"{v.ctor} (" + ", ".join(pretty_value(a) for a in v.args) + ")"
    raise TypeError(f"not a Value: {v!r}")


class TypeUniverse:
    """Type declarations visible to value checking and default synthesis."""

    def __init__(self, types: dict[str, S.TypeDef]):
        self.types = types

    def conforms(self, v: Value, ty: S.Ty) -> bool:
        if isinstance(ty, S.IntTy):
            return isinstance(v, IntV)
        if isinstance(ty, S.RatTy):
            return isinstance(v, RatV)
        if isinstance(ty, S.BoolTy):
            return isinstance(v, BoolV)
        if isinstance(ty, S.ListTy):
            return isinstance(v, ListV) and all(self.conforms(i, ty.elem) for i in v.items)
        if isinstance(ty, S.TupleTy):
            return (isinstance(v, TupleV) and len(v.items) == len(ty.items)
                    and all(self.conforms(i, t) for i, t in zip(v.items, ty.items)))
        if isinstance(ty, S.NamedTy):
            td = self.types.get(ty.name)
            if td is None:
                return False
            if td.is_record:
                if not isinstance(v, RecordV) or v.type_name != td.name:
                    return False
                names = [n for n, _ in v.fields]
                decl = [n for n, _ in td.record_fields]
                if names != decl:
                    return False
                by_name = dict(td.record_fields)
                return all(self.conforms(val, by_name[n]) for n, val in v.fields)
            if not isinstance(v, VariantV):
                return False
            for c in td.ctors:
                if c.name == v.ctor:
                    return (len(v.args) == len(c.arg_tys)
                            and all(self.conforms(a, t) for a, t in zip(v.args, c.arg_tys)))
            return False
        return False

    def default(self, ty: S.Ty) -> Value:
        """A canonical inhabitant: 0, false, [], first well-founded constructor."""
        if isinstance(ty, S.IntTy):
            return IntV(0)
        if isinstance(ty, S.RatTy):
            return RatV(Fraction(0))
        if isinstance(ty, S.BoolTy):
            return FALSE
        if isinstance(ty, S.ListTy):
            return ListV(())
        if isinstance(ty, S.TupleTy):
            return TupleV(tuple(self.default(t) for t in ty.items))
        if isinstance(ty, S.NamedTy):
            td = self.types[ty.name]
            if td.is_record:
                return RecordV(td.name, tuple((n, self.default(t)) for n, t in td.record_fields))
            ctor = self._base_ctor(td, set())
            return VariantV(ctor.name, tuple(self.default(t) for t in ctor.arg_tys))
        raise TypeError(f"no default for {ty}")

    def _base_ctor(self, td: S.TypeDef, seen: set[str]) -> S.CtorDef:
        # first constructor that does not recurse into the type being built
        seen = seen | {td.name}
        for c in td.ctors:
            if not any(self._mentions(t, seen) for t in c.arg_tys):
                return c
        return td.ctors[0]

    def _mentions(self, ty: S.Ty, names: set[str]) -> bool:
        if isinstance(ty, S.NamedTy):
            if ty.name in names:
                return True
            td = self.types.get(ty.name)
            if td is None:
                return False
            if td.is_record:
                return any(self._mentions(t, names | {ty.name}) for _, t in td.record_fields)
            return all(
                any(self._mentions(t, names | {ty.name}) for t in c.arg_tys) if c.arg_tys else False
                for c in td.ctors
            )
        if isinstance(ty, S.ListTy):
            return False  # [] always inhabits
        if isinstance(ty, S.TupleTy):
            return any(self._mentions(t, names) for t in ty.items)
        return False
