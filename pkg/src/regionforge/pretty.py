"""Source reconstruction for MML programs.

Guarantee: parse(pretty(parse(src))) is structurally equal to parse(src).
Output is fully parenthesized where precedence could bite; list spines
re-sugar to [a; b] literals or h :: t chains.
"""

from __future__ import annotations

from . import syntax as S

_PREC = {
    "==>": 1, "||": 2, "&&": 3,
    "=": 4, "<>": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "::": 5,
    "+": 6, "-": 6,
    "*": 7, "div": 7, "mod": 7,
}
_UNARY_PREC = 8
_APP_PREC = 9
_ATOM_PREC = 10


def ty_str(t: S.Ty) -> str:
    return str(t)


def expr_str(e: S.Expr, prec: int = 0) -> str:
    text, my_prec = _expr(e)
    if my_prec < prec:
        return f"({text})"
    return text


def _list_spine(e: S.Expr):
    items = []
    while isinstance(e, S.VariantCtor) and e.ctor == S.LIST_CONS:
        items.append(e.args[0])
        e = e.args[1]
    if isinstance(e, S.VariantCtor) and e.ctor == S.LIST_NIL:
        return items, None
    return items, e


def _expr(e: S.Expr) -> tuple[str, int]:
    if isinstance(e, S.IntLit):
        if e.value < 0:
            return f"-{-e.value}", _UNARY_PREC
        return str(e.value), _ATOM_PREC
    if isinstance(e, S.RatLit):
        # reconstruct a decimal literal; denominators are powers of ten by construction
        den, digits = e.den, 0
        while den > 1:
            den //= 10
            digits += 1
        sign = "-" if e.num < 0 else ""
        mag = abs(e.num)
        whole, frac = divmod(mag, e.den)
        if digits == 0:
            return f"{sign}{whole}.0", _ATOM_PREC if e.num >= 0 else _UNARY_PREC
        body = f"{sign}{whole}.{str(frac).zfill(digits)}"
        return body, _ATOM_PREC if e.num >= 0 else _UNARY_PREC
    if isinstance(e, S.BoolLit):
        return ("true" if e.value else "false"), _ATOM_PREC
    if isinstance(e, S.Var):
        return e.name, _ATOM_PREC
    if isinstance(e, S.Unary):
        op = "-" if e.op == "-" else "not "
        return f"{op}{expr_str(e.arg, _UNARY_PREC)}", _UNARY_PREC
    if isinstance(e, S.Binary):
        p = _PREC[e.op]
        right_assoc = e.op == "==>"
        lp = p if not right_assoc else p + 1
        rp = p + 1 if not right_assoc else p
        return f"{expr_str(e.left, lp)} {e.op} {expr_str(e.right, rp)}", p
    if isinstance(e, S.If):
        return f"if {expr_str(e.cond, 1)} then {expr_str(e.then)} else {expr_str(e.orelse)}", 0
    if isinstance(e, S.Match):
        arms = []
        for arm in e.arms:
            if arm.ctor == S.LIST_NIL:
                pat = "[]"
            elif arm.ctor == S.LIST_CONS:
                pat = f"{arm.binders[0]} :: {arm.binders[1]}"
            elif not arm.binders:
                pat = arm.ctor
            elif len(arm.binders) == 1:
                pat = f"{arm.ctor} {arm.binders[0]}"
            else:
                pat = f"{arm.ctor} ({', '.join(arm.binders)})"
            arms.append(f"| {pat} -> {expr_str(arm.body, 1)}")
        return f"match {expr_str(e.scrutinee, 1)} with {' '.join(arms)}", 0
    if isinstance(e, S.Let):
        return f"let {e.name} = {expr_str(e.bound, 1)} in {expr_str(e.body)}", 0
    if isinstance(e, S.Call):
        args = " ".join(expr_str(a, _ATOM_PREC) for a in e.args)
        return f"{e.fn} {args}", _APP_PREC
    if isinstance(e, S.RecordCtor):
        fields = "; ".join(f"{n} = {expr_str(v)}" for n, v in e.fields)
        return "{ " + fields + " }", _ATOM_PREC
    if isinstance(e, S.RecordUpdate):
        fields = "; ".join(f"{n} = {expr_str(v)}" for n, v in e.fields)
        return "{ " + expr_str(e.base, 1) + " with " + fields + " }", _ATOM_PREC
    if isinstance(e, S.FieldProj):
        return f"{expr_str(e.arg, _ATOM_PREC)}.{e.field}", _ATOM_PREC
    if isinstance(e, S.VariantCtor):
        if e.ctor in (S.LIST_NIL, S.LIST_CONS):
            items, tail = _list_spine(e)
            if tail is None:
                return "[" + "; ".join(expr_str(i) for i in items) + "]", _ATOM_PREC
            parts = [expr_str(i, _PREC["::"] + 1) for i in items] + [expr_str(tail, _PREC["::"])]
            return " :: ".join(parts), _PREC["::"]
        if not e.args:
            return e.ctor, _ATOM_PREC
        if len(e.args) == 1 and not isinstance(e.args[0], S.TupleCtor):
            return f"{e.ctor} {expr_str(e.args[0], _ATOM_PREC)}", _APP_PREC
        return f"{e.ctor} ({', '.join(expr_str(a) for a in e.args)})", _APP_PREC
    if isinstance(e, S.TupleCtor):
        return "(" + ", ".join(expr_str(i) for i in e.items) + ")", _ATOM_PREC
    raise TypeError(f"unhandled expression node {type(e).__name__}")


def decl_str(d: S.Decl) -> str:
    if isinstance(d, S.TypeDef):
        if d.is_record:
            fields = " ".join(f"{n}: {ty_str(t)};" for n, t in d.record_fields)
            return f"type {d.name} = {{ {fields} }}"
        ctors = []
        for c in d.ctors:
            if c.arg_tys:
                ctors.append(f"{c.name} of " + " * ".join(ty_str(t) for t in c.arg_tys))
            else:
                ctors.append(c.name)
        return f"type {d.name} = " + " | ".join(ctors)
    if isinstance(d, S.FunDef):
        rec = "rec " if d.is_rec else ""
        params = " ".join(f"({p.name}: {ty_str(p.ty)})" for p in d.params)
        ret = f" : {ty_str(d.ret_ty)}" if d.ret_ty is not None else ""
        return f"let {rec}{d.name} {params}{ret} = {expr_str(d.body)}"
    if isinstance(d, S.OpaqueDecl):
        sig = " -> ".join([ty_str(t) for t in d.param_tys] + [ty_str(d.ret_ty)])
        return f"opaque {d.name} : {sig}"
    if isinstance(d, S.AxiomDecl):
        params = "".join(f" ({p.name}: {ty_str(p.ty)})" for p in d.params)
        return f"axiom {d.name}{params} = {expr_str(d.body)}"
    if isinstance(d, S.ImportDecl):
        return f"import {d.module} ({', '.join(d.names)})"
    if isinstance(d, S.Directive):
        parts = [d.kind, d.target]
        if d.assuming:
            parts += ["assuming", d.assuming]
        if d.basis:
            parts += ["basis", ", ".join(d.basis)]
        return " ".join(parts)
    raise TypeError(f"unhandled declaration {type(d).__name__}")


def program_str(p: S.Program) -> str:
    return "\n".join(decl_str(d) for d in p.decls) + "\n"
