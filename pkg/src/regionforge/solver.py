"""SMT-lite constraint solver over symbolic terms.

Architecture: a DPLL-style boolean search assigns atoms (boolean leaves,
constructor tests, linear comparisons); a theory check then decides the
conjunction of asserted literals.  Constructor tests are mutually exclusive
per variable and close by case analysis over the declared constructor set.
Rational linear arithmetic is decided by Fourier-Motzkin elimination;
integer systems go through the rational relaxation plus branch-and-bound,
with strict integer atoms normalized to non-strict during canonicalization.
Uninterpreted applications (opaque and basis symbols) are structurally
hash-consed atoms: equal arguments are the identical atom, which gives
functional consistency by construction; argument equality is never derived
(no congruence closure).

Sat models are verified by substitution before they are returned.  Witness
search prefers small magnitudes: solving proceeds through growing symmetric
bounding boxes on integer unknowns and then tightens the maximum absolute
value, budget permitting.  Out-of-fragment atoms (products of two unknowns,
division by a symbolic expression) yield Unknown("nonlinear") or
Unknown("incomplete-theory") unless the remaining constraints are already
unsatisfiable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from math import ceil, floor, gcd
from typing import Callable, Iterable, Optional, Union

from . import syntax as S
from . import values as V
from .values import Value

DEFAULT_SOLVER_BUDGET = 1_000_000


class SolverInternalError(Exception):
    pass


class _OutOfFragment(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class _BudgetExhausted(Exception):
    pass


# ---------------------------------------------------------------------------
# Terms

@dataclass(frozen=True)
class SVar:
    name: str
    ty: S.Ty


@dataclass(frozen=True)
class SIntConst:
    value: int


@dataclass(frozen=True)
class SRatConst:
    value: Fraction


@dataclass(frozen=True)
class SBoolConst:
    value: bool


@dataclass(frozen=True)
class SValConst:
    """Constant of arbitrary value type (appears inside SApp arguments)."""
    value: Value


@dataclass(frozen=True)
class SAdd:
    left: "STerm"
    right: "STerm"


@dataclass(frozen=True)
class SSub:
    left: "STerm"
    right: "STerm"


@dataclass(frozen=True)
class SMul:
    left: "STerm"
    right: "STerm"


@dataclass(frozen=True)
class SDiv:
    left: "STerm"
    right: "STerm"


@dataclass(frozen=True)
class SMod:
    left: "STerm"
    right: "STerm"


@dataclass(frozen=True)
class SNeg:
    arg: "STerm"


@dataclass(frozen=True)
class SCmp:
    op: str  # = <> < <= > >=
    left: "STerm"
    right: "STerm"


@dataclass(frozen=True)
class SNot:
    arg: "STerm"


@dataclass(frozen=True)
class SAnd:
    left: "STerm"
    right: "STerm"


@dataclass(frozen=True)
class SOr:
    left: "STerm"
    right: "STerm"


@dataclass(frozen=True)
class SCtorTest:
    arg: "STerm"  # an ADT-typed key term
    ctor: str


@dataclass(frozen=True)
class SFieldSel:
    arg: "STerm"
    field: Union[str, int]
    ty: S.Ty


@dataclass(frozen=True)
class SApp:
    fn: str
    args: tuple["STerm", ...]
    ty: S.Ty


@dataclass(frozen=True)
class SConstruct:
    """Structured symbolic value inside SApp arguments: records, variants,
    tuples, and list spines, with symbolic leaves."""
    tag: str  # "rec:<type>" | "ctor:<name>" | "tuple"
    items: tuple["STerm", ...]


@dataclass(frozen=True)
class LinAtom:
    """Canonical linear comparison: sum(coeff * key) + const REL 0."""
    rel: str  # "GE" | "GT" | "EQ" | "NEQ"  (GT only over rats)
    terms: tuple[tuple[Fraction, "STerm"], ...]  # sorted by key serialization
    const: Fraction
    domain: str  # "int" | "rat"


STerm = Union[
    SVar, SIntConst, SRatConst, SBoolConst, SValConst, SAdd, SSub, SMul, SDiv,
    SMod, SNeg, SCmp, SNot, SAnd, SOr, SCtorTest, SFieldSel, SApp, SConstruct,
    LinAtom,
]

TRUE = SBoolConst(True)
FALSE = SBoolConst(False)


# ---------------------------------------------------------------------------
# Serialization (total term order, region hashing, model keys)

def serialize(t: STerm) -> str:
    if isinstance(t, SVar):
        return f"v:{t.name}"
    if isinstance(t, SIntConst):
        return f"i:{t.value}"
    if isinstance(t, SRatConst):
        return f"q:{t.value}"
    if isinstance(t, SBoolConst):
        return "true" if t.value else "false"
    if isinstance(t, SValConst):
        return f"c:{V.dumps(t.value)}"
    if isinstance(t, SAdd):
        return f"(+ {serialize(t.left)} {serialize(t.right)})"
    if isinstance(t, SSub):
        return f"(- {serialize(t.left)} {serialize(t.right)})"
    if isinstance(t, SMul):
        return f"(* {serialize(t.left)} {serialize(t.right)})"
    if isinstance(t, SDiv):
        return f"(div {serialize(t.left)} {serialize(t.right)})"
    if isinstance(t, SMod):
        return f"(mod {serialize(t.left)} {serialize(t.right)})"
    if isinstance(t, SNeg):
        return f"(neg {serialize(t.arg)})"
    if isinstance(t, SCmp):
        return f"(cmp {t.op} {serialize(t.left)} {serialize(t.right)})"
    if isinstance(t, SNot):
        return f"(not {serialize(t.arg)})"
    if isinstance(t, SAnd):
        return f"(and {serialize(t.left)} {serialize(t.right)})"
    if isinstance(t, SOr):
        return f"(or {serialize(t.left)} {serialize(t.right)})"
    if isinstance(t, SCtorTest):
        return f"(is {t.ctor} {serialize(t.arg)})"
    if isinstance(t, SFieldSel):
        return f"(sel {t.field} {serialize(t.arg)})"
    if isinstance(t, SApp):
        inner = " ".join(serialize(a) for a in t.args)
        return f"(app {t.fn} {inner})"
    if isinstance(t, SConstruct):
        inner = " ".join(serialize(a) for a in t.items)
        return f"(mk {t.tag} {inner})"
    if isinstance(t, LinAtom):
        body = " ".join(f"{c}*{serialize(k)}" for c, k in t.terms)
        return f"(lin {t.domain} {t.rel} {body} {t.const})"
    raise TypeError(f"not an STerm: {t!r}")


def key_of(t: STerm) -> str:
    return t.name if isinstance(t, SVar) else serialize(t)


def term_ty(t: STerm) -> Optional[S.Ty]:
    if isinstance(t, SVar):
        return t.ty
    if isinstance(t, SIntConst):
        return S.INT
    if isinstance(t, SRatConst):
        return S.RAT
    if isinstance(t, SBoolConst):
        return S.BOOL
    if isinstance(t, (SApp, SFieldSel)):
        return t.ty
    if isinstance(t, (SAdd, SSub, SMul, SDiv, SMod)):
        return term_ty(t.left) or term_ty(t.right)
    if isinstance(t, SNeg):
        return term_ty(t.arg)
    if isinstance(t, (SCmp, SNot, SAnd, SOr, SCtorTest, LinAtom)):
        return S.BOOL
    return None


# ---------------------------------------------------------------------------
# Linear form extraction and canonical atoms

def _linform(t: STerm) -> tuple[dict[str, tuple[Fraction, STerm]], Fraction]:
    """Return ({key: (coeff, key_term)}, const) or raise _OutOfFragment."""
    if isinstance(t, SIntConst):
        return {}, Fraction(t.value)
    if isinstance(t, SRatConst):
        return {}, t.value
    if isinstance(t, (SVar, SApp, SFieldSel)):
        ty = term_ty(t)
        if ty not in (S.INT, S.RAT):
            # boolean or structured operands are not linear-arithmetic keys;
            # the caller is expected to decompose such comparisons
            raise _OutOfFragment("incomplete-theory")
        return {key_of(t): (Fraction(1), t)}, Fraction(0)
    if isinstance(t, SNeg):
        coeffs, c = _linform(t.arg)
        return {k: (-f, kt) for k, (f, kt) in coeffs.items()}, -c
    if isinstance(t, (SAdd, SSub)):
        lc, lk = _linform(t.left)
        rc, rk = _linform(t.right)
        sign = 1 if isinstance(t, SAdd) else -1
        out = dict(lc)
        for k, (f, kt) in rc.items():
            cur = out.get(k)
            nf = (cur[0] if cur else Fraction(0)) + sign * f
            out[k] = (nf, kt)
        return {k: v for k, v in out.items() if v[0] != 0}, lk + sign * rk
    if isinstance(t, SMul):
        lc, lk = _linform(t.left)
        rc, rk = _linform(t.right)
        if lc and rc:
            raise _OutOfFragment("nonlinear")
        if not lc:
            return {k: (lk * f, kt) for k, (f, kt) in rc.items()}, lk * rk
        return {k: (rk * f, kt) for k, (f, kt) in lc.items()}, lk * rk
    if isinstance(t, (SDiv, SMod)):
        lc, lk = _linform(t.left)
        rc, rk = _linform(t.right)
        if not lc and not rc:
            if rk == 0:
                raise _OutOfFragment("incomplete-theory")
            a, b = int(lk), int(rk)
            return {}, Fraction(V.int_div(a, b) if isinstance(t, SDiv) else V.int_mod(a, b))
        raise _OutOfFragment("incomplete-theory")
    raise _OutOfFragment("nonlinear")


def _atom_domain(coeffs: dict, const: Fraction) -> str:
    for _, (_, kt) in coeffs.items():
        if term_ty(kt) == S.RAT:
            return "rat"
    return "int"


def lin_atom(op: str, left: STerm, right: STerm) -> STerm:
    """Canonicalize a comparison; returns LinAtom or a boolean constant.
    Raises _OutOfFragment for nonlinear or div/mod-by-symbolic shapes."""
    lc, lk = _linform(left)
    rc, rk = _linform(right)
    coeffs = dict(lc)
    for k, (f, kt) in rc.items():
        cur = coeffs.get(k)
        nf = (cur[0] if cur else Fraction(0)) - f
        coeffs[k] = (nf, kt)
    coeffs = {k: v for k, v in coeffs.items() if v[0] != 0}
    const = lk - rk
    # orient to: f REL 0 with f = left - right
    if op == "=":
        rel = "EQ"
    elif op == "<>":
        rel = "NEQ"
    elif op == ">=":
        rel = "GE"
    elif op == ">":
        rel = "GT"
    elif op == "<=":
        rel, coeffs, const = "GE", _negate(coeffs), -const
    elif op == "<":
        rel, coeffs, const = "GT", _negate(coeffs), -const
    else:
        raise ValueError(f"unknown comparison {op!r}")
    return _normalize_lin(rel, coeffs, const)


def _negate(coeffs: dict) -> dict:
    return {k: (-f, kt) for k, (f, kt) in coeffs.items()}


def _normalize_lin(rel: str, coeffs: dict, const: Fraction) -> STerm:
    if not coeffs:
        v = const
        ok = {"GE": v >= 0, "GT": v > 0, "EQ": v == 0, "NEQ": v != 0}[rel]
        return SBoolConst(ok)
    domain = _atom_domain(coeffs, const)
    items = sorted(coeffs.items(), key=lambda kv: kv[0])
    fracs = [f for _, (f, _) in items] + [const]
    if domain == "int":
        denom_lcm = 1
        for f in fracs:
            denom_lcm = denom_lcm * f.denominator // gcd(denom_lcm, f.denominator)
        ints = [int(f * denom_lcm) for f in fracs]
        cs, cconst = ints[:-1], ints[-1]
        if rel == "GT":  # strict to non-strict over the integers
            rel, cconst = "GE", cconst - 1
        g = 0
        for c in cs:
            g = gcd(g, abs(c))
        if g > 1:
            if rel == "EQ" and cconst % g != 0:
                return FALSE
            if rel == "NEQ" and cconst % g != 0:
                return TRUE
            if rel == "GE":
                cconst = floor(Fraction(cconst, g))
            else:
                cconst = cconst // g
            cs = [c // g for c in cs]
        terms = tuple((Fraction(c), kt) for c, (k, (f, kt)) in zip(cs, items))
        return LinAtom(rel, terms, Fraction(cconst), "int")
    # rational: scale so the leading coefficient has magnitude one
    lead = abs(items[0][1][0])
    terms = tuple((f / lead, kt) for _, (f, kt) in items)
    return LinAtom(rel, terms, const / lead, "rat")


def _lin_negate_atom(a: LinAtom) -> STerm:
    """Complement of a canonical linear atom, itself canonical."""
    flipped = {key_of(kt): (-f, kt) for f, kt in a.terms}
    if a.rel == "EQ":
        return LinAtom("NEQ", a.terms, a.const, a.domain)
    if a.rel == "NEQ":
        return LinAtom("EQ", a.terms, a.const, a.domain)
    if a.rel == "GE":  # not(f >= 0) == -f > 0
        return _normalize_lin("GT", flipped, -a.const)
    return _normalize_lin("GE", flipped, -a.const)  # not(f > 0) == -f >= 0


# ---------------------------------------------------------------------------
# Smart constructors (used by the symbolic engine)

def s_not(t: STerm) -> STerm:
    if isinstance(t, SBoolConst):
        return SBoolConst(not t.value)
    if isinstance(t, SNot):
        return t.arg
    if isinstance(t, LinAtom):
        return _lin_negate_atom(t)
    return SNot(t)


def s_and(a: STerm, b: STerm) -> STerm:
    if isinstance(a, SBoolConst):
        return b if a.value else FALSE
    if isinstance(b, SBoolConst):
        return a if b.value else FALSE
    return SAnd(a, b)


def s_or(a: STerm, b: STerm) -> STerm:
    if isinstance(a, SBoolConst):
        return TRUE if a.value else b
    if isinstance(b, SBoolConst):
        return TRUE if b.value else a
    return SOr(a, b)


def s_cmp(op: str, left: STerm, right: STerm) -> STerm:
    try:
        return lin_atom(op, left, right)
    except _OutOfFragment:
        return SCmp(op, left, right)  # kept; classified out-of-fragment later


def nnf(t: STerm, positive: bool = True) -> STerm:
    """Negation normal form over canonical atoms."""
    if isinstance(t, SNot):
        return nnf(t.arg, not positive)
    if isinstance(t, SAnd):
        l, r = nnf(t.left, positive), nnf(t.right, positive)
        return s_and(l, r) if positive else s_or(l, r)
    if isinstance(t, SOr):
        l, r = nnf(t.left, positive), nnf(t.right, positive)
        return s_or(l, r) if positive else s_and(l, r)
    if isinstance(t, SBoolConst):
        return SBoolConst(t.value if positive else not t.value)
    if isinstance(t, LinAtom):
        return t if positive else _lin_negate_atom(t)
    if isinstance(t, SCmp):
        if positive:
            return s_cmp(t.op, t.left, t.right)
        comp = {"=": "<>", "<>": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}
        return s_cmp(comp[t.op], t.left, t.right)
    return t if positive else SNot(t)


# ---------------------------------------------------------------------------
# Constraint sets

@dataclass(frozen=True)
class ConstraintSet:
    constraints: tuple[STerm, ...]
    canonical: bool = False

    def __iter__(self):
        return iter(self.constraints)

    def __len__(self):
        return len(self.constraints)


def _sort_rank(t: STerm) -> int:
    if isinstance(t, SCtorTest) or (isinstance(t, SNot) and isinstance(t.arg, SCtorTest)):
        return 0
    if isinstance(t, LinAtom):
        return 1
    if isinstance(t, (SVar, SApp, SFieldSel)) or isinstance(t, SNot):
        return 2
    return 3


def canonicalize(cs: Union[ConstraintSet, Iterable[STerm]]) -> ConstraintSet:
    """Flatten conjunctions, normalize atoms (strict int bounds become
    non-strict), drop trivial truths, deduplicate, and sort by a total term
    order.  Idempotent and order-insensitive."""
    items = list(cs.constraints if isinstance(cs, ConstraintSet) else cs)
    flat: list[STerm] = []

    def push(t: STerm) -> None:
        t = nnf(t)
        if isinstance(t, SAnd):
            push(t.left)
            push(t.right)
            return
        if isinstance(t, SBoolConst) and t.value:
            return
        flat.append(t)

    for t in items:
        push(t)
    seen: dict[str, STerm] = {}
    for t in flat:
        seen.setdefault(serialize(t), t)
    ordered = sorted(seen.values(), key=lambda t: (_sort_rank(t), serialize(t)))
    return ConstraintSet(tuple(ordered), canonical=True)


def out_of_fragment_reason(t: STerm) -> Optional[str]:
    """Why a term falls outside the decidable fragment, if it does."""
    if isinstance(t, SCmp):
        try:
            lin_atom(t.op, t.left, t.right)
        except _OutOfFragment as e:
            return e.reason
        return None
    if isinstance(t, (SDiv, SMod)):
        return "incomplete-theory"
    if isinstance(t, SMul):
        try:
            _linform(t)
        except _OutOfFragment as e:
            return e.reason
        return None
    for child in _children(t):
        r = out_of_fragment_reason(child)
        if r:
            return r
    return None


def _children(t: STerm) -> tuple[STerm, ...]:
    if isinstance(t, (SAdd, SSub, SMul, SDiv, SMod, SAnd, SOr)):
        return (t.left, t.right)
    if isinstance(t, SCmp):
        return (t.left, t.right)
    if isinstance(t, (SNeg, SNot)):
        return (t.arg,)
    if isinstance(t, SCtorTest):
        return (t.arg,)
    if isinstance(t, SFieldSel):
        return (t.arg,)
    if isinstance(t, SApp):
        return t.args
    if isinstance(t, SConstruct):
        return t.items
    if isinstance(t, LinAtom):
        return tuple(kt for _, kt in t.terms)
    return ()


def atoms_of(t: STerm) -> list[STerm]:
    """Key terms (SApp / SFieldSel heads) mentioned anywhere in a term."""
    out = []
    if isinstance(t, (SApp, SFieldSel)):
        out.append(t)
    for c in _children(t):
        out.extend(atoms_of(c))
    return out


def opaque_heads(t: STerm, opaque_names: set[str]) -> list[SApp]:
    return [a for a in atoms_of(t) if isinstance(a, SApp) and a.fn in opaque_names]


# ---------------------------------------------------------------------------
# Pretty printing (surface syntax for constraints and invariants)

def pretty_term(t: STerm) -> str:
    if isinstance(t, LinAtom):
        return _pretty_lin(t)
    if isinstance(t, SCtorTest):
        return f"{_pretty_operand(t.arg)} = {t.ctor}"
    if isinstance(t, SNot):
        inner = pretty_term(t.arg)
        if isinstance(t.arg, (SVar, SApp, SFieldSel)):
            return f"not {inner}"
        return f"not ({inner})"
    if isinstance(t, SAnd):
        return f"({pretty_term(t.left)} && {pretty_term(t.right)})"
    if isinstance(t, SOr):
        return f"({pretty_term(t.left)} || {pretty_term(t.right)})"
    if isinstance(t, SBoolConst):
        return "true" if t.value else "false"
    if isinstance(t, SCmp):
        return f"{_pretty_operand(t.left)} {t.op} {_pretty_operand(t.right)}"
    return _pretty_operand(t)


def _pretty_operand(t: STerm) -> str:
    if isinstance(t, SVar):
        return t.name
    if isinstance(t, SIntConst):
        return str(t.value)
    if isinstance(t, SRatConst):
        v = t.value
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(t, SBoolConst):
        return "true" if t.value else "false"
    if isinstance(t, SValConst):
        return V.pretty_value(t.value)
    if isinstance(t, SAdd):
        return f"{_pretty_operand(t.left)} + {_pretty_operand(t.right)}"
    if isinstance(t, SSub):
        return f"{_pretty_operand(t.left)} - {_pretty_operand(t.right)}"
    if isinstance(t, SMul):
        return f"{_pretty_factor(t.left)} * {_pretty_factor(t.right)}"
    if isinstance(t, SDiv):
        return f"{_pretty_factor(t.left)} div {_pretty_factor(t.right)}"
    if isinstance(t, SMod):
        return f"{_pretty_factor(t.left)} mod {_pretty_factor(t.right)}"
    if isinstance(t, SNeg):
        return f"-{_pretty_factor(t.arg)}"
    if isinstance(t, SFieldSel):
        return f"{_pretty_factor(t.arg)}.{t.field}"
    if isinstance(t, SApp):
        if not t.args:
            return t.fn
        return f"{t.fn} " + " ".join(_pretty_factor(a) for a in t.args)
    if isinstance(t, SConstruct):
        kind, _, name = t.tag.partition(":")
        if kind == "tuple":
            return "(" + ", ".join(_pretty_operand(i) for i in t.items) + ")"
        if kind == "ctor":
            if not t.items:
                return name
            return f"{name} (" + ", ".join(_pretty_operand(i) for i in t.items) + ")"
        if kind == "rec":
            fields = name.split(",")[1:]
            body = "; ".join(f"{f} = {_pretty_operand(i)}" for f, i in zip(fields, t.items))
            return "{ " + body + " }"
        return f"{name} {{ " + ", ".join(_pretty_operand(i) for i in t.items) + " }}"
    return pretty_term(t)


def _pretty_factor(t: STerm) -> str:
    s = _pretty_operand(t)
    if isinstance(t, (SVar, SIntConst, SRatConst, SBoolConst, SFieldSel, SValConst)):
        return s
    return f"({s})"


def _pretty_monomial(coeff: Fraction, kt: STerm) -> str:
    base = _pretty_factor(kt)
    if coeff == 1:
        return base
    c = str(coeff.numerator) if coeff.denominator == 1 else f"{coeff.numerator}/{coeff.denominator}"
    return f"{c} * {base}"


def _pretty_lin(a: LinAtom) -> str:
    # sum(coeff*key) + const REL 0, displayed as lhs REL rhs with positive
    # monomials kept left; a single negative-coefficient unknown flips the
    # relation so "o.amount <= 100" prints the way a reader expects
    rel_str = {"GE": ">=", "GT": ">", "EQ": "=", "NEQ": "<>"}[a.rel]
    if len(a.terms) == 1:
        coeff, kt = a.terms[0]
        if coeff < 0:
            flipped = {"GE": "<=", "GT": "<", "EQ": "=", "NEQ": "<>"}[a.rel]
            return f"{_pretty_monomial(-coeff, kt)} {flipped} {_frac_str(a.const)}"
        return f"{_pretty_monomial(coeff, kt)} {rel_str} {_frac_str(-a.const)}"
    pos = [(c, kt) for c, kt in a.terms if c > 0]
    neg = [(-c, kt) for c, kt in a.terms if c < 0]
    lhs = " + ".join(_pretty_monomial(c, kt) for c, kt in pos) or "0"
    rhs_parts = [_pretty_monomial(c, kt) for c, kt in neg]
    if -a.const != 0 or not rhs_parts:
        rhs_parts.append(_frac_str(-a.const))
    rhs = " + ".join(rhs_parts)
    return f"{lhs} {rel_str} {rhs}"


def _frac_str(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


# ---------------------------------------------------------------------------
# Models and results

@dataclass
class Model:
    scalars: dict[str, Value]  # key -> IntV/RatV/BoolV
    ctors: dict[str, str]  # ADT key -> chosen constructor
    atoms: dict[str, Value]  # uninterpreted application key -> value

    def to_json(self) -> dict:
        return {
            "scalars": {k: V.to_json(v) for k, v in sorted(self.scalars.items())},
            "ctors": dict(sorted(self.ctors.items())),
            "atoms": {k: V.to_json(v) for k, v in sorted(self.atoms.items())},
        }


@dataclass
class SatResult:
    status: str  # "sat" | "unsat" | "unknown"
    model: Optional[Model] = None
    reason: Optional[str] = None  # for unknown: nonlinear | budget | incomplete-theory
    steps: int = 0

    @property
    def is_sat(self) -> bool:
        return self.status == "sat"

    @property
    def is_unsat(self) -> bool:
        return self.status == "unsat"


@dataclass
class TypeContext:
    """Constructor universes for ADT case analysis."""
    types: dict[str, S.TypeDef]

    def ctors_of(self, ty: Optional[S.Ty]) -> Optional[list[str]]:
        if isinstance(ty, S.ListTy):
            return [S.LIST_NIL, S.LIST_CONS]
        if isinstance(ty, S.NamedTy):
            td = self.types.get(ty.name)
            if td is not None and not td.is_record:
                return [c.name for c in td.ctors]
        return None


EMPTY_TYPES = TypeContext({})


# ---------------------------------------------------------------------------
# Term evaluation under an assignment

def eval_sterm(
    t: STerm,
    scalars: dict[str, Value],
    ctors: Optional[dict[str, str]] = None,
    atoms: Optional[dict[str, Value]] = None,
    app_eval: Optional[Callable[[str, list[Value]], Value]] = None,
) -> Value:
    """Evaluate a term under concrete bindings.

    scalars binds key names to values (ADT-valued keys may bind full values,
    which constructor tests inspect directly).  app_eval, when given, runs
    real function semantics for SApp heads; otherwise atoms supplies
    uninterpreted result values.
    """
    ctors = ctors or {}
    atoms = atoms or {}

    def ev(t: STerm) -> Value:
        if isinstance(t, SVar):
            try:
                return scalars[t.name]
            except KeyError:
                raise SolverInternalError(f"no binding for {t.name!r}") from None
        if isinstance(t, SIntConst):
            return V.IntV(t.value)
        if isinstance(t, SRatConst):
            return V.RatV(t.value)
        if isinstance(t, SBoolConst):
            return V.BoolV(t.value)
        if isinstance(t, SValConst):
            return t.value
        if isinstance(t, SNeg):
            v = ev(t.arg)
            return V.IntV(-v.value) if isinstance(v, V.IntV) else V.RatV(-v.value)
        if isinstance(t, (SAdd, SSub, SMul)):
            a, b = ev(t.left), ev(t.right)
            x, y = a.value, b.value
            out = x + y if isinstance(t, SAdd) else x - y if isinstance(t, SSub) else x * y
            return V.IntV(out) if isinstance(a, V.IntV) and isinstance(b, V.IntV) else V.RatV(Fraction(out))
        if isinstance(t, (SDiv, SMod)):
            a, b = ev(t.left), ev(t.right)
            if b.value == 0:
                raise SolverInternalError("division by zero during substitution")
            fn = V.int_div if isinstance(t, SDiv) else V.int_mod
            return V.IntV(fn(a.value, b.value))
        if isinstance(t, SCmp):
            a, b = ev(t.left), ev(t.right)
            if t.op == "=":
                return V.BoolV(a == b)
            if t.op == "<>":
                return V.BoolV(a != b)
            return V.BoolV({"<": a.value < b.value, "<=": a.value <= b.value,
                            ">": a.value > b.value, ">=": a.value >= b.value}[t.op])
        if isinstance(t, SNot):
            return V.BoolV(not ev(t.arg).value)
        if isinstance(t, SAnd):
            return V.BoolV(bool(ev(t.left).value) and bool(ev(t.right).value))
        if isinstance(t, SOr):
            return V.BoolV(bool(ev(t.left).value) or bool(ev(t.right).value))
        if isinstance(t, SCtorTest):
            key = key_of(t.arg)
            if key in ctors:
                return V.BoolV(ctors[key] == t.ctor)
            v = ev(t.arg)
            if isinstance(v, V.VariantV):
                return V.BoolV(v.ctor == t.ctor)
            if isinstance(v, V.ListV):
                actual = S.LIST_NIL if not v.items else S.LIST_CONS
                return V.BoolV(actual == t.ctor)
            raise SolverInternalError("constructor test on a non-ADT value")
        if isinstance(t, SFieldSel):
            key = key_of(t)
            if app_eval is None and key in atoms:
                return atoms[key]  # uninterpreted projection atom
            if app_eval is None and key in scalars:
                return scalars[key]
            base = ev(t.arg)
            if isinstance(t.field, int):
                return base.items[t.field]
            return base.get(t.field)
        if isinstance(t, SApp):
            if app_eval is not None:
                return app_eval(t.fn, [ev(a) for a in t.args])
            key = key_of(t)
            if key in atoms:
                return atoms[key]
            if key in scalars:
                return scalars[key]
            raise SolverInternalError(f"no interpretation for atom {pretty_term(t)}")
        if isinstance(t, SConstruct):
            vals = tuple(ev(i) for i in t.items)
            kind, _, name = t.tag.partition(":")
            if kind == "tuple":
                return V.TupleV(vals)
            if kind == "ctor":
                if name == S.LIST_NIL:
                    return V.ListV(())
                if name == S.LIST_CONS:
                    tail = vals[1]
                    return V.ListV((vals[0],) + tail.items)
                return V.VariantV(name, vals)
            field_names = name.split(",")[1:]
            type_name = name.split(",")[0]
            return V.RecordV(type_name, tuple(zip(field_names, vals)))
        if isinstance(t, LinAtom):
            total = t.const
            for coeff, kt in t.terms:
                total += coeff * Fraction(ev(kt).value)
            return V.BoolV({"GE": total >= 0, "GT": total > 0,
                            "EQ": total == 0, "NEQ": total != 0}[t.rel])
        raise TypeError(f"not an STerm: {t!r}")

    return ev(t)


# ---------------------------------------------------------------------------
# Fourier-Motzkin over the rationals

@dataclass
class _Row:
    coeffs: dict[str, Fraction]
    const: Fraction
    strict: bool  # True: f > 0, False: f >= 0


def _fm_solve(rows: list[_Row], eqs: list[tuple[dict[str, Fraction], Fraction]],
              budget: "_Steps") -> Optional[dict[str, Fraction]]:
    """Decide sum(c*x) + const >= / > 0 rows plus equalities; return a model
    over the mentioned keys, or None when unsatisfiable."""
    subs: list[tuple[str, dict[str, Fraction], Fraction]] = []  # x = expr
    eqs = [(dict(c), k) for c, k in eqs]
    while eqs:
        budget.tick()
        coeffs, const = eqs.pop()
        coeffs = {k: v for k, v in coeffs.items() if v != 0}
        if not coeffs:
            if const != 0:
                return None
            continue
        pivot = sorted(coeffs)[0]
        a = coeffs.pop(pivot)
        expr = {k: -v / a for k, v in coeffs.items()}
        econst = -const / a
        subs.append((pivot, expr, econst))

        def substitute(cs: dict[str, Fraction], c0: Fraction) -> tuple[dict[str, Fraction], Fraction]:
            if pivot not in cs:
                return cs, c0
            f = cs.pop(pivot)
            for k, v in expr.items():
                cs[k] = cs.get(k, Fraction(0)) + f * v
            return {k: v for k, v in cs.items() if v != 0}, c0 + f * econst

        eqs = [substitute(dict(c), k) for c, k in eqs]
        new_rows = []
        for r in rows:
            cs, c0 = substitute(dict(r.coeffs), r.const)
            new_rows.append(_Row(cs, c0, r.strict))
        rows = new_rows

    rows = [r for r in rows if any(v != 0 for v in r.coeffs.values()) or not _const_row_ok(r)]
    # eliminate variables, recording bounds for back-substitution
    order: list[tuple[str, list[_Row], list[_Row]]] = []
    active = [r for r in rows]
    while True:
        budget.tick()
        vars_here: dict[str, int] = {}
        for r in active:
            for k, v in r.coeffs.items():
                if v != 0:
                    vars_here[k] = vars_here.get(k, 0) + 1
        if not vars_here:
            break
        x = sorted(vars_here.items(), key=lambda kv: (kv[1], kv[0]))[0][0]
        lowers, uppers, rest = [], [], []
        for r in active:
            a = r.coeffs.get(x, Fraction(0))
            if a > 0:
                lowers.append(r)  # x >= -(rest)/a
            elif a < 0:
                uppers.append(r)
            else:
                rest.append(r)
        for lo in lowers:
            for up in uppers:
                budget.tick()
                a, b = lo.coeffs[x], up.coeffs[x]
                coeffs: dict[str, Fraction] = {}
                for k in set(lo.coeffs) | set(up.coeffs):
                    if k == x:
                        continue
                    v = lo.coeffs.get(k, Fraction(0)) / a - up.coeffs.get(k, Fraction(0)) / b
                    if v != 0:
                        coeffs[k] = v
                const = lo.const / a - up.const / b
                rest.append(_Row(coeffs, const, lo.strict or up.strict))
        order.append((x, lowers, uppers))
        active = rest

    for r in active:
        if not _const_row_ok(r):
            return None

    model: dict[str, Fraction] = {}
    for x, lowers, uppers in reversed(order):
        lo, lo_strict = None, False
        hi, hi_strict = None, False
        for r in lowers:
            rest = r.const + sum(v * model.get(k, Fraction(0)) for k, v in r.coeffs.items() if k != x)
            bound = -rest / r.coeffs[x]
            if lo is None or bound > lo or (bound == lo and r.strict):
                lo, lo_strict = bound, r.strict
        for r in uppers:
            rest = r.const + sum(v * model.get(k, Fraction(0)) for k, v in r.coeffs.items() if k != x)
            bound = -rest / r.coeffs[x]
            if hi is None or bound < hi or (bound == hi and r.strict):
                hi, hi_strict = bound, r.strict
        model[x] = _pick_in_interval(lo, lo_strict, hi, hi_strict)
    for pivot, expr, econst in reversed(subs):
        model[pivot] = econst + sum(v * model.get(k, Fraction(0)) for k, v in expr.items())
    return model


def _const_row_ok(r: _Row) -> bool:
    if any(v != 0 for v in r.coeffs.values()):
        return True
    return r.const > 0 if r.strict else r.const >= 0


def _pick_in_interval(lo, lo_strict, hi, hi_strict) -> Fraction:
    zero = Fraction(0)

    def ok(v: Fraction) -> bool:
        if lo is not None and (v < lo or (v == lo and lo_strict)):
            return False
        if hi is not None and (v > hi or (v == hi and hi_strict)):
            return False
        return True

    if ok(zero):
        return zero
    candidates: list[Fraction] = []
    if lo is not None:
        candidates += [Fraction(ceil(lo)), lo, lo + 1]
    if hi is not None:
        candidates += [Fraction(floor(hi)), hi, hi - 1]
    if lo is not None and hi is not None:
        candidates.append((lo + hi) / 2)
    for c in candidates:
        if ok(c):
            return c
    raise SolverInternalError("empty interval reached back-substitution")


# ---------------------------------------------------------------------------
# Integer layer: relaxation plus branch-and-bound

class _Steps:
    __slots__ = ("left",)

    def __init__(self, n: int):
        self.left = n

    def tick(self, n: int = 1) -> None:
        self.left -= n
        if self.left < 0:
            raise _BudgetExhausted()


def _int_solve(rows: list[_Row], eqs: list, budget: _Steps,
               node_cap: int = 400) -> Optional[dict[str, Fraction]]:
    """Integer solutions via rational relaxation + branch and bound.
    Returns a model, None (unsat), or raises _BudgetExhausted."""

    def bb(rows: list[_Row], eqs: list, depth: int) -> Optional[dict[str, Fraction]]:
        nonlocal nodes
        nodes += 1
        if nodes > node_cap:
            raise _BudgetExhausted()
        budget.tick()
        model = _fm_solve(rows, eqs, budget)
        if model is None:
            return None
        frac = [(k, v) for k, v in sorted(model.items()) if v.denominator != 1]
        if not frac:
            return model
        k, v = frac[0]
        fl = floor(v)
        left = rows + [_Row({k: Fraction(-1)}, Fraction(fl), False)]  # x <= fl
        out = bb(left, eqs, depth + 1)
        if out is not None:
            return out
        right = rows + [_Row({k: Fraction(1)}, Fraction(-(fl + 1)), False)]  # x >= fl+1
        return bb(right, eqs, depth + 1)

    nodes = 0
    return bb(rows, eqs, 0)


# ---------------------------------------------------------------------------
# DPLL search

class _TheoryConflict(Exception):
    pass


class _TheoryUnknown(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class _State:
    bools: dict[str, bool]
    ctor_pos: dict[str, str]
    ctor_neg: dict[str, set]
    lin: dict[str, LinAtom]  # asserted atoms by serialization
    lin_neg: set  # serializations asserted false (complement added to lin)
    key_terms: dict[str, STerm]

    def clone(self) -> "_State":
        return _State(
            dict(self.bools),
            dict(self.ctor_pos),
            {k: set(v) for k, v in self.ctor_neg.items()},
            dict(self.lin),
            set(self.lin_neg),
            dict(self.key_terms),
        )


class _Search:
    def __init__(self, types: TypeContext, budget: _Steps, box: Optional[int],
                 relax_only: bool = False):
        self.types = types
        self.budget = budget
        self.box = box
        self.relax_only = relax_only

    # -- literal assertion ---------------------------------------------------

    def assert_lit(self, t: STerm, state: _State) -> bool:
        """Returns False on immediate conflict."""
        if isinstance(t, SBoolConst):
            return t.value
        if isinstance(t, LinAtom):
            key = serialize(t)
            neg = serialize(_lin_negate_atom(t))
            if key in state.lin_neg:
                return False
            if neg in state.lin:
                return False
            state.lin[key] = t
            state.lin_neg.add(neg)
            for _, kt in t.terms:
                state.key_terms.setdefault(key_of(kt), kt)
            return True
        if isinstance(t, SCtorTest):
            key = key_of(t.arg)
            state.key_terms.setdefault(key, t.arg)
            chosen = state.ctor_pos.get(key)
            if chosen is not None:
                return chosen == t.ctor
            if t.ctor in state.ctor_neg.get(key, set()):
                return False
            state.ctor_pos[key] = t.ctor
            return True
        if isinstance(t, SNot):
            inner = t.arg
            if isinstance(inner, SCtorTest):
                key = key_of(inner.arg)
                state.key_terms.setdefault(key, inner.arg)
                chosen = state.ctor_pos.get(key)
                if chosen is not None:
                    return chosen != inner.ctor
                neg = state.ctor_neg.setdefault(key, set())
                neg.add(inner.ctor)
                universe = self.types.ctors_of(term_ty(inner.arg))
                if universe is not None:
                    remaining = [c for c in universe if c not in neg]
                    if not remaining:
                        return False
                    if len(remaining) == 1:
                        state.ctor_pos[key] = remaining[0]
                return True
            if isinstance(inner, (SVar, SApp, SFieldSel)):
                key = key_of(inner)
                state.key_terms.setdefault(key, inner)
                if state.bools.get(key) is True:
                    return False
                state.bools[key] = False
                return True
            raise SolverInternalError(f"non-literal negation: {serialize(t)}")
        if isinstance(t, (SVar, SApp, SFieldSel)):
            key = key_of(t)
            state.key_terms.setdefault(key, t)
            if state.bools.get(key) is False:
                return False
            state.bools[key] = True
            return True
        raise SolverInternalError(f"cannot assert literal: {serialize(t)}")

    # -- formula simplification ------------------------------------------------

    def simplify(self, t: STerm, state: _State) -> STerm:
        if isinstance(t, SBoolConst):
            return t
        if isinstance(t, SAnd):
            return s_and(self.simplify(t.left, state), self.simplify(t.right, state))
        if isinstance(t, SOr):
            return s_or(self.simplify(t.left, state), self.simplify(t.right, state))
        if isinstance(t, LinAtom):
            key = serialize(t)
            if key in state.lin:
                return TRUE
            if key in state.lin_neg:
                return FALSE
            return t
        if isinstance(t, SCtorTest):
            key = key_of(t.arg)
            chosen = state.ctor_pos.get(key)
            if chosen is not None:
                return SBoolConst(chosen == t.ctor)
            if t.ctor in state.ctor_neg.get(key, set()):
                return FALSE
            return t
        if isinstance(t, SNot):
            inner = self.simplify(t.arg, state)
            return s_not(inner)
        if isinstance(t, (SVar, SApp, SFieldSel)):
            val = state.bools.get(key_of(t))
            if val is not None:
                return SBoolConst(val)
            return t
        return t

    def first_literal(self, t: STerm) -> STerm:
        if isinstance(t, (SAnd, SOr)):
            return self.first_literal(t.left)
        return t

    # -- main search -------------------------------------------------------------

    def solve(self, formulas: list[STerm], state: _State) -> Optional[_State]:
        self.budget.tick()
        pending: list[STerm] = []
        changed = True
        fs = formulas
        while changed:
            changed = False
            pending = []
            for f in fs:
                g = self.simplify(f, state)
                if isinstance(g, SBoolConst):
                    if not g.value:
                        return None
                    continue
                if self.is_literal(g):
                    if not self.assert_lit(g, state):
                        return None
                    changed = True
                    continue
                pending.append(g)
            fs = pending
        if not pending:
            try:
                return self.theory_check(state)
            except _TheoryConflict:
                return None
        lit = self.first_literal(pending[0])
        for phase in (lit, s_not(lit)):
            trial = state.clone()
            if not self.assert_lit(nnf(phase), trial):
                continue
            out = self.solve(pending, trial)
            if out is not None:
                return out
        return None

    @staticmethod
    def is_literal(t: STerm) -> bool:
        if isinstance(t, (LinAtom, SCtorTest, SVar, SApp, SFieldSel)):
            return True
        return isinstance(t, SNot) and _Search.is_literal(t.arg)

    # -- theory -----------------------------------------------------------------

    def theory_check(self, state: _State) -> _State:
        atoms = list(state.lin.values())
        neqs = [a for a in atoms if a.rel == "NEQ"]
        base = [a for a in atoms if a.rel != "NEQ"]
        if len(neqs) > 16:
            raise _TheoryUnknown("budget")
        return self._theory_branch(base, neqs, state)

    def _theory_branch(self, base: list[LinAtom], neqs: list[LinAtom], state: _State) -> _State:
        if neqs:
            a, rest = neqs[0], neqs[1:]
            flipped = tuple((-c, kt) for c, kt in a.terms)
            for choice in ( _normalize_lin("GT", {key_of(kt): (c, kt) for c, kt in a.terms}, a.const)
                            if a.domain == "rat" else
                            _relax_int_gt(a.terms, a.const),
                            _normalize_lin("GT", {key_of(kt): (c, kt) for c, kt in flipped}, -a.const)
                            if a.domain == "rat" else
                            _relax_int_gt(flipped, -a.const)):
                self.budget.tick()
                if isinstance(choice, SBoolConst):
                    if not choice.value:
                        continue
                    try:
                        return self._theory_branch(base, rest, state)
                    except _TheoryConflict:
                        continue
                try:
                    return self._theory_branch(base + [choice], rest, state)
                except _TheoryConflict:
                    continue
            raise _TheoryConflict()
        return self._theory_ground(base, state)

    def _theory_ground(self, atoms: list[LinAtom], state: _State) -> _State:
        int_rows, int_eqs = [], []
        rat_rows, rat_eqs = [], []
        int_keys: set[str] = set()
        for a in atoms:
            coeffs = {key_of(kt): c for c, kt in a.terms}
            if a.domain == "int" and not self.relax_only:
                int_keys.update(coeffs)
                if a.rel == "EQ":
                    int_eqs.append((coeffs, a.const))
                else:
                    int_rows.append(_Row(coeffs, a.const, a.rel == "GT"))
            else:
                if a.rel == "EQ":
                    rat_eqs.append((coeffs, a.const))
                else:
                    rat_rows.append(_Row(coeffs, a.const, a.rel == "GT"))
        if self.box is not None:
            b = Fraction(self.box)
            for k in sorted(int_keys):
                int_rows.append(_Row({k: Fraction(1)}, b, False))   # x >= -B
                int_rows.append(_Row({k: Fraction(-1)}, b, False))  # x <= B
        int_model: dict[str, Fraction] = {}
        if int_rows or int_eqs:
            out = _int_solve(int_rows, int_eqs, self.budget)
            if out is None:
                raise _TheoryConflict()
            int_model = out
        rat_model: dict[str, Fraction] = {}
        if rat_rows or rat_eqs:
            out = _fm_solve(rat_rows, rat_eqs, self.budget)
            if out is None:
                raise _TheoryConflict()
            rat_model = out
        state.int_model = int_model  # type: ignore[attr-defined]
        state.rat_model = rat_model  # type: ignore[attr-defined]
        return state


def _relax_int_gt(terms, const) -> STerm:
    coeffs = {key_of(kt): (c, kt) for c, kt in terms}
    return _normalize_lin("GT", coeffs, const)


# ---------------------------------------------------------------------------
# check_sat

def check_sat(
    cs: Union[ConstraintSet, Iterable[STerm]],
    types: TypeContext = EMPTY_TYPES,
    budget: int = DEFAULT_SOLVER_BUDGET,
    want_model: bool = True,
    minimize: bool = True,
) -> SatResult:
    """Decide a conjunction of boolean terms.

    want_model=False is a pure feasibility probe: integer systems are only
    checked on the rational relaxation, so "sat" may be optimistic, but
    "unsat" is always sound (the caller prunes on unsat only).
    """
    canon = cs if isinstance(cs, ConstraintSet) and cs.canonical else canonicalize(cs)
    steps = _Steps(budget)

    in_fragment: list[STerm] = []
    fragment_reason: Optional[str] = None
    for t in canon:
        r = out_of_fragment_reason(t)
        if r is None:
            in_fragment.append(t)
        elif fragment_reason is None or r == "nonlinear":
            fragment_reason = r

    def run(box: Optional[int], relax_only: bool = False) -> Optional[_State]:
        search = _Search(types, steps, box, relax_only=relax_only)
        state = _State({}, {}, {}, {}, set(), {})
        return search.solve(list(in_fragment), state)

    try:
        if not want_model:
            # feasibility probe on the rational relaxation: unsat is sound,
            # sat may be optimistic (callers prune on unsat only)
            try:
                out = run(None, relax_only=True)
            except (_BudgetExhausted, _TheoryUnknown):
                return SatResult("unknown", reason="budget", steps=budget - max(steps.left, 0))
            if out is None:
                return SatResult("unsat", steps=budget - steps.left)
            if fragment_reason is not None:
                return SatResult("unknown", reason=fragment_reason, steps=budget - steps.left)
            return SatResult("sat", model=None, steps=budget - steps.left)

        try:
            state = run(None)
        except _BudgetExhausted:
            # unbounded branch-and-bound blew its node cap: retry inside
            # growing symmetric boxes, which make the search finite
            state = None
            for box in (1, 4, 16, 64, 256, 1024, 65536):
                if steps.left <= 0:
                    raise
                try:
                    state = run(box)
                except _BudgetExhausted:
                    if steps.left <= 0:
                        raise
                    continue
                if state is not None:
                    break
            if state is None:
                return SatResult("unknown", reason="budget", steps=budget - max(steps.left, 0))
        if state is None:
            # the in-fragment subset alone is unsatisfiable, so the whole
            # conjunction is, regardless of any out-of-fragment atoms
            return SatResult("unsat", steps=budget - steps.left)
        if fragment_reason is not None:
            # a model of the in-fragment part says nothing about the rest
            return SatResult("unknown", reason=fragment_reason, steps=budget - steps.left)
        model = _assemble_model(state, types, canon)
        if minimize:
            model = _minimize_ints(in_fragment, types, steps, model, canon)
        _verify_model(canon, model)
        return SatResult("sat", model=model, steps=budget - steps.left)
    except _BudgetExhausted:
        return SatResult("unknown", reason="budget", steps=budget)
    except _TheoryUnknown as e:
        return SatResult("unknown", reason=e.reason, steps=budget - steps.left)


def _collect_keys(canon: ConstraintSet) -> dict[str, STerm]:
    keys: dict[str, STerm] = {}

    def walk(t: STerm) -> None:
        if isinstance(t, (SVar, SApp, SFieldSel)):
            keys.setdefault(key_of(t), t)
        if isinstance(t, LinAtom):
            for _, kt in t.terms:
                walk(kt)
            return
        if isinstance(t, SCtorTest):
            walk(t.arg)
            return
        for c in _children(t):
            walk(c)

    for t in canon:
        walk(t)
    return keys


def _assemble_model(state: _State, types: TypeContext, canon: ConstraintSet) -> Model:
    int_model = getattr(state, "int_model", {})
    rat_model = getattr(state, "rat_model", {})
    scalars: dict[str, Value] = {}
    ctor_choice: dict[str, str] = {}
    atoms: dict[str, Value] = {}
    keys = _collect_keys(canon)
    keys.update(state.key_terms)
    for key, kt in sorted(keys.items()):
        ty = term_ty(kt)
        if ty == S.BOOL:
            val = V.BoolV(state.bools.get(key, False))
        elif ty == S.RAT:
            val = V.RatV(rat_model.get(key, Fraction(0)))
        elif ty == S.INT or ty is None:
            q = int_model.get(key, Fraction(0))
            val = V.IntV(int(q))
        else:
            universe = types.ctors_of(ty)
            if universe is None:
                # record or tuple typed key: no constructor choice applies
                if isinstance(kt, (SApp, SFieldSel)):
                    atoms.setdefault(key, V.TypeUniverse(types.types).default(ty))
                continue
            # variant or list typed key: pick the chosen constructor, else
            # the first declared one that is not excluded
            chosen = state.ctor_pos.get(key)
            if chosen is None:
                excluded = state.ctor_neg.get(key, set())
                remaining = [c for c in universe if c not in excluded]
                chosen = remaining[0] if remaining else universe[0]
            ctor_choice[key] = chosen
            if isinstance(kt, (SApp, SFieldSel)):
                atoms.setdefault(key, _default_adt_value(types, ty, chosen))
            continue
        if isinstance(kt, (SApp, SFieldSel)):
            atoms[key] = val
        else:
            scalars[key] = val
    return Model(scalars, ctor_choice, atoms)


def _default_adt_value(types: TypeContext, ty: S.Ty, ctor: str) -> Value:
    universe = V.TypeUniverse(types.types)
    if isinstance(ty, S.ListTy):
        return V.ListV(()) if ctor == S.LIST_NIL else V.ListV((universe.default(ty.elem),))
    td = types.types.get(ty.name) if isinstance(ty, S.NamedTy) else None
    if td is not None and not td.is_record:
        for c in td.ctors:
            if c.name == ctor:
                return V.VariantV(ctor, tuple(universe.default(t) for t in c.arg_tys))
    return universe.default(ty)


def _max_abs_int(model: Model) -> int:
    worst = 0
    for v in list(model.scalars.values()) + list(model.atoms.values()):
        if isinstance(v, V.IntV):
            worst = max(worst, abs(v.value))
    return worst


def _minimize_ints(formulas: list[STerm], types: TypeContext, steps: _Steps,
                   model: Model, canon: ConstraintSet) -> Model:
    """Iterative bound tightening on the maximum absolute integer value."""
    best = model
    hi = _max_abs_int(model)
    lo = 0
    while lo < hi and steps.left > 0:
        mid = (lo + hi) // 2
        search = _Search(types, steps, mid)
        state = _State({}, {}, {}, {}, set(), {})
        try:
            out = search.solve(list(formulas), state)
        except (_BudgetExhausted, _TheoryUnknown):
            break
        if out is None:
            lo = mid + 1
        else:
            cand = _assemble_model(out, types, canon)
            best = cand
            hi = _max_abs_int(cand)
            if hi > mid:  # defensive; box should cap it
                hi = mid
    return best


def _verify_model(canon: ConstraintSet, model: Model) -> None:
    combined = dict(model.scalars)
    for t in canon:
        v = eval_sterm(t, combined, model.ctors, model.atoms)
        if not (isinstance(v, V.BoolV) and v.value):
            raise SolverInternalError(
                f"model fails to satisfy {pretty_term(t)}; this is a solver bug"
            )


def constraints_json(cs: ConstraintSet) -> list[str]:
    return [serialize(t) for t in cs]


def constraints_pretty(cs: ConstraintSet) -> list[str]:
    return [pretty_term(t) for t in cs]
