"""Abstract syntax for the MML modeling language.

Every expression node carries a source span (excluded from structural
equality) and a type slot filled in during admission.  Programs are plain
declaration lists; the symbol table is attached by admission and maps each
name to its defining declaration, including declarations bound through
imports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


DUMMY_SPAN = Span(0, 0, 0, 0)


# ---------------------------------------------------------------------------
# Types

@dataclass(frozen=True)
class IntTy:
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class RatTy:
    def __str__(self) -> str:
        return "rat"


@dataclass(frozen=True)
class BoolTy:
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class NamedTy:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ListTy:
    elem: "Ty"

    def __str__(self) -> str:
        return f"{_ty_atom_str(self.elem)} list"


@dataclass(frozen=True)
class TupleTy:
    items: tuple["Ty", ...]

    def __str__(self) -> str:
        return "(" + " * ".join(_ty_atom_str(t) for t in self.items) + ")"


Ty = Union[IntTy, RatTy, BoolTy, NamedTy, ListTy, TupleTy]

INT = IntTy()
RAT = RatTy()
BOOL = BoolTy()


def _ty_atom_str(t: Ty) -> str:
    # tuple types print their own parens; nested lists read naturally
    return str(t)


# ---------------------------------------------------------------------------
# Expressions

def _meta(default=None):
    return field(default=default, compare=False, repr=False)


@dataclass
class IntLit:
    value: int
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class RatLit:
    num: int
    den: int
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class BoolLit:
    value: bool
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class Var:
    name: str
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class Unary:
    op: str  # "-" | "not"
    arg: "Expr"
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class Binary:
    op: str  # + - * div mod = <> < <= > >= && || ==>
    left: "Expr"
    right: "Expr"
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class If:
    cond: "Expr"
    then: "Expr"
    orelse: "Expr"
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class MatchArm:
    ctor: str  # constructor name; lists use "[]" and "::"
    binders: tuple[str, ...]
    body: "Expr"
    span: Span = _meta(DUMMY_SPAN)


@dataclass
class Match:
    scrutinee: "Expr"
    arms: tuple[MatchArm, ...]
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class Let:
    name: str
    bound: "Expr"
    body: "Expr"
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class Call:
    fn: str
    args: tuple["Expr", ...]
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class RecordCtor:
    fields: tuple[tuple[str, "Expr"], ...]  # written order
    type_name: Optional[str] = _meta()  # resolved at admission
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class RecordUpdate:
    base: "Expr"
    fields: tuple[tuple[str, "Expr"], ...]  # overridden fields, written order
    type_name: Optional[str] = _meta()  # resolved at admission
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class FieldProj:
    arg: "Expr"
    field: Union[str, int]  # record field name or tuple slot index
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class VariantCtor:
    ctor: str  # "[]" and "::" are the reserved list constructors
    args: tuple["Expr", ...]
    type_name: Optional[str] = _meta()
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


@dataclass
class TupleCtor:
    items: tuple["Expr", ...]
    span: Span = _meta(DUMMY_SPAN)
    ty: Optional[Ty] = _meta()


Expr = Union[
    IntLit, RatLit, BoolLit, Var, Unary, Binary, If, Match, Let,
    Call, RecordCtor, RecordUpdate, FieldProj, VariantCtor, TupleCtor,
]


# ---------------------------------------------------------------------------
# Declarations

@dataclass
class CtorDef:
    name: str
    arg_tys: tuple[Ty, ...]
    span: Span = _meta(DUMMY_SPAN)


@dataclass
class TypeDef:
    name: str
    ctors: Optional[tuple[CtorDef, ...]]  # variant form
    record_fields: Optional[tuple[tuple[str, Ty], ...]]  # record form
    span: Span = _meta(DUMMY_SPAN)

    @property
    def is_record(self) -> bool:
        return self.record_fields is not None


@dataclass
class Param:
    name: str
    ty: Ty
    span: Span = _meta(DUMMY_SPAN)


@dataclass
class FunDef:
    name: str
    is_rec: bool
    params: tuple[Param, ...]
    ret_ty: Optional[Ty]  # declared; admission fills inferred type when absent
    body: Expr
    span: Span = _meta(DUMMY_SPAN)
    inferred_ret: Optional[Ty] = _meta()

    @property
    def return_ty(self) -> Optional[Ty]:
        return self.ret_ty if self.ret_ty is not None else self.inferred_ret


@dataclass
class OpaqueDecl:
    name: str
    param_tys: tuple[Ty, ...]
    ret_ty: Ty
    span: Span = _meta(DUMMY_SPAN)


@dataclass
class AxiomDecl:
    name: str
    params: tuple[Param, ...]
    body: Expr
    span: Span = _meta(DUMMY_SPAN)


@dataclass
class ImportDecl:
    module: str  # dotted path, resolved against the project root
    names: tuple[str, ...]
    span: Span = _meta(DUMMY_SPAN)


@dataclass
class Directive:
    kind: str  # "verify" | "instance" | "decompose"
    target: str
    assuming: Optional[str] = None
    basis: tuple[str, ...] = ()
    span: Span = _meta(DUMMY_SPAN)


Decl = Union[TypeDef, FunDef, OpaqueDecl, AxiomDecl, ImportDecl, Directive]


@dataclass
class Program:
    decls: tuple[Decl, ...]
    source: str = _meta("<string>")
    # filled by admission: name -> defining Decl (imports bind to the
    # exporting program's declaration objects)
    symbols: Optional[dict] = _meta()
    types: Optional[dict] = _meta()  # type name -> TypeDef
    ctor_index: Optional[dict] = _meta()  # ctor name -> TypeDef

    def directives(self) -> tuple[Directive, ...]:
        return tuple(d for d in self.decls if isinstance(d, Directive))

    def imports(self) -> tuple[ImportDecl, ...]:
        return tuple(d for d in self.decls if isinstance(d, ImportDecl))


LIST_NIL = "[]"
LIST_CONS = "::"


def is_base_ty(t: Ty) -> bool:
    return isinstance(t, (IntTy, RatTy, BoolTy))
