"""Lexer and recursive-descent parser for MML source text.

The parser is the normative definition of the concrete syntax.  Operator
precedence, low to high: ==> (right), ||, &&, comparisons (non-associative),
:: (right), + -, * div mod, unary - and not, application, projection.
if/match/let-in parse at the lowest level and extend maximally to the right;
parenthesize them when they appear as operands.  Match arms require a
leading '|'.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import syntax as S
from .syntax import Span

KEYWORDS = {
    "type", "let", "rec", "in", "if", "then", "else", "match", "with", "of",
    "opaque", "axiom", "import", "verify", "instance", "decompose",
    "assuming", "basis", "div", "mod", "not", "true", "false",
    "int", "rat", "bool", "list",
}

_PUNCT = [
    "==>", "::", "->", "<=", ">=", "<>", "&&", "||",
    "(", ")", "{", "}", "[", "]", ",", ";", ":", ".", "|",
    "=", "<", ">", "+", "-", "*", "_",
]


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT CAPIDENT INT RAT KW PUNCT EOF
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(src)

    def advance(k: int) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if src[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = src[i]
        if c in " \t\r\n":
            advance(1)
            continue
        if src.startswith("(*", i):
            depth, sl, sc = 0, line, col
            while i < n:
                if src.startswith("(*", i):
                    depth += 1
                    advance(2)
                elif src.startswith("*)", i):
                    depth -= 1
                    advance(2)
                    if depth == 0:
                        break
                else:
                    advance(1)
            if depth != 0:
                raise ParseError("unterminated comment", sl, sc)
            continue
        if c.isdigit():
            sl, sc = line, col
            j = i
            while j < n and src[j].isdigit():
                j += 1
            if j < n and src[j] == "." and j + 1 < n and src[j + 1].isdigit():
                k = j + 1
                while k < n and src[k].isdigit():
                    k += 1
                toks.append(Token("RAT", src[i:k], sl, sc))
                advance(k - i)
            else:
                toks.append(Token("INT", src[i:j], sl, sc))
                advance(j - i)
            continue
        if c.isalpha() or c == "_" and i + 1 < n and (src[i + 1].isalnum() or src[i + 1] == "_"):
            sl, sc = line, col
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            if word in KEYWORDS:
                toks.append(Token("KW", word, sl, sc))
            elif word[0].isupper():
                toks.append(Token("CAPIDENT", word, sl, sc))
            else:
                toks.append(Token("IDENT", word, sl, sc))
            advance(j - i)
            continue
        for p in _PUNCT:
            if src.startswith(p, i):
                toks.append(Token("PUNCT", p, line, col))
                advance(len(p))
                break
        else:
            raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(Token("EOF", "", line, col))
    return toks


class Parser:
    def __init__(self, src: str, source: str = "<string>"):
        self.toks = tokenize(src)
        self.pos = 0
        self.source = source

    # -- token helpers ------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def at_punct(self, text: str) -> bool:
        return self.at("PUNCT", text)

    def at_kw(self, text: str) -> bool:
        return self.at("KW", text)

    def eat(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.peek()
        if t.kind != kind or (text is not None and t.text != text):
            want = text if text is not None else kind
            got = t.text if t.text else t.kind
            raise ParseError(f"expected {want!r}, found {got!r}", t.line, t.col)
        return self.next()

    def err(self, message: str) -> ParseError:
        t = self.peek()
        return ParseError(message, t.line, t.col)

    def span_from(self, start: Token) -> Span:
        prev = self.toks[max(self.pos - 1, 0)]
        return Span(start.line, start.col, prev.line, prev.col + len(prev.text))

    # -- program ------------------------------------------------------------

    def parse_program(self) -> S.Program:
        decls: list[S.Decl] = []
        while not self.at("EOF"):
            decls.append(self.parse_decl())
        return S.Program(decls=tuple(decls), source=self.source)

    def parse_decl(self) -> S.Decl:
        t = self.peek()
        if t.kind == "KW":
            if t.text == "type":
                return self.parse_typedef()
            if t.text == "let":
                return self.parse_fundef()
            if t.text == "opaque":
                return self.parse_opaque()
            if t.text == "axiom":
                return self.parse_axiom()
            if t.text == "import":
                return self.parse_import()
            if t.text in ("verify", "instance", "decompose"):
                return self.parse_directive()
        raise self.err("expected a declaration (type, let, opaque, axiom, import, or a directive)")

    def parse_typedef(self) -> S.TypeDef:
        start = self.eat("KW", "type")
        name = self.eat("IDENT").text
        self.eat("PUNCT", "=")
        if self.at_punct("{"):
            self.next()
            fields: list[tuple[str, S.Ty]] = []
            while True:
                fname = self.eat("IDENT").text
                self.eat("PUNCT", ":")
                fty = self.parse_ty()
                fields.append((fname, fty))
                if self.at_punct(";"):
                    self.next()
                    if self.at_punct("}"):
                        break
                    continue
                break
            self.eat("PUNCT", "}")
            return S.TypeDef(name, None, tuple(fields), span=self.span_from(start))
        ctors: list[S.CtorDef] = []
        if self.at_punct("|"):
            self.next()
        while True:
            cstart = self.peek()
            cname = self.eat("CAPIDENT").text
            args: list[S.Ty] = []
            if self.at_kw("of"):
                self.next()
                args.append(self.parse_ty())
                while self.at_punct("*"):
                    self.next()
                    args.append(self.parse_ty())
            ctors.append(S.CtorDef(cname, tuple(args), span=self.span_from(cstart)))
            if self.at_punct("|"):
                self.next()
                continue
            break
        return S.TypeDef(name, tuple(ctors), None, span=self.span_from(start))

    def parse_param(self) -> S.Param:
        start = self.eat("PUNCT", "(")
        name = self.eat("IDENT").text
        self.eat("PUNCT", ":")
        ty = self.parse_ty()
        self.eat("PUNCT", ")")
        return S.Param(name, ty, span=self.span_from(start))

    def parse_fundef(self) -> S.FunDef:
        start = self.eat("KW", "let")
        is_rec = False
        if self.at_kw("rec"):
            self.next()
            is_rec = True
        name = self.eat("IDENT").text
        params: list[S.Param] = []
        while self.at_punct("("):
            params.append(self.parse_param())
        if not params:
            raise self.err("function definitions need at least one parameter")
        ret_ty = None
        if self.at_punct(":"):
            self.next()
            ret_ty = self.parse_ty()
        self.eat("PUNCT", "=")
        body = self.parse_expr()
        return S.FunDef(name, is_rec, tuple(params), ret_ty, body, span=self.span_from(start))

    def parse_opaque(self) -> S.OpaqueDecl:
        start = self.eat("KW", "opaque")
        name = self.eat("IDENT").text
        self.eat("PUNCT", ":")
        tys = [self.parse_ty()]
        while self.at_punct("->"):
            self.next()
            tys.append(self.parse_ty())
        if len(tys) < 2:
            raise self.err("opaque signatures need at least one '->'")
        return S.OpaqueDecl(name, tuple(tys[:-1]), tys[-1], span=self.span_from(start))

    def parse_axiom(self) -> S.AxiomDecl:
        start = self.eat("KW", "axiom")
        name = self.eat("IDENT").text
        params: list[S.Param] = []
        while self.at_punct("("):
            params.append(self.parse_param())
        self.eat("PUNCT", "=")
        body = self.parse_expr()
        return S.AxiomDecl(name, tuple(params), body, span=self.span_from(start))

    def parse_import(self) -> S.ImportDecl:
        start = self.eat("KW", "import")
        parts = [self.eat("IDENT").text]
        while self.at_punct("."):
            self.next()
            parts.append(self.eat("IDENT").text)
        self.eat("PUNCT", "(")
        names = [self.eat("IDENT").text]
        while self.at_punct(","):
            self.next()
            names.append(self.eat("IDENT").text)
        self.eat("PUNCT", ")")
        return S.ImportDecl(".".join(parts), tuple(names), span=self.span_from(start))

    def parse_directive(self) -> S.Directive:
        start = self.next()
        kind = start.text
        target = self.eat("IDENT").text
        assuming = None
        basis: list[str] = []
        if kind == "decompose":
            if self.at_kw("assuming"):
                self.next()
                assuming = self.eat("IDENT").text
            if self.at_kw("basis"):
                self.next()
                basis.append(self.eat("IDENT").text)
                while self.at_punct(","):
                    self.next()
                    basis.append(self.eat("IDENT").text)
        return S.Directive(kind, target, assuming, tuple(basis), span=self.span_from(start))

    # -- types ----------------------------------------------------------------

    def parse_ty(self) -> S.Ty:
        t = self.peek()
        if t.kind == "KW" and t.text == "int":
            self.next()
            base: S.Ty = S.INT
        elif t.kind == "KW" and t.text == "rat":
            self.next()
            base = S.RAT
        elif t.kind == "KW" and t.text == "bool":
            self.next()
            base = S.BOOL
        elif t.kind == "IDENT":
            self.next()
            base = S.NamedTy(t.text)
        elif t.kind == "PUNCT" and t.text == "(":
            self.next()
            items = [self.parse_ty()]
            while self.at_punct("*"):
                self.next()
                items.append(self.parse_ty())
            self.eat("PUNCT", ")")
            base = items[0] if len(items) == 1 else S.TupleTy(tuple(items))
        else:
            raise self.err("expected a type")
        while self.at_kw("list"):
            self.next()
            base = S.ListTy(base)
        return base

    # -- expressions ----------------------------------------------------------

    def parse_expr(self) -> S.Expr:
        t = self.peek()
        if t.kind == "KW" and t.text == "if":
            self.next()
            cond = self.parse_expr()
            self.eat("KW", "then")
            then = self.parse_expr()
            self.eat("KW", "else")
            orelse = self.parse_expr()
            return S.If(cond, then, orelse, span=self.span_from(t))
        if t.kind == "KW" and t.text == "match":
            return self.parse_match()
        if t.kind == "KW" and t.text == "let":
            self.next()
            name = self.eat("IDENT").text
            self.eat("PUNCT", "=")
            bound = self.parse_expr()
            self.eat("KW", "in")
            body = self.parse_expr()
            return S.Let(name, bound, body, span=self.span_from(t))
        return self.parse_imp()

    def parse_match(self) -> S.Match:
        start = self.eat("KW", "match")
        scrut = self.parse_expr()
        self.eat("KW", "with")
        arms: list[S.MatchArm] = []
        while self.at_punct("|"):
            astart = self.next()
            arms.append(self.parse_arm(astart))
        if not arms:
            raise self.err("match needs at least one '|' arm")
        return S.Match(scrut, tuple(arms), span=self.span_from(start))

    def parse_arm(self, astart: Token) -> S.MatchArm:
        binders: tuple[str, ...] = ()
        if self.at_punct("["):
            self.next()
            self.eat("PUNCT", "]")
            ctor = S.LIST_NIL
        elif self.at("IDENT"):
            # cons pattern: hd :: tl
            hd = self.next().text
            self.eat("PUNCT", "::")
            tl = self.eat("IDENT").text
            ctor = S.LIST_CONS
            binders = (hd, tl)
        else:
            ctor = self.eat("CAPIDENT").text
            if self.at_punct("("):
                self.next()
                names = [self.eat("IDENT").text]
                while self.at_punct(","):
                    self.next()
                    names.append(self.eat("IDENT").text)
                self.eat("PUNCT", ")")
                binders = tuple(names)
            elif self.at("IDENT"):
                binders = (self.next().text,)
        self.eat("PUNCT", "->")
        body = self.parse_expr()
        return S.MatchArm(ctor, binders, body, span=self.span_from(astart))

    def parse_imp(self) -> S.Expr:
        start = self.peek()
        left = self.parse_or()
        if self.at_punct("==>"):
            self.next()
            right = self.parse_imp()
            return S.Binary("==>", left, right, span=self.span_from(start))
        return left

    def parse_or(self) -> S.Expr:
        start = self.peek()
        e = self.parse_and()
        while self.at_punct("||"):
            self.next()
            e = S.Binary("||", e, self.parse_and(), span=self.span_from(start))
        return e

    def parse_and(self) -> S.Expr:
        start = self.peek()
        e = self.parse_cmp()
        while self.at_punct("&&"):
            self.next()
            e = S.Binary("&&", e, self.parse_cmp(), span=self.span_from(start))
        return e

    def parse_cmp(self) -> S.Expr:
        start = self.peek()
        e = self.parse_cons()
        for op in ("=", "<>", "<=", ">=", "<", ">"):
            if self.at_punct(op):
                self.next()
                return S.Binary(op, e, self.parse_cons(), span=self.span_from(start))
        return e

    def parse_cons(self) -> S.Expr:
        start = self.peek()
        e = self.parse_add()
        if self.at_punct("::"):
            self.next()
            tail = self.parse_cons()
            return S.VariantCtor(S.LIST_CONS, (e, tail), span=self.span_from(start))
        return e

    def parse_add(self) -> S.Expr:
        start = self.peek()
        e = self.parse_mul()
        while self.at_punct("+") or self.at_punct("-"):
            op = self.next().text
            e = S.Binary(op, e, self.parse_mul(), span=self.span_from(start))
        return e

    def parse_mul(self) -> S.Expr:
        start = self.peek()
        e = self.parse_unary()
        while self.at_punct("*") or self.at_kw("div") or self.at_kw("mod"):
            op = self.next().text
            e = S.Binary(op, e, self.parse_unary(), span=self.span_from(start))
        return e

    def parse_unary(self) -> S.Expr:
        t = self.peek()
        if t.kind == "PUNCT" and t.text == "-":
            self.next()
            return S.Unary("-", self.parse_unary(), span=self.span_from(t))
        if t.kind == "KW" and t.text == "not":
            self.next()
            return S.Unary("not", self.parse_unary(), span=self.span_from(t))
        return self.parse_app()

    def parse_app(self) -> S.Expr:
        t = self.peek()
        if t.kind == "CAPIDENT":
            self.next()
            args: tuple[S.Expr, ...] = ()
            if self.at_punct("("):
                # parenthesized payload: C (e) or C (e1, e2, ...)
                self.next()
                items = [self.parse_expr()]
                while self.at_punct(","):
                    self.next()
                    items.append(self.parse_expr())
                self.eat("PUNCT", ")")
                args = tuple(items)
            elif self._at_atom_start():
                args = (self.parse_atom(),)
            return S.VariantCtor(t.text, args, span=self.span_from(t))
        if t.kind == "IDENT" and self._at_atom_start(1):
            fn = self.next().text
            args = []
            while self._at_atom_start():
                args.append(self.parse_atom())
            return S.Call(fn, tuple(args), span=self.span_from(t))
        return self.parse_atom()

    def _at_atom_start(self, ahead: int = 0) -> bool:
        t = self.peek(ahead)
        if t.kind in ("INT", "RAT", "IDENT", "CAPIDENT"):
            return True
        if t.kind == "KW" and t.text in ("true", "false"):
            return True
        if t.kind == "PUNCT" and t.text in ("(", "[", "{"):
            return True
        return False

    def parse_atom(self) -> S.Expr:
        t = self.peek()
        if t.kind == "INT":
            self.next()
            e: S.Expr = S.IntLit(int(t.text), span=self.span_from(t))
        elif t.kind == "RAT":
            self.next()
            whole, frac = t.text.split(".")
            den = 10 ** len(frac)
            num = int(whole) * den + int(frac)
            e = S.RatLit(num, den, span=self.span_from(t))
        elif t.kind == "KW" and t.text in ("true", "false"):
            self.next()
            e = S.BoolLit(t.text == "true", span=self.span_from(t))
        elif t.kind == "IDENT":
            self.next()
            e = S.Var(t.text, span=self.span_from(t))
        elif t.kind == "CAPIDENT":
            self.next()
            e = S.VariantCtor(t.text, (), span=self.span_from(t))
        elif t.kind == "PUNCT" and t.text == "(":
            self.next()
            items = [self.parse_expr()]
            while self.at_punct(","):
                self.next()
                items.append(self.parse_expr())
            self.eat("PUNCT", ")")
            e = items[0] if len(items) == 1 else S.TupleCtor(tuple(items), span=self.span_from(t))
        elif t.kind == "PUNCT" and t.text == "[":
            self.next()
            items = []
            if not self.at_punct("]"):
                items.append(self.parse_expr())
                while self.at_punct(";"):
                    self.next()
                    items.append(self.parse_expr())
            self.eat("PUNCT", "]")
            e = S.VariantCtor(S.LIST_NIL, (), span=self.span_from(t))
            for item in reversed(items):
                e = S.VariantCtor(S.LIST_CONS, (item, e), span=self.span_from(t))
        elif t.kind == "PUNCT" and t.text == "{":
            self.next()
            # `{ f = e; ... }` builds a record; `{ e with f = e; ... }` copies
            # one and overrides the listed fields
            literal = self.peek().kind == "IDENT" and self.peek(1).kind == "PUNCT" \
                and self.peek(1).text == "="
            base = None
            if not literal:
                base = self.parse_expr()
                self.eat("KW", "with")
            fields = []
            while True:
                fname = self.eat("IDENT").text
                self.eat("PUNCT", "=")
                fields.append((fname, self.parse_expr()))
                if self.at_punct(";"):
                    self.next()
                    if self.at_punct("}"):
                        break
                    continue
                break
            self.eat("PUNCT", "}")
            if base is None:
                e = S.RecordCtor(tuple(fields), span=self.span_from(t))
            else:
                e = S.RecordUpdate(base, tuple(fields), span=self.span_from(t))
        else:
            raise self.err("expected an expression")
        # postfix projection binds tightest: e.field, e.0, chained
        while self.at_punct("."):
            nxt = self.peek(1)
            if nxt.kind == "IDENT":
                self.next()
                fld = self.next().text
                e = S.FieldProj(e, fld, span=self.span_from(t))
            elif nxt.kind == "INT":
                self.next()
                idx = int(self.next().text)
                e = S.FieldProj(e, idx, span=self.span_from(t))
            else:
                break
        return e


def parse_program(src: str, source: str = "<string>") -> S.Program:
    return Parser(src, source).parse_program()


def parse_expr(src: str) -> S.Expr:
    p = Parser(src)
    e = p.parse_expr()
    p.eat("EOF")
    return e
