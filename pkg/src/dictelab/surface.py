"""Concrete syntax: parsing and deterministic pretty-printing.

Two file formats:

* ``.dict`` source programs: ``class``/``tycon``/``instance``/``prim``/
  ``sig``/``def``/``check`` declarations.
* ``.sysf`` elaborated programs: ``prim`` (opaque binding) and ``def``
  (binding with body) declarations over System F terms.

Line comments start with ``--``.  Input may use LF or CRLF; output is LF.
Equality constraints (``a ~ b``) are not part of the language and are
rejected by the lexer.
"""

from __future__ import annotations

from dataclasses import dataclass

from .syntax import (
    App, Arrow, AxiomScheme, Constraint, DictTy, EAnnot, EApp, EDictApp, ELam,
    EVar, Forall, Lam, QualType, Scheme, SrcExpr, Term, TopAxioms, TyApp,
    TyCon, TyLam, TyVar, Type, Var, ftv,
)


class ParseError(Exception):
    """Syntax or well-formedness error with source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0) -> None:
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.message = message
        self.line = line
        self.col = col


class DuplicateNameError(ParseError):
    pass


class UnknownClassError(ParseError):
    pass


# ---------------------------------------------------------------------------
# Lexer

_KEYWORDS = {"class", "tycon", "instance", "prim", "sig", "def", "check",
             "forall", "as"}
_PUNCT = ["[|", "|]", "->", "=>", "/\\", "(", ")", "[", "]", "\\", ".", ";",
          ":", ",", "="]


@dataclass(frozen=True)
class Token:
    kind: str   # lid | uid | evid | num | kw | punct | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t":
            i += 1
            col += 1
            continue
        if text.startswith("--", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c == "~":
            raise ParseError("equality constraints are not supported", line, col)
        if c == "$":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] in "_'$"):
                j += 1
            if j == i + 1:
                raise ParseError("expected identifier after '$'", line, col)
            toks.append(Token("evid", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_'"):
                j += 1
            word = text[i:j]
            if word in _KEYWORDS:
                kind = "kw"
            elif word[0].isupper():
                kind = "uid"
            else:
                kind = "lid"
            toks.append(Token(kind, word, line, col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("num", text[i:j], line, col))
            col += j - i
            i = j
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                toks.append(Token("punct", p, line, col))
                i += len(p)
                col += len(p)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(Token("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# Program container

@dataclass(frozen=True)
class Program:
    classes: tuple[str, ...] = ()
    tycons: tuple[tuple[str, int], ...] = ()
    axioms: TopAxioms = TopAxioms()
    prims: tuple[tuple[str, Scheme], ...] = ()
    defs: tuple[tuple[str, Scheme | None, SrcExpr], ...] = ()
    checks: tuple[tuple[str, SrcExpr], ...] = ()

    def tycon_arity(self, name: str) -> int | None:
        for n, a in self.tycons:
            if n == name:
                return a
        return None


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, toks: list[Token]) -> None:
        self.toks = toks
        self.pos = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def expect(self, kind: str, text: str | None = None) -> Token:
        t = self.peek()
        if not self.at(kind, text):
            want = text or kind
            raise ParseError(f"expected {want!r}, found {t.text or t.kind!r}",
                             t.line, t.col)
        return self.next()

    def fail(self, message: str) -> ParseError:
        t = self.peek()
        return ParseError(message, t.line, t.col)


class _ProgramParser(_Parser):
    """Parser for .dict programs; validates names and arities on the fly."""

    def __init__(self, toks: list[Token]) -> None:
        super().__init__(toks)
        self.classes: list[str] = []
        self.tycons: list[tuple[str, int]] = []
        self.axioms: list[AxiomScheme] = []
        self.prims: list[tuple[str, Scheme]] = []
        self.defs: list[tuple[str, Scheme | None, SrcExpr]] = []
        self.checks: list[tuple[str, SrcExpr]] = []
        self.sigs: dict[str, Scheme] = {}
        self.term_names: set[str] = set()
        self.check_names: set[str] = set()

    # -- declarations

    def parse_program(self) -> Program:
        while not self.at("eof"):
            self.decl()
        for name in self.sigs:
            raise ParseError(f"signature for {name!r} has no definition")
        return Program(tuple(self.classes), tuple(self.tycons),
                       TopAxioms(tuple(self.axioms)), tuple(self.prims),
                       tuple(self.defs), tuple(self.checks))

    def decl(self) -> None:
        t = self.peek()
        if t.kind != "kw":
            raise self.fail(f"expected declaration, found {t.text or t.kind!r}")
        if t.text == "class":
            self.next()
            name = self.expect("uid")
            if name.text in self.classes:
                raise DuplicateNameError(f"duplicate class {name.text!r}",
                                         name.line, name.col)
            self.classes.append(name.text)
        elif t.text == "tycon":
            self.next()
            name = self.expect("uid")
            arity = self.expect("num")
            if any(n == name.text for n, _ in self.tycons):
                raise DuplicateNameError(f"duplicate tycon {name.text!r}",
                                         name.line, name.col)
            self.tycons.append((name.text, int(arity.text)))
        elif t.text == "instance":
            self.next()
            ev = self.expect("evid")
            if any(ax.name == ev.text for ax in self.axioms):
                raise DuplicateNameError(f"duplicate instance name {ev.text!r}",
                                         ev.line, ev.col)
            self.expect("punct", ":")
            ax = self.axiom(ev)
            self.axioms.append(ax)
        elif t.text == "prim":
            self.next()
            name = self.expect("lid")
            self._fresh_term_name(name)
            self.expect("punct", ":")
            sch = self.closed_scheme(name)
            self.prims.append((name.text, sch))
        elif t.text == "sig":
            self.next()
            name = self.expect("lid")
            if name.text in self.sigs or name.text in self.term_names:
                raise DuplicateNameError(f"duplicate signature {name.text!r}",
                                         name.line, name.col)
            self.expect("punct", ":")
            self.sigs[name.text] = self.closed_scheme(name)
        elif t.text == "def":
            self.next()
            name = self.expect("lid")
            self._fresh_term_name(name)
            self.expect("punct", "=")
            body = self.expr()
            self.defs.append((name.text, self.sigs.pop(name.text, None), body))
        elif t.text == "check":
            self.next()
            name = self.expect("lid")
            if name.text in self.check_names:
                raise DuplicateNameError(f"duplicate check {name.text!r}",
                                         name.line, name.col)
            self.check_names.add(name.text)
            self.expect("punct", "=")
            self.checks.append((name.text, self.expr()))
        else:
            raise self.fail(f"unexpected keyword {t.text!r}")
        self.expect("punct", ";")

    def _fresh_term_name(self, tok: Token) -> None:
        if tok.text in self.term_names:
            raise DuplicateNameError(f"duplicate binding {tok.text!r}",
                                     tok.line, tok.col)
        self.term_names.add(tok.text)

    def axiom(self, ev: Token) -> AxiomScheme:
        quantified = self.forall_prefix()
        context, head_like = self.qual_body(constraint_body=True)
        assert isinstance(head_like, Constraint)
        free = ftv(tuple(context)) | ftv(head_like)
        extra = free - set(quantified)
        if extra:
            raise ParseError(
                f"instance {ev.text!r} mentions unquantified type "
                f"variable(s) {', '.join(sorted(extra))}", ev.line, ev.col)
        undetermined = set(quantified) - ftv(head_like)
        if undetermined:
            raise ParseError(
                f"instance {ev.text!r} quantifies variable(s) "
                f"{', '.join(sorted(undetermined))} not mentioned in its head",
                ev.line, ev.col)
        return AxiomScheme(ev.text, tuple(quantified), tuple(context), head_like)

    def closed_scheme(self, name: Token) -> Scheme:
        sch = self.scheme()
        free = ftv(sch)
        if free:
            raise ParseError(
                f"signature of {name.text!r} has free type variable(s) "
                f"{', '.join(sorted(free))} (missing forall?)",
                name.line, name.col)
        return sch

    # -- types

    def forall_prefix(self) -> list[str]:
        quantified: list[str] = []
        if self.at("kw", "forall"):
            self.next()
            while self.at("lid"):
                v = self.next()
                if v.text in quantified:
                    raise DuplicateNameError(
                        f"duplicate quantifier {v.text!r}", v.line, v.col)
                quantified.append(v.text)
            if not quantified:
                raise self.fail("expected type variable after 'forall'")
            self.expect("punct", ".")
        return quantified

    def scheme(self) -> Scheme:
        quantified = self.forall_prefix()
        context, body = self.qual_body(constraint_body=False)
        return Scheme(tuple(quantified), QualType(tuple(context), body))

    def qual_body(self, constraint_body: bool):
        """Parse ``[context =>]* body``, flattening nested contexts."""
        context: list[Constraint] = []
        while True:
            snap = self.pos
            try:
                cs = self.context()
                self.expect("punct", "=>")
            except ParseError:
                self.pos = snap
                break
            context.extend(cs)
        if constraint_body:
            return context, self.constraint()
        return context, self.type_()

    def context(self) -> list[Constraint]:
        if self.at("punct", "("):
            self.next()
            cs = [self.constraint()]
            while self.at("punct", ","):
                self.next()
                cs.append(self.constraint())
            self.expect("punct", ")")
            return cs
        return [self.constraint()]

    def constraint(self) -> Constraint:
        cls = self.expect("uid")
        if cls.text not in self.classes:
            raise UnknownClassError(f"unknown class {cls.text!r}",
                                    cls.line, cls.col)
        return Constraint(cls.text, self.atom_type())

    def type_(self) -> Type:
        left = self.btype()
        if self.at("punct", "->"):
            self.next()
            return Arrow(left, self.type_())
        return left

    def btype(self) -> Type:
        if self.at("uid", "Dict"):
            self.next()
            cls = self.expect("uid")
            if cls.text not in self.classes:
                raise UnknownClassError(f"unknown class {cls.text!r}",
                                        cls.line, cls.col)
            return DictTy(cls.text, self.atom_type())
        if self.at("uid"):
            con = self.next()
            arity = self._tycon_arity(con)
            args = tuple(self.atom_type() for _ in range(arity))
            return TyCon(con.text, args)
        return self.atom_type()

    def atom_type(self) -> Type:
        t = self.peek()
        if t.kind == "lid":
            self.next()
            return TyVar(t.text)
        if t.kind == "uid":
            if t.text == "Dict":
                raise self.fail("'Dict TC t' must be parenthesised here")
            self.next()
            if self._tycon_arity(t) != 0:
                raise ParseError(
                    f"tycon {t.text!r} expects arguments; parenthesise the "
                    f"application", t.line, t.col)
            return TyCon(t.text, ())
        if t.kind == "punct" and t.text == "(":
            self.next()
            inner = self.type_()
            self.expect("punct", ")")
            return inner
        raise self.fail(f"expected a type, found {t.text or t.kind!r}")

    def _tycon_arity(self, tok: Token) -> int:
        for n, a in self.tycons:
            if n == tok.text:
                return a
        raise ParseError(f"unknown tycon {tok.text!r}", tok.line, tok.col)

    # -- expressions

    def expr(self) -> SrcExpr:
        if self.at("punct", "\\"):
            self.next()
            v = self.expect("lid")
            self.expect("punct", ".")
            return ELam(v.text, self.expr())
        return self.fexpr()

    def fexpr(self) -> SrcExpr:
        e = self.aexpr()
        while True:
            if self.at("punct", "[|"):
                tok = self.next()
                if isinstance(e, EDictApp):
                    raise ParseError(
                        "dictionary applications cannot be chained",
                        tok.line, tok.col)
                d = self.expr()
                self.expect("kw", "as")
                at = self.constraint()
                self.expect("punct", "|]")
                e = EDictApp(e, d, at)
            elif self.peek().kind == "lid" or self.at("punct", "("):
                e = EApp(e, self.aexpr())
            else:
                return e

    def aexpr(self) -> SrcExpr:
        t = self.peek()
        if t.kind == "lid":
            self.next()
            return EVar(t.text)
        if self.at("punct", "("):
            self.next()
            inner = self.expr()
            if self.at("punct", ":"):
                self.next()
                sch = self.scheme()
                self.expect("punct", ")")
                return EAnnot(inner, sch)
            self.expect("punct", ")")
            return inner
        raise self.fail(f"expected an expression, found {t.text or t.kind!r}")


def parse_program(text: str) -> Program:
    return _ProgramParser(tokenize(text)).parse_program()


# ---------------------------------------------------------------------------
# System F (.sysf) parsing

@dataclass(frozen=True)
class SysfFile:
    prims: tuple[tuple[str, Type], ...] = ()
    defs: tuple[tuple[str, Type, Term], ...] = ()


class _SysfParser(_Parser):
    def file(self) -> SysfFile:
        prims: list[tuple[str, Type]] = []
        defs: list[tuple[str, Type, Term]] = []
        names: set[str] = set()
        while not self.at("eof"):
            t = self.peek()
            if self.at("kw", "prim"):
                self.next()
                name = self._binder_name()
                if name.text in names:
                    raise DuplicateNameError(
                        f"duplicate binding {name.text!r}", name.line, name.col)
                names.add(name.text)
                self.expect("punct", ":")
                prims.append((name.text, self.type_()))
            elif self.at("kw", "def"):
                self.next()
                name = self._binder_name()
                if name.text in names:
                    raise DuplicateNameError(
                        f"duplicate binding {name.text!r}", name.line, name.col)
                names.add(name.text)
                self.expect("punct", ":")
                ty = self.type_()
                self.expect("punct", "=")
                defs.append((name.text, ty, self.term()))
            else:
                raise self.fail(
                    f"expected 'prim' or 'def', found {t.text or t.kind!r}")
            self.expect("punct", ";")
        return SysfFile(tuple(prims), tuple(defs))

    def _binder_name(self) -> Token:
        if self.peek().kind in ("lid", "evid"):
            return self.next()
        raise self.fail("expected an identifier")

    # -- types (structural, Forall allowed anywhere)

    def type_(self) -> Type:
        if self.at("kw", "forall"):
            self.next()
            vs: list[str] = []
            while self.at("lid"):
                vs.append(self.next().text)
            if not vs:
                raise self.fail("expected type variable after 'forall'")
            self.expect("punct", ".")
            body = self.type_()
            for v in reversed(vs):
                body = Forall(v, body)
            return body
        left = self.btype()
        if self.at("punct", "->"):
            self.next()
            return Arrow(left, self.type_())
        return left

    def btype(self) -> Type:
        if self.at("uid", "Dict"):
            self.next()
            cls = self.expect("uid")
            return DictTy(cls.text, self.atom_type())
        if self.at("uid"):
            con = self.next()
            args = []
            while self._at_atom_type():
                args.append(self.atom_type())
            return TyCon(con.text, tuple(args))
        return self.atom_type()

    def _at_atom_type(self) -> bool:
        t = self.peek()
        return (t.kind == "lid"
                or (t.kind == "uid" and t.text != "Dict")
                or (t.kind == "punct" and t.text == "("))

    def atom_type(self) -> Type:
        t = self.peek()
        if t.kind == "lid":
            self.next()
            return TyVar(t.text)
        if t.kind == "uid" and t.text != "Dict":
            self.next()
            return TyCon(t.text, ())
        if self.at("punct", "("):
            self.next()
            inner = self.type_()
            self.expect("punct", ")")
            return inner
        raise self.fail(f"expected a type, found {t.text or t.kind!r}")

    # -- terms

    def term(self) -> Term:
        if self.at("punct", "/\\"):
            self.next()
            v = self.expect("lid")
            self.expect("punct", ".")
            return TyLam(v.text, self.term())
        if self.at("punct", "\\"):
            self.next()
            self.expect("punct", "(")
            v = self._binder_name()
            self.expect("punct", ":")
            ty = self.type_()
            self.expect("punct", ")")
            self.expect("punct", ".")
            return Lam(v.text, ty, self.term())
        return self.appterm()

    def appterm(self) -> Term:
        e = self.atom_term()
        while True:
            if self.at("punct", "["):
                self.next()
                ty = self.type_()
                self.expect("punct", "]")
                e = TyApp(e, ty)
            elif self.peek().kind in ("lid", "evid") or self.at("punct", "("):
                e = App(e, self.atom_term())
            else:
                return e

    def atom_term(self) -> Term:
        t = self.peek()
        if t.kind in ("lid", "evid"):
            self.next()
            return Var(t.text)
        if self.at("punct", "("):
            self.next()
            inner = self.term()
            self.expect("punct", ")")
            return inner
        raise self.fail(f"expected a term, found {t.text or t.kind!r}")


def parse_target(text: str) -> Term:
    p = _SysfParser(tokenize(text))
    t = p.term()
    p.expect("eof")
    return t


def parse_sysf(text: str) -> SysfFile:
    return _SysfParser(tokenize(text)).file()


# ---------------------------------------------------------------------------
# Pretty-printing

def pretty_type(t: Type) -> str:
    return _ppt(t, 0)


def _ppt(t: Type, prec: int) -> str:
    # prec 0: top; 1: arrow operand / tycon head; 2: atom
    if isinstance(t, TyVar):
        return t.name
    if isinstance(t, TyCon):
        if not t.args:
            return t.name
        s = t.name + " " + " ".join(_ppt(a, 2) for a in t.args)
        return f"({s})" if prec >= 2 else s
    if isinstance(t, DictTy):
        s = f"Dict {t.cls} {_ppt(t.arg, 2)}"
        return f"({s})" if prec >= 2 else s
    if isinstance(t, Arrow):
        s = f"{_ppt(t.dom, 1)} -> {_ppt(t.cod, 0)}"
        return f"({s})" if prec >= 1 else s
    if isinstance(t, Forall):
        vs = [t.var]
        body = t.body
        while isinstance(body, Forall):
            vs.append(body.var)
            body = body.body
        s = f"forall {' '.join(vs)}. {_ppt(body, 0)}"
        return f"({s})" if prec >= 1 else s
    raise TypeError(f"pretty_type: not a type: {t!r}")


def pretty_constraint(c: Constraint) -> str:
    return f"{c.cls} {_ppt(c.arg, 2)}"


def pretty_scheme(s: Scheme) -> str:
    parts: list[str] = []
    if s.quantified:
        parts.append(f"forall {' '.join(s.quantified)}.")
    ctx = s.qual.context
    if len(ctx) == 1:
        parts.append(f"{pretty_constraint(ctx[0])} =>")
    elif ctx:
        parts.append("(" + ", ".join(pretty_constraint(c) for c in ctx) + ") =>")
    parts.append(_ppt(s.qual.body, 0))
    return " ".join(parts)


def pretty_term(t: Term) -> str:
    return _ppm(t, 0)


def _ppm(t: Term, prec: int) -> str:
    # prec 0: top; 1: application head; 2: application argument
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Lam):
        s = f"\\({t.var} : {_ppt(t.annot, 0)}). {_ppm(t.body, 0)}"
        return f"({s})" if prec >= 1 else s
    if isinstance(t, TyLam):
        s = f"/\\{t.var}. {_ppm(t.body, 0)}"
        return f"({s})" if prec >= 1 else s
    if isinstance(t, App):
        s = f"{_ppm(t.fn, 1)} {_ppm(t.arg, 2)}"
        return f"({s})" if prec >= 2 else s
    if isinstance(t, TyApp):
        s = f"{_ppm(t.fn, 1)} [{_ppt(t.arg, 0)}]"
        return f"({s})" if prec >= 2 else s
    raise TypeError(f"pretty_term: not a term: {t!r}")


def pretty_expr(e: SrcExpr) -> str:
    return _ppe(e, 0)


def _ppe(e: SrcExpr, prec: int) -> str:
    if isinstance(e, EVar):
        return e.name
    if isinstance(e, ELam):
        s = f"\\{e.var}. {_ppe(e.body, 0)}"
        return f"({s})" if prec >= 1 else s
    if isinstance(e, EApp):
        s = f"{_ppe(e.fn, 1)} {_ppe(e.arg, 2)}"
        return f"({s})" if prec >= 2 else s
    if isinstance(e, EDictApp):
        s = f"{_ppe(e.fn, 1)} [| {_ppe(e.dict, 0)} as {pretty_constraint(e.at)} |]"
        return f"({s})" if prec >= 2 else s
    if isinstance(e, EAnnot):
        return f"({_ppe(e.expr, 0)} : {pretty_scheme(e.scheme)})"
    raise TypeError(f"pretty_expr: not an expression: {e!r}")


def pretty_axiom(ax: AxiomScheme) -> str:
    parts: list[str] = []
    if ax.quantified:
        parts.append(f"forall {' '.join(ax.quantified)}.")
    if len(ax.premises) == 1:
        parts.append(f"{pretty_constraint(ax.premises[0])} =>")
    elif ax.premises:
        parts.append("(" + ", ".join(pretty_constraint(p) for p in ax.premises) + ") =>")
    parts.append(pretty_constraint(ax.head))
    return " ".join(parts)


def pretty_program(p: Program) -> str:
    lines: list[str] = []
    for c in p.classes:
        lines.append(f"class {c};")
    for n, a in p.tycons:
        lines.append(f"tycon {n} {a};")
    for ax in p.axioms:
        lines.append(f"instance {ax.name} : {pretty_axiom(ax)};")
    for n, s in p.prims:
        lines.append(f"prim {n} : {pretty_scheme(s)};")
    for n, sig, body in p.defs:
        if sig is not None:
            lines.append(f"sig {n} : {pretty_scheme(sig)};")
        lines.append(f"def {n} = {pretty_expr(body)};")
    for n, body in p.checks:
        lines.append(f"check {n} = {pretty_expr(body)};")
    return "\n".join(lines) + ("\n" if lines else "")


def pretty_sysf(f: SysfFile) -> str:
    lines: list[str] = []
    for n, ty in f.prims:
        lines.append(f"prim {n} : {pretty_type(ty)};")
    for n, ty, body in f.defs:
        lines.append(f"def {n} : {pretty_type(ty)} = {pretty_term(body)};")
    return "\n".join(lines) + ("\n" if lines else "")


def pretty(subject) -> str:
    """Print a Program, Scheme, target term, or type."""
    if isinstance(subject, Program):
        return pretty_program(subject)
    if isinstance(subject, Scheme):
        return pretty_scheme(subject)
    if isinstance(subject, SysfFile):
        return pretty_sysf(subject)
    if isinstance(subject, (Var, Lam, App, TyLam, TyApp)):
        return pretty_term(subject)
    if isinstance(subject, (TyVar, TyCon, Arrow, DictTy, Forall)):
        return pretty_type(subject)
    if isinstance(subject, Constraint):
        return pretty_constraint(subject)
    raise TypeError(f"pretty: unsupported subject {subject!r}")
