"""Abstract syntax shared by every stage.

Source and target types use the same node classes; the target additionally
allows ``Forall``.  Terms are split: source expressions (``EVar`` ...) are
what the parser produces, target terms (``Var``/``Lam``/``App``/``TyLam``/
``TyApp``) are what elaboration produces.  Everything is an immutable
dataclass, so values can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union


# ---------------------------------------------------------------------------
# Types

@dataclass(frozen=True)
class TyVar:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class TyCon:
    """Opaque type constructor application, e.g. Int, Maybe a, Pair a b."""

    name: str
    args: tuple["Type", ...] = ()

    def __str__(self) -> str:
        if not self.args:
            return self.name
        return self.name + " " + " ".join(_atom_str(a) for a in self.args)


@dataclass(frozen=True)
class Arrow:
    dom: "Type"
    cod: "Type"

    def __str__(self) -> str:
        dom = str(self.dom)
        if isinstance(self.dom, (Arrow, Forall)):
            dom = f"({dom})"
        return f"{dom} -> {self.cod}"


@dataclass(frozen=True)
class DictTy:
    """Dictionary type for a class applied to one argument."""

    cls: str
    arg: "Type"

    def __str__(self) -> str:
        return f"Dict {self.cls} {_atom_str(self.arg)}"


@dataclass(frozen=True)
class Forall:
    """Target-level quantified type (source schemes keep binders separately)."""

    var: str
    body: "Type"

    def __str__(self) -> str:
        vs = [self.var]
        b = self.body
        while isinstance(b, Forall):
            vs.append(b.var)
            b = b.body
        return f"forall {' '.join(vs)}. {b}"


Type = Union[TyVar, TyCon, Arrow, DictTy, Forall]


def _atom_str(t: Type) -> str:
    if isinstance(t, TyVar) or (isinstance(t, TyCon) and not t.args):
        return str(t)
    return f"({t})"


# ---------------------------------------------------------------------------
# Constraints, qualified types, schemes

@dataclass(frozen=True)
class Constraint:
    cls: str
    arg: Type

    def __str__(self) -> str:
        return f"{self.cls} {_atom_str(self.arg)}"


@dataclass(frozen=True)
class QualType:
    context: tuple[Constraint, ...]
    body: Type

    def __str__(self) -> str:
        if not self.context:
            return str(self.body)
        if len(self.context) == 1:
            return f"{self.context[0]} => {self.body}"
        cs = ", ".join(str(c) for c in self.context)
        return f"({cs}) => {self.body}"


@dataclass(frozen=True)
class Scheme:
    quantified: tuple[str, ...]
    qual: QualType

    def __post_init__(self) -> None:
        if len(set(self.quantified)) != len(self.quantified):
            raise ValueError(f"duplicate quantifier in scheme: {self.quantified}")

    def __str__(self) -> str:
        if not self.quantified:
            return str(self.qual)
        return f"forall {' '.join(self.quantified)}. {self.qual}"


def mono(t: Type) -> Scheme:
    """Wrap a bare type as an unquantified, context-free scheme."""
    return Scheme((), QualType((), t))


# ---------------------------------------------------------------------------
# Labelled constraint sets and axioms

@dataclass(frozen=True)
class LabelledConstraints:
    """A flat conjunction of constraints, each named by an evidence variable.

    Order is kept only so that output is deterministic; the meaning is the
    set of entries.
    """

    entries: tuple[tuple[str, Constraint], ...] = ()

    def __post_init__(self) -> None:
        labels = [lbl for lbl, _ in self.entries]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate evidence label: {labels}")

    def __iter__(self) -> Iterator[tuple[str, Constraint]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def labels(self) -> tuple[str, ...]:
        return tuple(lbl for lbl, _ in self.entries)

    def constraints(self) -> tuple[Constraint, ...]:
        return tuple(c for _, c in self.entries)

    def extended(self, label: str, c: Constraint) -> "LabelledConstraints":
        return LabelledConstraints(self.entries + ((label, c),))

    def __str__(self) -> str:
        return " /\\ ".join(f"{lbl} : {c}" for lbl, c in self.entries) or "(empty)"


@dataclass(frozen=True)
class AxiomScheme:
    """A named instance declaration: forall vars. premises => head."""

    name: str
    quantified: tuple[str, ...]
    premises: tuple[Constraint, ...]
    head: Constraint

    def __str__(self) -> str:
        parts = []
        if self.quantified:
            parts.append(f"forall {' '.join(self.quantified)}.")
        if len(self.premises) == 1:
            parts.append(f"{self.premises[0]} =>")
        elif self.premises:
            parts.append("(" + ", ".join(str(p) for p in self.premises) + ") =>")
        parts.append(str(self.head))
        return f"{self.name} : " + " ".join(parts)


@dataclass(frozen=True)
class TopAxioms:
    axioms: tuple[AxiomScheme, ...] = ()

    def __iter__(self) -> Iterator[AxiomScheme]:
        return iter(self.axioms)

    def __len__(self) -> int:
        return len(self.axioms)


# ---------------------------------------------------------------------------
# Source expressions

@dataclass(frozen=True)
class EVar:
    name: str


@dataclass(frozen=True)
class ELam:
    var: str
    body: "SrcExpr"


@dataclass(frozen=True)
class EApp:
    fn: "SrcExpr"
    arg: "SrcExpr"


@dataclass(frozen=True)
class EDictApp:
    """Explicit dictionary application: fn [| dict as C |]."""

    fn: "SrcExpr"
    dict: "SrcExpr"
    at: Constraint


@dataclass(frozen=True)
class EAnnot:
    expr: "SrcExpr"
    scheme: Scheme


SrcExpr = Union[EVar, ELam, EApp, EDictApp, EAnnot]


# ---------------------------------------------------------------------------
# Target terms

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Lam:
    var: str
    annot: Type
    body: "Term"


@dataclass(frozen=True)
class App:
    fn: "Term"
    arg: "Term"


@dataclass(frozen=True)
class TyLam:
    var: str
    body: "Term"


@dataclass(frozen=True)
class TyApp:
    fn: "Term"
    arg: Type


Term = Union[Var, Lam, App, TyLam, TyApp]


def is_evidence(t: Term) -> bool:
    """Evidence terms are variables applied to types and other evidence."""
    if isinstance(t, Var):
        return True
    if isinstance(t, TyApp):
        return is_evidence(t.fn)
    if isinstance(t, App):
        return is_evidence(t.fn) and is_evidence(t.arg)
    return False


# ---------------------------------------------------------------------------
# Environments

@dataclass(frozen=True)
class TermBind:
    name: str
    scheme: Scheme
    declared: bool = False


@dataclass(frozen=True)
class TyVarBind:
    name: str


EnvEntry = Union[TermBind, TyVarBind]


@dataclass(frozen=True)
class TypeEnv:
    entries: tuple[EnvEntry, ...] = ()

    def __post_init__(self) -> None:
        names = [e.name for e in self.entries if isinstance(e, TermBind)]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate binding in environment: {names}")

    def lookup(self, name: str) -> Scheme | None:
        for e in self.entries:
            if isinstance(e, TermBind) and e.name == name:
                return e.scheme
        return None

    def lookup_bind(self, name: str) -> TermBind | None:
        for e in self.entries:
            if isinstance(e, TermBind) and e.name == name:
                return e
        return None

    def bind(self, name: str, scheme: Scheme, declared: bool = False) -> "TypeEnv":
        entries = tuple(e for e in self.entries
                        if not (isinstance(e, TermBind) and e.name == name))
        return TypeEnv((TermBind(name, scheme, declared),) + entries)

    def bind_tyvar(self, name: str) -> "TypeEnv":
        return TypeEnv((TyVarBind(name),) + self.entries)


# ---------------------------------------------------------------------------
# Free type variables

def ftv(subject) -> set[str]:
    """Free type variables of a type, constraint, scheme, env, or collection."""
    out: set[str] = set()
    _ftv_into(subject, out)
    return out


def _ftv_into(subject, out: set[str]) -> None:
    if isinstance(subject, TyVar):
        out.add(subject.name)
    elif isinstance(subject, TyCon):
        for a in subject.args:
            _ftv_into(a, out)
    elif isinstance(subject, Arrow):
        _ftv_into(subject.dom, out)
        _ftv_into(subject.cod, out)
    elif isinstance(subject, DictTy):
        _ftv_into(subject.arg, out)
    elif isinstance(subject, Forall):
        inner: set[str] = set()
        _ftv_into(subject.body, inner)
        inner.discard(subject.var)
        out |= inner
    elif isinstance(subject, Constraint):
        _ftv_into(subject.arg, out)
    elif isinstance(subject, QualType):
        for c in subject.context:
            _ftv_into(c, out)
        _ftv_into(subject.body, out)
    elif isinstance(subject, Scheme):
        inner = set()
        _ftv_into(subject.qual, inner)
        out |= inner - set(subject.quantified)
    elif isinstance(subject, LabelledConstraints):
        for _, c in subject.entries:
            _ftv_into(c, out)
    elif isinstance(subject, AxiomScheme):
        inner = set()
        for p in subject.premises:
            _ftv_into(p, inner)
        _ftv_into(subject.head, inner)
        out |= inner - set(subject.quantified)
    elif isinstance(subject, TypeEnv):
        for e in subject.entries:
            if isinstance(e, TermBind):
                _ftv_into(e.scheme, out)
    elif isinstance(subject, (tuple, list)):
        for x in subject:
            _ftv_into(x, out)
    else:
        raise TypeError(f"ftv: unsupported subject {subject!r}")


def ftv_ordered(subject) -> list[str]:
    """Free type variables in first-occurrence order (used for generalisation)."""
    out: list[str] = []
    seen: set[str] = set()

    def go(s) -> None:
        if isinstance(s, TyVar):
            if s.name not in seen:
                seen.add(s.name)
                out.append(s.name)
        elif isinstance(s, TyCon):
            for a in s.args:
                go(a)
        elif isinstance(s, Arrow):
            go(s.dom)
            go(s.cod)
        elif isinstance(s, DictTy):
            go(s.arg)
        elif isinstance(s, Constraint):
            go(s.arg)
        elif isinstance(s, (tuple, list)):
            for x in s:
                go(x)
        else:
            raise TypeError(f"ftv_ordered: unsupported subject {s!r}")

    go(subject)
    return out


# ---------------------------------------------------------------------------
# Type substitution

TySubst = dict[str, Type]


def apply_ty(subst: TySubst, t: Type) -> Type:
    if not subst:
        return t
    if isinstance(t, TyVar):
        return subst.get(t.name, t)
    if isinstance(t, TyCon):
        return TyCon(t.name, tuple(apply_ty(subst, a) for a in t.args))
    if isinstance(t, Arrow):
        return Arrow(apply_ty(subst, t.dom), apply_ty(subst, t.cod))
    if isinstance(t, DictTy):
        return DictTy(t.cls, apply_ty(subst, t.arg))
    if isinstance(t, Forall):
        inner = {k: v for k, v in subst.items() if k != t.var}
        captured = any(t.var in ftv(v) for v in inner.values())
        if captured:
            fresh = _fresh_name(t.var, ftv(t.body) | {k for k in inner}
                                | set().union(*(ftv(v) for v in inner.values())))
            body = apply_ty({t.var: TyVar(fresh)}, t.body)
            return Forall(fresh, apply_ty(inner, body))
        return Forall(t.var, apply_ty(inner, t.body))
    raise TypeError(f"apply_ty: not a type: {t!r}")


def apply_ty_constraint(subst: TySubst, c: Constraint) -> Constraint:
    return Constraint(c.cls, apply_ty(subst, c.arg))


def apply_ty_qual(subst: TySubst, q: QualType) -> QualType:
    return QualType(tuple(apply_ty_constraint(subst, c) for c in q.context),
                    apply_ty(subst, q.body))


def apply_ty_scheme(subst: TySubst, s: Scheme) -> Scheme:
    """Capture-avoiding substitution under the scheme's quantifiers."""
    inner = {k: v for k, v in subst.items() if k not in s.quantified}
    if not inner:
        return s
    range_ftv: set[str] = set()
    for v in inner.values():
        range_ftv |= ftv(v)
    quantified = list(s.quantified)
    qual = s.qual
    renaming: TySubst = {}
    taken = ftv(s.qual) | range_ftv | set(inner)
    for i, q in enumerate(quantified):
        if q in range_ftv:
            fresh = _fresh_name(q, taken)
            taken.add(fresh)
            renaming[q] = TyVar(fresh)
            quantified[i] = fresh
    if renaming:
        qual = apply_ty_qual(renaming, qual)
    return Scheme(tuple(quantified), apply_ty_qual(inner, qual))


def apply_ty_labelled(subst: TySubst, q: LabelledConstraints) -> LabelledConstraints:
    return LabelledConstraints(tuple((lbl, apply_ty_constraint(subst, c))
                                     for lbl, c in q.entries))


def apply_ty_term(subst: TySubst, t: Term) -> Term:
    """Substitute type variables inside a target term's annotations and type args."""
    if isinstance(t, Var):
        return t
    if isinstance(t, Lam):
        return Lam(t.var, apply_ty(subst, t.annot), apply_ty_term(subst, t.body))
    if isinstance(t, App):
        return App(apply_ty_term(subst, t.fn), apply_ty_term(subst, t.arg))
    if isinstance(t, TyLam):
        inner = {k: v for k, v in subst.items() if k != t.var}
        captured = any(t.var in ftv(v) for v in inner.values())
        if captured:
            taken = set(inner) | set().union(*(ftv(v) for v in inner.values())) | free_tyvars_term(t.body)
            fresh = _fresh_name(t.var, taken)
            body = apply_ty_term({t.var: TyVar(fresh)}, t.body)
            return TyLam(fresh, apply_ty_term(inner, body))
        return TyLam(t.var, apply_ty_term(inner, t.body))
    if isinstance(t, TyApp):
        return TyApp(apply_ty_term(subst, t.fn), apply_ty(subst, t.arg))
    raise TypeError(f"apply_ty_term: not a term: {t!r}")


def compose_subst(outer: TySubst, inner: TySubst) -> TySubst:
    """outer after inner: apply the result to t to get outer(inner(t))."""
    out: TySubst = {k: apply_ty(outer, v) for k, v in inner.items()}
    for k, v in outer.items():
        if k not in out:
            out[k] = v
    return out


def _fresh_name(base: str, taken: set[str]) -> str:
    stem = base.rstrip("0123456789")
    i = 1
    while True:
        cand = f"{stem}{i}"
        if cand not in taken:
            return cand
        i += 1


# ---------------------------------------------------------------------------
# Term-level free variables and evidence substitution

def fdv(t: Term) -> set[str]:
    """Free term variables (dictionary variables when t is evidence)."""
    if isinstance(t, Var):
        return {t.name}
    if isinstance(t, Lam):
        return fdv(t.body) - {t.var}
    if isinstance(t, App):
        return fdv(t.fn) | fdv(t.arg)
    if isinstance(t, (TyLam, TyApp)):
        return fdv(t.fn if isinstance(t, TyApp) else t.body)
    raise TypeError(f"fdv: not a term: {t!r}")


def free_tyvars_term(t: Term) -> set[str]:
    if isinstance(t, Var):
        return set()
    if isinstance(t, Lam):
        return ftv(t.annot) | free_tyvars_term(t.body)
    if isinstance(t, App):
        return free_tyvars_term(t.fn) | free_tyvars_term(t.arg)
    if isinstance(t, TyLam):
        return free_tyvars_term(t.body) - {t.var}
    if isinstance(t, TyApp):
        return free_tyvars_term(t.fn) | ftv(t.arg)
    raise TypeError(f"free_tyvars_term: not a term: {t!r}")


EvSubst = dict[str, Term]


def apply_ev(subst: EvSubst, t: Term) -> Term:
    """Capture-avoiding replacement of free evidence (term) variables."""
    if not subst:
        return t
    if isinstance(t, Var):
        return subst.get(t.name, t)
    if isinstance(t, Lam):
        inner = {k: v for k, v in subst.items() if k != t.var}
        if not inner:
            return t
        if any(t.var in fdv(v) for v in inner.values()):
            taken = fdv(t.body) | set(inner)
            for v in inner.values():
                taken |= fdv(v)
            fresh = _fresh_name(t.var, taken)
            body = apply_ev({t.var: Var(fresh)}, t.body)
            return Lam(fresh, t.annot, apply_ev(inner, body))
        return Lam(t.var, t.annot, apply_ev(inner, t.body))
    if isinstance(t, App):
        return App(apply_ev(subst, t.fn), apply_ev(subst, t.arg))
    if isinstance(t, TyLam):
        return TyLam(t.var, apply_ev(subst, t.body))
    if isinstance(t, TyApp):
        return TyApp(apply_ev(subst, t.fn), t.arg)
    raise TypeError(f"apply_ev: not a term: {t!r}")


# ---------------------------------------------------------------------------
# Alpha-equivalence (de Bruijn view computed on demand)

def alpha_eq_type(t1: Type, t2: Type) -> bool:
    return _db_type(t1, {}, 0) == _db_type(t2, {}, 0)


def _db_type(t: Type, env: dict[str, int], depth: int):
    if isinstance(t, TyVar):
        if t.name in env:
            return ("b", depth - env[t.name])
        return ("f", t.name)
    if isinstance(t, TyCon):
        return ("con", t.name, tuple(_db_type(a, env, depth) for a in t.args))
    if isinstance(t, Arrow):
        return ("arr", _db_type(t.dom, env, depth), _db_type(t.cod, env, depth))
    if isinstance(t, DictTy):
        return ("dict", t.cls, _db_type(t.arg, env, depth))
    if isinstance(t, Forall):
        return ("all", _db_type(t.body, {**env, t.var: depth + 1}, depth + 1))
    raise TypeError(f"alpha_eq_type: not a type: {t!r}")


def alpha_eq_term(t1: Term, t2: Term) -> bool:
    return _db_term(t1, {}, {}, 0) == _db_term(t2, {}, {}, 0)


def _db_term(t: Term, tm: dict[str, int], ty: dict[str, int], depth: int):
    if isinstance(t, Var):
        if t.name in tm:
            return ("b", depth - tm[t.name])
        return ("f", t.name)
    if isinstance(t, Lam):
        return ("lam", _db_type_mixed(t.annot, ty, depth),
                _db_term(t.body, {**tm, t.var: depth + 1}, ty, depth + 1))
    if isinstance(t, App):
        return ("app", _db_term(t.fn, tm, ty, depth), _db_term(t.arg, tm, ty, depth))
    if isinstance(t, TyLam):
        return ("tlam", _db_term(t.body, tm, {**ty, t.var: depth + 1}, depth + 1))
    if isinstance(t, TyApp):
        return ("tapp", _db_term(t.fn, tm, ty, depth), _db_type_mixed(t.arg, ty, depth))
    raise TypeError(f"alpha_eq_term: not a term: {t!r}")


def _db_type_mixed(t: Type, env: dict[str, int], depth: int):
    if isinstance(t, TyVar):
        if t.name in env:
            return ("b", depth - env[t.name])
        return ("f", t.name)
    if isinstance(t, TyCon):
        return ("con", t.name, tuple(_db_type_mixed(a, env, depth) for a in t.args))
    if isinstance(t, Arrow):
        return ("arr", _db_type_mixed(t.dom, env, depth), _db_type_mixed(t.cod, env, depth))
    if isinstance(t, DictTy):
        return ("dict", t.cls, _db_type_mixed(t.arg, env, depth))
    if isinstance(t, Forall):
        return ("all", _db_type_mixed(t.body, {**env, t.var: depth + 1}, depth + 1))
    raise TypeError(f"not a type: {t!r}")


def alpha_eq(t1, t2) -> bool:
    """Alpha-equivalence for target terms or types."""
    term_kinds = (Var, Lam, App, TyLam, TyApp)
    if isinstance(t1, term_kinds) and isinstance(t2, term_kinds):
        return alpha_eq_term(t1, t2)
    return alpha_eq_type(t1, t2)


def alpha_eq_scheme(s1: Scheme, s2: Scheme) -> bool:
    """Schemes are equal up to consistent renaming of their quantifiers."""
    if len(s1.quantified) != len(s2.quantified):
        return False
    if len(s1.qual.context) != len(s2.qual.context):
        return False
    from_ty = lambda s: _scheme_as_type(s)
    return alpha_eq_type(from_ty(s1), from_ty(s2))


def _scheme_as_type(s: Scheme) -> Type:
    t: Type = s.qual.body
    for c in reversed(s.qual.context):
        t = Arrow(DictTy(c.cls, c.arg), t)
    for v in reversed(s.quantified):
        t = Forall(v, t)
    return t


# ---------------------------------------------------------------------------
# Name supply

class NameSupply:
    """Deterministic fresh-name generator; one per inference run."""

    def __init__(self, forbidden: Iterable[str] = ()) -> None:
        self._forbidden = set(forbidden)
        self._counters: dict[str, int] = {}

    def fresh(self, prefix: str) -> str:
        n = self._counters.get(prefix, 0)
        while True:
            n += 1
            cand = f"{prefix}{n}"
            if cand not in self._forbidden:
                break
        self._counters[prefix] = n
        self._forbidden.add(cand)
        return cand

    def forbid(self, names: Iterable[str]) -> None:
        self._forbidden |= set(names)
