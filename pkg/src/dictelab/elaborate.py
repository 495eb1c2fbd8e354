"""Type-level elaboration into the target calculus.

Schemes become quantified types, each context constraint becomes an extra
dictionary arrow, constraints become dictionary types, and axiom schemes
become the types of their evidence bindings.  Constraint sets and source
environments elaborate to plain value bindings in a target environment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .syntax import (
    Arrow, AxiomScheme, Constraint, DictTy, Forall, LabelledConstraints,
    QualType, Scheme, TermBind, TopAxioms, TypeEnv, TyVarBind, Type,
)


@dataclass(frozen=True)
class TargetBind:
    name: str
    type: Type


@dataclass(frozen=True)
class TargetTyVar:
    name: str


TargetEntry = Union[TargetBind, TargetTyVar]


@dataclass(frozen=True)
class TargetEnv:
    entries: tuple[TargetEntry, ...] = ()

    def __post_init__(self) -> None:
        names = [e.name for e in self.entries if isinstance(e, TargetBind)]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate binding in target environment: {names}")

    def lookup(self, name: str) -> Type | None:
        for e in self.entries:
            if isinstance(e, TargetBind) and e.name == name:
                return e.type
        return None

    def has_tyvar(self, name: str) -> bool:
        return any(isinstance(e, TargetTyVar) and e.name == name
                   for e in self.entries)

    def bind(self, name: str, ty: Type) -> "TargetEnv":
        entries = tuple(e for e in self.entries
                        if not (isinstance(e, TargetBind) and e.name == name))
        return TargetEnv((TargetBind(name, ty),) + entries)

    def bind_tyvar(self, name: str) -> "TargetEnv":
        return TargetEnv((TargetTyVar(name),) + self.entries)


def elab_constraint(c: Constraint) -> Type:
    return DictTy(c.cls, c.arg)


def elab_qual(q: QualType) -> Type:
    t = q.body
    for c in reversed(q.context):
        t = Arrow(elab_constraint(c), t)
    return t


def elab_type(s: Scheme | QualType | Type) -> Type:
    """Elaborate a scheme, qualified type, or monotype to a target type."""
    if isinstance(s, Scheme):
        t = elab_qual(s.qual)
        for v in reversed(s.quantified):
            t = Forall(v, t)
        return t
    if isinstance(s, QualType):
        return elab_qual(s)
    return s


def elab_axiom(a: AxiomScheme) -> Type:
    t: Type = elab_constraint(a.head)
    for p in reversed(a.premises):
        t = Arrow(elab_constraint(p), t)
    for v in reversed(a.quantified):
        t = Forall(v, t)
    return t


def elab_env(axioms: TopAxioms, q: LabelledConstraints, g: TypeEnv) -> TargetEnv:
    """Axioms and local evidence become value bindings; term bindings are
    elaborated pointwise; type variables pass through."""
    entries: list[TargetEntry] = []
    for ax in axioms:
        entries.append(TargetBind(ax.name, elab_axiom(ax)))
    for label, c in q:
        entries.append(TargetBind(label, elab_constraint(c)))
    for e in g.entries:
        if isinstance(e, TyVarBind):
            entries.append(TargetTyVar(e.name))
        elif isinstance(e, TermBind):
            entries.append(TargetBind(e.name, elab_type(e.scheme)))
    return TargetEnv(tuple(entries))
