"""Target-language kernel: typechecking, erasure, normalization, equivalence.

The equivalence used by the coherence harness compares terms after type
erasure, so two terms are equivalent iff their erased beta-eta normal
forms are alpha-equal.  Beta reduction in this sense is only sound for a
non-strict target, which is what the language assumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .elaborate import TargetEnv
from .syntax import (
    App, Arrow, Forall, Lam, Term, TyApp, TyLam, Type, Var,
    alpha_eq_type, apply_ty, _fresh_name,
)


class TargetTypeError(Exception):
    """Raised when a target term does not typecheck."""


class Mismatch(TargetTypeError):
    pass


class UnboundVar(TargetTypeError):
    pass


class NotAFunction(TargetTypeError):
    pass


class NotAForall(TargetTypeError):
    pass


class FuelExhausted(Exception):
    """Normalization ran out of reduction steps."""


# ---------------------------------------------------------------------------
# Typechecking (syntax-directed, unique types)

def tc_target(env: TargetEnv, t: Term) -> Type:
    if isinstance(t, Var):
        ty = env.lookup(t.name)
        if ty is None:
            raise UnboundVar(f"unbound variable {t.name!r}")
        return ty
    if isinstance(t, Lam):
        body = tc_target(env.bind(t.var, t.annot), t.body)
        return Arrow(t.annot, body)
    if isinstance(t, App):
        fn = tc_target(env, t.fn)
        arg = tc_target(env, t.arg)
        if not isinstance(fn, Arrow):
            raise NotAFunction(f"expected a function type, got {fn}")
        if not alpha_eq_type(fn.dom, arg):
            raise Mismatch(f"argument type {arg} does not match parameter "
                           f"type {fn.dom}")
        return fn.cod
    if isinstance(t, TyLam):
        body = tc_target(env.bind_tyvar(t.var), t.body)
        return Forall(t.var, body)
    if isinstance(t, TyApp):
        fn = tc_target(env, t.fn)
        if not isinstance(fn, Forall):
            raise NotAForall(f"expected a quantified type, got {fn}")
        return apply_ty({fn.var: t.arg}, fn.body)
    raise TypeError(f"tc_target: not a term: {t!r}")


# ---------------------------------------------------------------------------
# Erasure

@dataclass(frozen=True)
class UVar:
    name: str


@dataclass(frozen=True)
class ULam:
    var: str
    body: "UntypedTerm"


@dataclass(frozen=True)
class UApp:
    fn: "UntypedTerm"
    arg: "UntypedTerm"


UntypedTerm = Union[UVar, ULam, UApp]


def erase(t: Term) -> UntypedTerm:
    """Drop type abstractions, type applications and binder annotations."""
    if isinstance(t, Var):
        return UVar(t.name)
    if isinstance(t, Lam):
        return ULam(t.var, erase(t.body))
    if isinstance(t, App):
        return UApp(erase(t.fn), erase(t.arg))
    if isinstance(t, TyLam):
        return erase(t.body)
    if isinstance(t, TyApp):
        return erase(t.fn)
    raise TypeError(f"erase: not a term: {t!r}")


def fv_untyped(t: UntypedTerm) -> set[str]:
    if isinstance(t, UVar):
        return {t.name}
    if isinstance(t, ULam):
        return fv_untyped(t.body) - {t.var}
    return fv_untyped(t.fn) | fv_untyped(t.arg)


def alpha_eq_untyped(t1: UntypedTerm, t2: UntypedTerm) -> bool:
    return _db(t1, {}, 0) == _db(t2, {}, 0)


def _db(t: UntypedTerm, env: dict[str, int], depth: int):
    if isinstance(t, UVar):
        if t.name in env:
            return ("b", depth - env[t.name])
        return ("f", t.name)
    if isinstance(t, ULam):
        return ("lam", _db(t.body, {**env, t.var: depth + 1}, depth + 1))
    return ("app", _db(t.fn, env, depth), _db(t.arg, env, depth))


def pretty_untyped(t: UntypedTerm, prec: int = 0) -> str:
    if isinstance(t, UVar):
        return t.name
    if isinstance(t, ULam):
        s = f"\\{t.var}. {pretty_untyped(t.body, 0)}"
        return f"({s})" if prec >= 1 else s
    s = f"{pretty_untyped(t.fn, 1)} {pretty_untyped(t.arg, 2)}"
    return f"({s})" if prec >= 2 else s


# ---------------------------------------------------------------------------
# Normalization (leftmost-outermost, eta after beta at each node)

class _Fuel:
    __slots__ = ("left",)

    def __init__(self, n: int) -> None:
        self.left = n

    def burn(self) -> None:
        self.left -= 1
        if self.left < 0:
            raise FuelExhausted("reduction step budget exhausted")


class _Names:
    __slots__ = ("counter",)

    def __init__(self) -> None:
        self.counter = 0

    def fresh(self, base: str) -> str:
        self.counter += 1
        stem = base.split("!")[0]
        return f"{stem}!{self.counter}"


def subst_untyped(t: UntypedTerm, var: str, image: UntypedTerm,
                  names: _Names | None = None) -> UntypedTerm:
    if names is None:
        names = _Names()
    if isinstance(t, UVar):
        return image if t.name == var else t
    if isinstance(t, ULam):
        if t.var == var:
            return t
        if t.var in fv_untyped(image) and var in fv_untyped(t.body):
            fresh = names.fresh(t.var)
            body = subst_untyped(t.body, t.var, UVar(fresh), names)
            return ULam(fresh, subst_untyped(body, var, image, names))
        return ULam(t.var, subst_untyped(t.body, var, image, names))
    return UApp(subst_untyped(t.fn, var, image, names),
                subst_untyped(t.arg, var, image, names))


def _whnf(t: UntypedTerm, fuel: _Fuel, names: _Names) -> UntypedTerm:
    while isinstance(t, UApp):
        fn = _whnf(t.fn, fuel, names)
        if isinstance(fn, ULam):
            fuel.burn()
            t = subst_untyped(fn.body, fn.var, t.arg, names)
        else:
            return UApp(fn, t.arg)
    return t


def _nf(t: UntypedTerm, fuel: _Fuel, names: _Names) -> UntypedTerm:
    t = _whnf(t, fuel, names)
    if isinstance(t, UVar):
        return t
    if isinstance(t, ULam):
        body = _nf(t.body, fuel, names)
        if (isinstance(body, UApp) and isinstance(body.arg, UVar)
                and body.arg.name == t.var and t.var not in fv_untyped(body.fn)):
            fuel.burn()
            return body.fn
        return ULam(t.var, body)
    # application spine headed by a variable
    return UApp(_nf(t.fn, fuel, names), _nf(t.arg, fuel, names))


def normalize(t: UntypedTerm, fuel: int = 100_000) -> UntypedTerm:
    """Beta-eta normal form via normal-order reduction; deterministic."""
    if fuel < 1:
        raise ValueError("fuel must be at least 1")
    return _nf(t, _Fuel(fuel), _Names())


def equiv(t1: Term, t2: Term, fuel: int = 100_000) -> bool:
    """Equivalence after erasure: equal beta-eta normal forms up to alpha.

    Free variables are compared by name; the coherence harness relies on
    this by giving the saturated terms shared evidence variables.
    """
    n1 = normalize(erase(t1), fuel)
    n2 = normalize(erase(t2), fuel)
    return alpha_eq_untyped(n1, n2)
