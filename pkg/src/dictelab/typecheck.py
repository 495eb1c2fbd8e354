"""Algorithmic typing with elaboration.

Inference is Algorithm-W style: schemes from the environment are
instantiated with fresh metavariables, wanted class constraints are
collected with evidence labels, and a substitution is accumulated as
unification proceeds.  Top-level checking then simplifies the wanteds
against the axioms, generalises, and wraps the elaborated term in type
and dictionary abstractions.

Explicit dictionary application is guarded by a safety check: the
constraint receiving the dictionary (and everything derivable from it)
must either not be derivable from the remaining constraints, or be
derivable from the axioms alone with identical evidence.  The check uses
a bounded forward closure and fails closed when the closure is truncated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import entailment
from .elaborate import elab_constraint
from .entailment import (
    ClosureExploded, DepthExceeded, Unsolvable, derivable_closure, match_type,
    solve, solve_all, validate_axioms,
)
from .surface import Program, pretty_constraint, pretty_scheme
from .syntax import (
    App, Arrow, Constraint, DictTy, EAnnot, EApp, EDictApp, ELam, EVar,
    Forall, Lam, LabelledConstraints, NameSupply, QualType, Scheme, SrcExpr,
    Term, TermBind, TopAxioms, TyApp, TyCon, TyLam, TypeEnv, TyVar, Type,
    Var, alpha_eq_term, apply_ev, apply_ty, apply_ty_constraint,
    apply_ty_qual, apply_ty_term, fdv, free_tyvars_term, ftv, ftv_ordered,
    mono, _fresh_name,
)


class TypecheckError(Exception):
    pass


class UnificationFail(TypecheckError):
    pass


class OccursCheckFail(TypecheckError):
    pass


class UnboundVariable(TypecheckError):
    pass


class AmbiguousPrincipalType(TypecheckError):
    pass


class UnsolvableConstraint(TypecheckError):
    def __init__(self, constraint: Constraint) -> None:
        super().__init__(f"cannot solve constraint {pretty_constraint(constraint)}")
        self.constraint = constraint


class InvalidDictApp(TypecheckError):
    pass


class SearchExceeded(TypecheckError):
    pass


@dataclass(frozen=True)
class SafetyReport:
    verdict: str  # "safe" | "unsafe" | "inconclusive"
    witness: tuple[Constraint, Term, Term] | None = None
    closure_truncated: bool = False


class SafetyViolation(TypecheckError):
    def __init__(self, report: SafetyReport, at: Constraint) -> None:
        if report.verdict == "unsafe":
            assert report.witness is not None
            c, _, _ = report.witness
            msg = (f"unsafe dictionary application at {pretty_constraint(at)}: "
                   f"constraint {pretty_constraint(c)} is also implied by the "
                   f"remaining constraints")
        else:
            msg = (f"dictionary application at {pretty_constraint(at)} is "
                   f"inconclusive: derivable-constraint closure was truncated")
        super().__init__(msg)
        self.report = report
        self.at = at


@dataclass(frozen=True)
class Derivation:
    """A typing result: residual constraints, scheme, elaborated term."""

    residual: LabelledConstraints
    scheme: Scheme
    term: Term
    used_givens: frozenset[str] = frozenset()


@dataclass
class Options:
    unsafe: bool = False
    solve_depth: int = entailment.DEFAULT_SOLVE_DEPTH
    closure_depth: int = entailment.DEFAULT_CLOSURE_DEPTH
    closure_cap: int = entailment.DEFAULT_CLOSURE_CAP


# ---------------------------------------------------------------------------
# Ambiguity

def is_unambiguous(s: Scheme) -> bool:
    """Every quantified variable used in the context also occurs in the body."""
    used = set(s.quantified) & ftv(s.qual.context)
    return used <= ftv(s.qual.body)


def is_context_unambiguous(s: Scheme, env: TypeEnv) -> bool:
    """As is_unambiguous, but the environment's free variables also count.

    Literal on names: derivations keep scheme quantifiers fresh with
    respect to the environment, so for pipeline-produced schemes over a
    closed environment this coincides with is_unambiguous.
    """
    used = set(s.quantified) & ftv(s.qual.context)
    return used <= (ftv(env) | ftv(s.qual.body))


# ---------------------------------------------------------------------------
# Scheme ordering

def rename_scheme_apart(s: Scheme, taken: set[str]) -> Scheme:
    """Rename quantifiers that collide with `taken`; keep names otherwise."""
    renaming: dict[str, Type] = {}
    quantified: list[str] = []
    pool = set(taken) | set(s.quantified) | ftv(s.qual)
    for v in s.quantified:
        if v in taken:
            fresh = _fresh_name(v, pool)
            pool.add(fresh)
            renaming[v] = TyVar(fresh)
            quantified.append(fresh)
        else:
            quantified.append(v)
    if not renaming:
        return s
    return Scheme(tuple(quantified), apply_ty_qual(renaming, s.qual))


def more_general(axioms: TopAxioms, q1: LabelledConstraints, s1: Scheme,
                 q2: LabelledConstraints, s2: Scheme,
                 solve_depth: int = entailment.DEFAULT_SOLVE_DEPTH) -> bool:
    """s1 (under assumptions q1) is at least as general as s2 (under q2).

    The instantiation is found by one-way matching of the bodies; a
    quantifier of s1 that the match leaves undetermined but that occurs in
    s1's context would have to be guessed, which we refuse (SearchExceeded).
    """
    taken = ftv(s1) | ftv(q1) | ftv(q2) | ftv(s2)
    s2r = rename_scheme_apart(s2, taken)
    taken = taken | set(s2r.quantified)
    s1r = rename_scheme_apart(s1, taken)
    taken = taken | set(s1r.quantified)

    m: dict[str, Type] = {}
    if not match_type(s1r.qual.body, s2r.qual.body, set(s1r.quantified), m):
        return False
    for v in s1r.quantified:
        if v in m:
            continue
        if v in ftv(s1r.qual.context):
            raise SearchExceeded(
                f"instantiating {pretty_scheme(s1)} against "
                f"{pretty_scheme(s2)} requires guessing {v!r}")
        junk = _fresh_name("u", taken)
        taken.add(junk)
        m[v] = TyVar(junk)

    supply = NameSupply(set(q1.labels()) | set(q2.labels())
                        | {ax.name for ax in axioms})
    given_entries = list(q2.entries)
    for c in s2r.qual.context:
        given_entries.append((supply.fresh("g"), c))
    wanted_entries = [(supply.fresh("w"), c) for c in q1.constraints()]
    for c in s1r.qual.context:
        wanted_entries.append((supply.fresh("w"), apply_ty_constraint(m, c)))
    try:
        solve_all(axioms, LabelledConstraints(tuple(given_entries)),
                  LabelledConstraints(tuple(wanted_entries)), solve_depth)
        return True
    except Unsolvable:
        return False
    except DepthExceeded as err:
        raise SearchExceeded(
            "entailment depth exhausted while comparing schemes") from err


# ---------------------------------------------------------------------------
# Dictionary-application safety

def dictapp_safety(axioms: TopAxioms, q: LabelledConstraints,
                   c1: tuple[Constraint, ...], c2: tuple[Constraint, ...],
                   at: Constraint,
                   closure_depth: int = entailment.DEFAULT_CLOSURE_DEPTH,
                   closure_cap: int = entailment.DEFAULT_CLOSURE_CAP,
                   solve_depth: int = entailment.DEFAULT_SOLVE_DEPTH
                   ) -> SafetyReport:
    """Check one explicit dictionary application site.

    Every constraint derivable from the applied-at constraint must either
    not be derivable from the axioms plus the remaining constraints, or be
    derivable from the axioms alone with the identical evidence.
    """
    supply = NameSupply(set(q.labels()) | {ax.name for ax in axioms})
    seed = supply.fresh("d")
    try:
        closure = derivable_closure(axioms, LabelledConstraints(((seed, at),)),
                                    closure_depth, closure_cap)
    except ClosureExploded:
        return SafetyReport("inconclusive", closure_truncated=True)

    rest_entries = list(q.entries)
    for c in c1 + c2:
        rest_entries.append((supply.fresh("r"), c))
    rest = LabelledConstraints(tuple(rest_entries))

    depth_trouble = False
    for c, tev in closure.entries:
        try:
            from_rest = solve(axioms, rest, c, solve_depth)
        except Unsolvable:
            continue
        except DepthExceeded:
            depth_trouble = True
            continue
        try:
            canonical = solve(axioms, LabelledConstraints(), c, solve_depth)
        except (Unsolvable, DepthExceeded):
            canonical = None
        if canonical is not None and alpha_eq_term(canonical.evidence, tev):
            continue
        return SafetyReport("unsafe", witness=(c, tev, from_rest.evidence),
                            closure_truncated=closure.truncated)
    if closure.truncated or depth_trouble:
        return SafetyReport("inconclusive", closure_truncated=True)
    return SafetyReport("safe")


# ---------------------------------------------------------------------------
# Inference engine

@dataclass
class _SafetySite:
    at: Constraint
    c1: tuple[Constraint, ...]
    c2: tuple[Constraint, ...]
    givens: tuple[tuple[str, Constraint], ...]


@dataclass
class _Scope:
    wanteds: list[tuple[str, Constraint]] = field(default_factory=list)


class Inferencer:
    def __init__(self, axioms: TopAxioms, env: TypeEnv,
                 options: Options | None = None,
                 forced_choices: dict[int, int] | None = None) -> None:
        self.axioms = axioms
        self.options = options or Options()
        forbidden = {ax.name for ax in axioms}
        forbidden |= {e.name for e in env.entries if isinstance(e, TermBind)}
        self.supply = NameSupply(forbidden)
        self.subst: dict[str, Type] = {}
        self.meta_names: list[str] = []
        self.scopes: list[_Scope] = [_Scope()]
        self.given_stack: list[tuple[tuple[str, Constraint], ...]] = []
        self.safety_sites: list[_SafetySite] = []
        self.rigids: set[str] = set(ftv(env))
        self.choice_counter = 0
        self.choice_routes: list[int] = []
        self.forced = dict(forced_choices or {})
        self.used_givens: set[str] = set()

    # -- metavariables and unification

    def fresh_meta(self) -> TyVar:
        name = f"?{len(self.meta_names)}"
        self.meta_names.append(name)
        return TyVar(name)

    @staticmethod
    def _is_meta(name: str) -> bool:
        return name.startswith("?")

    def walk(self, t: Type) -> Type:
        while isinstance(t, TyVar) and t.name in self.subst:
            t = self.subst[t.name]
        return t

    def zonk(self, t: Type) -> Type:
        t = self.walk(t)
        if isinstance(t, TyVar):
            return t
        if isinstance(t, TyCon):
            return TyCon(t.name, tuple(self.zonk(a) for a in t.args))
        if isinstance(t, Arrow):
            return Arrow(self.zonk(t.dom), self.zonk(t.cod))
        if isinstance(t, DictTy):
            return DictTy(t.cls, self.zonk(t.arg))
        if isinstance(t, Forall):
            return Forall(t.var, self.zonk(t.body))
        raise TypeError(f"zonk: not a type: {t!r}")

    def zonk_constraint(self, c: Constraint) -> Constraint:
        return Constraint(c.cls, self.zonk(c.arg))

    def zonk_term(self, t: Term) -> Term:
        if isinstance(t, Var):
            return t
        if isinstance(t, Lam):
            return Lam(t.var, self.zonk(t.annot), self.zonk_term(t.body))
        if isinstance(t, App):
            return App(self.zonk_term(t.fn), self.zonk_term(t.arg))
        if isinstance(t, TyLam):
            return TyLam(t.var, self.zonk_term(t.body))
        if isinstance(t, TyApp):
            return TyApp(self.zonk_term(t.fn), self.zonk(t.arg))
        raise TypeError(f"zonk_term: not a term: {t!r}")

    def unify(self, t1: Type, t2: Type) -> None:
        t1 = self.walk(t1)
        t2 = self.walk(t2)
        if isinstance(t1, TyVar) and isinstance(t2, TyVar) and t1.name == t2.name:
            return
        if isinstance(t1, TyVar) and self._is_meta(t1.name):
            if t1.name in ftv(self.zonk(t2)):
                raise OccursCheckFail(
                    f"cannot construct the infinite type "
                    f"{t1.name} ~ {self.zonk(t2)}")
            self.subst[t1.name] = t2
            return
        if isinstance(t2, TyVar) and self._is_meta(t2.name):
            self.unify(t2, t1)
            return
        if isinstance(t1, TyCon) and isinstance(t2, TyCon) \
                and t1.name == t2.name and len(t1.args) == len(t2.args):
            for a, b in zip(t1.args, t2.args):
                self.unify(a, b)
            return
        if isinstance(t1, Arrow) and isinstance(t2, Arrow):
            self.unify(t1.dom, t2.dom)
            self.unify(t1.cod, t2.cod)
            return
        if isinstance(t1, DictTy) and isinstance(t2, DictTy) and t1.cls == t2.cls:
            self.unify(t1.arg, t2.arg)
            return
        raise UnificationFail(
            f"cannot unify {self.zonk(t1)} with {self.zonk(t2)}")

    # -- constraint bookkeeping

    def want(self, c: Constraint) -> str:
        label = self.supply.fresh("d")
        self.scopes[-1].wanteds.append((label, c))
        return label

    def instantiate(self, s: Scheme, t: Term) -> tuple[Type, Term]:
        inst: dict[str, Type] = {}
        for v in s.quantified:
            m = self.fresh_meta()
            inst[v] = m
            t = TyApp(t, m)
        for c in s.qual.context:
            ci = apply_ty_constraint(inst, c)
            t = App(t, Var(self.want(ci)))
        return apply_ty(inst, s.qual.body), t

    # -- inference proper

    def infer_poly(self, e: SrcExpr, env: TypeEnv) -> tuple[Scheme, Term] | None:
        if isinstance(e, EVar):
            bind = env.lookup_bind(e.name)
            if bind is None:
                raise UnboundVariable(f"unbound variable {e.name!r}")
            return bind.scheme, Var(e.name)
        if isinstance(e, EAnnot):
            return self.check_scheme(e.expr, e.scheme, env)
        if isinstance(e, EDictApp):
            return self.infer_dictapp(e, env)
        return None

    def infer_mono(self, e: SrcExpr, env: TypeEnv) -> tuple[Type, Term]:
        poly = self.infer_poly(e, env)
        if poly is not None:
            sch, t = poly
            return self.instantiate(sch, t)
        if isinstance(e, ELam):
            m = self.fresh_meta()
            bt, tb = self.infer_mono(e.body, env.bind(e.var, mono(m)))
            return Arrow(m, bt), Lam(e.var, m, tb)
        if isinstance(e, EApp):
            ft, tf = self.infer_mono(e.fn, env)
            at, ta = self.infer_mono(e.arg, env)
            res = self.fresh_meta()
            self.unify(ft, Arrow(at, res))
            return res, App(tf, ta)
        raise TypeError(f"infer_mono: not an expression: {e!r}")

    # -- explicit dictionary application

    def infer_dictapp(self, e: EDictApp, env: TypeEnv) -> tuple[Scheme, Term]:
        if isinstance(e.fn, EVar):
            bind = env.lookup_bind(e.fn.name)
            if bind is None:
                raise UnboundVariable(f"unbound variable {e.fn.name!r}")
            if not bind.declared:
                raise InvalidDictApp(
                    f"{e.fn.name!r} needs a signature to receive a dictionary")
            s1 = bind.scheme
            t1: Term = Var(e.fn.name)
        elif isinstance(e.fn, EAnnot):
            s1, t1 = self.check_scheme(e.fn.expr, e.fn.scheme, env)
            self._check_annotation_principal(e.fn, s1, env)
        else:
            raise InvalidDictApp(
                "a dictionary can only be passed to a variable with a "
                "signature or to an annotated expression")
        if not is_unambiguous(s1):
            raise AmbiguousPrincipalType(
                f"cannot pass a dictionary to an expression with ambiguous "
                f"type {pretty_scheme(s1)}")

        idx = next((i for i, c in enumerate(s1.qual.context) if c == e.at), None)
        if idx is None:
            raise InvalidDictApp(
                f"constraint {pretty_constraint(e.at)} does not occur in the "
                f"context of {pretty_scheme(s1)}")
        var_mode = (isinstance(e.at.arg, TyVar)
                    and e.at.arg.name in s1.quantified)
        if not var_mode and ftv(e.at.arg):
            raise InvalidDictApp(
                f"the 'as' constraint must name a quantified type variable "
                f"or be closed, got {pretty_constraint(e.at)}")

        # Rename the scheme apart so its variables cannot be confused with
        # enclosing skolems in the safety check.
        sr = rename_scheme_apart(s1, self.rigids | ftv(env))
        at = sr.qual.context[idx]
        c1 = sr.qual.context[:idx]
        c2 = sr.qual.context[idx + 1:]

        dt, td = self.infer_mono(e.dict, env)
        hole = self.fresh_meta()
        self.unify(dt, DictTy(at.cls, hole))

        self.safety_sites.append(
            _SafetySite(at, c1, c2, self._active_givens()))

        if var_mode:
            a = at.arg.name  # type: ignore[union-attr]
            tau2 = self.walk(hole)
            split = sr.quantified.index(a)
            b1 = sr.quantified[:split]
            b2 = sr.quantified[split + 1:]
            theta = {a: tau2}
            ctx = tuple(apply_ty_constraint(theta, c) for c in c1 + c2)
            body = apply_ty(theta, sr.qual.body)
            t = t1
            for b in b1:
                t = TyApp(t, TyVar(b))
            t = TyApp(t, tau2)
            for b in b2:
                t = TyApp(t, TyVar(b))
            inst_c1 = [apply_ty_constraint(theta, c) for c in c1]
            dlabels = [self.supply.fresh("d") for _ in inst_c1]
            for dl in dlabels:
                t = App(t, Var(dl))
            t = App(t, td)
            for dl, c in zip(reversed(dlabels), reversed(inst_c1)):
                t = Lam(dl, elab_constraint(c), t)
            for b in reversed(b1 + b2):
                t = TyLam(b, t)
            return Scheme(b1 + b2, QualType(ctx, body)), t

        self.unify(hole, at.arg)
        t = t1
        for b in sr.quantified:
            t = TyApp(t, TyVar(b))
        dlabels = [self.supply.fresh("d") for _ in c1]
        for dl in dlabels:
            t = App(t, Var(dl))
        t = App(t, td)
        for dl, c in zip(reversed(dlabels), reversed(c1)):
            t = Lam(dl, elab_constraint(c), t)
        for b in reversed(sr.quantified):
            t = TyLam(b, t)
        return Scheme(sr.quantified, QualType(c1 + c2, sr.qual.body)), t

    def _check_annotation_principal(self, annot: EAnnot, s1: Scheme,
                                    env: TypeEnv) -> None:
        principal = self.generalize_probe(annot.expr, env)
        empty = LabelledConstraints()
        if not (more_general(self.axioms, empty, principal, empty, s1,
                             self.options.solve_depth)
                and more_general(self.axioms, empty, s1, empty, principal,
                                 self.options.solve_depth)):
            raise InvalidDictApp(
                f"annotation {pretty_scheme(s1)} is not the principal type "
                f"(inferred {pretty_scheme(principal)})")

    def generalize_probe(self, e: SrcExpr, env: TypeEnv) -> Scheme:
        """Principal scheme of e in env, without committing its wanteds."""
        self.scopes.append(_Scope())
        try:
            t, _ = self.infer_mono(e, env)
            wanteds = LabelledConstraints(tuple(
                (lbl, self.zonk_constraint(c))
                for lbl, c in self.scopes[-1].wanteds))
            residual, _ = entailment.simplify(
                self.axioms, wanteds, self.options.solve_depth, self.supply)
            ctx = tuple(self.zonk_constraint(c) for c in residual.constraints())
            scheme, _ = self.generalized(self.zonk(t), ctx, None)
            return scheme
        finally:
            self.scopes.pop()

    # -- scheme checking (signatures and annotations)

    def check_scheme(self, e: SrcExpr, s: Scheme,
                     env: TypeEnv) -> tuple[Scheme, Term]:
        sr = rename_scheme_apart(s, self.rigids | ftv(env))
        self.rigids |= set(sr.quantified)

        given_entries = tuple((self.supply.fresh("d"), c)
                              for c in sr.qual.context)
        self.given_stack.append(given_entries)
        self.scopes.append(_Scope())
        outer_metas = len(self.meta_names)
        try:
            inferred, t = self.infer_mono(e, env)
            self.unify(inferred, sr.qual.body)
            self._check_skolem_escape(outer_metas, set(sr.quantified))
            givens = LabelledConstraints(given_entries)
            eta: dict[str, Term] = {}
            for label, c in self.scopes[-1].wanteds:
                eta[label] = self._discharge(givens, self.zonk_constraint(c))
            t = apply_ev(eta, t)
            self.used_givens |= fdv(t) & set(lbl for lbl, _ in given_entries)
        finally:
            self.scopes.pop()
            self.given_stack.pop()
        for label, c in reversed(given_entries):
            t = Lam(label, elab_constraint(c), t)
        for v in reversed(sr.quantified):
            t = TyLam(v, t)
        return sr, t

    def _discharge(self, givens: LabelledConstraints, c: Constraint) -> Term:
        """Discharge one wanted; route 0 is canonical (leftmost given, then
        axioms).  Alternative routes exist only for coherence exploration."""
        routes: list[Term] = []
        for label, g in givens:
            if g == c:
                routes.append(Var(label))
        axiom_route = self._solve_axiom_first(givens, c)
        if axiom_route is not None:
            routes.append(axiom_route)
        if not routes:
            raise UnsolvableConstraint(c)
        key = self.choice_counter
        self.choice_counter += 1
        self.choice_routes.append(len(routes))
        pick = self.forced.get(key, 0)
        if pick >= len(routes):
            raise IndexError(f"forced choice {pick} out of range at site {key}")
        return routes[pick]

    def _solve_axiom_first(self, givens: LabelledConstraints,
                           c: Constraint) -> Term | None:
        """Evidence via an axiom at the head (premises solved canonically)."""
        for ax in self.axioms:
            fresh, prems, head = entailment._freshen_axiom(ax)
            m: dict[str, Type] = {}
            if not entailment.match_constraint(head, c, set(fresh), m):
                continue
            if any(v not in m for v in fresh):
                continue
            ev: Term = Var(ax.name)
            for v in fresh:
                ev = TyApp(ev, m[v])
            try:
                for p in prems:
                    sub = solve(self.axioms, givens, apply_ty_constraint(m, p),
                                self.options.solve_depth)
                    ev = App(ev, sub.evidence)
            except (Unsolvable, DepthExceeded):
                return None
            return ev
        return None

    def _check_skolem_escape(self, outer_metas: int, skolems: set[str]) -> None:
        for name in self.meta_names[:outer_metas]:
            leaked = ftv(self.zonk(TyVar(name))) & skolems
            if leaked:
                raise UnificationFail(
                    f"type variable(s) {', '.join(sorted(leaked))} would "
                    f"escape their scope")

    def _active_givens(self) -> tuple[tuple[str, Constraint], ...]:
        out: list[tuple[str, Constraint]] = []
        for frame in self.given_stack:
            out.extend(frame)
        return tuple(out)

    # -- finalisation helpers

    def run_safety_checks(
            self, extra_q: tuple[tuple[str, Constraint], ...] = ()) -> None:
        if self.options.unsafe:
            return
        for site in self.safety_sites:
            entries = tuple((lbl, self.zonk_constraint(c))
                            for lbl, c in site.givens + extra_q)
            report = dictapp_safety(
                self.axioms, LabelledConstraints(entries),
                tuple(self.zonk_constraint(c) for c in site.c1),
                tuple(self.zonk_constraint(c) for c in site.c2),
                self.zonk_constraint(site.at),
                self.options.closure_depth, self.options.closure_cap,
                self.options.solve_depth)
            if report.verdict != "safe":
                raise SafetyViolation(report, self.zonk_constraint(site.at))

    def generalized(self, body: Type, ctx: tuple[Constraint, ...],
                    term: Term | None) -> tuple[Scheme, dict[str, Type]]:
        """Quantify metavariables of body, then ctx, then term, renamed to
        pretty letters; returns the scheme and the renaming."""
        order: list[str] = []
        for v in ftv_ordered(body) + ftv_ordered(tuple(ctx)):
            if self._is_meta(v) and v not in order:
                order.append(v)
        if term is not None:
            for v in _term_tyvars_ordered(term):
                if self._is_meta(v) and v not in order:
                    order.append(v)
        names = _pretty_tyvar_names(len(order), avoid=self.rigids)
        theta: dict[str, Type] = {m: TyVar(n) for m, n in zip(order, names)}
        new_ctx = tuple(apply_ty_constraint(theta, c) for c in ctx)
        return Scheme(tuple(names), QualType(new_ctx, apply_ty(theta, body))), theta


def _term_tyvars_ordered(t: Term) -> list[str]:
    out: list[str] = []
    seen: set[str] = set()

    def go_ty(ty: Type, bound: set[str]) -> None:
        for v in sorted(ftv(ty)) if isinstance(ty, Forall) else ftv_ordered(ty):
            if v not in bound and v not in seen:
                seen.add(v)
                out.append(v)

    def go(tm: Term, bound: set[str]) -> None:
        if isinstance(tm, Var):
            return
        if isinstance(tm, Lam):
            go_ty(tm.annot, bound)
            go(tm.body, bound)
        elif isinstance(tm, App):
            go(tm.fn, bound)
            go(tm.arg, bound)
        elif isinstance(tm, TyLam):
            go(tm.body, bound | {tm.var})
        elif isinstance(tm, TyApp):
            go(tm.fn, bound)
            go_ty(tm.arg, bound)

    go(t, set())
    return out


def _pretty_tyvar_names(n: int, avoid: set[str]) -> list[str]:
    out: list[str] = []
    alphabet = "abcdefghijklmnopqrstuvwxyz"
    i = 0
    while len(out) < n:
        base = alphabet[i % 26] + ("" if i < 26 else str(i // 26))
        if base not in avoid:
            out.append(base)
        i += 1
    return out


# ---------------------------------------------------------------------------
# Public operations

def _zonk_scheme(inf: Inferencer, s: Scheme) -> Scheme:
    return Scheme(s.quantified, QualType(
        tuple(inf.zonk_constraint(c) for c in s.qual.context),
        inf.zonk(s.qual.body)))


def infer(axioms: TopAxioms, env: TypeEnv, e: SrcExpr,
          options: Options | None = None) -> Derivation:
    """Typing with elaboration; wanted constraints are left as the residual."""
    inf = Inferencer(axioms, env, options)
    poly = inf.infer_poly(e, env)
    if poly is not None:
        sch, t = poly
    else:
        t_ty, t = inf.infer_mono(e, env)
        sch = mono(inf.zonk(t_ty))
    residual = LabelledConstraints(tuple(
        (lbl, inf.zonk_constraint(c)) for lbl, c in inf.scopes[-1].wanteds))
    inf.run_safety_checks(extra_q=residual.entries)
    return Derivation(residual, _zonk_scheme(inf, sch), inf.zonk_term(t),
                      frozenset(inf.used_givens))


def check_top(axioms: TopAxioms, env: TypeEnv, e: SrcExpr,
              sig: Scheme | None = None, options: Options | None = None,
              forced_choices: dict[int, int] | None = None,
              return_inferencer: bool = False):
    """Top-level typing: derive a monotype, simplify the wanteds against the
    axioms, generalise, and wrap the term in type and dictionary lambdas.
    With a signature, check against it instead and discharge the wanteds
    from the signature's context."""
    inf = Inferencer(axioms, env, options, forced_choices)
    if sig is not None:
        sr, t = inf.check_scheme(e, sig, env)
        inf.run_safety_checks()
        t = inf.zonk_term(t)
        _reject_leftover_metas(t)
        deriv = Derivation(LabelledConstraints(), _zonk_scheme(inf, sr), t,
                           frozenset(inf.used_givens))
        return (deriv, inf) if return_inferencer else deriv

    t_ty, t = inf.infer_mono(e, env)
    wanteds = LabelledConstraints(tuple(
        (lbl, inf.zonk_constraint(c)) for lbl, c in inf.scopes[-1].wanteds))
    inf.run_safety_checks(extra_q=wanteds.entries)
    residual, eta = entailment.simplify(axioms, wanteds,
                                        inf.options.solve_depth, inf.supply)
    residual_entries = tuple((lbl, inf.zonk_constraint(c)) for lbl, c in residual)
    t = inf.zonk_term(apply_ev(eta, t))
    scheme, theta = inf.generalized(
        inf.zonk(t_ty), tuple(c for _, c in residual_entries), t)
    t = apply_ty_term(theta, t)
    for lbl, c in reversed([(lbl, apply_ty_constraint(theta, c))
                            for lbl, c in residual_entries]):
        t = Lam(lbl, elab_constraint(c), t)
    for v in reversed(scheme.quantified):
        t = TyLam(v, t)
    _reject_leftover_metas(t)
    deriv = Derivation(LabelledConstraints(), scheme, t,
                       frozenset(inf.used_givens))
    return (deriv, inf) if return_inferencer else deriv


def _reject_leftover_metas(t: Term) -> None:
    metas = {v for v in free_tyvars_term(t) if v.startswith("?")}
    if metas:
        raise AmbiguousPrincipalType(
            "the type of this expression is underdetermined "
            f"(unresolved: {', '.join(sorted(metas))})")


# ---------------------------------------------------------------------------
# Whole-program checking

@dataclass(frozen=True)
class CheckedItem:
    kind: str  # "def" | "check"
    name: str
    sig: Scheme | None
    expr: SrcExpr
    derivation: Derivation


@dataclass(frozen=True)
class CheckedProgram:
    program: Program
    env: TypeEnv
    items: tuple[CheckedItem, ...]

    def item(self, name: str) -> CheckedItem | None:
        for it in self.items:
            if it.name == name:
                return it
        return None


class ProgramError(TypecheckError):
    def __init__(self, kind: str, name: str, cause: Exception) -> None:
        super().__init__(f"in {kind} {name!r}: {cause}")
        self.kind = kind
        self.name = name
        self.cause = cause


def load_program(program: Program,
                 options: Options | None = None) -> CheckedProgram:
    """Validate the axioms, then typecheck every def and check in order."""
    options = options or Options()
    validate_axioms(program.axioms)
    env = TypeEnv()
    for name, sch in reversed(program.prims):
        env = env.bind(name, sch, declared=True)
    items: list[CheckedItem] = []
    for name, sig, body in program.defs:
        try:
            deriv = check_top(program.axioms, env, body, sig, options)
        except TypecheckError as err:
            raise ProgramError("def", name, err) from err
        env = env.bind(name, deriv.scheme, declared=sig is not None)
        items.append(CheckedItem("def", name, sig, body, deriv))
    for name, body in program.checks:
        try:
            deriv = check_top(program.axioms, env, body, None, options)
        except TypecheckError as err:
            raise ProgramError("check", name, err) from err
        items.append(CheckedItem("check", name, None, body, deriv))
    return CheckedProgram(program, env, tuple(items))
