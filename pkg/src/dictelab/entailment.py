"""Evidence-producing constraint entailment.

Discharges wanted constraints from local givens and the top-level axioms,
building evidence terms (axiom names applied to types and sub-evidence).
Resolution is deterministic: givens are tried first, leftmost match wins,
and instance heads never overlap, so at most one axiom applies to any
wanted constraint.  Matching is one-way; free type variables of the
wanted constraint are rigid.
"""

from __future__ import annotations

from dataclasses import dataclass

from .syntax import (
    App, Arrow, AxiomScheme, Constraint, DictTy, LabelledConstraints,
    NameSupply, Term, TopAxioms, TyApp, TyCon, TyVar, Type, Var, apply_ty,
    apply_ty_constraint, ftv,
)

DEFAULT_SOLVE_DEPTH = 32
DEFAULT_CLOSURE_DEPTH = 5
DEFAULT_CLOSURE_CAP = 10_000


class Unsolvable(Exception):
    def __init__(self, constraint: Constraint) -> None:
        super().__init__(f"no derivation for constraint {constraint}")
        self.constraint = constraint


class DepthExceeded(Exception):
    """Recursion bound hit; likely non-terminating instance recursion."""


class ClosureExploded(Exception):
    """Derivable-constraint closure grew past its entry cap."""


class OverlappingInstances(Exception):
    def __init__(self, first: AxiomScheme, second: AxiomScheme) -> None:
        super().__init__(
            f"instance heads {first.head} ({first.name}) and "
            f"{second.head} ({second.name}) overlap")
        self.first = first
        self.second = second


@dataclass(frozen=True)
class SolveResult:
    evidence: Term
    steps: tuple[str, ...]


@dataclass(frozen=True)
class Closure:
    entries: tuple[tuple[Constraint, Term], ...]
    depth_reached: int
    truncated: bool

    def constraints(self) -> tuple[Constraint, ...]:
        return tuple(c for c, _ in self.entries)


# ---------------------------------------------------------------------------
# One-way matching (pattern variables bind, target is rigid)

def match_type(pattern: Type, target: Type, flex: set[str],
               subst: dict[str, Type]) -> bool:
    if isinstance(pattern, TyVar):
        if pattern.name in flex:
            if pattern.name in subst:
                return subst[pattern.name] == target
            subst[pattern.name] = target
            return True
        return isinstance(target, TyVar) and target.name == pattern.name
    if isinstance(pattern, TyCon):
        return (isinstance(target, TyCon) and target.name == pattern.name
                and len(target.args) == len(pattern.args)
                and all(match_type(p, t, flex, subst)
                        for p, t in zip(pattern.args, target.args)))
    if isinstance(pattern, Arrow):
        return (isinstance(target, Arrow)
                and match_type(pattern.dom, target.dom, flex, subst)
                and match_type(pattern.cod, target.cod, flex, subst))
    if isinstance(pattern, DictTy):
        return (isinstance(target, DictTy) and target.cls == pattern.cls
                and match_type(pattern.arg, target.arg, flex, subst))
    return False


def match_constraint(pattern: Constraint, target: Constraint, flex: set[str],
                     subst: dict[str, Type]) -> bool:
    return pattern.cls == target.cls and match_type(pattern.arg, target.arg,
                                                    flex, subst)


def _freshen_axiom(ax: AxiomScheme) -> tuple[list[str], list[Constraint], Constraint]:
    """Rename quantifiers apart from everything else (internal '~' names)."""
    ren = {v: TyVar(f"{v}~{i}") for i, v in enumerate(ax.quantified)}
    fresh = [f"{v}~{i}" for i, v in enumerate(ax.quantified)]
    prems = [apply_ty_constraint(ren, p) for p in ax.premises]
    head = apply_ty_constraint(ren, ax.head)
    return fresh, prems, head


# ---------------------------------------------------------------------------
# Full unification (both sides flexible) for the overlap check

def _walk(t: Type, subst: dict[str, Type]) -> Type:
    while isinstance(t, TyVar) and t.name in subst:
        t = subst[t.name]
    return t


def _unify(t1: Type, t2: Type, flex: set[str], subst: dict[str, Type]) -> bool:
    t1 = _walk(t1, subst)
    t2 = _walk(t2, subst)
    if isinstance(t1, TyVar) and isinstance(t2, TyVar) and t1.name == t2.name:
        return True
    if isinstance(t1, TyVar) and t1.name in flex:
        if t1.name in ftv(apply_ty(subst, t2)):
            return False
        subst[t1.name] = t2
        return True
    if isinstance(t2, TyVar) and t2.name in flex:
        return _unify(t2, t1, flex, subst)
    if isinstance(t1, TyCon) and isinstance(t2, TyCon):
        return (t1.name == t2.name and len(t1.args) == len(t2.args)
                and all(_unify(a, b, flex, subst)
                        for a, b in zip(t1.args, t2.args)))
    if isinstance(t1, Arrow) and isinstance(t2, Arrow):
        return (_unify(t1.dom, t2.dom, flex, subst)
                and _unify(t1.cod, t2.cod, flex, subst))
    if isinstance(t1, DictTy) and isinstance(t2, DictTy):
        return t1.cls == t2.cls and _unify(t1.arg, t2.arg, flex, subst)
    return False


def validate_axioms(axioms: TopAxioms) -> None:
    """Reject overlapping instance heads (after renaming apart)."""
    axs = list(axioms)
    for i, first in enumerate(axs):
        for second in axs[i + 1:]:
            f1, _, h1 = _freshen_axiom(first)
            ren2 = {v: TyVar(f"{v}~r{j}") for j, v in enumerate(second.quantified)}
            h2 = apply_ty_constraint(ren2, second.head)
            f2 = [f"{v}~r{j}" for j, v in enumerate(second.quantified)]
            if h1.cls != h2.cls:
                continue
            if _unify(h1.arg, h2.arg, set(f1) | set(f2), {}):
                raise OverlappingInstances(first, second)


# ---------------------------------------------------------------------------
# Solving

def solve(axioms: TopAxioms, givens: LabelledConstraints, wanted: Constraint,
          depth: int = DEFAULT_SOLVE_DEPTH) -> SolveResult:
    """Canonical evidence for a single wanted constraint.

    Deterministic: structurally equal inputs always produce the identical
    evidence term.
    """
    steps: list[str] = []
    ev = _solve(axioms, givens, wanted, depth, steps)
    return SolveResult(ev, tuple(steps))


def _solve(axioms: TopAxioms, givens: LabelledConstraints, wanted: Constraint,
           depth: int, steps: list[str]) -> Term:
    if depth <= 0:
        raise DepthExceeded(f"solver depth exhausted at {wanted}")
    for label, c in givens:
        if c == wanted:
            steps.append(f"given {label} : {c}")
            return Var(label)
    for ax in axioms:
        fresh, prems, head = _freshen_axiom(ax)
        m: dict[str, Type] = {}
        if not match_constraint(head, wanted, set(fresh), m):
            continue
        if any(v not in m for v in fresh):
            continue
        steps.append(f"axiom {ax.name} matches {wanted}")
        ev: Term = Var(ax.name)
        for v in fresh:
            ev = TyApp(ev, m[v])
        for p in prems:
            sub = _solve(axioms, givens, apply_ty_constraint(m, p),
                         depth - 1, steps)
            ev = App(ev, sub)
        return ev
    raise Unsolvable(wanted)


def solve_all(axioms: TopAxioms, givens: LabelledConstraints,
              wanteds: LabelledConstraints,
              depth: int = DEFAULT_SOLVE_DEPTH) -> dict[str, Term]:
    """Evidence substitution covering every wanted; fails on the first
    unsolvable member."""
    out: dict[str, Term] = {}
    for label, c in wanteds:
        out[label] = _solve(axioms, givens, c, depth, [])
    return out


def simplify(axioms: TopAxioms, wanteds: LabelledConstraints,
             depth: int = DEFAULT_SOLVE_DEPTH,
             supply: NameSupply | None = None
             ) -> tuple[LabelledConstraints, dict[str, Term]]:
    """Rewrite wanteds by the axioms until no head matches.

    Returns the residual constraints (deduplicated, reusing the original
    labels where possible) and a substitution mapping every wanted label to
    evidence over axiom names and residual labels.
    """
    if supply is None:
        supply = NameSupply(ax.name for ax in axioms)
        supply.forbid(wanteds.labels())
    residual: list[tuple[str, Constraint]] = []
    by_constraint: dict[Constraint, str] = {}

    def reduce(c: Constraint, d: int, keep_label: str | None) -> Term:
        if d <= 0:
            raise DepthExceeded(f"simplification depth exhausted at {c}")
        for ax in axioms:
            fresh, prems, head = _freshen_axiom(ax)
            m: dict[str, Type] = {}
            if not match_constraint(head, c, set(fresh), m):
                continue
            if any(v not in m for v in fresh):
                continue
            ev: Term = Var(ax.name)
            for v in fresh:
                ev = TyApp(ev, m[v])
            for p in prems:
                ev = App(ev, reduce(apply_ty_constraint(m, p), d - 1, None))
            return ev
        if c in by_constraint:
            return Var(by_constraint[c])
        label = keep_label if keep_label is not None else supply.fresh("d")
        by_constraint[c] = label
        residual.append((label, c))
        return Var(label)

    eta: dict[str, Term] = {}
    for label, c in wanteds:
        eta[label] = reduce(c, depth, label)
    return LabelledConstraints(tuple(residual)), eta


# ---------------------------------------------------------------------------
# Bounded forward closure of derivable constraints

def derivable_closure(axioms: TopAxioms, seeds: LabelledConstraints,
                      depth: int = DEFAULT_CLOSURE_DEPTH,
                      cap: int = DEFAULT_CLOSURE_CAP) -> Closure:
    """Forward-chain axioms whose premises all match current entries.

    Axiom variables are instantiated by matching premises against set
    members, so premise-free axioms never fire; entries always depend on
    the seeds.  ``truncated`` is set when the round at the depth bound was
    still adding entries.
    """
    if depth < 1:
        raise ValueError("closure depth must be at least 1")
    entries: dict[Constraint, Term] = {}
    for label, c in seeds:
        if c not in entries:
            entries[c] = Var(label)
    rounds_done = 0
    truncated = False
    for rnd in range(1, depth + 1):
        new: dict[Constraint, Term] = {}
        for ax in axioms:
            if not ax.premises:
                continue
            fresh, prems, head = _freshen_axiom(ax)
            for m in _premise_assignments(prems, list(entries), set(fresh), {}):
                if any(v not in m for v in fresh):
                    continue
                head_inst = apply_ty_constraint(m, head)
                if head_inst in entries or head_inst in new:
                    continue
                ev: Term = Var(ax.name)
                for v in fresh:
                    ev = TyApp(ev, m[v])
                for p in prems:
                    ev = App(ev, entries[apply_ty_constraint(m, p)])
                new[head_inst] = ev
        if not new:
            break
        entries.update(new)
        rounds_done = rnd
        if len(entries) > cap:
            raise ClosureExploded(f"closure exceeded {cap} entries")
    else:
        truncated = True
    return Closure(tuple(entries.items()), rounds_done, truncated)


def _premise_assignments(prems: list[Constraint], pool: list[Constraint],
                         flex: set[str], acc: dict[str, Type]):
    """All ways to match every premise against pool members, in pool order."""
    if not prems:
        yield dict(acc)
        return
    first, rest = prems[0], prems[1:]
    for cand in pool:
        m = dict(acc)
        if match_constraint(first, cand, flex, m):
            yield from _premise_assignments(rest, pool, flex, m)
