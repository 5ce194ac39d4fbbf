"""Generalized fact labels over a commutative semiring.

Probabilities are one instance of a labeling scheme: facts carry values,
conjunction multiplies them, alternatives add them. Swapping the algebra
turns the same program into a different computation: booleans give plain
reachability, (min, +) gives shortest paths, (max, *) gives best single
worlds, counting gives model counts.

Two evaluation styles with different semantics:

- world-based (``aproblog_eval``): the label of a query is the sum over
  possible worlds entailing it of the product of per-event labels, with
  absent facts contributing their complement label. With the probability
  semiring this is exactly the success probability.
- derivation-based (``fixpoint_eval``): forward chaining where a head
  label is the sum over clause groundings of the product of body labels,
  iterated to a fixpoint on an agenda. Derivations are not required to
  be disjoint, so probabilities here mean derivation mass, not truth.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import worlds as W
from .approx import _as_lits, _deny
from .errors import BudgetExceeded, CapabilityError, InferenceError, PlpError
from .exact import program_features
from .logic import BUILTINS, Budget, DEFAULT_BUDGET, Database, Solver, \
    arith_eval, least_model
from .syntax import AnnotatedDisjunction, Clause, LabelDecl, ProbFact, Program
from .terms import Atom, Const, atom_is_ground, format_atom, format_term, \
    resolve_atom, unify_atoms

DEFAULT_AGENDA_BUDGET = 100_000


def _float_eq(a, b) -> bool:
    return a == b or abs(a - b) <= 1e-12


@dataclass(frozen=True)
class Semiring:
    """A structure (A, add, mul, zero, one) with the usual laws: add is
    associative and commutative, mul associative and distributing over
    add, zero absorbs mul, zero/one are the neutral elements.

    The optional hooks tie the algebra to programs: from_term reads a
    label written in a label() declaration, from_prob embeds the label
    of a probabilistic statement outcome, complement labels the absence
    of a fact in a world. check_axioms probes the laws on sample values.
    """

    name: str
    add: Callable
    mul: Callable
    zero: object
    one: object
    from_term: Callable
    commutative_mul: bool = True
    idempotent_add: bool = False
    complement: Optional[Callable] = None
    from_prob: Optional[Callable] = None
    eq: Callable = field(default=lambda a, b: a == b)

    def sum(self, values):
        acc = self.zero
        for v in values:
            acc = self.add(acc, v)
        return acc

    def product(self, values):
        acc = self.one
        for v in values:
            acc = self.mul(acc, v)
        return acc

    def check_axioms(self, values) -> list:
        """Law violations over all triples from the sample values."""
        bad = []

        def expect(cond: bool, msg: str):
            if not cond and msg not in bad:
                bad.append(msg)

        vals = list(values)
        for a in vals:
            expect(self.eq(self.add(a, self.zero), a), "zero not add-neutral")
            expect(self.eq(self.mul(a, self.one), a), "one not mul-neutral")
            expect(self.eq(self.mul(self.one, a), a), "one not mul-neutral")
            expect(self.eq(self.mul(a, self.zero), self.zero),
                   "zero not absorbing")
            expect(self.eq(self.mul(self.zero, a), self.zero),
                   "zero not absorbing")
            if self.idempotent_add:
                expect(self.eq(self.add(a, a), a), "add not idempotent")
        for a in vals:
            for b in vals:
                expect(self.eq(self.add(a, b), self.add(b, a)),
                       "add not commutative")
                if self.commutative_mul:
                    expect(self.eq(self.mul(a, b), self.mul(b, a)),
                           "mul not commutative")
                for c in vals:
                    expect(self.eq(self.add(self.add(a, b), c),
                                   self.add(a, self.add(b, c))),
                           "add not associative")
                    expect(self.eq(self.mul(self.mul(a, b), c),
                                   self.mul(a, self.mul(b, c))),
                           "mul not associative")
                    expect(self.eq(self.mul(a, self.add(b, c)),
                                   self.add(self.mul(a, b), self.mul(a, c))),
                           "mul does not left-distribute")
                    expect(self.eq(self.mul(self.add(b, c), a),
                                   self.add(self.mul(b, a), self.mul(c, a))),
                           "mul does not right-distribute")
        return bad


def _numeric(term) -> float:
    try:
        v = arith_eval(term, {})
    except PlpError:
        raise InferenceError(
            f"label {format_term(term)} is not a number")
    return float(v)


def _bool_term(term) -> bool:
    if isinstance(term, Const):
        if term.value in ("true", "t", True):
            return True
        if term.value in ("false", "f", False):
            return False
    raise InferenceError(
        f"label {format_term(term)} is not true/false")


def _int_term(term) -> int:
    v = _numeric(term)
    if v != int(v):
        raise InferenceError(
            f"label {format_term(term)} is not an integer")
    return int(v)


SEMIRINGS = {
    "bool": Semiring(
        name="bool", add=lambda a, b: a or b, mul=lambda a, b: a and b,
        zero=False, one=True, from_term=_bool_term,
        idempotent_add=True, complement=lambda v: not v,
        from_prob=lambda p: p > 0.0),
    "prob": Semiring(
        name="prob", add=lambda a, b: a + b, mul=lambda a, b: a * b,
        zero=0.0, one=1.0, from_term=_numeric,
        complement=lambda v: 1.0 - v, from_prob=float, eq=_float_eq),
    "minplus": Semiring(
        name="minplus", add=min, mul=lambda a, b: a + b,
        zero=math.inf, one=0.0, from_term=_numeric,
        idempotent_add=True, eq=_float_eq),
    "maxtimes": Semiring(
        name="maxtimes", add=max, mul=lambda a, b: a * b,
        zero=0.0, one=1.0, from_term=_numeric,
        idempotent_add=True, complement=lambda v: 1.0 - v,
        from_prob=float, eq=_float_eq),
    # every world (or derivation) counts once; the complement keeps
    # absent facts from suppressing a world, so queries count models
    "count": Semiring(
        name="count", add=lambda a, b: a + b, mul=lambda a, b: a * b,
        zero=0, one=1, from_term=_int_term,
        complement=lambda v: 1, from_prob=lambda p: 1),
}


def get_semiring(name: str) -> Semiring:
    try:
        return SEMIRINGS[name]
    except KeyError:
        known = ", ".join(sorted(SEMIRINGS))
        raise InferenceError(f"unknown semiring {name!r} (have {known})")


def labeled_facts(program: Program, s: Semiring) -> list:
    """(atom, label, negative label) for each label() declaration.

    The negative label comes from the declaration itself when written,
    else from the semiring's complement, else None: such facts can only
    appear positively.
    """
    out = []
    for d in program.labels:
        pos = s.from_term(d.value)
        if d.neg_value is not None:
            neg = s.from_term(d.neg_value)
        elif s.complement is not None:
            neg = s.complement(pos)
        else:
            neg = None
        out.append((d.atom, pos, neg))
    return out


# ---------------------------------------------------------------------------
# world-based evaluation

def aproblog_eval(program: Program, query, s: Semiring,
                  budget_limit: int = DEFAULT_BUDGET,
                  cap: int = W.WORLD_CAP):
    """Label of the query: sum over worlds entailing it of the product
    of event labels in that world.

    Probabilistic statements contribute through the semiring's
    probability embedding, one factor per chosen outcome. Labeled facts
    toggle independently, an absent fact contributing its negative
    label. Plain facts and rules shape world truth without a factor.
    """
    if not s.commutative_mul:
        raise InferenceError(
            "world products need a commutative semiring, "
            f"{s.name} is not")
    feats = program_features(program)
    _deny("semiring-world", feats,
          ("flexible", "meta", "demem", "distributional", "constraints"))
    labeled = labeled_facts(program, s)
    for atom, _pos, neg in labeled:
        if neg is None and "negation" in feats:
            raise CapabilityError(
                "semiring-world", "negation as failure",
                f"{s.name} has no complement for absent {format_atom(atom)}")
    has_prob = bool(program.prob_facts or program.ads)
    if has_prob and s.from_prob is None:
        raise CapabilityError(
            "semiring-world", "probabilistic facts",
            f"{s.name} has no probability embedding")
    if labeled and any(st.body for st in program.prob_facts + program.ads):
        raise InferenceError(
            "labeled facts cannot combine with bodied probabilistic "
            "statements: grounding would not see them")

    stripped = Program(tuple(st for st in program.statements
                             if not isinstance(st, LabelDecl)))
    gp = W.ground(stripped, engine="semiring-world")
    poss = W.enumerate_worlds(gp, cap)
    if labeled and (1 << len(labeled)) > max(1, cap // max(1, len(poss))):
        raise BudgetExceeded("world count", cap)
    by_index = {f.index: f for f in gp.families}
    q_lits = _as_lits(query)
    # definite programs get total forward closure, immune to rule
    # recursion shapes SLD cannot handle; negation needs backward proof
    closed = "negation" not in feats and "findall" not in feats

    def entails(facts) -> bool:
        if closed:
            model = least_model(gp.rules, facts)
            db = Database((), model)
        else:
            db = Database(gp.rules, facts)
        return Solver(db, Budget(budget_limit),
                      engine="semiring-world").prove(q_lits)

    acc = s.zero
    for w in poss:
        wlabel = s.one
        for fi, outcome in w.assignment:
            fam = by_index[fi]
            wlabel = s.mul(wlabel, s.from_prob(fam.probs[outcome]))
        base_facts = tuple(gp.det_facts) + tuple(w.true_atoms)
        for mask in range(1 << len(labeled)):
            label = wlabel
            chosen = []
            for i, (atom, pos, neg) in enumerate(labeled):
                if mask & (1 << i):
                    label = s.mul(label, pos)
                    chosen.append(atom)
                else:
                    label = s.mul(label, neg if neg is not None else s.one)
            if entails(base_facts + tuple(chosen)):
                acc = s.add(acc, label)
    return acc


# ---------------------------------------------------------------------------
# derivation-based evaluation

def _base_labels(program: Program, s: Semiring, engine: str) -> dict:
    base: dict = {}

    def put(atom: Atom, value):
        base[atom] = s.add(base[atom], value) if atom in base else value

    for atom, pos, _neg in labeled_facts(program, s):
        put(atom, pos)
    for st in program.statements:
        if isinstance(st, Clause) and not st.body:
            if not atom_is_ground(st.head):
                raise InferenceError(
                    f"fact {format_atom(st.head)} is not ground")
            put(st.head, s.one)
        elif isinstance(st, ProbFact):
            if st.body:
                raise CapabilityError(
                    engine, "probabilistic clauses with bodies",
                    "label the outcome as a fact and derive the rest")
            if s.from_prob is None:
                raise CapabilityError(
                    engine, "probabilistic facts",
                    f"{s.name} has no probability embedding")
            if not atom_is_ground(st.atom) or not isinstance(st.label, Const):
                raise InferenceError(
                    f"cannot label {format_atom(st.atom)}: instance unclear")
            put(st.atom, s.from_prob(float(st.label.value)))
        elif isinstance(st, AnnotatedDisjunction):
            raise CapabilityError(
                engine, "annotated disjunctions",
                "split the choice into labeled facts first")
    return base


def fixpoint_eval(program: Program, s: Semiring,
                  budget: int = DEFAULT_AGENDA_BUDGET,
                  rng=None) -> dict:
    """Forward agenda evaluation: map from each derivable ground atom to
    its label, where a head label is the add-sum over clause groundings
    of the mul-product of body labels.

    Facts seed the agenda; updating an atom reopens every rule that uses
    it. Converges when labels stop changing, subject to the agenda
    budget: cyclic programs under non-idempotent addition do not settle
    and trip it instead. rng, when given, randomizes pop order (the
    result must not depend on it for commutative idempotent semirings).
    """
    feats = program_features(program)
    _deny("semiring-fix", feats,
          ("negation", "flexible", "meta", "demem", "findall",
           "distributional", "constraints"))
    labels = _base_labels(program, s, "semiring-fix")
    index: dict = {}
    for a in labels:
        index.setdefault(a.indicator, []).append(a)

    rules = [st for st in program.statements
             if isinstance(st, Clause) and st.body]
    by_body: dict = {}
    by_head: dict = {}
    for r in rules:
        by_head.setdefault(r.head.indicator, []).append(r)
        for l in r.body:
            if l.atom.indicator in BUILTINS:
                continue
            by_body.setdefault(l.atom.indicator, []).append(r)

    def join(body, sub, prod):
        """Ground the body against current labels, yielding
        (substitution, product of body labels)."""
        if not body:
            yield sub, prod
            return
        lit, rest = body[0], body[1:]
        a = resolve_atom(lit.atom, sub)
        ind = a.indicator
        if a.pred == "true" and not a.args:
            yield from join(rest, sub, prod)
            return
        if a.pred in ("fail", "false") and not a.args:
            return
        if ind in BUILTINS:
            for s2 in BUILTINS[ind](a.args, sub, None):
                yield from join(rest, s2, prod)
            return
        for cand in index.get(ind, ()):
            s2 = unify_atoms(a, cand, sub)
            if s2 is not None:
                yield from join(rest, s2, s.mul(prod, labels[cand]))

    agenda: deque = deque()
    pending: set = set()
    fact_label = dict(labels)

    def push(atom: Atom):
        if atom not in pending:
            pending.add(atom)
            agenda.append(atom)

    def recompute(h: Atom):
        acc = fact_label.get(h)
        for r in by_head.get(h.indicator, ()):
            s0 = unify_atoms(r.head, h, {})
            if s0 is None:
                continue
            for _sub, prod in join(r.body, s0, s.one):
                acc = prod if acc is None else s.add(acc, prod)
        if acc is None:
            return
        old = labels.get(h)
        if old is None:
            labels[h] = acc
            index.setdefault(h.indicator, []).append(h)
            push(h)
        elif not s.eq(old, acc):
            labels[h] = acc
            push(h)

    for a in list(labels):
        push(a)
    # rules needing no facts (builtin-only bodies) fire immediately
    for r in rules:
        for sub, _prod in join(r.body, {}, s.one):
            h = resolve_atom(r.head, sub)
            if not atom_is_ground(h):
                raise InferenceError(
                    f"derived head {format_atom(h)} is not ground")
            recompute(h)

    pops = 0
    while agenda:
        pops += 1
        if pops > budget:
            raise BudgetExceeded("semiring fixpoint", budget)
        if rng is None:
            atom = agenda.popleft()
        else:
            i = rng.randrange(len(agenda))
            agenda.rotate(-i)
            atom = agenda.popleft()
            agenda.rotate(i)
        pending.discard(atom)
        heads = []
        for r in by_body.get(atom.indicator, ()):
            for sub, _prod in join(r.body, {}, s.one):
                h = resolve_atom(r.head, sub)
                if not atom_is_ground(h):
                    raise InferenceError(
                        f"derived head {format_atom(h)} is not ground")
                if h not in heads:
                    heads.append(h)
        for h in heads:
            recompute(h)
    return labels


def boolean_model(program: Program) -> frozenset:
    """Atoms the boolean fixpoint marks true; agrees with the least
    model of the corresponding definite program."""
    result = fixpoint_eval(program, SEMIRINGS["bool"])
    return frozenset(a for a, v in result.items() if v)
