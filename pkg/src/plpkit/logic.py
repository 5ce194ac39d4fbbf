"""Logical core: SLDNF resolution, least models, stratification.

The prover works over a Database of definite rules plus a bag of ground
facts. It is deterministic: clauses are tried in declaration order, facts in
insertion order, so every engine built on top inherits reproducible
enumeration order. Ground goals are loop-checked against their ancestor
goals, which turns positive cycles (path through a cyclic graph, p :- p)
into finite failure instead of runaway recursion; the step budget backstops
everything else.

Negation is negation-as-failure on ground subgoals. Stratification is
checked separately (predicate-level) by engines that promise canonical-model
semantics.
"""

from __future__ import annotations

from typing import Callable, Iterator, Optional

from .errors import BudgetExceeded, CapabilityError, InferenceError
from .syntax import Clause
from .terms import (Atom, Const, Literal, Struct, Term, Var, atom_is_ground,
                    canon, format_atom, format_term, is_ground, list_items,
                    make_list, rename_atom, resolve, resolve_atom, term_to_atom,
                    unify, unify_atoms, walk)

DEFAULT_BUDGET = 10 ** 6


class Budget:
    """Shared countdown over resolution steps."""

    __slots__ = ("remaining", "limit")

    def __init__(self, limit: int = DEFAULT_BUDGET):
        self.remaining = limit
        self.limit = limit

    def spend(self):
        self.remaining -= 1
        if self.remaining < 0:
            raise BudgetExceeded("resolution step", self.limit)


# ---------------------------------------------------------------------------
# arithmetic

def arith_eval(t: Term, s: dict):
    t = walk(t, s)
    if isinstance(t, Const):
        if isinstance(t.value, (int, float)):
            return t.value
        raise InferenceError(f"arithmetic on non-number {format_term(t)}")
    if isinstance(t, Var):
        raise InferenceError("arithmetic on unbound variable")
    if isinstance(t, Struct):
        f = t.functor
        if len(t.args) == 1 and f == "-":
            return -arith_eval(t.args[0], s)
        if len(t.args) == 2:
            a = arith_eval(t.args[0], s)
            b = arith_eval(t.args[1], s)
            if f == "+":
                return a + b
            if f == "-":
                return a - b
            if f == "*":
                return a * b
            if f == "/":
                if b == 0:
                    raise InferenceError("division by zero")
                out = a / b
                # keep exact integer division integral, Prolog-style enough
                if isinstance(a, int) and isinstance(b, int) and a % b == 0:
                    return a // b
                return out
            if f == "//":
                if b == 0:
                    raise InferenceError("division by zero")
                return a // b
            if f == "mod":
                if b == 0:
                    raise InferenceError("division by zero")
                return a % b
            if f == "min":
                return min(a, b)
            if f == "max":
                return max(a, b)
    raise InferenceError(f"cannot evaluate {format_term(resolve(t, s))}")


def _num(v) -> Const:
    return Const(v)


# ---------------------------------------------------------------------------
# database

class Database:
    """Rules indexed by predicate indicator plus ground extra facts."""

    def __init__(self, clauses=(), facts=()):
        self.rules: dict = {}
        self.fact_index: dict = {}
        self.fact_set: set = set()
        for c in clauses:
            self.add_clause(c)
        for a in facts:
            self.add_fact(a)

    def add_clause(self, c: Clause):
        if not c.body and atom_is_ground(c.head):
            self.add_fact(c.head)
            return
        self.rules.setdefault(c.head.indicator, []).append(c)

    def add_fact(self, a: Atom):
        if a in self.fact_set:
            return
        self.fact_set.add(a)
        self.fact_index.setdefault(a.indicator, []).append(a)

    def remove_fact(self, a: Atom):
        if a in self.fact_set:
            self.fact_set.discard(a)
            self.fact_index[a.indicator].remove(a)

    def clauses_for(self, indicator: str):
        return self.rules.get(indicator, ())

    def facts_for(self, indicator: str):
        return self.fact_index.get(indicator, ())


# ---------------------------------------------------------------------------
# builtins
#
# Each builtin receives the resolved argument tuple, the substitution, and
# the running Solver, and yields extended substitutions.

def _bi_unify(args, s, solver):
    s2 = unify(args[0], args[1], s)
    if s2 is not None:
        yield s2


def _bi_not_unify(args, s, solver):
    if unify(args[0], args[1], s) is None:
        yield s


def _bi_eq(args, s, solver):
    if resolve(args[0], s) == resolve(args[1], s):
        yield s


def _bi_neq(args, s, solver):
    if resolve(args[0], s) != resolve(args[1], s):
        yield s


def _bi_is(args, s, solver):
    v = arith_eval(args[1], s)
    s2 = unify(args[0], _num(v), s)
    if s2 is not None:
        yield s2


def _cmp(op):
    def run(args, s, solver):
        a = arith_eval(args[0], s)
        b = arith_eval(args[1], s)
        if op(a, b):
            yield s
    return run


def _bi_between(args, s, solver):
    lo = arith_eval(args[0], s)
    hi = arith_eval(args[1], s)
    x = walk(args[2], s)
    if isinstance(x, Const):
        if isinstance(x.value, int) and lo <= x.value <= hi:
            yield s
        return
    if not isinstance(x, Var):
        return
    for v in range(int(lo), int(hi) + 1):
        s2 = unify(x, Const(v), s)
        if s2 is not None:
            yield s2


def _bi_length(args, s, solver):
    items = list_items(args[0], s)
    if items is None:
        raise InferenceError("length/2 needs a proper list")
    s2 = unify(args[1], Const(len(items)), s)
    if s2 is not None:
        yield s2


def _bi_sum_list(args, s, solver):
    items = list_items(args[0], s)
    if items is None:
        raise InferenceError("sum_list/2 needs a proper list")
    total = 0
    for it in items:
        if not (isinstance(it, Const) and isinstance(it.value, (int, float))):
            raise InferenceError("sum_list/2 over non-numbers")
        total += it.value
    s2 = unify(args[1], Const(total), s)
    if s2 is not None:
        yield s2


def _bi_member(args, s, solver):
    items = list_items(args[1], s)
    if items is None:
        raise InferenceError("member/2 needs a proper list")
    for it in items:
        s2 = unify(args[0], it, s)
        if s2 is not None:
            yield s2


def _bi_findall(args, s, solver):
    template, goal_t, out = args
    goals = goal_term_to_literals(resolve(goal_t, s))
    results = []
    for s2 in solver.solve(goals, s):
        results.append(resolve(template, s2))
    s3 = unify(out, make_list(results), s)
    if s3 is not None:
        yield s3


def _bi_minmax(fn):
    def run(args, s, solver):
        a = arith_eval(args[0], s)
        b = arith_eval(args[1], s)
        s2 = unify(args[2], _num(fn(a, b)), s)
        if s2 is not None:
            yield s2
    return run


BUILTINS: dict = {
    "=/2": _bi_unify,
    "\\=/2": _bi_not_unify,
    "==/2": _bi_eq,
    "\\==/2": _bi_neq,
    "is/2": _bi_is,
    "</2": _cmp(lambda a, b: a < b),
    ">/2": _cmp(lambda a, b: a > b),
    "=</2": _cmp(lambda a, b: a <= b),
    ">=/2": _cmp(lambda a, b: a >= b),
    "=:=/2": _cmp(lambda a, b: a == b),
    "=\\=/2": _cmp(lambda a, b: a != b),
    "between/3": _bi_between,
    "length/2": _bi_length,
    "sum_list/2": _bi_sum_list,
    "member/2": _bi_member,
    "findall/3": _bi_findall,
    "max/3": _bi_minmax(max),
    "min/3": _bi_minmax(min),
}


def is_builtin(a: Atom) -> bool:
    return a.indicator in BUILTINS or a.pred in ("true", "fail", "false")


# inputs a builtin needs bound before it can run: argument positions that
# feed arith_eval, or the position that must hold a proper list
_NEEDS_GROUND = {
    "is/2": (1,),
    "</2": (0, 1), ">/2": (0, 1), "=</2": (0, 1), ">=/2": (0, 1),
    "=:=/2": (0, 1), "=\\=/2": (0, 1),
    "between/3": (0, 1),
    "max/3": (0, 1), "min/3": (0, 1),
}
_NEEDS_LIST = {"length/2": 0, "sum_list/2": 0, "member/2": 1}


def builtin_ready(a: Atom) -> bool:
    """Whether a builtin goal's inputs are bound enough to evaluate it.

    Bottom-up matchers join body literals out of declaration order; they use
    this to postpone a builtin until other literals have bound its inputs
    (e.g. `T < L` written before the literal that binds T). The atom must
    already be resolved against the current substitution.
    """
    need = _NEEDS_GROUND.get(a.indicator)
    if need is not None:
        return all(is_ground(a.args[i]) for i in need)
    pos = _NEEDS_LIST.get(a.indicator)
    if pos is not None:
        return list_items(a.args[pos]) is not None
    return True


def goal_term_to_literals(t: Term) -> tuple:
    """Turn a (possibly conjunctive) goal term into a literal tuple."""
    if isinstance(t, Struct) and t.functor == "," and len(t.args) == 2:
        return (goal_term_to_literals(t.args[0])
                + goal_term_to_literals(t.args[1]))
    if isinstance(t, Struct) and t.functor == "not" and len(t.args) == 1:
        a = term_to_atom(t.args[0])
        if a is None:
            raise InferenceError(f"bad negated goal {format_term(t)}")
        return (Literal(a, negated=True),)
    a = term_to_atom(t)
    if a is None:
        raise InferenceError(f"bad goal term {format_term(t)}")
    return (Literal(a),)


# ---------------------------------------------------------------------------
# val() outcome references (distributional programs)

def contains_val(t) -> bool:
    if isinstance(t, Atom):
        return any(contains_val(a) for a in t.args)
    if isinstance(t, Struct):
        if t.functor == "val" and len(t.args) == 1:
            return True
        return any(contains_val(a) for a in t.args)
    return False


def rewrite_vals_term(t: Term, s: dict, resolver) -> Term:
    t = walk(t, s)
    if isinstance(t, Struct):
        if t.functor == "val" and len(t.args) == 1:
            inner = resolve(t.args[0], s)
            if not is_ground(inner):
                raise InferenceError(
                    f"val argument {format_term(inner)} is not ground")
            return resolver(inner)
        return Struct(t.functor,
                      tuple(rewrite_vals_term(a, s, resolver)
                            for a in t.args))
    return t


def rewrite_vals_atom(a: Atom, s: dict, resolver) -> Atom:
    if not a.args:
        return a
    return Atom(a.pred, tuple(rewrite_vals_term(t, s, resolver)
                              for t in a.args))


# ---------------------------------------------------------------------------
# solver

class Solver:
    """SLDNF prover.

    meta_handler(atom, s, solver) services prob/2 goals when an engine
    supports them; rv_resolver maps ground random-variable terms to outcome
    constants for val() rewriting. Both default to capability errors.
    """

    def __init__(self, db: Database, budget: Optional[Budget] = None,
                 engine: str = "logic",
                 meta_handler: Optional[Callable] = None,
                 rv_resolver: Optional[Callable] = None):
        self.db = db
        self.budget = budget or Budget()
        self.engine = engine
        self.meta_handler = meta_handler
        self.rv_resolver = rv_resolver
        self._rename_count = 0

    # goals are (Literal, ancestors) pairs internally; ancestors is a
    # frozenset of canonical ground goal strings on the current proof path
    def solve(self, goals, s: Optional[dict] = None) -> Iterator[dict]:
        if s is None:
            s = {}
        entries = tuple((g, frozenset()) if isinstance(g, Literal)
                        else g for g in goals)
        yield from self._run(entries, s)

    def prove(self, goals, s: Optional[dict] = None) -> bool:
        for _ in self.solve(goals, s):
            return True
        return False

    def _run(self, entries, s) -> Iterator[dict]:
        if not entries:
            yield s
            return
        (lit, anc), rest = entries[0], entries[1:]
        atom = resolve_atom(lit.atom, s)
        if contains_val(atom):
            if self.rv_resolver is None:
                raise CapabilityError(self.engine, "distributional clauses",
                                      f"val() in {format_atom(atom)}")
            atom = rewrite_vals_atom(atom, s, self.rv_resolver)
        if lit.negated:
            if not atom_is_ground(atom):
                raise InferenceError(
                    f"negated goal {format_atom(atom)} is not ground")
            if self._provable(atom, s):
                return
            yield from self._run(rest, s)
            return
        for s2 in self._solve_atom(atom, s, anc):
            yield from self._run(rest, s2)

    def _provable(self, atom: Atom, s: dict) -> bool:
        for _ in self._run(((Literal(atom), frozenset()),), s):
            return True
        return False

    def _solve_atom(self, atom: Atom, s: dict, anc) -> Iterator[dict]:
        self.budget.spend()
        ind = atom.indicator
        if atom.pred == "true" and not atom.args:
            yield s
            return
        if (atom.pred == "fail" or atom.pred == "false") and not atom.args:
            return
        if ind in BUILTINS:
            yield from BUILTINS[ind](atom.args, s, self)
            return
        if ind == "prob/2":
            if self.meta_handler is None:
                raise CapabilityError(self.engine, "meta-calls",
                                      format_atom(atom))
            yield from self.meta_handler(atom, s, self)
            return
        ground_goal = atom_is_ground(atom)
        key = canon(atom) if ground_goal else None
        if key is not None and key in anc:
            return  # positive loop: fail finitely
        child_anc = anc | {key} if key is not None else anc
        for fact in self.db.facts_for(ind):
            s2 = unify_atoms(atom, fact, s)
            if s2 is not None:
                yield s2
        for clause in self.db.clauses_for(ind):
            mapping: dict = {}
            head = rename_atom(clause.head, mapping)
            s2 = unify_atoms(atom, head, s)
            if s2 is None:
                continue
            body = tuple(
                (Literal(rename_atom(l.atom, mapping), l.negated), child_anc)
                for l in clause.body)
            yield from self._run(body, s2)


def sldnf_entails(clauses, facts, q, budget_limit: int = DEFAULT_BUDGET,
                  engine: str = "logic") -> bool:
    """True iff the ground query holds in the canonical model of the
    stratified program given by clauses + facts."""
    db = clauses if isinstance(clauses, Database) else Database(clauses, facts)
    solver = Solver(db, Budget(budget_limit), engine=engine)
    goals = (q,) if isinstance(q, Literal) else (Literal(q),)
    return solver.prove(goals)


# ---------------------------------------------------------------------------
# least model (definite programs)

def least_model(clauses, facts=()) -> frozenset:
    """Least Herbrand model of a definite program, by naive iteration.

    Clauses may contain variables; bodies are joined against the model built
    so far. Builtin literals other than findall are evaluated. Negation is
    rejected: that is what the canonical-model machinery is for.
    """
    model: set = set()
    index: dict = {}

    def add(a: Atom) -> bool:
        if a in model:
            return False
        model.add(a)
        index.setdefault(a.indicator, []).append(a)
        return True

    rules = []
    for c in clauses:
        for l in c.body:
            if l.negated:
                raise InferenceError(
                    "least_model is defined for definite programs only")
        if not c.body and atom_is_ground(c.head):
            add(c.head)
        else:
            rules.append(c)
    for a in facts:
        add(a)

    def match(body, s):
        if not body:
            yield s
            return
        pick = 0
        for i, l in enumerate(body):
            a = resolve_atom(l.atom, s)
            if a.indicator in BUILTINS and not builtin_ready(a):
                pick = None
                continue
            pick = i
            break
        if pick is None:
            a = resolve_atom(body[0].atom, s)
            raise InferenceError(
                f"cannot order body builtins: inputs of {format_atom(a)} "
                "stay unbound")
        lit = body[pick]
        rest = body[:pick] + body[pick + 1:]
        a = resolve_atom(lit.atom, s)
        if a.indicator in BUILTINS:
            if a.indicator == "findall/3":
                raise InferenceError("least_model cannot evaluate findall/3")
            for s2 in BUILTINS[a.indicator](a.args, s, None):
                yield from match(rest, s2)
            return
        if a.pred == "true" and not a.args:
            yield from match(rest, s)
            return
        for cand in index.get(a.indicator, ()):
            s2 = unify_atoms(a, cand, s)
            if s2 is not None:
                yield from match(rest, s2)

    changed = True
    while changed:
        changed = False
        for c in rules:
            mapping: dict = {}
            head = rename_atom(c.head, mapping)
            body = tuple(Literal(rename_atom(l.atom, mapping), l.negated)
                         for l in c.body)
            for s in match(body, {}):
                inst = resolve_atom(head, s)
                if not atom_is_ground(inst):
                    raise InferenceError(
                        f"unbound head {format_atom(inst)} in least model "
                        "computation")
                if add(inst):
                    changed = True
    return frozenset(model)


# ---------------------------------------------------------------------------
# stratification

def stratify_check(clauses, engine: str = "logic"):
    """Raise unless the predicate dependency graph is stratified (no cycle
    through a negative edge). Returns predicate strata in evaluation order."""
    preds = set()
    pos_edges: dict = {}
    neg_edges: dict = {}
    for c in clauses:
        h = c.head.indicator
        preds.add(h)
        for l in c.body:
            b = l.atom.indicator
            if is_builtin(l.atom):
                continue
            preds.add(b)
            (neg_edges if l.negated else pos_edges).setdefault(h, set()).add(b)

    # iterative strongly connected components (Tarjan)
    graph = {p: (pos_edges.get(p, set()) | neg_edges.get(p, set()))
             for p in preds}
    idx_counter = [0]
    index: dict = {}
    low: dict = {}
    on_stack: dict = {}
    stack: list = []
    comp_of: dict = {}
    comps: list = []

    for root in sorted(preds):
        if root in index:
            continue
        work = [(root, iter(sorted(graph[root])))]
        index[root] = low[root] = idx_counter[0]
        idx_counter[0] += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = idx_counter[0]
                    idx_counter[0] += 1
                    stack.append(nxt)
                    on_stack[nxt] = True
                    work.append((nxt, iter(sorted(graph[nxt]))))
                    advanced = True
                    break
                if on_stack.get(nxt):
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    comp_of[w] = len(comps)
                    if w == node:
                        break
                comps.append(comp)

    for h, targets in neg_edges.items():
        for b in targets:
            if comp_of.get(h) == comp_of.get(b):
                raise InferenceError(
                    f"program is not stratified: {h} depends negatively on "
                    f"{b} within a cycle")
    # comps come out in reverse topological order of the condensation
    return [set(c) for c in comps]
