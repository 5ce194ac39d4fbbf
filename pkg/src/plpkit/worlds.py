"""Possible worlds: grounding, enumeration, conditioning.

This module is the semantic reference the other engines are tested against.
enumerate_worlds builds the choice tree: starting from the deterministic
part, it repeatedly finds the first probabilistic family (fact or annotated
disjunction instance) whose body holds in the world built so far, branches
on its outcomes, and recurses. Families whose body never becomes true
contribute no probability factor, so leaf probabilities sum to one by
construction. A post-check per leaf rejects programs where a choice's body
flips after the choice was (or was not) made; such programs fall outside the
semantics and raising beats silently mis-weighting them.

Grounding overapproximates the atoms any world can contain. Negative body
literals are assumed satisfiable, findall yields every order-preserving
sublist of the possible solutions, and arithmetic is evaluated outright.
The overapproximation only adds candidate family instances; instances whose
body stays false in every world simply never fire.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

from .errors import BudgetExceeded, CapabilityError, InferenceError
from .logic import (BUILTINS, Budget, Database, Solver, builtin_ready,
                    is_builtin, least_model)
from .syntax import (AnnotatedDisjunction, Clause, ClausalConstraint,
                     DistributionalClause, LabelDecl, ProbFact, Program)
from .terms import (Atom, Const, Literal, Var, atom_is_ground, canon,
                    format_atom, resolve, resolve_atom, resolve_literal,
                    rename_atom, unify_atoms)

WORLD_CAP = 2 ** 24
_FINDALL_CAP = 4096


@dataclass(frozen=True, slots=True)
class Family:
    """One ground probabilistic choice: a fact instance or an AD instance.

    Outcomes are indexed 0..n-1. For facts: 0 = absent, 1 = present.
    For ADs: head positions first, then the null choice when its mass is
    positive.
    """

    kind: str  # 'fact' | 'ad'
    index: int
    stmt_index: int
    atoms: tuple  # outcome atoms; facts have one
    probs: tuple  # per-outcome probabilities, sums to 1
    body: tuple  # ground non-builtin literals
    memoized: bool
    adid: Optional[str]
    key: str  # stable identity, also the RNG stream tag

    @property
    def n_outcomes(self) -> int:
        return len(self.probs)

    def outcome_atom(self, outcome: int) -> Optional[Atom]:
        """Atom made true by the outcome, None for absent/null."""
        if self.kind == "fact":
            return self.atoms[0] if outcome == 1 else None
        if outcome < len(self.atoms):
            return self.atoms[outcome]
        return None

    def outcome_label(self, outcome: int) -> str:
        a = self.outcome_atom(outcome)
        if a is not None:
            return canon(a)
        return "_absent" if self.kind == "fact" else "_null"


@dataclass(frozen=True, slots=True)
class PossibleWorld:
    assignment: tuple  # ((family_index, outcome) ...) for fired families
    prob: float
    true_atoms: frozenset  # basic-event atoms made true


class GroundedProgram:
    def __init__(self, program: Program, families, rules,
                 possible_atoms, det_facts):
        self.program = program
        self.families = tuple(families)
        self.rules = tuple(rules)  # original clauses, unground
        self.possible_atoms = frozenset(possible_atoms)
        self.det_facts = frozenset(det_facts)
        self.by_key = {f.key: f for f in self.families}

    def solver(self, true_atoms, budget: Optional[Budget] = None,
               engine: str = "enum") -> Solver:
        db = Database(self.rules, ())
        for a in self.det_facts:
            db.add_fact(a)
        for a in true_atoms:
            db.add_fact(a)
        return Solver(db, budget or Budget(), engine=engine)


# ---------------------------------------------------------------------------
# grounding

class _PossibleDB:
    """Match goals against the possible-atom set, evaluating builtins and
    treating negation as satisfiable."""

    def __init__(self, engine: str):
        self.atoms: set = set()
        self.index: dict = {}
        self.engine = engine

    def add(self, a: Atom) -> bool:
        if a in self.atoms:
            return False
        self.atoms.add(a)
        self.index.setdefault(a.indicator, []).append(a)
        return True

    def match(self, body, s) -> Iterator[dict]:
        if not body:
            yield s
            return
        pick = 0
        for i, l in enumerate(body):
            a = resolve_atom(l.atom, s)
            if not l.negated and a.indicator in BUILTINS \
                    and not builtin_ready(a):
                pick = None
                continue
            pick = i
            break
        if pick is None:
            a = resolve_atom(body[0].atom, s)
            raise InferenceError(
                f"cannot order body builtins for grounding: inputs of "
                f"{format_atom(a)} stay unbound")
        lit, rest = body[pick], body[:pick] + body[pick + 1:]
        a = resolve_atom(lit.atom, s)
        if lit.negated:
            # both truth values considered possible
            yield from self.match(rest, s)
            return
        ind = a.indicator
        if a.pred == "true" and not a.args:
            yield from self.match(rest, s)
            return
        if ind == "findall/3":
            yield from self._match_findall(a, rest, s)
            return
        if ind == "prob/2":
            raise CapabilityError(self.engine, "meta-calls", format_atom(a))
        if ind in BUILTINS:
            for s2 in BUILTINS[ind](a.args, s, None):
                yield from self.match(rest, s2)
            return
        for cand in self.index.get(ind, ()):
            s2 = unify_atoms(a, cand, s)
            if s2 is not None:
                yield from self.match(rest, s2)

    def _match_findall(self, a: Atom, rest, s) -> Iterator[dict]:
        from .logic import goal_term_to_literals
        from .terms import make_list, unify
        template, goal_t, out = a.args
        goals = tuple(Literal(g.atom, g.negated)
                      for g in goal_term_to_literals(resolve(goal_t, s)))
        sols = []
        for s2 in self.match(goals, s):
            item = resolve(template, s2)
            if item not in sols:
                sols.append(item)
        n = len(sols)
        if 2 ** n > _FINDALL_CAP:
            raise BudgetExceeded("findall grounding", _FINDALL_CAP)
        # every order-preserving sublist is a possible per-world result
        for mask in range(2 ** n):
            chosen = [sols[i] for i in range(n) if mask & (1 << i)]
            s3 = unify(out, make_list(chosen), s)
            if s3 is not None:
                yield from self.match(rest, s3)


def _strip_builtins(body, s) -> tuple:
    out = []
    for l in body:
        a = resolve_atom(l.atom, s)
        if is_builtin(a) or (a.pred == "true" and not a.args):
            continue
        out.append(Literal(a, l.negated))
    return tuple(out)


def key_body(body, s) -> tuple:
    """Resolved ground body literals, builtins included, for event keys.
    Literals a solution leaves non-ground cannot name the instance and are
    dropped."""
    out = []
    for l in body:
        a = resolve_atom(l.atom, s)
        if a.pred == "true" and not a.args:
            continue
        if not atom_is_ground(a):
            continue
        out.append(Literal(a, l.negated))
    return tuple(out)


def family_key(prefix: str, stmt_index: int, atoms, body) -> str:
    """Stable identity of one ground event instance. Distinct body
    groundings of one statement are independent events (think of the body
    as selecting an auxiliary fact), so the ground body joins the key."""
    key = f"{prefix}{stmt_index}|" + "|".join(canon(a) for a in atoms)
    if body:
        key += "?" + ",".join(("~" if l.negated else "") + canon(l.atom)
                              for l in body)
    return key


def ground(program: Program, domains: Optional[dict] = None,
           max_instances: int = 100_000, engine: str = "enum"
           ) -> GroundedProgram:
    """Ground every probabilistic family the program can ever use.

    domains maps a predicate indicator to an iterable of argument tuples for
    probabilistic facts whose instances are not bounded by a body, e.g.
    {'heads/1': [(1,), (2,)]}. Values may be raw Python ints/floats/strings
    or Terms.
    """
    if program.dist_clauses:
        raise CapabilityError(engine, "distributional clauses",
                              "sampling engines handle these")
    domains = domains or {}
    pdb = _PossibleDB(engine)
    det_facts: list = []
    rules: list = []
    for st in program.statements:
        if isinstance(st, Clause):
            if not st.body and atom_is_ground(st.head):
                det_facts.append(st.head)
                pdb.add(st.head)
            else:
                rules.append(st)
        elif isinstance(st, LabelDecl):
            det_facts.append(st.atom)
            pdb.add(st.atom)

    families: list = []
    fam_keys: set = set()

    def family_instances(stmt_index, st) -> int:
        added = 0
        if isinstance(st, ProbFact):
            for s in pdb.match(st.body, {}):
                atom = resolve_atom(st.atom, s)
                label = resolve(st.label, s)
                body_g = _strip_builtins(st.body, s)
                body_k = key_body(st.body, s)
                for inst, lab in _fact_instances(atom, label, st, domains):
                    key = family_key("f", stmt_index, (inst,), body_k)
                    if key in fam_keys:
                        continue
                    fam_keys.add(key)
                    if not (isinstance(lab, Const)
                            and isinstance(lab.value, (int, float))):
                        raise CapabilityError(
                            engine, "flexible probabilities",
                            f"label of {format_atom(inst)} stays unbound "
                            "under grounding")
                    p = float(lab.value)
                    if not 0.0 <= p <= 1.0:
                        raise InferenceError(
                            f"probability {p} outside [0, 1] for "
                            f"{format_atom(inst)}")
                    families.append(Family(
                        "fact", len(families), stmt_index, (inst,),
                        (1.0 - p, p), body_g, st.memoized, None, key))
                    pdb.add(inst)
                    added += 1
        elif isinstance(st, AnnotatedDisjunction):
            for s in pdb.match(st.body, {}):
                atoms = tuple(resolve_atom(a, s) for a in st.atoms)
                if not all(atom_is_ground(a) for a in atoms):
                    raise InferenceError(
                        f"annotated disjunction {st.adid} stays non-ground "
                        "after grounding its body; add a domain body")
                body_g = _strip_builtins(st.body, s)
                key = family_key("a", stmt_index, atoms, key_body(st.body, s))
                if key in fam_keys:
                    continue
                fam_keys.add(key)
                probs = list(st.probs)
                null = st.null_prob
                if null > 0.0:
                    probs.append(null)
                families.append(Family(
                    "ad", len(families), stmt_index, atoms, tuple(probs),
                    body_g, st.memoized, st.adid, key))
                for a in atoms:
                    pdb.add(a)
                added += 1
        return added

    changed = True
    while changed:
        changed = False
        for i, st in enumerate(program.statements):
            if isinstance(st, (ProbFact, AnnotatedDisjunction)):
                if family_instances(i, st):
                    changed = True
            elif isinstance(st, Clause) and st.body:
                for s in pdb.match(st.body, {}):
                    inst = resolve_atom(st.head, s)
                    if not atom_is_ground(inst):
                        continue
                    if pdb.add(inst):
                        changed = True
        if len(families) > max_instances:
            raise BudgetExceeded("grounding instance", max_instances)

    return GroundedProgram(program, families, rules, pdb.atoms, det_facts)


def _fact_instances(atom: Atom, label, st: ProbFact, domains):
    if atom_is_ground(atom):
        yield atom, label
        return
    dom = domains.get(atom.indicator)
    if dom is None:
        raise InferenceError(
            f"probabilistic fact {format_atom(atom)} has unbound variables; "
            "restrict it with a body or pass domains=")
    from .terms import Term
    for args in dom:
        terms = tuple(a if isinstance(a, Term) else Const(a)
                      for a in _as_tuple(args))
        s = unify_atoms(atom, Atom(atom.pred, terms))
        if s is None:
            continue
        inst = resolve_atom(atom, s)
        if not atom_is_ground(inst):
            raise InferenceError(
                f"domain entry {args!r} leaves {format_atom(inst)} open")
        yield inst, resolve(label, s)


def _as_tuple(x):
    if isinstance(x, tuple):
        return x
    return (x,)


# ---------------------------------------------------------------------------
# enumeration

def _branch_order(gp: GroundedProgram):
    bodiless = [f for f in gp.families if not f.body]
    bodied = [f for f in gp.families if f.body]
    return bodiless + bodied


def enumerate_worlds(gp: GroundedProgram, cap: int = WORLD_CAP) -> list:
    """All possible worlds with their probabilities (summing to one)."""
    order = _branch_order(gp)
    worlds: list = []

    def world_true_atoms(fired: dict) -> set:
        atoms = set()
        for fam, outcome in fired.items():
            a = fam.outcome_atom(outcome)
            if a is not None:
                atoms.add(a)
        return atoms

    def next_applicable(fired: dict, solver: Solver):
        for fam in order:
            if fam in fired:
                continue
            if not fam.body or solver.prove(fam.body):
                return fam
        return None

    def rec(fired: dict, prob: float):
        solver = gp.solver(world_true_atoms(fired))
        fam = next_applicable(fired, solver)
        if fam is None:
            _leaf(fired, prob, solver)
            return
        for outcome, p in enumerate(fam.probs):
            if p == 0.0:
                continue
            fired[fam] = outcome
            rec(fired, prob * p)
            del fired[fam]

    def _leaf(fired: dict, prob: float, solver: Solver):
        for fam in gp.families:
            if fam.body:
                holds = solver.prove(fam.body)
                if holds != (fam in fired):
                    raise InferenceError(
                        "non-monotonic choice dependency: body of "
                        f"{fam.key} changed truth after branching")
        if len(worlds) >= cap:
            raise BudgetExceeded("world count", cap)
        assignment = tuple(sorted(((f.index, o) for f, o in fired.items())))
        worlds.append(PossibleWorld(
            assignment, prob, frozenset(world_true_atoms(fired))))

    rec({}, 1.0)
    return worlds


def world_probability(gp: GroundedProgram, assignment) -> float:
    """Probability of the world picked out by a (total or partial) outcome
    assignment {family_index_or_key: outcome}. Families whose body stays
    false contribute factor one regardless of their assigned outcome."""
    by_index = {f.index: f for f in gp.families}
    fixed: dict = {}
    for k, v in dict(assignment).items():
        fam = gp.by_key[k] if isinstance(k, str) else by_index[k]
        fixed[fam] = v
    order = _branch_order(gp)
    fired: dict = {}
    prob = 1.0
    while True:
        atoms = set()
        for fam, outcome in fired.items():
            a = fam.outcome_atom(outcome)
            if a is not None:
                atoms.add(a)
        solver = gp.solver(atoms)
        nxt = None
        for fam in order:
            if fam in fired:
                continue
            if not fam.body or solver.prove(fam.body):
                nxt = fam
                break
        if nxt is None:
            return prob
        if nxt not in fixed:
            raise InferenceError(
                f"assignment is silent on applicable family {nxt.key}")
        outcome = fixed[nxt]
        fired[nxt] = outcome
        prob *= nxt.probs[outcome]


def world_entails(gp: GroundedProgram, world: PossibleWorld, goal) -> bool:
    solver = gp.solver(world.true_atoms)
    goals = (goal,) if isinstance(goal, Literal) else (Literal(goal),)
    return solver.prove(goals)


def world_model(gp: GroundedProgram, world: PossibleWorld) -> frozenset:
    """Canonical model restricted to the (finite) possible-atom universe."""
    solver = gp.solver(world.true_atoms)
    out = set()
    for a in sorted(gp.possible_atoms, key=canon):
        if solver.prove((Literal(a),)):
            out.add(a)
    return frozenset(out)


# ---------------------------------------------------------------------------
# constraints and conditioning

def constraint_holds(gp: GroundedProgram, world: PossibleWorld,
                     c: ClausalConstraint) -> bool:
    solver = gp.solver(world.true_atoms)
    for s in solver.solve(c.body):
        ok = False
        for head in c.heads:
            lit = resolve_literal(head, s)
            if not atom_is_ground(lit.atom):
                raise InferenceError(
                    "constraint head not ground under body solution: "
                    f"{format_atom(lit.atom)}")
            if solver.prove((lit,)):
                ok = True
                break
        if not ok:
            return False
    return True


def satisfies_constraints(gp: GroundedProgram, world: PossibleWorld) -> bool:
    return all(constraint_holds(gp, world, c)
               for c in gp.program.constraints)


def succ_enum(program_or_gp, query, evidence: Optional[dict] = None,
              domains: Optional[dict] = None,
              apply_constraints: bool = True) -> float:
    """Success probability by exhaustive enumeration, conditioning on
    evidence and (when present) clausal constraints."""
    gp = (program_or_gp if isinstance(program_or_gp, GroundedProgram)
          else ground(program_or_gp, domains))
    evidence = evidence or {}
    has_constraints = bool(gp.program.constraints) and apply_constraints
    num = 0.0
    den = 0.0
    for w in enumerate_worlds(gp):
        if has_constraints and not satisfies_constraints(gp, w):
            continue
        ev_ok = True
        for atom, val in evidence.items():
            if world_entails(gp, w, atom) != val:
                ev_ok = False
                break
        if not ev_ok:
            continue
        den += w.prob
        if world_entails(gp, w, query):
            num += w.prob
    if den == 0.0:
        raise InferenceError("conditioning on a zero-probability event")
    return num / den
