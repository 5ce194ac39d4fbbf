"""Exact inference engines and the five query tasks.

Three interchangeable routes to a success probability:

  * enum: exhaustive possible-world enumeration (worlds module);
  * compile: backward explanation collection compiled into a decision
    diagram for the disjoint sum;
  * wmc: relevant grounding, Clark completion, and a small weighted
    DPLL model counter.

On programs every route supports they agree to within 1e-9; each route
owns the capabilities the others lack (enum: findall, constraints;
compile: meta-calls, flexible probabilities, restricted dememoization;
wmc: flexible probabilities).

Most-probable-assignment tasks (MAP, MPE) always run on the enumeration
event space: reparameterized encodings rank worlds differently, so they
are never used here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

from .bdd import BDD, FALSE, TRUE
from .errors import CapabilityError, InferenceError
from .logic import BUILTINS, Budget, DEFAULT_BUDGET, goal_term_to_literals
from .syntax import (AnnotatedDisjunction, Clause, ClausalConstraint,
                     DistributionalClause, LabelDecl, ProbFact, Program)
from .terms import (Atom, Const, Literal, Struct, Term, Var, atom_is_ground,
                    canon, format_atom, rename_atom, resolve, resolve_atom,
                    term_vars, unify, unify_atoms)
from .transform import (encode_probs, relevant_ground_program,
                        to_weighted_cnf, WeightedCNF)
from . import worlds as W

DEFAULT_ENGINE = "compile"


# ---------------------------------------------------------------------------
# events and explanations

@dataclass(frozen=True, slots=True)
class EventRef:
    """One independent random event instance: a ground probabilistic fact
    or one ground instance of an annotated disjunction. Dememoized events
    carry an occurrence counter, so every retrial is its own event."""
    kind: str  # 'fact' | 'choice'
    stmt_index: int
    key: str
    probs: tuple
    atoms: tuple
    memoized: bool = True
    occurrence: int = 0


@dataclass(frozen=True, slots=True)
class ExpLit:
    event: EventRef
    outcome: int  # facts: always 1 (present); choices: head index
    positive: bool

    def __str__(self) -> str:
        if self.event.kind == "fact":
            text = canon(self.event.atoms[0])
        else:
            text = canon(self.event.atoms[self.outcome])
        if self.event.occurrence:
            text += f"[{self.event.occurrence}]"
        return text if self.positive else f"not {text}"


@dataclass(frozen=True, slots=True)
class Explanation:
    lits: tuple  # ExpLit in discovery order

    @property
    def key(self) -> frozenset:
        return frozenset(self.lits)

    @property
    def prob(self) -> float:
        return explanation_prob(self.lits)

    def __str__(self) -> str:
        return " & ".join(str(l) for l in self.lits) if self.lits else "true"


def explanation_prob(lits) -> float:
    """Probability of a conjunction of event literals. Literals are grouped
    per event instance first: several negative literals on one choice deny
    a set of outcomes jointly, which is not a plain product."""
    groups: dict = {}
    for l in lits:
        pos, neg = groups.setdefault(l.event, (set(), set()))
        (pos if l.positive else neg).add(l.outcome)
    p = 1.0
    for ev, (pos, neg) in groups.items():
        if pos:
            if len(pos) > 1 or (pos & neg):
                return 0.0
            i = next(iter(pos))
            p *= ev.probs[0] if ev.kind == "fact" else ev.probs[i]
        elif ev.kind == "fact":
            p *= 1.0 - ev.probs[0]
        else:
            p *= max(0.0, 1.0 - sum(ev.probs[i] for i in neg))
    return p


def vit_score(lits) -> float:
    """Viterbi objective: plain product over signed literals, a negative
    literal contributing one minus its outcome's probability."""
    p = 1.0
    for l in lits:
        q = l.event.probs[0] if l.event.kind == "fact" \
            else l.event.probs[l.outcome]
        p *= q if l.positive else 1.0 - q
    return p


def _add_lit(lits: tuple, lit: ExpLit) -> Optional[tuple]:
    """Extend a consistent literal tuple; None when the result would be
    unsatisfiable."""
    for l in lits:
        if l.event != lit.event:
            continue
        if l.positive and lit.positive and l.outcome != lit.outcome:
            return None
        if l.positive != lit.positive and l.outcome == lit.outcome:
            return None
    if lit in lits:
        return lits
    return lits + (lit,)


def _lit_false_under(lits, l: ExpLit) -> bool:
    for m in lits:
        if m.event != l.event:
            continue
        if l.positive:
            if m.positive and m.outcome != l.outcome:
                return True
            if not m.positive and m.outcome == l.outcome:
                return True
        elif m.positive and m.outcome == l.outcome:
            return True
    return False


def _conflicting(e1, e2) -> bool:
    return any(_lit_false_under(e1, l) for l in e2)


# ---------------------------------------------------------------------------
# explanation search

class MetaContext:
    """Evaluation context for prob/2 goals. Inner queries run a fresh
    compile-engine pass over the same program; results are cached per
    canonical goal, so repeated meta-calls in one derivation agree. The
    call stack guards against prob/2 cycles."""

    def __init__(self, program: Program, budget_limit: int):
        self.program = program
        self.budget_limit = budget_limit
        self.cache: dict = {}
        self.stack: list = []
        self.log: list = []

    def eval(self, goal_term: Term, s: dict) -> float:
        g = resolve(goal_term, s)
        if term_vars(g):
            raise InferenceError(
                f"prob/2 goal {canon(g)} has unbound variables")
        key = canon(g)
        if key in self.cache:
            return self.cache[key]
        if key in self.stack:
            raise InferenceError(f"cyclic prob/2 evaluation through {key}")
        self.stack.append(key)
        try:
            p = _compile_succ(self.program, goal_term_to_literals(g),
                              self.budget_limit, self)
        finally:
            self.stack.pop()
        self.cache[key] = p
        self.log.append((key, p))
        return p


def _ground_body(body_goals, s) -> tuple:
    """Resolved body literals for event identity, same form the grounder
    uses."""
    return W.key_body(tuple(l for l, _anc in body_goals), s)


class _Search:
    """SLD resolution that records, along every successful derivation, the
    set of event literals the derivation commits to."""

    def __init__(self, program: Program, budget_limit: int, engine: str,
                 meta: Optional[MetaContext] = None):
        self.stmts = list(enumerate(program.statements))
        self.budget = Budget(budget_limit)
        self.engine = engine
        self.meta = meta

    def collect(self, goal_lits, s0: Optional[dict] = None) -> list:
        goals = tuple((l, frozenset()) for l in goal_lits)
        return list(self._run(goals, s0 or {}, (), {}))

    def _run(self, goals, s, lits, counts) -> Iterator[tuple]:
        if not goals:
            yield s, lits, counts
            return
        (lit, anc), rest = goals[0], goals[1:]
        atom = resolve_atom(lit.atom, s)
        if lit.negated:
            yield from self._negate(atom, rest, s, lits, counts)
            return
        self.budget.spend()
        ind = atom.indicator
        if atom.pred == "true" and not atom.args:
            yield from self._run(rest, s, lits, counts)
            return
        if atom.pred in ("fail", "false") and not atom.args:
            return
        if ind == "findall/3":
            raise CapabilityError(self.engine, "findall", format_atom(atom))
        if ind == "prob/2":
            if self.meta is None:
                raise CapabilityError(self.engine, "meta-calls",
                                      format_atom(atom))
            p = self.meta.eval(atom.args[0], s)
            s2 = unify(atom.args[1], Const(p), s)
            if s2 is not None:
                yield from self._run(rest, s2, lits, counts)
            return
        if ind in BUILTINS:
            for s2 in BUILTINS[ind](atom.args, s, None):
                yield from self._run(rest, s2, lits, counts)
            return
        key = canon(atom) if atom_is_ground(atom) else None
        if key is not None and key in anc:
            return
        child = anc | {key} if key is not None else anc
        for idx, st in self.stmts:
            if isinstance(st, Clause):
                yield from self._match_rule(idx, st, atom, rest, s, lits,
                                            counts, child)
            elif isinstance(st, ProbFact):
                yield from self._match_fact(idx, st, atom, rest, s, lits,
                                            counts, child)
            elif isinstance(st, AnnotatedDisjunction):
                yield from self._match_ad(idx, st, atom, rest, s, lits,
                                          counts, child)
            elif isinstance(st, LabelDecl):
                s2 = unify_atoms(atom, st.atom, s)
                if s2 is not None:
                    yield from self._run(rest, s2, lits, counts)
            elif isinstance(st, DistributionalClause):
                if st.rv.pred == atom.pred \
                        and len(st.rv.args) == len(atom.args):
                    raise CapabilityError(self.engine,
                                          "distributional clauses",
                                          format_atom(atom))

    def _match_rule(self, idx, st, atom, rest, s, lits, counts, anc):
        mapping: dict = {}
        head = rename_atom(st.head, mapping)
        s2 = unify_atoms(atom, head, s)
        if s2 is None:
            return
        body = tuple((Literal(rename_atom(l.atom, mapping), l.negated), anc)
                     for l in st.body)
        yield from self._run(body + rest, s2, lits, counts)

    def _match_fact(self, idx, st, atom, rest, s, lits, counts, anc):
        mapping: dict = {}
        fatom = rename_atom(st.atom, mapping)
        s2 = unify_atoms(atom, fatom, s)
        if s2 is None:
            return
        body = tuple((Literal(rename_atom(l.atom, mapping), l.negated), anc)
                     for l in st.body)
        label_t = st.label
        if isinstance(label_t, Var):
            label_t = mapping.get(label_t, label_t)
        for s3, lits3, c3 in self._run(body, s2, lits, counts):
            inst = resolve_atom(fatom, s3)
            if not atom_is_ground(inst):
                raise InferenceError(
                    f"probabilistic fact {format_atom(inst)} not ground in "
                    "this derivation")
            label = resolve(label_t, s3)
            if not (isinstance(label, Const)
                    and isinstance(label.value, (int, float))
                    and not isinstance(label.value, bool)):
                raise InferenceError(
                    f"probability of {format_atom(inst)} is not a number "
                    "in this derivation")
            p = float(label.value)
            if not 0.0 <= p <= 1.0:
                raise InferenceError(
                    f"probability {p} outside [0, 1] for "
                    f"{format_atom(inst)}")
            if p == 0.0:
                continue
            base = W.family_key("f", idx, (inst,), _ground_body(body, s3))
            if st.memoized:
                occ, c4 = 0, c3
            else:
                occ = c3.get(base, 0)
                c4 = {**c3, base: occ + 1}
            ev = EventRef("fact", idx, base, (p,), (inst,), st.memoized, occ)
            lits4 = _add_lit(lits3, ExpLit(ev, 1, True))
            if lits4 is None:
                continue
            yield from self._run(rest, s3, lits4, c4)

    def _match_ad(self, idx, st, atom, rest, s, lits, counts, anc):
        mapping: dict = {}
        heads = tuple(rename_atom(a, mapping) for a in st.atoms)
        body = tuple((Literal(rename_atom(l.atom, mapping), l.negated), anc)
                     for l in st.body)
        for j, h in enumerate(heads):
            if st.probs[j] == 0.0:
                continue
            s2 = unify_atoms(atom, h, s)
            if s2 is None:
                continue
            for s3, lits3, c3 in self._run(body, s2, lits, counts):
                insts = tuple(resolve_atom(x, s3) for x in heads)
                if not all(atom_is_ground(a) for a in insts):
                    raise InferenceError(
                        f"annotated disjunction {st.adid} not ground in "
                        "this derivation")
                base = W.family_key("a", idx, insts, _ground_body(body, s3))
                if st.memoized:
                    occ, c4 = 0, c3
                else:
                    occ = c3.get(base, 0)
                    c4 = {**c3, base: occ + 1}
                ev = EventRef("choice", idx, base, st.probs, insts,
                              st.memoized, occ)
                lits4 = _add_lit(lits3, ExpLit(ev, j, True))
                if lits4 is None:
                    continue
                yield from self._run(rest, s3, lits4, c4)

    def _negate(self, atom, rest, s, lits, counts):
        if not atom_is_ground(atom):
            raise InferenceError(
                f"negated goal {format_atom(atom)} is not ground")
        subs: list = []
        seen: set = set()
        for _s, sub, _c in self._run(((Literal(atom), frozenset()),), {}, (),
                                     counts):
            if not sub:
                return  # deterministically provable, negation fails
            for l in sub:
                if not l.event.memoized:
                    raise CapabilityError(
                        self.engine, "dememoized events",
                        f"under negation of {format_atom(atom)}")
            k = frozenset(sub)
            if k not in seen:
                seen.add(k)
                subs.append(sub)
        emitted: set = set()
        for lits2 in self._block_all(subs, 0, lits):
            k = frozenset(lits2)
            if k in emitted:
                continue
            emitted.add(k)
            yield from self._run(rest, s, lits2, counts)

    def _block_all(self, subs, i, lits) -> Iterator[tuple]:
        """Extend lits so every sub-explanation has at least one falsified
        literal: the product expansion of a negated DNF."""
        if i == len(subs):
            yield lits
            return
        sub = subs[i]
        if any(_lit_false_under(lits, l) for l in sub):
            yield from self._block_all(subs, i + 1, lits)
            return
        for l in sub:
            lits2 = _add_lit(lits, ExpLit(l.event, l.outcome, not l.positive))
            if lits2 is None:
                continue
            yield from self._block_all(subs, i + 1, lits2)


def collect_explanations(program: Program, goals,
                         budget_limit: int = DEFAULT_BUDGET,
                         meta: Optional[MetaContext] = None,
                         engine: str = "compile") -> list:
    """Deduplicated explanations of a goal conjunction, discovery order."""
    goal_lits = _as_goal_lits(goals)
    search = _Search(program, budget_limit, engine, meta)
    out: list = []
    seen: set = set()
    for _s, lits, _c in search.collect(goal_lits):
        k = frozenset(lits)
        if k not in seen:
            seen.add(k)
            out.append(Explanation(lits))
    return out


# ---------------------------------------------------------------------------
# disjoint sums

def disjoint_sum(explanations) -> float:
    """Probability of a DNF of event literals via decision-diagram
    compilation. Choice literals expand over switch variables with
    reparameterized probabilities; variable order is first appearance."""
    expls = [e.lits if isinstance(e, Explanation) else tuple(e)
             for e in explanations]
    if not expls:
        return 0.0
    levels: dict = {}
    w_pos: list = []
    w_neg: list = []
    for lits in expls:
        for l in lits:
            ev = l.event
            if not ev.memoized:
                raise InferenceError(
                    "disjoint sum is defined over memoized events only")
            if ev in levels:
                continue
            start = len(w_pos)
            if ev.kind == "fact":
                p = ev.probs[0]
                w_pos.append(p)
                w_neg.append(1.0 - p)
            else:
                for t in encode_probs(ev.probs):
                    w_pos.append(t)
                    w_neg.append(1.0 - t)
            levels[ev] = start
    bdd = BDD(len(w_pos))

    def lit_node(l: ExpLit) -> int:
        start = levels[l.event]
        if l.event.kind == "fact":
            node = bdd.var(start)
        else:
            node = bdd.conj([bdd.nvar(start + m) for m in range(l.outcome)]
                            + [bdd.var(start + l.outcome)])
        return node if l.positive else bdd.apply_not(node)

    root = bdd.disj(bdd.conj(lit_node(l) for l in lits) for lits in expls)
    if root == TRUE:
        return 1.0
    if root == FALSE:
        return 0.0
    return bdd.eval_prob(root, w_pos, w_neg)


def dnf_prob(explanations, engine: str = "compile") -> float:
    """Probability of a DNF, routing around the decision diagram when
    dememoized events force the mutually-exclusive-proofs path."""
    expls = [e.lits if isinstance(e, Explanation) else tuple(e)
             for e in explanations]
    if not expls:
        return 0.0
    if any(not l.event.memoized for lits in expls for l in lits):
        for i in range(len(expls)):
            for j in range(i + 1, len(expls)):
                if not _conflicting(expls[i], expls[j]):
                    raise CapabilityError(
                        engine, "dememoized events",
                        "explanations overlap, so per-occurrence events "
                        "would double count; this needs mutually exclusive "
                        "proofs")
        return sum(explanation_prob(lits) for lits in expls)
    return disjoint_sum(expls)


def _compile_succ(program: Program, goal_lits, budget_limit: int,
                  meta: Optional[MetaContext]) -> float:
    expls = collect_explanations(program, goal_lits, budget_limit, meta)
    return dnf_prob(expls)


# ---------------------------------------------------------------------------
# weighted model counting

def wmc(cnf: WeightedCNF) -> float:
    """Weighted DPLL: unit propagation, branch on the lowest-index variable
    still constrained, and close satisfied leaves with the product of
    (w_pos + w_neg) over untouched variables. No pure-literal rule: deleting
    satisfied-only occurrences is sound for SAT but not for counting."""
    weights = cnf.weights
    all_total = 1.0
    for v in range(1, cnf.n_vars + 1):
        all_total *= weights[v][0] + weights[v][1]

    def assign(clauses, v, val):
        pos = v if val else -v
        out = []
        for cl in clauses:
            if pos in cl:
                continue
            if -pos in cl:
                cl2 = cl - {-pos}
                if not cl2:
                    return None
                out.append(cl2)
            else:
                out.append(cl)
        return out

    def count(clauses, free_total: float) -> float:
        mult = 1.0
        while True:
            unit = None
            for cl in clauses:
                if len(cl) == 1:
                    unit = next(iter(cl))
                    break
            if unit is None:
                break
            v, val = abs(unit), unit > 0
            clauses = assign(clauses, v, val)
            if clauses is None:
                return 0.0
            wp, wn = weights[v]
            mult *= wp if val else wn
            free_total /= wp + wn
        if not clauses:
            return mult * free_total
        v = min(abs(l) for cl in clauses for l in cl)
        wp, wn = weights[v]
        free_total /= wp + wn
        total = 0.0
        for val, w in ((True, wp), (False, wn)):
            sub = assign(clauses, v, val)
            if sub is None:
                continue
            total += w * count(sub, free_total)
        return mult * total

    clauses = [frozenset(cl) for cl in cnf.clauses]
    return count(clauses, all_total)


def wmc_joint(program: Program, queries=(), evidence: Optional[dict] = None,
              engine: str = "wmc") -> float:
    """P(queries ∧ evidence) by relevant grounding, completion and
    counting."""
    evidence = evidence or {}
    queries = tuple(queries)
    goal_atoms = list(queries) + list(evidence)
    for a in goal_atoms:
        if not atom_is_ground(a):
            raise InferenceError(
                f"weighted counting needs ground atoms, got "
                f"{format_atom(a)}")
    if not goal_atoms:
        return 1.0
    gp = relevant_ground_program(program, goal_atoms, engine)
    cnf = to_weighted_cnf(gp, queries=queries, evidence=evidence,
                          engine=engine)
    return wmc(cnf)


# ---------------------------------------------------------------------------
# capability checks

_FEATURE_NAMES = {
    "flexible": "flexible probabilities",
    "meta": "meta-calls",
    "demem": "dememoized events",
    "findall": "findall",
    "constraints": "clausal constraints",
    "distributional": "distributional clauses",
}

_DENIED = {
    "enum": ("flexible", "meta", "demem", "distributional"),
    "compile": ("findall", "constraints", "distributional"),
    "wmc": ("meta", "findall", "demem", "constraints", "distributional"),
}


def program_features(program: Program) -> frozenset:
    flags: set = set()

    def scan_term(t: Term):
        if isinstance(t, Struct):
            if t.functor == "findall" and len(t.args) == 3:
                flags.add("findall")
            if t.functor == "prob" and len(t.args) == 2:
                flags.add("meta")
            for a in t.args:
                scan_term(a)

    def scan_body(body):
        for l in body:
            if l.negated:
                flags.add("negation")
            if l.atom.indicator == "findall/3":
                flags.add("findall")
            if l.atom.indicator == "prob/2":
                flags.add("meta")
            for a in l.atom.args:
                scan_term(a)

    for st in program.statements:
        if isinstance(st, ProbFact):
            flags.add("facts")
            if isinstance(st.label, Var):
                flags.add("flexible")
            if not st.memoized:
                flags.add("demem")
            scan_body(st.body)
        elif isinstance(st, AnnotatedDisjunction):
            flags.add("ad")
            if not st.memoized:
                flags.add("demem")
            scan_body(st.body)
        elif isinstance(st, Clause):
            scan_body(st.body)
        elif isinstance(st, DistributionalClause):
            flags.add("distributional")
            scan_body(st.body)
        elif isinstance(st, ClausalConstraint):
            flags.add("constraints")
            scan_body(st.body)
    return frozenset(flags)


def check_engine_support(engine: str, program: Program,
                         features: Optional[frozenset] = None):
    if engine not in _DENIED:
        raise InferenceError(f"unknown exact engine {engine!r}")
    feats = program_features(program) if features is None else features
    for flag in _DENIED[engine]:
        if flag in feats:
            raise CapabilityError(engine, _FEATURE_NAMES[flag])


# ---------------------------------------------------------------------------
# task drivers

@dataclass(frozen=True, slots=True)
class MAPResult:
    queries: tuple  # atoms, caller order
    assignment: tuple  # booleans aligned with queries
    prob: float  # conditional probability of the assignment


@dataclass(frozen=True, slots=True)
class MPEResult:
    world: W.PossibleWorld
    facts: frozenset  # chosen event atoms present in the world
    prob: float  # unconditional world probability
    cond_prob: float


@dataclass(frozen=True, slots=True)
class VitResult:
    explanation: Explanation
    score: float


def _as_goal_lits(goals) -> tuple:
    if isinstance(goals, Atom):
        return (Literal(goals),)
    if isinstance(goals, Literal):
        return (goals,)
    out = []
    for g in goals:
        out.append(g if isinstance(g, Literal) else Literal(g))
    return tuple(out)


def _ev_lits(evidence: dict) -> tuple:
    return tuple(Literal(a, negated=not v) for a, v in evidence.items())


def task_succ(program: Program, query, engine: str = DEFAULT_ENGINE,
              budget_limit: int = DEFAULT_BUDGET,
              domains: Optional[dict] = None) -> float:
    goal_lits = _as_goal_lits(query)
    check_engine_support(engine, program)
    if engine == "enum":
        if len(goal_lits) != 1:
            raise InferenceError("enumeration takes a single query literal")
        return W.succ_enum(program, goal_lits[0], domains=domains)
    if engine == "compile":
        return _compile_succ(program, goal_lits,
                             budget_limit, MetaContext(program, budget_limit))
    if len(goal_lits) != 1 or goal_lits[0].negated:
        raise InferenceError(
            "weighted counting takes a single positive query atom")
    return wmc_joint(program, queries=(goal_lits[0].atom,), engine=engine)


def task_marg(program: Program, queries, evidence: Optional[dict] = None,
              engine: str = DEFAULT_ENGINE,
              budget_limit: int = DEFAULT_BUDGET,
              domains: Optional[dict] = None) -> dict:
    """Conditional marginal P(q | evidence) for each query atom."""
    queries = tuple(queries)
    evidence = dict(evidence or {})
    check_engine_support(engine, program)
    out: dict = {}
    if engine == "enum":
        for q in queries:
            out[q] = W.succ_enum(program, q, evidence=evidence,
                                 domains=domains)
        return out
    if engine == "compile":
        meta = MetaContext(program, budget_limit)
        den = _compile_succ(program, _ev_lits(evidence), budget_limit, meta) \
            if evidence else 1.0
        if den == 0.0:
            raise InferenceError("conditioning on a zero-probability event")
        for q in queries:
            num = _compile_succ(program,
                                _as_goal_lits(q) + _ev_lits(evidence),
                                budget_limit, meta)
            out[q] = num / den
        return out
    den = wmc_joint(program, evidence=evidence, engine=engine) \
        if evidence else 1.0
    if den == 0.0:
        raise InferenceError("conditioning on a zero-probability event")
    for q in queries:
        out[q] = wmc_joint(program, queries=(q,), evidence=evidence,
                           engine=engine) / den
    return out


def _enum_worlds_conditioned(program: Program, evidence: dict,
                             domains: Optional[dict]):
    check_engine_support("enum", program)
    gp = W.ground(program, domains)
    kept = []
    total = 0.0
    has_constraints = bool(gp.program.constraints)
    for w in W.enumerate_worlds(gp):
        if has_constraints and not W.satisfies_constraints(gp, w):
            continue
        if all(W.world_entails(gp, w, a) == v for a, v in evidence.items()):
            kept.append(w)
            total += w.prob
    if total == 0.0:
        raise InferenceError("conditioning on a zero-probability event")
    return gp, kept, total


def task_map(program: Program, queries, evidence: Optional[dict] = None,
             domains: Optional[dict] = None) -> MAPResult:
    """Most likely joint truth assignment to the query atoms given the
    evidence. Runs on the original event space by enumeration; ties break
    toward the lexicographically smallest assignment (false before true)."""
    queries = tuple(queries)
    evidence = dict(evidence or {})
    gp, kept, total = _enum_worlds_conditioned(program, evidence, domains)
    scores: dict = {}
    for w in kept:
        key = tuple(W.world_entails(gp, w, q) for q in queries)
        scores[key] = scores.get(key, 0.0) + w.prob
    best_key = None
    best = -1.0
    for key in sorted(scores):
        if scores[key] > best:
            best = scores[key]
            best_key = key
    return MAPResult(queries, best_key, best / total)


def world_facts(gp: W.GroundedProgram, world: W.PossibleWorld) -> frozenset:
    """Chosen event atoms of a world: facts present plus selected heads."""
    by_index = {f.index: f for f in gp.families}
    out = set()
    for idx, outcome in world.assignment:
        a = by_index[idx].outcome_atom(outcome)
        if a is not None:
            out.add(a)
    return frozenset(out)


def _assignment_vec(gp: W.GroundedProgram, world: W.PossibleWorld) -> tuple:
    fired = dict(world.assignment)
    return tuple(fired.get(f.index, -1) for f in gp.families)


def task_mpe(program: Program, evidence: Optional[dict] = None,
             domains: Optional[dict] = None) -> MPEResult:
    """Most probable world consistent with the evidence; ties break toward
    the lexicographically smallest outcome vector in event declaration
    order (absent before present, earlier heads first)."""
    evidence = dict(evidence or {})
    gp, kept, total = _enum_worlds_conditioned(program, evidence, domains)
    best = None
    for w in kept:
        if best is None or w.prob > best.prob + 0.0 or (
                w.prob == best.prob
                and _assignment_vec(gp, w) < _assignment_vec(gp, best)):
            best = w
    return MPEResult(best, world_facts(gp, best), best.prob,
                     best.prob / total)


def _expl_sort_key(e: Explanation) -> tuple:
    return tuple(sorted((l.event.stmt_index, l.event.key,
                         l.event.occurrence, l.outcome, not l.positive)
                        for l in e.lits))


def task_vit(program: Program, query,
             budget_limit: int = DEFAULT_BUDGET) -> VitResult:
    """Most likely explanation of the query (compile engine); ties break
    toward the smallest explanation under event declaration order."""
    check_engine_support("compile", program)
    expls = collect_explanations(program, _as_goal_lits(query), budget_limit,
                                 MetaContext(program, budget_limit))
    if not expls:
        raise InferenceError("query has no explanation")
    best = None
    best_score = -1.0
    for e in expls:
        sc = vit_score(e.lits)
        if sc > best_score or (sc == best_score
                               and _expl_sort_key(e) < _expl_sort_key(best)):
            best = e
            best_score = sc
    return VitResult(best, best_score)
