"""Program transformations.

Four independent pieces:

  * switch encoding: an annotated disjunction becomes a chain of independent
    switch facts plus guard clauses, with reparameterized probabilities; the
    parameter map is a bijection (encode_probs / decode_probs);
  * CPT translation: a Bayesian-network node becomes one annotated
    disjunction per parent-value row;
  * relevant grounding: backward chaining from goal atoms collects exactly
    the ground rules and probabilistic instances the goals can touch;
  * weighted CNF: Clark completion of a ground relevant program, query and
    evidence conjoined as unit clauses, fact variables weighted (p, 1-p) and
    every other variable (1, 1).

Switch encodings are for success/marginal computation only; most-probable
assignments over an encoded program rank different worlds than the original
(the engines module enforces this).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Optional

from .errors import CapabilityError, Diagnostic, InferenceError, ProgramError
from .logic import BUILTINS, Budget, is_builtin
from .syntax import (AnnotatedDisjunction, Clause, DistributionalClause,
                     ProbFact, Program, validate_program)
from .terms import (Atom, Const, Literal, Var, atom_is_ground, atom_to_term,
                    atom_vars, canon, format_atom, resolve, resolve_atom,
                    rename_atom, unify_atoms)
from .worlds import family_key, key_body


# ---------------------------------------------------------------------------
# switch encoding

@dataclass(frozen=True, slots=True)
class SwitchEncoding:
    adid: str
    switch_facts: tuple  # ProbFact per head, chain order
    guard_clauses: tuple  # Clause per head
    tilde: tuple  # reparameterized probabilities


def encode_probs(probs) -> tuple:
    """Chain parameters: the i-th switch probability is conditioned on all
    earlier switches having failed."""
    tilde = []
    prefix = 0.0
    for p in probs:
        if p < 0.0 or p > 1.0:
            raise InferenceError(f"probability {p} outside [0, 1]")
        if p == 0.0:
            tilde.append(0.0)
        else:
            rest = 1.0 - prefix
            t = p / rest
            tilde.append(min(t, 1.0))
        prefix += p
    if prefix > 1.0 + 1e-9:
        raise InferenceError(f"probabilities sum to {prefix:.12g} > 1")
    return tuple(tilde)


def decode_probs(tilde) -> tuple:
    """Inverse of encode_probs."""
    probs = []
    prefix = 0.0
    for t in tilde:
        if t < 0.0 or t > 1.0:
            raise InferenceError(f"switch probability {t} outside [0, 1]")
        p = t * (1.0 - prefix)
        probs.append(p)
        prefix += p
    return tuple(probs)


def switch_atom(adid: str, head: Atom, body_vars) -> Atom:
    return Atom(f"sw_{adid}", (atom_to_term(head),) + tuple(body_vars))


def ad_to_facts(ad: AnnotatedDisjunction) -> SwitchEncoding:
    """Appendix-style encoding: head i holds when switches 1..i-1 fail and
    switch i succeeds, all guarded by the original body. Free body variables
    ride along on the switch facts so distinct groundings stay independent."""
    if not ad.memoized:
        raise CapabilityError("transform", "dememoized events",
                              "switch encodings assume memoized choices")
    body_vars = []
    for l in ad.body:
        for v in atom_vars(l.atom):
            if v not in body_vars:
                body_vars.append(v)
    tilde = encode_probs(ad.probs)
    sw_atoms = [switch_atom(ad.adid, h, body_vars) for h in ad.atoms]
    facts = tuple(ProbFact(Const(t), a, ad.body, ad.memoized)
                  for t, a in zip(tilde, sw_atoms))
    guards = []
    for i, head in enumerate(ad.atoms):
        neg = tuple(Literal(sw_atoms[j], negated=True) for j in range(i))
        guards.append(Clause(head, ad.body + neg + (Literal(sw_atoms[i]),)))
    return SwitchEncoding(ad.adid, facts, tuple(guards), tilde)


def apply_switch_encoding(program: Program) -> Program:
    """Replace every annotated disjunction by its switch encoding."""
    out = []
    for st in program.statements:
        if isinstance(st, AnnotatedDisjunction):
            enc = ad_to_facts(st)
            out.extend(enc.switch_facts)
            out.extend(enc.guard_clauses)
        else:
            out.append(st)
    return Program(tuple(out))


# ---------------------------------------------------------------------------
# CPT translation

def cpt_to_ads(spec: dict) -> Program:
    """Translate {"nodes": [{name, values, parents, rows}, ...]} into one
    annotated disjunction per CPT row. Row order follows the spec; each row
    is {"given": [parent values...], "p": [probabilities...]}."""
    diags = []
    statements = []
    seen = {}
    ad_n = 0
    for node in spec.get("nodes", ()):
        name = node.get("name")
        values = node.get("values", [])
        parents = node.get("parents", [])
        rows = node.get("rows", [])
        if not name or not values:
            diags.append(Diagnostic("node needs a name and values"))
            continue
        for par in parents:
            if par not in seen:
                diags.append(Diagnostic(
                    f"{name}: parent {par} not declared before use"))
        expected = 1
        for par in parents:
            expected *= len(seen.get(par, (None,)))
        if len(rows) != expected:
            diags.append(Diagnostic(
                f"{name}: expected {expected} rows, got {len(rows)}"))
        for row in rows:
            given = row.get("given", [])
            p = row.get("p", [])
            if len(given) != len(parents) or len(p) != len(values):
                diags.append(Diagnostic(f"{name}: malformed row {row}"))
                continue
            body = tuple(Literal(Atom(par, (_json_const(v),)))
                         for par, v in zip(parents, given))
            heads = tuple((float(pi), Atom(name, (_json_const(v),)))
                          for pi, v in zip(p, values))
            if sum(h[0] for h in heads) > 1.0 + 1e-9:
                diags.append(Diagnostic(
                    f"{name}: row {given} probabilities exceed 1"))
                continue
            ad_n += 1
            statements.append(AnnotatedDisjunction(
                heads, body, True, adid=f"cpt{ad_n}"))
        seen[name] = values
    if diags:
        raise ProgramError(diags)
    program = Program(tuple(statements))
    more = validate_program(program)
    if more:
        raise ProgramError(more)
    return program


def _json_const(v) -> Const:
    if isinstance(v, bool):
        return Const("true" if v else "false")
    return Const(v)


def cpt_program_from_json(text: str) -> Program:
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProgramError([Diagnostic(f"bad CPT JSON: {e}")])
    return cpt_to_ads(spec)


# ---------------------------------------------------------------------------
# relevant grounding

class _Grounder:
    """Backward possible-mode SLD: probabilistic atoms succeed on
    unification, negated goals succeed both ways, builtins run for real.
    Side effects collect ground rules and probabilistic instances."""

    def __init__(self, program: Program, engine: str,
                 budget_limit: int = 10 ** 6):
        self.program = program
        self.engine = engine
        self.budget = Budget(budget_limit)
        self.queue: deque = deque()
        self.seen: set = set()
        self.rules: list = []
        self.rule_keys: set = set()
        self.fact_instances: dict = {}
        self.ad_instances: dict = {}
        self.stmts = list(enumerate(program.statements))

    def run(self, goals) -> Program:
        for st in self.program.statements:
            if isinstance(st, DistributionalClause):
                raise CapabilityError(self.engine, "distributional clauses",
                                      format_atom(st.rv))
        for g in goals:
            if not atom_is_ground(g):
                raise InferenceError(
                    f"relevant grounding needs ground goals, got "
                    f"{format_atom(g)}")
            self.enqueue(g)
        while self.queue:
            atom = self.queue.popleft()
            self.define(atom)
        statements: list = []
        aux_rules: list = []
        for fact, aux_rule in self.fact_instances.values():
            statements.append(fact)
            if aux_rule is not None:
                aux_rules.append(aux_rule)
        statements.extend(self.ad_instances.values())
        statements.extend(aux_rules)
        statements.extend(self.rules)
        return Program(tuple(statements))

    def enqueue(self, atom: Atom):
        if is_builtin(atom) or atom.pred == "prob":
            return
        key = canon(atom)
        if key in self.seen:
            return
        self.seen.add(key)
        self.queue.append(atom)

    def define(self, atom: Atom):
        for idx, st in self.stmts:
            if isinstance(st, Clause):
                mapping: dict = {}
                head = rename_atom(st.head, mapping)
                s = unify_atoms(atom, head)
                if s is None:
                    continue
                body = tuple(Literal(rename_atom(l.atom, mapping), l.negated)
                             for l in st.body)
                for s2 in self.possible(body, s, frozenset()):
                    lits = self._emit_body(body, s2)
                    key = (canon(atom), tuple(
                        (l.negated, canon(l.atom)) for l in lits))
                    if key in self.rule_keys:
                        continue
                    self.rule_keys.add(key)
                    self.rules.append(Clause(atom, lits))
            elif isinstance(st, ProbFact):
                mapping = {}
                fatom = rename_atom(st.atom, mapping)
                s = unify_atoms(atom, fatom)
                if s is None:
                    continue
                body = tuple(Literal(rename_atom(l.atom, mapping), l.negated)
                             for l in st.body)
                label_t = st.label
                if isinstance(label_t, Var):
                    label_t = mapping.get(label_t, label_t)
                for s2 in self.possible(body, s, frozenset()):
                    self._register_fact(idx, st, atom, label_t, s2, body)
            elif isinstance(st, AnnotatedDisjunction):
                mapping = {}
                heads = tuple(rename_atom(a, mapping) for a in st.atoms)
                body = tuple(Literal(rename_atom(l.atom, mapping), l.negated)
                             for l in st.body)
                for i, h in enumerate(heads):
                    s = unify_atoms(atom, h)
                    if s is None:
                        continue
                    for s2 in self.possible(body, s, frozenset()):
                        self._register_ad(idx, st, heads, s2, body)

    def _register_fact(self, idx, st: ProbFact, atom: Atom, label_t, s,
                       body):
        inst = resolve_atom(atom, s)
        if not atom_is_ground(inst):
            raise InferenceError(
                f"probabilistic fact instance {format_atom(inst)} is not "
                "ground; relevant grounding needs ground uses")
        label = resolve(label_t, s)
        if not (isinstance(label, Const)
                and isinstance(label.value, (int, float))):
            raise InferenceError(
                f"flexible probability for {format_atom(inst)} is unbound "
                "at grounding time")
        p = float(label.value)
        if not 0.0 <= p <= 1.0:
            raise InferenceError(
                f"probability {p} outside [0, 1] for {format_atom(inst)}")
        key = family_key("f", idx, (inst,), key_body(body, s))
        if key in self.fact_instances:
            return
        if st.body:
            # a bodied instance is sugar for an auxiliary basic fact guarded
            # by the ground body; the indirection keeps independent causes
            # of one atom apart
            lits = self._emit_body(body, s)
            n = sum(1 for k in self.fact_instances if k.startswith(f"f{idx}|"))
            aux = Atom(f"aux_ev{idx}_{n + 1}", ())
            self.fact_instances[key] = (
                ProbFact(Const(p), aux, (), st.memoized),
                Clause(inst, lits + (Literal(aux),)))
        else:
            self.fact_instances[key] = (ProbFact(Const(p), inst, (),
                                                 st.memoized), None)

    def _register_ad(self, idx, st: AnnotatedDisjunction, heads, s, body):
        insts = tuple(resolve_atom(h, s) for h in heads)
        if not all(atom_is_ground(a) for a in insts):
            raise InferenceError(
                f"annotated disjunction {st.adid} instance stays non-ground "
                "under this use")
        key = family_key("a", idx, insts, key_body(body, s))
        if key not in self.ad_instances:
            lits = self._emit_body(body, s)
            n = len(self.ad_instances) + 1
            self.ad_instances[key] = AnnotatedDisjunction(
                tuple(zip(st.probs, insts)), lits, st.memoized,
                adid=f"{st.adid}_g{n}")

    def _emit_body(self, body, s) -> tuple:
        lits = []
        for l in body:
            a = resolve_atom(l.atom, s)
            if a.pred == "true" and not a.args:
                continue
            if is_builtin(a):
                continue
            if not atom_is_ground(a):
                raise InferenceError(
                    f"body literal {format_atom(a)} not ground under "
                    "relevant grounding")
            lits.append(Literal(a, l.negated))
            self.enqueue(a)
        return tuple(lits)

    # possible-mode SLD over the whole program
    def possible(self, goals, s, anc) -> Iterator[dict]:
        if not goals:
            yield s
            return
        lit, rest = goals[0], goals[1:]
        atom = resolve_atom(lit.atom, s)
        self.budget.spend()
        if lit.negated:
            if not atom_is_ground(atom):
                raise InferenceError(
                    f"negated literal {format_atom(atom)} not ground during "
                    "grounding")
            self.enqueue(atom)
            yield from self.possible(rest, s, anc)
            return
        ind = atom.indicator
        if atom.pred == "true" and not atom.args:
            yield from self.possible(rest, s, anc)
            return
        if ind == "findall/3":
            raise CapabilityError(self.engine, "findall",
                                  format_atom(atom))
        if ind == "prob/2":
            raise CapabilityError(self.engine, "meta-calls",
                                  format_atom(atom))
        if ind in BUILTINS:
            for s2 in BUILTINS[ind](atom.args, s, None):
                yield from self.possible(rest, s2, anc)
            return
        key = canon(atom) if atom_is_ground(atom) else None
        if key is not None and key in anc:
            return
        child_anc = anc | {key} if key is not None else anc
        for idx, st in self.stmts:
            if isinstance(st, ProbFact):
                mapping: dict = {}
                fatom = rename_atom(st.atom, mapping)
                s2 = unify_atoms(atom, fatom, s)
                if s2 is None:
                    continue
                body = tuple(Literal(rename_atom(l.atom, mapping), l.negated)
                             for l in st.body)
                label_t = st.label
                if isinstance(label_t, Var):
                    label_t = mapping.get(label_t, label_t)
                for s3 in self.possible(body, s2, child_anc):
                    self._register_fact(idx, st, atom, label_t, s3, body)
                    yield from self.possible(rest, s3, anc)
            elif isinstance(st, AnnotatedDisjunction):
                mapping = {}
                heads = tuple(rename_atom(a, mapping) for a in st.atoms)
                body = tuple(Literal(rename_atom(l.atom, mapping), l.negated)
                             for l in st.body)
                for h in heads:
                    s2 = unify_atoms(atom, h, s)
                    if s2 is None:
                        continue
                    for s3 in self.possible(body, s2, child_anc):
                        self._register_ad(idx, st, heads, s3, body)
                        yield from self.possible(rest, s3, anc)
            elif isinstance(st, Clause):
                mapping = {}
                head = rename_atom(st.head, mapping)
                s2 = unify_atoms(atom, head, s)
                if s2 is None:
                    continue
                body = tuple(Literal(rename_atom(l.atom, mapping), l.negated)
                             for l in st.body)
                for s3 in self.possible(body, s2, child_anc):
                    ground_head = resolve_atom(atom, s3)
                    if atom_is_ground(ground_head):
                        self.enqueue(ground_head)
                    yield from self.possible(rest, s3, anc)


def relevant_ground_program(program: Program, goals,
                            engine: str = "wmc") -> Program:
    """Ground program containing exactly the rules and probabilistic
    instances backward-reachable from the goal atoms."""
    if isinstance(goals, Atom):
        goals = (goals,)
    return _Grounder(program, engine).run(tuple(goals))


# ---------------------------------------------------------------------------
# weighted CNF

@dataclass(frozen=True, slots=True)
class WeightedCNF:
    n_vars: int
    clauses: tuple  # tuples of signed ints, DIMACS convention
    weights: dict  # var -> (w_pos, w_neg)
    var_names: dict  # var -> display name
    atom_var: dict  # canonical atom text -> var


def to_weighted_cnf(ground_program: Program, queries=(),
                    evidence: Optional[dict] = None,
                    engine: str = "wmc") -> WeightedCNF:
    """Clark completion of a ground relevant program, with query atoms and
    evidence conjoined as unit clauses."""
    evidence = evidence or {}
    program = apply_switch_encoding(ground_program) \
        if ground_program.ads else ground_program

    # guarded events: a ground bodied fact p::a :- b weighs the choice on a
    # fresh event variable and derives a from body plus event, so the weight
    # stays unconditional while the body gates the atom
    norm: list = []
    ev_n = 0
    for st in program.statements:
        if isinstance(st, ProbFact):
            if not st.memoized:
                raise CapabilityError(engine, "dememoized events",
                                      format_atom(st.atom))
            if st.body:
                if not atom_is_ground(st.atom) or any(
                        not atom_is_ground(l.atom) for l in st.body):
                    raise InferenceError(
                        "weighted CNF translation needs a relevant-ground "
                        "program (probabilistic fact still has a body)")
                ev_n += 1
                ev = Atom(f"aux_cnf{ev_n}", ())
                norm.append(ProbFact(st.label, ev, (), st.memoized))
                norm.append(Clause(st.atom, st.body + (Literal(ev),)))
                continue
        norm.append(st)
    program = Program(tuple(norm))

    fact_atoms: list = []
    fact_probs: dict = {}
    rules_by_head: dict = {}
    det_facts: set = set()
    order: list = []
    seen_atoms: set = set()

    def note(a: Atom):
        k = canon(a)
        if k not in seen_atoms:
            seen_atoms.add(k)
            order.append((k, a))
        return k

    for st in program.statements:
        if isinstance(st, ProbFact):
            if st.body:
                raise InferenceError(
                    "weighted CNF translation needs a relevant-ground "
                    "program (probabilistic fact still has a body)")
            if not atom_is_ground(st.atom):
                raise InferenceError(
                    f"non-ground fact {format_atom(st.atom)} in CNF input")
            k = note(st.atom)
            if k in fact_probs:
                raise InferenceError(f"duplicate fact {k}")
            fact_atoms.append(k)
            fact_probs[k] = float(st.label.value)
        elif isinstance(st, Clause):
            if not atom_is_ground(st.head) or any(
                    not atom_is_ground(l.atom) for l in st.body):
                raise InferenceError(
                    "weighted CNF translation needs ground clauses")
            hk = note(st.head)
            if not st.body:
                det_facts.add(hk)
                continue
            body = []
            for l in st.body:
                bk = note(l.atom)
                body.append((bk, l.negated))
            rules_by_head.setdefault(hk, []).append(tuple(body))

    for q in queries:
        note(q)
    for a in evidence:
        note(a)

    # tightness: no cycle through positive body literals
    pos_edges: dict = {}
    for hk, bodies in rules_by_head.items():
        for body in bodies:
            for bk, negated in body:
                if not negated:
                    pos_edges.setdefault(hk, set()).add(bk)
    _reject_positive_cycles(pos_edges)

    var_of: dict = {}
    names: dict = {}
    weights: dict = {}

    def new_var(name: str) -> int:
        v = len(names) + 1
        names[v] = name
        weights[v] = (1.0, 1.0)
        return v

    for k in fact_atoms:
        var_of[k] = new_var(k)
        p = fact_probs[k]
        weights[var_of[k]] = (p, 1.0 - p)
    for k, _atom in order:
        if k not in var_of:
            var_of[k] = new_var(k)

    clauses: list = []

    def lit(k: str, negated: bool) -> int:
        return -var_of[k] if negated else var_of[k]

    for k, _atom in order:
        if k in fact_probs:
            continue
        if k in det_facts:
            clauses.append((var_of[k],))
            continue
        bodies = rules_by_head.get(k, [])
        if not bodies:
            clauses.append((-var_of[k],))
            continue
        disjuncts = []
        for body in bodies:
            if len(body) == 1:
                bk, negated = body[0]
                disjuncts.append(lit(bk, negated))
            else:
                d = new_var(f"_body{len(names)}")
                for bk, negated in body:
                    clauses.append((-d, lit(bk, negated)))
                clauses.append((d,) + tuple(-lit(bk, negated)
                                            for bk, negated in body))
                disjuncts.append(d)
        clauses.append((-var_of[k],) + tuple(disjuncts))
        for d in disjuncts:
            clauses.append((var_of[k], -d))

    for q in queries:
        clauses.append((var_of[canon(q)],))
    for a, val in evidence.items():
        clauses.append((lit(canon(a), not val),))

    return WeightedCNF(len(names), tuple(clauses), weights, names,
                       {k: v for k, v in var_of.items()})


def _reject_positive_cycles(edges: dict):
    state: dict = {}

    def visit(node):
        stack = [(node, iter(sorted(edges.get(node, ()))))]
        state[node] = 1
        while stack:
            n, it = stack[-1]
            advanced = False
            for nxt in it:
                st = state.get(nxt)
                if st == 1:
                    raise InferenceError(
                        f"positive cycle through {nxt}; weighted CNF "
                        "translation requires a tight program")
                if st is None:
                    state[nxt] = 1
                    stack.append((nxt, iter(sorted(edges.get(nxt, ())))))
                    advanced = True
                    break
            if not advanced:
                state[n] = 2
                stack.pop()

    for node in sorted(edges):
        if node not in state:
            visit(node)


def to_dimacs(cnf: WeightedCNF) -> str:
    lines = ["c weighted cnf (completion of a relevant ground program)"]
    for v in range(1, cnf.n_vars + 1):
        lines.append(f"c var {v} {cnf.var_names[v]}")
    for v in range(1, cnf.n_vars + 1):
        wp, wn = cnf.weights[v]
        lines.append(f"c weight {v} {wp!r} {wn!r}")
    lines.append(f"p cnf {cnf.n_vars} {len(cnf.clauses)}")
    for cl in cnf.clauses:
        lines.append(" ".join(str(x) for x in cl) + " 0")
    return "\n".join(lines) + "\n"
