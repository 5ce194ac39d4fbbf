"""Approximate inference: anytime bounds, k-best, and Monte Carlo.

Sampling is counter-based: every random decision is a pure function of
(seed, sample index, event stream, occurrence), with one stream per basic
event. That buys three things at once. Estimates are reproducible to the
bit for a given seed, no matter which kernel backend is loaded. The same
event consulted twice in one sample, or consulted under negation, sees one
value without any bookkeeping. And it makes eager world generation and lazy
per-goal sampling interchangeable: they read the same coordinates, so they
sample the same world.

Two sampling routes share that RNG. Programs whose choices ground to a
finite family set are sampled in bulk through the compiled kernel: each
sample becomes a radix-packed outcome key, and only the distinct keys are
ever evaluated for truth. Programs using flexible probabilities,
dememoization, meta-calls or distributional clauses fall back to a lazy
resolution sampler that draws events as derivations touch them.
"""

from __future__ import annotations

import heapq
import math
from array import array
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from . import kernel as K
from . import worlds as W
from .errors import CapabilityError, InferenceError
from .exact import (EventRef, ExpLit, Explanation, _add_lit, disjoint_sum,
                    explanation_prob, program_features)
from .logic import (BUILTINS, Budget, DEFAULT_BUDGET, arith_eval,
                    contains_val, goal_term_to_literals, rewrite_vals_atom,
                    rewrite_vals_term)
from .syntax import (AnnotatedDisjunction, Clause, DistributionalClause,
                     LabelDecl, ProbFact, Program)
from .terms import (Atom, Const, Literal, Var, atom_is_ground, canon, fnv64,
                    format_atom, format_term, is_ground, list_items,
                    rename_atom, rename_term, resolve, resolve_atom,
                    term_to_atom, unify, unify_atoms)

_MASK = (1 << 64) - 1

_CONCEPTS = {
    "negation": "negation as failure",
    "flexible": "flexible probabilities",
    "meta": "meta-calls",
    "demem": "dememoized events",
    "findall": "findall",
    "constraints": "clausal constraints",
    "distributional": "distributional clauses",
}


def _deny(engine: str, feats: frozenset, flags):
    for f in flags:
        if f in feats:
            raise CapabilityError(engine, _CONCEPTS[f])


def _as_lits(goals) -> tuple:
    if isinstance(goals, Atom):
        return (Literal(goals),)
    if isinstance(goals, Literal):
        return (goals,)
    return tuple(g if isinstance(g, Literal) else Literal(g) for g in goals)


# ---------------------------------------------------------------------------
# bounds from partial derivations

@dataclass(frozen=True, slots=True)
class BoundState:
    """Snapshot of a truncated proof search. completed holds full
    explanations, open the partial ones of every unexpanded node; the
    true success probability lies in [lower, upper]."""

    completed: tuple
    open: tuple
    lower: float
    upper: float


@dataclass(frozen=True, slots=True)
class KBestResult:
    explanations: tuple
    bound: float


class _CommitFact:
    """Deferred event commit: sits in the goal list right after a
    probabilistic fact's body so the fully resolved instance is known by
    the time it runs."""

    __slots__ = ("idx", "st", "atom", "label", "body")

    def __init__(self, idx, st, atom, label, body):
        self.idx = idx
        self.st = st
        self.atom = atom
        self.label = label
        self.body = body


class _CommitChoice:
    __slots__ = ("idx", "st", "heads", "j", "body")

    def __init__(self, idx, st, heads, j, body):
        self.idx = idx
        self.st = st
        self.heads = heads
        self.j = j
        self.body = body


class _ProofSearch:
    """One-step expansion over SLD states for the bounds and k-best
    engines. A step is a rule application or a probabilistic consumption;
    builtins, deterministic facts and event commits are folded into the
    step that exposes them, so depth counts choice points, not plumbing."""

    def __init__(self, program: Program, engine: str, budget_limit: int):
        self.stmts = list(enumerate(program.statements))
        self.engine = engine
        self.budget = Budget(budget_limit)

    def root(self, goal_lits):
        return (tuple((l, frozenset()) for l in goal_lits), {}, ())

    def expand(self, node):
        """Returns (children, completions). Children are settled at their
        next costly literal; completions are (s, lits) pairs."""
        children: list = []
        done: list = []
        stack = [node]
        while stack:
            goals, s, lits = stack.pop()
            self.budget.spend()
            if not goals:
                done.append((s, lits))
                continue
            entry, rest = goals[0], goals[1:]
            if isinstance(entry, _CommitFact):
                out = self._commit_fact(entry, rest, s, lits)
                if out is not None:
                    stack.append(out)
                continue
            if isinstance(entry, _CommitChoice):
                out = self._commit_choice(entry, rest, s, lits)
                if out is not None:
                    stack.append(out)
                continue
            lit, anc = entry
            atom = resolve_atom(lit.atom, s)
            if lit.negated:
                raise CapabilityError(self.engine, _CONCEPTS["negation"],
                                      format_atom(atom))
            ind = atom.indicator
            if atom.pred == "true" and not atom.args:
                stack.append((rest, s, lits))
                continue
            if atom.pred in ("fail", "false") and not atom.args:
                continue
            if ind == "findall/3":
                raise CapabilityError(self.engine, "findall",
                                      format_atom(atom))
            if ind == "prob/2":
                raise CapabilityError(self.engine, "meta-calls",
                                      format_atom(atom))
            if ind in BUILTINS:
                for s2 in BUILTINS[ind](atom.args, s, None):
                    stack.append((rest, s2, lits))
                continue
            key = canon(atom) if atom_is_ground(atom) else None
            if key is not None and key in anc:
                continue
            child = anc | {key} if key is not None else anc
            for idx, st in self.stmts:
                if isinstance(st, Clause):
                    mapping: dict = {}
                    head = rename_atom(st.head, mapping)
                    s2 = unify_atoms(atom, head, s)
                    if s2 is None:
                        continue
                    if not st.body:
                        stack.append((rest, s2, lits))
                        continue
                    body = tuple(
                        (Literal(rename_atom(l.atom, mapping), l.negated),
                         child) for l in st.body)
                    children.append((body + rest, s2, lits))
                elif isinstance(st, LabelDecl):
                    s2 = unify_atoms(atom, st.atom, s)
                    if s2 is not None:
                        stack.append((rest, s2, lits))
                elif isinstance(st, ProbFact):
                    mapping = {}
                    fatom = rename_atom(st.atom, mapping)
                    s2 = unify_atoms(atom, fatom, s)
                    if s2 is None:
                        continue
                    label = rename_term(st.label, mapping)
                    body = tuple(
                        (Literal(rename_atom(l.atom, mapping), l.negated),
                         child) for l in st.body)
                    commit = _CommitFact(idx, st, fatom, label,
                                         tuple(l for l, _ in body))
                    children.append((body + (commit,) + rest, s2, lits))
                elif isinstance(st, AnnotatedDisjunction):
                    mapping = {}
                    heads = tuple(rename_atom(a, mapping) for a in st.atoms)
                    body = tuple(
                        (Literal(rename_atom(l.atom, mapping), l.negated),
                         child) for l in st.body)
                    blits = tuple(l for l, _ in body)
                    for j, h in enumerate(heads):
                        if st.probs[j] == 0.0:
                            continue
                        s2 = unify_atoms(atom, h, s)
                        if s2 is None:
                            continue
                        commit = _CommitChoice(idx, st, heads, j, blits)
                        children.append((body + (commit,) + rest, s2, lits))
                elif isinstance(st, DistributionalClause):
                    if st.rv.pred == atom.pred \
                            and len(st.rv.args) == len(atom.args):
                        raise CapabilityError(self.engine,
                                              _CONCEPTS["distributional"],
                                              format_atom(atom))
        return children, done

    def _commit_fact(self, c, rest, s, lits):
        inst = resolve_atom(c.atom, s)
        if not atom_is_ground(inst):
            raise InferenceError(
                f"probabilistic fact {format_atom(inst)} not ground in "
                "this derivation")
        label = resolve(c.label, s)
        if not (isinstance(label, Const)
                and isinstance(label.value, (int, float))
                and not isinstance(label.value, bool)):
            raise CapabilityError(self.engine, _CONCEPTS["flexible"],
                                  format_atom(inst))
        p = float(label.value)
        if p == 0.0:
            return None
        if not c.st.memoized:
            raise CapabilityError(self.engine, _CONCEPTS["demem"],
                                  format_atom(inst))
        base = W.family_key("f", c.idx, (inst,), W.key_body(c.body, s))
        ev = EventRef("fact", c.idx, base, (p,), (inst,), True, 0)
        lits2 = _add_lit(lits, ExpLit(ev, 1, True))
        if lits2 is None:
            return None
        return (rest, s, lits2)

    def _commit_choice(self, c, rest, s, lits):
        insts = tuple(resolve_atom(a, s) for a in c.heads)
        if not all(atom_is_ground(a) for a in insts):
            raise InferenceError(
                f"annotated disjunction {c.st.adid} not ground in this "
                "derivation")
        if not c.st.memoized:
            raise CapabilityError(self.engine, _CONCEPTS["demem"],
                                  format_atom(insts[c.j]))
        base = W.family_key("a", c.idx, insts, W.key_body(c.body, s))
        ev = EventRef("choice", c.idx, base, c.st.probs, insts, True, 0)
        lits2 = _add_lit(lits, ExpLit(ev, c.j, True))
        if lits2 is None:
            return None
        return (rest, s, lits2)


def _definite_check(engine: str, program: Program, goal_lits):
    feats = program_features(program)
    _deny(engine, feats, ("negation", "flexible", "meta", "demem",
                          "findall", "constraints", "distributional"))
    for l in goal_lits:
        if l.negated:
            raise CapabilityError(engine, _CONCEPTS["negation"],
                                  format_atom(l.atom))


def _dnf(pairs) -> list:
    out, seen = [], set()
    for _s, lits in pairs:
        k = frozenset(lits)
        if k not in seen:
            seen.add(k)
            out.append(Explanation(tuple(lits)))
    return out


def bounds(program: Program, query, depth: Optional[int] = None,
           explanations: Optional[int] = None,
           budget_limit: int = DEFAULT_BUDGET) -> BoundState:
    """Anytime lower/upper bounds on the success probability of a definite
    query. The proof tree is explored level by level; nodes past the depth
    budget, or left over once enough explanations completed, stay open and
    their partial explanations pad the upper bound."""
    goal_lits = _as_lits(query)
    _definite_check("bounds", program, goal_lits)
    search = _ProofSearch(program, "bounds", budget_limit)
    completed: list = []
    opened: list = []
    queue = [(search.root(goal_lits), 0)]
    if explanations is not None and explanations <= 0:
        opened = [n for n, _d in queue]
    else:
        while queue:
            node, d = queue.pop(0)
            if depth is not None and d >= depth:
                opened.append(node)
                continue
            children, done = search.expand(node)
            completed.extend(done)
            if explanations is not None and len(completed) >= explanations:
                # children of the tripping node are unexplored refinements
                opened.extend((g, s, l) for g, s, l in children)
                opened.extend(n for n, _d in queue)
                completed = completed[:explanations]
                break
            queue.extend((ch, d + 1) for ch in children)
    low_dnf = _dnf(completed)
    up_dnf = low_dnf + [Explanation(tuple(l))
                        for _g, _s, l in opened]
    lower = disjoint_sum(low_dnf) if low_dnf else 0.0
    upper = disjoint_sum(up_dnf) if up_dnf else lower
    open_expl = tuple(Explanation(tuple(l)) for _g, _s, l in opened)
    return BoundState(tuple(low_dnf), open_expl, lower, upper)


def k_best(program: Program, query, k: int,
           budget_limit: int = DEFAULT_BUDGET) -> KBestResult:
    """Lower bound from the k individually most probable explanations.
    Best-first on partial-explanation probability: extending a partial
    never raises it, so completions pop in best-first order."""
    goal_lits = _as_lits(query)
    _definite_check("kbest", program, goal_lits)
    if k <= 0:
        return KBestResult((), 0.0)
    search = _ProofSearch(program, "kbest", budget_limit)
    chosen: list = []
    seen: set = set()
    seq = 0
    heap = [(-1.0, 0, search.root(goal_lits), False)]
    while heap and len(chosen) < k:
        _negp, _seq, node, terminal = heapq.heappop(heap)
        if terminal:
            key = frozenset(node[2])
            if key not in seen:
                seen.add(key)
                chosen.append(Explanation(tuple(node[2])))
            continue
        children, done = search.expand(node)
        for s, lits in done:
            seq += 1
            heapq.heappush(heap, (-explanation_prob(lits), seq,
                                  ((), s, lits), True))
        for ch in children:
            seq += 1
            heapq.heappush(heap, (-explanation_prob(ch[2]), seq, ch, False))
    return KBestResult(tuple(chosen), disjoint_sum(chosen) if chosen else 0.0)


# ---------------------------------------------------------------------------
# sampling estimates

@dataclass(frozen=True, slots=True)
class SampleEstimate:
    estimate: float
    n: int
    successes: int
    stderr: float
    seed: int
    method: str
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class MeanEstimate:
    mean: float
    n: int
    stderr: float
    seed: int
    method: str
    metadata: dict = field(default_factory=dict)


def _binom(successes: int, n: int, seed: int, method: str,
           metadata: dict) -> SampleEstimate:
    est = successes / n
    err = (est * (1.0 - est) / n) ** 0.5
    return SampleEstimate(est, n, successes, err, seed, method, metadata)


# ---------------------------------------------------------------------------
# bulk route: pack each sample into a radix outcome key

def _worldkey_layout(gp: W.GroundedProgram):
    """Kernel arrays for sampling every family at once, or None when the
    packed radix would not fit 64 bits."""
    streams, kinds, offsets, counts, probs, mults = [], [], [], [], [], []
    radix = 1
    for f in gp.families:
        streams.append(fnv64(f.key))
        offsets.append(len(probs))
        if f.kind == "fact":
            kinds.append(0)
            counts.append(1)
            probs.append(f.probs[1])
            n_out = 2
        else:
            heads = len(f.atoms)
            n_out = f.n_outcomes
            kinds.append(1 if n_out > heads else 2)
            counts.append(heads)
            probs.extend(f.probs[:heads])
        mults.append(radix)
        radix *= n_out
        if radix > (1 << 62):
            return None
    return (array("Q", streams), array("q", kinds), array("q", offsets),
            array("q", counts), array("d", probs), array("Q", mults))


def _decode_key(gp: W.GroundedProgram, layout, key: int) -> dict:
    mults = layout[5]
    out = {}
    for f in gp.families:
        n_out = 2 if f.kind == "fact" else f.n_outcomes
        out[f.index] = (key // mults[f.index]) % n_out
    return out


def _replay_truth(gp: W.GroundedProgram, outcomes: dict, queries) -> tuple:
    """World truth per query conjunction for one full outcome vector.
    Families fire in branch order as their bodies become true; outcomes of
    families whose body never holds are ignored, which marginalizes them
    away."""
    order = W._branch_order(gp)
    fired: set = set()
    atoms: set = set()
    while True:
        solver = gp.solver(atoms)
        nxt = None
        for f in order:
            if f.index in fired:
                continue
            if not f.body or solver.prove(f.body):
                nxt = f
                break
        if nxt is None:
            break
        fired.add(nxt.index)
        a = nxt.outcome_atom(outcomes[nxt.index])
        if a is not None:
            atoms.add(a)
    solver = gp.solver(atoms)
    return tuple(solver.prove(q) for q in queries)


def _bulk_counts(program: Program, queries, n: int, seed: int,
                 domains: Optional[dict]):
    """Success counts per query conjunction via packed worldkeys, or None
    when the program does not ground to a finite family set."""
    try:
        gp = W.ground(program, domains)
    except (CapabilityError, InferenceError):
        return None
    layout = _worldkey_layout(gp)
    if layout is None:
        return None
    keys = K.sample_worldkeys(n, seed & _MASK, *layout)
    succ = [0] * len(queries)
    distinct = Counter(keys)
    for key, count in distinct.items():
        truth = _replay_truth(gp, _decode_key(gp, layout, key), queries)
        for qi, t in enumerate(truth):
            if t:
                succ[qi] += count
    meta = {"route": "worldkey", "families": len(gp.families),
            "distinct_worlds": len(distinct)}
    return succ, meta


# ---------------------------------------------------------------------------
# lazy route: draw events as resolution touches them

def _cyclic_preds(program: Program) -> frozenset:
    """Predicates that can re-enter themselves within one derivation chain.

    Chains reset at negation, findall, meta-calls and distribution bodies,
    so only positive clause-body edges matter. Everything else can skip the
    ground-goal ancestor check, which is pure overhead for them.
    """
    edges: dict = {}
    for st in program.statements:
        heads: tuple
        if isinstance(st, Clause):
            heads = (st.head,)
        elif isinstance(st, ProbFact):
            heads = (st.atom,)
        elif isinstance(st, AnnotatedDisjunction):
            heads = st.atoms
        else:
            continue
        if not st.body:
            continue
        outs = {l.atom.indicator for l in st.body if not l.negated}
        for h in heads:
            edges.setdefault(h.indicator, set()).update(outs)
    cyclic = set()
    for start in edges:
        seen: set = set()
        stack = [start]
        while stack:
            node = stack.pop()
            for nxt in edges.get(node, ()):
                if nxt == start:
                    cyclic.add(start)
                    stack.clear()
                    break
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
    return frozenset(cyclic)


class _Sampler:
    """Resolution over one sampled world at a time.

    Each probabilistic statement instance owns an RNG stream derived from
    its grounding, so truth is a function of the sample index alone:
    re-consulting a memoized event, in any order, at any backtrack depth,
    re-reads the same coordinate. Dememoized events advance a per-sample
    occurrence cursor instead, giving a fresh draw per use. Distributional
    outcomes are drawn on first reference through val() and cached for the
    rest of the sample.
    """

    def __init__(self, program: Program, seed: int, budget_limit: int,
                 engine: str, inner_n: int = 0, meta_stack=frozenset()):
        self.program = program
        self.stmts = list(enumerate(program.statements))
        self.seed = seed & _MASK
        self.budget_limit = budget_limit
        self.engine = engine
        self.inner_n = inner_n
        self.meta_stack = meta_stack
        self.meta_cache: dict = {}
        self.nested = False
        self.i = 0
        self.occ: dict = {}
        self.rvs: dict = {}
        self.rv_stack: set = set()
        self.budget = Budget(budget_limit)
        self._streams: dict = {}
        self._cyclic = _cyclic_preds(program)
        # ground bodiless statements have one instance; key it up front
        self._fixed: dict = {}
        # only same-indicator statements can match a goal, so index them
        self._by_pred: dict = {}
        self._dists: dict = {}
        for idx, st in self.stmts:
            if isinstance(st, ProbFact):
                self._index(st.atom, idx, st)
                if not st.body and isinstance(st.label, Const) \
                        and atom_is_ground(st.atom):
                    self._fixed[idx] = W.family_key("f", idx, (st.atom,), ())
            elif isinstance(st, AnnotatedDisjunction):
                for a in st.atoms:
                    self._index(a, idx, st)
                if not st.body and all(atom_is_ground(a) for a in st.atoms):
                    self._fixed[idx] = W.family_key("a", idx, st.atoms, ())
            elif isinstance(st, Clause):
                self._index(st.head, idx, st)
            elif isinstance(st, LabelDecl):
                self._index(st.atom, idx, st)
            elif isinstance(st, DistributionalClause):
                # safe to rename once: each resolution starts from a fresh
                # substitution and only numbers escape it
                mapping: dict = {}
                head = rename_atom(st.rv, mapping)
                body = tuple(Literal(rename_atom(l.atom, mapping), l.negated)
                             for l in st.body)
                params = tuple(rename_term(t, mapping)
                               for t in st.dist.params)
                self._dists.setdefault(st.rv.indicator, []).append(
                    (st, head, body, params))
        # indicators defined only by ground bodiless facts admit a set
        # membership test instead of head unification
        self._factsets: dict = {}
        for ind, entries in self._by_pred.items():
            if all(isinstance(st, Clause) and not st.body
                   and atom_is_ground(st.head) for _, st in entries):
                self._factsets[ind] = {canon(st.head) for _, st in entries}
        self._rvstreams: dict = {}

    def _index(self, atom: Atom, idx: int, st):
        lst = self._by_pred.setdefault(atom.indicator, [])
        if not lst or lst[-1][0] != idx:
            lst.append((idx, st))

    def begin(self, i: int):
        self.i = i
        self.occ = {}
        self.rvs = {}
        self.rv_stack = set()
        self.budget = Budget(self.budget_limit)

    # the findall builtin calls back through this, like on a plain Solver
    def solve(self, goals, s: Optional[dict] = None):
        s = {} if s is None else s
        entries = tuple((g, frozenset()) if isinstance(g, Literal) else g
                        for g in goals)
        yield from self._run(entries, s)

    def prove(self, goals, s: Optional[dict] = None) -> bool:
        for _ in self.solve(goals, s):
            return True
        return False

    def first(self, goals) -> Optional[dict]:
        for s in self.solve(goals):
            return s
        return None

    def _run(self, entries, s):
        if not entries:
            yield s
            return
        (lit, anc), rest = entries[0], entries[1:]
        atom = resolve_atom(lit.atom, s)
        if self._dists and contains_val(atom):
            atom = rewrite_vals_atom(atom, s, self._rv_value)
        if lit.negated:
            if not atom_is_ground(atom):
                raise InferenceError(
                    f"negated goal {format_atom(atom)} is not ground")
            if self.prove((Literal(atom),), s):
                return
            yield from self._run(rest, s)
            return
        self.budget.spend()
        ind = atom.indicator
        if atom.pred == "true" and not atom.args:
            yield from self._run(rest, s)
            return
        if atom.pred in ("fail", "false") and not atom.args:
            return
        if ind in BUILTINS:
            for s2 in BUILTINS[ind](atom.args, s, self):
                yield from self._run(rest, s2)
            return
        if ind == "prob/2":
            for s2 in self._meta(atom, s):
                yield from self._run(rest, s2)
            return
        if ind in self._dists:
            raise InferenceError(
                f"random variable {format_atom(atom)} used as a goal; "
                "reference its outcome through val()")
        fs = self._factsets.get(ind)
        if fs is not None and atom_is_ground(atom):
            if canon(atom) in fs:
                yield from self._run(rest, s)
            return
        if ind in self._cyclic and atom_is_ground(atom):
            key = canon(atom)
            if key in anc:
                return
            child = anc | {key}
        else:
            child = anc
        for idx, st in self._by_pred.get(ind, ()):
            if isinstance(st, Clause):
                mapping: dict = {}
                head = rename_atom(st.head, mapping)
                s2 = unify_atoms(atom, head, s)
                if s2 is None:
                    continue
                body = tuple(
                    (Literal(rename_atom(l.atom, mapping), l.negated), child)
                    for l in st.body)
                for s3 in self._run(body, s2):
                    yield from self._run(rest, s3)
            elif isinstance(st, ProbFact):
                yield from self._fact(idx, st, atom, rest, s, child)
            elif isinstance(st, AnnotatedDisjunction):
                yield from self._choice(idx, st, atom, rest, s, child)
            else:
                s2 = unify_atoms(atom, st.atom, s)
                if s2 is not None:
                    yield from self._run(rest, s2)

    def _fact(self, idx, st, atom, rest, s, anc):
        mapping: dict = {}
        fatom = rename_atom(st.atom, mapping)
        s2 = unify_atoms(atom, fatom, s)
        if s2 is None:
            return
        label_t = st.label
        if isinstance(label_t, Var):
            label_t = mapping.get(label_t, label_t)
        body = tuple((Literal(rename_atom(l.atom, mapping), l.negated), anc)
                     for l in st.body)
        fixed = self._fixed.get(idx)
        consulted: dict = {}
        for s3 in ((s2,) if not body else self._run(body, s2)):
            if fixed is not None:
                inst, base = st.atom, fixed
                p = float(st.label.value)
            else:
                inst = resolve_atom(fatom, s3)
                if not atom_is_ground(inst):
                    raise InferenceError(
                        f"probabilistic fact {format_atom(inst)} not ground "
                        "in this derivation")
                p = self._label_value(label_t, s3, inst)
                base = W.family_key(
                    "f", idx, (inst,),
                    W.key_body(tuple(l for l, _ in body), s3))
            if base in consulted:
                hit = consulted[base]
            else:
                hit = self._draw_u(st.memoized, base) < p
                consulted[base] = hit
            if hit:
                yield from self._run(rest, s3)

    def _choice(self, idx, st, atom, rest, s, anc):
        mapping: dict = {}
        heads = tuple(rename_atom(a, mapping) for a in st.atoms)
        body = tuple((Literal(rename_atom(l.atom, mapping), l.negated), anc)
                     for l in st.body)
        blits = tuple(l for l, _ in body)
        fixed = self._fixed.get(idx)
        # one consultation of the goal draws each event instance once,
        # even though every head is tried as an alternative
        drawn: dict = {}
        for j, h in enumerate(heads):
            if st.probs[j] == 0.0:
                continue
            s2 = unify_atoms(atom, h, s)
            if s2 is None:
                continue
            for s3 in ((s2,) if not body else self._run(body, s2)):
                if fixed is not None:
                    base = fixed
                else:
                    insts = tuple(resolve_atom(x, s3) for x in heads)
                    if not all(atom_is_ground(a) for a in insts):
                        raise InferenceError(
                            f"annotated disjunction {st.adid} not ground in "
                            "this derivation")
                    base = W.family_key("a", idx, insts,
                                        W.key_body(blits, s3))
                if base in drawn:
                    outcome = drawn[base]
                else:
                    outcome = self._draw_outcome(st, base)
                    drawn[base] = outcome
                if outcome == j:
                    yield from self._run(rest, s3)

    def _label_value(self, label_t, s, inst) -> float:
        label = resolve(label_t, s)
        if not (isinstance(label, Const)
                and isinstance(label.value, (int, float))
                and not isinstance(label.value, bool)):
            raise InferenceError(
                f"probability of {format_atom(inst)} is not a number in "
                "this derivation")
        p = float(label.value)
        if not 0.0 <= p <= 1.0:
            raise InferenceError(
                f"probability {p} outside [0, 1] for {format_atom(inst)}")
        return p

    def _draw_u(self, memoized: bool, base: str) -> float:
        """One uniform per event consultation; dememoized events advance
        their occurrence cursor instead of re-reading draw zero."""
        if memoized:
            draw = 0
        else:
            draw = self.occ.get(base, 0)
            self.occ[base] = draw + 1
        stream = self._streams.get(base)
        if stream is None:
            stream = self._streams[base] = fnv64(base)
        return K.unit_uniform(self.seed, self.i, stream, draw)

    def _draw_outcome(self, st: AnnotatedDisjunction, base: str) -> int:
        u = self._draw_u(st.memoized, base)
        acc = 0.0
        for j, p in enumerate(st.probs):
            acc += p
            if u < acc:
                return j
        # leftover mass is the null choice; without one, rounding residue
        # collapses onto the last head, matching the packed-key kernel
        if st.null_prob > 0.0:
            return len(st.probs)
        return len(st.probs) - 1

    # -- meta-calls ---------------------------------------------------

    def _meta(self, atom, s):
        gterm = resolve(atom.args[0], s)
        if not is_ground(gterm):
            raise InferenceError(
                f"prob/2 goal {format_term(gterm)} is not ground")
        ckey = canon(gterm)
        est = self.meta_cache.get(ckey)
        if est is None:
            if ckey in self.meta_stack:
                raise InferenceError(f"cyclic meta-call on {ckey}")
            if self.inner_n <= 0:
                raise InferenceError("meta-call sampling needs inner_n > 0")
            inner_seed = K.mix64((self.seed ^ fnv64("meta|" + ckey)) & _MASK)
            inner = _Sampler(self.program, inner_seed, self.budget_limit,
                             self.engine, self.inner_n,
                             self.meta_stack | {ckey})
            goals = _as_lits(goal_term_to_literals(gterm))
            hits = 0
            for j in range(self.inner_n):
                inner.begin(j)
                if inner.prove(goals):
                    hits += 1
            est = hits / self.inner_n
            self.meta_cache[ckey] = est
            self.nested = True
        s2 = unify(atom.args[1], Const(est), s)
        if s2 is not None:
            yield s2

    # -- distributional outcomes --------------------------------------

    def _rv_value(self, term):
        ckey = canon(term)
        cached = self.rvs.get(ckey)
        if cached is not None:
            return cached
        if ckey in self.rv_stack:
            raise InferenceError(
                f"random variable {format_term(term)} defined in terms of "
                "itself")
        goal = term_to_atom(term)
        if goal is None:
            raise InferenceError(f"bad random-variable term "
                                 f"{format_term(term)}")
        for st, head, lits, params in self._dists.get(goal.indicator, ()):
            s = unify_atoms(goal, head, {})
            if s is None:
                continue
            body = tuple((l, frozenset()) for l in lits)
            self.rv_stack.add(ckey)
            try:
                sol = None
                for s2 in self._run(body, s):
                    sol = s2
                    break
            finally:
                self.rv_stack.discard(ckey)
            if sol is None:
                continue
            value = self._draw_rv(st.dist, params, sol, ckey)
            self.rvs[ckey] = value
            return value
        raise InferenceError(
            f"no distribution defines {format_term(term)} here")

    def _draw_rv(self, spec, raw_params, s, ckey):
        stream = self._rvstreams.get(ckey)
        if stream is None:
            stream = self._rvstreams[ckey] = fnv64("rv|" + ckey)
        params = tuple(rewrite_vals_term(t, s, self._rv_value)
                       for t in raw_params)
        if spec.name == "discrete":
            if len(params) != 1:
                raise InferenceError("discrete takes one outcome list")
            pairs = self._discrete_pairs(params[0], s, ckey)
            u = K.unit_uniform(self.seed, self.i, stream, 0)
            acc = 0.0
            for p, v in pairs:
                acc += p
                if u < acc:
                    return v
            return pairs[-1][1]
        if spec.name == "uniform":
            if len(params) != 1:
                raise InferenceError("uniform takes one value list")
            items = [resolve(t, s) for t in list_items(params[0], s)]
            if not items:
                raise InferenceError(f"empty uniform choice for {ckey}")
            u = K.unit_uniform(self.seed, self.i, stream, 0)
            return items[min(int(u * len(items)), len(items) - 1)]
        nums = tuple(float(arith_eval(t, s)) for t in params)
        if spec.name == "poisson":
            (rate,) = nums
            if rate <= 0.0:
                raise InferenceError(f"poisson rate {rate} for {ckey}")
            return Const(K.draw_poisson(rate, self.seed, self.i, stream))
        if spec.name == "gaussian":
            mu, var = nums
            if var <= 0.0:
                raise InferenceError(f"gaussian variance {var} for {ckey}")
            return Const(K.draw_gaussian(mu, math.sqrt(var), self.seed,
                                         self.i, stream))
        if spec.name == "gamma":
            shape, scale = nums
            if shape <= 0.0 or scale <= 0.0:
                raise InferenceError(
                    f"gamma parameters ({shape}, {scale}) for {ckey}")
            return Const(K.draw_gamma(shape, scale, self.seed, self.i,
                                      stream))
        raise InferenceError(f"unknown distribution {spec.name}")

    def _discrete_pairs(self, list_term, s, ckey) -> list:
        items = list_items(list_term, s)
        if not items:
            raise InferenceError(f"empty discrete distribution for {ckey}")
        pairs = []
        total = 0.0
        for it in items:
            it = resolve(it, s)
            if not (hasattr(it, "functor") and it.functor == ":"
                    and len(it.args) == 2):
                raise InferenceError(
                    f"discrete outcomes must be weight:value, got "
                    f"{format_term(it)}")
            p = float(arith_eval(it.args[0], s))
            if p < 0.0:
                raise InferenceError("negative weight in discrete "
                                     f"distribution for {ckey}")
            total += p
            pairs.append((p, resolve(it.args[1], s)))
        if total > 1.0 + 1e-9:
            raise InferenceError(
                f"discrete weights for {ckey} sum to {total}")
        return pairs


# ---------------------------------------------------------------------------
# estimator entry points

def sample_backward(program: Program, query, n: int, seed: int,
                    budget_limit: int = DEFAULT_BUDGET,
                    inner_n: Optional[int] = None,
                    domains: Optional[dict] = None) -> SampleEstimate:
    """Estimate the success probability by proving the query in n sampled
    worlds. inner_n sets the sample count of nested prob/2 estimates and
    defaults to n."""
    if n <= 0:
        raise InferenceError("sample count must be positive")
    goal_lits = _as_lits(query)
    feats = program_features(program)
    _deny("mc-backward", feats, ("constraints",))
    lazy = bool(feats & {"flexible", "meta", "demem", "distributional"}) \
        or any(contains_val(l.atom) for l in goal_lits)
    if not lazy:
        bulk = _bulk_counts(program, (goal_lits,), n, seed, domains)
        if bulk is not None:
            (successes,), meta = bulk
            return _binom(successes, n, seed, "mc-backward", meta)
    smp = _Sampler(program, seed, budget_limit, "mc-backward",
                   inner_n if inner_n is not None else n)
    successes = 0
    for i in range(n):
        smp.begin(i)
        if smp.prove(goal_lits):
            successes += 1
    meta = {"route": "sld"}
    if smp.nested:
        meta["nested_estimation"] = True
        meta["inner_n"] = smp.inner_n
    return _binom(successes, n, seed, "mc-backward", meta)


def sample_answers(program: Program, goal, n: int, seed: int,
                   budget_limit: int = DEFAULT_BUDGET,
                   inner_n: Optional[int] = None) -> dict:
    """Frequencies of the first answer substitution per sampled world,
    keyed by the rendered goal instance. Useful where the answer itself is
    random, e.g. under dememoization."""
    if n <= 0:
        raise InferenceError("sample count must be positive")
    goal_lits = _as_lits(goal)
    feats = program_features(program)
    _deny("mc-backward", feats, ("constraints",))
    smp = _Sampler(program, seed, budget_limit, "mc-backward",
                   inner_n if inner_n is not None else n)
    hits: Counter = Counter()
    misses = 0
    for i in range(n):
        smp.begin(i)
        s = smp.first(goal_lits)
        if s is None:
            misses += 1
            continue
        answer = tuple(("not " if l.negated else "")
                       + canon(resolve_atom(l.atom, s)) for l in goal_lits)
        hits[answer] += 1
    out = {}
    for answer in sorted(hits):
        meta = {"route": "sld", "misses": misses}
        out[answer] = _binom(hits[answer], n, seed, "mc-backward", meta)
    return out


def sample_forward(program: Program, queries, n: int, seed: int,
                   budget_limit: int = DEFAULT_BUDGET,
                   domains: Optional[dict] = None) -> dict:
    """Generate n worlds and check every query in each, returning one
    estimate per query. All queries within a sample see the same world."""
    if n <= 0:
        raise InferenceError("sample count must be positive")
    qlist = [q if isinstance(q, Literal) else Literal(q) for q in queries]
    feats = program_features(program)
    _deny("mc-forward", feats, ("flexible", "meta", "demem", "constraints"))
    if "distributional" not in feats:
        bulk = _bulk_counts(program, tuple((l,) for l in qlist), n, seed,
                            domains)
        if bulk is not None:
            succ, meta = bulk
            return {q: _binom(c, n, seed, "mc-forward", dict(meta))
                    for q, c in zip(queries, succ)}
    smp = _Sampler(program, seed, budget_limit, "mc-forward")
    succ = [0] * len(qlist)
    for i in range(n):
        smp.begin(i)
        for qi, lit in enumerate(qlist):
            if smp.prove((lit,)):
                succ[qi] += 1
    return {q: _binom(c, n, seed, "mc-forward", {"route": "generative"})
            for q, c in zip(queries, succ)}


def sample_forward_mean(program: Program, goal, var, n: int, seed: int,
                        budget_limit: int = DEFAULT_BUDGET) -> MeanEstimate:
    """Mean of a numeric variable bound by the goal, over the worlds where
    the goal succeeds. The estimate conditions on success: failed samples
    are skipped and reported in the metadata."""
    if n <= 0:
        raise InferenceError("sample count must be positive")
    goal_lits = _as_lits(goal)
    feats = program_features(program)
    _deny("mc-forward", feats, ("flexible", "meta", "demem", "constraints"))
    smp = _Sampler(program, seed, budget_limit, "mc-forward")
    total = 0.0
    total_sq = 0.0
    m = 0
    for i in range(n):
        smp.begin(i)
        s = smp.first(goal_lits)
        if s is None:
            continue
        v = resolve(var, s)
        if not (isinstance(v, Const) and isinstance(v.value, (int, float))
                and not isinstance(v.value, bool)):
            raise InferenceError(
                f"goal bound {format_term(var)} to non-numeric "
                f"{format_term(v)}")
        x = float(v.value)
        total += x
        total_sq += x * x
        m += 1
    if m == 0:
        raise InferenceError("goal succeeded in no sampled world")
    mean = total / m
    if m > 1:
        variance = max(0.0, (total_sq - m * mean * mean) / (m - 1))
        err = (variance / m) ** 0.5
    else:
        err = float("inf")
    return MeanEstimate(mean, m, err, seed, "mc-forward",
                        {"route": "generative", "skipped": n - m})
