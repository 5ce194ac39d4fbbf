"""Program representation, parser and pretty-printer.

The surface language is Prolog-flavoured:

    0.1::burglary.                          probabilistic fact
    0.7::hears_alarm(X) :- person(X).       fact with a domain body
    P::p(P).                                flexible probability
    0.2::green ; 0.7::red ; 0.1::blue :- draw.   annotated disjunction
    dememoize 1/3::color(red) ; ...         per-occurrence choice
    alarm :- earthquake.                    rule
    nballs ~ poisson(6).                    distributional clause
    color(B) ~ discrete([0.7:green, 0.3:blue]) :- ball(B).
    constraint(X = Y :- calls(X), calls(Y)).
    label(edge(a, b), 7).                   semiring-labeled fact
    query(calls(mary)).
    evidence(calls(mary), true).

Comments run from % to end of line. Statements end with a period.
parse_program collects every diagnostic it can before raising, so a file with
three bad clauses reports three positions, not one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import Diagnostic, ProgramError
from .terms import (Atom, Const, Literal, Struct, Term, Var, atom_is_ground,
                    atom_vars, format_atom, format_literal, format_term,
                    make_list, term_to_atom, term_vars)

# ---------------------------------------------------------------------------
# statements

@dataclass(frozen=True, slots=True)
class Clause:
    head: Atom
    body: tuple = ()


@dataclass(frozen=True, slots=True)
class ProbFact:
    """label::atom [:- body]. The label is a numeric Const, or a Var bound at
    call time (flexible probability)."""

    label: Term
    atom: Atom
    body: tuple = ()
    memoized: bool = True

    @property
    def is_flexible(self) -> bool:
        return isinstance(self.label, Var)


@dataclass(frozen=True, slots=True)
class AnnotatedDisjunction:
    """p1::h1 ; ... ; pn::hn [:- body]; probabilities sum to at most one,
    the remainder going to a null choice that derives nothing."""

    heads: tuple  # ((prob, Atom), ...)
    body: tuple = ()
    memoized: bool = True
    adid: str = ""

    @property
    def probs(self) -> tuple:
        return tuple(p for p, _ in self.heads)

    @property
    def atoms(self) -> tuple:
        return tuple(a for _, a in self.heads)

    @property
    def null_prob(self) -> float:
        rest = 1.0 - sum(self.probs)
        return 0.0 if rest <= 1e-9 else rest


@dataclass(frozen=True, slots=True)
class DistributionSpec:
    name: str  # discrete | uniform | poisson | gaussian | gamma
    params: tuple = ()  # raw argument terms, may contain variables


@dataclass(frozen=True, slots=True)
class DistributionalClause:
    rv: Atom
    dist: DistributionSpec
    body: tuple = ()


@dataclass(frozen=True, slots=True)
class ClausalConstraint:
    """Body solutions must satisfy at least one head literal; worlds that
    violate any instance are conditioned away. Empty heads mean denial."""

    heads: tuple = ()
    body: tuple = ()


@dataclass(frozen=True, slots=True)
class LabelDecl:
    """Semiring label for a basic fact; neg_value overrides the semiring's
    complement hook for the fact's negation."""

    atom: Atom
    value: Term
    neg_value: Optional[Term] = None


@dataclass(frozen=True, slots=True)
class QueryDirective:
    atom: Atom


@dataclass(frozen=True, slots=True)
class EvidenceDirective:
    atom: Atom
    value: bool = True


Statement = object  # union of the above, kept loose on purpose


@dataclass(frozen=True, slots=True)
class Program:
    statements: tuple = ()

    @property
    def clauses(self) -> tuple:
        return tuple(s for s in self.statements if isinstance(s, Clause))

    @property
    def prob_facts(self) -> tuple:
        return tuple(s for s in self.statements if isinstance(s, ProbFact))

    @property
    def ads(self) -> tuple:
        return tuple(s for s in self.statements
                     if isinstance(s, AnnotatedDisjunction))

    @property
    def dist_clauses(self) -> tuple:
        return tuple(s for s in self.statements
                     if isinstance(s, DistributionalClause))

    @property
    def constraints(self) -> tuple:
        return tuple(s for s in self.statements
                     if isinstance(s, ClausalConstraint))

    @property
    def labels(self) -> tuple:
        return tuple(s for s in self.statements if isinstance(s, LabelDecl))

    @property
    def queries(self) -> tuple:
        return tuple(s.atom for s in self.statements
                     if isinstance(s, QueryDirective))

    @property
    def evidence(self) -> tuple:
        return tuple((s.atom, s.value) for s in self.statements
                     if isinstance(s, EvidenceDirective))

    def pretty(self) -> str:
        return pretty_print(self)

    def extended(self, *stmts) -> "Program":
        return Program(self.statements + tuple(stmts))


# ---------------------------------------------------------------------------
# tokenizer

_PUNCT = [":-", "::", "=<", ">=", "=:=", "=\\=", "\\==", "\\=", "==", "//",
          "(", ")", "[", "]", ",", ";", "|", "<", ">", "=", "+", "-", "*",
          "/", ":", "~", "."]


@dataclass(slots=True)
class Token:
    kind: str  # name | var | num | punct | eof
    value: object
    line: int
    col: int


def tokenize(text: str):
    toks = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "%":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            is_float = False
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                is_float = True
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    is_float = True
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            raw = text[i:j]
            value = float(raw) if is_float else int(raw)
            toks.append(Token("num", value, start_line, start_col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "var" if (c == "_" or c.isupper()) else "name"
            toks.append(Token(kind, word, start_line, start_col))
            col += j - i
            i = j
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                toks.append(Token("punct", p, start_line, start_col))
                i += len(p)
                col += len(p)
                break
        else:
            raise ProgramError([Diagnostic(f"unexpected character {c!r}",
                                           start_line, start_col)])
    toks.append(Token("eof", None, line, col))
    return toks


# ---------------------------------------------------------------------------
# operator-precedence term parser

# (precedence, associativity); assoc xfy lets the right operand keep the same
# precedence, yfx folds left
_BINOPS = {
    ":-": (1200, "xfx"),
    ";": (1100, "xfy"),
    ",": (1000, "xfy"),
    "::": (990, "xfx"),
    "~": (990, "xfx"),
    "is": (700, "xfx"), "=": (700, "xfx"), "\\=": (700, "xfx"),
    "==": (700, "xfx"), "\\==": (700, "xfx"),
    "<": (700, "xfx"), ">": (700, "xfx"), "=<": (700, "xfx"),
    ">=": (700, "xfx"), "=:=": (700, "xfx"), "=\\=": (700, "xfx"),
    ":": (550, "xfx"),
    "+": (500, "yfx"), "-": (500, "yfx"),
    "*": (400, "yfx"), "/": (400, "yfx"), "//": (400, "yfx"),
    "mod": (400, "yfx"),
}

_ARG_PREC = 999  # argument/list element level: below ','
_PRIMARY_START = {"name", "var", "num"}


class _Parser:
    def __init__(self, toks):
        self.toks = toks
        self.pos = 0

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        raise ProgramError([Diagnostic(msg, tok.line, tok.col)])

    def expect(self, value: str):
        t = self.next()
        if t.kind != "punct" or t.value != value:
            self.error(f"expected '{value}'", t)

    # -- expressions

    def parse_term(self, max_prec: int) -> Term:
        left = self.parse_primary()
        left_prec = 0
        while True:
            t = self.peek()
            op = t.value if ((t.kind == "punct" or t.kind == "name")
                             and t.value in _BINOPS) else None
            if op is None:
                return left
            prec, assoc = _BINOPS[op]
            if prec > max_prec:
                return left
            # xfx and xfy require the left operand strictly below the
            # operator's level; yfx allows equal (left-associative chains)
            if assoc == "yfx":
                if left_prec > prec:
                    return left
            elif left_prec >= prec:
                return left
            self.next()
            right = self.parse_term(prec if assoc == "xfy" else prec - 1)
            left = Struct(op, (left, right))
            left_prec = prec

    def parse_primary(self) -> Term:
        t = self.next()
        if t.kind == "num":
            return Const(t.value)
        if t.kind == "var":
            return Var(t.value)
        if t.kind == "name":
            nxt = self.peek()
            if nxt.kind == "punct" and nxt.value == "(":
                self.next()
                if t.value == "constraint":
                    # the one context where a clause may appear as an
                    # argument: constraint((h1 ; h2) :- body)
                    inner = self.parse_term(1200)
                    self.expect(")")
                    return Struct("constraint", (inner,))
                args = [self.parse_term(_ARG_PREC)]
                while self.peek().kind == "punct" and self.peek().value == ",":
                    self.next()
                    args.append(self.parse_term(_ARG_PREC))
                self.expect(")")
                return Struct(t.value, tuple(args))
            if t.value == "not" and (nxt.kind in _PRIMARY_START
                                     or (nxt.kind == "punct"
                                         and nxt.value == "[")):
                operand = self.parse_term(900)
                return Struct("not", (operand,))
            return Const(t.value)
        if t.kind == "punct":
            if t.value == "(":
                inner = self.parse_term(1200)
                self.expect(")")
                return inner
            if t.value == "[":
                return self.parse_list()
            if t.value == "-":
                operand = self.parse_primary()
                if isinstance(operand, Const) and isinstance(
                        operand.value, (int, float)):
                    return Const(-operand.value)
                return Struct("-", (operand,))
        self.error(f"unexpected token {t.value!r}", t)

    def parse_list(self) -> Term:
        if self.peek().kind == "punct" and self.peek().value == "]":
            self.next()
            return Const("[]")
        items = [self.parse_term(_ARG_PREC)]
        while self.peek().kind == "punct" and self.peek().value == ",":
            self.next()
            items.append(self.parse_term(_ARG_PREC))
        tail: Term = Const("[]")
        if self.peek().kind == "punct" and self.peek().value == "|":
            self.next()
            tail = self.parse_term(_ARG_PREC)
        self.expect("]")
        return make_list(items, tail)


# ---------------------------------------------------------------------------
# statement construction

def _const_fold(t: Term):
    """Fold a numeric constant expression; None when not constant."""
    if isinstance(t, Const) and isinstance(t.value, (int, float)):
        return t.value
    if isinstance(t, Struct):
        if len(t.args) == 2 and t.functor in ("+", "-", "*", "/"):
            a = _const_fold(t.args[0])
            b = _const_fold(t.args[1])
            if a is None or b is None:
                return None
            if t.functor == "+":
                return a + b
            if t.functor == "-":
                return a - b
            if t.functor == "*":
                return a * b
            if b == 0:
                return None
            return a / b
        if len(t.args) == 1 and t.functor == "-":
            a = _const_fold(t.args[0])
            return None if a is None else -a
    return None


def _split(t: Term, op: str) -> list:
    if isinstance(t, Struct) and t.functor == op and len(t.args) == 2:
        return _split(t.args[0], op) + _split(t.args[1], op)
    return [t]


def _to_atom(t: Term, diags, line, col) -> Optional[Atom]:
    a = term_to_atom(t)
    if a is None:
        diags.append(Diagnostic(f"expected an atom, got {format_term(t)}",
                                line, col))
    return a


def _to_body(t: Optional[Term], diags, line, col) -> tuple:
    if t is None:
        return ()
    lits = []
    for part in _split(t, ","):
        if isinstance(part, Const) and part.value == "true":
            continue
        if isinstance(part, Struct) and part.functor == "not" \
                and len(part.args) == 1:
            a = _to_atom(part.args[0], diags, line, col)
            if a is not None:
                lits.append(Literal(a, negated=True))
            continue
        a = _to_atom(part, diags, line, col)
        if a is not None:
            lits.append(Literal(a))
    return tuple(lits)


_DIST_NAMES = {"discrete", "uniform", "poisson", "gaussian", "gamma"}


class _ProgramBuilder:
    def __init__(self):
        self.statements = []
        self.diags = []
        self.ad_count = 0

    def add_statement(self, term: Term, memoized: bool, line: int, col: int):
        head_t, body_t = term, None
        if isinstance(term, Struct) and term.functor == ":-" \
                and len(term.args) == 2:
            head_t, body_t = term.args

        # directives and declarations never take a body
        if body_t is None and isinstance(head_t, Struct):
            f, args = head_t.functor, head_t.args
            if f == "query" and len(args) == 1:
                a = _to_atom(args[0], self.diags, line, col)
                if a is not None:
                    self.statements.append(QueryDirective(a))
                return
            if f == "evidence" and len(args) in (1, 2):
                a = _to_atom(args[0], self.diags, line, col)
                value = True
                if len(args) == 2:
                    if args[1] == Const("true"):
                        value = True
                    elif args[1] == Const("false"):
                        value = False
                    else:
                        self.diags.append(Diagnostic(
                            "evidence value must be true or false", line, col))
                        return
                if a is not None:
                    self.statements.append(EvidenceDirective(a, value))
                return
            if f == "label" and len(args) in (2, 3):
                a = _to_atom(args[0], self.diags, line, col)
                if a is not None:
                    neg = args[2] if len(args) == 3 else None
                    self.statements.append(LabelDecl(a, args[1], neg))
                return
            if f == "constraint" and len(args) == 1:
                self.add_constraint(args[0], line, col)
                return

        body = _to_body(body_t, self.diags, line, col)

        if isinstance(head_t, Struct) and head_t.functor == "~" \
                and len(head_t.args) == 2:
            self.add_dist_clause(head_t.args[0], head_t.args[1], body,
                                 line, col)
            return

        head_parts = _split(head_t, ";")
        if any(isinstance(p, Struct) and p.functor == "::" and
               len(p.args) == 2 for p in head_parts):
            self.add_probabilistic(head_parts, body, memoized, line, col)
            return

        if not memoized:
            self.diags.append(Diagnostic(
                "dememoize applies only to probabilistic facts and "
                "annotated disjunctions", line, col))
            return
        if len(head_parts) != 1:
            self.diags.append(Diagnostic(
                "disjunctive heads need probability labels", line, col))
            return
        a = _to_atom(head_t, self.diags, line, col)
        if a is not None:
            self.statements.append(Clause(a, body))

    def add_probabilistic(self, head_parts, body, memoized, line, col):
        pairs = []
        for p in head_parts:
            if not (isinstance(p, Struct) and p.functor == "::"
                    and len(p.args) == 2):
                self.diags.append(Diagnostic(
                    "every disjunct needs a probability label", line, col))
                return
            label_t, atom_t = p.args
            atom = _to_atom(atom_t, self.diags, line, col)
            if atom is None:
                return
            pairs.append((label_t, atom))
        if len(pairs) == 1:
            label_t, atom = pairs[0]
            if isinstance(label_t, Var):
                self.statements.append(
                    ProbFact(label_t, atom, body, memoized))
                return
            v = _const_fold(label_t)
            if v is None:
                self.diags.append(Diagnostic(
                    "probability label must be a number or a variable",
                    line, col))
                return
            self.statements.append(
                ProbFact(Const(float(v)), atom, body, memoized))
            return
        heads = []
        for label_t, atom in pairs:
            v = _const_fold(label_t)
            if v is None:
                self.diags.append(Diagnostic(
                    "annotated disjunction probabilities must be numeric",
                    line, col))
                return
            heads.append((float(v), atom))
        self.ad_count += 1
        self.statements.append(AnnotatedDisjunction(
            tuple(heads), body, memoized, adid=f"ad{self.ad_count}"))

    def add_dist_clause(self, rv_t, dist_t, body, line, col):
        rv = _to_atom(rv_t, self.diags, line, col)
        if rv is None:
            return
        if isinstance(dist_t, Struct) and dist_t.functor in _DIST_NAMES:
            spec = DistributionSpec(dist_t.functor, dist_t.args)
        elif isinstance(dist_t, Const) and dist_t.value in _DIST_NAMES:
            spec = DistributionSpec(dist_t.value, ())
        else:
            self.diags.append(Diagnostic(
                f"unknown distribution {format_term(dist_t)}", line, col))
            return
        self.statements.append(DistributionalClause(rv, spec, body))

    def add_constraint(self, inner: Term, line: int, col: int):
        head_t, body_t = inner, None
        if isinstance(inner, Struct) and inner.functor == ":-" \
                and len(inner.args) == 2:
            head_t, body_t = inner.args
        body = _to_body(body_t, self.diags, line, col)
        heads = []
        for p in _split(head_t, ";"):
            if isinstance(p, Const) and p.value == "false":
                continue
            if isinstance(p, Struct) and p.functor == "not" \
                    and len(p.args) == 1:
                a = _to_atom(p.args[0], self.diags, line, col)
                if a is not None:
                    heads.append(Literal(a, negated=True))
                continue
            a = _to_atom(p, self.diags, line, col)
            if a is not None:
                heads.append(Literal(a))
        self.statements.append(ClausalConstraint(tuple(heads), body))


def parse_program(text: str, validate: bool = True) -> Program:
    """Parse a program; raises ProgramError with every diagnostic found."""
    program, diags = try_parse_program(text, validate=validate)
    if diags:
        raise ProgramError(diags)
    return program


def try_parse_program(text: str, validate: bool = True):
    """Like parse_program but returns (program_or_None, diagnostics)."""
    try:
        toks = tokenize(text)
    except ProgramError as e:
        return None, e.diagnostics
    builder = _ProgramBuilder()
    parser = _Parser(toks)
    while parser.peek().kind != "eof":
        start = parser.peek()
        memoized = True
        if start.kind == "name" and start.value == "dememoize":
            after = parser.toks[parser.pos + 1]
            if not (after.kind == "punct" and after.value in ("(", ".")):
                parser.next()
                memoized = False
        try:
            term = parser.parse_term(1200)
            parser.expect(".")
        except ProgramError as e:
            builder.diags.extend(e.diagnostics)
            # resynchronize after the next period
            while parser.peek().kind != "eof":
                t = parser.next()
                if t.kind == "punct" and t.value == ".":
                    break
            continue
        builder.add_statement(term, memoized, start.line, start.col)
    program = Program(tuple(builder.statements))
    diags = builder.diags
    if validate and not diags:
        diags = validate_program(program)
    if diags:
        return None, diags
    return program, []


# ---------------------------------------------------------------------------
# validation

def validate_program(p: Program) -> list:
    diags = []
    rule_heads = [c.head for c in p.clauses]
    ad_head_atoms = [a for ad in p.ads for a in ad.atoms]
    seen_ids = set()
    for ad in p.ads:
        if not ad.adid:
            diags.append(Diagnostic("annotated disjunction without an id"))
        elif ad.adid in seen_ids:
            diags.append(Diagnostic(f"duplicate AD id {ad.adid!r}"))
        seen_ids.add(ad.adid)
        total = 0.0
        for prob, _atom in ad.heads:
            if not (0.0 <= prob <= 1.0 + 1e-9):
                diags.append(Diagnostic(
                    f"AD probability {prob} outside [0, 1] ({ad.adid})"))
            total += prob
        if total > 1.0 + 1e-9:
            diags.append(Diagnostic(
                f"AD probabilities sum to {total:.12g} > 1 ({ad.adid})"))
    facts = list(p.prob_facts)
    for f in facts:
        if isinstance(f.label, Const):
            v = f.label.value
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                diags.append(Diagnostic(
                    f"probability {format_term(f.label)} outside [0, 1] "
                    f"for {format_atom(f.atom)}"))
        elif isinstance(f.label, Var):
            if f.label not in atom_vars(f.atom):
                diags.append(Diagnostic(
                    f"flexible probability {f.label.name} must appear in "
                    f"{format_atom(f.atom)}"))
    # Basic (bodiless) facts must name distinct families; probabilistic
    # clauses are exempt, their repeated heads mean independent causes.
    basic = [f for f in facts if not f.body]
    for i, f in enumerate(basic):
        for g in basic[i + 1:]:
            if _fresh_unifiable_atoms(f.atom, g.atom):
                diags.append(Diagnostic(
                    f"probabilistic facts {format_atom(f.atom)} and "
                    f"{format_atom(g.atom)} unify; merge them into one "
                    f"family or an annotated disjunction"))
        for h in rule_heads:
            if _fresh_unifiable_atoms(f.atom, h):
                diags.append(Diagnostic(
                    f"probabilistic fact {format_atom(f.atom)} unifies with "
                    f"rule head {format_atom(h)}"))
        for h in ad_head_atoms:
            if _fresh_unifiable_atoms(f.atom, h):
                diags.append(Diagnostic(
                    f"probabilistic fact {format_atom(f.atom)} unifies with "
                    f"annotated disjunction head {format_atom(h)}"))
    for a, _v in p.evidence:
        if not atom_is_ground(a):
            diags.append(Diagnostic(
                f"evidence atom {format_atom(a)} is not ground"))
    for l in p.labels:
        if not atom_is_ground(l.atom):
            diags.append(Diagnostic(
                f"labeled fact {format_atom(l.atom)} is not ground"))
    for d in p.dist_clauses:
        if d.dist.name == "discrete" or d.dist.name == "uniform":
            if len(d.dist.params) != 1:
                diags.append(Diagnostic(
                    f"{d.dist.name} takes one list argument"))
        elif d.dist.name == "poisson":
            if len(d.dist.params) != 1:
                diags.append(Diagnostic("poisson takes one rate argument"))
        elif len(d.dist.params) != 2:
            diags.append(Diagnostic(
                f"{d.dist.name} takes two arguments"))
    return diags


def _fresh_unifiable_atoms(a: Atom, b: Atom) -> bool:
    """Unifiability after renaming apart (shared names are coincidence)."""
    if a.pred != b.pred or len(a.args) != len(b.args):
        return False
    from .terms import rename_atom, unify_atoms
    b2 = rename_atom(b, {})
    return unify_atoms(a, b2) is not None


# ---------------------------------------------------------------------------
# pretty-printing

def _body_text(body) -> str:
    return ", ".join(format_literal(l) for l in body)


def format_statement(s) -> str:
    if isinstance(s, Clause):
        if s.body:
            return f"{format_atom(s.head)} :- {_body_text(s.body)}."
        return f"{format_atom(s.head)}."
    if isinstance(s, ProbFact):
        prefix = "" if s.memoized else "dememoize "
        text = f"{prefix}{format_term(s.label)}::{format_atom(s.atom)}"
        if s.body:
            text += f" :- {_body_text(s.body)}"
        return text + "."
    if isinstance(s, AnnotatedDisjunction):
        prefix = "" if s.memoized else "dememoize "
        heads = " ; ".join(f"{format_term(Const(p))}::{format_atom(a)}"
                           for p, a in s.heads)
        text = prefix + heads
        if s.body:
            text += f" :- {_body_text(s.body)}"
        return text + "."
    if isinstance(s, DistributionalClause):
        if s.dist.params:
            dist = f"{s.dist.name}({', '.join(format_term(t) for t in s.dist.params)})"
        else:
            dist = s.dist.name
        text = f"{format_atom(s.rv)} ~ {dist}"
        if s.body:
            text += f" :- {_body_text(s.body)}"
        return text + "."
    if isinstance(s, ClausalConstraint):
        heads = " ; ".join(format_literal(l) for l in s.heads) or "false"
        if s.body:
            return f"constraint({heads} :- {_body_text(s.body)})."
        return f"constraint({heads})."
    if isinstance(s, LabelDecl):
        if s.neg_value is not None:
            return (f"label({format_atom(s.atom)}, {format_term(s.value)}, "
                    f"{format_term(s.neg_value)}).")
        return f"label({format_atom(s.atom)}, {format_term(s.value)})."
    if isinstance(s, QueryDirective):
        return f"query({format_atom(s.atom)})."
    if isinstance(s, EvidenceDirective):
        return f"evidence({format_atom(s.atom)}, {'true' if s.value else 'false'})."
    raise TypeError(f"unknown statement {s!r}")


def pretty_print(p: Program) -> str:
    return "\n".join(format_statement(s) for s in p.statements) + "\n"


# ---------------------------------------------------------------------------
# query strings

TASKS = ("succ", "marg", "map", "mpe", "vit")


@dataclass(frozen=True, slots=True)
class QuerySpec:
    task: str
    queries: tuple = ()
    evidence: tuple = ()  # ((Atom, bool), ...)

    def evidence_map(self) -> dict:
        return dict(self.evidence)


def _parse_atom_text(text: str, diags) -> Optional[Atom]:
    try:
        toks = tokenize(text)
        parser = _Parser(toks)
        t = parser.parse_term(_ARG_PREC)
        if parser.peek().kind != "eof":
            parser.error("trailing input after atom")
    except ProgramError as e:
        diags.extend(e.diagnostics)
        return None
    a = term_to_atom(t)
    if a is None:
        diags.append(Diagnostic(f"expected an atom, got {text!r}"))
    return a


def _parse_evidence_item(t: Term, diags) -> Optional[tuple]:
    value = True
    if isinstance(t, Struct) and t.functor == "not" and len(t.args) == 1:
        t = t.args[0]
        value = False
    elif isinstance(t, Struct) and t.functor == "=" and len(t.args) == 2:
        if t.args[1] == Const("false"):
            t, value = t.args[0], False
        elif t.args[1] == Const("true"):
            t, value = t.args[0], True
    a = term_to_atom(t)
    if a is None:
        diags.append(Diagnostic(f"bad evidence item {format_term(t)}"))
        return None
    if not atom_is_ground(a):
        diags.append(Diagnostic(
            f"evidence atom {format_atom(a)} is not ground"))
        return None
    return (a, value)


def parse_query(text: str) -> QuerySpec:
    """Parse a task string like 'marg burglary, calls(john) | calls(mary)'.

    The word before the first atom names the task. For mpe the atoms are
    evidence; everything after '|' is evidence for any task. Negative
    evidence is written 'not a', 'not(a)' or 'a = false'.
    """
    diags = []
    text = text.strip()
    parts = text.split(None, 1)
    if not parts or parts[0] not in TASKS:
        raise ProgramError([Diagnostic(
            f"query must start with one of {', '.join(TASKS)}")])
    task = parts[0]
    rest = parts[1].strip() if len(parts) > 1 else ""
    atoms_text, _, ev_text = rest.partition("|")
    atom_terms = []
    for chunk_term in _parse_term_list(atoms_text.strip(), diags):
        atom_terms.append(chunk_term)
    ev_items = []
    for chunk_term in _parse_term_list(ev_text.strip(), diags):
        item = _parse_evidence_item(chunk_term, diags)
        if item is not None:
            ev_items.append(item)
    queries = []
    if task == "mpe":
        for t in atom_terms:
            item = _parse_evidence_item(t, diags)
            if item is not None:
                ev_items.append(item)
    else:
        for t in atom_terms:
            if isinstance(t, Struct) and t.functor == "not" \
                    and len(t.args) == 1:
                diags.append(Diagnostic("query atoms cannot be negated"))
                continue
            a = term_to_atom(t)
            if a is None:
                diags.append(Diagnostic(f"bad query atom {format_term(t)}"))
            else:
                queries.append(a)
    if task in ("succ", "vit") and len(queries) != 1:
        diags.append(Diagnostic(f"{task} takes exactly one query atom"))
    if task == "marg" and not queries:
        diags.append(Diagnostic("marg needs at least one query atom"))
    if task == "map" and not queries:
        diags.append(Diagnostic("map needs at least one query atom"))
    if task == "mpe" and not ev_items:
        diags.append(Diagnostic("mpe needs evidence atoms"))
    if diags:
        raise ProgramError(diags)
    return QuerySpec(task, tuple(queries), tuple(ev_items))


def _parse_term_list(text: str, diags) -> list:
    if not text:
        return []
    try:
        toks = tokenize(text)
        parser = _Parser(toks)
        out = [parser.parse_term(_ARG_PREC)]
        while parser.peek().kind == "punct" and parser.peek().value == ",":
            parser.next()
            out.append(parser.parse_term(_ARG_PREC))
        if parser.peek().kind != "eof":
            parser.error("trailing input")
        return out
    except ProgramError as e:
        diags.extend(e.diagnostics)
        return []


def parse_term_text(text: str) -> Term:
    """Parse a single term from text (utility for tests and the CLI)."""
    toks = tokenize(text)
    parser = _Parser(toks)
    t = parser.parse_term(1200)
    if parser.peek().kind != "eof":
        parser.error("trailing input after term")
    return t


def parse_atom_text(text: str) -> Atom:
    diags = []
    a = _parse_atom_text(text, diags)
    if diags:
        raise ProgramError(diags)
    return a
