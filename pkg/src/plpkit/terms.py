"""First-order terms, atoms, literals and substitutions.

Terms are immutable and hashable. A substitution is a plain dict mapping Var
to Term; bindings may chain (X -> Y -> f(a)), so always go through walk() or
resolve() before inspecting a term. unify() performs the occurs check; at the
scale this engine targets, soundness is worth more than the constant factor.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional


class Term:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Var(Term):
    name: str

    def __repr__(self):
        return f"Var({self.name})"


@dataclass(frozen=True, slots=True)
class Const(Term):
    """An atomic constant: a symbol (str), an int, or a float."""

    value: object

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, slots=True)
class Struct(Term):
    functor: str
    args: tuple

    def __repr__(self):
        return f"Struct({self.functor!r}, {self.args!r})"


EMPTY_LIST = Const("[]")
TRUE = Const("true")
FALSE = Const("false")


@dataclass(frozen=True, slots=True)
class Atom:
    """A predicate applied to argument terms. Propositions have no args."""

    pred: str
    args: tuple = ()

    @property
    def indicator(self) -> str:
        return f"{self.pred}/{len(self.args)}"

    def __repr__(self):
        return f"Atom({format_atom(self)})"


@dataclass(frozen=True, slots=True)
class Literal:
    atom: Atom
    negated: bool = False

    def negate(self) -> "Literal":
        return Literal(self.atom, not self.negated)

    def __repr__(self):
        sign = "not " if self.negated else ""
        return f"Literal({sign}{format_atom(self.atom)})"


# ---------------------------------------------------------------------------
# substitutions

def walk(t: Term, s: dict) -> Term:
    """Follow variable bindings until a non-variable or unbound var."""
    while isinstance(t, Var):
        nxt = s.get(t)
        if nxt is None:
            return t
        t = nxt
    return t


def resolve(t: Term, s: dict) -> Term:
    """Apply a substitution all the way down."""
    t = walk(t, s)
    if isinstance(t, Struct):
        return Struct(t.functor, tuple(resolve(a, s) for a in t.args))
    return t


def resolve_atom(a: Atom, s: dict) -> Atom:
    if not a.args:
        return a
    return Atom(a.pred, tuple(resolve(t, s) for t in a.args))


def resolve_literal(l: Literal, s: dict) -> Literal:
    return Literal(resolve_atom(l.atom, s), l.negated)


def occurs(v: Var, t: Term, s: dict) -> bool:
    t = walk(t, s)
    if t == v:
        return True
    if isinstance(t, Struct):
        return any(occurs(v, a, s) for a in t.args)
    return False


def unify(t1: Term, t2: Term, s: Optional[dict] = None) -> Optional[dict]:
    """Most general unifier extending s, or None. Occurs check is on.

    The input dict is never mutated; a successful unification returns a new
    dict (or the same object when nothing was bound).
    """
    if s is None:
        s = {}
    stack = [(t1, t2)]
    out = s
    copied = False
    while stack:
        a, b = stack.pop()
        a = walk(a, out)
        b = walk(b, out)
        if a == b:
            continue
        if isinstance(a, Var):
            if occurs(a, b, out):
                return None
            if not copied:
                out = dict(out)
                copied = True
            out[a] = b
        elif isinstance(b, Var):
            if occurs(b, a, out):
                return None
            if not copied:
                out = dict(out)
                copied = True
            out[b] = a
        elif isinstance(a, Const) and isinstance(b, Const):
            # dataclass equality already handled the match above (and it
            # treats 1 and 1.0 as the same constant, numeric-equality style)
            return None
        elif isinstance(a, Struct) and isinstance(b, Struct):
            if a.functor != b.functor or len(a.args) != len(b.args):
                return None
            stack.extend(zip(a.args, b.args))
        else:
            return None
    return out


def unify_atoms(a1: Atom, a2: Atom, s: Optional[dict] = None) -> Optional[dict]:
    if a1.pred != a2.pred or len(a1.args) != len(a2.args):
        return None
    if s is None:
        s = {}
    for x, y in zip(a1.args, a2.args):
        s = unify(x, y, s)
        if s is None:
            return None
    return s


def term_vars(t: Term, acc: Optional[list] = None) -> list:
    """Distinct variables in first-occurrence order."""
    if acc is None:
        acc = []
    if isinstance(t, Var):
        if t not in acc:
            acc.append(t)
    elif isinstance(t, Struct):
        for a in t.args:
            term_vars(a, acc)
    return acc


def atom_vars(a: Atom, acc: Optional[list] = None) -> list:
    if acc is None:
        acc = []
    for t in a.args:
        term_vars(t, acc)
    return acc


def is_ground(t: Term) -> bool:
    if isinstance(t, Var):
        return False
    if isinstance(t, Struct):
        return all(is_ground(a) for a in t.args)
    return True


def atom_is_ground(a: Atom) -> bool:
    return all(is_ground(t) for t in a.args)


_fresh_counter = itertools.count()


def fresh_var(name: str = "G") -> Var:
    return Var(f"_R{next(_fresh_counter)}_{name}")


def rename_term(t: Term, mapping: dict) -> Term:
    """Rename apart. Fresh names come from a process-wide counter: two
    applications of one clause in a single derivation must not share
    variables."""
    if isinstance(t, Var):
        v = mapping.get(t)
        if v is None:
            v = mapping[t] = fresh_var(t.name)
        return v
    if isinstance(t, Struct):
        return Struct(t.functor, tuple(rename_term(a, mapping) for a in t.args))
    return t


def rename_atom(a: Atom, mapping: dict) -> Atom:
    if not a.args:
        return a
    return Atom(a.pred, tuple(rename_term(t, mapping) for t in a.args))


# ---------------------------------------------------------------------------
# list terms

def make_list(items, tail: Term = EMPTY_LIST) -> Term:
    out = tail
    for x in reversed(list(items)):
        out = Struct(".", (x, out))
    return out


def list_items(t: Term, s: Optional[dict] = None) -> Optional[list]:
    """Return the elements of a proper list term, or None."""
    items = []
    while True:
        if s is not None:
            t = walk(t, s)
        if t == EMPTY_LIST:
            return items
        if isinstance(t, Struct) and t.functor == "." and len(t.args) == 2:
            items.append(t.args[0] if s is None else resolve(t.args[0], s))
            t = t.args[1]
        else:
            return None


# ---------------------------------------------------------------------------
# formatting (canonical text; the parser reads this back)

_ATOM_OK_FIRST = "abcdefghijklmnopqrstuvwxyz"
_ATOM_OK_REST = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")

INFIX_OPS = {"+", "-", "*", "/", "//", "mod", "<", ">", "=<", ">=", "=:=",
             "=\\=", "=", "\\=", "==", "\\==", "is", ":"}


def _plain_symbol(name: str) -> bool:
    return (bool(name) and name[0] in _ATOM_OK_FIRST
            and all(c in _ATOM_OK_REST for c in name))


def format_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        v = t.value
        if isinstance(v, float):
            # integral floats print like ints so that terms equal under
            # numeric equality share one canonical text
            if v.is_integer():
                return str(int(v))
            return repr(v)
        if isinstance(v, int):
            return str(v)
        return str(v)
    if isinstance(t, Struct):
        if t.functor == "." and len(t.args) == 2:
            return _format_list(t)
        if t.functor in INFIX_OPS and len(t.args) == 2:
            lhs, rhs = t.args
            return f"{_format_operand(lhs)} {t.functor} {_format_operand(rhs)}"
        if t.functor == "-" and len(t.args) == 1:
            return f"-{_format_operand(t.args[0])}"
        args = ", ".join(format_term(a) for a in t.args)
        return f"{t.functor}({args})"
    raise TypeError(f"not a term: {t!r}")


def _format_operand(t: Term) -> str:
    if isinstance(t, Struct) and t.functor in INFIX_OPS and len(t.args) == 2:
        return f"({format_term(t)})"
    return format_term(t)


def _format_list(t: Term) -> str:
    parts = []
    while isinstance(t, Struct) and t.functor == "." and len(t.args) == 2:
        parts.append(format_term(t.args[0]))
        t = t.args[1]
    if t == EMPTY_LIST:
        return "[" + ", ".join(parts) + "]"
    return "[" + ", ".join(parts) + "|" + format_term(t) + "]"


def format_atom(a: Atom) -> str:
    if not a.args:
        return a.pred
    if a.pred in INFIX_OPS and len(a.args) == 2:
        return f"{_format_operand(a.args[0])} {a.pred} {_format_operand(a.args[1])}"
    return f"{a.pred}({', '.join(format_term(t) for t in a.args)})"


def format_literal(l: Literal) -> str:
    if l.negated:
        return f"not({format_atom(l.atom)})"
    return format_atom(l.atom)


def canon(x) -> str:
    """Canonical string key for ground terms/atoms, used for event identity
    and RNG stream derivation. Must be stable across runs."""
    if isinstance(x, Atom):
        return format_atom(x)
    return format_term(x)


def atom_to_term(a: Atom) -> Term:
    """Reify an atom as a term (for switch-fact arguments, meta-calls)."""
    if not a.args:
        return Const(a.pred)
    return Struct(a.pred, a.args)


def term_to_atom(t: Term) -> Optional[Atom]:
    if isinstance(t, Const) and isinstance(t.value, str):
        return Atom(t.value)
    if isinstance(t, Struct):
        return Atom(t.functor, t.args)
    return None


def fnv64(data: str) -> int:
    """FNV-1a over UTF-8 bytes; stable replacement for hash() under
    PYTHONHASHSEED randomization."""
    h = 0xCBF29CE484222325
    for b in data.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h
