"""Exception hierarchy shared across the engine.

Every error raised on purpose derives from PlpError so callers (and the CLI)
can map failures to exit codes without string matching.
"""

from __future__ import annotations


class PlpError(Exception):
    """Base class for all engine errors."""


class Diagnostic:
    """A single parse or validation message with a source position."""

    __slots__ = ("message", "line", "col")

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col

    def __str__(self):
        if self.line:
            return f"{self.line}:{self.col}: {self.message}"
        return self.message

    def __repr__(self):
        return f"Diagnostic({self.message!r}, line={self.line}, col={self.col})"


class ProgramError(PlpError):
    """Syntax or validation failure; carries all collected diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


class CapabilityError(PlpError):
    """An engine was asked to handle a language concept it does not support.

    Structured so the CLI can report engine/concept pairs uniformly and so
    tests can assert on them without parsing prose.
    """

    def __init__(self, engine: str, concept: str, detail: str = ""):
        self.engine = engine
        self.concept = concept
        self.detail = detail
        msg = f"engine '{engine}' does not support {concept}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class InferenceError(PlpError):
    """Well-formed input on a capable engine, but inference cannot proceed.

    Examples: evidence with probability zero, unbound arithmetic, meta-call
    cycles, non-monotonic choice dependencies discovered during enumeration.
    """


class BudgetExceeded(InferenceError):
    """A depth, world-count, or update budget ran out before completion."""

    def __init__(self, kind: str, limit):
        self.kind = kind
        self.limit = limit
        super().__init__(f"{kind} budget exceeded (limit {limit})")
