"""Exception hierarchy for the engine.

Every failure the orchestrator is expected to absorb derives from
``EngineError``.  ``ScriptMismatch`` deliberately does not: a scripted
backend going off the rails means a broken test fixture, and that must
surface as a test failure, never as a degraded answer.
"""


class EngineError(Exception):
    """Base class for recoverable engine failures."""


class MalformedBackendOutput(EngineError):
    """Reasoning backend produced unparseable output after all retries."""


class BackendUnavailable(EngineError):
    """Chat-completion transport failed after retries."""


class ReplanBudgetExhausted(EngineError):
    """Replan requested with the replan counter already at its limit."""


class KgUnavailable(EngineError):
    """Knowledge-graph endpoint unreachable after retries."""


class MalformedResults(EngineError):
    """SPARQL endpoint returned a non-conforming results document."""


class InvalidEntityId(EngineError):
    """Entity identifier violates the configured ID grammar."""


class NoFrontier(EngineError):
    """No topic entity and no reasoning chain to anchor exploration."""


class PruningUnavailable(EngineError):
    """Embedding backend failed; the current attempt is abandoned."""


class ZeroVector(EngineError):
    """Cosine similarity of a vector with no nonzero component."""


class DimensionMismatch(EngineError):
    """Cosine similarity of vectors with different dimensions."""


class ParseError(EngineError):
    """Malformed input file (triple file or dataset)."""


class ScriptMismatch(AssertionError):
    """Scripted backend was asked for a stage the script does not expect."""
