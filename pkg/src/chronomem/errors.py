"""Exception hierarchy.

``DataError`` subclasses indicate bad input data (exit code 2 on the CLI);
everything else deriving from ``ChronomemError`` is a runtime failure.
"""

from __future__ import annotations


class ChronomemError(Exception):
    """Base class for all package errors."""


class DataError(ChronomemError):
    """Input data is malformed or inconsistent."""


class UnparseableTimestamp(DataError, ValueError):
    def __init__(self, text: str, location: str | None = None):
        self.text = text
        self.location = location
        where = f" at {location}" if location else ""
        super().__init__(f"unparseable timestamp {text!r}{where}")


class SchemaError(DataError):
    def __init__(self, path: str, pointer: str, reason: str):
        self.path = str(path)
        self.pointer = pointer
        self.reason = reason
        super().__init__(f"{self.path}#{pointer}: {reason}")


class DanglingEvidence(DataError):
    def __init__(self, query_id: str, session_id: int):
        self.query_id = query_id
        self.session_id = session_id
        super().__init__(f"query {query_id!r} cites session {session_id} which is not in the bank")


class UnscorableGold(DataError):
    """The gold answer does not conform to its own answer format."""

    def __init__(self, gold: str, answer_format: str, reason: str = ""):
        self.gold = gold
        self.answer_format = answer_format
        msg = f"gold answer {gold!r} is not a valid {answer_format} answer"
        super().__init__(f"{msg}: {reason}" if reason else msg)


class SpecInfeasible(DataError):
    pass


class UnknownSession(ChronomemError, KeyError):
    def __init__(self, session_id: int):
        self.session_id = session_id
        super().__init__(session_id)

    def __str__(self) -> str:
        return f"session {self.session_id} is not in the memory bank"


class GroupTooSmall(ChronomemError, ValueError):
    pass


class NonFiniteGradient(ChronomemError, ArithmeticError):
    def __init__(self, step: int, diagnostics: dict):
        self.step = step
        self.diagnostics = diagnostics
        super().__init__(f"non-finite gradient at step {step}: {diagnostics}")


class ProviderError(ChronomemError):
    def __init__(self, status: int | None, body: str = ""):
        self.status = status
        self.body = body[:200]
        super().__init__(f"provider request failed (status={status}): {self.body}")


class MalformedScopeResponse(ChronomemError, ValueError):
    pass
