"""Memory banks, queries, and their JSON schema.

Bank file::

    {"dialog_id": str,
     "sessions": [{"id": int, "timestamp": str,
                   "utterances": [{"id": int, "speaker": str, "text": str,
                                   "events": [{"summary": str, "start": str, "end": str,
                                               "recurring": str}]}]}]}

Query file::

    {"queries": [{"id": str, "question": str, "subtask": str, "answer_format": str,
                  "options": [{"letter": str, "text": str}], "gold_answer": str,
                  "gold_evidence": [int], "gold_range": {"start": str, "end": str},
                  "query_time": str}]}

Bound strings may be ``"unknown"``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable

from .errors import DanglingEvidence, SchemaError, UnparseableTimestamp
from .temporal import Recurrence, TimeInterval, TimePoint, parse_bound, parse_timestamp, render_bound

__all__ = [
    "Subtask",
    "AnswerFormat",
    "CATEGORIES",
    "Event",
    "Utterance",
    "Session",
    "MemoryBank",
    "QueryInstance",
    "load_bank",
    "load_queries",
    "bank_from_dict",
    "queries_from_dict",
    "bank_to_dict",
    "queries_to_dict",
    "dump_bank",
    "dump_queries",
    "token_length",
    "length_bracket",
    "BRACKETS",
]


class Subtask(str, enum.Enum):
    LOCALIZATION = "Localization"
    DURATION_COMPARE = "Duration_Compare"
    COMPUTATION = "Computation"
    ORDER_COMPARE = "Order_Compare"
    EXTRACT = "Extract"
    EXPLICIT_REASONING = "Explicit_Reasoning"
    ORDER_REASONING = "Order_Reasoning"
    RELATIVE_REASONING = "Relative_Reasoning"
    COUNTERFACTUAL = "Counterfactual"
    CO_TEMPORALITY = "Co_temporality"
    TIMELINE = "Timeline"

    @property
    def category(self) -> str:
        return _CATEGORY_OF[self]

    @property
    def abbrev(self) -> str:
        return _ABBREV[self]


CATEGORIES: dict[str, tuple[Subtask, ...]] = {
    "A": (
        Subtask.LOCALIZATION,
        Subtask.DURATION_COMPARE,
        Subtask.COMPUTATION,
        Subtask.ORDER_COMPARE,
        Subtask.EXTRACT,
    ),
    "B": (Subtask.EXPLICIT_REASONING, Subtask.ORDER_REASONING, Subtask.RELATIVE_REASONING),
    "C": (Subtask.COUNTERFACTUAL, Subtask.CO_TEMPORALITY, Subtask.TIMELINE),
}
_CATEGORY_OF = {st: cat for cat, members in CATEGORIES.items() for st in members}
_ABBREV = dict(
    zip(
        Subtask,
        ["Loc.", "DC.", "Comp.", "OC.", "Ext.", "ER.", "OR.", "RR.", "CTF.", "Co-tmp.", "TL."],
    )
)


class AnswerFormat(str, enum.Enum):
    SINGLE_CHOICE = "single_choice"
    MULTI_CHOICE = "multi_choice"
    TIME_SPAN = "time_span"
    EVENT_ORDER = "event_order"


@dataclass(frozen=True)
class Event:
    summary: str
    span: TimeInterval


@dataclass(frozen=True)
class Utterance:
    id: int
    speaker: str
    text: str
    events: tuple[Event, ...] = ()


@dataclass(frozen=True)
class Session:
    id: int
    timestamp: TimePoint
    utterances: tuple[Utterance, ...]

    @property
    def interval(self) -> TimeInterval:
        """The session as an instantaneous interval."""
        return TimeInterval.point(self.timestamp)

    @property
    def text(self) -> str:
        return " ".join(u.text for u in self.utterances)

    @property
    def events(self) -> list[Event]:
        return [e for u in self.utterances for e in u.events]


@dataclass(frozen=True)
class MemoryBank:
    dialog_id: str
    sessions: tuple[Session, ...]

    @cached_property
    def _by_id(self) -> dict[int, Session]:
        return {s.id: s for s in self.sessions}

    @property
    def session_ids(self) -> list[int]:
        return [s.id for s in self.sessions]

    def session(self, session_id: int) -> Session:
        return self._by_id[session_id]

    def __contains__(self, session_id: object) -> bool:
        return session_id in self._by_id

    def __len__(self) -> int:
        return len(self.sessions)


@dataclass(frozen=True)
class QueryInstance:
    id: str
    question: str
    subtask: Subtask
    answer_format: AnswerFormat
    options: tuple[tuple[str, str], ...]
    gold_answer: str
    gold_evidence: frozenset[int]
    gold_range: TimeInterval
    query_time: TimePoint
    dialog_id: str = field(default="", compare=False)

    @property
    def category(self) -> str:
        return self.subtask.category

    @property
    def unanswerable(self) -> bool:
        return self.gold_answer.strip().lower() == "unknown" and not self.gold_evidence

    @property
    def retrieval_text(self) -> str:
        """Question plus option texts, the lexical query used for ranking."""
        return " ".join([self.question, *(text for _, text in self.options)])


# --- decoding ----------------------------------------------------------------


class _Reader:
    """Walks a decoded JSON document, raising SchemaError with a JSON pointer."""

    def __init__(self, path: str):
        self.path = path

    def fail(self, pointer: str, reason: str):
        raise SchemaError(self.path, pointer or "/", reason)

    def get(self, obj: Any, key: str, typ: type | tuple, pointer: str, default: Any = ...) -> Any:
        if not isinstance(obj, dict):
            self.fail(pointer, "expected an object")
        if key not in obj:
            if default is not ...:
                return default
            self.fail(f"{pointer}/{key}", "missing required key")
        value = obj[key]
        # bool is an int subclass; never accept it where a number is wanted
        if isinstance(value, bool) and bool not in (typ if isinstance(typ, tuple) else (typ,)):
            self.fail(f"{pointer}/{key}", f"expected {_type_name(typ)}, got bool")
        if not isinstance(value, typ):
            self.fail(f"{pointer}/{key}", f"expected {_type_name(typ)}, got {type(value).__name__}")
        return value

    def point(self, text: str, pointer: str) -> TimePoint:
        try:
            return parse_timestamp(text)
        except UnparseableTimestamp as exc:
            raise UnparseableTimestamp(exc.text, f"{self.path}#{pointer}") from None

    def bound(self, text: str, pointer: str) -> TimePoint | None:
        try:
            return parse_bound(text)
        except UnparseableTimestamp as exc:
            raise UnparseableTimestamp(exc.text, f"{self.path}#{pointer}") from None

    def interval(self, obj: Any, pointer: str, recurring: str = "none") -> TimeInterval:
        start = self.bound(self.get(obj, "start", str, pointer), f"{pointer}/start")
        end = self.bound(self.get(obj, "end", str, pointer), f"{pointer}/end")
        try:
            rec = Recurrence(recurring.lower())
        except ValueError:
            self.fail(f"{pointer}/recurring", f"unknown recurrence {recurring!r}")
        try:
            return TimeInterval(start, end, rec)
        except ValueError as exc:
            self.fail(pointer, str(exc))


def _type_name(typ) -> str:
    if isinstance(typ, tuple):
        return " or ".join(t.__name__ for t in typ)
    return typ.__name__


def bank_from_dict(doc: Any, path: str = "<memory>") -> MemoryBank:
    r = _Reader(path)
    dialog_id = r.get(doc, "dialog_id", str, "")
    raw_sessions = r.get(doc, "sessions", list, "")
    sessions = []
    seen: set[int] = set()
    for i, raw in enumerate(raw_sessions):
        sp = f"/sessions/{i}"
        sid = r.get(raw, "id", int, sp)
        if sid < 1:
            r.fail(f"{sp}/id", "session ids start at 1")
        if sid in seen:
            r.fail(f"{sp}/id", f"duplicate session id {sid}")
        seen.add(sid)
        ts = r.point(r.get(raw, "timestamp", str, sp), f"{sp}/timestamp")
        raw_utts = r.get(raw, "utterances", list, sp)
        if not raw_utts:
            r.fail(f"{sp}/utterances", "a session needs at least one utterance")
        utts = []
        last_uid = -1
        for j, ru in enumerate(raw_utts):
            up = f"{sp}/utterances/{j}"
            uid = r.get(ru, "id", int, up)
            if uid < 0 or uid <= last_uid:
                r.fail(f"{up}/id", "utterance ids must be nonnegative and strictly increasing")
            last_uid = uid
            events = []
            for k, re_ in enumerate(r.get(ru, "events", list, up, default=[])):
                ep = f"{up}/events/{k}"
                summary = r.get(re_, "summary", str, ep)
                recurring = r.get(re_, "recurring", str, ep, default="none")
                events.append(Event(summary, r.interval(re_, ep, recurring)))
            utts.append(
                Utterance(uid, r.get(ru, "speaker", str, up), r.get(ru, "text", str, up), tuple(events))
            )
        sessions.append(Session(sid, ts, tuple(utts)))
    for i in range(1, len(sessions)):
        if sessions[i].timestamp.value < sessions[i - 1].timestamp.value:
            r.fail(f"/sessions/{i}/timestamp", "session timestamps must be nondecreasing")
    return MemoryBank(dialog_id, tuple(sessions))


def queries_from_dict(doc: Any, bank: MemoryBank | None = None, path: str = "<memory>") -> list[QueryInstance]:
    r = _Reader(path)
    out = []
    seen: set[str] = set()
    for i, raw in enumerate(r.get(doc, "queries", list, "")):
        qp = f"/queries/{i}"
        qid = r.get(raw, "id", str, qp)
        if qid in seen:
            r.fail(f"{qp}/id", f"duplicate query id {qid!r}")
        seen.add(qid)
        try:
            subtask = Subtask(r.get(raw, "subtask", str, qp))
        except ValueError:
            r.fail(f"{qp}/subtask", "unknown subtask label")
        try:
            fmt = AnswerFormat(r.get(raw, "answer_format", str, qp))
        except ValueError:
            r.fail(f"{qp}/answer_format", "unknown answer format")
        options = []
        for k, ro in enumerate(r.get(raw, "options", list, qp, default=[])):
            op = f"{qp}/options/{k}"
            options.append((r.get(ro, "letter", str, op), r.get(ro, "text", str, op)))
        evidence = []
        for k, sid in enumerate(r.get(raw, "gold_evidence", list, qp)):
            if isinstance(sid, bool) or not isinstance(sid, int):
                r.fail(f"{qp}/gold_evidence/{k}", "expected int")
            evidence.append(sid)
        gold_answer = r.get(raw, "gold_answer", str, qp)
        q = QueryInstance(
            id=qid,
            question=r.get(raw, "question", str, qp),
            subtask=subtask,
            answer_format=fmt,
            options=tuple(options),
            gold_answer=gold_answer,
            gold_evidence=frozenset(evidence),
            gold_range=r.interval(r.get(raw, "gold_range", dict, qp), f"{qp}/gold_range"),
            query_time=r.point(r.get(raw, "query_time", str, qp), f"{qp}/query_time"),
            dialog_id=bank.dialog_id if bank is not None else r.get(raw, "dialog_id", str, qp, default=""),
        )
        if not q.gold_evidence and not q.unanswerable:
            r.fail(f"{qp}/gold_evidence", "empty evidence is only allowed for unanswerable queries")
        if bank is not None:
            for sid in sorted(q.gold_evidence):
                if sid not in bank:
                    raise DanglingEvidence(qid, sid)
        out.append(q)
    return out


def _read_json(path: str | Path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), "/", f"invalid JSON: {exc}") from None


def load_bank(path: str | Path) -> MemoryBank:
    return bank_from_dict(_read_json(path), str(path))


def load_queries(path: str | Path, bank: MemoryBank) -> list[QueryInstance]:
    return queries_from_dict(_read_json(path), bank, str(path))


# --- encoding ----------------------------------------------------------------


def _event_to_dict(e: Event) -> dict:
    return {
        "summary": e.summary,
        "start": render_bound(e.span.start),
        "end": render_bound(e.span.end),
        "recurring": e.span.recurring.value,
    }


def bank_to_dict(bank: MemoryBank) -> dict:
    return {
        "dialog_id": bank.dialog_id,
        "sessions": [
            {
                "id": s.id,
                "timestamp": s.timestamp.render(),
                "utterances": [
                    {
                        "id": u.id,
                        "speaker": u.speaker,
                        "text": u.text,
                        "events": [_event_to_dict(e) for e in u.events],
                    }
                    for u in s.utterances
                ],
            }
            for s in bank.sessions
        ],
    }


def queries_to_dict(queries: Iterable[QueryInstance]) -> dict:
    return {
        "queries": [
            {
                "id": q.id,
                "question": q.question,
                "subtask": q.subtask.value,
                "answer_format": q.answer_format.value,
                "options": [{"letter": l, "text": t} for l, t in q.options],
                "gold_answer": q.gold_answer,
                "gold_evidence": sorted(q.gold_evidence),
                "gold_range": {"start": render_bound(q.gold_range.start), "end": render_bound(q.gold_range.end)},
                "query_time": q.query_time.render(),
            }
            for q in queries
        ]
    }


def dump_bank(bank: MemoryBank, path: str | Path) -> None:
    Path(path).write_text(json.dumps(bank_to_dict(bank), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


def dump_queries(queries: Iterable[QueryInstance], path: str | Path) -> None:
    Path(path).write_text(json.dumps(queries_to_dict(queries), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


# --- corpus statistics -------------------------------------------------------

BRACKETS = ("0k-8k", "8k-16k", "16k-32k", "32k-64k", "64k-128k")
_BRACKET_EDGES = (0, 8_000, 16_000, 32_000, 64_000, 128_000)


def token_length(bank: MemoryBank) -> int:
    """Whitespace tokens over utterance texts plus rendered session timestamps."""
    n = 0
    for s in bank.sessions:
        n += len(s.timestamp.render().split())
        for u in s.utterances:
            n += len(u.text.split())
    return n


def length_bracket(tokens: int) -> str:
    """The context-length bracket a token count falls in (``">128k"`` beyond the last)."""
    for label, lo, hi in zip(BRACKETS, _BRACKET_EDGES, _BRACKET_EDGES[1:]):
        if lo <= tokens < hi:
            return label
    return ">128k"
