"""Coarse candidate generation: temporal hard filter, then BM25 top-k."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from datetime import datetime

from .bm25 import BM25Index
from .errors import MalformedScopeResponse, ProviderError
from .memory import MemoryBank, QueryInstance
from .temporal import Granularity, TimeInterval, TimePoint, find_timestamps, overlaps
from .text import tokenize

log = logging.getLogger(__name__)

__all__ = [
    "ScopeMode",
    "ScopePrediction",
    "CandidatePool",
    "RetrievalConfig",
    "predict_scope",
    "rule_based_window",
    "temporal_filter",
    "bm25_rank",
    "generate_candidates",
]


class ScopeMode(str, enum.Enum):
    GOLD_ORACLE = "gold_oracle"
    RULE_BASED = "rule_based"
    EXTERNAL_LLM = "external_llm"


@dataclass(frozen=True)
class ScopePrediction:
    window: TimeInterval
    source: ScopeMode


@dataclass(frozen=True)
class CandidatePool:
    query_id: str
    entries: tuple[tuple[int, float], ...]
    k: int
    scope: ScopePrediction | None = field(default=None, compare=False)

    @property
    def session_ids(self) -> list[int]:
        return [sid for sid, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        d = {
            "query_id": self.query_id,
            "k": self.k,
            "entries": [{"session_id": sid, "bm25": score} for sid, score in self.entries],
        }
        if self.scope is not None:
            d["scope"] = {**self.scope.window.to_dict(), "source": self.scope.source.value}
        return d


@dataclass
class RetrievalConfig:
    topk: int = 10
    scope_mode: ScopeMode = ScopeMode.RULE_BASED
    temporal_filter: bool = True
    bm25_k1: float = 1.2
    bm25_b: float = 0.75

    def __post_init__(self):
        self.scope_mode = ScopeMode(self.scope_mode)
        if self.topk < 1:
            raise ValueError("topk must be >= 1")


def rule_based_window(text: str) -> TimeInterval:
    """Envelope of the explicit timestamps mentioned in ``text``.

    Date-only mentions cover the full day. Without any mention the window
    is unbounded.
    """
    points = find_timestamps(text)
    if not points:
        return TimeInterval.unbounded()
    first = min(points, key=lambda p: p.first_second)
    last = max(points, key=lambda p: p.last_second)
    start = TimePoint(first.value, Granularity.SECOND)
    if last.granularity is Granularity.DAY:
        v = last.value
        end = TimePoint(datetime(v.year, v.month, v.day, 23, 59, 59))
    else:
        end = TimePoint(last.value, Granularity.SECOND)
    return TimeInterval(start, end)


def predict_scope(query: QueryInstance, mode: ScopeMode | str, llm_config=None) -> ScopePrediction:
    """Predict the time window a query is about.

    ``external_llm`` raises :class:`ProviderError` or
    :class:`MalformedScopeResponse` on failure; :func:`generate_candidates`
    catches those and falls back to ``rule_based``.
    """
    mode = ScopeMode(mode)
    if mode is ScopeMode.GOLD_ORACLE:
        return ScopePrediction(query.gold_range, mode)
    if mode is ScopeMode.RULE_BASED:
        return ScopePrediction(rule_based_window(query.question), mode)
    from .llm import ProviderConfig, predict_window_via_llm

    cfg = llm_config if llm_config is not None else ProviderConfig.from_env()
    return ScopePrediction(predict_window_via_llm(query.question, query.query_time, cfg), mode)


def temporal_filter(bank: MemoryBank, window: TimeInterval) -> list[int]:
    return [s.id for s in bank.sessions if overlaps(s.interval, window)]


def bm25_rank(
    query: QueryInstance,
    sessions: list[int],
    bank: MemoryBank,
    k: int,
    k1: float = 1.2,
    b: float = 0.75,
) -> CandidatePool:
    """Rank ``sessions`` (the whole corpus for IDF purposes) and keep the top ``k``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    docs = {sid: tokenize(bank.session(sid).text) for sid in sorted(set(sessions))}
    scores = BM25Index(docs, k1=k1, b=b).scores(tokenize(query.retrieval_text))
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return CandidatePool(query.id, tuple(ranked[:k]), k)


def generate_candidates(
    query: QueryInstance,
    bank: MemoryBank,
    config: RetrievalConfig | None = None,
    llm_config=None,
) -> CandidatePool:
    config = config or RetrievalConfig()
    try:
        scope = predict_scope(query, config.scope_mode, llm_config)
    except (ProviderError, MalformedScopeResponse) as exc:
        log.warning("scope prediction failed for %s (%s); using rule_based", query.id, exc)
        scope = predict_scope(query, ScopeMode.RULE_BASED)
    if config.temporal_filter:
        kept = temporal_filter(bank, scope.window)
    else:
        kept = bank.session_ids
    pool = bm25_rank(query, kept, bank, config.topk, config.bm25_k1, config.bm25_b)
    return CandidatePool(pool.query_id, pool.entries, pool.k, scope)
