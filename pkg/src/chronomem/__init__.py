"""Temporal memory retrieval, multi-level reward scoring and toy GRPO training."""

__version__ = "0.1.0"

from .candidates import CandidatePool, RetrievalConfig, ScopeMode, generate_candidates
from .memory import MemoryBank, QueryInstance, Session, Subtask, load_bank, load_queries
from .parsing import Parsed, ParseFailure, parse_output, render_output
from .rewards import RewardBreakdown, RewardWeights, total_reward
from .temporal import TimeInterval, TimePoint, parse_timestamp

__all__ = [
    "__version__",
    "CandidatePool",
    "RetrievalConfig",
    "ScopeMode",
    "generate_candidates",
    "MemoryBank",
    "QueryInstance",
    "Session",
    "Subtask",
    "load_bank",
    "load_queries",
    "Parsed",
    "ParseFailure",
    "parse_output",
    "render_output",
    "RewardBreakdown",
    "RewardWeights",
    "total_reward",
    "TimeInterval",
    "TimePoint",
    "parse_timestamp",
]
