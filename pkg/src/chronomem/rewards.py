"""Multi-level verifiable reward: accuracy, evidence grounding, temporal consistency."""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, fields

from .errors import UnknownSession, UnparseableTimestamp, UnscorableGold
from .memory import AnswerFormat, MemoryBank, QueryInstance, Session
from .parsing import AgentOutput, ParseFailure
from .temporal import Containment, TimeInterval, containment, gap_days, parse_timestamp, same_instant
from .text import token_jaccard

__all__ = [
    "RewardWeights",
    "RewardBreakdown",
    "PARSE_PENALTY",
    "score_answer",
    "grounding_reward",
    "proximity_reward",
    "fidelity_reward",
    "total_reward",
    "parse_duration",
    "parse_sequence",
]

PARSE_PENALTY = -0.5
EVENT_SCORES = {Containment.FULL: 1.0, Containment.PARTIAL: 0.5, Containment.NONE: -1.0}


@dataclass(frozen=True)
class RewardWeights:
    w_a: float = 0.6
    w_g: float = 0.2
    w_t: float = 0.2
    alpha: float = 0.5
    beta: float = 0.5
    c: float = 1.5
    d: float = 0.5
    m: float = 7.0
    s: float = 1.0
    epsilon_interval: float = 1.0
    sim_threshold: float = 0.1
    grounding_metric: str = "jaccard"

    def __post_init__(self):
        for name in ("w_a", "w_g", "w_t", "alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} must lie in [0, 1]")
        if abs(self.w_a + self.w_g + self.w_t - 1.0) > 1e-9:
            raise ValueError("w_a + w_g + w_t must equal 1")
        if abs(self.alpha + self.beta - 1.0) > 1e-9:
            raise ValueError("alpha + beta must equal 1")
        if self.c <= 0 or self.s <= 0 or self.m < 0:
            raise ValueError("logistic shape needs c > 0, s > 0, m >= 0")
        if self.epsilon_interval < 0:
            raise ValueError("epsilon_interval must be nonnegative")
        if not -1.0 <= self.sim_threshold <= 1.0:
            raise ValueError("sim_threshold must lie in [-1, 1]")
        if self.grounding_metric not in ("jaccard", "f1"):
            raise ValueError("grounding_metric must be 'jaccard' or 'f1'")

    @classmethod
    def from_dict(cls, d: dict) -> "RewardWeights":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown reward weight keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RewardBreakdown:
    r_a: float
    r_g: float
    r_s: float
    r_f: float
    r_t: float
    total: float
    parse_ok: bool
    score: float = 0.0
    per_session: tuple[tuple[int, float, float], ...] = ()
    weights: RewardWeights = field(default_factory=RewardWeights)

    def to_dict(self) -> dict:
        return {
            "r_a": self.r_a,
            "r_g": self.r_g,
            "r_s": self.r_s,
            "r_f": self.r_f,
            "r_t": self.r_t,
            "total": self.total,
            "parse_ok": self.parse_ok,
            "score": self.score,
            "per_session": [{"session_id": sid, "r_s": rs, "r_f": rf} for sid, rs, rf in self.per_session],
            "weights": self.weights.to_dict(),
        }


# --- accuracy ----------------------------------------------------------------

_UNIT_DAYS = {
    "minute": 1 / 1440,
    "hour": 1 / 24,
    "day": 1.0,
    "week": 7.0,
    "month": 30.0,
    "year": 365.0,
}
_UNIT_ALIASES = {
    "min": "minute", "mins": "minute", "minute": "minute", "minutes": "minute",
    "h": "hour", "hr": "hour", "hrs": "hour", "hour": "hour", "hours": "hour",
    "d": "day", "day": "day", "days": "day",
    "w": "week", "wk": "week", "wks": "week", "week": "week", "weeks": "week",
    "mo": "month", "month": "month", "months": "month",
    "y": "year", "yr": "year", "yrs": "year", "year": "year", "years": "year",
}
_NUM = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)"
_DURATION_PART = re.compile(rf"({_NUM})\s*([a-zA-Z]+)?")


def parse_duration(text: str, default_unit: str | None = None) -> tuple[float, str]:
    """Parse ``"13 days"``, ``"2 weeks 3 days"`` or a bare number into ``(days, unit)``.

    ``unit`` is the first unit named (or ``default_unit`` for a bare
    number). Raises ValueError when the text is not a duration.
    """
    s = text.strip().lower().rstrip(".")
    pos, total, first_unit = 0, 0.0, None
    parts = 0
    for m in _DURATION_PART.finditer(s):
        if s[pos : m.start()].strip(" ,and") != "":
            raise ValueError(f"not a duration: {text!r}")
        word = m.group(2)
        if word is None:
            unit = default_unit
        else:
            unit = _UNIT_ALIASES.get(word)
            if unit is None:
                raise ValueError(f"unknown duration unit {word!r}")
        if unit is None:
            raise ValueError(f"bare number without a unit: {text!r}")
        total += float(m.group(1)) * _UNIT_DAYS[unit]
        first_unit = first_unit or unit
        parts += 1
        pos = m.end()
    if parts == 0 or s[pos:].strip() != "":
        raise ValueError(f"not a duration: {text!r}")
    return total, first_unit


def parse_sequence(text: str) -> list[str]:
    """``"(1), (3), (2)"`` or ``"(4)(5)(1)"`` or ``"1 3 2"`` -> ``["1", "3", "2"]``."""
    items = re.findall(r"\(\s*([0-9A-Za-z]+)\s*\)", text)
    if items:
        return [i.upper() for i in items]
    return [t.upper() for t in re.split(r"[\s,;>\-]+", text.strip()) if t]


def _option_letters(text: str) -> frozenset[str]:
    return frozenset(t.strip("().").upper() for t in re.split(r"[\s,;]+", text.strip()) if t.strip("()."))


def _choice_score(answer: str, gold: str, fmt: str) -> float:
    gold_set = _option_letters(gold)
    if not gold_set or not all(len(l) == 1 and l.isalpha() for l in gold_set):
        raise UnscorableGold(gold, fmt, "expected option letters")
    return 1.0 if _option_letters(answer) == gold_set else 0.0


def _time_span_score(answer: str, gold: str, eps: float) -> float:
    try:
        gold_point = parse_timestamp(gold)
    except UnparseableTimestamp:
        gold_point = None
    if gold_point is not None:
        try:
            pred = parse_timestamp(answer)
        except UnparseableTimestamp:
            return 0.0
        return 1.0 if same_instant(pred, gold_point) else 0.0
    try:
        gold_days, unit = parse_duration(gold)
    except ValueError:
        raise UnscorableGold(gold, "time_span", "neither a timestamp nor a duration") from None
    try:
        pred_days, _ = parse_duration(answer, default_unit=unit)
    except ValueError:
        return 0.0
    # tolerance is expressed in the gold's unit; the slack absorbs unit-conversion rounding
    diff = abs(pred_days - gold_days) / _UNIT_DAYS[unit]
    return 1.0 if diff <= eps + 1e-9 else 0.0


def _hamming_score(answer: str, gold: str) -> float:
    g = parse_sequence(gold)
    if not g:
        raise UnscorableGold(gold, "event_order", "empty sequence")
    p = parse_sequence(answer)
    hits = sum(1 for a, b in zip(p, g) if a == b)
    return hits / len(g)


def score_answer(answer: str, query: QueryInstance, weights: RewardWeights | None = None) -> tuple[float, float]:
    """Return ``(score, r_a)`` where ``score`` is in [0, 1] and ``r_a`` is
    ``score`` when positive and -1 otherwise."""
    weights = weights or RewardWeights()
    fmt = query.answer_format
    if query.unanswerable:
        score = 1.0 if answer.strip().lower().rstrip(".") == "unknown" else 0.0
    elif fmt in (AnswerFormat.SINGLE_CHOICE, AnswerFormat.MULTI_CHOICE):
        score = _choice_score(answer, query.gold_answer, fmt.value)
    elif fmt is AnswerFormat.TIME_SPAN:
        score = _time_span_score(answer, query.gold_answer, weights.epsilon_interval)
    else:
        score = _hamming_score(answer, query.gold_answer)
    return score, (score if score > 0 else -1.0)


# --- grounding ---------------------------------------------------------------


def grounding_reward(selection, gold, metric: str = "jaccard") -> float:
    """``2 * J - 1`` for the Jaccard index ``J`` (or F1 when ``metric='f1'``)."""
    sel, ref = set(selection), set(gold)
    if not sel and not ref:
        return 1.0
    inter = len(sel & ref)
    if metric == "f1":
        sim = 2 * inter / (len(sel) + len(ref))
    else:
        sim = inter / len(sel | ref)
    return 2.0 * sim - 1.0


# --- temporal consistency ----------------------------------------------------


def _logistic_decay(x: float) -> float:
    """``1 / (1 + exp(x))`` without overflow."""
    if x >= 0:
        e = math.exp(-x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(x))


def proximity_reward(session: Session, window: TimeInterval, weights: RewardWeights | None = None) -> float:
    w = weights or RewardWeights()
    x = (gap_days(session.interval, window) - w.m) / w.s
    return w.c * _logistic_decay(x) - w.d


def fidelity_reward(session: Session, query: QueryInstance, weights: RewardWeights | None = None) -> float:
    """Mean over relevant utterances of the mean event containment score.

    An utterance is relevant when it carries events and its token Jaccard
    similarity to the question exceeds ``sim_threshold``.
    """
    w = weights or RewardWeights()
    per_utt = []
    for u in session.utterances:
        if not u.events or token_jaccard(u.text, query.question) <= w.sim_threshold:
            continue
        scores = [EVENT_SCORES[containment(e.span, query.gold_range)] for e in u.events]
        per_utt.append(sum(scores) / len(scores))
    if not per_utt:
        return 0.0
    return sum(per_utt) / len(per_utt)


def total_reward(
    output: AgentOutput,
    query: QueryInstance,
    bank: MemoryBank,
    weights: RewardWeights | None = None,
) -> RewardBreakdown:
    w = weights or RewardWeights()
    if isinstance(output, ParseFailure):
        return RewardBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, PARSE_PENALTY, False, weights=w)
    for sid in output.selection:
        if sid not in bank:
            raise UnknownSession(sid)
    score, r_a = score_answer(output.answer, query, w)
    r_g = grounding_reward(output.selection, query.gold_evidence, w.grounding_metric)
    per_session = []
    for sid in sorted(output.selection):
        sess = bank.session(sid)
        per_session.append((sid, proximity_reward(sess, query.gold_range, w), fidelity_reward(sess, query, w)))
    if per_session:
        n = len(per_session)
        r_s = sum(rs for _, rs, _ in per_session) / n
        r_f = sum(rf for _, _, rf in per_session) / n
        r_t = sum(w.alpha * rs + w.beta * rf for _, rs, rf in per_session) / n
    else:
        r_s = r_f = r_t = 0.0
    total = w.w_a * r_a + w.w_g * r_g + w.w_t * r_t
    assert -1.0 - 1e-12 <= total <= 1.0 + 1e-12, f"total reward {total} escaped [-1, 1]"
    return RewardBreakdown(r_a, r_g, r_s, r_f, r_t, total, True, score, tuple(per_session), w)
