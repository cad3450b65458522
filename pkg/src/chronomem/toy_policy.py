"""A small Bernoulli selection policy plus a rule-based answer head.

The policy picks each candidate session independently with probability
``sigmoid(theta . f)``. The answer is then computed deterministically from
the event annotations of the selected sessions, so the probability of a
full output equals the probability of its selection.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .candidates import CandidatePool
from .memory import AnswerFormat, Event, MemoryBank, QueryInstance
from .parsing import Parsed
from .temporal import Granularity, TimeInterval, TimePoint, gap_days, overlaps
from .text import token_jaccard, tokenize

__all__ = ["PolicyContext", "ToySelectionPolicy", "build_context", "extract_answer", "FEATURE_NAMES"]

FEATURE_NAMES = ("bm25", "log_gap", "similarity", "bias")


@dataclass(frozen=True)
class PolicyContext:
    """Everything the policy conditions on for one query."""

    query: QueryInstance
    bank: MemoryBank
    pool: CandidatePool
    window: TimeInterval
    features: np.ndarray  # (n_candidates, n_features)

    @property
    def session_ids(self) -> list[int]:
        return self.pool.session_ids


def build_context(query: QueryInstance, bank: MemoryBank, pool: CandidatePool) -> PolicyContext:
    window = pool.scope.window if pool.scope is not None else TimeInterval.unbounded()
    scores = np.array([score for _, score in pool.entries], dtype=float)
    top = scores.max() if len(scores) else 0.0
    rows = []
    for (sid, score) in pool.entries:
        sess = bank.session(sid)
        sim = max((token_jaccard(u.text, query.retrieval_text) for u in sess.utterances), default=0.0)
        rows.append([score / top if top > 0 else 0.0, np.log1p(gap_days(sess.interval, window)), sim, 1.0])
    feats = np.array(rows, dtype=float).reshape(len(rows), len(FEATURE_NAMES))
    return PolicyContext(query, bank, pool, window, feats)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


class ToySelectionPolicy:
    """Independent Bernoulli selection over a candidate pool."""

    def __init__(self, theta=None):
        self.theta = np.zeros(len(FEATURE_NAMES)) if theta is None else np.asarray(theta, dtype=float).copy()
        if self.theta.shape != (len(FEATURE_NAMES),):
            raise ValueError(f"theta must have shape ({len(FEATURE_NAMES)},)")

    def copy(self) -> "ToySelectionPolicy":
        return ToySelectionPolicy(self.theta)

    def logits(self, ctx: PolicyContext) -> np.ndarray:
        return ctx.features @ self.theta

    def probs(self, ctx: PolicyContext) -> np.ndarray:
        return _sigmoid(self.logits(ctx))

    def indicator(self, selection, ctx: PolicyContext) -> np.ndarray | None:
        """0/1 vector over the pool, or None if ``selection`` leaves the pool."""
        ids = ctx.session_ids
        if not set(selection) <= set(ids):
            return None
        return np.array([1.0 if sid in selection else 0.0 for sid in ids])

    def log_prob(self, selection, ctx: PolicyContext) -> float:
        y = self.indicator(selection, ctx)
        if y is None:
            return float("-inf")
        z = self.logits(ctx)
        return float(np.sum(y * _log_sigmoid(z) + (1 - y) * _log_sigmoid(-z)))

    def grad_log_prob(self, selection, ctx: PolicyContext) -> np.ndarray:
        y = self.indicator(selection, ctx)
        if y is None:
            raise ValueError("selection is outside the candidate pool")
        return (y - self.probs(ctx)) @ ctx.features

    def kl(self, ref: "ToySelectionPolicy", ctx: PolicyContext) -> float:
        """``KL(self || ref)`` summed over the independent Bernoullis."""
        z, zr = self.logits(ctx), ref.logits(ctx)
        p = _sigmoid(z)
        # log p/q and log (1-p)/(1-q) in terms of logits
        a = _log_sigmoid(z) - _log_sigmoid(zr)
        b = _log_sigmoid(-z) - _log_sigmoid(-zr)
        return float(np.sum(p * a + (1 - p) * b))

    def grad_kl(self, ref: "ToySelectionPolicy", ctx: PolicyContext) -> np.ndarray:
        z, zr = self.logits(ctx), ref.logits(ctx)
        p = _sigmoid(z)
        return (p * (1 - p) * (z - zr)) @ ctx.features

    def select(self, ctx: PolicyContext, rng: np.random.Generator | None = None) -> frozenset[int]:
        p = self.probs(ctx)
        if rng is None:
            mask = p > 0.5
        else:
            mask = rng.random(len(p)) < p
        return frozenset(sid for sid, keep in zip(ctx.session_ids, mask) if keep)

    def sample(self, ctx: PolicyContext, rng: np.random.Generator) -> Parsed:
        sel = self.select(ctx, rng)
        return Parsed(sel, extract_answer(ctx.query, ctx.bank, sel, ctx.window))

    def greedy(self, ctx: PolicyContext) -> Parsed:
        sel = self.select(ctx)
        return Parsed(sel, extract_answer(ctx.query, ctx.bank, sel, ctx.window))

    def to_dict(self) -> dict:
        return {"kind": "toy_bernoulli", "features": list(FEATURE_NAMES), "theta": [float(t) for t in self.theta]}

    @classmethod
    def from_dict(cls, d: dict) -> "ToySelectionPolicy":
        if d.get("kind") != "toy_bernoulli" or list(d.get("features", [])) != list(FEATURE_NAMES):
            raise ValueError("not a toy policy snapshot")
        return cls(d["theta"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ToySelectionPolicy":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --- answer head ------------------------------------------------------------

_OPTION_LIST = re.compile(r"\((?:[A-Z]|\d+)\)")
_WITHIN = re.compile(r"within (\d+) days? of")


def _stem(question: str) -> str:
    """Question text before any inline option listing."""
    m = _OPTION_LIST.search(question)
    return question[: m.start()] if m else question


def _cover(part: str, whole: set[str]) -> float:
    toks = set(tokenize(part))
    return len(toks & whole) / len(toks) if toks else 0.0


def _bounded_events(bank: MemoryBank, selection) -> list[Event]:
    out = []
    for sid in sorted(selection):
        for e in bank.session(sid).events:
            if e.span.start is not None and e.span.end is not None:
                out.append(e)
    return out


def _match_option(text: str, events: list[Event]) -> Event | None:
    best, best_score = None, 0.8
    for e in events:
        score = _cover(text, set(tokenize(e.summary)))
        if score > best_score or (best is None and score >= best_score):
            best, best_score = e, score
    return best


def _anchor(stem: str, events: list[Event], exclude) -> Event | None:
    toks = set(tokenize(stem))
    ranked = [(_cover(e.summary, toks), i) for i, e in enumerate(events) if e not in exclude]
    if not ranked:
        return None
    score, i = max(ranked, key=lambda si: (si[0], -si[1]))
    return events[i] if score >= 0.99 else None


def _start(e: Event):
    return e.span.start.value


def _days_between(a: Event, b: Event) -> int:
    return abs((_start(b).date() - _start(a).date()).days)


def extract_answer(query: QueryInstance, bank: MemoryBank, selection, window: TimeInterval) -> str:
    """Answer ``query`` from the events of the selected sessions only."""
    events = _bounded_events(bank, selection)
    stem = _stem(query.question)
    low = stem.lower()
    fmt = query.answer_format

    if fmt is AnswerFormat.EVENT_ORDER:
        known, unknown = [], []
        for i, (label, text) in enumerate(query.options):
            e = _match_option(text, events)
            if e is None:
                unknown.append(label)
            else:
                known.append((_start(e), i, label))
        # unmatched options keep their listed order after the dated ones
        labels = [label for *_, label in sorted(known)] + unknown
        return "".join(f"({label})" for label in labels)

    if fmt is AnswerFormat.TIME_SPAN:
        toks = set(tokenize(stem))
        ranked = sorted(
            ((_cover(e.summary, toks), i, e) for i, e in enumerate(events)), key=lambda t: (-t[0], t[1])
        )
        # question verbs may differ in tense from summaries, so allow partial cover
        hits = [e for score, _, e in ranked if score >= 0.6]
        if "how many days" in low:
            if len(hits) < 2:
                return "unknown"
            return f"{_days_between(hits[0], hits[1])} days"
        if not hits:
            return "unknown"
        day = TimePoint(_start(hits[0]), Granularity.DAY)
        return day.render_long()

    # choice formats
    matched = [(label, _match_option(text, events)) for label, text in query.options]
    resolved = [(label, e) for label, e in matched if e is not None]
    option_events = [e for _, e in resolved]
    chosen: list[str] = []
    if not resolved:
        return ""
    if "never" in low or "suppose" in low:
        chosen = [
            l for l, e in resolved
            if overlaps(e.span, window) and _cover(dict(query.options)[l], set(tokenize(stem))) < 0.99
        ]
    elif (m := _WITHIN.search(low)) is not None:
        anchor = _anchor(stem, events, option_events)
        if anchor is not None:
            n = int(m.group(1))
            chosen = [l for l, e in resolved if _days_between(anchor, e) <= n]
    elif "longer" in low:
        chosen = [max(resolved, key=lambda le: (le[1].span.hi - le[1].span.lo, -ord(le[0][0])))[0]]
    elif "before" in low:
        anchor = _anchor(stem, events, option_events)
        if anchor is not None:
            prior = [(l, e) for l, e in resolved if _start(e) < _start(anchor)]
            if prior:
                chosen = [max(prior, key=lambda le: _start(le[1]))[0]]
    elif "after" in low:
        anchor = _anchor(stem, events, option_events)
        if anchor is not None:
            later = [(l, e) for l, e in resolved if _start(e) > _start(anchor)]
            if later:
                chosen = [min(later, key=lambda le: _start(le[1]))[0]]
    elif "first" in low or "earlier" in low:
        chosen = [min(resolved, key=lambda le: (_start(le[1]), le[0]))[0]]
    else:
        chosen = [l for l, e in resolved if overlaps(e.span, window)]
    if fmt is AnswerFormat.SINGLE_CHOICE:
        chosen = sorted(chosen)[:1]
    return " ".join(sorted(chosen))
