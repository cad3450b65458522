"""Deterministic synthetic memory banks with gold annotations.

Each session carries one "topic" event that starts on the session day and
is referenced by exactly one activity phrase, so every query's answer is
derivable from event annotations alone. Question templates embed their
date window explicitly, which keeps rule-based scope prediction exact on
clean data.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

from .errors import SpecInfeasible
from .memory import (
    BRACKETS,
    AnswerFormat,
    Event,
    MemoryBank,
    QueryInstance,
    Session,
    Subtask,
    Utterance,
    dump_bank,
    dump_queries,
    token_length,
)
from .temporal import Granularity, Recurrence, TimeInterval, TimePoint, overlaps

__all__ = ["SynthSpec", "GoldTrace", "generate", "generate_corpus", "inject_time_noise", "noise_plan", "write_corpus"]

_BRACKET_RANGE = dict(zip(BRACKETS, [(0, 8_000), (8_000, 16_000), (16_000, 32_000), (32_000, 64_000), (64_000, 128_000)]))

ACTIVITIES = [
    ("took a pottery class", "take a pottery class"),
    ("went hiking in the mountains", "go hiking in the mountains"),
    ("visited the art museum", "visit the art museum"),
    ("painted a sunset mural", "paint a sunset mural"),
    ("ran a charity marathon", "run a charity marathon"),
    ("adopted a rescue puppy", "adopt a rescue puppy"),
    ("attended a jazz concert", "attend a jazz concert"),
    ("baked a chocolate cake", "bake a chocolate cake"),
    ("started a vegetable garden", "start a vegetable garden"),
    ("joined a chess tournament", "join a chess tournament"),
    ("went kayaking on the river", "go kayaking on the river"),
    ("learned to play the violin", "learn to play the violin"),
    ("volunteered at the food bank", "volunteer at the food bank"),
    ("hosted a board game night", "host a board game night"),
    ("photographed the lighthouse", "photograph the lighthouse"),
    ("went camping by the lake", "go camping by the lake"),
    ("took a cooking workshop", "take a cooking workshop"),
    ("visited the botanical garden", "visit the botanical garden"),
    ("watched a theater play", "watch a theater play"),
    ("built a wooden bookshelf", "build a wooden bookshelf"),
    ("went skiing in the alps", "go skiing in the alps"),
    ("attended a poetry reading", "attend a poetry reading"),
    ("sketched a waterfall", "sketch a waterfall"),
    ("toured a chocolate factory", "tour a chocolate factory"),
    ("went fishing at the pier", "go fishing at the pier"),
    ("joined a yoga retreat", "join a yoga retreat"),
    ("visited the science museum", "visit the science museum"),
    ("played in a soccer match", "play in a soccer match"),
    ("went to a pumpkin festival", "go to a pumpkin festival"),
    ("repaired an old bicycle", "repair an old bicycle"),
    ("planted cherry trees", "plant cherry trees"),
    ("went to a comedy show", "go to a comedy show"),
    ("knitted a wool scarf", "knit a wool scarf"),
    ("took a salsa dance lesson", "take a salsa dance lesson"),
    ("visited the aquarium", "visit the aquarium"),
    ("climbed a rock wall", "climb a rock wall"),
    ("went to a wine tasting", "go to a wine tasting"),
    ("exhibited paintings at a gallery", "exhibit paintings at a gallery"),
    ("went snorkeling at the reef", "go snorkeling at the reef"),
    ("wrote a short story", "write a short story"),
    ("attended a robotics fair", "attend a robotics fair"),
    ("rode a hot air balloon", "ride a hot air balloon"),
    ("went birdwatching in the marsh", "go birdwatching in the marsh"),
    ("organized a book club", "organize a book club"),
    ("visited a lavender farm", "visit a lavender farm"),
    ("played drums at an open mic", "play drums at an open mic"),
    ("went ice skating downtown", "go ice skating downtown"),
    ("restored a vintage radio", "restore a vintage radio"),
]
_PLACES = ["Portland", "Denver", "Austin", "Boston", "Seattle", "Chicago", "Toronto", "Dublin", "Lisbon", "Kyoto"]

_HABITS = [
    ("goes jogging", "I go jogging every week.", Recurrence.WEEKLY),
    ("reads the newspaper", "I read the newspaper every morning.", Recurrence.DAILY),
    ("calls grandma", "I call my grandma every month.", Recurrence.MONTHLY),
    ("practices guitar", "I usually practice guitar after work.", Recurrence.HABITUAL),
]
_PAST_REFS = [
    ("played the piano", "I used to play the piano as a kid."),
    ("lived by the sea", "I lived by the sea for a few years."),
    ("collected stamps", "Back then I collected stamps."),
]
_REPLIES = [
    "That sounds fun!",
    "Wow, how was it?",
    "Nice, tell me more.",
    "I am glad you enjoyed it.",
    "Oh, that is lovely.",
]
_FIRST = ["Debra", "India", "Marcus", "Priya", "Tomas", "Keiko", "Amara", "Oliver", "Lena", "Rafael",
          "Sofia", "Jonah", "Mei", "Elijah", "Nadia", "Victor"]
_LAST = ["Ryan", "Brown", "Okafor", "Lindqvist", "Moreau", "Tanaka", "Silva", "Novak", "Hughes", "Reyes",
         "Patel", "Fischer"]
_SYLLABLES = ["ka", "lo", "mi", "ren", "tu", "sa", "vel", "dor", "pi", "nex", "bra", "qui", "zo", "fen",
              "gar", "wu", "ish", "tal", "mor", "jeb"]


@dataclass
class SynthSpec:
    seed: int = 0
    num_sessions: int = 10
    start_date: str = "2020-01-01"
    end_date: str = "2020-12-31"
    utterances_per_session: int = 4
    distractor_vocab_size: int = 300
    evidence_per_query: int = 2
    num_queries: int = 5
    target_bracket: str | None = None
    noise_rate: float = 0.0
    subtask_mix: dict[str, float] | None = None
    dialog_id: str | None = None
    min_spacing_days: int = 5
    max_pad_days: int = 3

    def __post_init__(self):
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise_rate must lie in [0, 1]")
        if self.target_bracket is not None and self.target_bracket not in _BRACKET_RANGE:
            raise ValueError(f"target_bracket must be one of {BRACKETS}")
        if self.utterances_per_session < 2:
            raise ValueError("utterances_per_session must be >= 2")
        if self.min_spacing_days < 5:
            raise ValueError("min_spacing_days must be >= 5 so event spans never reach the next session")
        if self.subtask_mix is not None:
            for label in self.subtask_mix:
                Subtask(label)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synth spec keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class GoldTrace:
    dialog_id: str
    seed: int
    token_length: int
    bracket: str | None
    sessions: dict[int, dict] = field(default_factory=dict)
    queries: dict[str, dict] = field(default_factory=dict)
    noise: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sessions"] = {str(k): v for k, v in self.sessions.items()}
        return d


@dataclass
class _Topic:
    session_id: int
    day: date
    duration: int
    past: str
    base: str

    @property
    def start(self) -> date:
        return self.day

    @property
    def end(self) -> date:
        return self.day + timedelta(days=self.duration)

    @property
    def span(self) -> TimeInterval:
        return TimeInterval.full_days(_dt(self.start), _dt(self.end))


def _dt(d: date) -> datetime:
    return datetime(d.year, d.month, d.day)


def _long(d: date) -> str:
    return f"{d.strftime('%B')} {d.day}, {d.year}"


def _vocab(rng: random.Random, size: int) -> list[str]:
    words: set[str] = set()
    attempts = 0
    while len(words) < size and attempts < size * 50:
        words.add("".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 3))))
        attempts += 1
    return sorted(words)


def _activities(n: int, rng: random.Random) -> list[tuple[str, str]]:
    pool = list(ACTIVITIES)
    if n > len(pool):
        pool = [(p + f" in {place}", b + f" in {place}") for place in _PLACES for p, b in ACTIVITIES]
    if n > len(pool):
        raise SpecInfeasible(f"at most {len(pool)} sessions are supported, got {n}")
    rng.shuffle(pool)
    return pool[:n]


class _Builder:
    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.rng = random.Random(spec.seed)
        self.dialog_id = spec.dialog_id or f"synth-{spec.seed:04d}"

    # -- bank --------------------------------------------------------------

    def build_bank(self) -> tuple[MemoryBank, list[_Topic]]:
        spec, rng = self.spec, self.rng
        n = spec.num_sessions
        if n < 1:
            raise SpecInfeasible("num_sessions must be >= 1")
        first = date.fromisoformat(spec.start_date)
        last = date.fromisoformat(spec.end_date)
        slack = (last - first).days - (n - 1) * spec.min_spacing_days
        if slack < 0:
            raise SpecInfeasible("date range too short for the requested sessions and spacing")
        offsets = sorted(rng.sample(range(slack + 1), n)) if slack + 1 >= n else sorted(rng.choices(range(slack + 1), k=n))
        days = [first + timedelta(days=o + i * spec.min_spacing_days) for i, o in enumerate(offsets)]

        self.vocab = _vocab(rng, max(spec.distractor_vocab_size, 1))
        acts = _activities(n, rng)
        a_first, b_first = rng.sample(_FIRST, 2)
        self.name = f"{a_first} {rng.choice(_LAST)}"
        self.partner = f"{b_first} {rng.choice(_LAST)}"

        topics: list[_Topic] = []
        sessions = []
        for i, (day, (past, base)) in enumerate(zip(days, acts), start=1):
            dur = rng.choice([0, 0, 1, 2, 3])
            topic = _Topic(i, day, dur, past, base)
            topics.append(topic)
            ts = TimePoint(datetime(day.year, day.month, day.day, rng.randint(8, 21), rng.randint(0, 59)), Granularity.SECOND)
            sessions.append(Session(i, ts, tuple(self._utterances(topic, ts))))
        bank = MemoryBank(self.dialog_id, tuple(sessions))
        if spec.target_bracket is not None:
            bank = self._pad_to_bracket(bank)
        return bank, topics

    def _utterances(self, topic: _Topic, ts: TimePoint) -> list[Utterance]:
        rng, spec = self.rng, self.spec
        when = f"Today, {_long(topic.day)}, I {topic.past}"
        text = f"{when}." if topic.duration == 0 else f"{when}; it runs for {topic.duration + 1} days."
        utts = [Utterance(0, self.name, text, (Event(f"{self.name} {topic.past}", topic.span),))]
        for j in range(1, spec.utterances_per_session):
            if j == 2 and rng.random() < 0.5:
                summary, said, rec = rng.choice(_HABITS)
                ev = Event(f"{self.name} {summary}", TimeInterval(None, None, rec))
                utts.append(Utterance(j, self.name, said, (ev,)))
            elif j == 2:
                summary, said = rng.choice(_PAST_REFS)
                ev = Event(f"{self.name} {summary}", TimeInterval(None, ts))
                utts.append(Utterance(j, self.name, said, (ev,)))
            else:
                speaker = self.partner if j % 2 else self.name
                filler = " ".join(rng.choice(self.vocab) for _ in range(rng.randint(2, 6)))
                utts.append(Utterance(j, speaker, f"{rng.choice(_REPLIES)} {filler}."))
        return utts

    def _pad_to_bracket(self, bank: MemoryBank) -> MemoryBank:
        lo, hi = _BRACKET_RANGE[self.spec.target_bracket]
        current = token_length(bank)
        if current >= hi:
            raise SpecInfeasible(f"bank already has {current} tokens, above bracket {self.spec.target_bracket}")
        need = max(0, (lo + hi) // 2 - current)
        slots = [(si, ui) for si, s in enumerate(bank.sessions) for ui, u in enumerate(s.utterances) if not u.events]
        if not slots:
            raise SpecInfeasible("no event-free utterances to pad")
        extra = [[] for _ in slots]
        for k in range(need):
            extra[k % len(slots)].append(self.rng.choice(self.vocab))
        sessions = [list(s.utterances) for s in bank.sessions]
        for (si, ui), words in zip(slots, extra):
            if words:
                u = sessions[si][ui]
                sessions[si][ui] = Utterance(u.id, u.speaker, u.text + " " + " ".join(words), u.events)
        return MemoryBank(
            bank.dialog_id,
            tuple(Session(s.id, s.timestamp, tuple(utts)) for s, utts in zip(bank.sessions, sessions)),
        )

    # -- queries -----------------------------------------------------------

    def window(self, topics: list[_Topic]) -> tuple[date, date]:
        pad = self.spec.max_pad_days
        lo = min(t.start for t in topics) - timedelta(days=self.rng.randint(0, pad))
        hi = max(t.end for t in topics) + timedelta(days=self.rng.randint(0, pad))
        return lo, hi

    def outside(self, topics: list[_Topic], lo: date, hi: date, exclude=()) -> list[_Topic]:
        win = TimeInterval.full_days(_dt(lo), _dt(hi))
        return [t for t in topics if t not in exclude and not overlaps(t.span, win)]

    def build_queries(self, bank: MemoryBank, topics: list[_Topic], trace: GoldTrace) -> list[QueryInstance]:
        spec, rng = self.spec, self.rng
        labels = list(Subtask)
        if spec.subtask_mix:
            mix = [(Subtask(k), v) for k, v in spec.subtask_mix.items() if v > 0]
            plan = rng.choices([m for m, _ in mix], weights=[w for _, w in mix], k=spec.num_queries)
        else:
            offset = rng.randrange(len(labels))
            plan = [labels[(offset + i) % len(labels)] for i in range(spec.num_queries)]
        last_ts = bank.sessions[-1].timestamp.value
        queries = []
        for qi, subtask in enumerate(plan):
            built = None
            for _ in range(50):
                built = _TEMPLATES[subtask](self, topics)
                if built is not None:
                    break
            if built is None:
                raise SpecInfeasible(f"cannot build a {subtask.value} query for this bank")
            question, fmt, options, answer, evidence, (lo, hi), extra = built
            qid = f"{self.dialog_id}-q{qi:02d}"
            qtime = TimePoint(last_ts + timedelta(days=rng.randint(1, 30), hours=rng.randint(0, 3)))
            queries.append(
                QueryInstance(
                    id=qid,
                    question=question,
                    subtask=subtask,
                    answer_format=fmt,
                    options=tuple(options),
                    gold_answer=answer,
                    gold_evidence=frozenset(evidence),
                    gold_range=TimeInterval.full_days(_dt(lo), _dt(hi)),
                    query_time=qtime,
                    dialog_id=self.dialog_id,
                )
            )
            trace.queries[qid] = {
                "subtask": subtask.value,
                "evidence": sorted(evidence),
                "window": [lo.isoformat(), hi.isoformat()],
                "answer": answer,
                **extra,
            }
        return queries

    def lettered(self, items: list[_Topic]) -> list[tuple[str, _Topic]]:
        items = list(items)
        self.rng.shuffle(items)
        return [(chr(ord("A") + i), t) for i, t in enumerate(items)]


def _between(lo: date, hi: date) -> str:
    return f"between {_long(lo)}, and {_long(hi)}"


def _cap(s: str) -> str:
    return s[:1].upper() + s[1:]


def _choices_text(opts: list[tuple[str, _Topic]]) -> str:
    return "; ".join(f"({letter}) {t.past}" for letter, t in opts)


def _pick(b: _Builder, topics, k: int) -> list[_Topic] | None:
    if len(topics) < k:
        return None
    return sorted(b.rng.sample(topics, k), key=lambda t: t.session_id)


def _distractors(b: _Builder, topics, lo, hi, chosen, n, keep=lambda t: True):
    pool = [t for t in b.outside(topics, lo, hi, exclude=chosen) if keep(t)]
    return b.rng.sample(pool, min(n, len(pool)))


def _t_localization(b: _Builder, topics):
    (t,) = _pick(b, topics, 1)
    lo, hi = b.window([t])
    q = f"When did {b.name} {t.base} {_between(lo, hi)}?"
    return q, AnswerFormat.TIME_SPAN, [], _long(t.start), [t.session_id], (lo, hi), {"kind": "when"}


def _t_duration_compare(b: _Builder, topics):
    pair = _pick(b, topics, 2)
    if pair is None or pair[0].duration == pair[1].duration:
        return None
    lo, hi = b.window(pair)
    opts = b.lettered(pair)
    longer = max(opts, key=lambda o: o[1].duration)[0]
    q = f"{_cap(_between(lo, hi))}, which lasted longer for {b.name}: {_choices_text(opts)}?"
    options = [(l, t.past) for l, t in opts]
    return q, AnswerFormat.SINGLE_CHOICE, options, longer, [t.session_id for t in pair], (lo, hi), {"kind": "longer"}


def _t_computation(b: _Builder, topics):
    pair = _pick(b, topics, 2)
    if pair is None:
        return None
    lo, hi = b.window(pair)
    x, y = pair
    days = (y.start - x.start).days
    q = (
        f"{_cap(_between(lo, hi))}, how many days passed between the day {b.name} "
        f"{x.past} and the day {b.name} {y.past}?"
    )
    return q, AnswerFormat.TIME_SPAN, [], f"{days} days", [x.session_id, y.session_id], (lo, hi), {"kind": "days_between"}


def _first_of(b: _Builder, topics, subtask_word: str):
    pair = _pick(b, topics, 2)
    if pair is None:
        return None
    lo, hi = b.window(pair)
    opts = b.lettered(pair)
    first = min(opts, key=lambda o: o[1].start)[0]
    q = f"{_cap(_between(lo, hi))}, which did {b.name} do {subtask_word}: {_choices_text(opts)}?"
    options = [(l, t.past) for l, t in opts]
    return q, AnswerFormat.SINGLE_CHOICE, options, first, [t.session_id for t in pair], (lo, hi), {"kind": "first"}


def _t_order_compare(b, topics):
    return _first_of(b, topics, "first")


def _in_window_choice(b: _Builder, topics, n_evidence: int, n_options: int, single: bool):
    chosen = _pick(b, topics, n_evidence)
    if chosen is None:
        return None
    lo, hi = b.window(chosen)
    distract = _distractors(b, topics, lo, hi, chosen, n_options - n_evidence)
    if not distract:
        return None
    opts = b.lettered(chosen + distract)
    answer = " ".join(sorted(l for l, t in opts if t in chosen))
    fmt = AnswerFormat.SINGLE_CHOICE if single else AnswerFormat.MULTI_CHOICE
    return chosen, opts, answer, fmt, (lo, hi)


def _t_extract(b: _Builder, topics):
    n = max(1, min(b.spec.evidence_per_query, len(topics) - 1))
    got = _in_window_choice(b, topics, n, n + 2, single=(n == 1))
    if got is None:
        return None
    chosen, opts, answer, fmt, (lo, hi) = got
    q = f"Which of the following did {b.name} do {_between(lo, hi)}: {_choices_text(opts)}?"
    options = [(l, t.past) for l, t in opts]
    return q, fmt, options, answer, [t.session_id for t in chosen], (lo, hi), {"kind": "in_window"}


def _t_explicit_reasoning(b: _Builder, topics):
    got = _in_window_choice(b, topics, 1, 4, single=True)
    if got is None:
        return None
    chosen, opts, answer, fmt, (lo, hi) = got
    q = f"What activity did {b.name} take part in {_between(lo, hi)}: {_choices_text(opts)}?"
    options = [(l, t.past) for l, t in opts]
    return q, fmt, options, answer, [chosen[0].session_id], (lo, hi), {"kind": "in_window"}


def _t_order_reasoning(b: _Builder, topics):
    if len(topics) < 3:
        return None
    i = b.rng.randrange(1, len(topics))
    prev, anchor = topics[i - 1], topics[i]
    lo, hi = b.window([prev, anchor])
    distract = _distractors(b, topics, lo, hi, [prev, anchor], 2)
    if not distract:
        return None
    opts = b.lettered([prev] + distract)
    answer = next(l for l, t in opts if t is prev)
    q = f"{_cap(_between(lo, hi))}, what did {b.name} do right before the day {b.name} {anchor.past}: {_choices_text(opts)}?"
    options = [(l, t.past) for l, t in opts]
    evidence = [prev.session_id, anchor.session_id]
    return q, AnswerFormat.SINGLE_CHOICE, options, answer, evidence, (lo, hi), {"kind": "before", "anchor": anchor.session_id}


def _t_relative_reasoning(b: _Builder, topics):
    if len(topics) < 3:
        return None
    i = b.rng.randrange(0, len(topics) - 1)
    anchor, nxt = topics[i], topics[i + 1]
    lo, hi = b.window([anchor, nxt])
    distract = _distractors(b, topics, lo, hi, [anchor, nxt], 2)
    if not distract:
        return None
    opts = b.lettered([nxt] + distract)
    answer = next(l for l, t in opts if t is nxt)
    q = f"{_cap(_between(lo, hi))}, what did {b.name} do next after the day {b.name} {anchor.past}: {_choices_text(opts)}?"
    options = [(l, t.past) for l, t in opts]
    evidence = [anchor.session_id, nxt.session_id]
    return q, AnswerFormat.SINGLE_CHOICE, options, answer, evidence, (lo, hi), {"kind": "after", "anchor": anchor.session_id}


def _t_counterfactual(b: _Builder, topics):
    n = max(2, min(b.spec.evidence_per_query, len(topics) - 1))
    chosen = _pick(b, topics, n)
    if chosen is None:
        return None
    lo, hi = b.window(chosen)
    distract = _distractors(b, topics, lo, hi, chosen, 2)
    if not distract:
        return None
    dropped = b.rng.choice(chosen)
    opts = b.lettered(chosen + distract)
    keep = sorted(l for l, t in opts if t in chosen and t is not dropped)
    fmt = AnswerFormat.MULTI_CHOICE if len(keep) > 1 else AnswerFormat.SINGLE_CHOICE
    q = (
        f"Suppose {b.name} never {dropped.past}. Which of the following would {b.name} still have done "
        f"{_between(lo, hi)}: {_choices_text(opts)}?"
    )
    options = [(l, t.past) for l, t in opts]
    evidence = [t.session_id for t in chosen]
    return q, fmt, options, " ".join(keep), evidence, (lo, hi), {"kind": "counterfactual", "dropped": dropped.session_id}


def _t_co_temporality(b: _Builder, topics):
    if len(topics) < 3:
        return None
    i = b.rng.randrange(len(topics))
    anchor = topics[i]
    neighbours = [topics[j] for j in (i - 1, i + 1) if 0 <= j < len(topics)]
    near = min(neighbours, key=lambda t: (abs((t.start - anchor.start).days), t.session_id))
    n_days = abs((near.start - anchor.start).days)
    lo, hi = b.window([anchor, near])
    distract = _distractors(
        b, topics, lo, hi, [anchor, near], 2, keep=lambda t: abs((t.start - anchor.start).days) > n_days
    )
    if not distract:
        return None
    opts = b.lettered([near] + distract)
    answer = next(l for l, t in opts if t is near)
    q = (
        f"{_cap(_between(lo, hi))}, which of these happened within {n_days} days of the day "
        f"{b.name} {anchor.past}: {_choices_text(opts)}?"
    )
    options = [(l, t.past) for l, t in opts]
    evidence = [anchor.session_id, near.session_id]
    return q, AnswerFormat.SINGLE_CHOICE, options, answer, evidence, (lo, hi), {"kind": "within", "anchor": anchor.session_id}


def _t_timeline(b: _Builder, topics):
    n = min(max(3, b.spec.evidence_per_query), len(topics))
    if n < 2:
        return None
    chosen = _pick(b, topics, n)
    lo, hi = b.window(chosen)
    shuffled = list(chosen)
    b.rng.shuffle(shuffled)
    numbered = [(str(i + 1), t) for i, t in enumerate(shuffled)]
    order = "".join(f"({num})" for num, t in sorted(numbered, key=lambda nt: nt[1].start))
    listing = " ".join(f"({num}) {t.past}." for num, t in numbered)
    q = f"Sort what {b.name} did {_between(lo, hi)} in chronological order: {listing}"
    options = [(num, t.past) for num, t in numbered]
    evidence = [t.session_id for t in chosen]
    return q, AnswerFormat.EVENT_ORDER, options, order, evidence, (lo, hi), {"kind": "order"}


_TEMPLATES = {
    Subtask.LOCALIZATION: _t_localization,
    Subtask.DURATION_COMPARE: _t_duration_compare,
    Subtask.COMPUTATION: _t_computation,
    Subtask.ORDER_COMPARE: _t_order_compare,
    Subtask.EXTRACT: _t_extract,
    Subtask.EXPLICIT_REASONING: _t_explicit_reasoning,
    Subtask.ORDER_REASONING: _t_order_reasoning,
    Subtask.RELATIVE_REASONING: _t_relative_reasoning,
    Subtask.COUNTERFACTUAL: _t_counterfactual,
    Subtask.CO_TEMPORALITY: _t_co_temporality,
    Subtask.TIMELINE: _t_timeline,
}


# --- public API --------------------------------------------------------------


def generate(spec: SynthSpec) -> tuple[MemoryBank, list[QueryInstance], GoldTrace]:
    """Build one bank with its queries and construction trace."""
    if spec.evidence_per_query > spec.num_sessions:
        raise SpecInfeasible("evidence_per_query exceeds num_sessions")
    b = _Builder(spec)
    bank, topics = b.build_bank()
    trace = GoldTrace(b.dialog_id, spec.seed, token_length(bank), spec.target_bracket)
    for t in topics:
        trace.sessions[t.session_id] = {
            "activity": t.past,
            "event_start": t.start.isoformat(),
            "event_end": t.end.isoformat(),
        }
    queries = b.build_queries(bank, topics, trace)
    if spec.noise_rate > 0:
        plan = noise_plan(bank, spec.noise_rate, spec.seed)
        bank = _apply_noise(bank, plan)
        trace.noise = [{"session": s, "utterance": u, "event": e, "offset_days": o} for s, u, e, o in plan]
    return bank, queries, trace


def generate_corpus(spec: SynthSpec, n_banks: int) -> list[tuple[MemoryBank, list[QueryInstance], GoldTrace]]:
    """``n_banks`` independent banks with seeds ``spec.seed + i``."""
    out = []
    for i in range(n_banks):
        sub = SynthSpec(**{**asdict(spec), "seed": spec.seed + i, "dialog_id": None})
        out.append(generate(sub))
    return out


def _perturbable(bank: MemoryBank) -> list[tuple[int, int, int]]:
    return [
        (s.id, u.id, k)
        for s in bank.sessions
        for u in s.utterances
        for k, e in enumerate(u.events)
        if e.span.start is not None or e.span.end is not None
    ]


def noise_plan(bank: MemoryBank, rate: float, seed: int) -> list[tuple[int, int, int, int]]:
    """Which event spans to shift and by how many days.

    Only events with at least one known bound can be shifted. The shuffle
    and offsets depend on ``seed`` alone, so the plan for a higher rate
    extends the plan for a lower one.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    locs = _perturbable(bank)
    rng = random.Random(seed)
    order = list(range(len(locs)))
    rng.shuffle(order)
    offsets = [rng.choice((-1, 1)) * rng.randint(8, 60) for _ in order]
    count = math.floor(rate * len(locs) + 1e-9)
    return [(*locs[i], off) for i, off in zip(order[:count], offsets[:count])]


def _apply_noise(bank: MemoryBank, plan) -> MemoryBank:
    shift = {(s, u, e): off for s, u, e, off in plan}
    sessions = []
    for s in bank.sessions:
        utts = []
        for u in s.utterances:
            events = tuple(
                Event(e.summary, e.span.shift(timedelta(days=shift[(s.id, u.id, k)])))
                if (s.id, u.id, k) in shift
                else e
                for k, e in enumerate(u.events)
            )
            utts.append(Utterance(u.id, u.speaker, u.text, events))
        sessions.append(Session(s.id, s.timestamp, tuple(utts)))
    return MemoryBank(bank.dialog_id, tuple(sessions))


def inject_time_noise(bank: MemoryBank, rate: float, seed: int) -> MemoryBank:
    """Shift ``floor(rate * n)`` event spans by a random ``±[8, 60]``-day offset."""
    if rate == 0:
        return bank
    return _apply_noise(bank, noise_plan(bank, rate, seed))


def write_corpus(items, out_dir: str | Path) -> list[Path]:
    """Write ``bank.json``, ``queries.json`` and ``gold_trace.json`` per bank.

    A single bank goes directly into ``out_dir``; several go into
    per-dialog subdirectories.
    """
    out_dir = Path(out_dir)
    written = []
    for bank, queries, trace in items:
        d = out_dir if len(items) == 1 else out_dir / bank.dialog_id
        d.mkdir(parents=True, exist_ok=True)
        dump_bank(bank, d / "bank.json")
        dump_queries(queries, d / "queries.json")
        (d / "gold_trace.json").write_text(json.dumps(trace.to_dict(), indent=1) + "\n", encoding="utf-8")
        written.append(d)
    return written
