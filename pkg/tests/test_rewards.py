import math
import random
from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings, strategies as st

from chronomem.errors import UnknownSession, UnscorableGold
from chronomem.memory import AnswerFormat, Event, MemoryBank, QueryInstance, Session, Subtask, Utterance
from chronomem.parsing import Parsed, ParseFailure
from chronomem.rewards import (
    PARSE_PENALTY,
    RewardWeights,
    fidelity_reward,
    grounding_reward,
    parse_duration,
    proximity_reward,
    score_answer,
    total_reward,
)
from chronomem.temporal import TimeInterval, TimePoint

from oracles import jaccard_reference

WINDOW = TimeInterval(TimePoint.of(2020, 4, 1), TimePoint.of(2020, 4, 9))
QUESTION = "what did Mia bake between April 1, 2020, and April 9, 2020"


def query(fmt=AnswerFormat.SINGLE_CHOICE, gold="B", evidence=(1,), question=QUESTION, subtask=Subtask.EXTRACT):
    return QueryInstance(
        id="q1",
        question=question,
        subtask=subtask,
        answer_format=fmt,
        options=(),
        gold_answer=gold,
        gold_evidence=frozenset(evidence),
        gold_range=WINDOW,
        query_time=TimePoint.of(2021, 1, 1, 0, 0, 0),
    )


def days_span(a, b):
    return TimeInterval.full_days(datetime(2020, 4, a), datetime(2020, 4, b))


def session(sid, when, *utterances):
    return Session(sid, when, tuple(utterances) or (Utterance(0, "A", "hi"),))


def session_at_gap(gap_days):
    """A session whose timestamp sits ``gap_days`` after the window end."""
    end = datetime(2020, 4, 9, 23, 59, 59)
    return session(1, TimePoint(end + timedelta(days=gap_days)))


# --- accuracy -----------------------------------------------------------------


def test_option_exact_match():
    q = query(gold="B")
    assert score_answer("B", q) == (1.0, 1.0)
    assert score_answer("C", q) == (0.0, -1.0)
    assert score_answer(" b ", q) == (1.0, 1.0)


def test_multi_choice_is_set_match():
    q = query(AnswerFormat.MULTI_CHOICE, gold="A C")
    assert score_answer("C, A", q)[0] == 1.0
    assert score_answer("A", q)[0] == 0.0


@pytest.mark.parametrize("pred, ok", [("12 days", True), ("14 days", True), ("13", True), ("12", True),
                                      ("11 days", False), ("15 days", False), ("2 weeks", True), ("soon", False)])
def test_epsilon_exact_match(pred, ok):
    q = query(AnswerFormat.TIME_SPAN, gold="13 days")
    assert score_answer(pred, q)[0] == (1.0 if ok else 0.0)


def test_unit_aware_date_equality():
    q = query(AnswerFormat.TIME_SPAN, gold="2025-09-24")
    assert score_answer("September 24, 2025", q) == (1.0, 1.0)
    assert score_answer("September 25, 2025", q) == (0.0, -1.0)
    assert score_answer("8:35 pm, September 24, 2025", q)[0] == 1.0


def test_hamming_partial_credit():
    q = query(AnswerFormat.EVENT_ORDER, gold="(1), (3), (2), (4)", subtask=Subtask.TIMELINE)
    assert score_answer("(2), (3), (1), (4)", q) == (0.5, 0.5)
    assert score_answer("(1)(3)(2)(4)", q) == (1.0, 1.0)
    assert score_answer("(4)(1)(3)(2)", q) == (0.0, -1.0)


def test_unscorable_gold():
    with pytest.raises(UnscorableGold):
        score_answer("B", query(gold="the second one"))
    with pytest.raises(UnscorableGold):
        score_answer("3 days", query(AnswerFormat.TIME_SPAN, gold="a while"))


def test_unanswerable_query():
    q = query(gold="unknown", evidence=())
    assert score_answer("Unknown.", q) == (1.0, 1.0)
    assert score_answer("B", q) == (0.0, -1.0)


def test_parse_duration_units():
    assert parse_duration("2 weeks 3 days") == (17.0, "week")
    assert parse_duration("36 hours")[0] == pytest.approx(1.5)
    with pytest.raises(ValueError):
        parse_duration("12")


# --- grounding ----------------------------------------------------------------


def test_grounding_examples():
    assert grounding_reward({3, 16}, {3, 16}) == 1.0
    assert grounding_reward({1}, {2}) == -1.0
    assert grounding_reward({3, 16}, {3}) == 0.0
    assert grounding_reward(set(), {3}) == -1.0


def test_grounding_f1_switch():
    # F1 of {3,16} vs {3} is 2/3
    assert grounding_reward({3, 16}, {3}, metric="f1") == pytest.approx(2 * (2 / 3) - 1)


sets = st.frozensets(st.integers(1, 20), max_size=10)


@given(sets, sets)
def test_grounding_matches_oracle(a, b):
    if not a and not b:
        assert grounding_reward(a, b) == 1.0
    else:
        assert grounding_reward(a, b) == 2 * jaccard_reference(a, b) - 1


# --- proximity ----------------------------------------------------------------


def test_proximity_midpoint_and_peak():
    w = RewardWeights()
    assert proximity_reward(session_at_gap(7), WINDOW, w) == pytest.approx(0.25, abs=1e-12)
    inside = session(1, TimePoint.of(2020, 4, 5, 12, 0, 0))
    assert proximity_reward(inside, WINDOW) == pytest.approx(1.5 / (1 + math.exp(-7)) - 0.5, abs=1e-12)
    assert proximity_reward(inside, WINDOW) == pytest.approx(0.998629, abs=1e-5)


def test_proximity_far_gap_approaches_minus_half():
    assert proximity_reward(session_at_gap(1000), WINDOW) == pytest.approx(-0.5, abs=1e-6)


@settings(max_examples=200)
@given(st.floats(0.01, 2000), st.floats(0.01, 2000))
def test_proximity_strictly_decreasing(g1, g2):
    if abs(g1 - g2) < 0.01:
        return
    lo, hi = sorted((g1, g2))
    r_lo = proximity_reward(session_at_gap(lo), WINDOW)
    r_hi = proximity_reward(session_at_gap(hi), WINDOW)
    # beyond ~45 days the logistic tail underflows double precision differences
    if hi - 7 < 30:
        assert r_lo > r_hi
    else:
        assert r_lo >= r_hi
    assert -0.5 <= r_hi < 1.0


# --- fidelity -----------------------------------------------------------------


def utt(uid, text, *spans):
    return Utterance(uid, "A", text, tuple(Event(f"e{i}", s) for i, s in enumerate(spans)))


def test_fidelity_single_full_event():
    s = session(1, TimePoint.of(2020, 4, 3), utt(0, "Mia did bake bread on April 3, 2020", days_span(3, 3)))
    assert fidelity_reward(s, query()) == 1.0


def test_fidelity_no_relevant_utterances():
    s = session(1, TimePoint.of(2020, 4, 3), utt(0, "completely different words here", days_span(3, 3)))
    assert fidelity_reward(s, query()) == 0.0
    s2 = session(1, TimePoint.of(2020, 4, 3), utt(0, QUESTION))
    assert fidelity_reward(s2, query()) == 0.0


def test_fidelity_mixed_events():
    s = session(1, TimePoint.of(2020, 4, 3), utt(0, "Mia did bake bread April 2020", days_span(3, 3), days_span(20, 21)))
    assert fidelity_reward(s, query()) == 0.0


def test_fidelity_partial_and_mean_over_utterances():
    s = session(
        1,
        TimePoint.of(2020, 4, 3),
        utt(0, "Mia did bake bread April 2020", days_span(8, 12)),
        utt(1, "Mia did bake pie April 2020", days_span(2, 2)),
    )
    assert fidelity_reward(s, query()) == pytest.approx(0.75)


# --- total --------------------------------------------------------------------


def bank_of(*sessions):
    return MemoryBank("d", tuple(sessions))


def test_parse_failure_penalty():
    b = total_reward(ParseFailure("junk", "no keys"), query(), bank_of(session(1, TimePoint.of(2020, 4, 3))))
    assert b.total == PARSE_PENALTY == -0.5
    assert not b.parse_ok


def test_perfect_output():
    s = session(1, TimePoint.of(2020, 4, 3, 10, 0, 0), utt(0, "Mia did bake bread April 2020", days_span(3, 3)))
    b = total_reward(Parsed(frozenset({1}), "B"), query(), bank_of(s))
    r_s = 1.5 / (1 + math.exp(-7)) - 0.5
    assert b.total == pytest.approx(0.6 + 0.2 + 0.2 * (0.5 * r_s + 0.5), abs=1e-12)
    assert b.total == pytest.approx(0.99986, abs=1e-5)


def test_correct_answer_empty_selection():
    b = total_reward(Parsed(frozenset(), "B"), query(), bank_of(session(1, TimePoint.of(2020, 4, 3))))
    assert b.total == pytest.approx(0.4, abs=1e-12)
    assert b.r_t == 0.0


def test_unknown_session_rejected():
    with pytest.raises(UnknownSession):
        total_reward(Parsed(frozenset({5}), "B"), query(), bank_of(session(1, TimePoint.of(2020, 4, 3))))


def test_accuracy_only_weights():
    w = RewardWeights(w_a=1.0, w_g=0.0, w_t=0.0)
    bank = bank_of(session(1, TimePoint.of(2020, 4, 3)), session(2, TimePoint.of(2020, 6, 3)))
    for sel, ans in [({1}, "B"), ({2}, "C"), (set(), "B"), ({1, 2}, "A")]:
        b = total_reward(Parsed(frozenset(sel), ans), query(), bank, w)
        assert b.total == b.r_a


@pytest.mark.parametrize(
    "kwargs",
    [dict(w_a=0.5), dict(alpha=0.7), dict(c=0), dict(s=-1), dict(grounding_metric="cosine"), dict(w_a=1.2, w_g=-0.1, w_t=-0.1)],
)
def test_weight_validation(kwargs):
    with pytest.raises(ValueError):
        RewardWeights(**kwargs)


def test_weights_from_dict_rejects_unknown():
    with pytest.raises(ValueError):
        RewardWeights.from_dict({"w_x": 1})
    assert RewardWeights.from_dict({"m": 3.0}).m == 3.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_total_in_range(seed):
    rng = random.Random(seed)
    sessions = []
    for sid in range(1, 7):
        day = rng.randint(1, 28)
        spans = [days_span(rng.randint(1, 20), 25)] if rng.random() < 0.7 else []
        sessions.append(session(sid, TimePoint.of(2020, rng.choice([3, 4, 5]), day), utt(0, "Mia did bake bread April", *spans)))
    sessions.sort(key=lambda s: s.timestamp.value)
    sessions = [Session(i, s.timestamp, s.utterances) for i, s in enumerate(sessions, start=1)]
    sel = frozenset(rng.sample(range(1, 7), rng.randint(0, 6)))
    b = total_reward(Parsed(sel, rng.choice("ABCD")), query(evidence=(1, 2)), bank_of(*sessions))
    assert -1.0 <= b.total <= 1.0
