import json
from datetime import date

import pytest
from hypothesis import given, settings, strategies as st

from chronomem.errors import SpecInfeasible
from chronomem.memory import Event, MemoryBank, Session, Subtask, Utterance, bank_to_dict, queries_to_dict, token_length
from chronomem.parsing import Parsed
from chronomem.rewards import total_reward
from chronomem.synth import SynthSpec, generate, generate_corpus, inject_time_noise, noise_plan, write_corpus
from chronomem.temporal import Containment, TimeInterval, TimePoint, containment


def serialise(items):
    bank, queries, trace = items
    return json.dumps([bank_to_dict(bank), queries_to_dict(queries), trace.to_dict()], sort_keys=True)


def test_same_seed_is_byte_identical():
    assert serialise(generate(SynthSpec(seed=11))) == serialise(generate(SynthSpec(seed=11)))
    assert serialise(generate(SynthSpec(seed=11))) != serialise(generate(SynthSpec(seed=12)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.integers(3, 20))
def test_evidence_lies_in_gold_range(seed, n):
    bank, queries, trace = generate(SynthSpec(seed=seed, num_sessions=n, num_queries=11, evidence_per_query=2))
    for q in queries:
        assert q.gold_evidence
        for sid in q.gold_evidence:
            sess = trace.sessions[sid]
            event = TimeInterval.full_days(
                *(TimePoint.of(*map(int, sess[k].split("-"))).value for k in ("event_start", "event_end"))
            )
            assert containment(event, q.gold_range) is Containment.FULL
            assert containment(bank.session(sid).interval, q.gold_range) is Containment.FULL


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 100_000))
def test_oracle_output_earns_full_grounding(seed):
    bank, queries, _ = generate(SynthSpec(seed=seed, num_queries=11))
    for q in queries:
        b = total_reward(Parsed(q.gold_evidence, q.gold_answer), q, bank)
        assert b.r_a == 1.0 and b.r_g == 1.0
        assert b.r_f > 0


def test_every_subtask_appears():
    _, queries, _ = generate(SynthSpec(seed=5, num_queries=11))
    assert {q.subtask for q in queries} == set(Subtask)


def test_subtask_mix():
    _, queries, _ = generate(SynthSpec(seed=5, num_queries=8, subtask_mix={"Timeline": 1.0}))
    assert {q.subtask for q in queries} == {Subtask.TIMELINE}


def test_target_bracket():
    bank, _, trace = generate(SynthSpec(seed=2, target_bracket="8k-16k"))
    assert 8_000 <= token_length(bank) < 16_000
    assert trace.token_length == token_length(bank)


@pytest.mark.parametrize(
    "spec",
    [
        SynthSpec(num_sessions=2, evidence_per_query=3),
        SynthSpec(num_sessions=0),
        SynthSpec(num_sessions=80, start_date="2020-01-01", end_date="2020-03-01"),
        SynthSpec(num_sessions=40, utterances_per_session=30, target_bracket="0k-8k"),
    ],
)
def test_infeasible_specs(spec):
    with pytest.raises(SpecInfeasible):
        generate(spec)


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(noise_rate=2)
    with pytest.raises(ValueError):
        SynthSpec(target_bracket="1k-2k")
    with pytest.raises(ValueError):
        SynthSpec.from_dict({"sessions": 3})


def test_corpus_seeds_and_ids():
    items = generate_corpus(SynthSpec(seed=40), 3)
    assert [t.seed for _, _, t in items] == [40, 41, 42]
    assert len({b.dialog_id for b, _, _ in items}) == 3


def test_write_corpus(tmp_path):
    one = write_corpus(generate_corpus(SynthSpec(seed=1), 1), tmp_path / "one")
    assert (one[0] / "bank.json").exists() and (one[0] / "gold_trace.json").exists()
    many = write_corpus(generate_corpus(SynthSpec(seed=1), 2), tmp_path / "many")
    assert len({p.name for p in many}) == 2


# --- noise -------------------------------------------------------------------------


def dense_bank(n_sessions=20, per_session=10):
    sessions = []
    for sid in range(1, n_sessions + 1):
        d = date(2020, 1, 1).toordinal() + 7 * sid
        day = date.fromordinal(d)
        events = tuple(
            Event(f"e{k}", TimeInterval(TimePoint.of(day.year, day.month, day.day), TimePoint.of(day.year, day.month, day.day)))
            for k in range(per_session)
        )
        sessions.append(Session(sid, TimePoint.of(day.year, day.month, day.day, 9, 0, 0), (Utterance(0, "A", "x", events),)))
    return MemoryBank("dense", tuple(sessions))


def spans(bank):
    return [e.span for s in bank.sessions for u in s.utterances for e in u.events]


def test_noise_rate_zero_is_identity():
    bank = dense_bank()
    assert inject_time_noise(bank, 0.0, 1) == bank


def test_noise_rate_one_changes_every_span():
    bank = dense_bank()
    assert all(a != b for a, b in zip(spans(bank), spans(inject_time_noise(bank, 1.0, 1))))


def test_noise_rate_five_percent_of_two_hundred():
    bank = dense_bank()
    assert len(spans(bank)) == 200
    noisy = inject_time_noise(bank, 0.05, 9)
    assert sum(a != b for a, b in zip(spans(bank), spans(noisy))) == 10


@given(st.integers(0, 10_000), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=40, deadline=None)
def test_noise_plans_are_nested(seed, r1, r2):
    lo, hi = sorted((r1, r2))
    bank = dense_bank(6, 5)
    small, big = noise_plan(bank, lo, seed), noise_plan(bank, hi, seed)
    assert big[: len(small)] == small
    assert all(8 <= abs(off) <= 60 for *_, off in big)


def test_unknown_spans_are_not_perturbed():
    ev = Event("habit", TimeInterval(None, None))
    bank = MemoryBank("u", (Session(1, TimePoint.of(2020, 1, 1, 0, 0, 0), (Utterance(0, "A", "x", (ev,)),)),))
    assert inject_time_noise(bank, 1.0, 0) == bank


def test_noise_recorded_in_trace():
    _, _, trace = generate(SynthSpec(seed=3, noise_rate=0.5))
    assert trace.noise and all({"session", "utterance", "event", "offset_days"} <= set(n) for n in trace.noise)
