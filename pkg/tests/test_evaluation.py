import dataclasses
import json
import random

import pytest

from chronomem.candidates import RetrievalConfig
from chronomem.errors import DataError
from chronomem.evaluation import (
    EvalReport,
    OracleSource,
    ReplaySource,
    ToySource,
    evaluate,
    load_replay,
    noise_run,
    recall_sweep,
    render_noise_table,
    render_recall_table,
    write_replay,
)
from chronomem.memory import CATEGORIES, Subtask
from chronomem.parsing import Parsed, render_output
from chronomem.toy_policy import ToySelectionPolicy

from helpers import corpus

CORPUS = corpus(n_banks=3, sessions=10, queries=11, seed=20)
ALL_QUERIES = [q for _, qs in CORPUS for q in qs]


def test_oracle_scores_one_everywhere():
    rep = evaluate(OracleSource(), CORPUS)
    assert rep.overall == 1.0
    assert all(v == 1.0 for v in rep.per_subtask.values())
    assert all(v == 1.0 for v in rep.per_category.values())
    assert rep.parse_failures == 0 and rep.errors == []
    assert sum(rep.subtask_counts.values()) == rep.n_queries == len(ALL_QUERIES)


def test_report_table_grouping():
    table = evaluate(OracleSource(), CORPUS).render_table()
    assert "A = Loc., DC., Comp., OC., Ext." in table
    assert "B = ER., OR., RR." in table
    assert "C = CTF., Co-tmp., TL." in table
    head = table.splitlines()[1].split()
    assert head == [st.abbrev for st in Subtask] + list(CATEGORIES) + ["Overall"]


def test_replay_with_one_failure(tmp_path):
    outputs = [(q.id, Parsed(q.gold_evidence, q.gold_answer)) for q in ALL_QUERIES]
    path = tmp_path / "replay.jsonl"
    write_replay(outputs, path)
    lines = path.read_text().splitlines()
    broken = json.loads(lines[0])
    broken["output"] = "I think the answer is B"
    lines[0] = json.dumps(broken)
    path.write_text("\n".join(lines) + "\n")
    rep = evaluate(ReplaySource.from_file(path), CORPUS)
    assert rep.parse_failures == 1
    assert rep.overall == pytest.approx((len(ALL_QUERIES) - 1) / len(ALL_QUERIES))
    failed = [r for r in rep.results if not r.parse_ok]
    assert failed[0].query_id == broken["query_id"] and failed[0].score == 0.0


def test_missing_replay_entry_is_failure():
    rep = evaluate(ReplaySource({}), CORPUS[:1])
    assert rep.parse_failures == rep.n_queries
    assert rep.overall == 0.0


def test_bad_replay_file(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text('{"query_id": "a"}\n')
    with pytest.raises(DataError):
        load_replay(p)


def test_permutation_invariant():
    outputs = {q.id: render_output(Parsed(q.gold_evidence, random.Random(q.id).choice(["A", "B", q.gold_answer])))
               for q in ALL_QUERIES}
    a = evaluate(ReplaySource(outputs), CORPUS)
    shuffled = [(b, list(reversed(qs))) for b, qs in reversed(CORPUS)]
    b = evaluate(ReplaySource(outputs), shuffled)
    assert a.scores() == b.scores()
    assert [r.query_id for r in a.results] == [r.query_id for r in b.results]


def test_latency_accounting():
    t = evaluate(OracleSource(), CORPUS).timing
    assert t["total_with_retrieval"] >= t["total_inference"] >= 0
    assert t["total_with_retrieval"] >= t["retrieval_time"]
    assert t["mean_latency"] == pytest.approx(t["total_inference"] / len(ALL_QUERIES))


def test_unscorable_gold_is_recorded_not_fatal():
    bank, qs = CORPUS[0]
    i = next(i for i, q in enumerate(qs) if q.answer_format.value == "single_choice")
    bad = dataclasses.replace(qs[i], gold_answer="the second one")
    rep = evaluate(OracleSource(), [(bank, [*qs[:i], bad, *qs[i + 1:]])])
    assert rep.errors == [{"query_id": bad.id, "error": rep.errors[0]["error"]}]
    assert "UnscorableGold" in rep.errors[0]["error"]
    assert rep.n_queries == len(qs) and rep.overall == 1.0


def test_recall_exhaustive_pool():
    rows = recall_sweep(CORPUS, [10], filter_modes=(False,), scope_mode="rule_based")
    assert rows[0]["recall"] == 1.0


def test_recall_sweep_trend():
    rows = recall_sweep(CORPUS, [1, 3, 5, 10])
    for flt in (True, False):
        recalls = [r["recall"] for r in rows if r["temporal_filter"] is flt]
        assert recalls == sorted(recalls)
    on = {r["k"]: r["recall"] for r in rows if r["temporal_filter"]}
    off = {r["k"]: r["recall"] for r in rows if not r["temporal_filter"]}
    assert all(on[k] >= off[k] for k in on)
    assert "recall" in render_recall_table(rows)


def test_noise_rate_zero_equals_clean():
    src = ToySource(ToySelectionPolicy([2.0, -1.0, 3.0, -1.0]))
    clean = evaluate(src, CORPUS).scores()
    rows = noise_run(CORPUS, [0.0, 0.2], src, seed=4)
    assert {k: rows[0][k] for k in clean} == clean
    table = render_noise_table(rows).splitlines()
    assert table[1].split()[0] == "20%" and table[2].split()[0] == "0%"
    with pytest.raises(ValueError):
        noise_run(CORPUS, [0.2, 0.1], src)


def test_report_json_round_trip():
    rep = evaluate(OracleSource(), CORPUS[:1], RetrievalConfig(topk=3))
    d = json.loads(rep.to_json())
    assert d["k"] == 3 and "results" not in d
    assert isinstance(EvalReport.from_results(rep.results, 3), EvalReport)
