"""Batch evaluation: per-subtask tables, recall sweeps, noise runs, latency."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .candidates import CandidatePool, RetrievalConfig, ScopeMode, generate_candidates
from .errors import ChronomemError, DataError
from .memory import CATEGORIES, MemoryBank, QueryInstance, Subtask, length_bracket, token_length
from .parsing import AgentOutput, Parsed, ParseFailure, parse_output, render_output
from .rewards import RewardWeights, score_answer
from .synth import inject_time_noise
from .toy_policy import ToySelectionPolicy, build_context

log = logging.getLogger(__name__)

__all__ = [
    "Corpus",
    "AnswerSource",
    "OracleSource",
    "ToySource",
    "ReplaySource",
    "LLMSource",
    "QueryResult",
    "EvalReport",
    "evaluate",
    "recall_sweep",
    "noise_run",
    "render_noise_table",
    "render_recall_table",
    "load_replay",
    "write_replay",
]

Corpus = Sequence[tuple[MemoryBank, Sequence[QueryInstance]]]
AnswerSource = Callable[[QueryInstance, MemoryBank, CandidatePool], "AgentOutput | str"]


# --- answer sources ------------------------------------------------------------


class OracleSource:
    """Replays gold evidence and gold answers."""

    name = "oracle"

    def __call__(self, query, bank, pool) -> AgentOutput:
        return Parsed(query.gold_evidence, query.gold_answer)


class ToySource:
    """Greedy selection from a toy policy plus the rule-based answer head."""

    def __init__(self, policy: ToySelectionPolicy):
        self.policy = policy
        self.name = "toy"

    def __call__(self, query, bank, pool) -> AgentOutput:
        return self.policy.greedy(build_context(query, bank, pool))


class ReplaySource:
    """Raw outputs keyed by query id; missing entries are parse failures."""

    def __init__(self, outputs: dict[str, str]):
        self.outputs = dict(outputs)
        self.name = "replay"

    @classmethod
    def from_file(cls, path) -> "ReplaySource":
        return cls(load_replay(path))

    def __call__(self, query, bank, pool) -> AgentOutput:
        raw = self.outputs.get(query.id)
        if raw is None:
            return ParseFailure("", f"no replayed output for {query.id}")
        return parse_output(raw, valid_ids=set(bank.session_ids))


ANSWER_PROMPT = """\
Below are excerpts from earlier conversations, each tagged with its session id and date.
Pick the sessions needed to answer the question, then answer it.
Reply with JSON only: {{"selected_memory": ["session_<id>", ...], "answer": "<answer>"}}
For multiple choice give the option letters; for ordering give labels like (2)(1)(3).

{sessions}

Asked at: {query_time}
Question: {question}
{options}"""


class LLMSource:
    """Ask an external chat-completion model to select and answer."""

    def __init__(self, config, client=None):
        from .llm import ChatClient

        self.config = config
        self.client = client or ChatClient(config)
        self.name = "llm"

    def prompt(self, query: QueryInstance, bank: MemoryBank, pool: CandidatePool) -> str:
        blocks = []
        for sid in pool.session_ids:
            s = bank.session(sid)
            lines = "\n".join(f"  {u.speaker}: {u.text}" for u in s.utterances)
            blocks.append(f"[session_{sid}] {s.timestamp.render()}\n{lines}")
        options = "\n".join(f"({label}) {text}" for label, text in query.options)
        return ANSWER_PROMPT.format(
            sessions="\n\n".join(blocks), query_time=query.query_time.render(), question=query.question, options=options
        )

    def __call__(self, query, bank, pool) -> AgentOutput:
        raw = self.client.complete(self.prompt(query, bank, pool))
        return parse_output(raw, valid_ids=set(bank.session_ids))


def load_replay(path) -> dict[str, str]:
    """Read ``{"query_id": ..., "output": ...}`` lines."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            qid, raw = rec["query_id"], rec["output"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: bad replay record ({exc})") from None
        if not isinstance(raw, str):
            raw = json.dumps(raw)
        out[str(qid)] = raw
    return out


def write_replay(outputs: Iterable[tuple[str, Parsed]], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for qid, out in outputs:
            f.write(json.dumps({"query_id": qid, "output": render_output(out)}) + "\n")


# --- report ----------------------------------------------------------------------


@dataclass
class QueryResult:
    query_id: str
    dialog_id: str
    subtask: str
    category: str
    bracket: str
    score: float | None
    parse_ok: bool
    recall_hit: bool | None
    retrieval_time: float
    answer_time: float
    total_time: float
    error: str | None = None


def _mean(values) -> float | None:
    values = list(values)
    return math.fsum(values) / len(values) if values else None


@dataclass
class EvalReport:
    n_queries: int
    per_subtask: dict[str, float | None]
    subtask_counts: dict[str, int]
    per_category: dict[str, float | None]
    overall: float | None
    recall_at_k: float | None
    k: int
    brackets: dict[str, dict]
    timing: dict[str, float]
    parse_failures: int
    errors: list[dict]
    aggregation: str = "query-weighted mean of per-query scores"
    results: list[QueryResult] = field(default_factory=list, repr=False)

    @classmethod
    def from_results(cls, results: Sequence[QueryResult], k: int) -> "EvalReport":
        results = sorted(results, key=lambda r: r.query_id)
        scored = [r for r in results if r.score is not None]
        by_sub = {st.value: [r.score for r in scored if r.subtask == st.value] for st in Subtask}
        by_cat = {cat: [r.score for r in scored if r.category == cat] for cat in CATEGORIES}
        brackets: dict[str, dict] = {}
        for r in scored:
            brackets.setdefault(r.bracket, []).append(r.score)
        hits = [r.recall_hit for r in results if r.recall_hit is not None]
        timing = {
            "total_inference": math.fsum(r.answer_time for r in results),
            "retrieval_time": math.fsum(r.retrieval_time for r in results),
            "total_with_retrieval": math.fsum(r.total_time for r in results),
        }
        timing["mean_latency"] = timing["total_inference"] / len(results) if results else 0.0
        return cls(
            n_queries=len(results),
            per_subtask={k_: _mean(v) for k_, v in by_sub.items()},
            subtask_counts={k_: len(v) for k_, v in by_sub.items()},
            per_category={k_: _mean(v) for k_, v in by_cat.items()},
            overall=_mean(r.score for r in scored),
            recall_at_k=_mean(1.0 if h else 0.0 for h in hits),
            k=k,
            brackets={b: {"n": len(v), "score": _mean(v)} for b, v in sorted(brackets.items())},
            timing=timing,
            parse_failures=sum(1 for r in results if not r.parse_ok),
            errors=[{"query_id": r.query_id, "error": r.error} for r in results if r.error],
            results=list(results),
        )

    def scores(self) -> dict:
        """The score-bearing fields only (no timings)."""
        return {"per_subtask": self.per_subtask, "per_category": self.per_category, "overall": self.overall}

    def to_dict(self, include_results: bool = False) -> dict:
        d = asdict(self)
        if not include_results:
            d.pop("results")
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=1)

    def render_table(self) -> str:
        heads = [st.abbrev for st in Subtask] + list(CATEGORIES) + ["Overall"]
        vals = [self.per_subtask[st.value] for st in Subtask] + [self.per_category[c] for c in CATEGORIES] + [self.overall]
        cells = ["-" if v is None else f"{100 * v:.1f}" for v in vals]
        widths = [max(len(h), len(c)) for h, c in zip(heads, cells)]
        lines = [
            f"# score = accuracy metric in [0, 1] x 100; {self.aggregation}; n = {self.n_queries}",
            "  ".join(h.rjust(w) for h, w in zip(heads, widths)),
            "  ".join(c.rjust(w) for c, w in zip(cells, widths)),
            "",
            "groups: " + "; ".join(f"{c} = {', '.join(st.abbrev for st in m)}" for c, m in CATEGORIES.items()),
        ]
        if self.recall_at_k is not None:
            lines.append(f"recall@{self.k}: {100 * self.recall_at_k:.1f}")
        if self.brackets:
            parts = []
            for b, v in self.brackets.items():
                score = "-" if v["score"] is None else f"{100 * v['score']:.1f}"
                parts.append(f"{b} {score} (n={v['n']})")
            lines.append("length brackets: " + ", ".join(parts))
        t = self.timing
        lines.append(
            f"time: inference {t['total_inference']:.3f}s, retrieval {t['retrieval_time']:.3f}s, "
            f"with retrieval {t['total_with_retrieval']:.3f}s, mean latency {t['mean_latency'] * 1000:.2f}ms"
        )
        lines.append(f"parse failures: {self.parse_failures}; errors: {len(self.errors)}")
        return "\n".join(lines)


# --- runs ------------------------------------------------------------------------


def _as_output(value, bank: MemoryBank) -> AgentOutput:
    if isinstance(value, (Parsed, ParseFailure)):
        return value
    return parse_output(value, valid_ids=set(bank.session_ids))


def evaluate(
    source: AnswerSource,
    corpus: Corpus,
    config: RetrievalConfig | None = None,
    weights: RewardWeights | None = None,
    llm_config=None,
) -> EvalReport:
    """Retrieve, answer and score every query; per-query errors never abort the batch."""
    config = config or RetrievalConfig()
    weights = weights or RewardWeights()
    results = []
    for bank, queries in corpus:
        bracket = length_bracket(token_length(bank))
        for q in queries:
            t0 = time.perf_counter()
            score, parse_ok, hit, err = None, True, None, None
            t1 = None
            try:
                pool = generate_candidates(q, bank, config, llm_config)
                t1 = time.perf_counter()
                out = _as_output(source(q, bank, pool), bank)
                t2 = time.perf_counter()
                if not q.unanswerable:
                    hit = q.gold_evidence <= set(pool.session_ids)
                if isinstance(out, ParseFailure):
                    parse_ok, score = False, 0.0
                else:
                    score, _ = score_answer(out.answer, q, weights)
            except ChronomemError as exc:
                err = f"{type(exc).__name__}: {exc}"
                log.warning("query %s failed: %s", q.id, err)
                t2 = time.perf_counter()
                t1 = t2 if t1 is None else t1
            t3 = time.perf_counter()
            results.append(
                QueryResult(
                    q.id, bank.dialog_id, q.subtask.value, q.category, bracket, score, parse_ok, hit,
                    retrieval_time=t1 - t0, answer_time=t2 - t1, total_time=t3 - t0, error=err,
                )
            )
    return EvalReport.from_results(results, config.topk)


def recall_sweep(
    corpus: Corpus,
    k_values: Sequence[int],
    filter_modes: Sequence[bool] = (True, False),
    scope_mode: ScopeMode | str = ScopeMode.GOLD_ORACLE,
    source: AnswerSource | None = None,
    weights: RewardWeights | None = None,
) -> list[dict]:
    """Rows of ``{k, temporal_filter, recall, overall}``; ``overall`` needs a source."""
    if not k_values:
        raise ValueError("k_values must be nonempty")
    rows = []
    for flt in filter_modes:
        for k in sorted(k_values):
            cfg = RetrievalConfig(topk=k, scope_mode=scope_mode, temporal_filter=flt)
            hits = []
            for bank, queries in corpus:
                for q in queries:
                    if q.unanswerable:
                        continue
                    pool = generate_candidates(q, bank, cfg)
                    hits.append(1.0 if q.gold_evidence <= set(pool.session_ids) else 0.0)
            overall = evaluate(source, corpus, cfg, weights).overall if source is not None else None
            rows.append({"k": k, "temporal_filter": flt, "recall": _mean(hits), "overall": overall})
    return rows


def noise_run(
    corpus: Corpus,
    rates: Sequence[float],
    source: AnswerSource,
    seed: int = 0,
    config: RetrievalConfig | None = None,
    weights: RewardWeights | None = None,
) -> list[dict]:
    """Evaluate under each time-label noise rate (ascending).

    Bank ``i`` is perturbed with seed ``seed + i`` so the perturbed events
    at a higher rate include those at a lower rate.
    """
    if list(rates) != sorted(rates):
        raise ValueError("rates must be sorted ascending")
    rows = []
    for rate in rates:
        noisy = [(inject_time_noise(bank, rate, seed + i), qs) for i, (bank, qs) in enumerate(corpus)]
        rep = evaluate(source, noisy, config, weights)
        rows.append({"rate": rate, **rep.scores()})
    return rows


def render_noise_table(rows: Sequence[dict]) -> str:
    """Highest noise rate first."""
    heads = ["noise"] + list(CATEGORIES) + ["Overall"]
    lines = ["  ".join(f"{h:>8}" for h in heads)]
    for row in sorted(rows, key=lambda r: -r["rate"]):
        vals = [row["per_category"][c] for c in CATEGORIES] + [row["overall"]]
        cells = [f"{100 * row['rate']:.0f}%"] + ["-" if v is None else f"{100 * v:.1f}" for v in vals]
        lines.append("  ".join(f"{c:>8}" for c in cells))
    return "\n".join(lines)


def render_recall_table(rows: Sequence[dict]) -> str:
    lines = [f"{'k':>4}  {'filter':>6}  {'recall':>7}  {'overall':>7}"]
    for r in rows:
        overall = "-" if r["overall"] is None else f"{100 * r['overall']:.1f}"
        recall = "-" if r["recall"] is None else f"{100 * r['recall']:.1f}"
        lines.append(f"{r['k']:>4}  {'on' if r['temporal_filter'] else 'off':>6}  {recall:>7}  {overall:>7}")
    return "\n".join(lines)
