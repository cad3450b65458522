"""Command-line interface.

Every config field is addressable as ``--<module>.<key> VALUE`` where
module is one of ``retrieval``, ``reward``, ``train``, ``synth`` or
``llm``. Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime
error; failures print a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .candidates import RetrievalConfig, generate_candidates
from .errors import ChronomemError, DataError
from .evaluation import (
    LLMSource,
    OracleSource,
    ReplaySource,
    ToySource,
    evaluate,
    noise_run,
    recall_sweep,
    render_noise_table,
    render_recall_table,
)
from .grpo import TrainConfig, train
from .llm import ProviderConfig
from .memory import load_bank, load_queries
from .parsing import ParseFailure, parse_output
from .rewards import RewardWeights, total_reward
from .synth import SynthSpec, generate_corpus, write_corpus
from .toy_policy import ToySelectionPolicy, build_context

log = logging.getLogger("chronomem")

_LLM_KEYS = ("base_url", "model", "timeout", "max_retries", "backoff", "max_in_flight")
MODULES = {
    "retrieval": RetrievalConfig,
    "reward": RewardWeights,
    "train": TrainConfig,
    "synth": SynthSpec,
    "llm": ProviderConfig,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _keys(module: str) -> set[str]:
    if module == "llm":
        return set(_LLM_KEYS)
    return {f.name for f in dataclasses.fields(MODULES[module])}


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(extra: list[str]) -> dict[str, dict]:
    """Turn ``--module.key value`` pairs into ``{module: {key: value}}``."""
    out: dict[str, dict] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok:
            raise UsageError(f"unrecognized argument {tok!r}")
        name, eq, val = tok[2:].partition("=")
        if not eq:
            if i + 1 >= len(extra):
                raise UsageError(f"missing value for {tok}")
            val = extra[i + 1]
            i += 1
        module, _, key = name.partition(".")
        if module == "bm25" and key in ("k1", "b"):
            module, key = "retrieval", f"bm25_{key}"
        if module not in MODULES:
            raise UsageError(f"unknown config module {module!r}")
        if key not in _keys(module):
            raise UsageError(f"unknown config key {module}.{key}")
        out.setdefault(module, {})[key] = _value(val)
        i += 1
    return out


def _read_json_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise DataError(f"{path}: expected a JSON object")
    return doc


def _build(module: str, base: dict, overrides: dict):
    merged = {**base, **overrides.get(module, {})}
    cls = MODULES[module]
    try:
        if module == "reward":
            return RewardWeights.from_dict(merged)
        if module == "train":
            return TrainConfig.from_dict(merged)
        if module == "synth":
            return SynthSpec.from_dict(merged)
        if module == "llm":
            return ProviderConfig.from_env(**merged)
        flag = merged.get("temporal_filter")
        if isinstance(flag, str) and flag.lower() in ("on", "off"):
            merged["temporal_filter"] = flag.lower() == "on"
        unknown = set(merged) - _keys(module)
        if unknown:
            raise UsageError(f"unknown {module} keys: {sorted(unknown)}")
        return cls(**merged)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid {module} config: {exc}") from None


def _retrieval(args, overrides) -> RetrievalConfig:
    base = {}
    if getattr(args, "topk", None) is not None:
        base["topk"] = args.topk
    if getattr(args, "scope_mode", None) is not None:
        base["scope_mode"] = args.scope_mode
    if getattr(args, "no_filter", False):
        base["temporal_filter"] = False
    cfg = _build("retrieval", {}, overrides)
    return dataclasses.replace(cfg, **base) if base else cfg


def _llm_config(overrides):
    if "llm" in overrides:
        return _build("llm", {}, overrides)
    return None


def _corpus(args):
    pairs = []
    if getattr(args, "data", None):
        root = Path(args.data)
        banks = sorted(root.rglob("bank.json"))
        if not banks:
            raise DataError(f"no bank.json under {root}")
        for b in banks:
            pairs.append((b, b.with_name("queries.json")))
    else:
        if not args.bank or not args.queries or len(args.bank) != len(args.queries):
            raise UsageError("give --data DIR or matching --bank/--queries pairs")
        pairs = list(zip(args.bank, args.queries))
    corpus = []
    for bpath, qpath in pairs:
        bank = load_bank(bpath)
        corpus.append((bank, load_queries(qpath, bank)))
    return corpus


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _load_policy(path) -> ToySelectionPolicy:
    doc = _read_json_file(path)
    try:
        return ToySelectionPolicy.from_dict(doc.get("policy", doc))
    except (ValueError, KeyError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _source(spec: str, overrides):
    kind, _, arg = spec.partition(":")
    if kind == "oracle":
        return OracleSource()
    if kind == "toy" and arg:
        return ToySource(_load_policy(arg))
    if kind == "replay" and arg:
        return ReplaySource.from_file(arg)
    if kind == "llm":
        return LLMSource(_llm_config(overrides) or ProviderConfig.from_env())
    raise UsageError(f"bad --source {spec!r}; use oracle, toy:PATH, llm or replay:PATH")


# --- subcommands ----------------------------------------------------------------


def cmd_synth(args, ov):
    base = _read_json_file(args.spec) if args.spec else {}
    spec = _build("synth", base, ov)
    dirs = write_corpus(generate_corpus(spec, args.banks), args.out)
    print(json.dumps({"written": [str(d) for d in dirs]}))


def cmd_retrieve(args, ov):
    cfg = _retrieval(args, ov)
    llm = _llm_config(ov)
    pools = [generate_candidates(q, bank, cfg, llm).to_dict() for bank, qs in _corpus(args) for q in qs]
    _emit(json.dumps(pools, indent=1), args.out)


def cmd_score(args, ov):
    weights = _build("reward", _read_json_file(args.weights) if args.weights else {}, ov)
    corpus = _corpus(args)
    replay = ReplaySource.from_file(args.outputs)
    lines, totals, failures = [], [], 0
    for bank, queries in corpus:
        for q in queries:
            raw = replay.outputs.get(q.id)
            if raw is None:
                continue
            out = parse_output(raw, valid_ids=set(bank.session_ids))
            br = total_reward(out, q, bank, weights)
            failures += isinstance(out, ParseFailure)
            totals.append(br.total)
            rec = {"query_id": q.id, **br.to_dict()}
            rec["selection"] = sorted(out.selection) if out.ok else None
            lines.append(json.dumps(rec))
    summary = {
        "scored": len(totals),
        "mean_total": sum(totals) / len(totals) if totals else None,
        "parse_failures": failures,
    }
    lines.append(json.dumps({"summary": summary}))
    _emit("\n".join(lines), args.out)


def cmd_train_toy(args, ov):
    cfg = _build("train", _read_json_file(args.config) if args.config else {}, ov)
    weights = _build("reward", _read_json_file(args.weights) if args.weights else {}, ov)
    rcfg = _retrieval(args, ov)
    contexts = [
        build_context(q, bank, generate_candidates(q, bank, rcfg)) for bank, qs in _corpus(args) for q in qs
    ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    policy = _load_policy(args.init) if args.init else ToySelectionPolicy()
    res = train(contexts, policy, cfg, weights, metrics_path=out / "metrics.jsonl", snapshot_path=out / "policy.json")
    last = res.metrics[-1] if res.metrics else {}
    print(json.dumps({"steps": cfg.steps, "theta": res.policy.theta.tolist(), "final": last}))


def cmd_eval(args, ov):
    report = evaluate(
        _source(args.source, ov), _corpus(args), _retrieval(args, ov), _build("reward", {}, ov), _llm_config(ov)
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(include_results=True) + "\n", encoding="utf-8")
        (out / "report.txt").write_text(report.render_table() + "\n", encoding="utf-8")
    print(report.render_table())


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_sweep_recall(args, ov):
    source = _source(args.source, ov) if args.source else None
    rows = recall_sweep(_corpus(args), _ints(args.k), scope_mode=args.scope_mode or "gold_oracle", source=source)
    _emit(json.dumps(rows, indent=1) if args.json else render_recall_table(rows), args.out)


def cmd_eval_noise(args, ov):
    rates = _floats(args.rates)
    if rates != sorted(rates):
        raise UsageError("--rates must be ascending")
    rows = noise_run(_corpus(args), rates, _source(args.source, ov), args.seed, _retrieval(args, ov))
    _emit(json.dumps(rows, indent=1) if args.json else render_noise_table(rows), args.out)


def cmd_eval_latency(args, ov):
    report = evaluate(_source(args.source, ov), _corpus(args), _retrieval(args, ov), llm_config=_llm_config(ov))
    t = report.timing
    rows = {"queries": report.n_queries, **t}
    _emit(json.dumps(rows, indent=1), args.out)


def cmd_serve(args, ov):
    from .service import ScoringService, make_server

    weights = _build("reward", _read_json_file(args.weights) if args.weights else {}, ov)
    server = make_server(ScoringService(_corpus(args), weights), args.host, args.port)
    host, port = server.server_address[:2]
    print(json.dumps({"listening": f"http://{host}:{port}"}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chronomem", description="Temporal memory retrieval, reward scoring and toy GRPO training.")
    p.add_argument("--version", action="version", version=f"chronomem {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(sp):
        sp.add_argument("--data", help="directory searched for bank.json/queries.json pairs")
        sp.add_argument("--bank", action="append", help="bank file (repeatable, paired with --queries)")
        sp.add_argument("--queries", action="append", help="queries file (repeatable)")

    def retrieval_args(sp):
        sp.add_argument("--topk", type=int)
        sp.add_argument("--scope-mode", choices=["gold_oracle", "rule_based", "external_llm"])
        sp.add_argument("--no-filter", action="store_true", help="skip the temporal hard filter")

    sp = sub.add_parser("synth", help="generate synthetic banks")
    sp.add_argument("--spec")
    sp.add_argument("--out", required=True)
    sp.add_argument("--banks", type=int, default=1)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("retrieve", help="candidate pools as JSON")
    data_args(sp)
    retrieval_args(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_retrieve)

    sp = sub.add_parser("score", help="score replayed agent outputs")
    data_args(sp)
    sp.add_argument("--outputs", required=True)
    sp.add_argument("--weights")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("train-toy", help="GRPO on the toy selection policy")
    data_args(sp)
    retrieval_args(sp)
    sp.add_argument("--config")
    sp.add_argument("--weights")
    sp.add_argument("--init", help="starting policy snapshot")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train_toy)

    for name, func, helptext in (
        ("eval", cmd_eval, "evaluate an answer source"),
        ("eval-latency", cmd_eval_latency, "wall-clock timing of an answer source"),
    ):
        sp = sub.add_parser(name, help=helptext)
        data_args(sp)
        retrieval_args(sp)
        sp.add_argument("--source", required=True, help="oracle | toy:PATH | llm | replay:PATH")
        sp.add_argument("--out")
        sp.set_defaults(func=func)

    sp = sub.add_parser("sweep-recall", help="recall over top-k and filter modes")
    data_args(sp)
    sp.add_argument("--k", default="1,3,5,10")
    sp.add_argument("--scope-mode", choices=["gold_oracle", "rule_based", "external_llm"])
    sp.add_argument("--source")
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep_recall)

    sp = sub.add_parser("eval-noise", help="scores under time-label noise")
    data_args(sp)
    retrieval_args(sp)
    sp.add_argument("--source", required=True)
    sp.add_argument("--rates", default="0,0.05,0.1,0.2")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval_noise)

    sp = sub.add_parser("serve", help="HTTP scoring service")
    data_args(sp)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8080)
    sp.add_argument("--weights")
    sp.set_defaults(func=cmd_serve)
    return p


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        overrides = parse_overrides(extra)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        args.func(args, overrides)
    except UsageError as exc:
        return _fail(1, exc)
    except (DataError, FileNotFoundError) as exc:
        return _fail(2, exc)
    except ChronomemError as exc:
        return _fail(3, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
