"""Shared builders for synthetic corpora and policy contexts."""

from chronomem.candidates import RetrievalConfig, generate_candidates
from chronomem.synth import SynthSpec, generate_corpus
from chronomem.toy_policy import build_context


def corpus(n_banks=4, sessions=10, queries=5, seed=0):
    spec = SynthSpec(seed=seed, num_sessions=sessions, num_queries=queries)
    return [(bank, qs) for bank, qs, _ in generate_corpus(spec, n_banks)]


def contexts(items, config=None):
    config = config or RetrievalConfig(topk=10, temporal_filter=False)
    return [build_context(q, bank, generate_candidates(q, bank, config)) for bank, qs in items for q in qs]
