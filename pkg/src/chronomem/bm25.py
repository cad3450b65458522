"""Okapi BM25 over an inverted index."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from typing import Hashable, Mapping, Sequence

__all__ = ["BM25Index", "idf"]


def idf(n_docs: int, doc_freq: int) -> float:
    """Non-negative Robertson-Sparck Jones weight, ``ln(1 + (N - n + 0.5) / (n + 0.5))``."""
    return math.log1p((n_docs - doc_freq + 0.5) / (doc_freq + 0.5))


class BM25Index:
    """BM25 over pre-tokenized documents keyed by arbitrary ids.

    Query terms are counted with multiplicity, so a repeated query token
    contributes once per occurrence.
    """

    def __init__(self, docs: Mapping[Hashable, Sequence[str]], k1: float = 1.2, b: float = 0.75):
        if k1 < 0 or not 0 <= b <= 1:
            raise ValueError(f"invalid BM25 parameters k1={k1}, b={b}")
        self.k1, self.b = k1, b
        self.doc_ids = list(docs)
        self.doc_len = {d: len(toks) for d, toks in docs.items()}
        self.n_docs = len(self.doc_ids)
        total = sum(self.doc_len.values())
        self.avgdl = total / self.n_docs if self.n_docs else 0.0
        self.postings: dict[str, dict[Hashable, int]] = defaultdict(dict)
        for d, toks in docs.items():
            for term, tf in Counter(toks).items():
                self.postings[term][d] = tf
        self._idf = {t: idf(self.n_docs, len(p)) for t, p in self.postings.items()}

    def idf(self, term: str) -> float:
        return self._idf.get(term, 0.0)

    def scores(self, query: Sequence[str]) -> dict[Hashable, float]:
        """Score every document; documents sharing no term with the query score 0."""
        out = {d: 0.0 for d in self.doc_ids}
        if self.avgdl == 0:
            return out
        k1, b = self.k1, self.b
        for term in query:
            post = self.postings.get(term)
            if not post:
                continue
            w = self._idf[term]
            for d, tf in post.items():
                norm = k1 * (1 - b + b * self.doc_len[d] / self.avgdl)
                out[d] += w * tf * (k1 + 1) / (tf + norm)
        return out
