"""Lexical helpers shared by ranking, rewards and the toy policy."""

from __future__ import annotations

import re

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN.findall(text.lower())


def token_jaccard(a: str, b: str) -> float:
    """Jaccard similarity of the token sets of two strings (0 when both are empty)."""
    sa, sb = set(tokenize(a)), set(tokenize(b))
    union = sa | sb
    if not union:
        return 0.0
    return len(sa & sb) / len(union)
