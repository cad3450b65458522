"""Parse the agent's composite ``{selected_memory, answer}`` output.

Two surface forms are accepted: strict JSON and the loose brace form
``{selected_memory: [session_3, session_16]. answer: 19 days.}``. Parsing
never raises; anything unusable becomes a :class:`ParseFailure`.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Collection, Union

log = logging.getLogger(__name__)

__all__ = ["Parsed", "ParseFailure", "AgentOutput", "parse_output", "render_output", "clean_answer"]


@dataclass(frozen=True)
class Parsed:
    selection: frozenset[int]
    answer: str
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def ok(self) -> bool:
        return True


@dataclass(frozen=True)
class ParseFailure:
    raw: str
    reason: str

    @property
    def ok(self) -> bool:
        return False


AgentOutput = Union[Parsed, ParseFailure]

_SESSION_TOKEN = re.compile(r"(?:session[\s_-]*)?(\d+)", re.IGNORECASE)
_FENCE = re.compile(r"^```[a-zA-Z]*\s*|\s*```$")
_SEL_KEY = re.compile(r"""["']?selected_memory["']?\s*[:=]\s*""", re.IGNORECASE)
_ANS_KEY = re.compile(r"""["']?answer["']?\s*[:=]\s*""", re.IGNORECASE)
_TRAILING = re.compile(r"[\s.]+$")


def clean_answer(text: str) -> str:
    """Strip surrounding whitespace and trailing periods."""
    return _TRAILING.sub("", text.strip())


def render_output(output: Parsed) -> str:
    """Canonical JSON rendering; re-parses to an equal value."""
    return json.dumps(
        {"selected_memory": [f"session_{i}" for i in sorted(output.selection)], "answer": output.answer},
        ensure_ascii=False,
    )


def _session_ids(items, valid_ids, warnings: list[str]) -> frozenset[int]:
    ids: set[int] = set()
    for item in items:
        if isinstance(item, bool):
            warnings.append(f"dropped session token {item!r}")
            continue
        if isinstance(item, int):
            sid = item
        else:
            m = _SESSION_TOKEN.fullmatch(str(item).strip().strip("'\""))
            if not m:
                warnings.append(f"dropped session token {item!r}")
                continue
            sid = int(m.group(1))
        if valid_ids is not None and sid not in valid_ids:
            warnings.append(f"dropped session {sid} not in memory bank")
            continue
        ids.add(sid)
    return frozenset(ids)


def _from_json(raw: str):
    start, end = raw.find("{"), raw.rfind("}")
    if start < 0 or end <= start:
        return None
    try:
        obj = json.loads(raw[start : end + 1])
    except (json.JSONDecodeError, RecursionError):
        return None
    if not isinstance(obj, dict):
        return None
    lowered = {str(k).lower(): v for k, v in obj.items()}
    if "selected_memory" not in lowered or "answer" not in lowered:
        return None
    return lowered["selected_memory"], lowered["answer"]


def _read_quoted(s: str) -> str | None:
    quote = s[0]
    out = []
    i = 1
    while i < len(s):
        ch = s[i]
        if ch == "\\" and i + 1 < len(s):
            out.append(s[i + 1])
            i += 2
            continue
        if ch == quote:
            return "".join(out)
        out.append(ch)
        i += 1
    return None


def _from_loose(raw: str):
    sel_m = _SEL_KEY.search(raw)
    ans_m = _ANS_KEY.search(raw)
    if not sel_m or not ans_m:
        return None
    rest = raw[sel_m.end() :]
    if not rest.startswith("["):
        return None
    close = rest.find("]")
    if close < 0:
        return None
    items = [t for t in (p.strip() for p in rest[1:close].split(",")) if t]
    tail = raw[ans_m.end() :].strip()
    if tail[:1] in ("'", '"'):
        answer = _read_quoted(tail)
        if answer is None:
            return None
    else:
        # the answer runs to the closing brace, or to the end of the text
        answer = tail[: tail.rfind("}")] if "}" in tail else tail
        if ans_m.start() < sel_m.start():
            # answer came first: stop where the selection key begins
            cut = _SEL_KEY.search(answer)
            if cut:
                answer = answer[: cut.start()].rstrip(" ,;\n")
    return items, answer


def parse_output(raw: str, valid_ids: Collection[int] | None = None) -> AgentOutput:
    """Parse a raw agent string.

    Session tokens may be ``session_<n>`` or bare integers. Tokens that are
    not session references, and ids outside ``valid_ids`` when given, are
    dropped with a warning. An empty selection is a valid parse.
    """
    if not isinstance(raw, str):
        return ParseFailure(repr(raw), "output is not a string")
    text = _FENCE.sub("", raw.strip())
    found = _from_json(text)
    if found is None:
        found = _from_loose(text)
    if found is None:
        return ParseFailure(raw, "missing selected_memory or answer")
    selection, answer = found
    if isinstance(selection, str):
        selection = [t for t in selection.split(",") if t.strip()]
    if not isinstance(selection, list):
        return ParseFailure(raw, "selected_memory is not a list")
    if isinstance(answer, (int, float)) and not isinstance(answer, bool):
        answer = str(answer)
    if not isinstance(answer, str):
        return ParseFailure(raw, "answer is not a string")
    warnings: list[str] = []
    ids = _session_ids(selection, valid_ids, warnings)
    for w in warnings:
        log.warning("parse_output: %s", w)
    return Parsed(ids, clean_answer(answer), tuple(warnings))
