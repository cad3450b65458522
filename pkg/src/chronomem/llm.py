"""Thin client for an OpenAI-compatible chat-completion endpoint.

Used for temporal scope prediction and as an optional answer source. The
API key is read from the environment and never appears in logs or reprs.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field

import httpx

from .errors import MalformedScopeResponse, ProviderError, UnparseableTimestamp
from .temporal import TimeInterval, TimePoint, parse_bound

log = logging.getLogger(__name__)

__all__ = ["ProviderConfig", "ChatClient", "complete", "predict_window_via_llm", "SCOPE_PROMPT", "redact", "parse_scope_response"]

ENV_BASE = "CHRONOMEM_API_BASE"
ENV_KEY = "CHRONOMEM_API_KEY"
ENV_MODEL = "CHRONOMEM_MODEL"

SCOPE_PROMPT = """\
You will be given a question about past conversations and the moment the question is asked.
Work out which period of time the question refers to.

Guidelines:
- Resolve relative phrases ("last week", "two days ago") against the moment of asking.
- Use the format YYYY-MM-DDTHH:MM:SS for both ends of the period.
- Write "unknown" for an end that cannot be determined.
- Reply with a single JSON object and nothing else, shaped like
  {{"time_range": ["<start>", "<end>"], "reasoning": "<one sentence>"}}

Moment of asking: {current_time}
Question: {question}
"""


@dataclass
class ProviderConfig:
    base_url: str
    model: str
    api_key: str = field(default="", repr=False)
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 0.5
    max_in_flight: int = 4

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be nonnegative")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @classmethod
    def from_env(cls, **overrides) -> "ProviderConfig":
        base = overrides.pop("base_url", None) or os.environ.get(ENV_BASE)
        model = overrides.pop("model", None) or os.environ.get(ENV_MODEL)
        if not base or not model:
            raise ProviderError(None, f"set {ENV_BASE} and {ENV_MODEL} to use the completion provider")
        return cls(base_url=base, model=model, api_key=os.environ.get(ENV_KEY, ""), **overrides)


def redact(text: str, secret: str) -> str:
    return text.replace(secret, "***") if secret else text


class ChatClient:
    """Shareable client; concurrent calls are bounded by ``max_in_flight``."""

    def __init__(self, config: ProviderConfig):
        self.config = config
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._http = httpx.Client(timeout=config.timeout, headers=headers)

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def complete(self, prompt: str) -> str:
        cfg = self.config
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        body = {"model": cfg.model, "messages": [{"role": "user", "content": prompt}], "temperature": 0}
        last: ProviderError | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._http.post(url, json=body)
            except httpx.HTTPError as exc:
                last = ProviderError(None, redact(str(exc), cfg.api_key))
                log.warning("completion request failed (attempt %d): %s", attempt + 1, last.body)
                continue
            if resp.status_code == 200:
                return self._content(resp)
            last = ProviderError(resp.status_code, redact(resp.text, cfg.api_key))
            if resp.status_code != 429 and resp.status_code < 500:
                raise last
            log.warning("completion request got HTTP %d (attempt %d)", resp.status_code, attempt + 1)
        raise last

    @staticmethod
    def _content(resp: httpx.Response) -> str:
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise ProviderError(resp.status_code, resp.text) from None
        if not isinstance(content, str):
            raise ProviderError(resp.status_code, resp.text)
        return content


def complete(prompt: str, config: ProviderConfig) -> str:
    with ChatClient(config) as client:
        return client.complete(prompt)


_JSON_OBJ = re.compile(r"\{.*\}", re.DOTALL)


def parse_scope_response(text: str) -> TimeInterval:
    m = _JSON_OBJ.search(text)
    if not m:
        raise MalformedScopeResponse("no JSON object in scope response")
    try:
        obj = json.loads(m.group(0))
    except json.JSONDecodeError as exc:
        raise MalformedScopeResponse(f"invalid JSON in scope response: {exc}") from None
    pair = obj.get("time_range") if isinstance(obj, dict) else None
    if not isinstance(pair, list) or len(pair) != 2 or not all(isinstance(p, str) for p in pair):
        raise MalformedScopeResponse("time_range must be a list of two strings")
    try:
        start, end = parse_bound(pair[0]), parse_bound(pair[1])
        return TimeInterval(start, end)
    except (UnparseableTimestamp, ValueError) as exc:
        raise MalformedScopeResponse(f"bad time_range: {exc}") from None


def predict_window_via_llm(question: str, query_time: TimePoint, config: ProviderConfig, client: ChatClient | None = None) -> TimeInterval:
    prompt = SCOPE_PROMPT.format(current_time=query_time.render(), question=question)
    text = client.complete(prompt) if client is not None else complete(prompt, config)
    return parse_scope_response(text)
