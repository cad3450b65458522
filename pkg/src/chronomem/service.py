"""HTTP scoring service for external RL trainers.

``POST /score`` takes ``{"bank_id", "query_id", "output"}`` and returns the
reward breakdown. Malformed agent text is scored (with the parse penalty),
never rejected; only malformed request envelopes get a 4xx.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Sequence

from .memory import MemoryBank, QueryInstance
from .parsing import parse_output
from .rewards import RewardWeights, total_reward

log = logging.getLogger(__name__)

__all__ = ["ScoringService", "make_server", "serve_in_thread"]

MAX_BODY = 4 * 1024 * 1024


class ScoringService:
    """Immutable scoring state shared by all request threads."""

    def __init__(self, corpus: Sequence[tuple[MemoryBank, Sequence[QueryInstance]]], weights: RewardWeights | None = None):
        self.weights = weights or RewardWeights()
        self._banks: dict[str, MemoryBank] = {}
        self._queries: dict[str, dict[str, QueryInstance]] = {}
        for bank, queries in corpus:
            self._banks[bank.dialog_id] = bank
            self._queries[bank.dialog_id] = {q.id: q for q in queries}

    def score(self, request) -> tuple[int, dict]:
        """Return ``(http_status, body)`` for a decoded request envelope."""
        if not isinstance(request, dict):
            return 400, {"error": "request body must be a JSON object"}
        missing = [k for k in ("bank_id", "query_id", "output") if k not in request]
        if missing:
            return 400, {"error": f"missing fields: {missing}"}
        bank_id, query_id, output = request["bank_id"], request["query_id"], request["output"]
        if not isinstance(bank_id, str) or not isinstance(query_id, str) or not isinstance(output, str):
            return 400, {"error": "bank_id, query_id and output must be strings"}
        bank = self._banks.get(bank_id)
        if bank is None:
            return 404, {"error": f"unknown bank_id {bank_id!r}"}
        query = self._queries[bank_id].get(query_id)
        if query is None:
            return 404, {"error": f"unknown query_id {query_id!r}"}
        parsed = parse_output(output, valid_ids=set(bank.session_ids))
        body = total_reward(parsed, query, bank, self.weights).to_dict()
        body["warnings"] = list(getattr(parsed, "warnings", ()))
        if not parsed.ok:
            body["parse_error"] = parsed.reason
        return 200, body


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send(self, status: int, body: dict) -> None:
        data = json.dumps(body, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/healthz":
            self._send(200, {"status": "ok"})
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/score":
            self._send(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            self._send(400, {"error": "bad Content-Length"})
            return
        if length <= 0 or length > MAX_BODY:
            self._send(400 if length <= 0 else 413, {"error": "body missing or too large"})
            return
        try:
            request = json.loads(self.rfile.read(length))
        except (json.JSONDecodeError, UnicodeDecodeError):
            self._send(400, {"error": "body is not valid JSON"})
            return
        self._send(*self.server.service.score(request))


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    # trainers fire whole rollout groups at once; the default backlog of 5 resets connections
    request_queue_size = 128

    def __init__(self, addr, service: ScoringService):
        super().__init__(addr, _Handler)
        self.service = service


def make_server(service: ScoringService, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    return _Server((host, port), service)


def serve_in_thread(service: ScoringService, host: str = "127.0.0.1", port: int = 0):
    """Start a server on a background thread; returns ``(server, thread)``."""
    server = make_server(service, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
