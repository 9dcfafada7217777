"""Chat-completion backends and the LLM-backed comparison proxy.

Backends expose ``complete(messages) -> ChatResponse``. The HTTP backend
speaks the common ``/chat/completions`` JSON exchange; the replay backend
answers from a recorded fixture so runs are reproducible offline.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx
import numpy as np

from ..domain import Bundle
from .prompts import ParseError, parse_choice, render_cq_prompt
from .records import ComparisonRecord, TranscriptStore

logger = logging.getLogger(__name__)

REPLAY_FORMAT_VERSION = 1
DEFAULT_API_KEY_ENV = "LLMPE_API_KEY"


class ProxyTransportError(RuntimeError):
    """Network failure or unexpected HTTP status from the chat endpoint."""


class ProxyAuthError(ProxyTransportError):
    """The endpoint rejected our credentials."""


class ReplayMissError(KeyError):
    """The replay fixture has no response for a request."""


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


@dataclass
class ProxyConfig:
    mode: str = "simulated"
    accuracy: float = 0.72
    cot_enabled: bool = True
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-4o-mini"
    max_retries: int = 3
    temperature: float = 0.0
    api_key_env: str = DEFAULT_API_KEY_ENV
    backend: str = "http"
    replay_path: str | None = None
    max_in_flight: int = 4

    def __post_init__(self):
        if self.mode not in ("simulated", "llm"):
            raise ValueError(f"mode must be 'simulated' or 'llm', got {self.mode!r}")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")
        if self.max_retries < 1:
            raise ValueError("max_retries must be at least 1")


class ChatBackend(Protocol):
    def complete(self, messages: list[dict]) -> ChatResponse: ...


def request_key(messages: Sequence[dict]) -> str:
    """Stable fingerprint of a request, used to index replay fixtures."""
    blob = json.dumps(list(messages), sort_keys=True, ensure_ascii=False).encode()
    return hashlib.sha256(blob).hexdigest()


class HttpChatBackend:
    """Minimal client for OpenAI-compatible chat-completion endpoints.

    Rate limits (429) and server errors (5xx) are retried with exponential
    backoff; 401/403 raise :class:`ProxyAuthError` immediately.
    """

    def __init__(self, endpoint: str, model: str, temperature: float = 0.0,
                 api_key: str | None = None, api_key_env: str = DEFAULT_API_KEY_ENV,
                 max_backoff_retries: int = 5, backoff_base: float = 1.0, timeout: float = 60.0,
                 transport: httpx.BaseTransport | None = None, sleep: Callable = time.sleep):
        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.model = model
        self.temperature = temperature
        self.api_key = api_key if api_key is not None else os.environ.get(api_key_env, "")
        self.max_backoff_retries = max_backoff_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def complete(self, messages: list[dict]) -> ChatResponse:
        payload = {"model": self.model, "messages": messages, "temperature": self.temperature}
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        for attempt in range(self.max_backoff_retries + 1):
            try:
                resp = self._client.post(self.url, json=payload, headers=headers)
            except httpx.HTTPError as err:
                if attempt == self.max_backoff_retries:
                    raise ProxyTransportError(f"request to {self.url} failed: {err}") from err
                self._backoff(attempt, str(err))
                continue
            if resp.status_code in (401, 403):
                raise ProxyAuthError(f"endpoint rejected credentials ({resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                if attempt == self.max_backoff_retries:
                    raise ProxyTransportError(f"giving up after status {resp.status_code}")
                self._backoff(attempt, f"status {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProxyTransportError(f"unexpected status {resp.status_code}: {resp.text[:200]}")
            body = resp.json()
            try:
                text = body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as err:
                raise ProxyTransportError(f"malformed completion body: {body!r:.200}") from err
            usage = body.get("usage") or {}
            return ChatResponse(text or "", usage.get("prompt_tokens"),
                                usage.get("completion_tokens"))
        raise ProxyTransportError("unreachable")

    def _backoff(self, attempt: int, why: str) -> None:
        delay = self.backoff_base * 2 ** attempt
        logger.warning("chat endpoint %s; retrying in %.1fs", why, delay)
        self._sleep(delay)


class StubBackend:
    """Returns canned responses: a fixed string, a cycling list, or a callable."""

    def __init__(self, responses):
        self._responses = responses
        self._i = 0
        self.calls: list[list[dict]] = []

    def complete(self, messages: list[dict]) -> ChatResponse:
        self.calls.append(messages)
        r = self._responses
        if callable(r):
            text = r(messages)
        elif isinstance(r, str):
            text = r
        else:
            text = r[self._i % len(r)]
        self._i += 1
        return ChatResponse(text)


class ReplayBackend:
    """Serves responses from a JSON-lines fixture keyed by :func:`request_key`.

    Fixture lines are ``{"version": 1, "key": ..., "response": ...,
    "prompt_tokens": ..., "completion_tokens": ...}``. A request asked twice
    gets successive recorded responses, the last one repeating.
    """

    def __init__(self, path):
        self.table: dict[str, list[ChatResponse]] = {}
        self._cursor: dict[str, int] = {}
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("version") != REPLAY_FORMAT_VERSION:
                raise ValueError(f"unsupported replay fixture version {rec.get('version')!r}")
            self.table.setdefault(rec["key"], []).append(
                ChatResponse(rec["response"], rec.get("prompt_tokens"), rec.get("completion_tokens")))

    def complete(self, messages: list[dict]) -> ChatResponse:
        key = request_key(messages)
        if key not in self.table:
            raise ReplayMissError(key)
        i = self._cursor.get(key, 0)
        self._cursor[key] = i + 1
        seq = self.table[key]
        return seq[min(i, len(seq) - 1)]


class RecordingBackend:
    """Wraps a backend and appends every exchange to a replay fixture."""

    def __init__(self, inner: ChatBackend, path):
        self.inner = inner
        self.path = Path(path)

    def complete(self, messages: list[dict]) -> ChatResponse:
        resp = self.inner.complete(messages)
        rec = {"version": REPLAY_FORMAT_VERSION, "key": request_key(messages),
               "response": resp.text, "prompt_tokens": resp.prompt_tokens,
               "completion_tokens": resp.completion_tokens}
        with open(self.path, "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return resp


def make_backend(config: ProxyConfig) -> ChatBackend:
    if config.backend == "http":
        return HttpChatBackend(config.endpoint, config.model, config.temperature,
                               api_key_env=config.api_key_env)
    if config.backend == "replay":
        if not config.replay_path:
            raise ValueError("replay backend needs replay_path")
        return ReplayBackend(config.replay_path)
    raise ValueError(f"unknown backend {config.backend!r}")


@dataclass
class LlmProxy:
    """Answers comparison queries by prompting a chat model with a narrative."""

    backend: ChatBackend
    config: ProxyConfig = field(default_factory=lambda: ProxyConfig(mode="llm"))
    store: TranscriptStore = field(default_factory=TranscriptStore)

    def answer(self, narrative: str, bundle_a: Bundle, bundle_b: Bundle, rng,
               query_id: int | None = None, sink: list | None = None) -> ComparisonRecord:
        """Ask one comparison query.

        Transcript entries go to the store as they arrive, or to ``sink``
        when given so the caller can persist them in a fixed order.
        """
        prompt = render_cq_prompt(narrative, bundle_a, bundle_b, self.config.cot_enabled)
        messages = [{"role": "user", "content": prompt}]
        transcript = []
        tokens_in = tokens_out = 0
        start = time.perf_counter()
        for attempt in range(self.config.max_retries):
            resp = self.backend.complete(messages)
            tokens_in += resp.prompt_tokens or 0
            tokens_out += resp.completion_tokens or 0
            entry = {"query_id": query_id, "attempt": attempt, "request": messages,
                     "response": resp.text}
            if sink is None:
                self.store.append(entry)
            else:
                sink.append(entry)
            transcript.append({"attempt": attempt, "response": resp.text})
            try:
                answer = parse_choice(resp.text)
            except ParseError as err:
                logger.info("unparseable proxy response (attempt %d): %s", attempt + 1, err)
                continue
            return ComparisonRecord(bundle_a, bundle_b, answer, "llm", transcript=transcript,
                                    latency=time.perf_counter() - start,
                                    prompt_tokens=tokens_in or None,
                                    completion_tokens=tokens_out or None)
        answer = "A" if rng.random() < 0.5 else "B"
        return ComparisonRecord(bundle_a, bundle_b, answer, "llm", transcript=transcript,
                                flagged=True, latency=time.perf_counter() - start,
                                prompt_tokens=tokens_in or None,
                                completion_tokens=tokens_out or None)

    def answer_many(self, narrative: str, pairs: Sequence[tuple[Bundle, Bundle]], rng,
                    first_query_id: int = 0) -> list[ComparisonRecord]:
        """Answer several queries with at most ``config.max_in_flight`` in flight.

        Fallback coin flips are pre-drawn and transcript entries are written
        in query order, so neither depends on completion order.
        """
        seeds = rng.integers(0, 2**63 - 1, size=len(pairs))
        jobs = [(a, b, np.random.default_rng(s), first_query_id + i)
                for i, ((a, b), s) in enumerate(zip(pairs, seeds))]
        if self.config.max_in_flight <= 1 or len(jobs) <= 1:
            return [self.answer(narrative, a, b, r, q) for a, b, r, q in jobs]
        sinks = [[] for _ in jobs]
        try:
            with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
                futures = [pool.submit(self.answer, narrative, a, b, r, q, sink)
                           for (a, b, r, q), sink in zip(jobs, sinks)]
                return [f.result() for f in futures]
        finally:
            for sink in sinks:
                for entry in sink:
                    self.store.append(entry)


def llm_answer(narrative: str, bundle_a: Bundle, bundle_b: Bundle, config: ProxyConfig,
               backend: ChatBackend | None = None, store: TranscriptStore | None = None,
               rng=None) -> ComparisonRecord:
    """One-shot convenience wrapper around :class:`LlmProxy`."""
    proxy = LlmProxy(backend or make_backend(config), config, store or TranscriptStore())
    return proxy.answer(narrative, bundle_a, bundle_b, np.random.default_rng(rng))
