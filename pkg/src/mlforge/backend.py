"""Uniform text-generation interface: HTTP chat endpoint, scripted mock, record/replay.

Every path that talks to a language model goes through :class:`Session` so the
whole pipeline can run offline against a transcript or a scripted queue.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import requests

from .errors import BackendError, ReplayDivergenceError

TRANSCRIPT_SCHEMA_VERSION = 1

ENV_BASE_URL = "MLFORGE_LLM_BASE_URL"
ENV_API_KEY = "MLFORGE_LLM_API_KEY"
ENV_MODEL = "MLFORGE_LLM_MODEL"


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown message role: {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True)
class BackendState:
    """Semantic generation state; temperature 0 pins deterministic runs."""

    kind: str
    model: str = "default"
    temperature: float = 0.0
    timeout: float = 60.0
    retry_budget: int = 2

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


def request_digest(messages: Sequence[Message], state: BackendState) -> str:
    """Cryptographic digest of the canonicalized request.

    Only semantic fields (messages, model, temperature) participate, and the
    canonical JSON sorts keys, so equivalent requests digest identically
    regardless of construction order.
    """
    canonical = json.dumps(
        {
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "model": state.model,
            "temperature": state.temperature,
        },
        sort_keys=True,
        ensure_ascii=True,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def complete(self, messages: Sequence[Message], state: BackendState) -> str:
        """Return the full response text for one chat request."""


class ScriptedBackend:
    """Deterministic mock that replays a fixed queue of responses.

    An optional ``default`` keeps answering after the queue drains, which is
    convenient for schedules that intentionally never succeed.
    """

    def __init__(self, responses: Iterable[str] = (), default: str | None = None):
        self._queue: list[str] = list(responses)
        self._default = default
        self.calls: int = 0
        self.requests: list[tuple[Message, ...]] = []

    def push(self, *responses: str) -> None:
        self._queue.extend(responses)

    def complete(self, messages: Sequence[Message], state: BackendState) -> str:
        self.calls += 1
        self.requests.append(tuple(messages))
        if self._queue:
            return self._queue.pop(0)
        if self._default is not None:
            return self._default
        raise BackendError(f"scripted response queue exhausted at call #{self.calls}")


class CallableBackend:
    """Adapter turning a plain function into a backend (handy in tests)."""

    def __init__(self, fn: Callable[[Sequence[Message]], str]):
        self._fn = fn
        self.calls = 0

    def complete(self, messages: Sequence[Message], state: BackendState) -> str:
        self.calls += 1
        return self._fn(messages)


class HttpBackend:
    """Chat-completion client over the common HTTP JSON shape.

    Transient failures (connection errors, timeouts, 5xx, 429) are retried
    with exponential backoff up to the state's retry budget.
    """

    def __init__(self, base_url: str | None = None, api_key: str | None = None,
                 session: requests.Session | None = None, backoff: float = 0.5):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL, "")).rstrip("/")
        if not self.base_url:
            raise BackendError(f"no endpoint configured ({ENV_BASE_URL} unset)")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self._session = session or requests.Session()
        self._backoff = backoff

    def complete(self, messages: Sequence[Message], state: BackendState) -> str:
        payload = {
            "model": state.model,
            "temperature": state.temperature,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(state.retry_budget + 1):
            try:
                response = self._session.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=state.timeout,
                )
                if response.status_code in (429,) or response.status_code >= 500:
                    raise requests.RequestException(
                        f"retryable status {response.status_code}"
                    )
                response.raise_for_status()
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except (requests.ConnectionError, requests.Timeout,
                    requests.RequestException) as exc:
                last_error = exc
                if attempt < state.retry_budget:
                    time.sleep(self._backoff * (2 ** attempt))
            except (KeyError, IndexError, ValueError) as exc:
                raise BackendError(f"malformed completion response: {exc}") from exc
        raise BackendError(f"backend unavailable after retries: {last_error}")


class TranscriptStore:
    """Line-delimited (digest, response) records backing record/replay runs."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, digest: str, response: str) -> None:
        record = {"v": TRANSCRIPT_SCHEMA_VERSION, "digest": digest, "response": response}
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def load(self) -> list[tuple[str, str]]:
        records: list[tuple[str, str]] = []
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    payload = json.loads(line)
                    records.append((payload["digest"], payload["response"]))
                except (ValueError, KeyError) as exc:
                    raise ValueError(f"corrupt transcript line {lineno}: {exc}") from exc
        return records


class RecordingBackend:
    """Wraps a live backend and appends every exchange to a transcript."""

    def __init__(self, inner: Backend, store: TranscriptStore):
        self._inner = inner
        self._store = store

    def complete(self, messages: Sequence[Message], state: BackendState) -> str:
        response = self._inner.complete(messages, state)
        self._store.append(request_digest(messages, state), response)
        return response


class ReplayBackend:
    """Replays a transcript; issues zero network calls.

    Requests must arrive in recorded order with matching digests, otherwise
    the run has drifted and :class:`ReplayDivergenceError` is raised.
    """

    def __init__(self, store: TranscriptStore):
        self._records = store.load()
        self._cursor = 0
        self._lock = threading.Lock()

    def complete(self, messages: Sequence[Message], state: BackendState) -> str:
        digest = request_digest(messages, state)
        with self._lock:
            if self._cursor >= len(self._records):
                raise BackendError(
                    f"transcript exhausted at request #{self._cursor}"
                )
            expected_digest, response = self._records[self._cursor]
            if digest != expected_digest:
                raise ReplayDivergenceError(self._cursor, expected_digest, digest)
            self._cursor += 1
        return response


class Session:
    """One conversation: memory of turns plus a fixed backend state.

    Each generation chain owns its own session; resetting clears the
    conversation memory but keeps the backend state untouched.
    """

    def __init__(self, backend: Backend, state: BackendState,
                 system_prompt: str | None = None):
        self.backend = backend
        self.state = state
        self.system_prompt = system_prompt
        self.turns: list[Message] = []

    def ask(self, content: str) -> str:
        messages: list[Message] = []
        if self.system_prompt:
            messages.append(Message("system", self.system_prompt))
        messages.extend(self.turns)
        user = Message("user", content)
        messages.append(user)
        reply = self.backend.complete(messages, self.state)
        self.turns.append(user)
        self.turns.append(Message("assistant", reply))
        return reply

    def reset(self) -> None:
        self.turns.clear()


def reset_memory(session: Session) -> Session:
    """Clear conversation memory, retaining model and sampling state."""
    session.reset()
    return session
