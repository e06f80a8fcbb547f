"""Uniform chat-completion client: a remote HTTP backend with bounded
retries and a scripted mock that makes the whole engine deterministic.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .errors import LlmUnavailable, ScriptExhausted

API_KEY_ENV = "MUSICAGENT_LLM_KEY"
DEFAULT_MAX_TOKENS = 1024
RETRY_BACKOFFS = (1.0, 4.0)  # seconds before retry 1 and retry 2


@dataclass
class LlmRequest:
    messages: list[dict]  # {"role": system|user|assistant, "content": str}
    temperature: float = 0.0
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be nonempty")
        if self.messages[0].get("role") != "system":
            raise ValueError("first message must be the system message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass
class UsageRecord:
    purpose: str  # planner | selector | responder | tool
    token_estimate: int
    latency_s: float


@dataclass
class MockEntry:
    match: str  # substring, or "*" wildcard
    reply: str
    consumed: bool = False


class MockLlm:
    """Scripted backend. Entries are consumed in order: each request takes
    the earliest unconsumed entry whose match is "*" or a substring of the
    request text.
    """

    def __init__(self, script: list[dict]):
        self.entries = [
            MockEntry(match=e.get("match", "*"), reply=_as_text(e["reply"]))
            for e in script
        ]
        self.requests: list[LlmRequest] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "MockLlm":
        return cls(json.loads(Path(path).read_text()))

    def complete(self, request: LlmRequest) -> str:
        self.requests.append(request)
        text = "\n".join(m["content"] for m in request.messages)
        for entry in self.entries:
            if entry.consumed:
                continue
            if entry.match == "*" or entry.match in text:
                entry.consumed = True
                return entry.reply
        raise ScriptExhausted("mock script has no matching unconsumed entry")


def _as_text(reply) -> str:
    return reply if isinstance(reply, str) else json.dumps(reply)


class RemoteChatLlm:
    """Chat-completion HTTP backend (de-facto messages/choices JSON shape).

    Retries twice with exponential backoff; the sleeper and transport are
    injectable for tests.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        timeout: float = 30.0,
        sleeper=time.sleep,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.sleeper = sleeper
        self.client = client or httpx.Client(timeout=timeout)
        self.attempts = 0

    def complete(self, request: LlmRequest) -> str:
        api_key = os.environ.get(API_KEY_ENV, "")
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        body = {
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        last_error = None
        for attempt in range(1 + len(RETRY_BACKOFFS)):
            if attempt > 0:
                self.sleeper(RETRY_BACKOFFS[attempt - 1])
            self.attempts += 1
            try:
                response = self.client.post(
                    self.endpoint, json=body, headers=headers, timeout=self.timeout
                )
                if response.status_code in (401, 403):
                    raise LlmUnavailable(f"auth failure: HTTP {response.status_code}")
                response.raise_for_status()
                return response.json()["choices"][0]["message"]["content"]
            except LlmUnavailable:
                raise
            except (httpx.HTTPError, KeyError, ValueError, json.JSONDecodeError) as exc:
                last_error = exc
        raise LlmUnavailable(f"exhausted retries: {last_error}")


class LlmBridge:
    """Shared front door: one configured backend, per-purpose temperature
    overrides, and an append-only usage log.
    """

    def __init__(self, backend, temperatures: dict | None = None):
        self.backend = backend
        self.temperatures = {"planner": 0.0, "selector": 0.0, "responder": 0.7}
        if temperatures:
            self.temperatures.update(temperatures)
        self.usage: list[UsageRecord] = []

    def complete(self, request: LlmRequest, purpose: str = "tool") -> str:
        start = time.monotonic()
        try:
            reply = self.backend.complete(request)
        finally:
            latency = time.monotonic() - start
        chars = sum(len(m["content"]) for m in request.messages) + len(reply)
        self.usage.append(
            UsageRecord(purpose=purpose, token_estimate=chars // 4, latency_s=latency)
        )
        return reply

    def complete_text(
        self,
        prompt: str,
        purpose: str = "tool",
        system: str = "You are a helpful music assistant.",
        temperature: float | None = None,
    ) -> str:
        if temperature is None:
            temperature = self.temperatures.get(purpose, 0.0)
        request = LlmRequest(
            messages=[
                {"role": "system", "content": system},
                {"role": "user", "content": prompt},
            ],
            temperature=temperature,
        )
        return self.complete(request, purpose=purpose)

    def record_usage(self) -> list[UsageRecord]:
        return list(self.usage)
