"""Uniform completion interface: replay fixtures, scripted mock, remote HTTP.

Replay is the hermetic default for tests and CI: requests are keyed by a
canonical digest of the prompt text (sampling params excluded, so tuning
temperature never invalidates a fixture), and a miss is a hard error,
never a silent fallback to a live call.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import requests

from .metrics import TokenUsage
from .model import HivegenError, hash_block

log = logging.getLogger(__name__)

ENV_API_KEY = "HIVEGEN_API_KEY"
ENV_BASE_URL = "HIVEGEN_BASE_URL"


@dataclass(frozen=True)
class LlmParams:
    model_id: str = "replay"
    temperature: float = 0.5
    top_p: float = 0.9
    max_output_tokens: int = 4096

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature out of range: {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p out of range: {self.top_p}")


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    params: LlmParams = LlmParams()

    def digest(self) -> str:
        # Canonical hash over the prompt text only; params excluded on purpose.
        return hash_block(self.system + "\x1e" + self.user)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: TokenUsage
    latency_ms: float = 0.0


class FixtureMiss(HivegenError):
    def __init__(self, digest: str):
        super().__init__(f"no recorded response for request digest {digest}")
        self.digest = digest


class TransportError(HivegenError):
    def __init__(self, message: str, retries_exhausted: bool = False):
        super().__init__(message)
        self.retries_exhausted = retries_exhausted


class StorageError(HivegenError):
    pass


def count_tokens(text: str) -> int:
    """Deterministic token approximation: words plus symbol characters.

    Words are whitespace-separated runs; symbols are characters that are
    neither alphanumeric nor whitespace. Used only when a provider does
    not report usage itself.
    """
    words = len(text.split())
    symbols = sum(1 for ch in text if not ch.isalnum() and not ch.isspace())
    return words + symbols


def _approx_usage(request: ChatRequest, response_text: str) -> TokenUsage:
    return TokenUsage(
        prompt_tokens=count_tokens(request.system) + count_tokens(request.user),
        completion_tokens=count_tokens(response_text),
    )


class LlmBackend:
    """Shareable completion handle; complete() is safe to call concurrently."""

    name = "base"

    def complete(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


@dataclass(frozen=True)
class FixtureEntry:
    digest: str
    response_text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


def load_fixture_file(path: Union[str, Path]) -> dict[str, FixtureEntry]:
    """Read a JSON-lines fixture file; duplicate digests keep the last entry."""
    entries: dict[str, FixtureEntry] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        data = json.loads(line)
        entry = FixtureEntry(
            digest=data["digest"],
            response_text=data["response_text"],
            prompt_tokens=int(data.get("prompt_tokens", 0)),
            completion_tokens=int(data.get("completion_tokens", 0)),
        )
        if entry.digest in entries:
            log.warning("fixture line %d: duplicate digest %s, last write wins", lineno, entry.digest)
        entries[entry.digest] = entry
    return entries


class ReplayBackend(LlmBackend):
    """Serve recorded responses byte-identical; a miss is FixtureMiss."""

    name = "replay"

    def __init__(self, fixtures: Union[str, Path, dict[str, FixtureEntry]]):
        if isinstance(fixtures, dict):
            self._entries = dict(fixtures)
        else:
            self._entries = load_fixture_file(fixtures)

    def complete(self, request: ChatRequest) -> ChatResponse:
        digest = request.digest()
        entry = self._entries.get(digest)
        if entry is None:
            raise FixtureMiss(digest)
        usage = TokenUsage(entry.prompt_tokens, entry.completion_tokens)
        if usage.total_tokens == 0:
            usage = _approx_usage(request, entry.response_text)
        return ChatResponse(text=entry.response_text, usage=usage, latency_ms=0.0)


class MockBackend(LlmBackend):
    """Scripted backend for tests: a response list, or a responder callable.

    Script items may be exceptions, which are raised in order; the call
    counter covers every complete() call, raising or not.
    """

    name = "mock"

    def __init__(
        self,
        script: Optional[Sequence[Union[str, Exception]]] = None,
        responder: Optional[Callable[[ChatRequest], str]] = None,
    ):
        if (script is None) == (responder is None):
            raise ValueError("provide exactly one of script or responder")
        self._script = list(script) if script is not None else None
        self._responder = responder
        self.calls = 0
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.calls += 1
        self.requests.append(request)
        if self._script is not None:
            if not self._script:
                raise TransportError("mock script exhausted", retries_exhausted=True)
            item = self._script.pop(0)
            if isinstance(item, Exception):
                raise item
            text = item
        else:
            text = self._responder(request)
        return ChatResponse(text=text, usage=_approx_usage(request, text), latency_ms=0.0)


class RemoteBackend(LlmBackend):
    """OpenAI-compatible chat-completions client over plain HTTP."""

    name = "remote"

    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        timeout_s: float = 120.0,
        max_attempts: int = 3,
        session: Optional[requests.Session] = None,
    ):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL, "https://api.openai.com/v1")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.timeout_s = timeout_s
        self.max_attempts = max_attempts
        self._session = session or requests.Session()

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.params.model_id,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "max_tokens": request.params.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error = "no attempt made"
        for attempt in range(1, self.max_attempts + 1):
            start = time.monotonic()
            try:
                resp = self._session.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout_s,
                )
                resp.raise_for_status()
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
                usage_body = body.get("usage") or {}
                usage = TokenUsage(
                    prompt_tokens=int(usage_body.get("prompt_tokens", 0)),
                    completion_tokens=int(usage_body.get("completion_tokens", 0)),
                )
                if usage.total_tokens == 0:
                    usage = _approx_usage(request, text)
                latency = (time.monotonic() - start) * 1000.0
                return ChatResponse(text=text, usage=usage, latency_ms=latency)
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = f"attempt {attempt}/{self.max_attempts}: {exc}"
                log.warning("remote completion failed (%s)", last_error)
        raise TransportError(last_error, retries_exhausted=True)


class RecordingBackend(LlmBackend):
    """Wrap a live backend and append every exchange to a fixture file."""

    name = "recording"

    def __init__(self, inner: LlmBackend, path: Union[str, Path]):
        self.inner = inner
        self.path = Path(path)
        self.transcript: list[tuple[ChatRequest, ChatResponse]] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.complete(request)
        self.transcript.append((request, response))
        return response

    def flush(self) -> Path:
        return record_fixtures(self.transcript, self.path)


def record_fixtures(
    transcript: Iterable[tuple[ChatRequest, ChatResponse]], path: Union[str, Path]
) -> Path:
    """Write a session transcript as a replayable JSON-lines fixture file."""
    path = Path(path)
    rows: dict[str, dict] = {}
    for request, response in transcript:
        digest = request.digest()
        if digest in rows and rows[digest]["response_text"] != response.text:
            log.warning("duplicate digest %s in transcript, last write wins", digest)
        rows[digest] = {
            "digest": digest,
            "response_text": response.text,
            "prompt_tokens": response.usage.prompt_tokens,
            "completion_tokens": response.usage.completion_tokens,
        }
    lines = [json.dumps(row, sort_keys=True) for row in rows.values()]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write fixture file {path}: {exc}") from exc
    return path


def make_backend(
    kind: str,
    fixtures: Optional[Union[str, Path]] = None,
    params: Optional[LlmParams] = None,
) -> LlmBackend:
    """Build a backend from CLI-style settings (--backend, --fixtures)."""
    if kind == "replay":
        if fixtures is None:
            raise HivegenError("replay backend requires a fixtures path")
        return ReplayBackend(fixtures)
    if kind == "remote":
        return RemoteBackend()
    if kind == "mock":
        return MockBackend(responder=lambda req: "")
    raise HivegenError(f"unknown backend kind: {kind}")
