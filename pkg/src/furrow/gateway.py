"""Chat-completion backends: HTTP with retry/cache/limits, scripted, and replay."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from collections import deque
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Protocol

import httpx

from .domain import ChatMessage
from .errors import (
    AuthMissing,
    Exhausted,
    FixtureMiss,
    GatewayError,
    HttpStatusError,
    ScriptEmpty,
    StorageError,
)

log = logging.getLogger(__name__)

TRANSIENT_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    initial_backoff_ms: float = 500.0
    multiplier: float = 2.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def delay_ms(self, retry_index: int) -> float:
        return self.initial_backoff_ms * self.multiplier**retry_index


@dataclass(frozen=True)
class ModelEndpoint:
    base_url: str
    model_name: str
    auth_token_env: str | None = None
    max_concurrency: int = 4
    timeout: float = 60.0
    retry: RetryPolicy = RetryPolicy()

    def __post_init__(self) -> None:
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("a completion request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    @property
    def last_user_content(self) -> str:
        for m in reversed(self.messages):
            if m.role.value == "user":
                return m.content
        return ""


@dataclass(frozen=True)
class CompletionResponse:
    content: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: float = 0.0
    from_cache: bool = False

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")

    def to_fixture(self) -> dict[str, Any]:
        return {
            "content": self.content,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }


def canonical_request(req: CompletionRequest, model_name: str) -> bytes:
    payload = {
        "model": model_name,
        "messages": [[m.role.value, m.content] for m in req.messages],
        "temperature": float(req.temperature),
        "max_tokens": req.max_tokens,
        "seed": req.seed,
    }
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8")


def request_digest(req: CompletionRequest, model_name: str) -> str:
    return hashlib.sha256(canonical_request(req, model_name)).hexdigest()


def _atomic_write_json(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(data, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ResponseCache:
    """Content-addressed on-disk cache, one JSON file per request digest."""

    def __init__(self, root: str | os.PathLike[str]):
        self.root = Path(root)

    def path_for(self, digest: str) -> Path:
        return self.root / digest[:2] / f"{digest}.json"

    def put(self, digest: str, resp: CompletionResponse) -> None:
        data = resp.to_fixture() | {"latency_ms": resp.latency_ms}
        try:
            _atomic_write_json(self.path_for(digest), data)
        except OSError as exc:
            raise StorageError(f"cannot write cache entry under {self.root}: {exc}") from exc

    def get(self, digest: str) -> CompletionResponse | None:
        path = self.path_for(digest)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, ValueError) as exc:
            log.warning("ignoring unreadable cache entry %s: %s", path, exc)
            return None
        return CompletionResponse(
            content=data["content"],
            prompt_tokens=data.get("prompt_tokens", 0),
            completion_tokens=data.get("completion_tokens", 0),
            latency_ms=data.get("latency_ms", 0.0),
            from_cache=True,
        )

    @classmethod
    def from_env(cls) -> ResponseCache | None:
        root = os.environ.get("FURROW_CACHE_DIR")
        return cls(root) if root else None


class Backend(Protocol):
    model_name: str

    def complete(self, req: CompletionRequest) -> CompletionResponse: ...

    def describe(self) -> str: ...


def complete(backend: Backend, req: CompletionRequest) -> CompletionResponse:
    return backend.complete(req)


class HttpBackend:
    """OpenAI-style ``/chat/completions`` client.

    ``client`` and ``sleep`` are injectable so tests can run against
    ``httpx.MockTransport`` with a fake clock.
    """

    def __init__(
        self,
        endpoint: ModelEndpoint,
        cache: ResponseCache | None = None,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        env: Mapping[str, str] | None = None,
    ):
        self.endpoint = endpoint
        self.model_name = endpoint.model_name
        self.cache = cache
        self.client = client or httpx.Client(timeout=endpoint.timeout)
        self.sleep = sleep
        self.env = os.environ if env is None else env
        self._slots = threading.BoundedSemaphore(endpoint.max_concurrency)

    def describe(self) -> str:
        return f"http:{self.endpoint.base_url}#{self.model_name}"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        var = self.endpoint.auth_token_env
        if var:
            token = self.env.get(var)
            if not token:
                raise AuthMissing(var)
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _payload(self, req: CompletionRequest) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "model": self.model_name,
            "messages": [m.to_dict() for m in req.messages],
            "temperature": req.temperature,
        }
        if req.max_tokens is not None:
            payload["max_tokens"] = req.max_tokens
        if req.seed is not None:
            payload["seed"] = req.seed
        return payload

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        headers = self._headers()
        digest = request_digest(req, self.model_name)
        if self.cache is not None:
            hit = self.cache.get(digest)
            if hit is not None:
                return hit

        url = self.endpoint.base_url.rstrip("/") + "/chat/completions"
        policy = self.endpoint.retry
        last: BaseException | str = "no attempt made"
        for attempt in range(policy.max_attempts):
            if attempt:
                self.sleep(policy.delay_ms(attempt - 1) / 1000.0)
            started = time.perf_counter()
            try:
                with self._slots:
                    resp = self.client.post(
                        url, json=self._payload(req), headers=headers, timeout=self.endpoint.timeout
                    )
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last = exc
                log.warning("%s attempt %d failed: %s", self.model_name, attempt + 1, exc)
                continue
            latency = (time.perf_counter() - started) * 1000.0
            if resp.status_code in TRANSIENT_STATUS:
                last = HttpStatusError(resp.status_code, resp.text)
                log.warning("%s attempt %d got HTTP %d", self.model_name, attempt + 1, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise HttpStatusError(resp.status_code, resp.text)
            result = self._parse(resp, latency)
            if self.cache is not None:
                self.cache.put(digest, result)
            return result
        raise Exhausted(policy.max_attempts, last)

    @staticmethod
    def _parse(resp: httpx.Response, latency_ms: float) -> CompletionResponse:
        try:
            body = resp.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed completion payload: {exc}") from exc
        if not content:
            raise GatewayError("endpoint returned empty content")
        usage = body.get("usage") or {}
        return CompletionResponse(
            content=content,
            prompt_tokens=int(usage.get("prompt_tokens") or 0),
            completion_tokens=int(usage.get("completion_tokens") or 0),
            latency_ms=latency_ms,
        )


@dataclass(frozen=True)
class Rule:
    trigger: str
    response: str


class ScriptedBackend:
    """Canned responses for tests and demos. Never touches the network.

    Rules are tried first, in order, against the last user message; when
    none matches the next queued response is popped.
    """

    def __init__(
        self,
        queue: Iterable[str] = (),
        rules: Iterable[Rule | tuple[str, str]] = (),
        model_name: str = "scripted",
    ):
        self.model_name = model_name
        self._queue = deque(queue)
        self.rules = [r if isinstance(r, Rule) else Rule(*r) for r in rules]
        self._lock = threading.Lock()

    def describe(self) -> str:
        return f"scripted:{self.model_name}"

    @classmethod
    def from_file(cls, path: str | os.PathLike[str], model_name: str = "scripted") -> ScriptedBackend:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(data, list):
            data = {"queue": data}
        rules = [Rule(r["trigger"], r["response"]) for r in data.get("rules", [])]
        return cls(queue=data.get("queue", []), rules=rules, model_name=model_name)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        last = req.last_user_content
        for rule in self.rules:
            if rule.trigger in last:
                return CompletionResponse(rule.response)
        with self._lock:
            if not self._queue:
                raise ScriptEmpty()
            return CompletionResponse(self._queue.popleft())


def load_fixture(path: str | os.PathLike[str]) -> dict[str, dict[str, Any]]:
    p = Path(path)
    if not p.exists():
        return {}
    text = p.read_text(encoding="utf-8")
    return json.loads(text) if text.strip() else {}


class ReplayBackend:
    """Serves recorded responses keyed by request digest."""

    def __init__(self, fixture: Mapping[str, Mapping[str, Any]] | str | os.PathLike[str], model_name: str):
        self.model_name = model_name
        if isinstance(fixture, (str, os.PathLike)):
            self.source = str(fixture)
            fixture = load_fixture(fixture)
        else:
            self.source = "<memory>"
        self.fixture = dict(fixture)

    def describe(self) -> str:
        return f"replay:{fixture_digest(self.fixture)}#{self.model_name}"

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        digest = request_digest(req, self.model_name)
        entry = self.fixture.get(digest)
        if entry is None:
            raise FixtureMiss(digest)
        return CompletionResponse(
            content=entry["content"],
            prompt_tokens=entry.get("prompt_tokens", 0),
            completion_tokens=entry.get("completion_tokens", 0),
        )


def fixture_digest(fixture: Mapping[str, Any]) -> str:
    blob = json.dumps(fixture, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


class RecordingBackend:
    """Wraps another backend and snapshots ``digest -> response`` for replay."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.model_name = inner.model_name
        self.snapshot: dict[str, dict[str, Any]] = {}
        self._lock = threading.Lock()

    def describe(self) -> str:
        return f"record({self.inner.describe()})"

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        resp = self.inner.complete(req)
        with self._lock:
            self.snapshot[request_digest(req, self.model_name)] = resp.to_fixture()
        return replace(resp, from_cache=False)

    def save(self, path: str | os.PathLike[str], merge: bool = True) -> None:
        with self._lock:
            save_fixture(path, dict(self.snapshot), merge)


def save_fixture(path: str | os.PathLike[str], entries: Mapping[str, Any], merge: bool = True) -> None:
    p = Path(path)
    data = load_fixture(p) if merge else {}
    data.update(entries)
    _atomic_write_json(p, data)
