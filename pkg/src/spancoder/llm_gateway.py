"""Chat-completion access with caching, retries, batching, and a mock mode.

The gateway speaks the OpenAI-compatible chat-completions protocol. Every
request is content-addressed by a hash of (model, system, user, temperature,
max_tokens). A disk cache keyed on that hash sits above the transport, so
repeated runs over a large corpus only pay for new prompts. Mock mode swaps
the transport for a transcript file of hash->text pairs and performs no
network activity at all, which keeps the test suite hermetic.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import httpx

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 1024
DEFAULT_RETRY_LIMIT = 2
DEFAULT_BACKOFF_SECONDS = 0.5
DEFAULT_API_KEY_ENV = "SPANCODER_API_KEY"


class GatewayError(RuntimeError):
    """Completion could not be obtained (retries exhausted, bad payload)."""


class CompletionParseError(ValueError):
    """Model output does not contain the structure a pipeline stage expects."""


class MockMissError(GatewayError):
    """Mock transcript has no entry for the request hash."""

    def __init__(self, request_hash: str):
        super().__init__(f"mock transcript has no completion for request hash {request_hash}")
        self.request_hash = request_hash


@dataclass(frozen=True)
class ChatRequest:
    user: str
    system: str | None = None
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    model: str = ""

    def __post_init__(self):
        if not self.user:
            raise ValueError("chat request needs non-empty user text")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    cached: bool
    attempts: int


def request_hash(request: ChatRequest) -> str:
    """Stable content address over the fields that determine the completion."""
    payload = {
        "model": request.model,
        "system": request.system,
        "user": request.user,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_transcript(path: str | Path) -> dict[str, str]:
    """Read a mock transcript of line-delimited {"hash", "text"} objects."""
    mapping: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        mapping[row["hash"]] = row["text"]
    return mapping


def save_transcript(mapping: dict[str, str], path: str | Path) -> None:
    lines = [
        json.dumps({"hash": h, "text": t}, ensure_ascii=False)
        for h, t in sorted(mapping.items())
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class Gateway:
    """One configured route to a model: live endpoint or mock transcript.

    Exactly one of (base_url, transcript) drives completions. `cache_dir`
    is optional; without it responses are still memoized in process.
    """

    model: str
    base_url: str | None = None
    api_key: str | None = None
    cache_dir: str | Path | None = None
    transcript: dict[str, str] | None = None
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    retry_limit: int = DEFAULT_RETRY_LIMIT
    backoff_seconds: float = DEFAULT_BACKOFF_SECONDS
    timeout: float = 60.0
    transport: httpx.BaseTransport | None = None

    network_calls: int = field(default=0, init=False)
    _memory: dict[str, str] = field(default_factory=dict, init=False, repr=False)
    _cache_lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)
    _counter_lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if self.base_url is None and self.transcript is None:
            raise ValueError("gateway needs a base_url or a mock transcript")
        if self.cache_dir is not None:
            self.cache_dir = Path(self.cache_dir)
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    # -- cache ---------------------------------------------------------------

    def _cache_path(self, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return Path(self.cache_dir) / f"{key}.json"

    def _cache_get(self, key: str) -> str | None:
        with self._cache_lock:
            if key in self._memory:
                return self._memory[key]
            path = self._cache_path(key)
            if path is not None and path.exists():
                text = json.loads(path.read_text(encoding="utf-8"))["text"]
                self._memory[key] = text
                return text
        return None

    def _cache_put(self, key: str, text: str) -> None:
        with self._cache_lock:
            self._memory[key] = text
            path = self._cache_path(key)
            if path is not None:
                blob = json.dumps({"hash": key, "text": text}, ensure_ascii=False)
                tmp = path.with_suffix(".tmp")
                tmp.write_text(blob, encoding="utf-8")
                tmp.replace(path)

    # -- transport -----------------------------------------------------------

    def _bump_network_calls(self) -> None:
        with self._counter_lock:
            self.network_calls += 1

    def _post_once(self, request: ChatRequest) -> str:
        messages = []
        if request.system is not None:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": request.user})
        body = {
            "model": request.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = str(self.base_url).rstrip("/") + "/chat/completions"
        self._bump_network_calls()
        with httpx.Client(timeout=self.timeout, transport=self.transport) as client:
            response = client.post(url, json=body, headers=headers)
        if response.status_code != 200:
            raise GatewayError(f"endpoint returned status {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise GatewayError(f"malformed completion payload: {exc}") from exc

    def _fetch(self, request: ChatRequest, key: str) -> ChatResponse:
        if self.transcript is not None:
            if key not in self.transcript:
                raise MockMissError(key)
            return ChatResponse(text=self.transcript[key], cached=False, attempts=1)
        last_error: Exception | None = None
        for attempt in range(1, self.retry_limit + 2):
            try:
                text = self._post_once(request)
                return ChatResponse(text=text, cached=False, attempts=attempt)
            except (httpx.HTTPError, GatewayError) as exc:
                last_error = exc
                if attempt <= self.retry_limit:
                    delay = self.backoff_seconds * (2 ** (attempt - 1))
                    log.warning("completion attempt %d failed (%s), retrying", attempt, exc)
                    time.sleep(delay)
        raise GatewayError(
            f"completion failed after {self.retry_limit + 1} attempts: {last_error}"
        ) from last_error

    # -- public api ----------------------------------------------------------

    def build_request(self, user: str, system: str | None = None, **overrides) -> ChatRequest:
        return ChatRequest(
            user=user,
            system=system,
            temperature=overrides.get("temperature", self.temperature),
            max_tokens=overrides.get("max_tokens", self.max_tokens),
            model=overrides.get("model", self.model),
        )

    def complete(
        self, request: ChatRequest | str, system: str | None = None, refresh: bool = False
    ) -> ChatResponse:
        """Complete one request. `refresh` skips the cache read (still writes),
        letting callers re-ask after an unusable completion."""
        if isinstance(request, str):
            request = self.build_request(request, system=system)
        key = request_hash(request)
        if not refresh:
            cached = self._cache_get(key)
            if cached is not None:
                return ChatResponse(text=cached, cached=True, attempts=1)
        response = self._fetch(request, key)
        self._cache_put(key, response.text)
        return response

    def complete_many(
        self, requests: list[ChatRequest], parallelism: int = 4
    ) -> list[ChatResponse | GatewayError]:
        """Run requests with bounded concurrency.

        Output is positionally aligned with the input; a failure at one
        position is returned there as the error instead of aborting the rest.
        """
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if not requests:
            return []

        def one(request: ChatRequest) -> ChatResponse | GatewayError:
            try:
                return self.complete(request)
            except GatewayError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(one, requests))
