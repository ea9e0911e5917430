"""Chat-completion clients.

``ChatEndpoint`` speaks the OpenAI-compatible ``/chat/completions`` protocol.
``ScriptedEndpoint`` replays canned replies keyed by lemma name and dialogue
round, which makes whole evaluation runs reproducible offline.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from ..errors import AuthError, ConfigError, ResponseMalformed, TransportError
from .metrics import FIRST, FIXING

log = logging.getLogger(__name__)

DEFAULT_KEY_ENV = "ISOPROOF_API_KEY"
RETRY_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})


@dataclass
class EndpointConfig:
    kind: str = "openai"  # or "scripted"
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4"
    api_key_env: str = DEFAULT_KEY_ENV
    script: str | None = None  # scripted endpoint reply file
    max_attempts: int = 3
    backoff_seconds: float = 1.0
    request_timeout: float = 120.0
    requests_per_minute: float = 0.0  # 0 disables rate limiting

    def __post_init__(self):
        if self.kind not in ("openai", "scripted"):
            raise ConfigError(f"endpoint kind must be 'openai' or 'scripted', got {self.kind!r}")
        if self.kind == "scripted" and not self.script:
            raise ConfigError("scripted endpoint needs a script file")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")

    def describe(self):
        """Config fields safe to persist; the credential itself is never included."""
        return {"kind": self.kind, "base_url": self.base_url if self.kind == "openai" else None,
                "model": self.model, "api_key_env": self.api_key_env,
                "script": Path(self.script).name if self.script else None}


@dataclass
class Completion:
    text: str
    completion_tokens: int | None = None


class TokenBucket:
    """Blocking rate limiter: ``rate`` requests per minute with a burst of ``capacity``."""

    def __init__(self, per_minute, capacity=None, clock=time.monotonic, sleep=time.sleep):
        self.rate = per_minute / 60.0
        self.capacity = float(capacity if capacity is not None else max(1.0, per_minute / 60.0))
        self.tokens = self.capacity
        self.clock, self._sleep = clock, sleep
        self.stamp = clock()
        self._lock = threading.Lock()

    def acquire(self):
        if self.rate <= 0:
            return 0.0
        waited = 0.0
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
                self.stamp = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return waited
                wait = (1.0 - self.tokens) / self.rate
            self._sleep(wait)
            waited += wait


class ChatEndpoint:
    def __init__(self, config: EndpointConfig, transport=None, sleep=time.sleep):
        self.config = config
        self._transport = transport
        self._sleep = sleep
        self.bucket = TokenBucket(config.requests_per_minute, sleep=sleep)

    def _key(self):
        key = os.environ.get(self.config.api_key_env, "").strip()
        if not key:
            raise AuthError(f"no credential: environment variable {self.config.api_key_env} is unset")
        return key

    def complete(self, messages, sampling):
        key = self._key()  # fail before any network traffic
        body = {"model": self.config.model, "messages": messages,
                "temperature": sampling.temperature, "top_p": sampling.top_p,
                "max_tokens": sampling.max_generation_units}
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {key}"}
        last = None
        with httpx.Client(transport=self._transport, timeout=self.config.request_timeout) as client:
            for attempt in range(self.config.max_attempts):
                if attempt:
                    self._sleep(self.config.backoff_seconds * 2 ** (attempt - 1))
                self.bucket.acquire()
                try:
                    resp = client.post(url, json=body, headers=headers)
                except httpx.TransportError as e:
                    last = f"{type(e).__name__}: {e}"
                    log.warning("chat request failed (%s), attempt %d", last, attempt + 1)
                    continue
                if resp.status_code in (401, 403):
                    raise AuthError(f"endpoint rejected the credential (HTTP {resp.status_code})")
                if resp.status_code in RETRY_STATUS:
                    last = f"HTTP {resp.status_code}"
                    log.warning("chat request got %s, attempt %d", last, attempt + 1)
                    continue
                if resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                return parse_completion(resp)
        raise TransportError(f"giving up after {self.config.max_attempts} attempts ({last})")


def parse_completion(resp):
    try:
        data = resp.json()
        choice = data["choices"][0]
        text = choice["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as e:
        raise ResponseMalformed(f"unexpected completion payload: {e!r}")
    if text is None:
        text = ""
    if not isinstance(text, str):
        raise ResponseMalformed("completion content is not text")
    usage = data.get("usage") or {}
    return Completion(text, usage.get("completion_tokens"))


# ---------------------------------------------------------------------------
# scripted replies

_LEMMA_NAME = re.compile(r"^\s*(?:lemma|theorem)\s+(?:\([^)]*\)\s*)?([A-Za-z_][\w'.]*)", re.MULTILINE)
_LEMMA_START = re.compile(r"^\s*(?:lemma|theorem)\b", re.MULTILINE)
DEFAULT_KEY = "*"


def script_key(spec_text):
    """Key a scripted reply by lemma name; unnamed lemmas use their statement."""
    m = _LEMMA_NAME.search(spec_text)
    if m and m.group(1) not in ("assumes", "shows", "fixes"):
        return m.group(1)
    return " ".join(spec_text.split())


def dialogue_position(messages):
    """(script key, round) of the request: the target is the last user turn
    holding a lemma statement; any user turn after it is a fixing round."""
    users = [m["content"] for m in messages if m["role"] == "user"]
    for back, content in enumerate(reversed(users)):
        starts = [m.start() for m in _LEMMA_START.finditer(content)]
        if starts:
            # retrieval blocks come first, the target statement is the last one
            return script_key(content[starts[-1]:]), (FIRST if back == 0 else FIXING)
    raise ResponseMalformed("no lemma statement in the request")


@dataclass
class ScriptedEndpoint:
    """Replies from a JSON file ``{key: {"first": [...], "fixing": [...]}}``.

    Each list is consumed in call order per (key, round) and its last entry
    repeats. Key ``"*"`` is the fallback; a missing entry yields an empty
    reply. Reply values are plain strings or ``{"text": ..., "tokens": n}``.
    """
    replies: dict
    calls: dict = field(default_factory=dict)

    def __post_init__(self):
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path):
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def complete(self, messages, sampling):
        key, rnd = dialogue_position(messages)
        entry = self.replies.get(key, self.replies.get(DEFAULT_KEY, {}))
        options = entry.get(rnd, [])
        with self._lock:
            n = self.calls.get((key, rnd), 0)
            self.calls[(key, rnd)] = n + 1
        if not options:
            return Completion("")
        reply = options[min(n, len(options) - 1)]
        if isinstance(reply, dict):
            return Completion(reply.get("text", ""), reply.get("tokens"))
        return Completion(reply)


def make_endpoint(config: EndpointConfig):
    if config.kind == "scripted":
        return ScriptedEndpoint.from_file(config.script)
    return ChatEndpoint(config)
