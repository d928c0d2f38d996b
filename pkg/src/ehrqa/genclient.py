"""Prompt templates and text-generation backends.

Backends share one call shape: ``backend.generate(request) -> GenerationResult``.
The HTTP backend speaks OpenAI-style chat completions; the mock and transcript
backends replay completions keyed by a stable hash of the rendered messages so
whole pipeline runs are reproducible offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import requests

log = logging.getLogger(__name__)

PLACEHOLDERS = frozenset(
    {"patient_narrative", "clinical_question", "clinician_question", "sentences", "note_excerpt", "id"}
)
TEMPLATE_NAMES = (
    "e2e",
    "list_basic",
    "list_role",
    "list_cot",
    "list_cot_oneshot",
    "indiv_basic",
    "indiv_role",
    "indiv_cot",
    "indiv_cot_fewshot",
    "second_step",
)
_SLOT = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
ROLES = ("system", "user", "assistant")


class TemplateError(ValueError):
    pass


class BackendError(RuntimeError):
    """Generation or scoring backend failure."""


class BackendStatusError(BackendError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"backend returned HTTP {status}: {body[:200]}")


class BackendConnectionError(BackendError):
    pass


class RetryExhaustedError(BackendError, TimeoutError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str
    assistant_prefix: str | None = None

    def __post_init__(self):
        unknown = self.placeholders() - PLACEHOLDERS
        if unknown:
            raise TemplateError(f"template {self.name!r} uses unknown placeholder(s): {', '.join(sorted(unknown))}")

    def placeholders(self) -> set[str]:
        parts = [self.system, self.user, self.assistant_prefix or ""]
        return {m.group(1) for p in parts for m in _SLOT.finditer(p)}

    @classmethod
    def from_json(cls, data: Mapping) -> "PromptTemplate":
        assistant = data.get("assistant")
        return cls(
            name=data["name"],
            system=data.get("system", ""),
            user=data["user"],
            # an empty assistant prefix adds nothing to the conversation
            assistant_prefix=assistant or None,
        )


def load_template(name_or_path: str | Path) -> PromptTemplate:
    """Load a shipped template by name, or any template JSON file by path."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        raw = path.read_text(encoding="utf-8")
    else:
        if name_or_path not in TEMPLATE_NAMES:
            raise TemplateError(f"no shipped template named {name_or_path!r}")
        raw = resources.files("ehrqa.templates").joinpath(f"{name_or_path}.json").read_text(encoding="utf-8")
    return PromptTemplate.from_json(json.loads(raw))


def _substitute(text: str, bindings: Mapping[str, str]) -> str:
    def repl(m: re.Match) -> str:
        name = m.group(1)
        if name not in bindings:
            raise TemplateError(f"unbound placeholder: {name}")
        return str(bindings[name])

    return _SLOT.sub(repl, text)


def render_template(t: PromptTemplate, bindings: Mapping[str, str]) -> list[dict]:
    messages = []
    if t.system:
        messages.append({"role": "system", "content": _substitute(t.system, bindings)})
    messages.append({"role": "user", "content": _substitute(t.user, bindings)})
    if t.assistant_prefix:
        messages.append({"role": "assistant", "content": _substitute(t.assistant_prefix, bindings)})
    return messages


def messages_hash(messages: Sequence[Mapping[str, str]]) -> str:
    canon = json.dumps(
        [{"role": m["role"], "content": m["content"]} for m in messages],
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GenerationRequest:
    messages: tuple
    max_tokens: int = 512
    temperature: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        msgs = tuple(dict(m) for m in self.messages)
        for m in msgs:
            if m.get("role") not in ROLES:
                raise ValueError(f"bad message role {m.get('role')!r}")
        if not any(m["role"] == "user" for m in msgs):
            raise ValueError("request needs at least one user message")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        object.__setattr__(self, "messages", msgs)


@dataclass(frozen=True)
class GenerationResult:
    text: str
    backend_id: str
    latency_ms: int = 0


class GenerationBackend(Protocol):
    backend_id: str

    def generate(self, req: GenerationRequest) -> GenerationResult: ...


class MockBackend:
    """Canned completions keyed by ``messages_hash``; optional default reply."""

    def __init__(self, canned: Mapping[str, str] | None = None, default: str | None = None, backend_id: str = "mock"):
        self.canned = dict(canned or {})
        self.default = default
        self.backend_id = backend_id
        self.calls: list[GenerationRequest] = []
        self._lock = threading.Lock()

    def generate(self, req: GenerationRequest) -> GenerationResult:
        with self._lock:
            self.calls.append(req)
        key = messages_hash(req.messages)
        if key in self.canned:
            return GenerationResult(self.canned[key], self.backend_id)
        if self.default is not None:
            return GenerationResult(self.default, self.backend_id)
        raise BackendError(f"{self.backend_id}: no canned completion for messages {key[:12]}")

    @classmethod
    def from_file(cls, path: str | Path) -> "MockBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data.get("canned", {}), data.get("default"), backend_id=f"mock:{Path(path).name}")


def read_transcript(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "messages" not in rec or "completion" not in rec:
                raise ValueError(f"{path}:{lineno}: transcript record needs 'messages' and 'completion'")
            records.append(rec)
    return records


def write_transcript(path: str | Path, records: Sequence[Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


class TranscriptBackend(MockBackend):
    """Replays a JSONL transcript of ``{"messages": [...], "completion": "..."}`` records."""

    def __init__(self, path: str | Path):
        canned = {messages_hash(r["messages"]): r["completion"] for r in read_transcript(path)}
        super().__init__(canned, None, backend_id=f"transcript:{Path(path).name}")


class RecordingBackend:
    """Wraps a live backend and keeps every exchange for ``write_transcript``."""

    def __init__(self, inner: GenerationBackend):
        self.inner = inner
        self.backend_id = inner.backend_id
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def generate(self, req: GenerationRequest) -> GenerationResult:
        result = self.inner.generate(req)
        with self._lock:
            self.records.append({"messages": list(req.messages), "completion": result.text})
        return result


def _transient_status(status: int) -> bool:
    return status == 408 or status == 429 or status >= 500


@dataclass
class HttpConfig:
    endpoint: str
    model: str = ""
    api_key_header: str = "Authorization"
    api_key_env: str = "EHRQA_API_KEY"
    api_key_prefix: str = "Bearer "
    retries: int = 3
    backoff: float = 0.5
    timeout: float = 60.0
    concurrency: int = 4

    def headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers[self.api_key_header] = f"{self.api_key_prefix}{key}"
        return headers


def post_json_with_retry(cfg: HttpConfig, url: str, payload: dict, session: requests.Session | None = None) -> dict:
    """POST ``payload``; retry connection errors, 408/429 and 5xx with exponential backoff."""
    http = session or requests
    last: Exception | None = None
    for attempt in range(cfg.retries + 1):
        if attempt:
            time.sleep(cfg.backoff * 2 ** (attempt - 1))
        try:
            resp = http.post(url, json=payload, headers=cfg.headers(), timeout=cfg.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last = BackendConnectionError(f"cannot reach {url}: {exc}")
            log.warning("attempt %d/%d to %s failed: %s", attempt + 1, cfg.retries + 1, url, exc)
            continue
        if resp.status_code == 200:
            try:
                return resp.json()
            except ValueError:
                raise BackendError(f"{url} returned non-JSON body: {resp.text[:200]}") from None
        if not _transient_status(resp.status_code):
            raise BackendStatusError(resp.status_code, resp.text)
        last = BackendStatusError(resp.status_code, resp.text)
        log.warning("attempt %d/%d to %s got HTTP %d", attempt + 1, cfg.retries + 1, url, resp.status_code)
    if cfg.retries == 0 and last is not None:
        raise last
    raise RetryExhaustedError(f"retry budget exhausted after {cfg.retries + 1} attempts: {last}") from last


class ChatCompletionsBackend:
    def __init__(self, cfg: HttpConfig):
        self.cfg = cfg
        self.backend_id = f"http:{cfg.model or 'default'}"
        self._gate = threading.BoundedSemaphore(max(1, cfg.concurrency))
        self._session = requests.Session()

    @property
    def url(self) -> str:
        base = self.cfg.endpoint.rstrip("/")
        if base.endswith("/chat/completions"):
            return base
        if not base.endswith("/v1"):
            base += "/v1"
        return base + "/chat/completions"

    def payload(self, req: GenerationRequest) -> dict:
        body = {
            "model": self.cfg.model,
            "messages": [{"role": m["role"], "content": m["content"]} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.seed is not None:
            body["seed"] = req.seed
        return body

    def generate(self, req: GenerationRequest) -> GenerationResult:
        start = time.monotonic()
        with self._gate:
            data = post_json_with_retry(self.cfg, self.url, self.payload(req), self._session)
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            raise BackendError(f"unexpected completion payload: {json.dumps(data)[:200]}") from None
        return GenerationResult(text, self.backend_id, int((time.monotonic() - start) * 1000))


@dataclass
class Generator:
    """Renders a template against bindings and asks a backend for a completion."""

    backend: GenerationBackend
    max_tokens: int = 512
    temperature: float = 0.0
    seed: int | None = None
    _templates: dict = field(default_factory=dict, repr=False)

    def template(self, name: str) -> PromptTemplate:
        if name not in self._templates:
            self._templates[name] = load_template(name)
        return self._templates[name]

    def complete(self, template: str | PromptTemplate, bindings: Mapping[str, str]) -> str:
        t = self.template(template) if isinstance(template, str) else template
        req = GenerationRequest(
            tuple(render_template(t, bindings)), self.max_tokens, self.temperature, self.seed
        )
        return self.backend.generate(req).text
