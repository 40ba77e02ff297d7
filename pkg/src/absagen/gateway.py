"""Prompt templates, completion providers, and LLM output parsing.

One completion interface covers three provider modes: a live HTTPS
chat-completion endpoint, a deterministic replay provider backed by a
fixture file of (request digest, response) pairs, and a recording wrapper
that builds such fixtures. Digests are stable across runs, so fixtures can
be committed and replayed byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence, TypeVar

import requests

log = logging.getLogger(__name__)

GENERATION_TEMPERATURE = 0.7
JUDGE_TEMPERATURE = 0.0
RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})
LIST_RETRY_SUFFIX = "Answer only with a list."

T = TypeVar("T")

_SLOT_RE = re.compile(r"\{([a-z][a-z-]*)\}")
_LINE_ITEM_RE = re.compile(r"^\s*(?:-|\d+[.)])\s*(.+?)\s*$")


class GatewayError(Exception):
    """Base class for completion-gateway failures."""


class TemplateError(GatewayError):
    pass


class OutputFormatError(GatewayError):
    """An LLM response did not parse; carries the raw text."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class TransportError(GatewayError):
    pass


class FixtureLookupError(GatewayError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    """A named prompt body with {slot} markers.

    The declared slots are exactly the markers referenced in the body;
    rendering requires a value for each of them.
    """

    name: str
    body: str

    @property
    def slots(self) -> frozenset[str]:
        return frozenset(_SLOT_RE.findall(self.body))

    def render(self, slots: Mapping[str, str]) -> str:
        declared = self.slots
        for slot in sorted(declared):
            if slot not in slots:
                raise TemplateError(f"missing slot: {slot}")
        rendered = _SLOT_RE.sub(lambda m: str(slots[m.group(1)]), self.body)
        residual = _SLOT_RE.search(rendered)
        if residual and residual.group(1) in declared:
            raise TemplateError(
                f"slot marker {{{residual.group(1)}}} survived rendering"
            )
        return rendered


def load_template(name: str) -> PromptTemplate:
    """Load a bundled prompt template by name (`resources/prompts/<name>.txt`)."""
    body = (
        resources.files("absagen.resources.prompts")
        .joinpath(f"{name}.txt")
        .read_text(encoding="utf-8")
    )
    return PromptTemplate(name=name, body=body)


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float = GENERATION_TEMPERATURE
    max_tokens: int = 256
    seed: int | None = None
    template: str = ""  # originating template name; part of the digest

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


def request_digest(request: CompletionRequest) -> str:
    """Stable identity of a request for record/replay.

    The seed is deliberately excluded so recorded fixtures survive seed
    plumbing changes.
    """
    payload = json.dumps(
        {
            "template": request.template,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class Fixture:
    """Ordered (digest, response) pairs; lookups are by digest."""

    entries: list[tuple[str, str]]

    def __post_init__(self) -> None:
        self._index: dict[str, str] = {}
        for digest, response in self.entries:
            if digest in self._index:
                raise ValueError(f"duplicate fixture digest: {digest}")
            self._index[digest] = response

    def lookup(self, digest: str) -> str:
        try:
            return self._index[digest]
        except KeyError:
            raise FixtureLookupError(f"no fixture entry for digest {digest}") from None

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def load(cls, path: str | Path) -> "Fixture":
        entries = []
        with Path(path).open(encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    entries.append((record["digest"], record["response"]))
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad fixture line ({exc})") from exc
        return cls(entries)

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as handle:
            for digest, response in self.entries:
                handle.write(
                    json.dumps(
                        {"digest": digest, "response": response}, ensure_ascii=False
                    )
                )
                handle.write("\n")


class CompletionProvider(Protocol):
    def complete(self, request: CompletionRequest) -> str: ...


class ReplayProvider:
    """Serve responses from a fixture; unknown digests are an error."""

    def __init__(self, fixture: Fixture):
        self.fixture = fixture

    def complete(self, request: CompletionRequest) -> str:
        return self.fixture.lookup(request_digest(request))


class RecordingProvider:
    """Pass requests through and append unseen (digest, response) pairs."""

    def __init__(self, inner: CompletionProvider, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()
        self._seen: set[str] = set()
        if self.path.exists():
            for digest, _ in Fixture.load(self.path).entries:
                self._seen.add(digest)

    def complete(self, request: CompletionRequest) -> str:
        response = self.inner.complete(request)
        digest = request_digest(request)
        with self._lock:
            if digest not in self._seen:
                self._seen.add(digest)
                with self.path.open("a", encoding="utf-8") as handle:
                    handle.write(
                        json.dumps(
                            {"digest": digest, "response": response},
                            ensure_ascii=False,
                        )
                    )
                    handle.write("\n")
        return response


@dataclass
class ProviderSettings:
    """Live endpoint configuration; the credential stays in the environment."""

    endpoint: str
    model: str
    api_key_env: str = "ABSAGEN_API_KEY"
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    backoff_cap: float = 30.0

    @classmethod
    def from_file(cls, path: str | Path) -> "ProviderSettings":
        record = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**record)


Transport = Callable[[str, dict, dict, float], tuple[int, str]]


def _requests_transport(
    url: str, headers: dict, payload: dict, timeout: float
) -> tuple[int, str]:
    response = requests.post(url, headers=headers, json=payload, timeout=timeout)
    return response.status_code, response.text


class HttpProvider:
    """Chat-completion client with exponential backoff on transient failures."""

    def __init__(
        self,
        settings: ProviderSettings,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.settings = settings
        self._transport = transport or _requests_transport
        self._sleep = sleep

    def complete(self, request: CompletionRequest) -> str:
        key = os.environ.get(self.settings.api_key_env)
        if not key:
            raise TransportError(
                f"credential environment variable {self.settings.api_key_env} is not set"
            )
        headers = {"Authorization": f"Bearer {key}"}
        payload: dict = {
            "model": self.settings.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        last_error = "no attempt made"
        for attempt in range(self.settings.max_retries + 1):
            try:
                status, body = self._transport(
                    self.settings.endpoint, headers, payload, self.settings.timeout
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                status, body = None, ""
                last_error = f"connection failure: {exc}"
            if status == 200:
                return self._extract_text(body)
            if status is not None:
                last_error = f"HTTP {status}: {body[:200]}"
                if status not in RETRYABLE_STATUSES:
                    raise TransportError(last_error)
            if attempt < self.settings.max_retries:
                delay = min(
                    self.settings.backoff_cap,
                    self.settings.backoff_base * (2**attempt),
                )
                self._sleep(delay)
        raise TransportError(f"retries exhausted; last error: {last_error}")

    @staticmethod
    def _extract_text(body: str) -> str:
        try:
            record = json.loads(body)
            return record["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc


class Gateway:
    """Bounded-concurrency front door to a completion provider."""

    def __init__(self, provider: CompletionProvider, concurrency: int = 4):
        if concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        self.provider = provider
        self.concurrency = concurrency
        self._semaphore = threading.BoundedSemaphore(concurrency)

    def complete(self, request: CompletionRequest) -> str:
        with self._semaphore:
            return self.provider.complete(request)

    def complete_many(self, requests_: Sequence[CompletionRequest]) -> list[str]:
        """Complete a batch concurrently; results keep the input order."""
        return self.run_all([lambda r=r: self.complete(r) for r in requests_])

    def run_all(self, tasks: Sequence[Callable[[], T]]) -> list[T]:
        if not tasks:
            return []
        if len(tasks) == 1 or self.concurrency == 1:
            return [task() for task in tasks]
        with ThreadPoolExecutor(max_workers=min(self.concurrency, len(tasks))) as pool:
            futures = [pool.submit(task) for task in tasks]
            return [f.result() for f in futures]

    def complete_parsed(
        self,
        request: CompletionRequest,
        parser: Callable[[str], T],
        retry_suffix: str,
    ) -> T:
        """Complete and parse, re-prompting once with a format reminder."""
        text = self.complete(request)
        try:
            return parser(text)
        except OutputFormatError:
            log.debug("re-prompting after unparseable response: %r", text[:80])
            retry = replace(request, prompt=request.prompt + "\n" + retry_suffix)
            return parser(self.complete(retry))


def _parse_bracketed(text: str) -> list[str] | None:
    start = text.find("[")
    end = text.rfind("]")
    if start < 0 or end <= start:
        return None
    try:
        value = json.loads(text[start : end + 1])
    except json.JSONDecodeError:
        return None
    if not isinstance(value, list):
        return None
    return [item for item in value if isinstance(item, str)]


def parse_list(text: str) -> list[str]:
    """Parse a list reply: a JSON-style array or "-"/"N." prefixed lines.

    Items are trimmed; empties are dropped. No parseable items is an error
    so the caller can re-prompt.
    """
    items = _parse_bracketed(text)
    if items is None:
        items = [m.group(1) for m in map(_LINE_ITEM_RE.match, text.splitlines()) if m]
    items = [item.strip().strip("\"'").strip() for item in items]
    items = [item for item in items if item]
    if not items:
        raise OutputFormatError("no parseable list items", raw=text)
    return items


def parse_sentence(text: str) -> str:
    """Take the first non-empty line, shedding labels, bullets, and quotes."""
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        line = re.sub(r"^(?:Sentence|Output)\s*:\s*", "", line, flags=re.IGNORECASE)
        line = re.sub(r"^(?:-|\d+[.)])\s*", "", line)
        line = line.strip().strip("\"'").strip()
        if line:
            return line
    raise OutputFormatError("no sentence in response", raw=text)


def parse_yes_no_pair(text: str) -> tuple[bool, bool]:
    """Parse the first two yes/no tokens of a verdict reply."""
    tokens = re.findall(r"\b(yes|no)\b", text.lower())
    if len(tokens) < 2:
        raise OutputFormatError("expected two yes/no answers", raw=text)
    return (tokens[0] == "yes", tokens[1] == "yes")


def parse_score_triple(text: str) -> tuple[int, int, int]:
    """Parse three integers in 1..10 from a scoring reply."""
    numbers = [int(n) for n in re.findall(r"\d+", text)]
    if len(numbers) < 3:
        raise OutputFormatError("expected three integer scores", raw=text)
    scores = numbers[:3]
    for score in scores:
        if not 1 <= score <= 10:
            raise OutputFormatError(f"score {score} outside 1..10", raw=text)
    return (scores[0], scores[1], scores[2])
