"""Uniform client layer for text-generation backends.

Provides prompt rendering, completions with token log-probabilities, a
content-addressed completion cache, a deterministic mock backend for tests
and synthetic runs, and an HTTP backend for local inference servers.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .errors import GatewayError

logger = logging.getLogger(__name__)

LLM_URL_ENV = "EVIDENT_LLM_URL"

_PLACEHOLDER_RE = re.compile(r"<input>|<query>")
_ANSWER_KINDS = ("binary", "freeform", "list")


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt body with ``<input>`` and optional ``<query>`` placeholders."""

    template_id: str
    body: str
    expected_answer_kind: str

    def __post_init__(self) -> None:
        if self.expected_answer_kind not in _ANSWER_KINDS:
            raise ValueError(f"unknown answer kind {self.expected_answer_kind!r}")
        if "<input>" not in self.body:
            raise ValueError(f"template {self.template_id!r} has no <input> placeholder")
        if self.expected_answer_kind == "binary" and "-Yes -No" not in self.body:
            raise ValueError(f"binary template {self.template_id!r} must enumerate '-Yes -No'")

    @property
    def wants_query(self) -> bool:
        return "<query>" in self.body


@dataclass(frozen=True)
class Completion:
    """Decoded backend output plus optional per-token natural-log probabilities."""

    text: str
    token_logprobs: tuple[float, ...] | None
    backend_id: str

    def __post_init__(self) -> None:
        if self.token_logprobs is not None:
            if any(lp > 0 for lp in self.token_logprobs):
                raise ValueError("token log-probabilities must be <= 0")


def render(template: PromptTemplate, input_text: str, query: str | None = None) -> str:
    """Substitute placeholders verbatim; everything else is left untouched.

    ``query`` must be supplied iff the template contains ``<query>``.
    Substitution is single-pass, so placeholder-like text inside the
    arguments is never re-expanded.
    """
    if template.wants_query and query is None:
        raise ValueError(f"template {template.template_id!r} requires a query")
    if not template.wants_query and query is not None:
        raise ValueError(f"template {template.template_id!r} takes no query")

    values = {"<input>": input_text, "<query>": query if query is not None else ""}
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(0)], template.body)


# Punctuation stripped from the first token during binary parsing.
_TOKEN_PUNCT = ".,;:!?\"'()[]{}<>-*"


def parse_binary(text: str) -> bool:
    """True iff the first non-whitespace token equals 'yes', case-insensitively.

    Leading/trailing punctuation on the token is ignored so 'Yes.', 'yes,'
    and '"Yes"' all parse affirmative; anything else is negative.
    """
    stripped = text.strip()
    if not stripped:
        return False
    first = stripped.split()[0].strip(_TOKEN_PUNCT)
    return first.casefold() == "yes"


def length_normalized_logprob(completion: Completion) -> float:
    """Mean of the completion's token log-probabilities."""
    if not completion.token_logprobs:
        raise ValueError("completion has no token log-probabilities")
    return sum(completion.token_logprobs) / len(completion.token_logprobs)


class Backend(Protocol):
    backend_id: str

    def complete(self, prompt: str) -> Completion: ...


@dataclass(frozen=True)
class FixtureRule:
    """One mock-backend rule.

    match kinds:
      exact          prompt == pattern
      substring      pattern occurs in prompt
      substring_all  every pattern in the list occurs in the prompt
    """

    match: str
    pattern: str | tuple[str, ...]
    response: str
    token_logprobs: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.match not in ("exact", "substring", "substring_all"):
            raise ValueError(f"unknown match kind {self.match!r}")
        if self.match == "substring_all" and isinstance(self.pattern, str):
            object.__setattr__(self, "pattern", (self.pattern,))

    def applies(self, prompt: str) -> bool:
        if self.match == "exact":
            return prompt == self.pattern
        if self.match == "substring":
            return str(self.pattern) in prompt
        return all(p in prompt for p in self.pattern)


class MockBackend:
    """Deterministic backend: first matching fixture rule wins, else a default.

    Pure function of (rules, default, prompt). Every prompt is appended to
    ``call_log`` so tests can assert gate/extract sequencing.
    """

    def __init__(
        self,
        rules: Sequence[FixtureRule] = (),
        default_response: str = "No",
        default_logprobs: Sequence[float] | None = None,
        backend_id: str = "mock",
    ) -> None:
        self.rules = list(rules)
        self.default_response = default_response
        self.default_logprobs = tuple(default_logprobs) if default_logprobs is not None else None
        self.backend_id = backend_id
        self.call_log: list[str] = []

    def complete(self, prompt: str) -> Completion:
        self.call_log.append(prompt)
        for rule in self.rules:
            if rule.applies(prompt):
                return self._completion(rule.response, rule.token_logprobs)
        return self._completion(self.default_response, self.default_logprobs)

    def _completion(self, text: str, logprobs: tuple[float, ...] | None) -> Completion:
        if not text:
            raise GatewayError(f"backend {self.backend_id!r} returned empty text")
        return Completion(text=text, token_logprobs=logprobs, backend_id=self.backend_id)


def load_fixture(path: str | Path) -> list[FixtureRule]:
    """Load mock fixture rules from a JSON list of rule objects."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise GatewayError(f"fixture file {path} must hold a JSON list")
    rules = []
    for i, entry in enumerate(raw):
        try:
            pattern = entry["pattern"]
            if isinstance(pattern, list):
                pattern = tuple(pattern)
            logprobs = entry.get("token_logprobs")
            rules.append(
                FixtureRule(
                    match=entry.get("match", "exact"),
                    pattern=pattern,
                    response=entry["response"],
                    token_logprobs=tuple(logprobs) if logprobs is not None else None,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise GatewayError(f"fixture file {path}, rule {i}: {exc}") from exc
    return rules


def save_fixture(rules: Sequence[FixtureRule], path: str | Path) -> None:
    records = []
    for r in rules:
        rec: dict = {"match": r.match, "pattern": list(r.pattern) if isinstance(r.pattern, tuple) else r.pattern, "response": r.response}
        if r.token_logprobs is not None:
            rec["token_logprobs"] = list(r.token_logprobs)
        records.append(rec)
    Path(path).write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")


class HTTPBackend:
    """Client for a minimal text-completion endpoint.

    POST {url}/complete with {"prompt": ..., "max_tokens": ...} and expect
    {"text": ..., "token_logprobs": [...]?} back. The URL defaults to the
    EVIDENT_LLM_URL environment variable.
    """

    def __init__(
        self,
        url: str | None = None,
        max_tokens: int = 64,
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ) -> None:
        url = url or os.environ.get(LLM_URL_ENV)
        if not url:
            raise GatewayError(f"no backend URL given and {LLM_URL_ENV} is unset")
        self.url = url.rstrip("/")
        self.max_tokens = max_tokens
        self.backend_id = f"http:{self.url}"
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, prompt: str) -> Completion:
        prompt_hash = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]
        try:
            resp = self._client.post(
                f"{self.url}/complete",
                json={"prompt": prompt, "max_tokens": self.max_tokens},
            )
            resp.raise_for_status()
            payload = resp.json()
        except httpx.HTTPError as exc:
            raise GatewayError(f"backend transport failure for prompt {prompt_hash}: {exc}") from exc
        text = payload.get("text", "")
        if not text:
            raise GatewayError(f"backend returned empty text for prompt {prompt_hash}")
        logprobs = payload.get("token_logprobs")
        return Completion(
            text=text,
            token_logprobs=tuple(logprobs) if logprobs is not None else None,
            backend_id=self.backend_id,
        )


class CachedBackend:
    """Content-addressed completion cache wrapped around another backend.

    The cache key is the SHA-256 of (backend_id, prompt); a hit returns the
    stored completion without touching the inner backend. Corrupt entries
    are treated as misses, recomputed, and rewritten.
    """

    def __init__(self, inner: Backend, cache_dir: str | Path) -> None:
        self.inner = inner
        self.backend_id = inner.backend_id
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _key(self, prompt: str) -> Path:
        digest = hashlib.sha256(f"{self.backend_id}\x00{prompt}".encode("utf-8")).hexdigest()
        return self.cache_dir / f"{digest}.json"

    def complete(self, prompt: str) -> Completion:
        path = self._key(prompt)
        if path.exists():
            try:
                entry = json.loads(path.read_text(encoding="utf-8"))
                logprobs = entry["token_logprobs"]
                return Completion(
                    text=entry["text"],
                    token_logprobs=tuple(logprobs) if logprobs is not None else None,
                    backend_id=entry["backend_id"],
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                logger.warning("corrupt cache entry %s (%s); recomputing", path.name, exc)
        completion = self.inner.complete(prompt)
        with self._lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(
                json.dumps(
                    {
                        "text": completion.text,
                        "token_logprobs": list(completion.token_logprobs)
                        if completion.token_logprobs is not None
                        else None,
                        "backend_id": completion.backend_id,
                    }
                ),
                encoding="utf-8",
            )
            tmp.replace(path)
        return completion
