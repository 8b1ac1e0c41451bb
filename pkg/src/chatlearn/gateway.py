"""Model access: prompt templates, rendering, completion, embeddings.

All model traffic goes through a Gateway so the rest of the system never
touches a vendor SDK. Two providers exist: an HTTP provider speaking the
common chat-completions/embeddings JSON shapes, and a scriptable mock used
for tests and offline replay. Mock embeddings are unit vectors seeded from
a hash of the text, so they are deterministic across runs and platforms.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional

import httpx
import numpy as np

from .errors import (
    EmptyTextError,
    InvalidConfigError,
    MissingPlaceholderError,
    ProviderTransportError,
    ProviderUnavailableError,
    ZeroVectorError,
)

DEFAULT_TIMEOUT_S = 15.0
DEFAULT_MAX_IN_FLIGHT = 8
MOCK_EMBED_DIM = 64


class TemplateName(str, Enum):
    TRANSLATE = "translate"
    EXPLAIN = "explain"
    EXTRACT = "extract"
    MAP = "map"


# The context slot may carry an inline default, written [CONTEXT or 'N/A'].
_PLACEHOLDER_RE = re.compile(
    r"\[(USER_INPUT|NATIVE_LANGUAGE|TARGET_LANGUAGE|PHRASE|TRANSLATED_TEXT"
    r"|LIST_OF_PHRASES|CONTEXT or 'N/A'|CONTEXT)\]"
)

TRANSLATE_BODY = """\
Instruction: Translate the user's message (in [NATIVE_LANGUAGE]) into fluent [TARGET_LANGUAGE].
Requirement:
- Consider the given context only to understand the situation.
- Do not include or translate the context itself in the output.
- Ensure the translation is natural and fluent.
Input:
Context: [CONTEXT]
User Message: [USER_INPUT]
Output format: {"translated_text": "..."}"""

EXPLAIN_BODY = """\
Background: You're an [TARGET_LANGUAGE] explainer for a non-native speaker. The user is a non-native speaker.
Requirement: Given the phrase: "[PHRASE]", explain it in [TARGET_LANGUAGE]. Then, try to slightly help the user internalize it. For example, you can give another daily example (in [NATIVE_LANGUAGE]) to demonstrate how to use the important expression in the phrase, or you can use other flexible ways to help.
- Be concise, because the user is in a real-time communication context.
- Context (if any): [CONTEXT or 'N/A'].
- Note: The context is only for understanding the situation and should NOT be included in the output.
- Explanations must be simple, easy to understand, and in plain text (not markdown).
Output format: Plain text explanation in [TARGET_LANGUAGE], with a short supporting example in [NATIVE_LANGUAGE]."""

EXTRACT_BODY = """\
Instruction: You are a text analyzer. The user is a non-native speaker of [TARGET_LANGUAGE]; His / Her native language is [NATIVE_LANGUAGE]. The user input may contain both [NATIVE_LANGUAGE] and [TARGET_LANGUAGE].
Requirement:
- Extract only meaningful [NATIVE_LANGUAGE] phrases that should be explained to a learner of [TARGET_LANGUAGE].
- Ignore URLs, numbers, emoji, and all non-Chinese characters.
- Deduplicate phrases; do not add explanations.
Input:
User input: [USER_INPUT]
Output format: ["短语1", "短语2"]."""

MAP_BODY = """\
Instruction: For each [NATIVE_LANGUAGE] phrase, find the corresponding exact [TARGET_LANGUAGE] phrase(s) in the translated sentence.
Requirement:
- Return results in the same order as the input Chinese phrases.
- Each item must be the exact phrase from the translated sentence.
- If a phrase is not found, return an empty string.
Input:
Original [NATIVE_LANGUAGE] phrases: [LIST_OF_PHRASES]
Translated sentence: "[TRANSLATED_TEXT]"
Output format: ["baby", "happy"]"""


@dataclass(frozen=True)
class PromptTemplate:
    name: TemplateName
    body: str

    @property
    def placeholders(self) -> frozenset[str]:
        keys = set()
        for match in _PLACEHOLDER_RE.finditer(self.body):
            key = match.group(1)
            keys.add("CONTEXT" if key.startswith("CONTEXT") else key)
        return frozenset(keys)


TEMPLATES: dict[TemplateName, PromptTemplate] = {
    TemplateName.TRANSLATE: PromptTemplate(TemplateName.TRANSLATE, TRANSLATE_BODY),
    TemplateName.EXPLAIN: PromptTemplate(TemplateName.EXPLAIN, EXPLAIN_BODY),
    TemplateName.EXTRACT: PromptTemplate(TemplateName.EXTRACT, EXTRACT_BODY),
    TemplateName.MAP: PromptTemplate(TemplateName.MAP, MAP_BODY),
}


def render(template: PromptTemplate | TemplateName, bindings: Mapping[str, str]) -> str:
    """Substitute placeholder values into a template in a single pass.

    CONTEXT defaults to "N/A" when unbound; every other placeholder must be
    bound. Binding keys the template does not use are rejected to catch
    caller mistakes. Substituted values are never re-scanned, so user text
    containing bracketed tokens stays literal.
    """
    if isinstance(template, TemplateName):
        template = TEMPLATES[template]
    allowed = template.placeholders
    extra = set(bindings) - allowed
    if extra:
        raise MissingPlaceholderError(
            f"bindings {sorted(extra)} not used by template {template.name.value}"
        )
    missing = allowed - set(bindings) - {"CONTEXT"}
    if missing:
        raise MissingPlaceholderError(
            f"template {template.name.value} requires bindings {sorted(missing)}"
        )
    for key, value in bindings.items():
        if not isinstance(value, str):
            raise MissingPlaceholderError(f"binding {key} must be a string")

    def sub(match: re.Match[str]) -> str:
        key = match.group(1)
        if key.startswith("CONTEXT"):
            return bindings.get("CONTEXT", "N/A")
        return bindings[key]

    return _PLACEHOLDER_RE.sub(sub, template.body)


def extract_json(text: str) -> Any:
    """Return the first balanced JSON object or array inside ``text``.

    Tolerates markdown code fences and surrounding prose. Returns None when
    no parseable JSON value is present.
    """
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in "{[":
            try:
                value, _ = decoder.raw_decode(text, i)
            except ValueError:
                continue
            return value
    return None


@dataclass(frozen=True)
class ProviderResponse:
    """A completion plus whatever JSON could be recovered from it."""

    raw_text: str
    parsed: Any
    latency_ms: float


class Provider:
    """Interface for model backends."""

    name = "base"

    def complete_raw(self, prompt: str, params: Optional[Mapping[str, Any]] = None) -> str:
        raise NotImplementedError

    def embed_raw(self, text: str) -> np.ndarray:
        raise NotImplementedError


def mock_embedding(text: str, dim: int = MOCK_EMBED_DIM) -> np.ndarray:
    """Deterministic unit vector seeded from a content hash of ``text``."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "big")
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(dim)
    norm = np.linalg.norm(vec)
    if norm == 0.0:  # unreachable with a gaussian draw, kept as a guard
        raise ZeroVectorError("degenerate mock embedding")
    return vec / norm


class MockProvider(Provider):
    """Scripted provider for tests and offline replay.

    Rules are dictionaries with a ``match`` substring and the ``reply`` to
    return; the first rule whose match occurs in the prompt wins, and an
    empty match string matches everything. A rule may carry ``fail_times``
    to simulate transport failures on its first N hits.
    """

    name = "mock"

    def __init__(self, rules: list[dict], dim: int = MOCK_EMBED_DIM):
        for idx, rule in enumerate(rules):
            if not isinstance(rule.get("match"), str) or not isinstance(rule.get("reply"), str):
                raise InvalidConfigError(f"mock rule {idx} needs string 'match' and 'reply'")
        self._rules = [dict(rule) for rule in rules]
        self._fails_left = [int(rule.get("fail_times", 0)) for rule in rules]
        self.dim = dim
        self._lock = threading.Lock()

    @classmethod
    def from_jsonl(cls, path: Path | str, dim: int = MOCK_EMBED_DIM) -> "MockProvider":
        rules = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rules.append(json.loads(line))
        return cls(rules, dim=dim)

    def complete_raw(self, prompt: str, params: Optional[Mapping[str, Any]] = None) -> str:
        with self._lock:
            for idx, rule in enumerate(self._rules):
                if rule["match"] in prompt:
                    if self._fails_left[idx] > 0:
                        self._fails_left[idx] -= 1
                        raise ProviderTransportError(
                            f"scripted failure for rule {idx}"
                        )
                    return rule["reply"]
        raise ProviderTransportError("no mock rule matched the prompt")

    def embed_raw(self, text: str) -> np.ndarray:
        return mock_embedding(text, self.dim)


class HttpProvider(Provider):
    """Provider speaking the common chat-completions / embeddings HTTP shapes."""

    name = "http"

    def __init__(
        self,
        base_url: str,
        chat_model: str,
        embed_model: str,
        api_key: Optional[str] = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
    ):
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(base_url=base_url, headers=headers, timeout=timeout_s)
        self.chat_model = chat_model
        self.embed_model = embed_model

    def complete_raw(self, prompt: str, params: Optional[Mapping[str, Any]] = None) -> str:
        body: dict[str, Any] = {
            "model": self.chat_model,
            "messages": [{"role": "user", "content": prompt}],
        }
        if params:
            body.update(params)
        try:
            resp = self._client.post("/chat/completions", json=body)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ProviderTransportError(f"chat call failed: {exc}") from exc

    def embed_raw(self, text: str) -> np.ndarray:
        try:
            resp = self._client.post(
                "/embeddings", json={"model": self.embed_model, "input": text}
            )
            resp.raise_for_status()
            return np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float64)
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ProviderTransportError(f"embedding call failed: {exc}") from exc

    def close(self) -> None:
        self._client.close()


class Gateway:
    """Serializes model access: bounded concurrency, one retry, JSON recovery."""

    def __init__(
        self,
        provider: Provider,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    ):
        if max_in_flight < 1:
            raise InvalidConfigError("max_in_flight must be >= 1")
        self.provider = provider
        self._sem = threading.BoundedSemaphore(max_in_flight)

    def complete(
        self,
        prompt: str,
        params: Optional[Mapping[str, Any]] = None,
        expect: Optional[str] = None,
    ) -> ProviderResponse:
        """Run one completion, retrying a failed transport exactly once.

        ``expect`` narrows the parsed payload: "object" keeps only a JSON
        object, "array" only a JSON array; anything else found is dropped
        to None so callers see a parse miss rather than a surprise type.
        """
        start = time.perf_counter()
        with self._sem:
            try:
                raw = self.provider.complete_raw(prompt, params)
            except ProviderTransportError:
                try:
                    raw = self.provider.complete_raw(prompt, params)
                except ProviderTransportError as exc:
                    raise ProviderUnavailableError(
                        f"model call failed twice: {exc}"
                    ) from exc
        latency_ms = (time.perf_counter() - start) * 1000.0
        parsed = extract_json(raw)
        if expect == "object" and not isinstance(parsed, dict):
            parsed = None
        elif expect == "array" and not isinstance(parsed, list):
            parsed = None
        return ProviderResponse(raw_text=raw, parsed=parsed, latency_ms=latency_ms)

    def embed(self, text: str) -> np.ndarray:
        """Embed non-empty text as a 1-D float vector."""
        if not text.strip():
            raise EmptyTextError("cannot embed empty text")
        with self._sem:
            vec = self.provider.embed_raw(text)
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise ZeroVectorError("provider returned a malformed embedding")
        if not np.all(np.isfinite(vec)) or float(np.linalg.norm(vec)) == 0.0:
            raise ZeroVectorError("provider returned a degenerate embedding")
        return vec
