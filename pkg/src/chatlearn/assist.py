"""Language assistance for the non-native speaker.

Three capabilities live here:

* full comprehension: translate a received message into the user's first
  language (available in every condition);
* the expression explorer: explain a highlighted span of a received
  message and save it for later review;
* the expression builder: translate a mixed-language draft, and in the
  full condition extract the first-language phrases, map them onto spans
  of the translation, and save those spans for review.

Model failures inside the extract/map stages degrade the builder to plain
translation rather than failing the send.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .core import Condition, Sender, Session
from .errors import (
    EmptyTextError,
    FeatureDisabledError,
    InvalidRequestError,
    ProviderUnavailableError,
    SelectionNotFoundError,
    StageParseError,
)
from .gateway import Gateway, TemplateName, render
from .language import detect_l1_segments, l1_token_count, token_count
from .metrics import EventKind, EventLog
from .review import CaptureSource, ReviewStore


@dataclass(frozen=True)
class TranslationResult:
    message_id: int
    translated_text: str
    context_used: tuple[int, ...]
    degraded: bool

    def to_json_dict(self) -> dict:
        return {
            "message_id": self.message_id,
            "translated_text": self.translated_text,
            "context_used": list(self.context_used),
            "degraded": self.degraded,
        }


@dataclass(frozen=True)
class ExplanationResult:
    message_id: int
    phrase: str
    explanation_text: str
    entry_id: int
    context_used: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {
            "message_id": self.message_id,
            "phrase": self.phrase,
            "explanation_text": self.explanation_text,
            "entry_id": self.entry_id,
            "context_used": list(self.context_used),
        }


@dataclass(frozen=True)
class ExtractionMapping:
    """Ordered (l1_phrase, l2_span) pairs over one translated draft.

    Order follows the extraction stage. A span is either a verbatim
    substring of translated_text or the empty string; unmappable phrases
    are kept with an empty span, never dropped.
    """

    translated_text: str
    pairs: tuple[tuple[str, str], ...]

    def to_json_dict(self) -> dict:
        return {
            "translated_text": self.translated_text,
            "pairs": [[l1, l2] for l1, l2 in self.pairs],
        }


@dataclass(frozen=True)
class BuildResult:
    draft: str
    translated_text: str
    mapping: Optional[ExtractionMapping]
    capture_entry_ids: tuple[int, ...]
    l1_tokens: int
    total_tokens: int
    context_used: tuple[int, ...]
    degraded: bool

    def to_json_dict(self) -> dict:
        return {
            "draft": self.draft,
            "translated_text": self.translated_text,
            "mapping": self.mapping.to_json_dict() if self.mapping else None,
            "capture_entry_ids": list(self.capture_entry_ids),
            "l1_tokens": self.l1_tokens,
            "total_tokens": self.total_tokens,
            "context_used": list(self.context_used),
            "degraded": self.degraded,
        }


class AssistEngine:
    """Per-session assistance, bound to the session's store and event log."""

    def __init__(
        self,
        session: Session,
        gateway: Gateway,
        review_store: ReviewStore,
        event_log: EventLog,
    ):
        self.session = session
        self.gateway = gateway
        self.store = review_store
        self.events = event_log
        self._full_cache: dict[int, TranslationResult] = {}

    # -- helpers ----------------------------------------------------------

    def _context(self) -> tuple[str, tuple[int, ...]]:
        window = self.session.history_window()
        return "\n".join(
            f"{m.sender.value}: {m.display_text}" for m in window
        ), tuple(m.id for m in window)

    def _require_chatlearn(self, feature: str) -> None:
        if self.session.config.condition != Condition.CHATLEARN:
            raise FeatureDisabledError(f"{feature} is disabled in the baseline condition")

    def _translate(
        self, text: str, source_language: str, output_language: str, context: str
    ) -> tuple[str, bool]:
        """Run the translation prompt; fall back to raw output on parse miss."""
        bindings = {
            "NATIVE_LANGUAGE": source_language,
            "TARGET_LANGUAGE": output_language,
            "USER_INPUT": text,
        }
        if context:
            bindings["CONTEXT"] = context
        prompt = render(TemplateName.TRANSLATE, bindings)
        resp = self.gateway.complete(prompt, expect="object")
        parsed = resp.parsed
        if isinstance(parsed, dict):
            out = parsed.get("translated_text")
            if isinstance(out, str) and out.strip():
                return out, False
        self.events.append(
            EventKind.DEGRADATION,
            {"reason": "translate-parse-failed", "raw_text": resp.raw_text},
        )
        return resp.raw_text, True

    # -- full comprehension -------------------------------------------------

    def comprehend_full(self, message_id: int) -> TranslationResult:
        """Translate a received message into the user's first language.

        Results are cached per message: asking again returns an equal
        result without a second model call, but still logs the use.
        """
        message = self.session.get_message(message_id)
        if message.sender != Sender.NS:
            raise InvalidRequestError("comprehension applies to received messages")
        cached = self._full_cache.get(message_id)
        if cached is None:
            context, context_used = self._context()
            cfg = self.session.config
            translated, degraded = self._translate(
                message.display_text,
                source_language=cfg.target_language,
                output_language=cfg.native_language,
                context=context,
            )
            result = TranslationResult(
                message_id=message_id,
                translated_text=translated,
                context_used=context_used,
                degraded=degraded,
            )
            self._full_cache[message_id] = result
        else:
            result = cached
        self.events.append(
            EventKind.FULL_COMPREHENSION,
            {
                "message_id": message_id,
                "translated_text": result.translated_text,
                "context_used": list(result.context_used),
                "cached": cached is not None,
            },
        )
        return result

    def restore_comprehension_cache(self, translated_events: list[dict]) -> None:
        """Refill the per-message cache from persisted FullComprehension payloads."""
        for payload in translated_events:
            mid = payload["message_id"]
            if mid not in self._full_cache:
                self._full_cache[mid] = TranslationResult(
                    message_id=mid,
                    translated_text=payload["translated_text"],
                    context_used=tuple(payload.get("context_used", ())),
                    degraded=False,
                )

    # -- expression explorer --------------------------------------------------

    def explore(self, message_id: int, selection: str) -> ExplanationResult:
        """Explain a highlighted span of a received message and save it."""
        self._require_chatlearn("expression explorer")
        message = self.session.get_message(message_id)
        if message.sender != Sender.NS:
            raise InvalidRequestError("the explorer applies to received messages")
        if not selection.strip():
            raise EmptyTextError("selection must be non-empty")
        if selection not in message.display_text:
            raise SelectionNotFoundError(
                "selection is not a substring of the message text"
            )
        context, context_used = self._context()
        cfg = self.session.config
        # The explanation is written in the user's first language and the
        # usage example in the language being learned, so the language
        # slots bind opposite to the session's names.
        bindings = {
            "TARGET_LANGUAGE": cfg.native_language,
            "NATIVE_LANGUAGE": cfg.target_language,
            "PHRASE": selection,
        }
        if context:
            bindings["CONTEXT"] = context
        prompt = render(TemplateName.EXPLAIN, bindings)
        resp = self.gateway.complete(prompt)
        explanation = resp.raw_text.strip()
        self.events.append(
            EventKind.PARTIAL_COMPREHENSION,
            {
                "message_id": message_id,
                "selection": selection,
                "explanation_text": explanation,
            },
        )
        entry = self.store.capture(
            surface_text=selection,
            context_message=message.display_text,
            source=CaptureSource.COMPREHENSION,
        )
        return ExplanationResult(
            message_id=message_id,
            phrase=selection,
            explanation_text=explanation,
            entry_id=entry.id,
            context_used=context_used,
        )

    # -- expression builder ----------------------------------------------------

    def build(self, draft: str) -> BuildResult:
        """Translate a draft; in the full condition, extract and map L1 phrases.

        The translation itself failing is an error; the extract or map
        stage failing only loses the mapping (logged as a degradation).
        """
        if not draft.strip():
            raise EmptyTextError("draft must be non-empty")
        l1_tokens = l1_token_count(draft)
        total_tokens = token_count(draft)
        context, context_used = self._context()
        cfg = self.session.config
        translated, degraded = self._translate(
            draft,
            source_language=cfg.native_language,
            output_language=cfg.target_language,
            context=context,
        )
        self.events.append(
            EventKind.EXPRESSION_SUPPORT,
            {
                "draft": draft,
                "translated_text": translated,
                "l1_tokens": l1_tokens,
                "total_tokens": total_tokens,
            },
        )
        mapping: Optional[ExtractionMapping] = None
        capture_ids: list[int] = []
        run_extraction = (
            cfg.condition == Condition.CHATLEARN
            and not degraded
            and bool(detect_l1_segments(draft))
        )
        if run_extraction:
            try:
                mapping = self._extract_and_map(draft, translated, context)
            except (StageParseError, ProviderUnavailableError) as exc:
                stage = getattr(exc, "stage", None)
                self.events.append(
                    EventKind.DEGRADATION,
                    {
                        "reason": "extraction-failed",
                        "stage": stage,
                        "detail": str(exc),
                    },
                )
                degraded = True
            if mapping is not None:
                for _, span in mapping.pairs:
                    if span:
                        entry = self.store.capture(
                            surface_text=span,
                            context_message=translated,
                            source=CaptureSource.EXPRESSION,
                        )
                        capture_ids.append(entry.id)
        return BuildResult(
            draft=draft,
            translated_text=translated,
            mapping=mapping,
            capture_entry_ids=tuple(capture_ids),
            l1_tokens=l1_tokens,
            total_tokens=total_tokens,
            context_used=context_used,
            degraded=degraded,
        )

    def _extract_and_map(
        self, draft: str, translated: str, context: str
    ) -> ExtractionMapping:
        """Stage 1 (extract phrases) and stage 3 (map onto the translation).

        Stage 2 is the translation already done by the caller. Phrase order
        is preserved; spans that are not verbatim in the translation are
        coerced to "" and the violation logged.
        """
        cfg = self.session.config
        extract_prompt = render(
            TemplateName.EXTRACT,
            {
                "NATIVE_LANGUAGE": cfg.native_language,
                "TARGET_LANGUAGE": cfg.target_language,
                "USER_INPUT": draft,
            },
        )
        resp = self.gateway.complete(extract_prompt, expect="array")
        if resp.parsed is None or not all(isinstance(p, str) for p in resp.parsed):
            raise StageParseError(1, "extract stage returned no phrase list")
        phrases: list[str] = []
        for phrase in resp.parsed:
            phrase = phrase.strip()
            if phrase and phrase not in phrases:
                phrases.append(phrase)
        if not phrases:
            return ExtractionMapping(translated_text=translated, pairs=())
        map_prompt = render(
            TemplateName.MAP,
            {
                "NATIVE_LANGUAGE": cfg.native_language,
                "TARGET_LANGUAGE": cfg.target_language,
                "LIST_OF_PHRASES": json.dumps(phrases, ensure_ascii=False),
                "TRANSLATED_TEXT": translated,
            },
        )
        resp = self.gateway.complete(map_prompt, expect="array")
        if resp.parsed is None or not all(isinstance(s, str) for s in resp.parsed):
            raise StageParseError(3, "map stage returned no span list")
        spans = list(resp.parsed)
        if len(spans) != len(phrases):
            self.events.append(
                EventKind.DEGRADATION,
                {
                    "reason": "map-length-mismatch",
                    "expected": len(phrases),
                    "got": len(spans),
                },
            )
            spans = (spans + [""] * len(phrases))[: len(phrases)]
        pairs = []
        for phrase, span in zip(phrases, spans):
            if span and span not in translated:
                self.events.append(
                    EventKind.DEGRADATION,
                    {
                        "reason": "span-not-in-translation",
                        "phrase": phrase,
                        "span": span,
                    },
                )
                span = ""
            pairs.append((phrase, span))
        return ExtractionMapping(translated_text=translated, pairs=tuple(pairs))
