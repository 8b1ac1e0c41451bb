"""Behavioral event log, session metrics, and recall-test validation.

Every user-visible assist action appends one event to an append-only JSONL
log. The session report is a pure fold over that log, so a report computed
live and one computed after reloading the log from disk are identical.
"""

from __future__ import annotations

import json
import statistics
import threading
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import Clock, Session, SessionState, wall_clock_ms
from .errors import WrongStateError
from .language import strip_edge_punctuation, tokenize

# Function words ignored when deciding whether two recalled expressions are
# wordings of the same thing.
STOPWORDS = frozenset({"a", "an", "the", "of", "in", "on", "to", "for"})


class EventKind(str, Enum):
    MESSAGE_SENT = "MessageSent"
    FULL_COMPREHENSION = "FullComprehension"
    PARTIAL_COMPREHENSION = "PartialComprehension"
    EXPRESSION_SUPPORT = "ExpressionSupport"
    CAPTURE = "Capture"
    CARD_TRIGGERED = "CardTriggered"
    CARD_INTERACTION = "CardInteraction"
    DEGRADATION = "Degradation"


@dataclass(frozen=True)
class LogEvent:
    seq: int
    session_id: str
    kind: EventKind
    at: int
    payload: dict

    def to_json_dict(self) -> dict:
        return {
            "seq": self.seq,
            "session_id": self.session_id,
            "kind": self.kind.value,
            "at": self.at,
            "payload": self.payload,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "LogEvent":
        return cls(
            seq=raw["seq"],
            session_id=raw["session_id"],
            kind=EventKind(raw["kind"]),
            at=raw["at"],
            payload=raw["payload"],
        )


class EventLog:
    """Append-only, sequence-numbered event log with JSONL persistence."""

    def __init__(
        self,
        session_id: str,
        clock: Clock = wall_clock_ms,
        persist_path: Optional[Path] = None,
    ):
        self.session_id = session_id
        self._clock = clock
        self.persist_path = Path(persist_path) if persist_path else None
        self.events: list[LogEvent] = []
        self._lock = threading.Lock()

    def append(self, kind: EventKind, payload: dict) -> LogEvent:
        with self._lock:
            event = LogEvent(
                seq=len(self.events) + 1,
                session_id=self.session_id,
                kind=kind,
                at=self._clock(),
                payload=payload,
            )
            self.events.append(event)
            if self.persist_path is not None:
                line = json.dumps(event.to_json_dict(), ensure_ascii=False)
                with open(self.persist_path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
            return event

    @classmethod
    def load(
        cls,
        session_id: str,
        path: Path,
        clock: Clock = wall_clock_ms,
    ) -> "EventLog":
        log = cls(session_id, clock=clock, persist_path=path)
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        log.events.append(LogEvent.from_json_dict(json.loads(line)))
        for i, ev in enumerate(log.events, start=1):
            if ev.seq != i:
                raise WrongStateError(f"event log has gap at seq {i}")
        return log


def l1_ratio(l1_tokens: int, total_tokens: int) -> float:
    return l1_tokens / total_tokens if total_tokens else 0.0


# -- recall test ------------------------------------------------------------


@dataclass(frozen=True)
class RecallItem:
    expression: str
    confidence: float
    difficulty: float


@dataclass(frozen=True)
class RecallSubmission:
    items: tuple[RecallItem, ...]
    submitted_within_seconds: float

    @classmethod
    def from_json_dict(cls, raw: dict) -> "RecallSubmission":
        items = tuple(
            RecallItem(
                expression=i["expression"],
                confidence=float(i["confidence"]),
                difficulty=float(i["difficulty"]),
            )
            for i in raw["items"]
        )
        return cls(items=items, submitted_within_seconds=float(raw["submitted_within_seconds"]))


@dataclass(frozen=True)
class RecalledExpression:
    """A validated (possibly merged) recalled expression."""

    expression: str
    variants: tuple[str, ...]
    confidence: float
    difficulty: float
    flagged: bool

    def to_json_dict(self) -> dict:
        return {
            "expression": self.expression,
            "variants": list(self.variants),
            "confidence": self.confidence,
            "difficulty": self.difficulty,
            "flagged": self.flagged,
        }


@dataclass(frozen=True)
class RecallResult:
    expressions: tuple[RecalledExpression, ...]
    rejected: tuple[str, ...]

    @property
    def quantity(self) -> int:
        return len(self.expressions)

    @property
    def mean_confidence(self) -> float:
        return statistics.fmean(e.confidence for e in self.expressions) if self.expressions else 0.0

    @property
    def mean_difficulty(self) -> float:
        return statistics.fmean(e.difficulty for e in self.expressions) if self.expressions else 0.0

    @property
    def flagged(self) -> tuple[str, ...]:
        return tuple(e.expression for e in self.expressions if e.flagged)

    def to_json_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "mean_confidence": self.mean_confidence,
            "mean_difficulty": self.mean_difficulty,
            "expressions": [e.to_json_dict() for e in self.expressions],
            "rejected": list(self.rejected),
            "flagged": list(self.flagged),
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "RecallResult":
        return cls(
            expressions=tuple(
                RecalledExpression(
                    expression=e["expression"],
                    variants=tuple(e["variants"]),
                    confidence=e["confidence"],
                    difficulty=e["difficulty"],
                    flagged=e["flagged"],
                )
                for e in raw["expressions"]
            ),
            rejected=tuple(raw["rejected"]),
        )


def _normalize_corpus_text(text: str) -> str:
    return " ".join(text.lower().split())


def _normalize_item(text: str) -> str:
    return strip_edge_punctuation(" ".join(text.lower().split()))


def _content_tokens(text: str) -> list[str]:
    return [t for t in tokenize(text) if t not in STOPWORDS]


def _fuzzy_in_corpus(item_tokens: list[str], corpus_token_streams: list[list[str]]) -> bool:
    """True if some window of a corpus token stream matches as a multiset.

    Streams and the item are already stopword-filtered, so a reordering or
    an added/removed function word still matches.
    """
    want = Counter(item_tokens)
    size = len(item_tokens)
    for stream in corpus_token_streams:
        for i in range(len(stream) - size + 1):
            if Counter(stream[i : i + size]) == want:
                return True
    return False


def validate_recall(
    submission: RecallSubmission,
    corpus_texts: Iterable[str],
) -> RecallResult:
    """Validate free-recall answers against what the session actually showed.

    An item is valid if its normalized text occurs verbatim in one of the
    normalized corpus texts; failing that, it is valid-but-flagged if its
    content tokens match some same-size window of corpus content tokens as
    a multiset. Valid items whose content-token multisets are equal are
    merged into one expression (max confidence, mean difficulty).
    """
    norm_corpus = [_normalize_corpus_text(t) for t in corpus_texts if t and t.strip()]
    token_streams = [_content_tokens(t) for t in norm_corpus]

    validated: list[tuple[RecallItem, str, bool]] = []  # (item, normalized, fuzzy?)
    rejected: list[str] = []
    for item in submission.items:
        norm = _normalize_item(item.expression)
        if not norm:
            rejected.append(item.expression)
            continue
        if any(norm in corpus_text for corpus_text in norm_corpus):
            validated.append((item, norm, False))
            continue
        content = _content_tokens(norm)
        if content and _fuzzy_in_corpus(content, token_streams):
            validated.append((item, norm, True))
        else:
            rejected.append(item.expression)

    groups: dict[tuple[str, ...], list[tuple[RecallItem, str, bool]]] = {}
    order: list[tuple[str, ...]] = []
    for item, norm, fuzzy in validated:
        key = tuple(sorted(_content_tokens(norm)))
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append((item, norm, fuzzy))

    merged = []
    for key in order:
        members = groups[key]
        merged.append(
            RecalledExpression(
                expression=members[0][1],
                variants=tuple(m[0].expression for m in members),
                confidence=max(m[0].confidence for m in members),
                difficulty=statistics.fmean(m[0].difficulty for m in members),
                flagged=any(m[2] for m in members),
            )
        )
    return RecallResult(expressions=tuple(merged), rejected=tuple(rejected))


# -- session report -----------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    session_id: str
    condition: str
    expression_support_count: int
    first_language_usage_ratio: float
    full_comprehension_count: int
    partial_comprehension_count: int
    learning_opportunities_by_source: dict
    card_trigger_frequency: int
    card_interaction_count: int
    message_count: int
    message_token_total: int
    recall: Optional[dict]

    def to_json_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "condition": self.condition,
            "expression_support_count": self.expression_support_count,
            "first_language_usage_ratio": self.first_language_usage_ratio,
            "full_comprehension_count": self.full_comprehension_count,
            "partial_comprehension_count": self.partial_comprehension_count,
            "learning_opportunities_by_source": dict(self.learning_opportunities_by_source),
            "card_trigger_frequency": self.card_trigger_frequency,
            "card_interaction_count": self.card_interaction_count,
            "message_count": self.message_count,
            "message_token_total": self.message_token_total,
            "recall": self.recall,
        }


def compute_report(
    session: Session,
    events: Sequence[LogEvent],
    recall_result: Optional[RecallResult] = None,
) -> MetricsReport:
    """Fold the event log into the session's behavioral metrics.

    Requires the session to have reached the recall test or be closed, so
    reports are only computed over finished conversations.
    """
    if session.state not in (SessionState.RECALL_TEST, SessionState.CLOSED):
        raise WrongStateError(
            f"report requires recall_test or closed state, session is {session.state.value}"
        )
    expression_support_count = 0
    l1_tokens = 0
    total_tokens = 0
    full_count = 0
    partial_count = 0
    opportunities = Counter({"comprehension": 0, "expression": 0})
    trigger_count = 0
    interaction_count = 0
    message_count = 0
    message_token_total = 0
    for ev in events:
        if ev.kind == EventKind.EXPRESSION_SUPPORT:
            expression_support_count += 1
            l1_tokens += ev.payload["l1_tokens"]
            total_tokens += ev.payload["total_tokens"]
        elif ev.kind == EventKind.FULL_COMPREHENSION:
            full_count += 1
        elif ev.kind == EventKind.PARTIAL_COMPREHENSION:
            partial_count += 1
        elif ev.kind == EventKind.CAPTURE:
            opportunities[ev.payload["source"]] += 1
        elif ev.kind == EventKind.CARD_TRIGGERED:
            trigger_count += 1
        elif ev.kind == EventKind.CARD_INTERACTION:
            interaction_count += 1
        elif ev.kind == EventKind.MESSAGE_SENT:
            message_count += 1
            message_token_total += ev.payload["token_count"]
    return MetricsReport(
        session_id=session.id,
        condition=session.config.condition.value,
        expression_support_count=expression_support_count,
        first_language_usage_ratio=l1_ratio(l1_tokens, total_tokens),
        full_comprehension_count=full_count,
        partial_comprehension_count=partial_count,
        learning_opportunities_by_source=dict(opportunities),
        card_trigger_frequency=trigger_count,
        card_interaction_count=interaction_count,
        message_count=message_count,
        message_token_total=message_token_total,
        recall=recall_result.to_json_dict() if recall_result is not None else None,
    )


def format_report_table(report: MetricsReport) -> str:
    """Plain-text table for the CLI."""
    rows = [
        ("session", report.session_id),
        ("condition", report.condition),
        ("expression support count", str(report.expression_support_count)),
        ("first-language usage ratio", f"{report.first_language_usage_ratio:.4f}"),
        ("full comprehension count", str(report.full_comprehension_count)),
        ("partial comprehension count", str(report.partial_comprehension_count)),
        (
            "learning opportunities",
            ", ".join(
                f"{k}={v}" for k, v in sorted(report.learning_opportunities_by_source.items())
            ),
        ),
        ("card triggers", str(report.card_trigger_frequency)),
        ("card interactions", str(report.card_interaction_count)),
        ("messages sent", str(report.message_count)),
        ("message tokens", str(report.message_token_total)),
    ]
    if report.recall is not None:
        rows.append(("recalled expressions", str(report.recall["quantity"])))
        rows.append(("recall mean confidence", f"{report.recall['mean_confidence']:.2f}"))
        rows.append(("recall mean difficulty", f"{report.recall['mean_difficulty']:.2f}"))
    width = max(len(label) for label, _ in rows)
    return "\n".join(f"{label.ljust(width)}  {value}" for label, value in rows)
