"""Captured-expression store and review card retrieval.

Expressions a user has engaged with (through the explorer or the
expression builder) are stored with an embedding. When new conversation
text arrives, the store is scanned exhaustively for the most similar saved
expressions and those come back as review cards. The corpus per session is
small, so no index structure is used; scoring is one cosine pass.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .core import Clock, wall_clock_ms
from .errors import (
    ChatLearnError,
    DimensionMismatchError,
    EmptyTextError,
    NeverTriggeredError,
    UnknownEntryError,
    ZeroVectorError,
)
from .language import normalize_surface
from .metrics import EventKind

EmbedFn = Callable[[str], np.ndarray]
EventSink = Callable[[EventKind, dict], None]


class CaptureSource(str, Enum):
    COMPREHENSION = "comprehension"
    EXPRESSION = "expression"


class TriggerKind(str, Enum):
    CONTEXT_DRIVEN = "context_driven"
    EXPRESSION_DRIVEN = "expression_driven"


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise DimensionMismatchError(f"vector shapes differ: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine similarity undefined for zero vectors")
    return float(np.dot(a, b) / (norm_a * norm_b))


@dataclass
class ExpressionEntry:
    """One saved expression.

    embedding is None when the embedding call failed at capture time; such
    entries are kept for the record but never retrieved.
    """

    id: int
    surface_text: str
    normalized_text: str
    context_message: str
    source: CaptureSource
    captured_at: int
    captured_turn: int
    embedding: Optional[np.ndarray]
    trigger_count: int = 0
    interaction_count: int = 0
    pinned: bool = False

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "surface_text": self.surface_text,
            "normalized_text": self.normalized_text,
            "context_message": self.context_message,
            "source": self.source.value,
            "captured_at": self.captured_at,
            "captured_turn": self.captured_turn,
            "embedding": None if self.embedding is None else [float(x) for x in self.embedding],
            "trigger_count": self.trigger_count,
            "interaction_count": self.interaction_count,
            "pinned": self.pinned,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "ExpressionEntry":
        emb = raw["embedding"]
        return cls(
            id=raw["id"],
            surface_text=raw["surface_text"],
            normalized_text=raw["normalized_text"],
            context_message=raw["context_message"],
            source=CaptureSource(raw["source"]),
            captured_at=raw["captured_at"],
            captured_turn=raw["captured_turn"],
            embedding=None if emb is None else np.asarray(emb, dtype=np.float64),
            trigger_count=raw["trigger_count"],
            interaction_count=raw["interaction_count"],
            pinned=raw["pinned"],
        )


@dataclass(frozen=True)
class ReviewCard:
    entry_id: int
    similarity: float
    trigger: TriggerKind
    shown_context: str
    surface_text: str

    def to_json_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "similarity": self.similarity,
            "trigger": self.trigger.value,
            "shown_context": self.shown_context,
            "surface_text": self.surface_text,
        }


class ReviewStore:
    """Expression entries plus capture, retrieval and interaction bookkeeping.

    The ranking contract, shared with the brute-force oracle used in tests:
    keep entries with similarity >= threshold, order by similarity
    descending, then captured_at descending, then id descending, and cut
    to top_k. Entries captured during the current turn are suppressed so a
    just-saved expression does not immediately resurface as its own card.
    """

    def __init__(
        self,
        embed_fn: EmbedFn,
        clock: Clock = wall_clock_ms,
        snapshot_path: Optional[Path] = None,
        on_event: Optional[EventSink] = None,
    ):
        self._embed = embed_fn
        self._clock = clock
        self._snapshot_path = Path(snapshot_path) if snapshot_path else None
        self._on_event = on_event
        self.entries: list[ExpressionEntry] = []
        self._by_norm: dict[str, ExpressionEntry] = {}
        self._dim: Optional[int] = None
        self._turn = 0
        self._lock = threading.RLock()

    # -- events / persistence -------------------------------------------

    def _emit(self, kind: EventKind, payload: dict) -> None:
        if self._on_event is not None:
            self._on_event(kind, payload)

    def _write_snapshot(self) -> None:
        if self._snapshot_path is None:
            return
        tmp = self._snapshot_path.with_suffix(self._snapshot_path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry.to_json_dict(), ensure_ascii=False) + "\n")
        os.replace(tmp, self._snapshot_path)

    @classmethod
    def load(
        cls,
        path: Path,
        embed_fn: EmbedFn,
        clock: Clock = wall_clock_ms,
        on_event: Optional[EventSink] = None,
    ) -> "ReviewStore":
        store = cls(embed_fn, clock=clock, snapshot_path=path, on_event=on_event)
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    entry = ExpressionEntry.from_json_dict(json.loads(line))
                    store.entries.append(entry)
                    store._by_norm[entry.normalized_text] = entry
                    if entry.embedding is not None and store._dim is None:
                        store._dim = int(entry.embedding.size)
        store._turn = max((e.captured_turn for e in store.entries), default=0)
        return store

    # -- turns ------------------------------------------------------------

    def begin_turn(self) -> int:
        """Advance the turn counter; called once per user action."""
        with self._lock:
            self._turn += 1
            return self._turn

    # -- capture ----------------------------------------------------------

    def capture(
        self,
        surface_text: str,
        context_message: str,
        source: CaptureSource,
    ) -> ExpressionEntry:
        """Save an expression, deduplicating on normalized surface text.

        A duplicate refreshes captured_at and the capture turn but keeps
        the original entry (and its counts). Every call emits a Capture
        event, duplicates included.
        """
        if not surface_text.strip():
            raise EmptyTextError("cannot capture empty surface text")
        with self._lock:
            norm = normalize_surface(surface_text)
            entry = self._by_norm.get(norm)
            new_entry = entry is None
            if entry is None:
                embedding: Optional[np.ndarray] = None
                try:
                    embedding = np.asarray(self._embed(surface_text), dtype=np.float64)
                except ChatLearnError as exc:
                    self._emit(
                        EventKind.DEGRADATION,
                        {"reason": "capture-embedding-failed", "detail": str(exc)},
                    )
                if embedding is not None:
                    if self._dim is None:
                        self._dim = int(embedding.size)
                    elif int(embedding.size) != self._dim:
                        raise DimensionMismatchError(
                            f"embedding dim {embedding.size} != store dim {self._dim}"
                        )
                entry = ExpressionEntry(
                    id=len(self.entries) + 1,
                    surface_text=surface_text,
                    normalized_text=norm,
                    context_message=context_message,
                    source=source,
                    captured_at=self._clock(),
                    captured_turn=self._turn,
                    embedding=embedding,
                )
                self.entries.append(entry)
                self._by_norm[norm] = entry
            else:
                entry.captured_at = self._clock()
                entry.captured_turn = self._turn
            self._emit(
                EventKind.CAPTURE,
                {
                    "entry_id": entry.id,
                    "surface_text": entry.surface_text,
                    "source": source.value,
                    "new_entry": new_entry,
                },
            )
            self._write_snapshot()
            return entry

    def get(self, entry_id: int) -> ExpressionEntry:
        with self._lock:
            if 1 <= entry_id <= len(self.entries):
                return self.entries[entry_id - 1]
        raise UnknownEntryError(f"no expression entry {entry_id}")

    # -- retrieval ----------------------------------------------------------

    def retrieve(
        self,
        query_text: str,
        trigger: TriggerKind,
        threshold: float,
        top_k: int,
        suppress_current_turn: bool = True,
    ) -> list[ReviewCard]:
        """Score the whole store against ``query_text`` and return cards.

        An empty store (or one with nothing eligible) returns no cards. A
        failed query embedding degrades to no cards rather than raising.
        Returned entries get their trigger_count bumped and a CardTriggered
        event each.
        """
        if not query_text.strip():
            raise EmptyTextError("cannot retrieve with empty query text")
        with self._lock:
            eligible = [
                e
                for e in self.entries
                if e.embedding is not None
                and not (suppress_current_turn and e.captured_turn == self._turn)
            ]
            if not eligible:
                return []
            try:
                query_vec = np.asarray(self._embed(query_text), dtype=np.float64)
            except ChatLearnError as exc:
                self._emit(
                    EventKind.DEGRADATION,
                    {"reason": "retrieval-embedding-failed", "detail": str(exc)},
                )
                return []
            scored = [
                (cosine_similarity(query_vec, e.embedding), e) for e in eligible
            ]
            kept = [(sim, e) for sim, e in scored if sim >= threshold]
            kept.sort(key=lambda pair: (-pair[0], -pair[1].captured_at, -pair[1].id))
            kept = kept[:top_k]
            cards = []
            for sim, entry in kept:
                entry.trigger_count += 1
                self._emit(
                    EventKind.CARD_TRIGGERED,
                    {"entry_id": entry.id, "similarity": sim, "trigger": trigger.value},
                )
                cards.append(
                    ReviewCard(
                        entry_id=entry.id,
                        similarity=sim,
                        trigger=trigger,
                        shown_context=entry.context_message,
                        surface_text=entry.surface_text,
                    )
                )
            if cards:
                self._write_snapshot()
            return cards

    # -- interaction ----------------------------------------------------------

    def record_interaction(self, entry_id: int) -> ExpressionEntry:
        """Acknowledge a shown card: bump interaction_count and pin the entry.

        Each interaction consumes one trigger, which keeps
        interaction_count <= trigger_count as an invariant; an entry whose
        triggers are all acknowledged (or that never triggered) rejects
        further interactions.
        """
        with self._lock:
            entry = self.get(entry_id)
            if entry.trigger_count == 0:
                raise NeverTriggeredError(f"entry {entry_id} was never shown as a card")
            if entry.interaction_count >= entry.trigger_count:
                raise NeverTriggeredError(
                    f"entry {entry_id} has no unacknowledged trigger"
                )
            entry.interaction_count += 1
            entry.pinned = True
            self._emit(
                EventKind.CARD_INTERACTION,
                {"entry_id": entry.id, "interaction_count": entry.interaction_count},
            )
            self._write_snapshot()
            return entry
