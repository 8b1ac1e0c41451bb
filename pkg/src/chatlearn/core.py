"""Two-party chat sessions: configuration, messages, lifecycle, persistence.

A session holds an ordered message log shared by exactly two participants,
one non-native speaker (NNS) and one native speaker (NS). Messages are
persisted as JSON lines the moment they are appended so that a crashed
process can be restarted without losing history.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional

from .errors import (
    EmptyTextError,
    InvalidConfigError,
    InvalidRequestError,
    RoleTakenError,
    SessionClosedError,
    UnknownMessageError,
    UnknownSessionError,
    WrongStateError,
)
from .language import token_count

Clock = Callable[[], int]


def wall_clock_ms() -> int:
    return int(time.time() * 1000)


class Condition(str, Enum):
    """Feature condition for a session.

    BASELINE is plain chat; CHATLEARN enables the explorer, the extractor
    and review cards on top of translation support.
    """

    BASELINE = "baseline"
    CHATLEARN = "chatlearn"


class Sender(str, Enum):
    NNS = "NNS"
    NS = "NS"
    # Reserved for platform-generated notices; no operation produces one today.
    SYSTEM = "System"


class SessionState(str, Enum):
    ACTIVE = "active"
    RECALL_TEST = "recall_test"
    CLOSED = "closed"


@dataclass(frozen=True)
class SessionConfig:
    """Immutable per-session knobs.

    native_language / target_language are the language names substituted
    into prompts, so they are stored as display names, not tags.
    """

    condition: Condition = Condition.CHATLEARN
    native_language: str = "Chinese"
    target_language: str = "English"
    context_window_turns: int = 6
    similarity_threshold: float = 0.15
    top_k: int = 3
    recall_test_seconds: int = 180

    def __post_init__(self) -> None:
        if not isinstance(self.condition, Condition):
            object.__setattr__(self, "condition", Condition(self.condition))
        if not self.native_language.strip() or not self.target_language.strip():
            raise InvalidConfigError("language names must be non-empty")
        if self.context_window_turns < 0:
            raise InvalidConfigError("context_window_turns must be >= 0")
        if self.top_k < 1:
            raise InvalidConfigError("top_k must be >= 1")
        if not (-1.0 <= self.similarity_threshold <= 1.0):
            raise InvalidConfigError("similarity_threshold must be in [-1, 1]")
        if self.recall_test_seconds <= 0:
            raise InvalidConfigError("recall_test_seconds must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> "SessionConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**raw)
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = {f: getattr(self, f) for f in self.__dataclass_fields__}
        out["condition"] = self.condition.value
        return out


@dataclass
class Message:
    """One chat message.

    original_text is what the sender typed; shown_translation, when set,
    is the text actually displayed in the chat window (builder output for
    NNS messages). token_count always measures the displayed text.
    """

    id: int
    session_id: str
    sender: Sender
    original_text: str
    shown_translation: Optional[str]
    sent_at: int
    token_count: int

    @property
    def display_text(self) -> str:
        return self.shown_translation if self.shown_translation is not None else self.original_text

    def to_json_dict(self) -> dict:
        # Key order is part of the on-disk contract.
        return {
            "id": self.id,
            "session_id": self.session_id,
            "sender": self.sender.value,
            "original_text": self.original_text,
            "shown_translation": self.shown_translation,
            "sent_at": self.sent_at,
            "token_count": self.token_count,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "Message":
        return cls(
            id=raw["id"],
            session_id=raw["session_id"],
            sender=Sender(raw["sender"]),
            original_text=raw["original_text"],
            shown_translation=raw["shown_translation"],
            sent_at=raw["sent_at"],
            token_count=raw["token_count"],
        )


def render_context(messages: Iterable[Message]) -> str:
    """Render history messages as ``ROLE: text`` lines for prompt embedding."""
    return "\n".join(f"{m.sender.value}: {m.display_text}" for m in messages)


class Session:
    """Mutable session state guarded by an internal lock."""

    def __init__(
        self,
        session_id: str,
        config: SessionConfig,
        clock: Clock = wall_clock_ms,
        persist_path: Optional[Path] = None,
    ):
        self.id = session_id
        self.config = config
        self.state = SessionState.ACTIVE
        self.messages: list[Message] = []
        self.participants: dict[Sender, Optional[str]] = {Sender.NNS: None, Sender.NS: None}
        self.clock = clock
        self.persist_path = Path(persist_path) if persist_path else None
        self._lock = threading.RLock()

    # -- participants ---------------------------------------------------

    def join(self, role: Sender, participant_id: str) -> None:
        with self._lock:
            if role not in self.participants:
                raise InvalidRequestError("only the NNS and NS roles can join")
            current = self.participants[role]
            if current is not None and current != participant_id:
                raise RoleTakenError(f"role {role.value} already taken")
            self.participants[role] = participant_id

    # -- lifecycle ------------------------------------------------------

    def require_state(self, *allowed: SessionState) -> None:
        if self.state == SessionState.CLOSED and SessionState.CLOSED not in allowed:
            raise SessionClosedError(f"session {self.id} is closed")
        if self.state not in allowed:
            raise WrongStateError(
                f"operation requires {'/'.join(s.value for s in allowed)}, "
                f"session is {self.state.value}"
            )

    def begin_recall(self) -> None:
        with self._lock:
            self.require_state(SessionState.ACTIVE)
            self.state = SessionState.RECALL_TEST

    def close(self) -> None:
        with self._lock:
            self.require_state(SessionState.ACTIVE, SessionState.RECALL_TEST)
            self.state = SessionState.CLOSED

    # -- messages -------------------------------------------------------

    def append(
        self,
        sender: Sender,
        original_text: str,
        shown_translation: Optional[str] = None,
    ) -> Message:
        """Append a message; ids are gap-free starting at 1."""
        if not original_text.strip():
            raise EmptyTextError("message text must be non-empty")
        if shown_translation is not None and not shown_translation.strip():
            raise EmptyTextError("shown translation must be non-empty when given")
        with self._lock:
            self.require_state(SessionState.ACTIVE)
            display = shown_translation if shown_translation is not None else original_text
            msg = Message(
                id=len(self.messages) + 1,
                session_id=self.id,
                sender=sender,
                original_text=original_text,
                shown_translation=shown_translation,
                sent_at=self.clock(),
                token_count=token_count(display),
            )
            self.messages.append(msg)
            if self.persist_path is not None:
                line = json.dumps(msg.to_json_dict(), ensure_ascii=False)
                with open(self.persist_path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
            return msg

    def get_message(self, message_id: int) -> Message:
        with self._lock:
            if 1 <= message_id <= len(self.messages):
                return self.messages[message_id - 1]
        raise UnknownMessageError(f"no message with id {message_id}")

    def history_window(self) -> list[Message]:
        """The last ``context_window_turns`` appended messages (may be fewer)."""
        with self._lock:
            n = self.config.context_window_turns
            return list(self.messages[-n:]) if n else []

    def context_text(self) -> str:
        return render_context(self.history_window())

    # -- persistence ----------------------------------------------------

    @classmethod
    def restore(
        cls,
        session_id: str,
        config: SessionConfig,
        messages_path: Path,
        state: SessionState = SessionState.ACTIVE,
        clock: Clock = wall_clock_ms,
    ) -> "Session":
        """Rebuild a session from its message log after a crash or restart."""
        session = cls(session_id, config, clock=clock, persist_path=messages_path)
        if messages_path.exists():
            with open(messages_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        session.messages.append(Message.from_json_dict(json.loads(line)))
        for i, msg in enumerate(session.messages, start=1):
            if msg.id != i:
                raise WrongStateError(f"message log has gap at id {i}")
        session.state = state
        return session


class SessionStore:
    """In-memory registry of live sessions."""

    def __init__(self, clock: Clock = wall_clock_ms):
        self._clock = clock
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(
        self,
        session_id: str,
        config: SessionConfig,
        persist_path: Optional[Path] = None,
    ) -> Session:
        with self._lock:
            if session_id in self._sessions:
                raise InvalidConfigError(f"session {session_id} already exists")
            session = Session(session_id, config, clock=self._clock, persist_path=persist_path)
            self._sessions[session_id] = session
            return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            try:
                return self._sessions[session_id]
            except KeyError:
                raise UnknownSessionError(f"no session {session_id}") from None

    def add(self, session: Session) -> None:
        with self._lock:
            self._sessions[session.id] = session

    def __contains__(self, session_id: str) -> bool:
        with self._lock:
            return session_id in self._sessions
