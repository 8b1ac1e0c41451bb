"""Session orchestration shared by the live server and the replay harness.

SessionRuntime binds one session to its review store, event log, assist
engine and on-disk files, and exposes the user-level operations with
condition gating. SessionEngine dispatches wire frames onto runtimes, so a
frame stream produces identical state and logs whether it arrives over a
socket or from a script.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .assist import AssistEngine, BuildResult, ExplanationResult, TranslationResult
from .core import (
    Clock,
    Condition,
    Message,
    Sender,
    Session,
    SessionConfig,
    SessionState,
    wall_clock_ms,
)
from .errors import (
    ChatLearnError,
    FeatureDisabledError,
    OverTimeError,
    ProtocolError,
    WrongStateError,
)
from .gateway import Gateway
from .metrics import (
    EventKind,
    EventLog,
    MetricsReport,
    RecallResult,
    RecallSubmission,
    compute_report,
    validate_recall,
)
from .protocol import CLIENT_FRAME_TYPES, WireFrame
from .review import ReviewCard, ReviewStore, TriggerKind

META_FILE = "session.json"
MESSAGES_FILE = "messages.jsonl"
EVENTS_FILE = "events.jsonl"
STORE_FILE = "store.jsonl"


class SessionRuntime:
    """One session's full state plus the operations the UI exposes."""

    def __init__(
        self,
        session: Session,
        gateway: Gateway,
        events: EventLog,
        store: ReviewStore,
        data_dir: Optional[Path] = None,
    ):
        self.session = session
        self.gateway = gateway
        self.events = events
        self.store = store
        self.assist = AssistEngine(session, gateway, store, events)
        self.recall_result: Optional[RecallResult] = None
        self.data_dir = Path(data_dir) if data_dir else None
        self._lock = threading.RLock()

    # -- construction -------------------------------------------------------

    @classmethod
    def create(
        cls,
        session_id: str,
        config: SessionConfig,
        gateway: Gateway,
        data_dir: Optional[Path] = None,
        clock: Clock = wall_clock_ms,
    ) -> "SessionRuntime":
        messages_path = events_path = store_path = None
        if data_dir is not None:
            data_dir = Path(data_dir)
            data_dir.mkdir(parents=True, exist_ok=True)
            messages_path = data_dir / MESSAGES_FILE
            events_path = data_dir / EVENTS_FILE
            store_path = data_dir / STORE_FILE
        session = Session(session_id, config, clock=clock, persist_path=messages_path)
        events = EventLog(session_id, clock=clock, persist_path=events_path)
        store = ReviewStore(
            gateway.embed, clock=clock, snapshot_path=store_path, on_event=events.append
        )
        runtime = cls(session, gateway, events, store, data_dir=data_dir)
        runtime._save_meta()
        return runtime

    @classmethod
    def load(
        cls,
        data_dir: Path,
        gateway: Gateway,
        clock: Clock = wall_clock_ms,
    ) -> "SessionRuntime":
        """Rebuild a runtime from its directory after a crash or restart."""
        data_dir = Path(data_dir)
        with open(data_dir / META_FILE, encoding="utf-8") as fh:
            meta = json.load(fh)
        config = SessionConfig.from_dict(meta["config"])
        session = Session.restore(
            meta["id"],
            config,
            data_dir / MESSAGES_FILE,
            state=SessionState(meta["state"]),
            clock=clock,
        )
        events = EventLog.load(meta["id"], data_dir / EVENTS_FILE, clock=clock)
        events.persist_path = data_dir / EVENTS_FILE
        store = ReviewStore.load(
            data_dir / STORE_FILE, gateway.embed, clock=clock, on_event=events.append
        )
        runtime = cls(session, gateway, events, store, data_dir=data_dir)
        if meta.get("recall") is not None:
            runtime.recall_result = RecallResult.from_json_dict(meta["recall"])
        runtime.assist.restore_comprehension_cache(
            [ev.payload for ev in events.events if ev.kind == EventKind.FULL_COMPREHENSION]
        )
        return runtime

    def _save_meta(self) -> None:
        if self.data_dir is None:
            return
        meta = {
            "id": self.session.id,
            "config": self.session.config.to_dict(),
            "state": self.session.state.value,
            "recall": self.recall_result.to_json_dict() if self.recall_result else None,
        }
        tmp = self.data_dir / (META_FILE + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, ensure_ascii=False, indent=2)
        os.replace(tmp, self.data_dir / META_FILE)

    # -- operations ----------------------------------------------------------

    def join(self, role: Sender, participant: str) -> None:
        with self._lock:
            self.session.join(role, participant)

    def send_message(
        self,
        sender: Sender,
        text: str,
        shown_translation: Optional[str] = None,
    ) -> tuple[Message, list[ReviewCard]]:
        """Append a message; an incoming NS message also triggers review cards."""
        with self._lock:
            self.store.begin_turn()
            message = self.session.append(sender, text, shown_translation)
            if sender == Sender.NNS:
                self.events.append(
                    EventKind.MESSAGE_SENT,
                    {"message_id": message.id, "token_count": message.token_count},
                )
            cards: list[ReviewCard] = []
            if sender == Sender.NS and self.session.config.condition == Condition.CHATLEARN:
                cfg = self.session.config
                cards = self.store.retrieve(
                    message.display_text,
                    trigger=TriggerKind.CONTEXT_DRIVEN,
                    threshold=cfg.similarity_threshold,
                    top_k=cfg.top_k,
                )
            return message, cards

    def comprehend_full(self, message_id: int) -> TranslationResult:
        with self._lock:
            self.session.require_state(SessionState.ACTIVE)
            self.store.begin_turn()
            return self.assist.comprehend_full(message_id)

    def explore(self, message_id: int, selection: str) -> ExplanationResult:
        with self._lock:
            self.session.require_state(SessionState.ACTIVE)
            self.store.begin_turn()
            return self.assist.explore(message_id, selection)

    def build_expression(self, draft: str) -> tuple[BuildResult, list[ReviewCard]]:
        """Translate (and map) a draft, then look for related saved expressions.

        Expressions captured from this very draft are suppressed from the
        returned cards; they become retrievable from the next turn on.
        """
        with self._lock:
            self.session.require_state(SessionState.ACTIVE)
            self.store.begin_turn()
            result = self.assist.build(draft)
            cards: list[ReviewCard] = []
            if self.session.config.condition == Condition.CHATLEARN:
                cfg = self.session.config
                cards = self.store.retrieve(
                    result.translated_text,
                    trigger=TriggerKind.EXPRESSION_DRIVEN,
                    threshold=cfg.similarity_threshold,
                    top_k=cfg.top_k,
                )
            return result, cards

    def card_interact(self, entry_id: int):
        with self._lock:
            if self.session.config.condition != Condition.CHATLEARN:
                raise FeatureDisabledError("review cards are disabled in the baseline condition")
            self.store.begin_turn()
            return self.store.record_interaction(entry_id)

    def begin_recall(self) -> None:
        with self._lock:
            self.session.begin_recall()
            self._save_meta()

    def submit_recall(self, submission: RecallSubmission) -> RecallResult:
        """Validate recall answers against what the session actually showed."""
        with self._lock:
            if self.session.state != SessionState.RECALL_TEST:
                raise WrongStateError("recall answers require the recall_test state")
            if self.recall_result is not None:
                raise WrongStateError("recall answers were already submitted")
            if submission.submitted_within_seconds > self.session.config.recall_test_seconds:
                raise OverTimeError(
                    f"submission exceeded the {self.session.config.recall_test_seconds}s budget"
                )
            corpus: list[str] = [
                m.display_text for m in self.session.messages if m.sender == Sender.NS
            ]
            for ev in self.events.events:
                if ev.kind == EventKind.EXPRESSION_SUPPORT:
                    corpus.append(ev.payload["translated_text"])
                elif ev.kind == EventKind.PARTIAL_COMPREHENSION:
                    corpus.append(ev.payload["explanation_text"])
            result = validate_recall(submission, corpus)
            self.recall_result = result
            self._save_meta()
            return result

    def close(self) -> None:
        with self._lock:
            self.session.close()
            self._save_meta()

    def report(self) -> MetricsReport:
        with self._lock:
            return compute_report(self.session, self.events.events, self.recall_result)


@dataclass(frozen=True)
class Outbound:
    """A frame to deliver to one of the session's two participants."""

    recipient: Sender
    frame: WireFrame


class SessionEngine:
    """Frame dispatcher over a set of session runtimes."""

    def __init__(
        self,
        gateway: Gateway,
        default_config: SessionConfig,
        data_dir: Optional[Path] = None,
        clock: Clock = wall_clock_ms,
    ):
        self.gateway = gateway
        self.default_config = default_config
        self.data_dir = Path(data_dir) if data_dir else None
        self.clock = clock
        self._runtimes: dict[str, SessionRuntime] = {}
        self._lock = threading.Lock()

    def runtime(self, token: str) -> SessionRuntime:
        """Get or create the runtime for a session token.

        A token whose directory already exists on disk is reloaded from
        it, which is what makes a restarted server pick up mid-session.
        """
        with self._lock:
            rt = self._runtimes.get(token)
            if rt is not None:
                return rt
            session_dir = self.data_dir / token if self.data_dir else None
            if session_dir is not None and (session_dir / META_FILE).exists():
                rt = SessionRuntime.load(session_dir, self.gateway, clock=self.clock)
            else:
                rt = SessionRuntime.create(
                    token,
                    self.default_config,
                    self.gateway,
                    data_dir=session_dir,
                    clock=self.clock,
                )
            self._runtimes[token] = rt
            return rt

    def close_session(self, token: str) -> None:
        with self._lock:
            rt = self._runtimes.get(token)
        if rt is not None and rt.session.state != SessionState.CLOSED:
            rt.close()

    # -- frame dispatch -----------------------------------------------------

    def handle_frame(self, role: Optional[Sender], frame: WireFrame) -> list[Outbound]:
        """Apply one client frame; returns the frames to deliver in order.

        Domain failures come back as an error frame to the requester, so
        protocol consumers never see exceptions for user-level mistakes.
        """
        request_id = frame.payload.get("request_id")
        try:
            return self._dispatch(role, frame)
        except ChatLearnError as exc:
            code, message = exc.code, exc.message
        except (KeyError, TypeError, ValueError) as exc:
            code, message = ProtocolError.code, f"malformed payload: {exc}"
        payload = {"code": code, "message": message}
        if request_id is not None:
            payload["request_id"] = request_id
        err = WireFrame("error", frame.session_token, payload)
        return [Outbound(role if role is not None else Sender.NNS, err)]

    def _ack(self, frame: WireFrame, result: dict) -> WireFrame:
        payload = dict(result)
        request_id = frame.payload.get("request_id")
        if request_id is not None:
            payload["request_id"] = request_id
        return WireFrame("ack", frame.session_token, payload)

    def _cards_push(self, frame: WireFrame, trigger: TriggerKind, cards) -> WireFrame:
        return WireFrame(
            "cards",
            frame.session_token,
            {
                "trigger": trigger.value,
                "cards": [c.to_json_dict() for c in cards],
            },
        )

    def _dispatch(self, role: Optional[Sender], frame: WireFrame) -> list[Outbound]:
        if frame.type not in CLIENT_FRAME_TYPES:
            raise ProtocolError(f"frame type {frame.type!r} is not client-sendable")
        payload = frame.payload
        if frame.type == "hello":
            hello_role = Sender(payload["role"])
            if hello_role not in (Sender.NNS, Sender.NS):
                raise ProtocolError("role must be NNS or NS")
            rt = self.runtime(frame.session_token)
            rt.join(hello_role, str(payload.get("participant", "")) or "anonymous")
            session = rt.session
            return [
                Outbound(
                    hello_role,
                    self._ack(
                        frame,
                        {
                            "session": {
                                "id": session.id,
                                "config": session.config.to_dict(),
                                "state": session.state.value,
                            },
                            "history": [m.to_json_dict() for m in session.messages],
                            "entries": [
                                {
                                    "entry_id": e.id,
                                    "surface_text": e.surface_text,
                                    "shown_context": e.context_message,
                                    "pinned": e.pinned,
                                }
                                for e in rt.store.entries
                                if e.pinned
                            ],
                        },
                    ),
                )
            ]
        if role is None:
            raise ProtocolError("a hello frame must establish the role first")
        rt = self.runtime(frame.session_token)

        if frame.type == "message":
            text = payload.get("text", "")
            shown = payload.get("shown_translation")
            message, cards = rt.send_message(role, text, shown)
            peer = Sender.NS if role == Sender.NNS else Sender.NNS
            out = [
                Outbound(role, self._ack(frame, {"message": message.to_json_dict()})),
                Outbound(
                    peer,
                    WireFrame(
                        "message", frame.session_token, {"message": message.to_json_dict()}
                    ),
                ),
            ]
            if cards:
                out.append(
                    Outbound(
                        Sender.NNS,
                        self._cards_push(frame, TriggerKind.CONTEXT_DRIVEN, cards),
                    )
                )
            return out

        # Everything below is the NNS-facing assist surface.
        if role != Sender.NNS:
            raise FeatureDisabledError("assist features are available to the NNS role only")

        if frame.type == "translate_full":
            result = rt.comprehend_full(int(payload["message_id"]))
            return [Outbound(role, self._ack(frame, {"translation": result.to_json_dict()}))]
        if frame.type == "explore":
            result = rt.explore(int(payload["message_id"]), payload.get("selection", ""))
            return [Outbound(role, self._ack(frame, {"explanation": result.to_json_dict()}))]
        if frame.type == "build_expression":
            result, cards = rt.build_expression(payload.get("draft", ""))
            out = [Outbound(role, self._ack(frame, {"build": result.to_json_dict()}))]
            if cards:
                out.append(
                    Outbound(
                        Sender.NNS,
                        self._cards_push(frame, TriggerKind.EXPRESSION_DRIVEN, cards),
                    )
                )
            return out
        if frame.type == "card_interact":
            entry = rt.card_interact(int(payload["entry_id"]))
            return [
                Outbound(
                    role,
                    self._ack(
                        frame,
                        {
                            "entry": {
                                "entry_id": entry.id,
                                "interaction_count": entry.interaction_count,
                                "trigger_count": entry.trigger_count,
                                "pinned": entry.pinned,
                            }
                        },
                    ),
                )
            ]
        if frame.type == "begin_recall":
            rt.begin_recall()
            return [
                Outbound(
                    role,
                    self._ack(
                        frame,
                        {
                            "state": rt.session.state.value,
                            "budget_seconds": rt.session.config.recall_test_seconds,
                        },
                    ),
                )
            ]
        if frame.type == "recall_submit":
            submission = RecallSubmission.from_json_dict(payload)
            result = rt.submit_recall(submission)
            report = rt.report()
            return [
                Outbound(
                    role,
                    self._ack(
                        frame,
                        {"recall": result.to_json_dict(), "report": report.to_json_dict()},
                    ),
                )
            ]
        raise ProtocolError(f"unhandled frame type {frame.type!r}")  # unreachable
