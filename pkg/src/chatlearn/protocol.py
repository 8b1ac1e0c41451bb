"""Wire protocol: one JSON object per frame over a persistent connection.

Every frame is ``{"type": ..., "session_token": ..., "payload": {...}}``.
Requests carry a client-chosen ``request_id`` inside the payload; the
matching ack or error frame echoes it back. Pushed frames (relayed
messages, review cards) carry no request_id.

Frame types and their payloads:

* hello            -> {role, participant, request_id}; ack {session, history, entries}
* message          -> {text, shown_translation?, request_id}; ack {message};
                      peer receives a pushed message frame {message}
* translate_full   -> {message_id, request_id}; ack {translation}
* explore          -> {message_id, selection, request_id}; ack {explanation}
* build_expression -> {draft, request_id}; ack {build}
* cards            -> server push {trigger, cards: [...]}
* card_interact    -> {entry_id, request_id}; ack {entry}
* begin_recall     -> {request_id}; ack {state, budget_seconds}
* recall_submit    -> {items, submitted_within_seconds, request_id};
                      ack {recall, report}
* error            -> {code, message, request_id?}
* ack              -> {request_id, ...result}
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ProtocolError

FRAME_TYPES = frozenset(
    {
        "hello",
        "message",
        "translate_full",
        "explore",
        "build_expression",
        "cards",
        "card_interact",
        "begin_recall",
        "recall_submit",
        "error",
        "ack",
    }
)

# Types a client may send; the rest are server-emitted only.
CLIENT_FRAME_TYPES = frozenset(
    {
        "hello",
        "message",
        "translate_full",
        "explore",
        "build_expression",
        "card_interact",
        "begin_recall",
        "recall_submit",
    }
)


@dataclass(frozen=True)
class WireFrame:
    type: str
    session_token: str
    payload: dict

    def __post_init__(self) -> None:
        if self.type not in FRAME_TYPES:
            raise ProtocolError(f"unknown frame type: {self.type!r}")
        if not isinstance(self.session_token, str) or not self.session_token:
            raise ProtocolError("session_token must be a non-empty string")
        if not isinstance(self.payload, dict):
            raise ProtocolError("payload must be an object")


def encode_frame(frame: WireFrame) -> str:
    """Serialize to a single JSON line."""
    return json.dumps(
        {
            "type": frame.type,
            "session_token": frame.session_token,
            "payload": frame.payload,
        },
        ensure_ascii=False,
        separators=(",", ":"),
    )


def decode_frame(text: str | bytes) -> WireFrame:
    """Parse and validate one frame; malformed input raises, never drops."""
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ProtocolError("frame must be a JSON object")
    missing = {"type", "session_token", "payload"} - set(raw)
    if missing:
        raise ProtocolError(f"frame missing fields: {sorted(missing)}")
    if not isinstance(raw["type"], str):
        raise ProtocolError("frame type must be a string")
    return WireFrame(
        type=raw["type"],
        session_token=raw["session_token"],
        payload=raw["payload"],
    )
