"""Headless replay: drive a scripted two-party session through the engine.

A transcript script pins down everything that can vary at runtime: the
session config, the scripted model replies, and the step sequence. Replays
run on a logical clock, so running the same script twice produces
byte-identical session files and reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .core import Sender, SessionConfig
from .engine import SessionEngine
from .errors import ChatLearnError, ScriptError, StepFailureError
from .gateway import Gateway, MockProvider
from .metrics import MetricsReport
from .protocol import WireFrame

STEP_OPS = frozenset(
    {
        "ns_send",
        "nns_draft",
        "nns_full_comprehend",
        "nns_explore",
        "nns_card_interact",
        "begin_recall",
        "recall_submit",
        "close",
    }
)

_MESSAGE_OPS = frozenset({"ns_send", "nns_draft"})
_CAPTURE_OPS = frozenset({"nns_explore", "nns_draft"})

LOGICAL_EPOCH_MS = 1_000_000_000_000
LOGICAL_STEP_MS = 1_000


class LogicalClock:
    """Monotonic fake clock: fixed epoch, fixed increment per reading."""

    def __init__(self, epoch_ms: int = LOGICAL_EPOCH_MS, step_ms: int = LOGICAL_STEP_MS):
        self._now = epoch_ms
        self._step = step_ms

    def __call__(self) -> int:
        value = self._now
        self._now += self._step
        return value


@dataclass(frozen=True)
class TranscriptScript:
    session_id: str
    config: SessionConfig
    mock_rules: tuple[dict, ...]
    steps: tuple[dict, ...]


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise ScriptError(message)


def load_script(path: Path | str) -> TranscriptScript:
    """Parse and structurally validate a script file.

    Step references must point at earlier steps of a compatible kind, the
    script must end with its single close step, and recall answers can
    only follow the start of the recall test.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ScriptError(f"cannot read script: {exc}") from exc
    _check(isinstance(raw, dict), "script must be a JSON object")
    session = raw.get("session", {})
    _check(isinstance(session, dict), "'session' must be an object")
    session_id = session.get("id", "replay")
    _check(isinstance(session_id, str) and bool(session_id), "session id must be a string")
    config = SessionConfig.from_dict(session.get("config", {}))

    rules: list[dict] = []
    if "mock_script" in raw:
        rules_path = path.parent / raw["mock_script"]
        try:
            with open(rules_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        rules.append(json.loads(line))
        except (OSError, json.JSONDecodeError) as exc:
            raise ScriptError(f"cannot read mock script {rules_path}: {exc}") from exc
    rules.extend(raw.get("mock_rules", []))

    steps = raw.get("steps")
    _check(isinstance(steps, list) and len(steps) > 0, "script needs a non-empty 'steps' list")

    recall_started = False
    close_seen = False
    for i, step in enumerate(steps):
        where = f"step {i}"
        _check(isinstance(step, dict), f"{where}: must be an object")
        op = step.get("op")
        _check(op in STEP_OPS, f"{where}: unknown op {op!r}")
        _check(not close_seen, f"{where}: no steps allowed after close")
        if op in ("ns_send", "nns_draft"):
            text = step.get("text")
            _check(
                isinstance(text, str) and bool(text.strip()),
                f"{where}: {op} needs non-empty 'text'",
            )
        elif op in ("nns_full_comprehend", "nns_explore"):
            ref = step.get("message_step")
            _check(isinstance(ref, int), f"{where}: {op} needs integer 'message_step'")
            _check(0 <= ref < i, f"{where}: message_step must point at an earlier step")
            _check(
                steps[ref].get("op") in _MESSAGE_OPS,
                f"{where}: message_step must point at a message-producing step",
            )
            if op == "nns_explore":
                sel = step.get("selection")
                _check(
                    isinstance(sel, str) and bool(sel.strip()),
                    f"{where}: nns_explore needs non-empty 'selection'",
                )
        elif op == "nns_card_interact":
            ref = step.get("capture_step")
            _check(isinstance(ref, int), f"{where}: needs integer 'capture_step'")
            _check(0 <= ref < i, f"{where}: capture_step must point at an earlier step")
            _check(
                steps[ref].get("op") in _CAPTURE_OPS,
                f"{where}: capture_step must point at a capturing step",
            )
            pair = step.get("pair", 0)
            _check(isinstance(pair, int) and pair >= 0, f"{where}: 'pair' must be an index")
        elif op == "begin_recall":
            _check(not recall_started, f"{where}: recall test already started")
            recall_started = True
        elif op == "recall_submit":
            _check(recall_started, f"{where}: recall_submit requires begin_recall first")
            items = step.get("items")
            _check(isinstance(items, list), f"{where}: needs an 'items' list")
            for j, item in enumerate(items):
                _check(
                    isinstance(item, dict)
                    and isinstance(item.get("expression"), str)
                    and isinstance(item.get("confidence"), (int, float))
                    and isinstance(item.get("difficulty"), (int, float)),
                    f"{where}: item {j} needs expression/confidence/difficulty",
                )
            _check(
                isinstance(step.get("submitted_within_seconds"), (int, float)),
                f"{where}: needs numeric 'submitted_within_seconds'",
            )
        elif op == "close":
            close_seen = True
    _check(close_seen, "script must end with a close step")

    return TranscriptScript(
        session_id=session_id,
        config=config,
        mock_rules=tuple(rules),
        steps=tuple(steps),
    )


@dataclass(frozen=True)
class ReplayResult:
    session_id: str
    report: MetricsReport
    out_dir: Path
    session_dir: Path
    report_path: Path


class _Driver:
    """Sends frames for one role and digs results out of the responses."""

    def __init__(self, engine: SessionEngine, token: str):
        self.engine = engine
        self.token = token
        self._req = 0

    def send(self, role: Optional[Sender], frame_type: str, payload: dict) -> list:
        self._req += 1
        payload = dict(payload)
        payload["request_id"] = f"r{self._req}"
        frame = WireFrame(frame_type, self.token, payload)
        outs = self.engine.handle_frame(role, frame)
        for out in outs:
            if out.frame.type == "error":
                p = out.frame.payload
                raise ChatLearnError(f"{p.get('code')}: {p.get('message')}")
        return outs

    def ack_payload(self, outs: list) -> dict:
        for out in outs:
            if out.frame.type == "ack":
                return out.frame.payload
        raise ChatLearnError("no ack frame in response")


def run_script(script: TranscriptScript, out_dir: Path | str) -> ReplayResult:
    """Execute a validated script, writing all session files under out_dir.

    Output layout: ``out_dir/<session_id>/`` holds the live session files
    (messages, events, store snapshot, session metadata) and
    ``out_dir/report.json`` holds the final metrics report.
    """
    out_dir = Path(out_dir)
    session_dir = out_dir / script.session_id
    if (session_dir / "session.json").exists():
        raise ScriptError(f"{session_dir} already holds a session; use a fresh directory")
    out_dir.mkdir(parents=True, exist_ok=True)

    clock = LogicalClock()
    gateway = Gateway(MockProvider(list(script.mock_rules)))
    engine = SessionEngine(gateway, script.config, data_dir=out_dir, clock=clock)
    driver = _Driver(engine, script.session_id)

    driver.send(None, "hello", {"role": "NNS", "participant": "replay-nns"})
    driver.send(None, "hello", {"role": "NS", "participant": "replay-ns"})

    message_ids: dict[int, int] = {}
    capture_ids: dict[int, list[int]] = {}

    for i, step in enumerate(script.steps):
        op = step["op"]
        try:
            if op == "ns_send":
                outs = driver.send(Sender.NS, "message", {"text": step["text"]})
                message_ids[i] = driver.ack_payload(outs)["message"]["id"]
            elif op == "nns_draft":
                outs = driver.send(
                    Sender.NNS, "build_expression", {"draft": step["text"]}
                )
                build = driver.ack_payload(outs)["build"]
                capture_ids[i] = list(build["capture_entry_ids"])
                outs = driver.send(
                    Sender.NNS,
                    "message",
                    {"text": step["text"], "shown_translation": build["translated_text"]},
                )
                message_ids[i] = driver.ack_payload(outs)["message"]["id"]
            elif op == "nns_full_comprehend":
                driver.send(
                    Sender.NNS,
                    "translate_full",
                    {"message_id": message_ids[step["message_step"]]},
                )
            elif op == "nns_explore":
                outs = driver.send(
                    Sender.NNS,
                    "explore",
                    {
                        "message_id": message_ids[step["message_step"]],
                        "selection": step["selection"],
                    },
                )
                capture_ids[i] = [driver.ack_payload(outs)["explanation"]["entry_id"]]
            elif op == "nns_card_interact":
                ids = capture_ids.get(step["capture_step"], [])
                pair = step.get("pair", 0)
                if pair >= len(ids):
                    raise ScriptError(
                        f"capture step {step['capture_step']} produced {len(ids)} "
                        f"entries, pair {pair} does not exist"
                    )
                driver.send(Sender.NNS, "card_interact", {"entry_id": ids[pair]})
            elif op == "begin_recall":
                driver.send(Sender.NNS, "begin_recall", {})
            elif op == "recall_submit":
                driver.send(
                    Sender.NNS,
                    "recall_submit",
                    {
                        "items": step["items"],
                        "submitted_within_seconds": step["submitted_within_seconds"],
                    },
                )
            elif op == "close":
                engine.close_session(script.session_id)
        except ChatLearnError as exc:
            raise StepFailureError(i, exc) from exc

    report = engine.runtime(script.session_id).report()
    report_path = out_dir / "report.json"
    report_path.write_text(
        json.dumps(report.to_json_dict(), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    return ReplayResult(
        session_id=script.session_id,
        report=report,
        out_dir=out_dir,
        session_dir=session_dir,
        report_path=report_path,
    )
