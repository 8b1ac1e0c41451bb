"""Runtime persistence/recovery and wire-frame dispatch."""

import pytest

from chatlearn.core import Condition, Sender, SessionConfig
from chatlearn.engine import SessionEngine, SessionRuntime
from chatlearn.errors import OverTimeError, WrongStateError
from chatlearn.gateway import Gateway, MockProvider
from chatlearn.metrics import RecallItem, RecallSubmission
from chatlearn.protocol import WireFrame
from conftest import CountingProvider, FakeClock, make_runtime
from test_assist import ALL_RULES, DRAFT, NS_TEXT, TRANSLATION


def submission(*items, within=60.0):
    return RecallSubmission(
        items=tuple(RecallItem(*i) for i in items),
        submitted_within_seconds=within,
    )


def run_scenario(runtime):
    """A small end-to-end flow reused by the persistence tests."""
    ns_msg, _ = runtime.send_message(Sender.NS, NS_TEXT)
    runtime.comprehend_full(ns_msg.id)
    runtime.explore(ns_msg.id, "cuisine")
    build, _ = runtime.build_expression(DRAFT)
    runtime.send_message(Sender.NNS, DRAFT, shown_translation=build.translated_text)
    return ns_msg, build


# -- runtime operations ------------------------------------------------------


def test_send_message_logs_only_nns_sends():
    runtime, _ = make_runtime(ALL_RULES)
    runtime.send_message(Sender.NS, "hello")
    runtime.send_message(Sender.NNS, "hi there")
    kinds = [e.kind.value for e in runtime.events.events]
    assert kinds == ["MessageSent"]
    assert runtime.events.events[0].payload["token_count"] == 2


def test_ns_message_triggers_context_cards():
    runtime, _ = make_runtime(
        ALL_RULES, config=SessionConfig(similarity_threshold=-1.0)
    )
    ns_msg, cards = runtime.send_message(Sender.NS, NS_TEXT)
    assert cards == []  # nothing captured yet
    runtime.explore(ns_msg.id, "cuisine")
    _, cards = runtime.send_message(Sender.NS, "Do you like spicy food?")
    assert [c.surface_text for c in cards] == ["cuisine"]
    assert cards[0].trigger.value == "context_driven"


def test_ns_message_triggers_no_cards_in_baseline():
    runtime, _ = make_runtime(
        ALL_RULES,
        config=SessionConfig(condition=Condition.BASELINE, similarity_threshold=-1.0),
    )
    runtime.send_message(Sender.NS, NS_TEXT)
    _, cards = runtime.send_message(Sender.NS, "Do you like spicy food?")
    assert cards == []


def test_build_returns_expression_driven_cards_next_turn():
    runtime, _ = make_runtime(
        ALL_RULES + [{"match": "User Message: 我昨天吃了麻辣火锅", "reply": '{"translated_text": "I had mala hotpot yesterday"}'},
                     {"match": "User input: 我昨天吃了麻辣火锅", "reply": '["麻辣火锅"]'},
                     {"match": 'Original Chinese phrases: ["麻辣火锅"]', "reply": '["mala hotpot"]'}],
        config=SessionConfig(similarity_threshold=-1.0),
    )
    runtime.send_message(Sender.NS, NS_TEXT)
    first_build, first_cards = runtime.build_expression(DRAFT)
    # Entries captured from this very draft are suppressed this turn.
    assert first_cards == []
    assert len(first_build.capture_entry_ids) == 2
    second_build, second_cards = runtime.build_expression("我昨天吃了麻辣火锅")
    assert second_cards  # earlier captures now come back as cards
    assert {c.trigger.value for c in second_cards} == {"expression_driven"}
    first_ids = set(first_build.capture_entry_ids)
    assert {c.entry_id for c in second_cards} <= first_ids | set(second_build.capture_entry_ids)


def test_card_interact_disabled_in_baseline():
    runtime, _ = make_runtime(
        ALL_RULES, config=SessionConfig(condition=Condition.BASELINE)
    )
    from chatlearn.errors import FeatureDisabledError

    with pytest.raises(FeatureDisabledError):
        runtime.card_interact(1)


def test_recall_flow_and_report():
    runtime, _ = make_runtime(ALL_RULES, config=SessionConfig(similarity_threshold=-1.0))
    run_scenario(runtime)
    runtime.begin_recall()
    result = runtime.submit_recall(
        submission(("mala hotpot", 6, 4), ("nonsense entirely", 2, 2), within=90)
    )
    assert result.quantity == 1
    assert result.rejected == ("nonsense entirely",)
    report = runtime.report()
    assert report.recall["quantity"] == 1
    assert report.expression_support_count == 1
    assert report.message_count == 1


def test_recall_corpus_includes_explanations():
    runtime, _ = make_runtime(ALL_RULES)
    ns_msg, _ = runtime.send_message(Sender.NS, NS_TEXT)
    runtime.explore(ns_msg.id, "cuisine")
    runtime.begin_recall()
    # "菜系" appears only in the explorer's explanation text.
    result = runtime.submit_recall(submission(("菜系", 5, 3), within=30))
    assert result.quantity == 1


def test_recall_over_time_rejected():
    runtime, _ = make_runtime(ALL_RULES, config=SessionConfig(recall_test_seconds=60))
    runtime.begin_recall()
    with pytest.raises(OverTimeError):
        runtime.submit_recall(submission(("x y", 1, 1), within=61))
    # At the budget is still acceptable.
    runtime.submit_recall(submission(within=60))


def test_recall_double_submit_rejected():
    runtime, _ = make_runtime(ALL_RULES)
    runtime.begin_recall()
    runtime.submit_recall(submission(within=10))
    with pytest.raises(WrongStateError):
        runtime.submit_recall(submission(within=20))


def test_recall_requires_recall_state():
    runtime, _ = make_runtime(ALL_RULES)
    with pytest.raises(WrongStateError):
        runtime.submit_recall(submission(within=10))


def test_report_requires_finished_session():
    runtime, _ = make_runtime(ALL_RULES)
    with pytest.raises(WrongStateError):
        runtime.report()


# -- persistence and recovery ---------------------------------------------------


def test_runtime_reload_preserves_everything(tmp_path):
    clock = FakeClock()
    provider = MockProvider(ALL_RULES)
    gateway = Gateway(provider)
    runtime = SessionRuntime.create(
        "persist-me", SessionConfig(similarity_threshold=-1.0), gateway,
        data_dir=tmp_path / "persist-me", clock=clock,
    )
    run_scenario(runtime)
    runtime.begin_recall()
    runtime.submit_recall(submission(("mala hotpot", 6, 4), within=45))
    runtime.close()
    report_before = runtime.report().to_json_dict()

    reloaded = SessionRuntime.load(tmp_path / "persist-me", Gateway(MockProvider(ALL_RULES)))
    assert reloaded.session.state.value == "closed"
    assert [m.to_json_dict() for m in reloaded.session.messages] == [
        m.to_json_dict() for m in runtime.session.messages
    ]
    assert len(reloaded.store.entries) == len(runtime.store.entries)
    assert reloaded.report().to_json_dict() == report_before


def test_reload_mid_session_continues(tmp_path):
    clock = FakeClock()
    gateway = Gateway(MockProvider(ALL_RULES))
    runtime = SessionRuntime.create(
        "crashy", SessionConfig(), gateway, data_dir=tmp_path / "crashy", clock=clock,
    )
    ns_msg, _ = runtime.send_message(Sender.NS, NS_TEXT)
    runtime.explore(ns_msg.id, "cuisine")
    # Simulate a crash: drop the runtime, reload from disk, keep going.
    provider = CountingProvider(ALL_RULES)
    reloaded = SessionRuntime.load(tmp_path / "crashy", Gateway(provider), clock=clock)
    assert [e.surface_text for e in reloaded.store.entries] == ["cuisine"]
    build, _ = reloaded.build_expression(DRAFT)
    assert build.translated_text == TRANSLATION
    reloaded.send_message(Sender.NNS, DRAFT, shown_translation=build.translated_text)
    assert reloaded.session.messages[-1].id == 2
    # Event sequence numbers continue without gaps across the reload.
    seqs = [e.seq for e in reloaded.events.events]
    assert seqs == list(range(1, len(seqs) + 1))


def test_reload_restores_comprehension_cache(tmp_path):
    gateway = Gateway(MockProvider(ALL_RULES))
    runtime = SessionRuntime.create(
        "cached", SessionConfig(), gateway, data_dir=tmp_path / "cached",
        clock=FakeClock(),
    )
    ns_msg, _ = runtime.send_message(Sender.NS, NS_TEXT)
    first = runtime.comprehend_full(ns_msg.id)

    provider = CountingProvider(ALL_RULES)
    reloaded = SessionRuntime.load(tmp_path / "cached", Gateway(provider), clock=FakeClock())
    again = reloaded.comprehend_full(ns_msg.id)
    assert provider.complete_calls == 0  # served from the restored cache
    assert again.translated_text == first.translated_text


# -- frame dispatch ----------------------------------------------------------------


def make_engine(tmp_path=None, rules=ALL_RULES, config=None):
    gateway = Gateway(MockProvider(list(rules)))
    return SessionEngine(
        gateway,
        config or SessionConfig(similarity_threshold=-1.0),
        data_dir=tmp_path,
        clock=FakeClock(),
    )


def frame(ftype, payload, token="t1"):
    return WireFrame(ftype, token, payload)


def by_type(outs, ftype):
    return [o for o in outs if o.frame.type == ftype]


def test_hello_acks_with_session_snapshot():
    engine = make_engine()
    outs = engine.handle_frame(None, frame("hello", {"role": "NNS", "request_id": "r1"}))
    assert len(outs) == 1
    out = outs[0]
    assert out.recipient == Sender.NNS
    assert out.frame.type == "ack"
    assert out.frame.payload["request_id"] == "r1"
    assert out.frame.payload["session"]["id"] == "t1"
    assert out.frame.payload["session"]["state"] == "active"
    assert out.frame.payload["history"] == []
    assert out.frame.payload["entries"] == []


def test_message_frame_acks_and_relays():
    engine = make_engine()
    engine.handle_frame(None, frame("hello", {"role": "NNS"}))
    engine.handle_frame(None, frame("hello", {"role": "NS"}))
    outs = engine.handle_frame(
        Sender.NS, frame("message", {"text": "hi!", "request_id": "r9"})
    )
    acks = by_type(outs, "ack")
    pushes = by_type(outs, "message")
    assert len(acks) == 1 and acks[0].recipient == Sender.NS
    assert acks[0].frame.payload["request_id"] == "r9"
    assert acks[0].frame.payload["message"]["original_text"] == "hi!"
    assert len(pushes) == 1 and pushes[0].recipient == Sender.NNS
    assert "request_id" not in pushes[0].frame.payload


def test_frame_before_hello_is_protocol_error():
    engine = make_engine()
    outs = engine.handle_frame(None, frame("message", {"text": "hi"}))
    assert outs[0].frame.type == "error"
    assert outs[0].frame.payload["code"] == "protocol-error"


def test_server_only_frame_type_rejected():
    engine = make_engine()
    outs = engine.handle_frame(Sender.NNS, frame("cards", {"cards": []}))
    assert outs[0].frame.type == "error"
    assert outs[0].frame.payload["code"] == "protocol-error"


def test_malformed_payload_becomes_error_frame():
    engine = make_engine()
    engine.handle_frame(None, frame("hello", {"role": "NNS"}))
    # message_id missing entirely -> KeyError inside dispatch.
    outs = engine.handle_frame(Sender.NNS, frame("translate_full", {"request_id": "r2"}))
    assert outs[0].frame.type == "error"
    assert "malformed payload" in outs[0].frame.payload["message"]
    assert outs[0].frame.payload["request_id"] == "r2"


def test_bad_role_value_is_error_not_crash():
    engine = make_engine()
    outs = engine.handle_frame(None, frame("hello", {"role": "ADMIN"}))
    assert outs[0].frame.type == "error"
    # "System" is a valid sender value but not a joinable chat role.
    outs = engine.handle_frame(None, frame("hello", {"role": "System"}))
    assert outs[0].frame.type == "error"
    assert outs[0].frame.payload["code"] == "protocol-error"


def test_assist_frames_are_nns_only():
    engine = make_engine()
    engine.handle_frame(None, frame("hello", {"role": "NNS"}))
    engine.handle_frame(None, frame("hello", {"role": "NS"}))
    engine.handle_frame(Sender.NS, frame("message", {"text": NS_TEXT}))
    outs = engine.handle_frame(Sender.NS, frame("translate_full", {"message_id": 1}))
    assert outs[0].frame.type == "error"
    assert outs[0].frame.payload["code"] == "feature-disabled"
    # The same frame from the NNS side succeeds.
    outs = engine.handle_frame(Sender.NNS, frame("translate_full", {"message_id": 1}))
    assert outs[0].frame.type == "ack"
    assert outs[0].frame.payload["translation"]["translated_text"].startswith("听说")


def test_full_frame_flow_with_cards_and_recall():
    engine = make_engine()
    engine.handle_frame(None, frame("hello", {"role": "NNS"}))
    engine.handle_frame(None, frame("hello", {"role": "NS"}))
    engine.handle_frame(Sender.NS, frame("message", {"text": NS_TEXT}))
    outs = engine.handle_frame(Sender.NNS, frame("explore", {"message_id": 1, "selection": "cuisine"}))
    assert outs[0].frame.payload["explanation"]["entry_id"] == 1

    outs = engine.handle_frame(Sender.NNS, frame("build_expression", {"draft": DRAFT}))
    build = by_type(outs, "ack")[0].frame.payload["build"]
    assert build["translated_text"] == TRANSLATION
    cards_frames = by_type(outs, "cards")
    assert len(cards_frames) == 1  # the explored "cuisine" resurfaces
    assert cards_frames[0].recipient == Sender.NNS
    shown = [c["entry_id"] for c in cards_frames[0].frame.payload["cards"]]
    assert 1 in shown

    outs = engine.handle_frame(Sender.NNS, frame("card_interact", {"entry_id": 1}))
    entry = outs[0].frame.payload["entry"]
    assert entry["interaction_count"] == 1
    assert entry["pinned"] is True

    outs = engine.handle_frame(Sender.NNS, frame("begin_recall", {}))
    assert outs[0].frame.payload["state"] == "recall_test"
    assert outs[0].frame.payload["budget_seconds"] == 180

    outs = engine.handle_frame(
        Sender.NNS,
        frame(
            "recall_submit",
            {
                "items": [{"expression": "mala hotpot", "confidence": 6, "difficulty": 4}],
                "submitted_within_seconds": 90,
            },
        ),
    )
    payload = outs[0].frame.payload
    assert payload["recall"]["quantity"] == 1
    assert payload["report"]["card_interaction_count"] == 1

    # After recall begins, chatting is over.
    outs = engine.handle_frame(Sender.NS, frame("message", {"text": "one more"}))
    assert outs[0].frame.type == "error"
    assert outs[0].frame.payload["code"] == "wrong-state"


def test_hello_after_restart_returns_history_and_pinned(tmp_path):
    engine = make_engine(tmp_path)
    engine.handle_frame(None, frame("hello", {"role": "NNS"}))
    engine.handle_frame(None, frame("hello", {"role": "NS"}))
    engine.handle_frame(Sender.NS, frame("message", {"text": NS_TEXT}))
    engine.handle_frame(Sender.NNS, frame("explore", {"message_id": 1, "selection": "cuisine"}))
    engine.handle_frame(Sender.NS, frame("message", {"text": "Do you like spicy food?"}))
    engine.handle_frame(Sender.NNS, frame("card_interact", {"entry_id": 1}))

    # A new engine over the same directory is a restarted server process.
    fresh = make_engine(tmp_path)
    outs = fresh.handle_frame(None, frame("hello", {"role": "NNS"}))
    payload = outs[0].frame.payload
    assert [m["original_text"] for m in payload["history"]] == [
        NS_TEXT, "Do you like spicy food?",
    ]
    assert payload["entries"] == [
        {"entry_id": 1, "surface_text": "cuisine", "shown_context": NS_TEXT, "pinned": True}
    ]


def test_role_taken_error_frame():
    engine = make_engine()
    engine.handle_frame(None, frame("hello", {"role": "NNS", "participant": "alice"}))
    outs = engine.handle_frame(None, frame("hello", {"role": "NNS", "participant": "bob"}))
    assert outs[0].frame.type == "error"
    assert outs[0].frame.payload["code"] == "role-taken"


def test_close_session_is_idempotent(tmp_path):
    engine = make_engine(tmp_path)
    engine.handle_frame(None, frame("hello", {"role": "NNS"}))
    engine.close_session("t1")
    engine.close_session("t1")  # second close is a no-op
    assert engine.runtime("t1").session.state.value == "closed"
    engine.close_session("missing-token")  # unknown tokens are ignored
