"""Script validation and deterministic replay."""

import json

import pytest

from chatlearn.errors import InvalidConfigError, ScriptError, StepFailureError
from chatlearn.replay import LogicalClock, load_script, run_script
from conftest import FIXTURES


def write_script(tmp_path, body):
    path = tmp_path / "script.json"
    path.write_text(json.dumps(body, ensure_ascii=False), encoding="utf-8")
    return path


BASE = {
    "session": {"id": "t", "config": {}},
    "mock_rules": [{"match": "", "reply": '{"translated_text": "ok"}'}],
}


def test_logical_clock_is_deterministic():
    a, b = LogicalClock(), LogicalClock()
    assert [a() for _ in range(3)] == [b() for _ in range(3)]
    assert a() - b() == 0
    c = LogicalClock(epoch_ms=5, step_ms=2)
    assert [c(), c(), c()] == [5, 7, 9]


def test_load_script_happy_path(tmp_path):
    path = write_script(tmp_path, {
        **BASE,
        "steps": [
            {"op": "ns_send", "text": "hello"},
            {"op": "nns_full_comprehend", "message_step": 0},
            {"op": "close"},
        ],
    })
    script = load_script(path)
    assert script.session_id == "t"
    assert len(script.steps) == 3
    assert script.mock_rules[0]["reply"] == '{"translated_text": "ok"}'


def test_load_script_reads_external_mock_rules(tmp_path):
    (tmp_path / "rules.jsonl").write_text(
        '{"match": "", "reply": "from file"}\n', encoding="utf-8"
    )
    path = write_script(tmp_path, {
        "session": {"id": "t"},
        "mock_script": "rules.jsonl",
        "mock_rules": [{"match": "x", "reply": "inline"}],
        "steps": [{"op": "close"}],
    })
    script = load_script(path)
    assert [r["reply"] for r in script.mock_rules] == ["from file", "inline"]


@pytest.mark.parametrize(
    "steps",
    [
        [],
        [{"op": "ns_send", "text": "hi"}],                    # no close
        [{"op": "fly_to_moon"}, {"op": "close"}],              # unknown op
        [{"op": "ns_send", "text": "  "}, {"op": "close"}],    # blank text
        [{"op": "nns_full_comprehend", "message_step": 0}, {"op": "close"}],  # self ref
        [{"op": "ns_send", "text": "hi"},
         {"op": "nns_full_comprehend", "message_step": 5}, {"op": "close"}],  # forward ref
        [{"op": "ns_send", "text": "hi"},
         {"op": "nns_explore", "message_step": 0}, {"op": "close"}],  # no selection
        [{"op": "ns_send", "text": "hi"},
         {"op": "nns_card_interact", "capture_step": 0}, {"op": "close"}],  # wrong ref kind
        [{"op": "recall_submit", "items": [], "submitted_within_seconds": 1},
         {"op": "close"}],                                     # recall before begin
        [{"op": "begin_recall"}, {"op": "begin_recall"}, {"op": "close"}],
        [{"op": "begin_recall"},
         {"op": "recall_submit", "items": [{"expression": "x"}],
          "submitted_within_seconds": 1}, {"op": "close"}],    # item missing fields
        [{"op": "close"}, {"op": "ns_send", "text": "hi"}],    # step after close
    ],
)
def test_load_script_rejects_bad_structure(tmp_path, steps):
    path = write_script(tmp_path, {**BASE, "steps": steps})
    with pytest.raises(ScriptError):
        load_script(path)


def test_load_script_rejects_bad_config(tmp_path):
    path = write_script(tmp_path, {
        "session": {"id": "t", "config": {"top_k": 0}},
        "steps": [{"op": "close"}],
    })
    with pytest.raises(InvalidConfigError):
        load_script(path)


def test_load_script_rejects_unreadable_file(tmp_path):
    with pytest.raises(ScriptError):
        load_script(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ScriptError):
        load_script(bad)


def test_run_script_fixture_a_matches_golden_report(tmp_path):
    script = load_script(FIXTURES / "fixture_a" / "script.json")
    result = run_script(script, tmp_path / "out")
    produced = json.loads(result.report_path.read_text(encoding="utf-8"))
    golden = json.loads(
        (FIXTURES / "fixture_a" / "expected_report.json").read_text(encoding="utf-8")
    )
    assert produced == golden


def test_run_script_twice_is_byte_identical(tmp_path):
    script = load_script(FIXTURES / "fixture_a" / "script.json")
    first = run_script(script, tmp_path / "one")
    second = run_script(script, tmp_path / "two")

    rel_files = sorted(
        p.relative_to(first.out_dir) for p in first.out_dir.rglob("*") if p.is_file()
    )
    assert rel_files, "replay produced no files"
    assert rel_files == sorted(
        p.relative_to(second.out_dir) for p in second.out_dir.rglob("*") if p.is_file()
    )
    for rel in rel_files:
        assert (first.out_dir / rel).read_bytes() == (second.out_dir / rel).read_bytes(), rel


def test_run_script_refuses_used_directory(tmp_path):
    script = load_script(FIXTURES / "fixture_a" / "script.json")
    run_script(script, tmp_path / "out")
    with pytest.raises(ScriptError):
        run_script(script, tmp_path / "out")


def test_run_script_wraps_step_failures_with_index(tmp_path):
    path = write_script(tmp_path, {
        **BASE,
        "steps": [
            {"op": "ns_send", "text": "hello"},
            {"op": "nns_explore", "message_step": 0, "selection": "absent words"},
            {"op": "close"},
        ],
    })
    script = load_script(path)
    with pytest.raises(StepFailureError) as excinfo:
        run_script(script, tmp_path / "out")
    assert excinfo.value.index == 1
    assert "selection" in str(excinfo.value.cause)


def test_run_script_card_interact_pair_out_of_range(tmp_path):
    path = write_script(tmp_path, {
        "session": {"id": "t", "config": {}},
        "mock_rules": [
            {"match": "Given the phrase:", "reply": "an explanation"},
            {"match": "", "reply": '{"translated_text": "ok"}'},
        ],
        "steps": [
            {"op": "ns_send", "text": "hello there"},
            {"op": "nns_explore", "message_step": 0, "selection": "hello"},
            {"op": "nns_card_interact", "capture_step": 1, "pair": 7},
            {"op": "close"},
        ],
    })
    script = load_script(path)
    with pytest.raises(StepFailureError) as excinfo:
        run_script(script, tmp_path / "out")
    assert excinfo.value.index == 2


@pytest.mark.parametrize("name", ["demo_topic1", "demo_topic2", "demo_topic3"])
def test_bundled_demo_scripts_replay(tmp_path, name):
    script = load_script(FIXTURES / name / "script.json")
    result = run_script(script, tmp_path / name)
    assert result.report_path.exists()
    report = json.loads(result.report_path.read_text(encoding="utf-8"))
    assert report["message_count"] >= 1
