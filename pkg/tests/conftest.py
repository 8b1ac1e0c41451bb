"""Shared test helpers: fake clock, scripted providers, brute-force oracles."""

from __future__ import annotations

import json
import math
import os
import re
import signal
import subprocess
import sys
import time
from pathlib import Path

import pytest

from chatlearn.core import SessionConfig
from chatlearn.engine import SessionRuntime
from chatlearn.gateway import Gateway, MockProvider, TemplateName

TESTS_DIR = Path(__file__).parent
PKG_ROOT = TESTS_DIR.parent
FIXTURES = PKG_ROOT / "fixtures"
GOLDEN_PROMPTS = TESTS_DIR / "golden_prompts"


class FakeClock:
    """Deterministic millisecond clock advancing by a fixed step per call."""

    def __init__(self, start: int = 1_000_000_000_000, step: int = 1000):
        self.now = start
        self.step = step

    def __call__(self) -> int:
        value = self.now
        self.now += self.step
        return value


class CountingProvider(MockProvider):
    """Mock provider that counts completion and embedding calls."""

    def __init__(self, rules, dim=64):
        super().__init__(rules, dim=dim)
        self.complete_calls = 0
        self.embed_calls = 0

    def complete_raw(self, prompt, params=None):
        self.complete_calls += 1
        return super().complete_raw(prompt, params)

    def embed_raw(self, text):
        self.embed_calls += 1
        return super().embed_raw(text)


def make_runtime(rules, config=None, data_dir=None, clock=None, provider_cls=MockProvider):
    """Build a session runtime on a scripted provider and fake clock."""
    provider = provider_cls(list(rules))
    gateway = Gateway(provider)
    runtime = SessionRuntime.create(
        "test-session",
        config or SessionConfig(),
        gateway,
        data_dir=data_dir,
        clock=clock or FakeClock(),
    )
    return runtime, provider


# -- brute-force retrieval oracle -----------------------------------------------


def oracle_cosine(a, b) -> float:
    """Cosine similarity in pure Python, independent of the numpy path."""
    dot = sum(x * y for x, y in zip(a, b))
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(x * x for x in b))
    return dot / (norm_a * norm_b)


def oracle_rank(candidates, query_vec, threshold, top_k):
    """Reference ranking: filter by threshold, sort, truncate.

    candidates: iterable of (entry_id, captured_at, vector). Returns
    [(entry_id, similarity)] best-first, ties broken by captured_at then
    id, both descending.
    """
    kept = []
    for entry_id, captured_at, vec in candidates:
        sim = oracle_cosine(query_vec, vec)
        if sim >= threshold:
            kept.append((sim, captured_at, entry_id))
    kept.sort(key=lambda t: (-t[0], -t[1], -t[2]))
    return [(entry_id, sim) for sim, _, entry_id in kept[:top_k]]


# -- golden prompt binding sets ---------------------------------------------------

CHONGQING_CONTEXT = (
    "NS: I heard that your hometown is Chongqing. Can you tell me about "
    "Chongqing's cuisine?\nNNS: I have lived there for twenty years."
)
CHONGQING_DRAFT = "There are many 美食 in Chongqing, especially 麻辣火锅"
CHONGQING_TRANSLATION = "There are many cuisines in Chongqing, especially mala hotpot"

# Each entry: golden file stem -> (template, bindings). The files were
# written by hand from the published template text; rendering must
# reproduce them byte for byte.
BINDING_SETS = {
    "a_translate": (
        TemplateName.TRANSLATE,
        {
            "NATIVE_LANGUAGE": "Chinese",
            "TARGET_LANGUAGE": "English",
            "CONTEXT": CHONGQING_CONTEXT,
            "USER_INPUT": CHONGQING_DRAFT,
        },
    ),
    "a_explain": (
        TemplateName.EXPLAIN,
        {
            "TARGET_LANGUAGE": "Chinese",
            "NATIVE_LANGUAGE": "English",
            "PHRASE": "cuisine",
            "CONTEXT": CHONGQING_CONTEXT,
        },
    ),
    "a_extract": (
        TemplateName.EXTRACT,
        {
            "NATIVE_LANGUAGE": "Chinese",
            "TARGET_LANGUAGE": "English",
            "USER_INPUT": CHONGQING_DRAFT,
        },
    ),
    "a_map": (
        TemplateName.MAP,
        {
            "NATIVE_LANGUAGE": "Chinese",
            "TARGET_LANGUAGE": "English",
            "LIST_OF_PHRASES": '["美食", "麻辣火锅"]',
            "TRANSLATED_TEXT": CHONGQING_TRANSLATION,
        },
    ),
    "b_translate": (
        TemplateName.TRANSLATE,
        {
            "NATIVE_LANGUAGE": "English",
            "TARGET_LANGUAGE": "Chinese",
            "USER_INPUT": "Long time no see, how have you been?",
        },
    ),
    "b_explain": (
        TemplateName.EXPLAIN,
        {
            "TARGET_LANGUAGE": "Chinese",
            "NATIVE_LANGUAGE": "English",
            "PHRASE": "Long time no see",
        },
    ),
    "b_extract": (
        TemplateName.EXTRACT,
        {
            "NATIVE_LANGUAGE": "Chinese",
            "TARGET_LANGUAGE": "English",
            "USER_INPUT": "今天天气很好",
        },
    ),
    "b_map": (
        TemplateName.MAP,
        {
            "NATIVE_LANGUAGE": "Chinese",
            "TARGET_LANGUAGE": "English",
            "LIST_OF_PHRASES": '["今天"]',
            "TRANSLATED_TEXT": "The weather is great today",
        },
    ),
    "c_translate": (
        TemplateName.TRANSLATE,
        {
            "NATIVE_LANGUAGE": "Spanish",
            "TARGET_LANGUAGE": "French",
            "CONTEXT": "NS: On se fait un rendez-vous demain?",
            "USER_INPUT": "Estoy muy feliz de verte",
        },
    ),
    "c_explain": (
        TemplateName.EXPLAIN,
        {
            "TARGET_LANGUAGE": "Spanish",
            "NATIVE_LANGUAGE": "French",
            "PHRASE": "rendez-vous",
            "CONTEXT": "NS: On se fait un rendez-vous demain?",
        },
    ),
    "c_extract": (
        TemplateName.EXTRACT,
        {
            "NATIVE_LANGUAGE": "Spanish",
            "TARGET_LANGUAGE": "French",
            "USER_INPUT": "Quiero comer paella y croissants",
        },
    ),
    "c_map": (
        TemplateName.MAP,
        {
            "NATIVE_LANGUAGE": "Spanish",
            "TARGET_LANGUAGE": "French",
            "LIST_OF_PHRASES": '["paella"]',
            "TRANSLATED_TEXT": "Je veux manger de la paella et des croissants",
        },
    ),
}


# -- live server harness ---------------------------------------------------------


class ServerProcess:
    """A chatlearn serve subprocess bound to an ephemeral port."""

    def __init__(self, config_path: Path):
        self.config_path = config_path
        self.proc: subprocess.Popen | None = None
        self.port: int | None = None

    def start(self, timeout: float = 15.0) -> "ServerProcess":
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "chatlearn", "serve", "--config", str(self.config_path)],
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
        )
        deadline = time.monotonic() + timeout
        line = ""
        while time.monotonic() < deadline:
            line = self.proc.stdout.readline()
            if not line:
                raise RuntimeError("server exited before announcing its port")
            match = re.search(r"listening on ws://[^:]+:(\d+)", line)
            if match:
                self.port = int(match.group(1))
                return self
        raise RuntimeError(f"server did not start in time; last line: {line!r}")

    @property
    def url(self) -> str:
        return f"ws://127.0.0.1:{self.port}"

    def kill(self) -> None:
        if self.proc and self.proc.poll() is None:
            os.kill(self.proc.pid, signal.SIGKILL)
            self.proc.wait(timeout=10)

    def stop(self) -> None:
        if self.proc and self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.kill()


def write_server_config(
    tmp_path: Path,
    rules: list[dict],
    session: dict | None = None,
    port: int = 0,
) -> Path:
    tmp_path.mkdir(parents=True, exist_ok=True)
    data_dir = tmp_path / "data"
    config = {
        "host": "127.0.0.1",
        "port": port,
        "data_dir": str(data_dir),
        "session": session or {},
        "provider": {"kind": "mock", "rules": rules},
    }
    path = tmp_path / "service.json"
    path.write_text(json.dumps(config, ensure_ascii=False, indent=2), encoding="utf-8")
    return path


@pytest.fixture
def fake_clock():
    return FakeClock()
