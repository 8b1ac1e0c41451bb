"""Text segmentation helpers: tokenization, Han detection, L1 span extraction.

The tokenizer is deliberately simple and deterministic so that counts are
reproducible across platforms: every Han character is one token, and any
other run of text is split into Unicode word tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

# Alphanumeric word runs, underscore excluded.
_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)

_HAN_RANGES = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2FA1F),
)


def is_han(ch: str) -> bool:
    """True if ``ch`` is a Han ideograph (CJK unified or compatibility)."""
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _HAN_RANGES)


def tokenize(text: str) -> list[str]:
    """Split ``text`` into tokens.

    Each Han character counts as its own token; everything between Han
    characters is split into alphanumeric word tokens.
    """
    tokens: list[str] = []
    buf: list[str] = []

    def flush() -> None:
        if buf:
            tokens.extend(_WORD_RE.findall("".join(buf)))
            buf.clear()

    for ch in text:
        if is_han(ch):
            flush()
            tokens.append(ch)
        else:
            buf.append(ch)
    flush()
    return tokens


def token_count(text: str) -> int:
    return len(tokenize(text))


def l1_token_count(text: str) -> int:
    """Number of Han tokens in ``text``."""
    return sum(1 for tok in tokenize(text) if len(tok) == 1 and is_han(tok))


@dataclass(frozen=True)
class L1Segment:
    """A maximal run of Han characters inside a draft.

    Offsets are character offsets into the original string, end exclusive.
    """

    start: int
    end: int
    text: str


def detect_l1_segments(text: str) -> list[L1Segment]:
    """Extract maximal Han runs from ``text``.

    Any non-Han character (latin letters, digits, punctuation, space)
    terminates a run. Spans never overlap and are ordered by start.
    """
    segments: list[L1Segment] = []
    start: int | None = None
    for i, ch in enumerate(text):
        if is_han(ch):
            if start is None:
                start = i
        else:
            if start is not None:
                segments.append(L1Segment(start, i, text[start:i]))
                start = None
    if start is not None:
        segments.append(L1Segment(start, len(text), text[start:]))
    return segments


def normalize_surface(text: str) -> str:
    """Dedup key for captured expressions: lowercase, collapsed whitespace."""
    return " ".join(text.lower().split())


def strip_edge_punctuation(text: str) -> str:
    """Drop non-alphanumeric characters from both ends of ``text``."""
    start = 0
    end = len(text)
    while start < end and not text[start].isalnum():
        start += 1
    while end > start and not text[end - 1].isalnum():
        end -= 1
    return text[start:end]
