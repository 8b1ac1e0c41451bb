"""Service configuration: JSON file plus environment overrides.

Environment variables override the provider block of the config file:
LLM_PROVIDER selects the backend ("mock" or "http"), LLM_BASE_URL,
LLM_CHAT_MODEL, LLM_EMBED_MODEL and LLM_API_KEY configure the HTTP
backend, and LLM_MOCK_SCRIPT points the mock at a JSONL rules file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .core import SessionConfig
from .errors import InvalidConfigError
from .gateway import (
    DEFAULT_MAX_IN_FLIGHT,
    DEFAULT_TIMEOUT_S,
    Gateway,
    HttpProvider,
    MockProvider,
    Provider,
)

_SERVICE_KEYS = {"host", "port", "data_dir", "session", "provider", "max_in_flight", "timeout_s"}


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    data_dir: Path = Path("data")
    session: SessionConfig = field(default_factory=SessionConfig)
    provider: dict = field(default_factory=lambda: {"kind": "mock", "rules": []})
    max_in_flight: int = DEFAULT_MAX_IN_FLIGHT
    timeout_s: float = DEFAULT_TIMEOUT_S


def load_service_config(path: Path | str) -> ServiceConfig:
    """Read a service config file; relative paths resolve against it."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise InvalidConfigError("config must be a JSON object")
    unknown = set(raw) - _SERVICE_KEYS
    if unknown:
        raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
    base = path.parent
    data_dir = Path(raw.get("data_dir", "data"))
    if not data_dir.is_absolute():
        data_dir = base / data_dir
    provider = raw.get("provider", {"kind": "mock", "rules": []})
    if not isinstance(provider, dict):
        raise InvalidConfigError("'provider' must be an object")
    provider = dict(provider)
    if "script" in provider and not Path(provider["script"]).is_absolute():
        provider["script"] = str(base / provider["script"])
    cfg = ServiceConfig(
        host=raw.get("host", "127.0.0.1"),
        port=int(raw.get("port", 8765)),
        data_dir=data_dir,
        session=SessionConfig.from_dict(raw.get("session", {})),
        provider=provider,
        max_in_flight=int(raw.get("max_in_flight", DEFAULT_MAX_IN_FLIGHT)),
        timeout_s=float(raw.get("timeout_s", DEFAULT_TIMEOUT_S)),
    )
    if cfg.port < 0 or cfg.port > 65535:
        raise InvalidConfigError("port must be in [0, 65535]")
    return cfg


def build_provider(
    spec: Mapping,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    env: Optional[Mapping[str, str]] = None,
) -> Provider:
    """Instantiate the model backend from config, with env overrides."""
    env = os.environ if env is None else env
    kind = env.get("LLM_PROVIDER") or spec.get("kind", "mock")
    if kind == "mock":
        rules = list(spec.get("rules", []))
        script = env.get("LLM_MOCK_SCRIPT") or spec.get("script")
        if script:
            with open(script, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        rules.append(json.loads(line))
        return MockProvider(rules)
    if kind == "http":
        base_url = env.get("LLM_BASE_URL") or spec.get("base_url")
        chat_model = env.get("LLM_CHAT_MODEL") or spec.get("chat_model")
        embed_model = env.get("LLM_EMBED_MODEL") or spec.get("embed_model")
        if not base_url or not chat_model or not embed_model:
            raise InvalidConfigError(
                "http provider needs base_url, chat_model and embed_model"
            )
        api_key = env.get("LLM_API_KEY") or spec.get("api_key")
        return HttpProvider(
            base_url=base_url,
            chat_model=chat_model,
            embed_model=embed_model,
            api_key=api_key,
            timeout_s=timeout_s,
        )
    raise InvalidConfigError(f"unknown provider kind {kind!r}")


def build_gateway(cfg: ServiceConfig, env: Optional[Mapping[str, str]] = None) -> Gateway:
    provider = build_provider(cfg.provider, timeout_s=cfg.timeout_s, env=env)
    return Gateway(provider, max_in_flight=cfg.max_in_flight)
