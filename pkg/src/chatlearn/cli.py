"""Command-line entry points: serve, replay, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import build_gateway, load_service_config
from .engine import SessionEngine, SessionRuntime
from .errors import ChatLearnError, UnknownSessionError
from .gateway import Gateway, MockProvider
from .metrics import format_report_table
from .replay import load_script, run_script
from .server import run_server


def _cmd_serve(args: argparse.Namespace) -> int:
    cfg = load_service_config(args.config)
    gateway = build_gateway(cfg)
    engine = SessionEngine(gateway, cfg.session, data_dir=cfg.data_dir)
    run_server(engine, cfg.host, cfg.port)
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    script = load_script(args.script)
    result = run_script(script, args.out)
    print(f"session {result.session_id} replayed into {result.out_dir}")
    print(f"report: {result.report_path}")
    print()
    print(format_report_table(result.report))
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    # Reports only read persisted state, so a stub provider suffices.
    gateway = Gateway(MockProvider([]))
    try:
        runtime = SessionRuntime.load(Path(args.session), gateway)
    except OSError as exc:
        raise UnknownSessionError(f"cannot load session directory: {exc}") from exc
    report = runtime.report()
    print(json.dumps(report.to_json_dict(), ensure_ascii=False, indent=2))
    print()
    print(format_report_table(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chatlearn",
        description="Two-party chat service with translation support and expression review.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve_p = sub.add_parser("serve", help="run the websocket chat server")
    serve_p.add_argument("--config", required=True, type=Path, help="service config JSON file")
    serve_p.set_defaults(func=_cmd_serve)

    replay_p = sub.add_parser("replay", help="replay a scripted session headlessly")
    replay_p.add_argument("--script", required=True, type=Path, help="transcript script JSON")
    replay_p.add_argument("--out", required=True, type=Path, help="output directory")
    replay_p.set_defaults(func=_cmd_replay)

    report_p = sub.add_parser("report", help="print the metrics report for a stored session")
    report_p.add_argument(
        "--session", required=True, type=Path, help="session data directory"
    )
    report_p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ChatLearnError as exc:
        print(f"error ({exc.code}): {exc.message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
