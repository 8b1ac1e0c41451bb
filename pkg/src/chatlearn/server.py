"""WebSocket front end: one persistent connection per participant.

Each connection must open with a hello frame naming its role; after that,
frames are dispatched to the session engine and its outbound frames are
routed to whichever participant they address. Engine work runs on worker
threads so a slow model call never stalls the event loop.

A session is closed when both of its participants have disconnected. A
killed server leaves sessions on disk in their last persisted state, and
a restarted one reloads them on the next hello.
"""

from __future__ import annotations

import asyncio
import logging
from typing import Optional

from websockets.asyncio.server import serve

from .core import Sender
from .engine import Outbound, SessionEngine
from .errors import ProtocolError
from .protocol import WireFrame, decode_frame, encode_frame

logger = logging.getLogger(__name__)


class ChatServer:
    def __init__(self, engine: SessionEngine, host: str = "127.0.0.1", port: int = 8765):
        self.engine = engine
        self.host = host
        self.port = port
        self._conns: dict[str, dict[Sender, object]] = {}

    # -- routing ----------------------------------------------------------

    async def _deliver(
        self,
        ws,
        self_role: Optional[Sender],
        token: Optional[str],
        outs: list[Outbound],
    ) -> None:
        for out in outs:
            text = encode_frame(out.frame)
            if self_role is not None and out.recipient == self_role:
                await ws.send(text)
                continue
            peer = self._conns.get(token or "", {}).get(out.recipient)
            if peer is not None:
                await peer.send(text)
            elif self_role is None:
                # Pre-hello errors have no registered role; answer directly.
                await ws.send(text)

    async def _handle(self, ws) -> None:
        role: Optional[Sender] = None
        token: Optional[str] = None
        try:
            async for raw in ws:
                try:
                    frame = decode_frame(raw)
                except ProtocolError as exc:
                    err = WireFrame(
                        "error", token or "unknown", {"code": exc.code, "message": exc.message}
                    )
                    await ws.send(encode_frame(err))
                    continue
                if frame.type == "hello" and role is None:
                    outs = await asyncio.to_thread(self.engine.handle_frame, None, frame)
                    failed = any(o.frame.type == "error" for o in outs)
                    if not failed:
                        role = Sender(frame.payload["role"])
                        token = frame.session_token
                        self._conns.setdefault(token, {})[role] = ws
                    await self._deliver(ws, role, token, outs)
                    continue
                outs = await asyncio.to_thread(self.engine.handle_frame, role, frame)
                await self._deliver(ws, role, token, outs)
        finally:
            if token is not None and role is not None:
                conns = self._conns.get(token, {})
                if conns.get(role) is ws:
                    del conns[role]
                if not conns:
                    self._conns.pop(token, None)
                    try:
                        await asyncio.to_thread(self.engine.close_session, token)
                    except Exception:
                        logger.exception("failed to close session %s", token)

    # -- lifecycle ----------------------------------------------------------

    async def run(self) -> None:
        async with serve(self._handle, self.host, self.port) as server:
            bound_port = server.sockets[0].getsockname()[1] if server.sockets else self.port
            print(f"chatlearn serve listening on ws://{self.host}:{bound_port}", flush=True)
            await asyncio.get_running_loop().create_future()


def run_server(engine: SessionEngine, host: str, port: int) -> None:
    try:
        asyncio.run(ChatServer(engine, host, port).run())
    except KeyboardInterrupt:
        pass
