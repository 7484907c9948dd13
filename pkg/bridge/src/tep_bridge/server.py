"""Strict one-line-request / one-line-response serving loop.

One UTF-8 JSON document per line.  A malformed line earns an error response
with kind ``ProtocolViolation`` and the connection stays alive; an unknown
method earns ``UnknownMethod``; ``shutdown`` answers ok and ends the loop.
"""

from __future__ import annotations

import json
import socket
import time
from typing import IO

from .reference import BridgeError, HandlerRegistry

PROTOCOL_VERSION = 1


def _respond(writer: IO[bytes], doc: dict) -> None:
    writer.write((json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8"))
    writer.flush()


def _error(writer: IO[bytes], request_id, kind: str, message: str) -> None:
    _respond(
        writer,
        {"id": request_id, "status": "error", "error_kind": kind, "error_msg": message},
    )


def serve(reader: IO[bytes], writer: IO[bytes], registry: HandlerRegistry, delay_ms: int = 0) -> None:
    """Serve one connection until shutdown or EOF; a vanished client is EOF too."""
    try:
        _serve_loop(reader, writer, registry, delay_ms)
    except (BrokenPipeError, ConnectionResetError):
        return


def _serve_loop(reader: IO[bytes], writer: IO[bytes], registry: HandlerRegistry, delay_ms: int) -> None:
    while True:
        raw = reader.readline()
        if not raw:
            return
        line = raw.decode("utf-8", errors="replace").strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
            if not isinstance(doc, dict):
                raise ValueError("request is not an object")
        except ValueError as exc:
            _error(writer, None, "ProtocolViolation", f"unparseable request line: {exc}")
            continue
        request_id = doc.get("id")
        method = doc.get("method")
        params = doc.get("params", {})
        if method == "hello":
            _respond(
                writer,
                {
                    "id": request_id,
                    "status": "ok",
                    "payload": {
                        "protocol_version": PROTOCOL_VERSION,
                        "capabilities": registry.capabilities(),
                    },
                },
            )
            continue
        if delay_ms:
            time.sleep(delay_ms / 1000.0)
        if method == "shutdown":
            _respond(writer, {"id": request_id, "status": "ok", "payload": {"ok": True}})
            return
        handler = registry.get(method)
        if handler is None:
            _error(writer, request_id, "UnknownMethod", f"unknown method {method!r}")
            continue
        try:
            payload = handler(params)
        except BridgeError as exc:
            _error(writer, request_id, exc.kind, exc.message)
            continue
        except Exception as exc:  # noqa: BLE001 -- a handler bug must not kill the loop
            _error(writer, request_id, "InternalError", f"{type(exc).__name__}: {exc}")
            continue
        _respond(writer, {"id": request_id, "status": "ok", "payload": payload})


def serve_tcp(port: int, registry: HandlerRegistry, delay_ms: int = 0) -> None:
    """Bind, announce the port, serve exactly one connection, exit."""
    listener = socket.create_server(("127.0.0.1", port))
    actual = listener.getsockname()[1]
    print(f"PORT {actual}", flush=True)
    conn, _ = listener.accept()
    with conn, conn.makefile("rb") as reader, conn.makefile("wb") as writer:
        serve(reader, writer, registry, delay_ms=delay_ms)
    listener.close()
