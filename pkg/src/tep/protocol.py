"""Newline-delimited JSON wire protocol for out-of-process backends.

One UTF-8 JSON document per line, strict request/response alternation, one
in-flight request per connection.  Requests carry a per-connection strictly
increasing integer id which the response must echo.  Boxes cross the wire as
``[x0, y0, x1, y1]`` half-open pixel coordinates; masks as the textual RLE
form from :mod:`tep.geometry`.  Frames are referenced by
``(video_id, frame_index)`` against a shared dataset root; pixels never cross
the wire.

Endpoints are either a subprocess command (``exec:<command line>``) or a TCP
address (``tcp:<host>:<port>``).  Connecting performs a ``hello`` handshake
that checks the protocol version and learns the server's capabilities.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import socket
import subprocess
import time
from typing import Mapping, Optional

from .backends import (
    BackendSet,
    BackendProvider,
    CropRef,
    Detector,
    FrameRef,
    Judge,
    JudgeChoice,
    JudgeVerdict,
    NotInitialized,
    Segmenter,
    SegmenterInit,
    SegmenterSession,
    SemanticVerdict,
    TrackOutput,
    Tracker,
    TrackerSession,
)
from .geometry import BBox, Mask

PROTOCOL_VERSION = 1

DEFAULT_TIMEOUT_MS = 30_000

#: The closed method set of the wire protocol.
METHODS = frozenset(
    {
        "init_segmenter",
        "propagate",
        "prompt_box",
        "init_tracker",
        "track",
        "describe",
        "detect",
        "judge",
        "classify_semantic",
        "shutdown",
    }
)

#: Backend-interface operation -> wire method, exactly one each.
OP_TO_METHOD = {
    "Segmenter.init": "init_segmenter",
    "Segmenter.propagate": "propagate",
    "Segmenter.prompt_box": "prompt_box",
    "Tracker.init": "init_tracker",
    "Tracker.track": "track",
    "Detector.describe": "describe",
    "Detector.detect": "detect",
    "Judge.compare": "judge",
    "Judge.classify_semantic": "classify_semantic",
    "Connection.close": "shutdown",
}


class ProtocolError(Exception):
    """Base class for transport and framing failures."""


class SpawnFailed(ProtocolError):
    """Subprocess endpoint could not be started."""


class ConnectRefused(ProtocolError):
    """TCP endpoint is not accepting connections."""


class VersionMismatch(ProtocolError):
    """Server speaks a different protocol version."""


class BackendTimeout(ProtocolError):
    """No response line arrived within the configured timeout."""


class ProtocolViolation(ProtocolError):
    """Malformed line, wrong id, or a closed connection mid-exchange."""


class RemoteError(ProtocolError):
    """The server answered with an error response."""

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.message = message


class _Transport:
    """Line-oriented byte channel over a raw file descriptor."""

    def __init__(self) -> None:
        self._buffer = bytearray()

    def _read_fd(self) -> int:
        raise NotImplementedError

    def _read_chunk(self) -> bytes:
        return os.read(self._read_fd(), 65536)

    def write_line(self, line: str) -> None:
        raise NotImplementedError

    def read_line(self, timeout_s: float) -> str:
        deadline = time.monotonic() + timeout_s
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BackendTimeout(f"no response within {timeout_s:.1f}s")
            ready, _, _ = select.select([self._read_fd()], [], [], remaining)
            if not ready:
                continue
            chunk = self._read_chunk()
            if not chunk:
                raise ProtocolViolation("connection closed by server")
            self._buffer.extend(chunk)
        line, _, rest = bytes(self._buffer).partition(b"\n")
        self._buffer = bytearray(rest)
        return line.decode("utf-8")

    def close(self) -> None:
        raise NotImplementedError


class _SubprocessTransport(_Transport):
    def __init__(self, command: str):
        super().__init__()
        argv = shlex.split(command)
        if not argv:
            raise SpawnFailed("empty exec command")
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
            )
        except OSError as exc:
            raise SpawnFailed(f"cannot spawn {argv[0]!r}: {exc}") from exc

    def _read_fd(self) -> int:
        return self._proc.stdout.fileno()

    def write_line(self, line: str) -> None:
        try:
            self._proc.stdin.write(line.encode("utf-8") + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolViolation(f"server pipe closed: {exc}") from exc

    def close(self) -> None:
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class _TcpTransport(_Transport):
    def __init__(self, host: str, port: int):
        super().__init__()
        try:
            self._sock = socket.create_connection((host, port), timeout=10)
        except ConnectionRefusedError as exc:
            raise ConnectRefused(f"{host}:{port} refused the connection") from exc
        except OSError as exc:
            raise ConnectRefused(f"cannot reach {host}:{port}: {exc}") from exc
        self._sock.setblocking(True)

    def _read_fd(self) -> int:
        return self._sock.fileno()

    def _read_chunk(self) -> bytes:
        return self._sock.recv(65536)

    def write_line(self, line: str) -> None:
        try:
            self._sock.sendall(line.encode("utf-8") + b"\n")
        except OSError as exc:
            raise ProtocolViolation(f"socket closed: {exc}") from exc

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class Connection:
    """A single-owner, strictly sequential protocol connection."""

    def __init__(self, transport: _Transport, timeout_ms: int = DEFAULT_TIMEOUT_MS):
        self._transport = transport
        self._timeout_ms = timeout_ms
        self._next_id = 0
        self._closed = False
        self._desynced = False
        self.capabilities: tuple[str, ...] = ()

    def _handshake(self) -> None:
        # The request timeout guards steady-state latency; spawning a server
        # (interpreter start, model load) is allowed to take longer.
        request_timeout = self._timeout_ms
        self._timeout_ms = max(request_timeout, 10_000)
        try:
            payload = self.call("hello", {"protocol_version": PROTOCOL_VERSION})
        finally:
            self._timeout_ms = request_timeout
        version = payload.get("protocol_version")
        if version != PROTOCOL_VERSION:
            raise VersionMismatch(
                f"server speaks protocol {version!r}, need {PROTOCOL_VERSION}"
            )
        self.capabilities = tuple(payload.get("capabilities", ()))

    def call(self, method: str, params: Mapping) -> dict:
        """One request/response exchange; returns the ok payload."""
        if self._closed:
            raise ProtocolViolation("connection is closed")
        if self._desynced:
            # A late reply may still be in flight; strict alternation makes
            # the connection unusable after the first timeout.
            raise BackendTimeout("connection unusable after an earlier timeout")
        request_id = self._next_id
        self._next_id += 1
        self._transport.write_line(
            json.dumps(
                {"id": request_id, "method": method, "params": dict(params)},
                separators=(",", ":"),
            )
        )
        try:
            line = self._transport.read_line(self._timeout_ms / 1000.0)
        except BackendTimeout:
            self._desynced = True
            raise
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolViolation(f"unparseable response line: {line!r}") from exc
        if not isinstance(doc, dict):
            raise ProtocolViolation(f"response is not an object: {line!r}")
        if doc.get("id") != request_id:
            raise ProtocolViolation(
                f"response id {doc.get('id')!r} does not match request {request_id}"
            )
        status = doc.get("status")
        if status == "ok":
            payload = doc.get("payload")
            if payload is None:
                raise ProtocolViolation("ok response without payload")
            return payload
        if status == "error":
            kind = doc.get("error_kind")
            if not kind:
                raise ProtocolViolation("error response without error_kind")
            raise RemoteError(kind, doc.get("error_msg", ""))
        raise ProtocolViolation(f"unknown status {status!r}")

    def close(self) -> None:
        if self._closed:
            return
        try:
            self.call("shutdown", {})
        except ProtocolError:
            pass
        self._closed = True
        self._transport.close()

    def __enter__(self) -> "Connection":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def connect(endpoint_spec: str, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> Connection:
    """Open and handshake a connection to ``exec:<cmd>`` or ``tcp:<host>:<port>``."""
    if endpoint_spec.startswith("exec:"):
        transport: _Transport = _SubprocessTransport(endpoint_spec[len("exec:") :])
    elif endpoint_spec.startswith("tcp:"):
        rest = endpoint_spec[len("tcp:") :]
        host, _, port_text = rest.rpartition(":")
        if not host or not port_text.isdigit():
            raise ValueError(f"malformed tcp endpoint {endpoint_spec!r}")
        transport = _TcpTransport(host, int(port_text))
    else:
        raise ValueError(f"unknown endpoint spec {endpoint_spec!r}")
    conn = Connection(transport, timeout_ms=timeout_ms)
    try:
        conn._handshake()
    except ProtocolError:
        transport.close()
        raise
    return conn


# ---------------------------------------------------------------------------
# Wire value helpers
# ---------------------------------------------------------------------------


def bbox_to_wire(box: Optional[BBox]) -> Optional[list[int]]:
    return None if box is None else box.as_list()


def bbox_from_wire(value) -> Optional[BBox]:
    if value is None:
        return None
    if not (isinstance(value, list) and len(value) == 4):
        raise ProtocolViolation(f"malformed bbox {value!r}")
    try:
        return BBox.from_list(value)
    except (TypeError, ValueError) as exc:
        raise ProtocolViolation(f"malformed bbox {value!r}: {exc}") from exc


def track_output_from_wire(payload: Mapping) -> TrackOutput:
    bbox = bbox_from_wire(payload.get("bbox"))
    confidence = payload.get("confidence")
    if not isinstance(confidence, (int, float)):
        raise ProtocolViolation(f"malformed confidence {confidence!r}")
    try:
        return TrackOutput(bbox=bbox, confidence=float(confidence))
    except ValueError as exc:
        raise ProtocolViolation(f"invalid track output: {exc}") from exc


def crop_to_wire(ref: CropRef) -> dict:
    return {
        "video_id": ref.video_id,
        "frame_index": ref.frame_index,
        "bbox": ref.bbox.as_list(),
    }


def _mask_from_wire(payload: Mapping, key: str = "mask") -> Mask:
    text = payload.get(key)
    if not isinstance(text, str):
        raise ProtocolViolation(f"missing mask in payload: {payload!r}")
    try:
        return Mask.from_rle_string(text)
    except ValueError as exc:
        raise ProtocolViolation(f"malformed mask RLE: {exc}") from exc


# ---------------------------------------------------------------------------
# Remote adapters: one wire method per backend operation
# ---------------------------------------------------------------------------


class _RemoteSegmenterSession(SegmenterSession):
    def __init__(self, conn: Connection, session_id: str):
        self._conn = conn
        self._session_id = session_id

    def propagate(self, frame_index: int) -> Mask:
        payload = self._conn.call(
            "propagate", {"session": self._session_id, "frame_index": frame_index}
        )
        return _mask_from_wire(payload)

    def prompt_box(self, frame_index: int, box: BBox) -> None:
        self._conn.call(
            "prompt_box",
            {
                "session": self._session_id,
                "frame_index": frame_index,
                "bbox": box.as_list(),
            },
        )


class RemoteSegmenter(Segmenter):
    def __init__(self, conn: Connection):
        self._conn = conn

    def init(self, init: SegmenterInit) -> SegmenterSession:
        payload = self._conn.call(
            "init_segmenter",
            {
                "video_id": init.video_id,
                "object_id": init.object_id,
                "first_frame_index": init.first_frame_index,
                "first_mask": init.first_mask.to_rle_string(),
            },
        )
        session_id = payload.get("session")
        if not isinstance(session_id, str):
            raise ProtocolViolation(f"init_segmenter returned no session: {payload!r}")
        return _RemoteSegmenterSession(self._conn, session_id)


class _RemoteTrackerSession(TrackerSession):
    def __init__(self, conn: Connection, session_id: str):
        self._conn = conn
        self._session_id = session_id

    def track(self, frame_index: int) -> TrackOutput:
        payload = self._conn.call(
            "track", {"session": self._session_id, "frame_index": frame_index}
        )
        return track_output_from_wire(payload)


class RemoteTracker(Tracker):
    def __init__(self, conn: Connection):
        self._conn = conn

    def init(self, template_bbox: BBox, first_frame: FrameRef) -> TrackerSession:
        video_id, frame_index = first_frame
        payload = self._conn.call(
            "init_tracker",
            {
                "video_id": video_id,
                "frame_index": frame_index,
                "bbox": template_bbox.as_list(),
            },
        )
        session_id = payload.get("session")
        if not isinstance(session_id, str):
            raise ProtocolViolation(f"init_tracker returned no session: {payload!r}")
        return _RemoteTrackerSession(self._conn, session_id)


class RemoteDetector(Detector):
    def __init__(self, conn: Connection):
        self._conn = conn
        self._video_id: Optional[str] = None

    def describe(self, first_frame: FrameRef, mask: Mask) -> str:
        video_id, frame_index = first_frame
        payload = self._conn.call(
            "describe",
            {
                "video_id": video_id,
                "frame_index": frame_index,
                "mask": mask.to_rle_string(),
            },
        )
        description = payload.get("description")
        if not isinstance(description, str):
            raise ProtocolViolation(f"describe returned no description: {payload!r}")
        self._video_id = video_id
        return description

    def detect(self, frame_index: int, description: str) -> TrackOutput:
        if self._video_id is None:
            raise NotInitialized("detect before describe")
        payload = self._conn.call(
            "detect",
            {
                "video_id": self._video_id,
                "frame_index": frame_index,
                "description": description,
            },
        )
        return track_output_from_wire(payload)


class RemoteJudge(Judge):
    def __init__(self, conn: Connection):
        self._conn = conn

    def compare(self, reference: CropRef, baseline: CropRef, auxiliary: CropRef) -> JudgeVerdict:
        payload = self._conn.call(
            "judge",
            {
                "reference": crop_to_wire(reference),
                "baseline": crop_to_wire(baseline),
                "auxiliary": crop_to_wire(auxiliary),
            },
        )
        choice = payload.get("choice")
        if choice not in ("baseline", "auxiliary"):
            raise ProtocolViolation(f"judge returned invalid choice {choice!r}")
        return JudgeVerdict(
            choice=JudgeChoice.BASELINE_CROP if choice == "baseline" else JudgeChoice.AUXILIARY_CROP,
            rationale=str(payload.get("rationale", "")),
        )

    def classify_semantic(self, frame: FrameRef, mask: Mask) -> SemanticVerdict:
        video_id, frame_index = frame
        payload = self._conn.call(
            "classify_semantic",
            {
                "video_id": video_id,
                "frame_index": frame_index,
                "mask": mask.to_rle_string(),
            },
        )
        semantic = payload.get("semantic")
        if not isinstance(semantic, bool):
            raise ProtocolViolation(f"classify_semantic returned no verdict: {payload!r}")
        description = payload.get("description")
        if description is not None and not isinstance(description, str):
            raise ProtocolViolation(f"malformed description {description!r}")
        return SemanticVerdict(semantic=semantic, description=description)


_ROLE_ADAPTERS = {
    "segmenter": RemoteSegmenter,
    "tracker": RemoteTracker,
    "detector": RemoteDetector,
    "judge": RemoteJudge,
}


class RemoteProvider(BackendProvider):
    """Backends served over the wire; one connection per unique endpoint.

    Connections are single-owner and strictly sequential, so remote runs do
    not parallelize across videos.
    """

    supports_parallel = False

    def __init__(self, endpoints: Mapping[str, str], timeout_ms: int = DEFAULT_TIMEOUT_MS):
        if set(endpoints) != set(_ROLE_ADAPTERS):
            raise ValueError(
                f"endpoints must cover exactly {sorted(_ROLE_ADAPTERS)}, got {sorted(endpoints)}"
            )
        self._endpoints = dict(endpoints)
        self._timeout_ms = timeout_ms
        self._connections: dict[str, Connection] = {}

    def _connection(self, endpoint: str) -> Connection:
        if endpoint not in self._connections:
            self._connections[endpoint] = connect(endpoint, timeout_ms=self._timeout_ms)
        return self._connections[endpoint]

    def backends_for(self, video_id: str) -> BackendSet:
        adapters = {}
        for role, endpoint in self._endpoints.items():
            adapters[role] = _ROLE_ADAPTERS[role](self._connection(endpoint))
        return BackendSet(
            segmenter=adapters["segmenter"],
            tracker=adapters["tracker"],
            detector=adapters["detector"],
            judge=adapters["judge"],
        )

    def close(self) -> None:
        for conn in self._connections.values():
            conn.close()
        self._connections.clear()
