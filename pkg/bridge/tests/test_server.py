"""Serving loop behavior over real stdio and TCP transports."""

import json
import socket
import subprocess
import sys
from pathlib import Path

import pytest

from test_reference import write_video


@pytest.fixture()
def dataset_root(tmp_path):
    return write_video(tmp_path)


class StdioServer:
    def __init__(self, dataset_root, *extra):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "tep_bridge", "--transport", "stdio",
             "--dataset", str(dataset_root), "--role", "all", *extra],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )
        self._next_id = 0

    def send_line(self, data: bytes):
        self.proc.stdin.write(data + b"\n")
        self.proc.stdin.flush()

    def read(self) -> dict:
        return json.loads(self.proc.stdout.readline())

    def call(self, method, params):
        rid = self._next_id
        self._next_id += 1
        self.send_line(json.dumps({"id": rid, "method": method, "params": params}).encode())
        doc = self.read()
        assert doc["id"] == rid
        return doc

    def wait(self):
        return self.proc.wait(timeout=10)


class TestStdio:
    def test_hello_capabilities_and_clean_shutdown(self, dataset_root):
        server = StdioServer(dataset_root)
        hello = server.call("hello", {"protocol_version": 1})
        assert hello["status"] == "ok"
        assert hello["payload"]["protocol_version"] == 1
        assert "propagate" in hello["payload"]["capabilities"]
        assert "shutdown" in hello["payload"]["capabilities"]
        bye = server.call("shutdown", {})
        assert bye["status"] == "ok"
        assert server.wait() == 0

    def test_unknown_method_keeps_the_connection(self, dataset_root):
        server = StdioServer(dataset_root)
        doc = server.call("levitate", {})
        assert doc["status"] == "error"
        assert doc["error_kind"] == "UnknownMethod"
        assert server.call("hello", {"protocol_version": 1})["status"] == "ok"
        server.call("shutdown", {})
        assert server.wait() == 0

    def test_malformed_line_keeps_the_connection(self, dataset_root):
        server = StdioServer(dataset_root)
        server.send_line(b"{not json")
        doc = server.read()
        assert doc["status"] == "error"
        assert doc["error_kind"] == "ProtocolViolation"
        assert server.call("hello", {"protocol_version": 1})["status"] == "ok"
        server.call("shutdown", {})
        assert server.wait() == 0

    def test_eof_terminates_quietly(self, dataset_root):
        server = StdioServer(dataset_root)
        server.proc.stdin.close()
        assert server.wait() == 0

    def test_handler_errors_travel_as_error_responses(self, dataset_root):
        server = StdioServer(dataset_root)
        doc = server.call("propagate", {"session": "seg-1", "frame_index": 0})
        assert doc["status"] == "error"
        assert doc["error_kind"] == "UnknownSession"
        server.call("shutdown", {})
        assert server.wait() == 0

    def test_missing_dataset_exits_nonzero(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "tep_bridge", "--dataset", str(tmp_path / "none")],
            capture_output=True,
        )
        assert proc.returncode == 1


class TestTcp:
    def test_one_connection_full_exchange(self, dataset_root):
        proc = subprocess.Popen(
            [sys.executable, "-m", "tep_bridge", "--transport", "tcp", "--port", "0",
             "--dataset", str(dataset_root), "--role", "judge"],
            stdout=subprocess.PIPE,
        )
        try:
            port_line = proc.stdout.readline().decode().strip()
            port = int(port_line.split()[1])
            with socket.create_connection(("127.0.0.1", port), timeout=10) as sock:
                reader = sock.makefile("rb")
                writer = sock.makefile("wb")
                writer.write(b'{"id":0,"method":"hello","params":{"protocol_version":1}}\n')
                writer.flush()
                hello = json.loads(reader.readline())
                assert hello["payload"]["capabilities"] == [
                    "classify_semantic", "judge", "shutdown",
                ]
                writer.write(b'{"id":1,"method":"shutdown","params":{}}\n')
                writer.flush()
                assert json.loads(reader.readline())["status"] == "ok"
        finally:
            assert proc.wait(timeout=10) == 0
