"""Wire client behavior against a canned foreign server."""

import socket
import subprocess
import sys
from pathlib import Path

import pytest

from tep.backends import TrackOutput
from tep.geometry import BBox, Mask
from tep.pipeline import _auxiliary
from tep.protocol import (
    METHODS,
    OP_TO_METHOD,
    BackendTimeout,
    ConnectRefused,
    ProtocolViolation,
    RemoteError,
    RemoteTracker,
    SpawnFailed,
    VersionMismatch,
    connect,
)

SERVER = Path(__file__).parent / "servers" / "fixture_server.py"


def endpoint(mode="canned", delay_ms=0):
    cmd = f"{sys.executable} {SERVER} --mode {mode}"
    if delay_ms:
        cmd += f" --delay-ms {delay_ms}"
    return f"exec:{cmd}"


class TestConnect:
    def test_handshake_learns_capabilities(self):
        with connect(endpoint()) as conn:
            assert conn.capabilities == ("judge",)

    def test_wrong_version_is_rejected(self):
        with pytest.raises(VersionMismatch):
            connect(endpoint("wrong-version"))

    def test_missing_binary_fails_to_spawn(self):
        with pytest.raises(SpawnFailed):
            connect("exec:/no/such/binary-anywhere --flag")

    def test_dead_tcp_endpoint_is_refused(self):
        probe = socket.create_server(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        probe.close()
        with pytest.raises(ConnectRefused):
            connect(f"tcp:127.0.0.1:{port}")

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            connect("http://example.test")


class TestCall:
    def test_track_payload_parses(self):
        with connect(endpoint()) as conn:
            session = RemoteTracker(conn).init(BBox(0, 0, 4, 4), ("vid", 0))
            out = session.track(3)
            assert out == TrackOutput(BBox(1, 2, 5, 7), 0.75)

    def test_malformed_line_is_a_violation(self):
        with connect(endpoint("malformed")) as conn:
            with pytest.raises(ProtocolViolation):
                conn.call("track", {})

    def test_mismatched_id_is_a_violation(self):
        with connect(endpoint("wrong-id")) as conn:
            with pytest.raises(ProtocolViolation):
                conn.call("track", {})

    def test_remote_error_preserves_the_kind(self):
        with connect(endpoint("error")) as conn:
            with pytest.raises(RemoteError) as excinfo:
                conn.call("track", {})
            assert excinfo.value.kind == "TestKind"

    def test_timeout(self):
        with connect(endpoint(delay_ms=2000), timeout_ms=150) as conn:
            with pytest.raises(BackendTimeout):
                conn.call("track", {})

    def test_connection_is_unusable_after_a_timeout(self):
        # A late reply may still arrive; strict alternation means every
        # later call fails fast instead of reading the stale response.
        with connect(endpoint(delay_ms=400), timeout_ms=100) as conn:
            with pytest.raises(BackendTimeout):
                conn.call("track", {})
            import time

            time.sleep(0.5)  # let the stale response land in the pipe
            with pytest.raises(BackendTimeout):
                conn.call("track", {})

    def test_invalid_track_output_is_a_violation(self):
        # bbox null with nonzero confidence violates the TrackOutput invariant
        with connect(endpoint("bad-track")) as conn:
            session = RemoteTracker(conn).init(BBox(0, 0, 4, 4), ("vid", 0))
            with pytest.raises(ProtocolViolation):
                session.track(0)

    def test_mask_rle_round_trip_is_bit_identical(self):
        mask = Mask(6, 5, (3, 4, 2, 7, 14))
        wire = mask.to_rle_string()
        with connect(endpoint()) as conn:
            payload = conn.call("describe", {"mask": wire})
        echoed = payload["echo"]["mask"]
        assert echoed == wire
        assert Mask.from_rle_string(echoed) == mask

    def test_strict_alternation_passes_the_pipelining_detector(self):
        with connect(endpoint("reject-pipelining")) as conn:
            for i in range(10):
                payload = conn.call("describe", {"n": i})
                assert payload["echo"]["n"] == i

    def test_auxiliary_timeout_degrades_to_missing(self):
        def timing_out():
            raise BackendTimeout("too slow")

        assert _auxiliary(timing_out) == TrackOutput(None, 0.0)


class TestTcpTransport:
    def test_full_exchange_over_tcp(self):
        proc = subprocess.Popen(
            [sys.executable, str(SERVER), "--tcp"],
            stdout=subprocess.PIPE,
            text=True,
        )
        try:
            port_line = proc.stdout.readline().strip()
            assert port_line.startswith("PORT ")
            port = int(port_line.split()[1])
            with connect(f"tcp:127.0.0.1:{port}") as conn:
                assert conn.capabilities == ("judge",)
                payload = conn.call("judge", {})
                assert payload["choice"] == "baseline"
        finally:
            proc.wait(timeout=5)


class TestMethodMapping:
    def test_every_backend_operation_has_exactly_one_method(self):
        ops = {
            "Segmenter.init",
            "Segmenter.propagate",
            "Segmenter.prompt_box",
            "Tracker.init",
            "Tracker.track",
            "Detector.describe",
            "Detector.detect",
            "Judge.compare",
            "Judge.classify_semantic",
            "Connection.close",
        }
        assert set(OP_TO_METHOD) == ops
        assert len(set(OP_TO_METHOD.values())) == len(OP_TO_METHOD)

    def test_mapping_targets_are_the_closed_method_set(self):
        assert set(OP_TO_METHOD.values()) == set(METHODS)
