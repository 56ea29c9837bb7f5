import queue
import socket
import threading
import time
from collections import Counter

import pytest

from prefixguard.clock import ManualClock
from prefixguard.config import SourceConfig
from prefixguard.live import DONE, SourceWorker, TcpController, make_controller
from prefixguard.mitigation import DryRunController

from conftest import FIXTURES

ANNOUNCE = (FIXTURES / "ris/valid/announce_single.json").read_text().replace("\n", " ").strip()


def collect(out, n, timeout=5.0):
    got, deadline = [], time.monotonic() + timeout
    while len(got) < n and time.monotonic() < deadline:
        try:
            _, item = out.get(timeout=0.1)
        except queue.Empty:
            continue
        if item is not DONE:
            got.append(item)
    return got


def worker(cfg, tmp_path, clock=None):
    out, stop, metrics = queue.Queue(), threading.Event(), Counter()
    w = SourceWorker(cfg, tmp_path, out, stop, clock or ManualClock(5.0), metrics)
    return w, out, stop, metrics


def test_poll_source_diffs_snapshots(tmp_path):
    snap = tmp_path / "lg.txt"
    snap.write_text("vp1 10.0.0.0/23 64500 65001\n")
    w, out, stop, metrics = worker(SourceConfig("lg", "poll", "lg.txt", poll_interval=0.05), tmp_path)
    w.start()
    first = collect(out, 1)
    snap.write_text("vp1 10.0.0.0/23 64500 65002\n")
    second = collect(out, 1)
    stop.set()
    w.join(2)
    assert [o.origin for o in first + second] == [65001, 65002]
    assert all(o.received_at == 5.0 and o.source == "lg" for o in first + second)


def test_poll_source_missing_file_is_counted(tmp_path):
    w, out, stop, metrics = worker(SourceConfig("lg", "poll", "absent.txt", poll_interval=0.05), tmp_path)
    w.start()
    time.sleep(0.2)
    stop.set()
    w.join(2)
    assert metrics["source_unreachable"] >= 1 and collect(out, 1, timeout=0.2) == []


def test_stream_over_tcp(tmp_path):
    server = socket.create_server(("127.0.0.1", 0))
    port = server.getsockname()[1]

    def serve():
        conn, _ = server.accept()
        with conn:
            conn.sendall((ANNOUNCE + "\n{broken\n" + ANNOUNCE).encode())
            conn.sendall(b"\n")
            time.sleep(0.5)

    threading.Thread(target=serve, daemon=True).start()
    w, out, stop, metrics = worker(SourceConfig("ris", "stream", f"tcp://127.0.0.1:{port}"), tmp_path)
    w.start()
    got = collect(out, 2)
    stop.set()
    w.join(3)
    server.close()
    assert len(got) == 2 and metrics["schema_violations"] == 1


def test_stream_unreachable_is_retried(tmp_path):
    with socket.create_server(("127.0.0.1", 0)) as s:
        port = s.getsockname()[1]
    w, out, stop, metrics = worker(SourceConfig("ris", "stream", f"tcp://127.0.0.1:{port}"), tmp_path)
    w.start()
    time.sleep(0.3)
    stop.set()
    w.join(3)
    assert metrics["source_unreachable"] >= 1 and not w.is_alive()


def test_tcp_controller_round_trip():
    server = socket.create_server(("127.0.0.1", 0))
    port = server.getsockname()[1]

    def echo():
        conn, _ = server.accept()
        with conn, conn.makefile("r") as f:
            for line in f:
                conn.sendall(f"ok {line}".encode())

    threading.Thread(target=echo, daemon=True).start()
    ctl = make_controller(f"tcp://127.0.0.1:{port}")
    assert isinstance(ctl, TcpController)
    ctl.send(["announce 10.0.0.0/24 origin 65001"], now=0.0)
    replies, deadline = [], time.monotonic() + 5
    while not replies and time.monotonic() < deadline:
        replies = ctl.poll(0.0)
        time.sleep(0.02)
    server.close()
    assert replies == ["ok announce 10.0.0.0/24 origin 65001"]


def test_tcp_controller_unreachable_does_not_raise():
    with socket.create_server(("127.0.0.1", 0)) as s:
        port = s.getsockname()[1]
    ctl = TcpController(f"tcp://127.0.0.1:{port}", timeout=0.5)
    ctl.send(["announce 10.0.0.0/24 origin 65001"], now=0.0)
    assert ctl.poll(0.0) == []


def test_make_controller():
    assert isinstance(make_controller("dry-run"), DryRunController)
    with pytest.raises(ValueError):
        make_controller("carrier-pigeon://x")
