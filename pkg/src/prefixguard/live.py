"""Live mode: one producer thread per monitor source, one consumer (the engine)."""

from __future__ import annotations

import logging
import queue
import socket
import threading
from collections import Counter, deque
from dataclasses import replace
from pathlib import Path
from urllib.parse import urlparse

from .config import EngineConfig, SourceConfig
from .engine import Engine, EventLog
from .feeds import (EmptyUpdate, ReorderBuffer, SchemaViolation, diff_snapshots, iter_trace,
                    parse_snapshot, parse_stream_message)
from .mitigation import DryRunController

log = logging.getLogger(__name__)

DONE = object()


class SourceUnreachable(OSError):
    pass


def _tcp_address(endpoint: str) -> tuple[str, int]:
    url = urlparse(endpoint)
    if url.scheme != "tcp" or not url.hostname or not url.port:
        raise ValueError(f"expected tcp://host:port, got {endpoint!r}")
    return url.hostname, url.port


class TcpController:
    """Line protocol over a TCP connection to a controller shim."""

    def __init__(self, endpoint: str, timeout: float = 5.0):
        self.address = _tcp_address(endpoint)
        self.timeout = timeout
        self._sock = None
        self._replies: deque = deque()
        self._lock = threading.Lock()

    def _connect(self):
        if self._sock is None:
            self._sock = socket.create_connection(self.address, timeout=self.timeout)
            self._sock.settimeout(None)
            threading.Thread(target=self._reader, args=(self._sock,), daemon=True).start()
        return self._sock

    def _reader(self, sock) -> None:
        with sock.makefile("r", encoding="utf-8") as f:
            for line in f:
                with self._lock:
                    self._replies.append(line.rstrip("\n"))

    def send(self, lines, now: float) -> None:
        try:
            self._connect().sendall("".join(line + "\n" for line in lines).encode())
        except OSError as exc:
            # no replies will come back; the ack deadline turns this into a retry
            log.error("controller %s:%d unreachable: %s", *self.address, exc)
            self._sock = None

    def poll(self, now: float) -> list[str]:
        with self._lock:
            out = list(self._replies)
            self._replies.clear()
        return out


def make_controller(spec: str):
    if spec == "dry-run":
        return DryRunController()
    if spec.startswith("tcp://"):
        return TcpController(spec)
    raise ValueError(f"unknown controller endpoint {spec!r}")


class SourceWorker(threading.Thread):
    """Producer for one monitor source; pushes observations onto a shared queue."""

    def __init__(self, cfg: SourceConfig, base_dir: Path, out: queue.Queue, stop: threading.Event,
                 clock, metrics: Counter, restamp: bool = True):
        super().__init__(name=f"source-{cfg.id}", daemon=True)
        self.cfg = cfg
        self.base_dir = base_dir
        self.out = out
        self.stop = stop
        self.clock = clock
        self.metrics = metrics
        self.restamp = restamp

    @property
    def finite(self) -> bool:
        return self.cfg.kind == "trace"

    def _path(self) -> Path:
        p = Path(self.cfg.endpoint)
        return p if p.is_absolute() else self.base_dir / p

    def run(self) -> None:
        try:
            getattr(self, f"_run_{self.cfg.kind}")()
        except Exception:
            log.exception("source %s crashed", self.cfg.id)
        finally:
            self.out.put((self.cfg.id, DONE))

    def _run_trace(self) -> None:
        with open(self._path()) as f:
            for _, observations in iter_trace(f, source=self.cfg.id, metrics=self.metrics):
                for obs in observations:
                    if self.stop.is_set():
                        return
                    if self.restamp:
                        obs = replace(obs, received_at=self.clock.now())
                    self.out.put((self.cfg.id, obs))

    def _lines(self):
        """Yield lines from a tcp:// endpoint or by following a file."""
        endpoint = self.cfg.endpoint or ""
        if endpoint.startswith("tcp://"):
            host, port = _tcp_address(endpoint)
            try:
                sock = socket.create_connection((host, port), timeout=5.0)
            except OSError as exc:
                raise SourceUnreachable(f"{endpoint}: {exc}") from None
            sock.settimeout(1.0)
            buf = b""
            with sock:
                while not self.stop.is_set():
                    try:
                        chunk = sock.recv(65536)
                    except socket.timeout:
                        continue
                    if not chunk:
                        raise SourceUnreachable(f"{endpoint}: connection closed")
                    buf += chunk
                    *lines, buf = buf.split(b"\n")
                    for line in lines:
                        yield line.decode("utf-8", "replace")
            return
        try:
            f = open(self._path())
        except OSError as exc:
            raise SourceUnreachable(f"{endpoint}: {exc.strerror}") from None
        with f:
            while not self.stop.is_set():
                line = f.readline()
                if line:
                    yield line
                else:
                    self.stop.wait(0.2)

    def _run_stream(self) -> None:
        backoff = 1.0
        while not self.stop.is_set():
            try:
                for line in self._lines():
                    backoff = 1.0
                    if not line.strip():
                        continue
                    try:
                        observations = parse_stream_message(line, received_at=self.clock.now(),
                                                            source=self.cfg.id, metrics=self.metrics)
                    except EmptyUpdate:
                        continue
                    except SchemaViolation as exc:
                        self.metrics["schema_violations"] += 1
                        log.warning("source %s: %s", self.cfg.id, exc)
                        continue
                    for obs in observations:
                        self.out.put((self.cfg.id, obs))
            except SourceUnreachable as exc:
                self.metrics["source_unreachable"] += 1
                log.warning("source %s unreachable (%s); retrying in %.0fs", self.cfg.id, exc, backoff)
                self.stop.wait(backoff)
                backoff = min(backoff * 2, 60.0)

    def _run_poll(self) -> None:
        previous = {}
        while not self.stop.is_set():
            try:
                current = parse_snapshot(self._path().read_text())
            except OSError as exc:
                self.metrics["source_unreachable"] += 1
                log.warning("source %s unreachable: %s", self.cfg.id, exc)
            except ValueError as exc:
                self.metrics["schema_violations"] += 1
                log.warning("source %s: bad snapshot: %s", self.cfg.id, exc)
            else:
                now = self.clock.now()
                for obs in diff_snapshots(previous, current, self.cfg.id, timestamp=now):
                    self.out.put((self.cfg.id, obs))
                previous = current
            self.stop.wait(self.cfg.poll_interval)


def run_live(cfg: EngineConfig, log_stream=None, stop: threading.Event | None = None,
             clock=None, controller=None) -> Engine:
    """Run until ``stop`` is set, or until every (finite) trace source is exhausted.

    With only trace sources the engine runs on the trace clock, which makes a
    run over a trace produce the same events as replaying it.
    """
    from .clock import WallClock

    clock = clock if clock is not None else WallClock()
    stop = stop if stop is not None else threading.Event()
    controller = controller if controller is not None else make_controller(cfg.mitigation.controller)
    engine = Engine(cfg, controller, EventLog(log_stream))
    trace_clock = all(s.kind == "trace" for s in cfg.sources)
    q: queue.Queue = queue.Queue()
    workers = [SourceWorker(s, cfg.base_dir, q, stop, clock, engine.metrics, restamp=not trace_clock)
               for s in cfg.sources]
    for w in workers:
        w.start()
    buf = ReorderBuffer(cfg.reorder_window, engine.metrics)
    finished = 0
    while finished < len(workers) and not stop.is_set():
        try:
            _, item = q.get(timeout=0.2)
        except queue.Empty:
            item = None
        if item is DONE:
            finished += 1
        elif item is not None:
            for obs in buf.push(item):
                engine.process(obs)
        if not trace_clock:
            now = clock.now()
            for obs in buf.advance(now):
                engine.process(obs)
            engine.tick(now)
    if trace_clock or stop.is_set():
        for obs in buf.flush():
            engine.process(obs)
    stop.set()
    return engine
