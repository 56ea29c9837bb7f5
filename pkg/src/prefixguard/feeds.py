"""Route observations from monitor feeds: parsing, snapshot diffs and merging.

Three kinds of monitor source feed the engine:

* ``stream`` sources deliver RIS-Live style JSON update messages,
* ``poll`` sources deliver periodic route-table snapshots (looking glasses),
  which are turned into synthetic updates by :func:`diff_snapshots`,
* ``trace`` sources replay recorded stream messages from a file.
"""

from __future__ import annotations

import heapq
import json
from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

from .prefix import AsPath, IpPrefix, PrefixError, parse_prefix

ANNOUNCEMENT = "announcement"
WITHDRAWAL = "withdrawal"
SOURCE_KINDS = ("stream", "poll", "trace")


class SchemaViolation(ValueError):
    pass


class EmptyUpdate(ValueError):
    pass


class TraceMalformed(ValueError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


@dataclass(frozen=True)
class MonitorSource:
    id: str
    kind: str
    nominal_delay: float = 0.0

    def __post_init__(self):
        if not self.id:
            raise ValueError("monitor source id must be non-empty")
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.nominal_delay < 0:
            raise ValueError("nominal_delay must be >= 0")


@dataclass(frozen=True)
class RouteObservation:
    source: str
    vantage_point: str
    prefix: IpPrefix
    kind: str
    path: AsPath | None
    timestamp: float
    received_at: float

    def __post_init__(self):
        if self.kind == ANNOUNCEMENT:
            if self.path is None:
                raise ValueError("announcement without AS path")
        elif self.kind == WITHDRAWAL:
            if self.path is not None:
                raise ValueError("withdrawal must not carry an AS path")
        else:
            raise ValueError(f"unknown observation kind {self.kind!r}")
        if self.received_at < 0:
            raise ValueError("received_at must be >= 0")

    @property
    def is_announcement(self) -> bool:
        return self.kind == ANNOUNCEMENT

    @property
    def origin(self) -> int | None:
        return self.path.origin() if self.path is not None else None

    @property
    def dedup_key(self) -> tuple:
        # Source is deliberately left out: the same collector message relayed by
        # two feeds is one event, kept at its earliest arrival.
        hops = self.path.hops if self.path is not None else ()
        return (self.vantage_point, self.prefix, self.kind, hops, self.timestamp)

    def sort_key(self) -> tuple:
        return (self.received_at, self.source, self.vantage_point, self.prefix)

    def to_record(self) -> dict:
        return {
            "source": self.source,
            "vantage_point": self.vantage_point,
            "prefix": str(self.prefix),
            "kind": self.kind,
            "path": list(self.path.hops) if self.path is not None else None,
            "timestamp": self.timestamp,
            "received_at": self.received_at,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> RouteObservation:
        path = rec.get("path")
        return cls(
            source=rec["source"],
            vantage_point=rec["vantage_point"],
            prefix=parse_prefix(rec["prefix"]),
            kind=rec["kind"],
            path=AsPath.of(path) if path is not None else None,
            timestamp=float(rec["timestamp"]),
            received_at=float(rec["received_at"]),
        )


ObservationStream = list  # list[RouteObservation], ordered by RouteObservation.sort_key


# -- live-stream wire schema -------------------------------------------------

def _require(obj: Mapping, key: str, where: str):
    if not isinstance(obj, Mapping) or key not in obj:
        raise SchemaViolation(f"missing required field {where}{key}")
    return obj[key]


def _prefix(text, where: str) -> IpPrefix:
    try:
        return parse_prefix(text)
    except PrefixError as exc:
        raise SchemaViolation(f"bad prefix in {where}: {exc}") from None


def _is_ipv6(text) -> bool:
    return isinstance(text, str) and ":" in text


def parse_stream_message(raw, *, received_at: float, source: str = "ris-live",
                         metrics: Counter | None = None) -> list[RouteObservation]:
    """Turn one RIS-Live ``ris_message`` into route observations.

    ``raw`` is the message text (or an already decoded dict). ``received_at``
    is the local arrival time; nothing on the wire is trusted for it.
    IPv6 prefixes are skipped and counted under ``skipped_ipv6``; messages
    whose ``data.type`` is not ``UPDATE`` yield nothing (``non_update``).
    """
    metrics = metrics if metrics is not None else Counter()
    if isinstance(raw, (str, bytes)):
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"not a JSON object: {exc}") from None
    else:
        msg = raw
    if not isinstance(msg, Mapping):
        raise SchemaViolation("message is not an object")
    if _require(msg, "type", "") != "ris_message":
        raise SchemaViolation(f"unexpected message type {msg['type']!r}")
    data = _require(msg, "data", "")
    if not isinstance(data, Mapping):
        raise SchemaViolation("data is not an object")
    mtype = _require(data, "type", "data.")
    if mtype != "UPDATE":
        metrics["non_update"] += 1
        return []
    try:
        timestamp = float(_require(data, "timestamp", "data."))
    except (TypeError, ValueError):
        raise SchemaViolation("data.timestamp is not a number") from None
    peer = _require(data, "peer", "data.")
    if not isinstance(peer, str) or not peer:
        raise SchemaViolation("data.peer must be a non-empty string")
    _require(data, "peer_asn", "data.")

    announcements = data.get("announcements") or []
    withdrawals = data.get("withdrawals") or []
    if not isinstance(announcements, list) or not isinstance(withdrawals, list):
        raise SchemaViolation("announcements/withdrawals must be arrays")
    if not announcements and not withdrawals:
        metrics["empty_update"] += 1
        raise EmptyUpdate(f"UPDATE from {peer} carries no prefixes")

    out = []
    if announcements:
        raw_path = _require(data, "path", "data.")
        if not isinstance(raw_path, list) or not raw_path:
            raise SchemaViolation("data.path must be a non-empty array")
        if any(isinstance(h, list) for h in raw_path):
            raise SchemaViolation("AS_SET segments in data.path are not supported")
        try:
            path = AsPath.of(raw_path)
        except ValueError as exc:
            raise SchemaViolation(f"bad data.path: {exc}") from None
        for i, ann in enumerate(announcements):
            prefixes = _require(ann, "prefixes", f"data.announcements[{i}].")
            if not isinstance(prefixes, list):
                raise SchemaViolation(f"data.announcements[{i}].prefixes must be an array")
            for text in prefixes:
                if _is_ipv6(text):
                    metrics["skipped_ipv6"] += 1
                    continue
                out.append(RouteObservation(source, peer, _prefix(text, "announcements"),
                                            ANNOUNCEMENT, path, timestamp, received_at))
    for text in withdrawals:
        if _is_ipv6(text):
            metrics["skipped_ipv6"] += 1
            continue
        out.append(RouteObservation(source, peer, _prefix(text, "withdrawals"),
                                    WITHDRAWAL, None, timestamp, received_at))
    metrics["observations"] += len(out)
    return out


def iter_trace(lines: Iterable[str], source: str = "trace",
               metrics: Counter | None = None) -> Iterator[tuple[int, list[RouteObservation]]]:
    """Parse a newline-delimited trace, yielding ``(lineno, observations)``.

    Replay uses the trace clock, so ``received_at`` is the message timestamp.
    Empty updates and non-UPDATE messages are counted and skipped; anything
    else that does not fit the schema raises :class:`TraceMalformed`.
    """
    metrics = metrics if metrics is not None else Counter()
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
            ts = msg["data"]["timestamp"]
            obs = parse_stream_message(msg, received_at=float(ts), source=source, metrics=metrics)
        except EmptyUpdate:
            continue
        except (json.JSONDecodeError, SchemaViolation, KeyError, TypeError, ValueError) as exc:
            raise TraceMalformed(lineno, str(exc)) from None
        yield lineno, obs


# -- looking-glass snapshots ---------------------------------------------------

Snapshot = dict  # (vantage_point, IpPrefix) -> AsPath


def parse_snapshot(text: str) -> Snapshot:
    """Parse rows of ``vantage_point prefix asn asn ...``; ``#`` starts a comment."""
    snap = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 3:
            raise ValueError(f"snapshot line {lineno}: expected 'vp prefix path...'")
        snap[(fields[0], parse_prefix(fields[1]))] = AsPath.of(int(h) for h in fields[2:])
    return snap


def render_snapshot(snap: Snapshot) -> str:
    rows = sorted(snap.items(), key=lambda kv: (kv[0][0], kv[0][1]))
    return "".join(f"{vp} {prefix} {path}\n" for (vp, prefix), path in rows)


def diff_snapshots(previous: Snapshot, current: Snapshot, source: MonitorSource | str, *,
                   timestamp: float, received_at: float | None = None) -> list[RouteObservation]:
    """Synthesize updates that turn ``previous`` into ``current``."""
    sid = source.id if isinstance(source, MonitorSource) else source
    received_at = timestamp if received_at is None else received_at
    out = []
    for key in sorted(previous.keys() | current.keys()):
        vp, prefix = key
        old, new = previous.get(key), current.get(key)
        if new is not None and new != old:
            out.append(RouteObservation(sid, vp, prefix, ANNOUNCEMENT, new, timestamp, received_at))
        elif new is None and old is not None:
            out.append(RouteObservation(sid, vp, prefix, WITHDRAWAL, None, timestamp, received_at))
    return out


def apply_observations(snap: Snapshot, observations: Iterable[RouteObservation]) -> Snapshot:
    out = dict(snap)
    for obs in observations:
        key = (obs.vantage_point, obs.prefix)
        if obs.is_announcement:
            out[key] = obs.path
        else:
            out.pop(key, None)
    return out


# -- merging -------------------------------------------------------------------

def merge(streams: Iterable[Iterable[RouteObservation]]) -> ObservationStream:
    """K-way merge by arrival time; duplicates keep their first arrival."""
    ordered = [sorted(s, key=RouteObservation.sort_key) for s in streams]
    seen = set()
    out = []
    for obs in heapq.merge(*ordered, key=RouteObservation.sort_key):
        key = obs.dedup_key
        if key in seen:
            continue
        seen.add(key)
        out.append(obs)
    return out


class ReorderBuffer:
    """Incremental merge for live producers.

    Observations are held until the newest arrival is ``window`` seconds past
    them, then released in stream order. Anything arriving after later
    observations were already released goes straight through and is counted
    under ``late_arrivals``. Dedup keys are remembered for ``dedup_horizon``
    seconds of arrival time.
    """

    def __init__(self, window: float = 10.0, metrics: Counter | None = None,
                 dedup_horizon: float = 3600.0):
        self.window = window
        self.metrics = metrics if metrics is not None else Counter()
        self.dedup_horizon = dedup_horizon
        self._heap = []
        self._seq = 0
        self._newest = float("-inf")
        self._released_upto = float("-inf")
        self._seen = set()
        self._seen_order = deque()

    def push(self, obs: RouteObservation) -> list[RouteObservation]:
        if obs.dedup_key in self._seen:
            self.metrics["duplicates"] += 1
            return []
        if obs.received_at < self._released_upto:
            self.metrics["late_arrivals"] += 1
            return self._emit([obs])
        heapq.heappush(self._heap, (obs.sort_key(), self._seq, obs))
        self._seq += 1
        self._newest = max(self._newest, obs.received_at)
        released = self._release(self._newest - self.window)
        self._expire(self._newest - self.dedup_horizon)
        return released

    def flush(self) -> list[RouteObservation]:
        return self._release(float("inf"))

    def advance(self, now: float) -> list[RouteObservation]:
        """Release whatever the clock says can no longer be reordered."""
        return self._release(now - self.window)

    def __len__(self) -> int:
        return len(self._heap)

    def _release(self, watermark: float) -> list[RouteObservation]:
        popped = []
        while self._heap and self._heap[0][0][0] <= watermark:
            obs = heapq.heappop(self._heap)[2]
            self._released_upto = max(self._released_upto, obs.received_at)
            popped.append(obs)
        return self._emit(popped)

    def _emit(self, observations) -> list[RouteObservation]:
        # dedup on the way out, so a tie keeps the copy that sorts first
        out = []
        for obs in observations:
            key = obs.dedup_key
            if key in self._seen:
                self.metrics["duplicates"] += 1
                continue
            self._seen.add(key)
            self._seen_order.append((obs.received_at, key))
            out.append(obs)
        return out

    def _expire(self, horizon: float) -> None:
        while self._seen_order and self._seen_order[0][0] < horizon:
            self._seen.discard(self._seen_order.popleft()[1])
