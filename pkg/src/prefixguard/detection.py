"""Origin-based hijack detection over the merged observation stream."""

from __future__ import annotations

import copy
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .feeds import RouteObservation
from .prefix import IpPrefix, check_asn

EXACT_ORIGIN = "exact-origin"
SUBPREFIX_ORIGIN = "subprefix-origin"


class Classification(Enum):
    LEGITIMATE = "legitimate"
    EXACT_ORIGIN_HIJACK = EXACT_ORIGIN
    SUBPREFIX_ORIGIN_HIJACK = SUBPREFIX_ORIGIN
    UNRELATED = "unrelated"

    @property
    def is_hijack(self) -> bool:
        return self in (Classification.EXACT_ORIGIN_HIJACK, Classification.SUBPREFIX_ORIGIN_HIJACK)


class AlertState(str, Enum):
    NEW = "NEW"
    MITIGATING = "MITIGATING"
    RESOLVED = "RESOLVED"


_ALLOWED = {
    AlertState.NEW: {AlertState.MITIGATING, AlertState.RESOLVED},
    AlertState.MITIGATING: {AlertState.RESOLVED},
    AlertState.RESOLVED: set(),
}


class UnknownStart(ValueError):
    pass


class OverlappingPrefixes(ValueError):
    pass


@dataclass(frozen=True)
class OwnedPrefix:
    prefix: IpPrefix
    legitimate_origins: frozenset
    mitigation_enabled: bool = True

    def __post_init__(self):
        origins = frozenset(check_asn(a) for a in self.legitimate_origins)
        if not origins:
            raise ValueError(f"{self.prefix}: at least one legitimate origin is required")
        object.__setattr__(self, "legitimate_origins", origins)


def check_owned(owned: Sequence[OwnedPrefix]) -> None:
    """Reject configurations where one owned prefix contains another."""
    for i, a in enumerate(owned):
        for b in owned[i + 1:]:
            if a.prefix.overlaps(b.prefix):
                raise OverlappingPrefixes(f"owned prefixes {a.prefix} and {b.prefix} overlap")


def match_owned(prefix: IpPrefix, config: Iterable[OwnedPrefix]) -> OwnedPrefix | None:
    """Most-specific owned prefix containing (or equal to) ``prefix``."""
    best = None
    for owned in config:
        if owned.prefix.contains(prefix) and (best is None or owned.prefix.length > best.prefix.length):
            best = owned
    return best


def classify(observation: RouteObservation, config: Iterable[OwnedPrefix]) -> Classification:
    owned = match_owned(observation.prefix, config)
    if owned is None:
        return Classification.UNRELATED
    if observation.origin in owned.legitimate_origins:
        return Classification.LEGITIMATE
    if observation.prefix == owned.prefix:
        return Classification.EXACT_ORIGIN_HIJACK
    return Classification.SUBPREFIX_ORIGIN_HIJACK


@dataclass
class HijackAlert:
    id: str
    owned: OwnedPrefix
    offending_origin: int
    observed_prefix: IpPrefix
    kind: str
    first_seen: float
    detected_at: float
    evidence: list = field(default_factory=list)
    state: AlertState = AlertState.NEW

    @property
    def key(self) -> tuple:
        return (self.owned.prefix, self.offending_origin, self.kind)

    def transition(self, to: AlertState) -> None:
        if to not in _ALLOWED[self.state]:
            raise ValueError(f"alert {self.id}: illegal transition {self.state.value} -> {to.value}")
        self.state = to

    def add_evidence(self, obs: RouteObservation) -> None:
        self.evidence.append(obs)
        self.first_seen = min(self.first_seen, obs.timestamp)

    def record(self, event: str) -> dict:
        return {
            "event": event,
            "alert_id": self.id,
            "prefix": str(self.owned.prefix),
            "observed_prefix": str(self.observed_prefix),
            "offending_origin": self.offending_origin,
            "kind": self.kind,
            "state": self.state.value,
            "first_seen": self.first_seen,
            "detected_at": self.detected_at,
        }


class Detector:
    """Maintains hijack alerts from observations fed in merged-stream order.

    With ``quorum`` > 1 an alert is only raised once that many distinct
    (source, vantage point) pairs have reported the offending origin.
    """

    def __init__(self, config: Sequence[OwnedPrefix], quorum: int = 1):
        if quorum < 1:
            raise ValueError("quorum must be >= 1")
        check_owned(config)
        self.config = list(config)
        self.quorum = quorum
        self.alerts: dict[str, HijackAlert] = {}
        self._open: dict[tuple, str] = {}
        self._pending: dict[tuple, list] = {}
        self._evidence_keys: dict[str, set] = {}
        self._counter = 0
        self._lock = threading.Lock()

    def ingest(self, obs: RouteObservation) -> list[dict]:
        if not obs.is_announcement:
            return []
        verdict = classify(obs, self.config)
        if not verdict.is_hijack:
            return []
        owned = match_owned(obs.prefix, self.config)
        key = (owned.prefix, obs.origin, verdict.value)
        with self._lock:
            alert_id = self._open.get(key)
            if alert_id is not None:
                seen = self._evidence_keys[alert_id]
                if obs.dedup_key not in seen:
                    seen.add(obs.dedup_key)
                    self.alerts[alert_id].add_evidence(obs)
                return []
            pending = self._pending.setdefault(key, [])
            if any(p.dedup_key == obs.dedup_key for p in pending):
                return []
            pending.append(obs)
            if len({(p.source, p.vantage_point) for p in pending}) < self.quorum:
                return []
            del self._pending[key]
            self._counter += 1
            alert = HijackAlert(
                id=f"alert-{self._counter}",
                owned=owned,
                offending_origin=obs.origin,
                observed_prefix=pending[0].prefix,
                kind=verdict.value,
                first_seen=min(p.timestamp for p in pending),
                detected_at=obs.received_at,
                evidence=list(pending),
            )
            self.alerts[alert.id] = alert
            self._open[key] = alert.id
            self._evidence_keys[alert.id] = {p.dedup_key for p in pending}
            return [alert.record("alert_raised")]

    def set_state(self, alert_id: str, state: AlertState) -> dict:
        with self._lock:
            alert = self.alerts[alert_id]
            alert.transition(state)
            if state is AlertState.RESOLVED:
                self._open.pop(alert.key, None)
            return alert.record("alert_state")

    def active(self) -> list[HijackAlert]:
        return [a for a in self.alerts.values() if a.state is not AlertState.RESOLVED]

    def snapshot(self) -> list[HijackAlert]:
        """Point-in-time copy of every alert, safe to read from another thread."""
        with self._lock:
            return copy.deepcopy(list(self.alerts.values()))


def detection_latency(alert: HijackAlert, hijack_start: float | None) -> float:
    if hijack_start is None:
        raise UnknownStart("hijack start time is unknown (live mode)")
    return alert.detected_at - hijack_start
