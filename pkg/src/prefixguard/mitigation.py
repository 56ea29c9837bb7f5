"""De-aggregation mitigation plans and the controller command protocol.

Controller protocol, one command per line::

    announce <prefix> origin <asn>
    withdraw <prefix>

Replies are ``ok <echoed command>`` or ``error <reason>``, one per command,
in order.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

from .detection import EXACT_ORIGIN, AlertState, HijackAlert, OwnedPrefix
from .prefix import DEFAULT_MAX_LENGTH, IpPrefix, Unsplittable, check_asn, deaggregate, parse_prefix


class UnmitigableByDeaggregation(Exception):
    pass


class AckTimeout(Exception):
    pass


class PlanError(ValueError):
    pass


class PlanStatus(str, Enum):
    PLANNED = "PLANNED"
    COMMANDED = "COMMANDED"
    ACKNOWLEDGED = "ACKNOWLEDGED"
    COMPLETE = "COMPLETE"
    FAILED = "FAILED"


_RANK = {PlanStatus.PLANNED: 0, PlanStatus.COMMANDED: 1, PlanStatus.ACKNOWLEDGED: 2, PlanStatus.COMPLETE: 3}


@dataclass
class MitigationPlan:
    alert_id: str
    parent: IpPrefix
    announcements: tuple
    origin: int
    status: PlanStatus = PlanStatus.PLANNED
    commanded_at: float | None = None
    acknowledged_at: float | None = None
    completed_at: float | None = None
    last_sent_at: float | None = None
    attempts: int = 0

    @property
    def announce_latency(self) -> float | None:
        if self.acknowledged_at is None or self.commanded_at is None:
            return None
        return self.acknowledged_at - self.commanded_at

    def advance(self, to: PlanStatus) -> None:
        if self.status is PlanStatus.FAILED or self.status is PlanStatus.COMPLETE:
            raise PlanError(f"plan {self.alert_id} is final ({self.status.value})")
        if to is not PlanStatus.FAILED and _RANK[to] != _RANK[self.status] + 1:
            raise PlanError(f"plan {self.alert_id}: illegal transition {self.status.value} -> {to.value}")
        self.status = to

    def record(self, t: float) -> dict:
        return {
            "event": "plan",
            "alert_id": self.alert_id,
            "status": self.status.value,
            "parent": str(self.parent),
            "announcements": [str(p) for p in self.announcements],
            "origin": self.origin,
            "commanded_at": self.commanded_at,
            "acknowledged_at": self.acknowledged_at,
            "completed_at": self.completed_at,
            "t": t,
        }


def plan(alert: HijackAlert, config: OwnedPrefix, max_length: int = DEFAULT_MAX_LENGTH) -> MitigationPlan:
    """Build the de-aggregation plan for a freshly raised alert.

    Exact-origin hijacks split the owned prefix; sub-prefix hijacks split the
    attacker's prefix so the legitimate routes are more specific than it.
    """
    if alert.state is not AlertState.NEW:
        raise PlanError(f"alert {alert.id} is {alert.state.value}, expected NEW")
    if not config.mitigation_enabled:
        raise PlanError(f"mitigation is disabled for {config.prefix}")
    target = config.prefix if alert.kind == EXACT_ORIGIN else alert.observed_prefix
    try:
        children = deaggregate(target, max_length)
    except Unsplittable as exc:
        raise UnmitigableByDeaggregation(str(exc)) from None
    return MitigationPlan(alert.id, target, children, min(config.legitimate_origins))


# -- command protocol ------------------------------------------------------------

class Command(NamedTuple):
    action: str
    prefix: IpPrefix
    origin: int | None = None


_ANNOUNCE_RE = re.compile(r"^announce (\S+) origin (\d+)$")
_WITHDRAW_RE = re.compile(r"^withdraw (\S+)$")


def format_command(cmd: Command) -> str:
    if cmd.action == "announce":
        return f"announce {cmd.prefix} origin {cmd.origin}"
    if cmd.action == "withdraw":
        return f"withdraw {cmd.prefix}"
    raise ValueError(f"unknown command action {cmd.action!r}")


def parse_command(line: str) -> Command:
    line = line.rstrip("\r\n")
    m = _ANNOUNCE_RE.match(line)
    if m:
        return Command("announce", parse_prefix(m.group(1)), check_asn(int(m.group(2))))
    m = _WITHDRAW_RE.match(line)
    if m:
        return Command("withdraw", parse_prefix(m.group(1)))
    raise ValueError(f"not a controller command: {line!r}")


def parse_reply(line: str) -> tuple[bool, str]:
    """Return ``(ok, payload)`` for a controller reply line."""
    line = line.rstrip("\r\n")
    if line.startswith("ok "):
        return True, line[3:]
    if line.startswith("error"):
        return False, line[5:].strip()
    raise ValueError(f"not a controller reply: {line!r}")


def render_commands(plan: MitigationPlan, now: float) -> list[str]:
    if plan.status is not PlanStatus.PLANNED:
        raise PlanError(f"plan {plan.alert_id} already {plan.status.value}")
    if not plan.announcements:
        raise PlanError(f"plan {plan.alert_id} announces nothing")
    lines = [format_command(Command("announce", p, plan.origin)) for p in plan.announcements]
    plan.advance(PlanStatus.COMMANDED)
    plan.commanded_at = now
    plan.last_sent_at = now
    plan.attempts = 1
    return lines


def withdraw_commands(plan: MitigationPlan) -> list[str]:
    return [format_command(Command("withdraw", p)) for p in plan.announcements]


def acknowledge(plan: MitigationPlan, ack_time: float, deadline: float = 30.0) -> MitigationPlan:
    if plan.status is not PlanStatus.COMMANDED:
        raise PlanError(f"plan {plan.alert_id} is {plan.status.value}, expected COMMANDED")
    if ack_time - plan.last_sent_at > deadline:
        raise AckTimeout(f"plan {plan.alert_id}: ack after {ack_time - plan.last_sent_at:.3f}s > {deadline}s")
    plan.advance(PlanStatus.ACKNOWLEDGED)
    plan.acknowledged_at = ack_time
    return plan


# -- controllers -------------------------------------------------------------------

class DryRunController:
    """Accepts every command at once; used for replay and tests."""

    def __init__(self):
        self.sent: list[tuple[float, str]] = []
        self._replies: deque = deque()

    def send(self, lines, now: float) -> None:
        for line in lines:
            self.sent.append((now, line))
            self._replies.append(f"ok {line}")

    def poll(self, now: float) -> list[str]:
        out = list(self._replies)
        self._replies.clear()
        return out


class FakeController:
    """Replies ``ok`` after a fixed delay, or never when ``delay`` is None."""

    def __init__(self, delay: float | None = 0.0):
        self.delay = delay
        self.sent: list[tuple[float, str]] = []
        self._due: deque = deque()

    def send(self, lines, now: float) -> None:
        for line in lines:
            self.sent.append((now, line))
            if self.delay is not None:
                self._due.append((now + self.delay, f"ok {line}"))

    def next_reply(self) -> float | None:
        return self._due[0][0] if self._due else None

    def poll(self, now: float) -> list[str]:
        out = []
        while self._due and self._due[0][0] <= now:
            out.append(self._due.popleft()[1])
        return out


# -- reactor -----------------------------------------------------------------------

@dataclass
class _Exchange:
    lines: list
    pending: set
    deadline: float
    retry_at: float | None = None
    resolved_at: float | None = None
    withdrawn: bool = False


@dataclass
class Mitigator:
    """Drives plans from alert to acknowledged announcement.

    One controller exchange is in flight per plan. A plan whose commands are
    not acknowledged within ``ack_deadline`` is re-sent after an exponential
    backoff (``backoff_base * 2**k``); after ``retries`` re-sends it FAILS.
    """

    controller: object
    max_length: int = DEFAULT_MAX_LENGTH
    ack_deadline: float = 30.0
    retries: int = 3
    backoff_base: float = 2.0
    linger: float = 3600.0
    plans: dict = field(default_factory=dict)
    _exchanges: dict = field(default_factory=dict)
    _outstanding: deque = field(default_factory=deque)

    def on_alert(self, alert: HijackAlert, owned: OwnedPrefix, now: float) -> list[dict]:
        existing = self.plans.get(alert.id)
        if existing is not None and existing.status is not PlanStatus.FAILED:
            return []
        try:
            p = plan(alert, owned, self.max_length)
        except UnmitigableByDeaggregation as exc:
            return [{"event": "plan_error", "alert_id": alert.id, "error": "UnmitigableByDeaggregation",
                     "reason": str(exc), "t": now}]
        self.plans[alert.id] = p
        events = [p.record(now)]
        lines = render_commands(p, now)
        events += self._send(p, lines, now)
        events.append(p.record(now))
        return events

    def _send(self, p: MitigationPlan, lines: list, now: float) -> list[dict]:
        self._exchanges[p.alert_id] = _Exchange(list(lines), set(lines), now + self.ack_deadline)
        for line in lines:
            self._outstanding.append((p.alert_id, line))
        self.controller.send(lines, now)
        return [{"event": "command", "alert_id": p.alert_id, "line": line, "t": now} for line in lines]

    def on_reply(self, line: str, now: float) -> list[dict]:
        ok, payload = parse_reply(line)
        alert_id = None
        if ok:
            for i, (aid, sent) in enumerate(self._outstanding):
                if sent == payload:
                    alert_id = aid
                    del self._outstanding[i]
                    break
        elif self._outstanding:
            alert_id, _ = self._outstanding.popleft()
        events = [{"event": "controller_reply", "alert_id": alert_id, "reply": line, "t": now}]
        p = self.plans.get(alert_id)
        if p is None or p.status is not PlanStatus.COMMANDED:
            return events
        ex = self._exchanges[alert_id]
        if not ok:
            ex.deadline = now  # counts as a failed attempt on the next tick
            return events + self.tick(now)
        ex.pending.discard(payload)
        if not ex.pending:
            try:
                acknowledge(p, now, self.ack_deadline)
            except AckTimeout:
                return events + self.tick(now)
            events.append(p.record(now))
        return events

    def tick(self, now: float) -> list[dict]:
        events = []
        for alert_id, p in self.plans.items():
            ex = self._exchanges.get(alert_id)
            if ex is None:
                continue
            if p.status is PlanStatus.COMMANDED:
                if ex.retry_at is not None and now >= ex.retry_at:
                    ex.retry_at = None
                    p.attempts += 1
                    p.last_sent_at = now
                    events += self._send(p, ex.lines, now)
                elif ex.retry_at is None and now >= ex.deadline:
                    self._outstanding = deque(o for o in self._outstanding if o[0] != alert_id)
                    if p.attempts > self.retries:
                        p.advance(PlanStatus.FAILED)
                        events.append({"event": "plan_error", "alert_id": alert_id, "error": "AckTimeout",
                                       "reason": f"no ack after {p.attempts} attempts", "t": now})
                        events.append(p.record(now))
                    else:
                        ex.retry_at = now + self.backoff_base * 2 ** (p.attempts - 1)
            if ex.resolved_at is not None and not ex.withdrawn and now >= ex.resolved_at + self.linger:
                ex.withdrawn = True
                lines = withdraw_commands(p)
                self.controller.send(lines, now)
                events += [{"event": "command", "alert_id": alert_id, "line": line, "t": now} for line in lines]
        return events

    def complete(self, alert_id: str, completed_at: float, now: float) -> list[dict]:
        p = self.plans[alert_id]
        p.advance(PlanStatus.COMPLETE)
        p.completed_at = completed_at
        return [p.record(now)]

    def resolved(self, alert_id: str, now: float) -> None:
        ex = self._exchanges.get(alert_id)
        if ex is not None:
            ex.resolved_at = now

    def next_wakeup(self) -> float | None:
        """Earliest time at which :meth:`tick` has something to do."""
        times = []
        for alert_id, ex in self._exchanges.items():
            p = self.plans[alert_id]
            if p.status is PlanStatus.COMMANDED:
                times.append(ex.retry_at if ex.retry_at is not None else ex.deadline)
            if ex.resolved_at is not None and not ex.withdrawn:
                times.append(ex.resolved_at + self.linger)
        return min(times) if times else None
