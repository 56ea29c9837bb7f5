"""The ingest -> detect -> mitigate -> monitor pipeline."""

from __future__ import annotations

import json
import time
from collections import Counter
from typing import Iterable, TextIO

from .config import EngineConfig
from .detection import AlertState, Detector, HijackAlert
from .feeds import ReorderBuffer, RouteObservation, iter_trace
from .mitigation import DryRunController, Mitigator, PlanStatus
from .monitor import ConvergenceTracker, NoVantagePoints, OriginWatcher, ViewStore, vp_id


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


class EventLog:
    """Newline-delimited JSON event records, optionally mirrored to a stream."""

    def __init__(self, stream: TextIO | None = None):
        self.records: list[dict] = []
        self.stream = stream

    def emit(self, record: dict) -> None:
        self.records.append(record)
        if self.stream is not None:
            self.stream.write(dumps(record) + "\n")
            self.stream.flush()

    def text(self) -> str:
        return "".join(dumps(r) + "\n" for r in self.records)


class Engine:
    def __init__(self, config: EngineConfig, controller=None, log: EventLog | None = None):
        self.config = config
        self.controller = controller if controller is not None else DryRunController()
        self.log = log if log is not None else EventLog()
        self.metrics: Counter = Counter()
        self.detector = Detector(config.owned, config.quorum)
        m = config.mitigation
        self.mitigator = Mitigator(self.controller, m.max_length, m.ack_deadline, m.retries,
                                   m.backoff_base, m.linger)
        self.views = ViewStore()
        self.trackers: dict[str, ConvergenceTracker] = {}
        self.watchers = [OriginWatcher(o.prefix, o.legitimate_origins) for o in config.owned]
        self._last_report: dict[str, tuple] = {}
        self.now = 0.0

    # -- inputs ----------------------------------------------------------------

    def process(self, obs: RouteObservation) -> None:
        self._advance(obs.received_at)
        self.metrics["processed"] += 1
        if self.views.apply(obs):
            vid = vp_id(obs.source, obs.vantage_point)
            for w in self.watchers:
                if w.space.overlaps(obs.prefix):
                    rec = w.update(self.views, vid, self.now)
                    if rec is not None:
                        self._emit(rec)
        for rec in self.detector.ingest(obs):
            self._emit(rec)
            self._on_alert(self.detector.alerts[rec["alert_id"]])
        self._drain()
        self._converge()

    def controller_reply(self, line: str, now: float) -> None:
        # a reply landing exactly on its ack deadline is still in time; whatever
        # else is due at ``now`` waits for the next tick
        self._advance(now, inclusive=False)
        for rec in self.mitigator.on_reply(line, self.now):
            self._emit(rec)
        self._converge()

    def tick(self, now: float) -> None:
        self._advance(now)
        self._drain()
        self._converge()

    def next_wakeup(self) -> float | None:
        """Earliest time something is due inside the engine: an ack deadline or
        retry, a controller reply, a linger withdraw or the end of a hold period."""
        times = [t for t in (self.mitigator.next_wakeup(), self._next_reply()) if t is not None]
        for tr in self.trackers.values():
            if tr.full_since is not None and not tr.complete:
                times.append(tr.full_since + tr.hold_time)
        return min(times) if times else None

    # -- internals ---------------------------------------------------------------

    def _emit(self, rec: dict) -> None:
        self.log.emit(rec)

    def _next_reply(self) -> float | None:
        next_reply = getattr(self.controller, "next_reply", None)
        return next_reply() if next_reply is not None else None

    def _advance(self, now: float, inclusive: bool = True) -> None:
        """Move the engine clock to ``now``, handling everything due on the way
        at its own time rather than at ``now``."""
        now = max(self.now, now)
        wake = self.next_wakeup()
        while wake is not None and (wake <= now if inclusive else wake < now):
            self.now = max(self.now, wake)
            self._drain()
            for rec in self.mitigator.tick(self.now):
                self._emit(rec)
            self._converge()
            nxt = self.next_wakeup()
            if nxt is not None and nxt <= wake:
                break  # nothing left that can progress before ``now``
            wake = nxt
        self.now = now
        if not inclusive:
            return
        self._drain()
        for rec in self.mitigator.tick(self.now):
            self._emit(rec)

    def _drain(self) -> None:
        for line in self.controller.poll(self.now):
            for rec in self.mitigator.on_reply(line, self.now):
                self._emit(rec)

    def _on_alert(self, alert: HijackAlert) -> None:
        owned = alert.owned
        space = owned.prefix
        if owned.mitigation_enabled:
            for rec in self.mitigator.on_alert(alert, owned, self.now):
                self._emit(rec)
            plan = self.mitigator.plans.get(alert.id)
            if plan is not None:
                space = plan.parent
                self._emit(self.detector.set_state(alert.id, AlertState.MITIGATING))
        self.trackers[alert.id] = ConvergenceTracker(alert.id, space, owned.legitimate_origins,
                                                     self.config.hold_time)

    def _converge(self) -> None:
        for alert in self.detector.active():
            tracker = self.trackers.get(alert.id)
            if tracker is None or tracker.complete:
                continue
            plan = self.mitigator.plans.get(alert.id)
            if plan is not None and plan.status not in (PlanStatus.ACKNOWLEDGED, PlanStatus.FAILED):
                continue
            try:
                report = tracker.report(self.views, self.now)
            except NoVantagePoints:
                continue
            sig = (report.legitimate_vps, report.total_vps, report.complete)
            if self._last_report.get(alert.id) != sig:
                self._last_report[alert.id] = sig
                self._emit(report.record(self.now))
            if report.complete:
                if plan is not None and plan.status is PlanStatus.ACKNOWLEDGED:
                    for rec in self.mitigator.complete(alert.id, report.completed_at, self.now):
                        self._emit(rec)
                self._emit(self.detector.set_state(alert.id, AlertState.RESOLVED))
                self.mitigator.resolved(alert.id, self.now)

    # -- reporting -----------------------------------------------------------------

    def summary(self) -> dict:
        alerts = []
        for a in self.detector.alerts.values():
            plan = self.mitigator.plans.get(a.id)
            row = {
                "alert_id": a.id, "prefix": str(a.owned.prefix), "observed_prefix": str(a.observed_prefix),
                "offending_origin": a.offending_origin, "kind": a.kind, "state": a.state.value,
                "evidence": len(a.evidence), "first_seen": a.first_seen, "detected_at": a.detected_at,
                "observation_latency": a.detected_at - a.first_seen,
                "plan": None,
            }
            if plan is not None:
                row["plan"] = {
                    "status": plan.status.value,
                    "announcements": [str(p) for p in plan.announcements],
                    "origin": plan.origin,
                    "announce_latency": plan.announce_latency,
                    "completion_latency": (plan.completed_at - plan.commanded_at
                                           if plan.completed_at is not None else None),
                }
            alerts.append(row)
        return {"alerts": alerts, "hijacks": len(alerts), "metrics": dict(sorted(self.metrics.items()))}


def replay(config: EngineConfig, lines: Iterable[str], *, engine: Engine | None = None,
           paced: bool = False, sleep=time.sleep, source: str = "trace") -> Engine:
    """Feed a recorded trace through the engine on the trace clock.

    Paced replay sleeps for the gaps between message timestamps; the event
    log is identical either way.
    """
    engine = engine if engine is not None else Engine(config)
    buf = ReorderBuffer(config.reorder_window, engine.metrics)
    last_ts = None
    for _, observations in iter_trace(lines, source=source, metrics=engine.metrics):
        for obs in observations:
            if paced and last_ts is not None and obs.timestamp > last_ts:
                sleep(obs.timestamp - last_ts)
            last_ts = obs.timestamp if last_ts is None else max(last_ts, obs.timestamp)
            for ready in buf.push(obs):
                engine.process(ready)
    for ready in buf.flush():
        engine.process(ready)
    return engine
