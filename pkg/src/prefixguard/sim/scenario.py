"""Three-phase hijack experiment: setup, hijack + detection, mitigation.

The simulator plays both the Internet and the SDN controller. Monitors turn
best-route changes at their vantage-point ASes into observations delivered to
the engine after the monitor's extra delay; controller commands from the
engine become originations at the legitimate AS after ``controller_delay``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from ..config import EngineConfig, MitigationConfig, load_config
from ..detection import OwnedPrefix
from ..engine import Engine
from ..feeds import ANNOUNCEMENT, WITHDRAWAL, RouteObservation
from ..mitigation import PlanStatus, parse_command
from ..monitor import export_timeline, is_legitimate
from ..prefix import IpPrefix, parse_prefix
from .bgp import RouteChange, Simulator
from .topology import SimTopology, parse_topology, random_topology


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    topology: SimTopology
    owned: OwnedPrefix
    hijack_start: float = 60.0
    hijacked_prefix: IpPrefix | None = None
    controller_delay: float = 15.0
    engine: EngineConfig | None = None
    event_budget: int = 2_000_000

    def validate(self) -> None:
        t = self.topology
        t.validate()
        if t.legitimate_origin is None or t.hijacker is None:
            raise ScenarioError("scenario needs a legitimate origin and a hijacker")
        if t.legitimate_origin == t.hijacker:
            raise ScenarioError("legitimate origin and hijacker must differ")
        if t.legitimate_origin not in self.owned.legitimate_origins:
            raise ScenarioError(f"AS{t.legitimate_origin} is not a configured legitimate origin")
        if t.hijacker in self.owned.legitimate_origins:
            raise ScenarioError(f"hijacker AS{t.hijacker} is configured as legitimate")
        if not t.monitors:
            raise ScenarioError("scenario has no monitors")
        if self.hijacked_prefix is not None and not self.owned.prefix.contains(self.hijacked_prefix):
            raise ScenarioError(f"{self.hijacked_prefix} is not inside {self.owned.prefix}")

    def engine_config(self) -> EngineConfig:
        if self.engine is not None:
            return self.engine
        return EngineConfig(owned=[self.owned], mitigation=MitigationConfig())


@dataclass
class ScenarioResult:
    status: str  # mitigated | unmitigable | not_detected | failed | incomplete
    t_converged_setup: float
    hijack_time: float
    t_detect: float | None = None
    t_command: float | None = None
    t_complete: float | None = None
    total: float | None = None
    detected_at: float | None = None
    commanded_at: float | None = None
    acknowledged_at: float | None = None
    completed_at: float | None = None
    observed_fraction: float | None = None
    true_fraction: float = 0.0
    alert_id: str | None = None
    events_processed: int = 0
    event_log: list = field(default_factory=list, repr=False)
    timeline: list = field(default_factory=list, repr=False)
    simulator: Simulator | None = field(default=None, repr=False, compare=False)
    engine: Engine | None = field(default=None, repr=False, compare=False)

    def summary(self) -> dict:
        keys = ["status", "t_converged_setup", "hijack_time", "t_detect", "t_command", "t_complete",
                "total", "detected_at", "commanded_at", "acknowledged_at", "completed_at",
                "observed_fraction", "true_fraction", "alert_id", "events_processed"]
        return {k: getattr(self, k) for k in keys}


class SimController:
    """Applies controller commands as originations at the commanded origin AS."""

    def __init__(self, sim: Simulator, delay: float):
        self.sim = sim
        self.delay = delay
        self.engine: Engine | None = None
        self.after_reply = lambda: None
        self.sent: list = []

    def send(self, lines, now: float) -> None:
        for line in lines:
            self.sent.append((now, line))
            self.sim.schedule(now + self.delay, lambda line=line: self._apply(line))

    def _apply(self, line: str) -> None:
        cmd = parse_command(line)
        if cmd.action == "announce":
            if cmd.origin not in self.sim.topology.ases:
                reply = f"error unknown origin AS{cmd.origin}"
            else:
                self.sim._set_origin(cmd.origin, cmd.prefix, True)
                reply = f"ok {line}"
        else:
            for asn in sorted(self.sim.topology.ases):
                if (asn, cmd.prefix) in self.sim.originated:
                    self.sim._set_origin(asn, cmd.prefix, False)
            reply = f"ok {line}"
        self.engine.controller_reply(reply, self.sim.now)
        self.after_reply()

    def poll(self, now: float) -> list[str]:
        return []


def _attach_monitors(sim: Simulator, deliver) -> None:
    points = {}
    for source, entries in sim.topology.monitors.items():
        for asn, delay in entries:
            points.setdefault(asn, []).append((source, delay))

    def on_change(change: RouteChange) -> None:
        for source, delay in points.get(change.asn, ()):
            path = sim.observed_path(change.asn, change.prefix)
            obs = RouteObservation(
                source=source, vantage_point=f"AS{change.asn}", prefix=change.prefix,
                kind=ANNOUNCEMENT if path is not None else WITHDRAWAL, path=path,
                timestamp=change.time, received_at=change.time + delay,
            )
            sim.schedule(obs.received_at, lambda obs=obs: deliver(obs))

    sim.listeners.append(on_change)


def run_scenario(scenario: Scenario) -> ScenarioResult:
    """Run all three phases on the simulation clock.

    The run stops at routing quiescence once the mitigation has completed (or
    cannot progress); post-resolution cleanup such as withdrawing the
    sub-prefixes after the linger period lies beyond that horizon.
    """
    scenario.validate()
    topo = scenario.topology
    sim = Simulator(topo, scenario.event_budget)
    controller = SimController(sim, scenario.controller_delay)
    engine = Engine(scenario.engine_config(), controller)
    controller.engine = engine
    scheduled = set()

    def arm(after: float = float("-inf")) -> None:
        # keep engine deadlines (ack timeouts, hold timers) on the event queue
        # until the mitigation has reached a final state
        if any(p.status in (PlanStatus.COMPLETE, PlanStatus.FAILED) for p in engine.mitigator.plans.values()):
            return
        t = engine.next_wakeup()
        if t is None or t <= after:
            return
        t = max(t, sim.now)
        if t not in scheduled:
            scheduled.add(t)
            sim.schedule(t, lambda: wake(t))

    def wake(t: float) -> None:
        scheduled.discard(t)
        engine.tick(t)
        arm(after=t)

    def deliver(obs: RouteObservation) -> None:
        engine.process(obs)
        arm()

    controller.after_reply = arm
    _attach_monitors(sim, deliver)

    # Phase 1: setup
    sim.originate(topo.legitimate_origin, scenario.owned.prefix, 0.0)
    sim.run()
    t_setup = sim.now

    # Phase 2 + 3: hijack, detection, mitigation
    hijack_time = t_setup + scenario.hijack_start
    target = scenario.hijacked_prefix or scenario.owned.prefix
    sim.originate(topo.hijacker, target, hijack_time)
    sim.run()

    result = ScenarioResult(status="not_detected", t_converged_setup=t_setup, hijack_time=hijack_time,
                            events_processed=sim.events_processed)
    space = scenario.owned.prefix
    alerts = list(engine.detector.alerts.values())
    if alerts:
        alert = alerts[0]
        result.alert_id = alert.id
        result.detected_at = alert.detected_at
        result.t_detect = alert.detected_at - hijack_time
        plan = engine.mitigator.plans.get(alert.id)
        if plan is None:
            result.status = "unmitigable" if alert.owned.mitigation_enabled else "detected"
        else:
            space = plan.parent
            result.commanded_at = plan.commanded_at
            result.acknowledged_at = plan.acknowledged_at
            result.completed_at = plan.completed_at
            if plan.acknowledged_at is not None:
                result.t_command = plan.acknowledged_at - alert.detected_at
            if plan.status is PlanStatus.COMPLETE:
                result.status = "mitigated"
                result.t_complete = plan.completed_at - plan.acknowledged_at
                result.total = plan.completed_at - hijack_time
            else:
                result.status = "failed" if plan.status is PlanStatus.FAILED else "incomplete"
        tracker = engine.trackers.get(alert.id)
        if tracker is not None:
            try:
                result.observed_fraction = tracker.report(engine.views, engine.now).fraction
            except ValueError:
                result.observed_fraction = None
    legit = scenario.owned.legitimate_origins
    vps = sorted(topo.monitor_points())
    result.true_fraction = sum(is_legitimate(sim.view_of(a), space, legit) for a in vps) / len(vps)
    result.events_processed = sim.events_processed
    result.event_log = list(engine.log.records)
    result.timeline, _ = export_timeline(engine.log.records)
    result.simulator = sim
    result.engine = engine
    return result


def random_scenario(n_ases: int, seed: int, *, owned_prefix: str = "10.0.0.0/23",
                    monitor_delays=(45.0, 120.0, 900.0), vantage_points_per_monitor: int = 3,
                    peer_probability: float = 0.02, watch_hijacker: bool = False,
                    hijack_start: float = 60.0, controller_delay: float = 15.0) -> Scenario:
    """Random topology with random monitor placement and roles.

    With ``watch_hijacker`` every monitor also peers with the hijacking AS,
    so all of them are guaranteed to see the bogus route.
    """
    rng = random.Random(seed)
    topo = random_topology(n_ases, seed, peer_probability=peer_probability)
    ases = sorted(topo.ases)
    if len(ases) < 2:
        raise ScenarioError("a hijack scenario needs at least two ASes")
    topo.legitimate_origin, topo.hijacker = rng.sample(ases, 2)
    for i, d in enumerate(monitor_delays):
        points = rng.sample(ases, min(vantage_points_per_monitor, len(ases)))
        if watch_hijacker and topo.hijacker not in points:
            points[0] = topo.hijacker
        for asn in sorted(points):
            topo.add_monitor(f"monitor-{i}", asn, float(d))
    owned = OwnedPrefix(parse_prefix(owned_prefix), frozenset({topo.legitimate_origin}))
    return Scenario(topo, owned, hijack_start=hijack_start, controller_delay=controller_delay)


# -- scenario files -----------------------------------------------------------------

def parse_scenario(text: str, base_dir: Path | str = ".", seed: int | None = None) -> Scenario:
    """Read a ``key = value`` scenario description.

    Keys: ``topology`` (edge-list file, or ``random``), ``monitors`` (file),
    ``owned_prefix``, ``legitimate_origins`` (comma separated),
    ``legitimate_origin``, ``hijacker``, ``hijacked_prefix``, ``hijack_start``,
    ``controller_delay``, ``engine_config``, ``event_budget``. A random
    topology also reads ``ases``, ``peer_probability``, ``monitor_delays``,
    ``vantage_points_per_monitor`` and ``watch_hijacker``.
    """
    base = Path(base_dir)
    kv = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        kv[k] = v

    def need(key):
        if key not in kv:
            raise ScenarioError(f"missing scenario key '{key}'")
        return kv[key]

    seed = int(kv.get("seed", 0)) if seed is None else seed
    try:
        if need("topology") == "random":
            scenario = random_scenario(
                int(kv.get("ases", 50)), seed,
                owned_prefix=need("owned_prefix"),
                monitor_delays=[float(d) for d in kv.get("monitor_delays", "45,120,900").split(",")],
                vantage_points_per_monitor=int(kv.get("vantage_points_per_monitor", 3)),
                peer_probability=float(kv.get("peer_probability", 0.02)),
                watch_hijacker=kv.get("watch_hijacker", "false").lower() == "true",
            )
            topo = scenario.topology
        else:
            topo = parse_topology((base / kv["topology"]).read_text())
            if "monitors" in kv:
                parse_topology((base / kv["monitors"]).read_text(), topo)
            topo.legitimate_origin = int(need("legitimate_origin"))
            topo.hijacker = int(need("hijacker"))
        origins = kv.get("legitimate_origins", str(topo.legitimate_origin))
        owned = OwnedPrefix(parse_prefix(need("owned_prefix")),
                            frozenset(int(a) for a in origins.split(",")))
        engine = None
        if "engine_config" in kv:
            engine = load_config(base / kv["engine_config"])
        return Scenario(
            topology=topo,
            owned=owned,
            hijack_start=float(kv.get("hijack_start", 60.0)),
            hijacked_prefix=parse_prefix(kv["hijacked_prefix"]) if "hijacked_prefix" in kv else None,
            controller_delay=float(kv.get("controller_delay", 15.0)),
            engine=engine,
            event_budget=int(kv.get("event_budget", 2_000_000)),
        )
    except (OSError, ValueError) as exc:
        raise ScenarioError(str(exc)) from None


def load_scenario(path: str | Path, seed: int | None = None) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), path.parent, seed)
