import pytest
from hypothesis import given
from hypothesis import strategies as st

from prefixguard.clock import ManualClock
from prefixguard.config import EngineConfig, MitigationConfig
from prefixguard.detection import EXACT_ORIGIN, SUBPREFIX_ORIGIN, AlertState, HijackAlert, OwnedPrefix
from prefixguard.engine import Engine
from prefixguard.feeds import ANNOUNCEMENT, RouteObservation
from prefixguard.mitigation import (AckTimeout, Command, DryRunController, FakeController, MitigationPlan,
                                    Mitigator, PlanError, PlanStatus, UnmitigableByDeaggregation, acknowledge,
                                    format_command, parse_command, parse_reply, plan, render_commands,
                                    withdraw_commands)
from prefixguard.prefix import AsPath, parse_prefix

from strategies import asns, prefixes

P = parse_prefix
OWNED23 = OwnedPrefix(P("10.0.0.0/23"), frozenset({65001}))


def alert(owned=OWNED23, observed=None, kind=EXACT_ORIGIN, origin=65002, aid="alert-1"):
    return HijackAlert(aid, owned, origin, observed or owned.prefix, kind, 0.0, 45.0)


class TestPlan:
    def test_exact_hijack_on_slash23(self):
        p = plan(alert(), OWNED23)
        assert p.announcements == (P("10.0.0.0/24"), P("10.0.1.0/24"))
        assert p.parent == P("10.0.0.0/23") and p.origin == 65001 and p.status is PlanStatus.PLANNED

    def test_slash24_owned_unmitigable(self):
        owned = OwnedPrefix(P("198.51.100.0/24"), frozenset({65001}))
        with pytest.raises(UnmitigableByDeaggregation):
            plan(alert(owned), owned)

    def test_subprefix_at_slash24_unmitigable(self):
        with pytest.raises(UnmitigableByDeaggregation):
            plan(alert(observed=P("10.0.0.0/24"), kind=SUBPREFIX_ORIGIN), OWNED23)

    def test_subprefix_outspecified(self):
        owned = OwnedPrefix(P("10.0.0.0/22"), frozenset({65001}))
        p = plan(alert(owned, observed=P("10.0.2.0/23"), kind=SUBPREFIX_ORIGIN), owned)
        assert p.parent == P("10.0.2.0/23")
        assert p.announcements == (P("10.0.2.0/24"), P("10.0.3.0/24"))

    def test_lowest_legitimate_origin(self):
        owned = OwnedPrefix(P("10.0.0.0/23"), frozenset({65020, 65001, 65010}))
        assert plan(alert(owned), owned).origin == 65001

    def test_preconditions(self):
        a = alert()
        a.state = AlertState.MITIGATING
        with pytest.raises(PlanError):
            plan(a, OWNED23)
        disabled = OwnedPrefix(P("10.0.0.0/23"), frozenset({65001}), mitigation_enabled=False)
        with pytest.raises(PlanError):
            plan(alert(disabled), disabled)

    @given(prefixes(0, 30), st.integers(1, 32))
    def test_never_longer_than_max_length(self, parent, max_length):
        owned = OwnedPrefix(parent, frozenset({65001}))
        try:
            p = plan(alert(owned), owned, max_length)
        except UnmitigableByDeaggregation:
            assert parent.length >= max_length
            return
        assert all(a.length <= max_length for a in p.announcements)
        assert all(parent.contains(a) and a != parent for a in p.announcements)
        assert sum(a.size for a in p.announcements) == parent.size
        assert not p.announcements[0].overlaps(p.announcements[1])


class TestCommands:
    def test_render_example(self):
        p = plan(alert(), OWNED23)
        assert render_commands(p, 60.0) == ["announce 10.0.0.0/24 origin 65001", "announce 10.0.1.0/24 origin 65001"]
        assert p.status is PlanStatus.COMMANDED and p.commanded_at == 60.0 and p.attempts == 1

    def test_render_twice_rejected(self):
        p = plan(alert(), OWNED23)
        render_commands(p, 0.0)
        with pytest.raises(PlanError):
            render_commands(p, 1.0)

    def test_empty_plan_guard(self):
        with pytest.raises(PlanError):
            render_commands(MitigationPlan("a", P("10.0.0.0/23"), (), 65001), 0.0)

    @given(prefixes(0, 23))
    def test_command_count_equals_announcements(self, parent):
        owned = OwnedPrefix(parent, frozenset({65001}))
        p = plan(alert(owned), owned)
        lines = render_commands(p, 0.0)
        assert len(lines) == len(p.announcements)
        assert [parse_command(line).prefix for line in lines] == list(p.announcements)

    @given(prefixes(), asns)
    def test_roundtrip(self, prefix, origin):
        for cmd in (Command("announce", prefix, origin), Command("withdraw", prefix)):
            assert parse_command(format_command(cmd)) == cmd

    def test_withdraw_commands(self):
        p = plan(alert(), OWNED23)
        assert withdraw_commands(p) == ["withdraw 10.0.0.0/24", "withdraw 10.0.1.0/24"]

    @pytest.mark.parametrize("line", ["announce 10.0.0.0/24", "announce 10.0.0.0/24 origin 0",
                                      "withdraw", "ANNOUNCE 10.0.0.0/24 origin 1",
                                      "announce 10.0.0.0/24  origin 1", "withdraw 10.0.1.0/23"])
    def test_bad_commands(self, line):
        with pytest.raises(ValueError):
            parse_command(line)

    def test_replies(self):
        assert parse_reply("ok announce 10.0.0.0/24 origin 65001\n") == (True, "announce 10.0.0.0/24 origin 65001")
        assert parse_reply("error session down") == (False, "session down")
        with pytest.raises(ValueError):
            parse_reply("maybe")


class TestAcknowledge:
    def test_within_deadline(self):
        p = plan(alert(), OWNED23)
        render_commands(p, 100.0)
        acknowledge(p, 115.0)
        assert p.status is PlanStatus.ACKNOWLEDGED and p.announce_latency == 15.0

    def test_late_ack_times_out(self):
        p = plan(alert(), OWNED23)
        render_commands(p, 100.0)
        with pytest.raises(AckTimeout):
            acknowledge(p, 131.0, deadline=30.0)

    def test_requires_commanded(self):
        with pytest.raises(PlanError):
            acknowledge(plan(alert(), OWNED23), 1.0)

    def test_status_is_monotonic(self):
        p = plan(alert(), OWNED23)
        with pytest.raises(PlanError):
            p.advance(PlanStatus.ACKNOWLEDGED)
        p.advance(PlanStatus.FAILED)
        with pytest.raises(PlanError):
            p.advance(PlanStatus.COMMANDED)


def hijack(t):
    return RouteObservation("ris", "vp1", P("10.0.0.0/23"), ANNOUNCEMENT, AsPath.of([64500, 65002]), t, t)


def engine_with(controller, **mit):
    cfg = EngineConfig(owned=[OWNED23], mitigation=MitigationConfig(**mit))
    return Engine(cfg, controller)


class TestReactor:
    def test_no_ack_fails_after_three_retries(self):
        ctl = FakeController(delay=None)
        eng = engine_with(ctl)
        clock = ManualClock(0.0)
        eng.process(hijack(clock.now()))
        while (t := eng.next_wakeup()) is not None:
            clock.set(t)
            eng.tick(clock.now())
        p = eng.mitigator.plans["alert-1"]
        assert p.status is PlanStatus.FAILED and p.attempts == 4
        assert sorted({t for t, _ in ctl.sent}) == [0.0, 32.0, 66.0, 104.0]
        assert len(ctl.sent) == 8
        errors = [r for r in eng.log.records if r["event"] == "plan_error"]
        assert len(errors) == 1 and errors[0]["error"] == "AckTimeout" and errors[0]["t"] == 134.0
        # the alert stays active
        assert eng.detector.alerts["alert-1"].state is AlertState.MITIGATING

    def test_missed_deadlines_fire_at_their_own_time(self):
        ctl = FakeController(delay=None)
        eng = engine_with(ctl)
        eng.process(hijack(0.0))
        eng.tick(1000.0)
        assert sorted({t for t, _ in ctl.sent}) == [0.0, 32.0, 66.0, 104.0]
        assert eng.mitigator.plans["alert-1"].status is PlanStatus.FAILED

    @pytest.mark.parametrize("delay", [0.0, 7.5, 15.0, 29.0])
    def test_ack_latency_equals_controller_delay(self, delay):
        eng = engine_with(FakeController(delay=delay))
        clock = ManualClock(500.0)
        eng.process(hijack(clock.now()))
        clock.advance(delay)
        eng.tick(clock.now())
        p = eng.mitigator.plans["alert-1"]
        assert p.status is PlanStatus.ACKNOWLEDGED
        assert p.announce_latency == delay

    def test_ack_on_a_retry(self):
        # a 40 s controller misses the first deadline; the retry's ack arrives in time
        eng = engine_with(FakeController(delay=25.0), ack_deadline=20.0)
        eng.process(hijack(0.0))
        eng.tick(200.0)
        p = eng.mitigator.plans["alert-1"]
        assert p.status is PlanStatus.ACKNOWLEDGED and p.attempts == 2
        assert p.commanded_at == 0.0 and p.acknowledged_at == 25.0

    def test_error_reply_triggers_retry(self):
        ctl = DryRunController()
        m = Mitigator(ctl)
        m.on_alert(alert(), OWNED23, 0.0)
        ctl.poll(0.0)
        events = m.on_reply("error peer rejected", 1.0)
        assert events[0]["event"] == "controller_reply" and events[0]["alert_id"] == "alert-1"
        assert m.next_wakeup() == 3.0
        m.tick(3.0)
        assert m.plans["alert-1"].attempts == 2 and len(ctl.sent) == 4

    def test_replan_is_noop(self):
        m = Mitigator(DryRunController())
        a = alert()
        assert m.on_alert(a, OWNED23, 0.0)
        assert m.on_alert(a, OWNED23, 1.0) == []

    def test_unmitigable_logged(self):
        owned = OwnedPrefix(P("198.51.100.0/24"), frozenset({65001}))
        events = Mitigator(DryRunController()).on_alert(alert(owned), owned, 5.0)
        assert [e["error"] for e in events] == ["UnmitigableByDeaggregation"]

    def test_linger_withdraw(self):
        ctl = DryRunController()
        m = Mitigator(ctl, linger=3600.0)
        m.on_alert(alert(), OWNED23, 0.0)
        for line in ctl.poll(0.0):
            m.on_reply(line, 0.0)
        m.complete("alert-1", 50.0, 120.0)
        m.resolved("alert-1", 120.0)
        assert m.next_wakeup() == 3720.0
        assert m.tick(3719.0) == []
        events = m.tick(3720.0)
        assert [e["line"] for e in events] == ["withdraw 10.0.0.0/24", "withdraw 10.0.1.0/24"]
        assert m.next_wakeup() is None

    def test_reply_records_plan(self):
        ctl = DryRunController()
        m = Mitigator(ctl)
        m.on_alert(alert(), OWNED23, 10.0)
        events = [e for line in ctl.poll(12.0) for e in m.on_reply(line, 12.0)]
        plans = [e for e in events if e["event"] == "plan"]
        assert len(plans) == 1 and plans[0]["status"] == "ACKNOWLEDGED" and plans[0]["acknowledged_at"] == 12.0


def test_ordering_on_complete_plans():
    eng = engine_with(FakeController(delay=15.0))
    eng.process(hijack(100.0))
    legit = [RouteObservation("ris", "vp1", P(p), ANNOUNCEMENT, AsPath.of([64500, 65001]), 130.0, 130.0)
             for p in ("10.0.0.0/24", "10.0.1.0/24")]
    for o in legit:
        eng.process(o)
    eng.tick(400.0)
    p = eng.mitigator.plans["alert-1"]
    a = eng.detector.alerts["alert-1"]
    assert p.status is PlanStatus.COMPLETE and a.state is AlertState.RESOLVED
    assert a.detected_at <= p.commanded_at <= p.completed_at
    assert p.completed_at == 130.0
