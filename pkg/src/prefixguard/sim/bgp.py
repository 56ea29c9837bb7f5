"""Discrete-event BGP propagation under Gao-Rexford policies.

No MRAI timers, damping or iBGP: an update crosses a link after that link's
fixed delay, and every AS re-runs its decision process on arrival.
"""

from __future__ import annotations

import heapq
from typing import Callable, NamedTuple

from ..monitor import VantagePointView
from ..prefix import AsPath, IpPrefix
from .topology import CUSTOMER, PEER, PROVIDER, SimTopology

LOCAL = "local"
PREFERENCE = {CUSTOMER: 200, PEER: 100, PROVIDER: 50}


class NoCandidates(ValueError):
    pass


class UnknownOrigin(ValueError):
    pass


class ScenarioStalled(RuntimeError):
    def __init__(self, budget: int, now: float):
        super().__init__(f"no quiescence within an event budget of {budget} (sim time {now:.3f}s)")
        self.budget = budget
        self.now = now


class Route(NamedTuple):
    path: AsPath | None  # None for a locally originated route
    relationship: str


class RouteChange(NamedTuple):
    time: float
    asn: int
    prefix: IpPrefix
    path: AsPath | None  # new best path at ``asn``; None once unreachable


def decide(candidates) -> Route:
    """Pick the best of ``(path, relationship)`` candidates.

    Customer routes beat peer routes beat provider routes; then the shorter
    path wins; then the lower first-hop ASN.
    """
    if not candidates:
        raise NoCandidates("no candidate routes")
    best = min(candidates, key=lambda c: (-PREFERENCE[c[1]], len(c[0]), c[0].first_hop()))
    return Route(best[0], best[1])


class Simulator:
    def __init__(self, topology: SimTopology, event_budget: int = 2_000_000):
        self.topology = topology
        self.event_budget = event_budget
        self.now = 0.0
        self.events_processed = 0
        self._queue: list = []
        self._seq = 0
        self.adj_in: dict[tuple, dict] = {}    # (asn, prefix) -> {neighbor: AsPath}
        self.best: dict[tuple, Route] = {}     # (asn, prefix) -> Route
        self.originated: set = set()           # (asn, prefix)
        self.adj_out: dict[tuple, AsPath] = {}  # (asn, neighbor, prefix) -> exported path
        self.history: list[RouteChange] = []
        self.listeners: list[Callable[[RouteChange], None]] = []

    # -- scheduling ----------------------------------------------------------------

    def schedule(self, at: float, action: Callable[[], None]) -> None:
        if at < self.now:
            raise ValueError(f"cannot schedule in the past ({at} < {self.now})")
        self._seq += 1
        heapq.heappush(self._queue, (at, self._seq, action))

    def pending(self) -> int:
        return len(self._queue)

    def run(self, until: float | None = None) -> float:
        """Process events until the queue drains (or ``until``); returns sim time."""
        while self._queue:
            if until is not None and self._queue[0][0] > until:
                self.now = until
                break
            at, _, action = heapq.heappop(self._queue)
            self.events_processed += 1
            if self.events_processed > self.event_budget:
                raise ScenarioStalled(self.event_budget, at)
            self.now = at
            action()
        return self.now

    # -- routing -----------------------------------------------------------------

    def originate(self, asn: int, prefix: IpPrefix, at: float | None = None) -> None:
        if asn not in self.topology.ases:
            raise UnknownOrigin(f"AS{asn} is not in the topology")
        self.schedule(self.now if at is None else at, lambda: self._set_origin(asn, prefix, True))

    def stop_originating(self, asn: int, prefix: IpPrefix, at: float | None = None) -> None:
        if asn not in self.topology.ases:
            raise UnknownOrigin(f"AS{asn} is not in the topology")
        self.schedule(self.now if at is None else at, lambda: self._set_origin(asn, prefix, False))

    def _set_origin(self, asn, prefix, on: bool) -> None:
        key = (asn, prefix)
        if on:
            self.originated.add(key)
        else:
            self.originated.discard(key)
        self._recompute(asn, prefix)

    def _receive(self, asn: int, neighbor: int, prefix: IpPrefix, path: AsPath | None) -> None:
        rib = self.adj_in.setdefault((asn, prefix), {})
        if path is None or asn in path:
            rib.pop(neighbor, None)
        else:
            rib[neighbor] = path
        self._recompute(asn, prefix)

    def candidates(self, asn: int, prefix: IpPrefix) -> list[tuple[AsPath, str]]:
        rib = self.adj_in.get((asn, prefix), {})
        return [(path, self.topology.relationship(asn, n)) for n, path in sorted(rib.items())]

    def select(self, asn: int, prefix: IpPrefix) -> Route | None:
        if (asn, prefix) in self.originated:
            return Route(None, LOCAL)
        cands = self.candidates(asn, prefix)
        return decide(cands) if cands else None

    def _recompute(self, asn: int, prefix: IpPrefix) -> None:
        key = (asn, prefix)
        new = self.select(asn, prefix)
        if new == self.best.get(key):
            return
        if new is None:
            del self.best[key]
        else:
            self.best[key] = new
        change = RouteChange(self.now, asn, prefix, new.path if new is not None else None)
        self.history.append(change)
        for fn in self.listeners:
            fn(change)
        self._export(asn, prefix, new)

    def exports(self, asn: int, prefix: IpPrefix, route: Route | None) -> dict[int, AsPath]:
        """What ``asn`` advertises to each neighbor given its best ``route``."""
        out = {}
        if route is None:
            return out
        hops = (asn,) + (route.path.hops if route.path is not None else ())
        for n, rel, _ in self.topology.neighbors(asn):
            if route.relationship in (LOCAL, CUSTOMER) or rel == CUSTOMER:
                if n not in hops:
                    out[n] = AsPath(hops)
        return out

    def _export(self, asn: int, prefix: IpPrefix, route: Route | None) -> None:
        wanted = self.exports(asn, prefix, route)
        for n, _, delay in self.topology.neighbors(asn):
            key = (asn, n, prefix)
            new = wanted.get(n)
            if self.adj_out.get(key) == new:
                continue
            if new is None:
                del self.adj_out[key]
            else:
                self.adj_out[key] = new
            self.schedule(self.now + delay,
                          lambda n=n, new=new: self._receive(n, asn, prefix, new))

    # -- inspection ------------------------------------------------------------------

    def observed_path(self, asn: int, prefix: IpPrefix) -> AsPath | None:
        """Path a collector peering with ``asn`` would see for ``prefix``."""
        route = self.best.get((asn, prefix))
        if route is None:
            return None
        return AsPath((asn,) + (route.path.hops if route.path is not None else ()))

    def view_of(self, asn: int) -> VantagePointView:
        view = VantagePointView(f"AS{asn}")
        for (a, prefix), route in self.best.items():
            if a == asn:
                view.selected[prefix] = (self.observed_path(asn, prefix), self.now)
        return view

    def is_fixed_point(self) -> bool:
        """True when re-running the decision process anywhere changes nothing."""
        for asn in self.topology.ases:
            prefixes = {p for (a, p) in self.adj_in if a == asn} | {p for (a, p) in self.originated if a == asn}
            for prefix in prefixes:
                if self.select(asn, prefix) != self.best.get((asn, prefix)):
                    return False
                for n, _, _ in self.topology.neighbors(asn):
                    if self.adj_out.get((asn, n, prefix)) != self.adj_in.get((n, prefix), {}).get(asn):
                        return False
                if self.exports(asn, prefix, self.best.get((asn, prefix))) != {
                        n: p for (a, n, q), p in self.adj_out.items() if a == asn and q == prefix}:
                    return False
        return True


def propagate(topology: SimTopology, origin: int, prefix: IpPrefix, start_time: float = 0.0,
              event_budget: int = 2_000_000) -> list[RouteChange]:
    """Best-route changes at every other AS after ``origin`` announces ``prefix``."""
    if origin not in topology.ases:
        raise UnknownOrigin(f"AS{origin} is not in the topology")
    sim = Simulator(topology, event_budget)
    sim.now = start_time
    sim.originate(origin, prefix, start_time)
    sim.run()
    return [c for c in sim.history if c.asn != origin]
