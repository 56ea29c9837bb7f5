"""AS-level topologies with business relationships and link delays."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

from ..prefix import check_asn

CUSTOMER = "customer"
PEER = "peer"
PROVIDER = "provider"


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    relationship: str  # "provider": a is a provider of b; "peer": a and b peer
    delay: float


@dataclass
class SimTopology:
    ases: set = field(default_factory=set)
    links: dict = field(default_factory=dict)  # frozenset({a, b}) -> Link
    monitors: dict = field(default_factory=dict)  # source id -> list of (asn, extra delay)
    legitimate_origin: int | None = None
    hijacker: int | None = None
    _adj: dict = field(default_factory=dict, repr=False, compare=False)

    def add_link(self, a: int, b: int, relationship: str, delay: float) -> None:
        a, b = check_asn(a), check_asn(b)
        if a == b:
            raise TopologyError(f"self-link on AS{a}")
        if relationship not in ("provider", "peer"):
            raise TopologyError(f"unknown relationship {relationship!r}")
        if not delay > 0:
            raise TopologyError(f"link {a}-{b}: delay must be > 0")
        key = frozenset((a, b))
        if key in self.links:
            raise TopologyError(f"relationship between AS{a} and AS{b} defined twice")
        self.links[key] = Link(a, b, relationship, float(delay))
        self.ases.update((a, b))
        self._adj.clear()

    def add_provider(self, provider: int, customer: int, delay: float) -> None:
        self.add_link(provider, customer, "provider", delay)

    def add_peer(self, a: int, b: int, delay: float) -> None:
        self.add_link(a, b, "peer", delay)

    def add_monitor(self, source: str, asn: int, extra_delay: float) -> None:
        if extra_delay < 0:
            raise TopologyError("monitor delay must be >= 0")
        self.monitors.setdefault(source, []).append((check_asn(asn), float(extra_delay)))

    def neighbors(self, asn: int) -> list[tuple[int, str, float]]:
        """``(neighbor, what the neighbor is to asn, delay)``, sorted by neighbor."""
        if not self._adj:
            adj = {a: [] for a in self.ases}
            for link in self.links.values():
                if link.relationship == "peer":
                    adj[link.a].append((link.b, PEER, link.delay))
                    adj[link.b].append((link.a, PEER, link.delay))
                else:
                    adj[link.a].append((link.b, CUSTOMER, link.delay))
                    adj[link.b].append((link.a, PROVIDER, link.delay))
            for v in adj.values():
                v.sort()
            self._adj.update(adj)
        return self._adj.get(asn, [])

    def relationship(self, a: int, b: int) -> str:
        """What ``b`` is to ``a``: customer, peer or provider."""
        link = self.links[frozenset((a, b))]
        if link.relationship == "peer":
            return PEER
        return CUSTOMER if link.a == a else PROVIDER

    def is_connected(self) -> bool:
        if not self.ases:
            return True
        start = min(self.ases)
        seen = {start}
        todo = deque([start])
        while todo:
            for n, _, _ in self.neighbors(todo.popleft()):
                if n not in seen:
                    seen.add(n)
                    todo.append(n)
        return len(seen) == len(self.ases)

    def validate(self) -> None:
        if not self.is_connected():
            raise TopologyError("topology is not connected")
        for role in (self.legitimate_origin, self.hijacker):
            if role is not None and role not in self.ases:
                raise TopologyError(f"AS{role} is not in the topology")
        for source, points in self.monitors.items():
            for asn, _ in points:
                if asn not in self.ases:
                    raise TopologyError(f"monitor {source}: AS{asn} is not in the topology")

    def monitor_points(self) -> set[int]:
        return {asn for points in self.monitors.values() for asn, _ in points}


def parse_topology(text: str, topo: SimTopology | None = None) -> SimTopology:
    """Read ``provider <a> <b> <delay>`` / ``peer <a> <b> <delay>`` lines.

    ``monitor <source> <asn> <delay>`` lines are accepted too, so one file can
    hold both.
    """
    topo = topo if topo is not None else SimTopology()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        f = line.split()
        try:
            if f[0] in ("provider", "peer") and len(f) == 4:
                topo.add_link(int(f[1]), int(f[2]), f[0], float(f[3]))
            elif f[0] == "monitor" and len(f) == 4:
                topo.add_monitor(f[1], int(f[2]), float(f[3]))
            else:
                raise TopologyError(f"unrecognized line {line!r}")
        except (ValueError, TopologyError) as exc:
            raise TopologyError(f"line {lineno}: {exc}") from None
    return topo


def render_topology(topo: SimTopology) -> str:
    out = []
    for link in sorted(topo.links.values(), key=lambda l: (l.a, l.b)):
        out.append(f"{link.relationship} {link.a} {link.b} {link.delay:g}\n")
    for source in sorted(topo.monitors):
        for asn, delay in topo.monitors[source]:
            out.append(f"monitor {source} {asn} {delay:g}\n")
    return "".join(out)


def random_topology(n: int, seed: int, *, peer_probability: float = 0.02,
                    multihome_probability: float = 0.3, delay_range=(1.0, 10.0),
                    first_asn: int = 1) -> SimTopology:
    """Provider tree with extra upstreams and random peering.

    AS ``first_asn`` is the root; every later AS buys transit from one or two
    earlier ASes, so the provider graph is acyclic and connected.
    """
    if n < 1:
        raise TopologyError("need at least one AS")
    rng = random.Random(seed)
    topo = SimTopology()
    asns = [first_asn + i for i in range(n)]
    topo.ases.add(asns[0])

    def delay():
        # quarter-second steps keep every sum of delays exact in binary floating point
        return rng.randint(int(delay_range[0] * 4), int(delay_range[1] * 4)) / 4

    for i in range(1, n):
        providers = {rng.choice(asns[:i])}
        if i > 1 and rng.random() < multihome_probability:
            providers.add(rng.choice(asns[:i]))
        for p in sorted(providers):
            topo.add_provider(p, asns[i], delay())
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < peer_probability and frozenset((asns[i], asns[j])) not in topo.links:
                topo.add_peer(asns[i], asns[j], delay())
    return topo
