"""Post-run audits for simulator results, shared by the sim and acceptance tests."""

from prefixguard.sim.topology import CUSTOMER, PEER, PROVIDER


def valley_free(topo, hops) -> bool:
    """``hops`` runs from the receiving AS back to the origin.

    Walking from the origin outwards the path may climb customer->provider
    links, cross at most one peer link, then only descend.
    """
    seq = list(reversed(hops))
    descending = False
    for a, b in zip(seq, seq[1:]):
        rel = topo.relationship(a, b)  # what b is to a
        if rel == PROVIDER:
            if descending:
                return False
        elif rel == PEER:
            if descending:
                return False
            descending = True
        else:
            assert rel == CUSTOMER
            descending = True
    return True


def lpm_origin(sim, asn, address):
    """Longest-prefix-match origin at ``asn`` for one address (None if unrouted)."""
    best = None
    for (a, prefix), route in sim.best.items():
        if a == asn and prefix.contains_address(address):
            if best is None or prefix.length > best[0].length:
                best = (prefix, route)
    if best is None:
        return None
    route = best[1]
    return asn if route.path is None else route.path.origin()


def first_sighting(sim, asn, prefix, origin, after):
    """Time the best route at ``asn`` first had ``origin`` at or after ``after``."""
    for c in sim.history:
        if c.time >= after and c.asn == asn and c.prefix == prefix:
            o = asn if c.path is None else c.path.origin()
            if o == origin:
                return c.time
    return None


def audit_run(scenario, result):
    """Invariants every successful run must satisfy; returns a list of violations."""
    problems = []
    sim, engine = result.simulator, result.engine
    topo = scenario.topology
    if not sim.is_fixed_point():
        problems.append("not a fixed point at quiescence")
    for (asn, prefix), route in sim.best.items():
        if route.path is None:
            continue
        if asn in route.path:
            problems.append(f"AS{asn} best path contains itself")
        if not valley_free(topo, (asn,) + route.path.hops):
            problems.append(f"AS{asn} path {route.path} is not valley-free")
    if result.status == "mitigated":
        if result.true_fraction != 1.0:
            problems.append(f"true fraction {result.true_fraction}")
        if result.observed_fraction != 1.0:
            problems.append(f"observed fraction {result.observed_fraction}")
        if not result.detected_at <= result.commanded_at <= result.completed_at:
            problems.append("detected_at <= commanded_at <= completed_at violated")
        parent = engine.mitigator.plans[result.alert_id].parent
        legit = scenario.owned.legitimate_origins
        # the match is constant between prefix boundaries, so the boundaries cover every address
        inside = {p for (_, p) in sim.best if parent.contains(p)}
        addresses = {p.address for p in inside} | {p.last for p in inside}
        for asn in topo.ases:
            for addr in addresses:
                o = lpm_origin(sim, asn, addr)
                if o not in legit:
                    problems.append(f"AS{asn} forwards {addr} to AS{o}")
    for alert in engine.detector.alerts.values():
        if not alert.evidence:
            problems.append(f"{alert.id} has no evidence")
        if not any(o.origin not in alert.owned.legitimate_origins for o in alert.evidence):
            problems.append(f"{alert.id} evidence has no illegitimate origin")
    return problems
