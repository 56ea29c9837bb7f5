"""Reference implementations used as test oracles.

These deliberately avoid the package's own arithmetic: prefixes are handled
with the stdlib ``ipaddress`` module or by brute-force enumeration.
"""

import ipaddress
import json
from itertools import permutations

import numpy as np


def net(prefix) -> ipaddress.IPv4Network:
    return ipaddress.IPv4Network(str(prefix))


def blocks24(prefix) -> set[int]:
    """Indices of the /24 blocks covered by a prefix of length <= 24."""
    n = net(prefix)
    assert n.prefixlen <= 24
    first = int(n.network_address) >> 8
    return set(range(first, first + (1 << (24 - n.prefixlen))))


def blocks24_array(addresses: np.ndarray, lengths: np.ndarray):
    """Vectorized per-prefix /24 block ranges: ``(first, count)`` arrays."""
    first = addresses.astype(np.int64) >> 8
    count = np.left_shift(np.int64(1), (24 - lengths).astype(np.int64))
    return first, count


def host_bits_clear(address: int, length: int) -> bool:
    return all(not (address >> (31 - b)) & 1 for b in range(length, 32))


def contains_by_blocks(parent, child) -> bool:
    """Containment as set inclusion of covered /24 blocks (both lengths <= 24)."""
    return blocks24(child) <= blocks24(parent) and net(parent).prefixlen <= net(child).prefixlen


def best_route(candidates):
    """Decision process by exhaustive comparison over every ordering.

    The preferred route is the one that wins every pairwise comparison,
    whichever order the candidates are presented in.
    """
    pref = {"customer": 200, "peer": 100, "provider": 50}

    def better(a, b):
        if pref[a[1]] != pref[b[1]]:
            return pref[a[1]] > pref[b[1]]
        if len(a[0]) != len(b[0]):
            return len(a[0]) < len(b[0])
        return a[0].first_hop() < b[0].first_hop()

    winners = set()
    for order in permutations(range(len(candidates))):
        champ = order[0]
        for i in order[1:]:
            if better(candidates[i], candidates[champ]):
                champ = i
        winners.add(champ)
    assert len(winners) == 1
    return candidates[winners.pop()]


def longest_match_origins(routes: dict, space, block_len: int) -> dict:
    """Per-block longest-match origin over ``space``.

    ``routes`` maps prefix text to origin ASN. Returns block network -> origin
    (or None when no route covers the block).
    """
    s = net(space)
    nets = [(net(p), o) for p, o in routes.items() if net(p).subnet_of(s)]
    out = {}
    blocks = s.subnets(new_prefix=block_len) if s.prefixlen < block_len else [s]
    for b in blocks:
        covering = [(n, o) for n, o in nets if b.subnet_of(n)]
        out[b] = max(covering, key=lambda x: x[0].prefixlen)[1] if covering else None
    return out


def sort_then_dedup(streams):
    """Concatenate, stable-sort by arrival then (source, vp, prefix), drop repeats."""
    allobs = [o for s in streams for o in s]
    allobs.sort(key=lambda o: (o.received_at, o.source, o.vantage_point,
                               (int(net(o.prefix).network_address), net(o.prefix).prefixlen)))
    seen, out = set(), []
    for o in allobs:
        key = (o.vantage_point, str(o.prefix), o.kind,
               tuple(o.path.hops) if o.path is not None else (), o.timestamp)
        if key not in seen:
            seen.add(key)
            out.append(o)
    return out


def percentile_by_sort(values, q):
    """Linear interpolation between closest ranks on the sorted sample."""
    xs = sorted(values)
    if len(xs) == 1:
        return float(xs[0])
    pos = (len(xs) - 1) * q / 100
    lo = int(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def trace_alerts(lines, owned: dict) -> set:
    """Expected alerts for a trace replayed on its own clock.

    ``owned`` maps prefix text to legitimate origins. Works on the raw JSON:
    every IPv4 announcement inside an owned prefix with an origin outside
    its set is hijack evidence; each (owned prefix, origin, kind) alerts once,
    at the earliest such timestamp, naming the prefix that sorts first there.
    """
    nets = {ipaddress.IPv4Network(p): set(o) for p, o in owned.items()}
    first = {}
    for line in lines:
        if not line.strip():
            continue
        data = json.loads(line)["data"]
        if data.get("type") != "UPDATE" or not data.get("announcements"):
            continue
        ts = float(data["timestamp"])
        origin = int(data["path"][-1])
        for ann in data["announcements"]:
            for text in ann["prefixes"]:
                if ":" in text:
                    continue
                n = ipaddress.IPv4Network(text)
                match = [m for m in nets if n.subnet_of(m)]
                if not match or origin in nets[match[0]]:
                    continue
                kind = "exact-origin" if n == match[0] else "subprefix-origin"
                key = (str(match[0]), origin, kind)
                rank = (ts, data["peer"], int(n.network_address), n.prefixlen)
                if key not in first or rank < first[key][0]:
                    first[key] = (rank, str(n))
    return {(k[0], v[1], k[1], k[2], v[0][0]) for k, v in first.items()}
