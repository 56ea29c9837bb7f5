"""Generate the replay trace corpus used by the test suite.

Writes 20 newline-delimited RIS-Live style traces plus the engine config
they are replayed against. Output is a pure function of the seed, so the
committed files can be regenerated and diffed.

    python scripts/make_trace_corpus.py tests/fixtures/traces
"""

import argparse
import json
import random
from pathlib import Path

CONFIG = """\
# Engine config for replaying the fixture traces.
owned_prefixes:
  - prefix: 10.0.0.0/23
    origins: [65001]
  - prefix: 192.0.2.0/24
    origins: [65010, 65011]
  - prefix: 198.51.100.0/22
    origins: [65020]
    mitigation: false
"""

OWNED = {"10.0.0.0/23": [65001], "192.0.2.0/24": [65010, 65011], "198.51.100.0/22": [65020]}
LEGIT_SUBPREFIXES = {"10.0.0.0/23": ["10.0.0.0/24", "10.0.1.0/24"], "192.0.2.0/24": [],
                     "198.51.100.0/22": ["198.51.100.0/23", "198.51.102.0/24"]}
# near misses: covering, adjacent or just outside an owned prefix
UNRELATED = [("203.0.113.0/24", 64999), ("172.16.0.0/12", 64998), ("10.0.0.0/16", 3356),
             ("10.0.2.0/24", 65002), ("198.51.104.0/24", 64666), ("192.0.3.0/24", 65003)]
HIJACKS_EXACT = [("10.0.0.0/23", 65002), ("192.0.2.0/24", 65003), ("198.51.100.0/22", 64666),
                 ("10.0.0.0/23", 64666)]
HIJACKS_SUB = [("10.0.1.0/24", 65002), ("192.0.2.128/25", 65003), ("198.51.101.0/24", 64666),
               ("10.0.0.0/24", 65003), ("198.51.100.0/23", 65002)]
TRANSIT = [3356, 1299, 174, 2914, 6939, 6453]
T0 = 1_700_000_000.0


class Trace:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.peers = [(f"192.0.2.{200 + i}" if i % 2 else f"2001:db8::{i + 1}" if i == 6 else f"198.18.0.{i + 1}",
                       64600 + i) for i in range(8)]
        self.t = T0 + rng.randint(0, 10_000) * 0.25
        self.lines = []
        self.seq = 0

    def tick(self, lo=0.25, hi=6.0):
        self.t += self.rng.randint(int(lo * 4), int(hi * 4)) / 4
        return self.t

    def msg(self, peer, announcements=(), withdrawals=(), path=None, t=None, kind="UPDATE"):
        ip, asn = peer
        self.seq += 1
        data = {"timestamp": self.t if t is None else t, "peer": ip, "peer_asn": str(asn),
                "id": f"{self.seq:06d}", "host": f"rrc{self.rng.randint(0, 25):02d}", "type": kind}
        if kind == "UPDATE":
            if announcements:
                data["path"] = path
                data["origin"] = "igp"
                data["community"] = [[asn, self.rng.randint(1, 999)]]
                data["announcements"] = [{"next_hop": ip, "prefixes": list(announcements)}]
            data["withdrawals"] = list(withdrawals)
        self.lines.append({"type": "ris_message", "data": data})

    def path(self, peer, origin):
        mid = self.rng.sample(TRANSIT, self.rng.randint(0, 2))
        return [peer[1], *mid, origin]

    def churn(self, n, peers=None):
        peers = peers or self.peers
        for _ in range(n):
            self.tick()
            peer = self.rng.choice(peers)
            r = self.rng.random()
            if r < 0.45:
                prefix = self.rng.choice(list(OWNED))
                choices = [prefix] + LEGIT_SUBPREFIXES[prefix]
                announced = sorted(set(self.rng.sample(choices, self.rng.randint(1, len(choices)))))
                self.msg(peer, announced, path=self.path(peer, self.rng.choice(OWNED[prefix])))
            elif r < 0.7:
                prefix, origin = self.rng.choice(UNRELATED)
                extra = ["2001:db8:1234::/48"] if self.rng.random() < 0.3 else []
                self.msg(peer, [prefix] + extra, path=self.path(peer, origin))
            elif r < 0.85:
                self.msg(peer, withdrawals=[self.rng.choice(list(OWNED) + [u for u, _ in UNRELATED])])
            elif r < 0.93:
                self.msg(peer, kind="KEEPALIVE")
            else:
                self.msg(peer)  # empty update

    def hijack(self, prefix, origin, peers):
        for peer in peers:
            self.tick(0.25, 3.0)
            self.msg(peer, [prefix], path=self.path(peer, origin))

    def duplicate(self, k):
        for _ in range(k):
            i = self.rng.randrange(len(self.lines))
            j = self.rng.randrange(i, len(self.lines) + 1)
            self.lines.insert(j, self.lines[i])

    def disorder(self, window=8.0):
        # swap neighbours whose timestamps differ by less than the window
        for _ in range(len(self.lines)):
            i = self.rng.randrange(len(self.lines) - 1)
            a, b = self.lines[i]["data"]["timestamp"], self.lines[i + 1]["data"]["timestamp"]
            if abs(a - b) < window:
                self.lines[i], self.lines[i + 1] = self.lines[i + 1], self.lines[i]

    def text(self):
        return "".join(json.dumps(m, separators=(",", ":")) + "\n" for m in self.lines)


def build(kind: str, rng: random.Random) -> Trace:
    tr = Trace(rng)
    if kind == "legit":
        tr.churn(rng.randint(30, 60))
        return tr
    # hijacked vantage points stop taking part in churn once they carry the
    # bogus route, so no alert can be resolved before the trace ends
    hijackers = tr.peers[:3]
    quiet = tr.peers[3:]
    tr.churn(rng.randint(10, 25))
    if kind in ("exact", "dup", "ooo"):
        events = rng.sample(HIJACKS_EXACT, 1 if kind == "exact" and rng.random() < 0.5 else 2)
    else:
        events = rng.sample(HIJACKS_SUB, 2)
    if kind in ("dup", "ooo"):
        events = [events[0], rng.choice(HIJACKS_SUB)]
    for prefix, origin in events:
        tr.hijack(prefix, origin, rng.sample(hijackers, rng.randint(1, 3)))
        tr.churn(rng.randint(3, 10), quiet)
    tr.churn(rng.randint(5, 15), quiet)
    if kind == "dup":
        tr.duplicate(rng.randint(4, 10))
    if kind == "ooo":
        tr.disorder()
    return tr


PLAN = ["legit"] * 5 + ["exact"] * 5 + ["sub"] * 4 + ["dup"] * 3 + ["ooo"] * 3
NAMES = {"legit": "legit-churn", "exact": "exact-origin", "sub": "subprefix", "dup": "duplicates",
         "ooo": "out-of-order"}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "config.yaml").write_text(CONFIG)
    for i, kind in enumerate(PLAN, start=1):
        tr = build(kind, random.Random(args.seed * 1000 + i))
        (args.out / f"{i:02d}-{NAMES[kind]}.jsonl").write_text(tr.text())
    print(f"wrote {len(PLAN)} traces to {args.out}")


if __name__ == "__main__":
    main()
