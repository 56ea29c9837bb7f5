"""Sweep random topologies and summarize detection and mitigation timings.

For each size, runs a batch of seeded scenarios and reports how many were
detected and fully mitigated, with median and p90 of each phase.

    python scripts/topology_sweep.py --sizes 20 50 100 200 --runs 20
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from prefixguard.sim import random_scenario, run_scenario

FIELDS = ("t_detect", "t_command", "t_complete", "total")


def sweep(size, runs, watch_hijacker):
    results = [run_scenario(random_scenario(size, seed, watch_hijacker=watch_hijacker)) for seed in range(runs)]
    row = {"ases": size, "runs": runs,
           "detected": sum(r.t_detect is not None for r in results),
           "mitigated": sum(r.status == "mitigated" for r in results)}
    done = [r for r in results if r.status == "mitigated"]
    for k in FIELDS:
        values = [getattr(r, k) for r in done]
        row[k] = {q: float(np.percentile(values, int(q[1:]))) for q in ("p50", "p90")} if values else None
    return row


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 50, 100, 200])
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--watch-hijacker", action="store_true",
                    help="place a vantage point of every monitor at the hijacking AS")
    ap.add_argument("--out", type=Path)
    args = ap.parse_args(argv)
    start = time.perf_counter()
    rows = [sweep(n, args.runs, args.watch_hijacker) for n in args.sizes]
    print(f"{'ases':>5}{'detected':>10}{'mitigated':>11}" + "".join(f"{k + ' p50/p90':>22}" for k in FIELDS))
    for r in rows:
        cells = "".join(f"{'-':>22}" if r[k] is None else f"{r[k]['p50']:>11.1f}/{r[k]['p90']:<10.1f}"
                        for k in FIELDS)
        print(f"{r['ases']:>5}{r['detected']:>7}/{r['runs']:<2}{r['mitigated']:>8}/{r['runs']:<2}" + cells)
    print(f"{sum(r['runs'] for r in rows)} runs in {time.perf_counter() - start:.1f}s")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(rows, indent=1) + "\n")


if __name__ == "__main__":
    main()
