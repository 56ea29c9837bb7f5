"""Run the paper-mirror scenario and print its phase timings.

Also sweeps the controller delay and the fastest monitor delay, to show
which phase each knob moves.

    python scripts/paper_mirror.py [--out results/paper_mirror.json]
"""

import argparse
import json
from pathlib import Path

from prefixguard.sim import load_scenario, run_scenario

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "paper-mirror" / "scenario.txt"
FIELDS = ("t_detect", "t_command", "t_complete", "total")


def run(controller_delay=None, fast_delay=None):
    scenario = load_scenario(SCENARIO)
    if controller_delay is not None:
        scenario.controller_delay = controller_delay
    if fast_delay is not None:
        monitors = scenario.topology.monitors
        fastest = min(monitors, key=lambda s: min(d for _, d in monitors[s]))
        monitors[fastest] = [(asn, fast_delay) for asn, _ in monitors[fastest]]
    r = run_scenario(scenario)
    return {"status": r.status, **{k: getattr(r, k) for k in FIELDS}}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path)
    args = ap.parse_args(argv)
    rows = [{"knob": "baseline", "value": None, **run()}]
    rows += [{"knob": "controller_delay", "value": d, **run(controller_delay=d)} for d in (5, 15, 30, 60)]
    rows += [{"knob": "fastest_monitor_delay", "value": d, **run(fast_delay=d)} for d in (10, 45, 90)]
    print(f"{'knob':<22}{'value':>7}  {'status':<10}" + "".join(f"{k:>11}" for k in FIELDS))
    for r in rows:
        value = "-" if r["value"] is None else f"{r['value']:g}"
        print(f"{r['knob']:<22}{value:>7}  {r['status']:<10}" + "".join(f"{r[k]:>11.1f}" if r[k] is not None else f"{'-':>11}" for k in FIELDS))
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(rows, indent=1) + "\n")


if __name__ == "__main__":
    main()
