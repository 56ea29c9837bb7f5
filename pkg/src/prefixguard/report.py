"""Summaries over an event log."""

from __future__ import annotations

import json
from typing import Iterable

import numpy as np

PERCENTILES = (50, 90, 99)
LATENCIES = ("observation_latency", "announce_latency", "completion_latency")


class LogMalformed(ValueError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


def load_events(lines: Iterable[str]) -> list[dict]:
    events = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogMalformed(lineno, f"not JSON: {exc.msg}") from None
        if not isinstance(rec, dict) or "event" not in rec:
            raise LogMalformed(lineno, "record without an 'event' field")
        events.append(rec)
    return events


def alert_rows(events: Iterable[dict]) -> list[dict]:
    rows: dict[str, dict] = {}
    for ev in events:
        kind = ev["event"]
        if kind in ("alert_raised", "alert_state"):
            row = rows.setdefault(ev["alert_id"], {"alert_id": ev["alert_id"], "plan": "-"})
            row.update(prefix=ev["prefix"], observed_prefix=ev["observed_prefix"],
                       offending_origin=ev["offending_origin"], kind=ev["kind"], state=ev["state"],
                       observation_latency=ev["detected_at"] - ev["first_seen"])
        elif kind == "plan" and ev.get("alert_id") in rows:
            row = rows[ev["alert_id"]]
            row["plan"] = ev["status"]
            if ev.get("acknowledged_at") is not None:
                row["announce_latency"] = ev["acknowledged_at"] - ev["commanded_at"]
            if ev.get("completed_at") is not None:
                row["completion_latency"] = ev["completed_at"] - ev["commanded_at"]
        elif kind == "plan_error" and ev.get("alert_id") in rows:
            rows[ev["alert_id"]]["plan"] = ev.get("error", "error")
    return list(rows.values())


def percentile(values, q: float) -> float:
    """Linear-interpolation percentile (the usual ``numpy.percentile`` definition)."""
    return float(np.percentile(np.asarray(values, dtype=float), q))


def latency_percentiles(rows: list[dict], qs=PERCENTILES) -> dict[str, dict]:
    out = {}
    for name in LATENCIES:
        values = [r[name] for r in rows if r.get(name) is not None]
        if values:
            out[name] = {f"p{q}": percentile(values, q) for q in qs}
    return out


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def render_table(rows: list[dict]) -> str:
    cols = ["alert_id", "prefix", "observed_prefix", "offending_origin", "kind", "state", "plan", *LATENCIES]
    cells = [[_fmt(r.get(c)) for c in cols] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    pct = latency_percentiles(rows)
    if pct:
        lines.append("")
        for name, qs in pct.items():
            lines.append(f"{name}: " + "  ".join(f"{k}={v:.3f}" for k, v in qs.items()))
    return "\n".join(line.rstrip() for line in lines) + "\n"
