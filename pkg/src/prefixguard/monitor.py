"""Per-vantage-point route views and mitigation progress."""

from __future__ import annotations

import copy
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .feeds import RouteObservation
from .prefix import IpPrefix

MIXED = "mixed"


class NoVantagePoints(ValueError):
    pass


class UnknownVantagePoint(KeyError):
    pass


def vp_id(source: str, vantage_point: str) -> str:
    return f"{source}/{vantage_point}"


@dataclass
class VantagePointView:
    vantage_point: str
    selected: dict = field(default_factory=dict)  # IpPrefix -> (AsPath, timestamp)
    geo: tuple | None = None
    # (timestamp, arrival seq) of the newest update per prefix, withdrawals included
    _stamps: dict = field(default_factory=dict, repr=False)


class ViewStore:
    """Latest-wins route table per (source, vantage point).

    Withdrawals leave a tombstone stamp so an older announcement arriving
    afterwards cannot resurrect the route; that makes the final state
    independent of arrival order when timestamps are distinct.
    """

    def __init__(self):
        self.views: dict[str, VantagePointView] = {}
        self._seq = 0
        self._lock = threading.Lock()

    def apply(self, obs: RouteObservation) -> bool:
        """Apply one observation; returns True if the store changed."""
        with self._lock:
            self._seq += 1
            vid = vp_id(obs.source, obs.vantage_point)
            view = self.views.get(vid)
            if view is None:
                view = self.views[vid] = VantagePointView(vid)
            stamp = view._stamps.get(obs.prefix)
            if stamp is not None and obs.timestamp < stamp[0]:
                return False
            view._stamps[obs.prefix] = (obs.timestamp, self._seq)
            if obs.is_announcement:
                view.selected[obs.prefix] = (obs.path, obs.timestamp)
            else:
                view.selected.pop(obs.prefix, None)
            return True

    def snapshot(self) -> dict[str, VantagePointView]:
        with self._lock:
            return copy.deepcopy(self.views)

    def state(self) -> dict:
        """Comparable summary: vp -> {prefix: (hops, timestamp)}."""
        return {vid: {p: (path.hops, ts) for p, (path, ts) in v.selected.items()}
                for vid, v in self.views.items() if v.selected}


def origin_intervals(view: VantagePointView, space: IpPrefix) -> list[tuple[int, int, int]]:
    """Longest-match origin over ``space`` as ``(start, end_exclusive, origin)`` runs.

    Only routes for prefixes inside (or equal to) ``space`` are considered.
    Address ranges with no such route are omitted.
    """
    routes = [(p, path) for p, (path, _) in view.selected.items() if space.contains(p)]
    if not routes:
        return []
    cuts = {space.address, space.last + 1}
    for p, _ in routes:
        cuts.add(p.address)
        cuts.add(p.last + 1)
    cuts = sorted(cuts)
    out = []
    for start, end in zip(cuts, cuts[1:]):
        best = None
        for p, path in routes:
            if p.contains_address(start) and (best is None or p.length > best[0].length):
                best = (p, path)
        if best is None:
            continue
        origin = best[1].origin()
        if out and out[-1][1] == start and out[-1][2] == origin:
            out[-1] = (out[-1][0], end, origin)
        else:
            out.append((start, end, origin))
    return out


def effective_origin(view: VantagePointView, space: IpPrefix):
    """Origin a vantage point forwards to for ``space``.

    Returns the ASN when every routed part of the space resolves to the same
    origin, :data:`MIXED` when parts disagree, and None without any route.
    """
    origins = {o for _, _, o in origin_intervals(view, space)}
    if not origins:
        return None
    if len(origins) == 1:
        return origins.pop()
    return MIXED


def is_legitimate(view: VantagePointView, space: IpPrefix, legitimate: Iterable[int]) -> bool:
    runs = origin_intervals(view, space)
    legit = set(legitimate)
    return bool(runs) and all(o in legit for _, _, o in runs)


@dataclass(frozen=True)
class ConvergenceReport:
    alert_id: str
    total_vps: int
    legitimate_vps: int
    fraction: float
    complete: bool
    completed_at: float | None
    excluded_vps: int = 0

    def record(self, t: float) -> dict:
        return {
            "event": "convergence",
            "alert_id": self.alert_id,
            "total_vps": self.total_vps,
            "legitimate_vps": self.legitimate_vps,
            "fraction": self.fraction,
            "complete": self.complete,
            "completed_at": self.completed_at,
            "t": t,
        }


class ConvergenceTracker:
    """Decides when every vantage point has switched back to a legitimate origin.

    Completion needs fraction 1 held for ``hold_time``; ``completed_at`` is
    the moment the full switch started, not the moment it was confirmed.
    """

    def __init__(self, alert_id: str, space: IpPrefix, legitimate: Iterable[int], hold_time: float = 60.0):
        self.alert_id = alert_id
        self.space = space
        self.legitimate = frozenset(legitimate)
        self.hold_time = hold_time
        self.full_since: float | None = None
        self.completed_at: float | None = None

    @property
    def complete(self) -> bool:
        return self.completed_at is not None

    def report(self, store: ViewStore, now: float) -> ConvergenceReport:
        total = legit = excluded = 0
        for view in store.views.values():
            if not origin_intervals(view, self.space):
                excluded += 1
                continue
            total += 1
            legit += is_legitimate(view, self.space, self.legitimate)
        if total == 0:
            raise NoVantagePoints(f"no vantage point routes {self.space}")
        fraction = legit / total
        if self.completed_at is None:
            if fraction == 1.0:
                if self.full_since is None:
                    self.full_since = now
                if now - self.full_since >= self.hold_time:
                    self.completed_at = self.full_since
            else:
                self.full_since = None
        return ConvergenceReport(self.alert_id, total, legit, fraction, self.complete,
                                 self.completed_at, excluded)


# -- timeline export -----------------------------------------------------------------

def parse_geo_table(text: str) -> dict[str, tuple[float, float]]:
    geo = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ValueError(f"geo table line {lineno}: expected 'vantage_point latitude longitude'")
        geo[fields[0]] = (float(fields[1]), float(fields[2]))
    return geo


def _lookup_geo(geo: Mapping, vantage_point: str):
    if vantage_point in geo:
        return geo[vantage_point]
    bare = vantage_point.split("/", 1)[-1]
    return geo.get(bare)


def export_timeline(events: Iterable[Mapping], geo: Mapping | None = None):
    """Reduce ``vp_origin`` events to per-vantage-point change points.

    Returns ``(timeline, geojson)``; ``geojson`` is None without a geo table.
    Vantage points missing from the geo table get a null geometry.
    """
    last = {}
    timeline = []
    for ev in events:
        if ev.get("event") != "vp_origin":
            continue
        key = (ev["vantage_point"], ev.get("prefix"))
        value = (ev["effective_origin"], ev["legitimate"])
        if last.get(key) == value:
            continue
        last[key] = value
        rec = {"t": ev["t"], "vantage_point": ev["vantage_point"],
               "effective_origin": ev["effective_origin"], "legitimate": ev["legitimate"]}
        if ev.get("prefix") is not None:
            rec["prefix"] = ev["prefix"]
        timeline.append(rec)
    if geo is None:
        return timeline, None
    features = []
    for rec in timeline:
        loc = _lookup_geo(geo, rec["vantage_point"])
        geometry = None if loc is None else {"type": "Point", "coordinates": [loc[1], loc[0]]}
        features.append({"type": "Feature", "geometry": geometry, "properties": dict(rec)})
    return timeline, {"type": "FeatureCollection", "features": features}


class OriginWatcher:
    """Emits a ``vp_origin`` event whenever a vantage point's origin for ``space`` changes."""

    def __init__(self, space: IpPrefix, legitimate: Iterable[int]):
        self.space = space
        self.legitimate = frozenset(legitimate)
        self._last: dict[str, tuple] = {}

    def update(self, store: ViewStore, vid: str, t: float) -> dict | None:
        view = store.views.get(vid)
        if view is None:
            return None
        origin = effective_origin(view, self.space)
        legit = is_legitimate(view, self.space, self.legitimate)
        if self._last.get(vid, (None, False)) == (origin, legit):
            return None
        self._last[vid] = (origin, legit)
        return {"event": "vp_origin", "t": t, "vantage_point": vid, "prefix": str(self.space),
                "effective_origin": origin, "legitimate": legit}
