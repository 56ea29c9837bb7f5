"""Engine configuration: a single YAML file, validated at load.

Validation errors carry the line number of the offending node so operators
can fix the file without guessing. See ``configs/example.yaml``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .detection import OwnedPrefix
from .feeds import SOURCE_KINDS
from .prefix import DEFAULT_MAX_LENGTH, InvalidAsn, PrefixError, check_asn, parse_prefix

ENV_OVERRIDES = {
    "PREFIXGUARD_EVENT_LOG": "event_log",
    "PREFIXGUARD_TIMELINE": "timeline",
    "PREFIXGUARD_CONTROLLER": "controller",
}


class ConfigInvalid(ValueError):
    def __init__(self, message: str, line: int | None = None, field_path: str | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field_path + ': ' if field_path else ''}{message}")
        self.line = line
        self.field_path = field_path


@dataclass
class SourceConfig:
    id: str
    kind: str
    endpoint: str | None = None
    nominal_delay: float = 0.0
    poll_interval: float = 30.0


@dataclass
class MitigationConfig:
    max_length: int = DEFAULT_MAX_LENGTH
    ack_deadline: float = 30.0
    retries: int = 3
    backoff_base: float = 2.0
    linger: float = 3600.0
    controller: str = "dry-run"


@dataclass
class EngineConfig:
    owned: list
    sources: list = field(default_factory=list)
    mitigation: MitigationConfig = field(default_factory=MitigationConfig)
    hold_time: float = 60.0
    quorum: int = 1
    reorder_window: float = 10.0
    event_log: str | None = None
    timeline: str | None = None
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def resolve(self, p: str | None) -> Path | None:
        if p is None or p == "-":
            return None
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path


def _line_map(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)  # a key's own line wins over its value's
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[path + (k.value,)] = k.start_mark.line + 1
            _line_map(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out)
    return out


def _fmt(path) -> str:
    s = ""
    for p in path:
        s += f"[{p}]" if isinstance(p, int) else (f".{p}" if s else p)
    return s


class _Checker:
    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, path, message):
        line = None
        for n in range(len(path), -1, -1):
            if path[:n] in self.lines:
                line = self.lines[path[:n]]
                break
        raise ConfigInvalid(message, line, _fmt(path) or None)

    def mapping(self, obj, path, allowed):
        if obj is None:
            return {}
        if not isinstance(obj, dict):
            self.fail(path, "expected a mapping")
        for k in obj:
            if k not in allowed:
                self.fail(path + (k,), f"unknown field (allowed: {', '.join(allowed)})")
        return obj

    def number(self, obj, key, path, default, *, positive=True, integer=False):
        if key not in obj:
            return default
        v = obj[key]
        ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok_type:
            self.fail(path + (key,), f"expected {'an integer' if integer else 'a number'}")
        if positive and v <= 0:
            self.fail(path + (key,), "must be > 0")
        if not positive and v < 0:
            self.fail(path + (key,), "must be >= 0")
        return v if integer else float(v)

    def string(self, obj, key, path, default=None, required=False):
        if key not in obj:
            if required:
                self.fail(path, f"missing required field '{key}'")
            return default
        v = obj[key]
        if not isinstance(v, str) or not v:
            self.fail(path + (key,), "expected a non-empty string")
        return v


def parse_config(text: str, base_dir: Path | str = ".") -> EngineConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigInvalid(f"not valid YAML: {getattr(exc, 'problem', exc)}",
                            mark.line + 1 if mark is not None else None) from None
    ck = _Checker(_line_map(node) if node is not None else {})
    top = ck.mapping(data, (), ["owned_prefixes", "sources", "detection", "mitigation", "monitoring", "outputs"])

    owned = []
    entries = top.get("owned_prefixes")
    if not isinstance(entries, list) or not entries:
        ck.fail(("owned_prefixes",), "at least one owned prefix is required")
    for i, entry in enumerate(entries):
        path = ("owned_prefixes", i)
        entry = ck.mapping(entry, path, ["prefix", "origins", "mitigation"])
        text_prefix = ck.string(entry, "prefix", path, required=True)
        try:
            prefix = parse_prefix(text_prefix)
        except PrefixError as exc:
            ck.fail(path + ("prefix",), str(exc))
        origins = entry.get("origins")
        if not isinstance(origins, list) or not origins:
            ck.fail(path + ("origins",), "expected a non-empty list of AS numbers")
        try:
            if any(isinstance(a, bool) or not isinstance(a, int) for a in origins):
                raise InvalidAsn("AS numbers must be integers")
            origins = frozenset(check_asn(a) for a in origins)
        except InvalidAsn as exc:
            ck.fail(path + ("origins",), str(exc))
        mit = entry.get("mitigation", True)
        if not isinstance(mit, bool):
            ck.fail(path + ("mitigation",), "expected true or false")
        for other in owned:
            if other.prefix.overlaps(prefix):
                ck.fail(path + ("prefix",), f"overlaps owned prefix {other.prefix}")
        owned.append(OwnedPrefix(prefix, origins, mit))

    sources = []
    raw_sources = top.get("sources") or []
    if not isinstance(raw_sources, list):
        ck.fail(("sources",), "expected a list")
    seen = set()
    for i, entry in enumerate(raw_sources):
        path = ("sources", i)
        entry = ck.mapping(entry, path, ["id", "kind", "endpoint", "nominal_delay", "poll_interval"])
        sid = ck.string(entry, "id", path, required=True)
        if sid in seen:
            ck.fail(path + ("id",), f"duplicate source id {sid!r}")
        seen.add(sid)
        kind = ck.string(entry, "kind", path, required=True)
        if kind not in SOURCE_KINDS:
            ck.fail(path + ("kind",), f"unknown source kind {kind!r} (expected one of {', '.join(SOURCE_KINDS)})")
        sources.append(SourceConfig(
            sid, kind, ck.string(entry, "endpoint", path),
            ck.number(entry, "nominal_delay", path, 0.0, positive=False),
            ck.number(entry, "poll_interval", path, 30.0),
        ))

    det = ck.mapping(top.get("detection"), ("detection",), ["quorum", "reorder_window"])
    mcfg = ck.mapping(top.get("mitigation"), ("mitigation",),
                      ["max_length", "ack_deadline", "retries", "backoff_base", "linger", "controller"])
    mon = ck.mapping(top.get("monitoring"), ("monitoring",), ["hold_time"])
    outs = ck.mapping(top.get("outputs"), ("outputs",), ["event_log", "timeline"])

    max_length = ck.number(mcfg, "max_length", ("mitigation",), DEFAULT_MAX_LENGTH, integer=True)
    if max_length > 32:
        ck.fail(("mitigation", "max_length"), "must be <= 32")
    mitigation = MitigationConfig(
        max_length=max_length,
        ack_deadline=ck.number(mcfg, "ack_deadline", ("mitigation",), 30.0),
        retries=ck.number(mcfg, "retries", ("mitigation",), 3, positive=False, integer=True),
        backoff_base=ck.number(mcfg, "backoff_base", ("mitigation",), 2.0),
        linger=ck.number(mcfg, "linger", ("mitigation",), 3600.0),
        controller=ck.string(mcfg, "controller", ("mitigation",), "dry-run"),
    )
    return EngineConfig(
        owned=owned,
        sources=sources,
        mitigation=mitigation,
        hold_time=ck.number(mon, "hold_time", ("monitoring",), 60.0),
        quorum=ck.number(det, "quorum", ("detection",), 1, integer=True),
        reorder_window=ck.number(det, "reorder_window", ("detection",), 10.0),
        event_log=ck.string(outs, "event_log", ("outputs",)),
        timeline=ck.string(outs, "timeline", ("outputs",)),
        base_dir=Path(base_dir),
    )


def load_config(path: str | Path) -> EngineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, path.parent)


def render_config(cfg: EngineConfig) -> str:
    data = {
        "owned_prefixes": [
            {"prefix": str(o.prefix), "origins": sorted(o.legitimate_origins), "mitigation": o.mitigation_enabled}
            for o in cfg.owned
        ],
        "sources": [
            {k: v for k, v in vars(s).items() if v is not None} for s in cfg.sources
        ],
        "detection": {"quorum": cfg.quorum, "reorder_window": cfg.reorder_window},
        "mitigation": vars(cfg.mitigation).copy(),
        "monitoring": {"hold_time": cfg.hold_time},
        "outputs": {k: v for k, v in (("event_log", cfg.event_log), ("timeline", cfg.timeline)) if v},
    }
    return yaml.safe_dump(data, sort_keys=False)


def apply_env(cfg: EngineConfig, environ=None) -> EngineConfig:
    """Environment variables may override output paths and the controller endpoint."""
    environ = os.environ if environ is None else environ
    changes = {}
    for var, attr in ENV_OVERRIDES.items():
        if environ.get(var):
            changes[attr] = environ[var]
    if not changes:
        return cfg
    mitigation = cfg.mitigation
    if "controller" in changes:
        mitigation = replace(mitigation, controller=changes.pop("controller"))
    return replace(cfg, mitigation=mitigation, **changes)
