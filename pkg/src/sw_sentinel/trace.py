"""Canonical service-worker event traces.

One event per line, UTF-8 JSON objects with required keys ``ts`` (integer
virtual milliseconds), ``kind``, ``origin``, optional ``sw_id`` / ``scope``,
plus kind-specific payload keys. Unknown payload keys survive a round-trip.
Timestamps are non-decreasing within a trace.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Optional

from .domains import url_registrable_domain
from .model import ModelError, Origin


class TraceError(Exception):
    """Base class for trace-format failures; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int = 0):
        super().__init__(f"line {line_no}: {message}" if line_no else message)
        self.line_no = line_no


class MalformedLine(TraceError):
    pass


class OutOfOrderTimestamp(TraceError):
    pass


class UnknownEventKind(TraceError):
    pass


class InvariantViolation(Exception):
    """Events handed to emit_trace broke a trace invariant."""


class UnbalancedBrackets(Exception):
    """A fetch_event_end arrived without an open fetch_event_start."""


EVENT_KINDS = frozenset(
    {
        "register",
        "install",
        "activate",
        "update_check",
        "update_found",
        "push",
        "notification_show",
        "notification_close",
        "notification_click",
        "fetch_event_start",
        "fetch_event_end",
        "fetch_request",
        "sync",
        "periodicsync",
        "terminate",
        "page_visit",
        "permission_grant",
        "code_tampered",
    }
)

# Payload keys that must be present (and json-typed as shown) per kind.
_REQUIRED_PAYLOAD: dict[str, tuple[tuple[str, type], ...]] = {
    "push": (("push_id", str),),
    "fetch_request": (("url", str), ("initiator_is_sw", bool)),
    "notification_show": (("notif_id", str), ("title", str)),
    "notification_close": (("notif_id", str),),
    "notification_click": (("notif_id", str),),
    "permission_grant": (("permission", str),),
    "update_found": (("version", int),),
    "code_tampered": (("source", str),),
}

_HEADER_KEYS = ("ts", "kind", "origin", "sw_id", "scope")


@dataclass(frozen=True)
class TraceEvent:
    """One timestamped occurrence; ``payload`` holds all kind-specific keys."""

    ts: int
    kind: str
    origin: str
    sw_id: Optional[str] = None
    scope: Optional[str] = None
    payload: Mapping[str, Any] = field(default_factory=dict)

    def get(self, key: str, default: Any = None) -> Any:
        return self.payload.get(key, default)

    def to_obj(self) -> dict[str, Any]:
        obj: dict[str, Any] = {"ts": self.ts, "kind": self.kind, "origin": self.origin}
        if self.sw_id is not None:
            obj["sw_id"] = self.sw_id
        if self.scope is not None:
            obj["scope"] = self.scope
        for key in sorted(self.payload):
            obj[key] = self.payload[key]
        return obj


def _validate_obj(obj: Any, line_no: int) -> TraceEvent:
    if not isinstance(obj, dict):
        raise MalformedLine("record is not an object", line_no)
    ts = obj.get("ts")
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise MalformedLine("'ts' must be an integer millisecond count", line_no)
    kind = obj.get("kind")
    if not isinstance(kind, str):
        raise MalformedLine("'kind' must be a string", line_no)
    if kind not in EVENT_KINDS:
        raise UnknownEventKind(f"unknown event kind {kind!r}", line_no)
    origin = obj.get("origin")
    if not isinstance(origin, str) or "://" not in origin:
        raise MalformedLine("'origin' must look like scheme://host[:port]", line_no)
    try:
        Origin.parse(origin)
    except ModelError as exc:
        raise MalformedLine(f"bad origin {origin!r}: {exc}", line_no) from exc
    sw_id = obj.get("sw_id")
    if sw_id is not None and not isinstance(sw_id, str):
        raise MalformedLine("'sw_id' must be a string", line_no)
    scope = obj.get("scope")
    if scope is not None and not isinstance(scope, str):
        raise MalformedLine("'scope' must be a string", line_no)
    payload = {k: v for k, v in obj.items() if k not in _HEADER_KEYS}
    for key, typ in _REQUIRED_PAYLOAD.get(kind, ()):
        value = payload.get(key)
        if typ is int and isinstance(value, bool):
            raise MalformedLine(f"{kind}: '{key}' must be {typ.__name__}", line_no)
        if not isinstance(value, typ):
            raise MalformedLine(f"{kind}: missing/invalid '{key}'", line_no)
    if kind == "fetch_request" and "://" not in payload["url"]:
        raise MalformedLine("fetch_request: 'url' must carry scheme and host", line_no)
    return TraceEvent(ts=ts, kind=kind, origin=origin, sw_id=sw_id, scope=scope, payload=payload)


def parse_trace(lines: Iterable[str]) -> list[TraceEvent]:
    """Parse line-delimited trace records, enforcing timestamp ordering."""
    events: list[TraceEvent] = []
    last_ts: Optional[int] = None
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(f"invalid JSON ({exc.msg})", line_no) from exc
        event = _validate_obj(obj, line_no)
        if last_ts is not None and event.ts < last_ts:
            raise OutOfOrderTimestamp(
                f"ts {event.ts} precedes previous ts {last_ts}", line_no
            )
        last_ts = event.ts
        events.append(event)
    return events


def emit_trace(events: Iterable[TraceEvent]) -> Iterator[str]:
    """Serialize events to canonical lines; inverse of parse_trace."""
    last_ts: Optional[int] = None
    for event in events:
        if last_ts is not None and event.ts < last_ts:
            raise InvariantViolation(
                f"events out of order: ts {event.ts} after {last_ts}"
            )
        last_ts = event.ts
        yield json.dumps(event.to_obj(), separators=(",", ":"), ensure_ascii=False)


def read_trace(path: str) -> list[TraceEvent]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh)


def write_trace(path: str, events: Iterable[TraceEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in emit_trace(events):
            fh.write(line + "\n")


def bracket_intervals(
    events: Iterable[TraceEvent],
) -> dict[str, list[tuple[int, int]]]:
    """Merged [fetch_event_start, fetch_event_end] intervals per sw_id.

    Nested brackets for one worker collapse into a single interval (depth
    counting). Raises UnbalancedBrackets on an end without a start or a
    start left open at trace end.
    """
    depth: dict[str, int] = {}
    open_at: dict[str, int] = {}
    out: dict[str, list[tuple[int, int]]] = {}
    for event in events:
        if event.kind == "fetch_event_start":
            sw = event.sw_id or ""
            if depth.get(sw, 0) == 0:
                open_at[sw] = event.ts
            depth[sw] = depth.get(sw, 0) + 1
        elif event.kind == "fetch_event_end":
            sw = event.sw_id or ""
            if depth.get(sw, 0) == 0:
                raise UnbalancedBrackets(
                    f"fetch_event_end at ts {event.ts} for {sw!r} has no open start"
                )
            depth[sw] -= 1
            if depth[sw] == 0:
                out.setdefault(sw, []).append((open_at.pop(sw), event.ts))
    for sw, d in depth.items():
        if d:
            raise UnbalancedBrackets(f"fetch_event_start left open for {sw!r}")
    return out


FOREGROUND = "foreground"
BACKGROUND_FIRST_PARTY = "background_first_party"
BACKGROUND_THIRD_PARTY = "background_third_party"


def classify_background_fetch(
    events: Iterable[TraceEvent],
    fetch_event: TraceEvent,
    first_party_domains: frozenset[str] | set[str],
    intervals: Optional[dict[str, list[tuple[int, int]]]] = None,
) -> str:
    """Classify a worker-initiated fetch_request.

    Foreground when its timestamp lies inside any fetch-handler bracket of
    the same worker; otherwise background, split by whether the request URL's
    registrable domain belongs to the first-party set (worker origin plus
    importScripts domains). Pass precomputed ``intervals`` when classifying
    many fetches from one trace.
    """
    if fetch_event.kind != "fetch_request" or not fetch_event.get("initiator_is_sw"):
        raise ValueError("classify_background_fetch expects a worker-initiated fetch_request")
    if intervals is None:
        intervals = bracket_intervals(events)
    for start, end in intervals.get(fetch_event.sw_id or "", []):
        if start <= fetch_event.ts <= end:
            return FOREGROUND
    domain = url_registrable_domain(fetch_event.get("url", ""))
    if domain in first_party_domains:
        return BACKGROUND_FIRST_PARTY
    return BACKGROUND_THIRD_PARTY
