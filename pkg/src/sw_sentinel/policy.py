"""Policy enforcement engine for service worker event streams.

Declarative count/time policies are evaluated over a virtual clock:
tumbling windows aligned to trace start, per-activation counters, daily
execution budgets, browser-profile silent-push handling, and a severity
ladder that maps accumulated violations to log / terminate / deregister
decisions.

The engine runs in two modes. ``simulate`` is closed-loop: throttled or
terminated workers stop producing effects, and the caller partitions events
into delivered/suppressed accordingly. ``enforce`` is open-loop for recorded
traces: every decision is reported, none applied, and worker state follows
the trace itself.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Any, Iterable, Mapping, Optional
from urllib.parse import urlsplit

from .domains import registrable_domain
from .model import Capability, Origin, Scope, SwRecord, SwState, check_capability
from .trace import TraceEvent, UnbalancedBrackets

TICK_MS = 1_000
HOUR_MS = 3_600_000
DAY_MS = 86_400_000
SILENT_PUSH_GRACE_MS = 5_000
ENGAGEMENT_VISIT_POINTS = 2.0
ENGAGEMENT_CAP = 100.0
ENGAGEMENT_HALF_LIFE_DAYS = 7.0
DEFAULT_NOTIFICATION_TITLE = "The site has been updated in the background."

KNOWN_POLICIES = frozenset(
    {
        "push_per_hour",
        "exec_per_activation",
        "exec_per_day",
        "bg_fetch_per_activation",
        "notif_min_visible",
        "tag_reuse",
    }
)


class PolicyConfigError(Exception):
    pass


class BadThreshold(PolicyConfigError):
    pass


class DuplicateName(PolicyConfigError):
    pass


class UnknownPolicyName(PolicyConfigError):
    pass


class DanglingClose(Exception):
    """notification_close referenced a notif_id that was never shown."""


class Severity(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def rank(self) -> int:
        return {"low": 1, "medium": 2, "high": 3}[self.value]


class EnforcementAction(Enum):
    LOG_ONLY = "log_only"
    THROTTLE_EVENT = "throttle_event"
    TERMINATE_SW = "terminate_sw"
    DEREGISTER_SW = "deregister_sw"


# Severity of enforcement, for the monotonicity property.
ACTION_ORDER = {
    EnforcementAction.LOG_ONLY: 0,
    EnforcementAction.THROTTLE_EVENT: 1,
    EnforcementAction.TERMINATE_SW: 2,
    EnforcementAction.DEREGISTER_SW: 3,
}


@dataclass(frozen=True)
class PolicySpec:
    """One declarative policy in the count-based template shape."""

    name: str
    severity: Severity
    threshold: float
    duration_in_minutes: int


@dataclass(frozen=True)
class ViolationRecord:
    """A threshold transgression.

    For count/time ceilings ``observed > threshold`` holds. The notification
    visibility policy is a floor: there ``observed`` is the visible delta in
    seconds and lies below the threshold.
    """

    policy_name: str
    sw_id: str
    ts: int
    observed: float
    threshold: float


@dataclass(frozen=True)
class ActionEntry:
    ts: int
    sw_id: str
    action: EnforcementAction
    reason: str


@dataclass(frozen=True)
class Notice:
    """Profile-level side effect that is not an enforcement action proper
    (default notifications, subscription revocation/renewal)."""

    ts: int
    sw_id: str
    kind: str
    detail: str


@dataclass
class EngagementScore:
    """Per-origin user engagement on the 0-100 scale used by deregistration."""

    score: float = 0.0
    last_visit: Optional[int] = None

    def value_at(self, now: int) -> float:
        if self.last_visit is None:
            return self.score
        elapsed_days = max(0, now - self.last_visit) / DAY_MS
        return self.score * 0.5 ** (elapsed_days / ENGAGEMENT_HALF_LIFE_DAYS)

    def visit(self, now: int) -> None:
        self.score = min(ENGAGEMENT_CAP, self.value_at(now) + ENGAGEMENT_VISIT_POINTS)
        self.last_visit = now


def update_engagement(
    score: EngagementScore, event: TraceEvent, now: Optional[int] = None
) -> EngagementScore:
    """Pure update: page visits add points, everything else just re-anchors."""
    ts = event.ts if now is None else now
    updated = EngagementScore(score.score, score.last_visit)
    if event.kind == "page_visit":
        updated.visit(ts)
    else:
        updated.score = updated.value_at(ts)
        updated.last_visit = ts
    return updated


@dataclass(frozen=True)
class BrowserProfile:
    """Built-in mitigations that differ across browser vendors."""

    name: str
    silent_push_limit: Optional[int] = None
    default_notification_on_silent_push: bool = False
    self_update_delay_cap_minutes: Optional[int] = None
    terminate_on_site_close: bool = False


PROFILES: dict[str, BrowserProfile] = {
    "chrome": BrowserProfile("chrome", None, True, 3, False),
    "firefox": BrowserProfile("firefox", 15, False, None, False),
    "edge": BrowserProfile("edge", 3, True, 3, False),
    "opera": BrowserProfile("opera", None, True, 3, False),
    "safari": BrowserProfile("safari", None, False, None, True),
}


@dataclass(frozen=True)
class PolicyConfig:
    specs: tuple[PolicySpec, ...]
    allow_list: frozenset[str] = frozenset()
    deregister_engagement_threshold: float = 5.0

    def get(self, name: str) -> Optional[PolicySpec]:
        for spec in self.specs:
            if spec.name == name:
                return spec
        return None


_TEMPLATE_KEYS = {"name", "severity", "threshold", "duration_in_minutes"}


def _parse_spec(obj: Any) -> PolicySpec:
    if not isinstance(obj, dict) or set(obj) != _TEMPLATE_KEYS:
        raise PolicyConfigError(
            f"policy object must have exactly keys {sorted(_TEMPLATE_KEYS)}: {obj!r}"
        )
    name = obj["name"]
    if name not in KNOWN_POLICIES:
        raise UnknownPolicyName(f"unknown policy {name!r}")
    try:
        severity = Severity(obj["severity"])
    except ValueError as exc:
        raise PolicyConfigError(f"bad severity {obj['severity']!r}") from exc
    threshold = obj["threshold"]
    if isinstance(threshold, bool) or not isinstance(threshold, (int, float)):
        raise BadThreshold(f"threshold must be a number: {threshold!r}")
    if threshold <= 0:
        raise BadThreshold(f"threshold must be > 0: {threshold!r}")
    duration = obj["duration_in_minutes"]
    if isinstance(duration, bool) or not isinstance(duration, int) or duration < 0:
        raise PolicyConfigError(f"bad duration_in_minutes: {duration!r}")
    if name in ("push_per_hour", "tag_reuse", "exec_per_day") and duration < 1:
        raise PolicyConfigError(f"{name} needs a window of at least one minute")
    return PolicySpec(name, severity, float(threshold), duration)


def load_policies(config_text: str | bytes | None = None) -> PolicyConfig:
    """Parse a policy configuration; None loads the shipped defaults.

    Accepts either a bare JSON array of policy objects or an object with a
    ``policies`` array plus optional ``allow_list`` and
    ``deregister_engagement_threshold``.
    """
    if config_text is None:
        config_text = resources.files(__package__).joinpath("defaults.json").read_text(
            "utf-8"
        )
    data = json.loads(config_text)
    allow_list: frozenset[str] = frozenset()
    threshold = 5.0
    if isinstance(data, dict):
        items = data.get("policies", [])
        allow_list = frozenset(data.get("allow_list", []))
        threshold = float(data.get("deregister_engagement_threshold", 5.0))
    elif isinstance(data, list):
        items = data
    else:
        raise PolicyConfigError("config must be an array or an object")
    specs = []
    seen = set()
    for obj in items:
        spec = _parse_spec(obj)
        if spec.name in seen:
            raise DuplicateName(f"duplicate policy {spec.name!r}")
        seen.add(spec.name)
        specs.append(spec)
    return PolicyConfig(tuple(specs), allow_list, threshold)


def default_policies() -> PolicyConfig:
    return load_policies(None)


# Capability each worker-attributed event kind consumes; kinds absent here
# (lifecycle, page_visit, ...) are never capability-gated.
REQUIRED_CAPABILITY: dict[str, Capability] = {
    "push": Capability.PUSH,
    "notification_show": Capability.NOTIFICATIONS,
    "notification_close": Capability.NOTIFICATIONS,
    "notification_click": Capability.NOTIFICATIONS,
    "fetch_event_start": Capability.FETCH_INTERCEPT,
    "fetch_event_end": Capability.FETCH_INTERCEPT,
    "fetch_request": Capability.FETCH_INTERCEPT,
    "sync": Capability.SYNC,
    "periodicsync": Capability.PERIODIC_SYNC,
}

# Events that (re)start worker execution when delivered.
_WAKE_KINDS = frozenset(
    {"push", "sync", "periodicsync", "fetch_event_start", "notification_click",
     "install", "activate", "update_found", "update_check"}
)
# Events that imply the worker is executing right now; in closed loop they
# are suppressed while the worker is not running.
_RUN_REQUIRING = frozenset(
    {"notification_show", "update_check", "fetch_event_end"}
)


@dataclass
class Decision:
    deliver: bool
    actions: list[ActionEntry] = field(default_factory=list)
    violations: list[ViolationRecord] = field(default_factory=list)
    notices: list[Notice] = field(default_factory=list)


@dataclass
class _SwEngineState:
    record: SwRecord
    first_party: frozenset[str]
    running: bool = False
    activation_start: int = 0
    run_intervals: list[tuple[int, int]] = field(default_factory=list)
    # tumbling-window counters: policy -> slot -> count
    windows: dict[str, dict[int, int]] = field(default_factory=dict)
    window_violated: set[tuple[str, int]] = field(default_factory=set)
    # tag -> [slot, consecutive replacement count]
    tag_counts: dict[str, list] = field(default_factory=dict)
    tag_violated: set[tuple[str, int]] = field(default_factory=set)
    day_exec_ms: dict[int, int] = field(default_factory=dict)
    day_exec_violated: set[int] = field(default_factory=set)
    act_exec_violated: bool = False
    act_bg_count: int = 0
    act_bg_violated: bool = False
    pending_silent: deque = field(default_factory=deque)
    visible: dict[str, tuple[int, Optional[str]]] = field(default_factory=dict)
    bracket_depth: int = 0
    last_bracket_end: Optional[int] = None
    update_chain: bool = False
    chain_anchor: int = 0
    chain_capped: bool = False
    expect_install: bool = False
    expect_activate: bool = False
    update_check_delivered: bool = False
    update_check_suppressed: bool = False
    lows_today: int = 0
    mediums_today: int = 0
    ladder_day: int = -1


class PolicyEngine:
    """Evaluates one trace / simulation; single-threaded, movable value."""

    def __init__(
        self,
        config: Optional[PolicyConfig] = None,
        profile: BrowserProfile | str = "chrome",
        mode: str = "simulate",
        import_domains: Optional[Mapping[str, Iterable[str]]] = None,
        promote_after: int = 3,
    ) -> None:
        if mode not in ("simulate", "enforce"):
            raise ValueError(f"unknown engine mode {mode!r}")
        self.config = config if config is not None else default_policies()
        self.profile = PROFILES[profile] if isinstance(profile, str) else profile
        self.mode = mode
        self.promote_after = promote_after
        self._import_domains = {
            sw: frozenset(doms) for sw, doms in (import_domains or {}).items()
        }
        self._t0: Optional[int] = None
        self._last_ts: int = 0
        self._states: dict[str, _SwEngineState] = {}
        self.engagement: dict[str, EngagementScore] = {}

    # -- registry ---------------------------------------------------------

    def register_record(self, record: SwRecord) -> None:
        """Pre-register a worker (used by tests and the capability grid)."""
        self._states[record.sw_id] = self._new_state(record)

    def record(self, sw_id: str) -> SwRecord:
        return self._states[sw_id].record

    def states(self) -> dict[str, SwState]:
        return {sw: st.record.state for sw, st in self._states.items()}

    def run_intervals(self, sw_id: str, end_ts: Optional[int] = None) -> list[tuple[int, int]]:
        """Closed running intervals; an interval still open is right-censored
        at ``end_ts`` (or the last seen timestamp)."""
        st = self._states[sw_id]
        intervals = list(st.run_intervals)
        if st.running:
            intervals.append((st.activation_start, end_ts if end_ts is not None else self._last_ts))
        return intervals

    def window_counts(self, sw_id: str, policy_name: str) -> dict[int, int]:
        """Per-slot event counts for one worker and window policy."""
        return dict(self._states[sw_id].windows.get(policy_name, {}))

    def _new_state(self, record: SwRecord) -> _SwEngineState:
        domains = {registrable_domain(record.origin.host)}
        domains |= self._import_domains.get(record.sw_id, frozenset())
        return _SwEngineState(record=record, first_party=frozenset(domains))

    def _state_for(self, event: TraceEvent) -> _SwEngineState:
        sw_id = event.sw_id or ""
        st = self._states.get(sw_id)
        if st is None:
            origin = Origin.parse(event.origin)
            caps = event.get("capabilities")
            record = SwRecord(
                sw_id=sw_id,
                origin=origin,
                scope=Scope(event.scope or "/"),
                script_url=f"{origin}/sw.js",
                state=SwState.INSTALLING if event.kind == "register" else SwState.ACTIVATED,
                capabilities=(
                    frozenset(Capability(c) for c in caps) if caps is not None else None
                ),
                registered_at=event.ts,
                # Traces that begin mid-life imply the subscription exists;
                # fresh registrations wait for a permission grant.
                push_subscribed=event.kind != "register",
            )
            st = self._new_state(record)
            if event.kind == "register":
                st.expect_install = True
            self._states[sw_id] = st
        return st

    # -- time -------------------------------------------------------------

    def _slot(self, ts: int, minutes: int) -> int:
        return (ts - (self._t0 or 0)) // (minutes * 60_000)

    def _day(self, ts: int) -> int:
        return (ts - (self._t0 or 0)) // DAY_MS

    def _tick_after(self, ts: int) -> int:
        t0 = self._t0 or 0
        return t0 + ((ts - t0) // TICK_MS + 1) * TICK_MS

    # -- engagement -------------------------------------------------------

    def engagement_for(self, origin: str) -> EngagementScore:
        return self.engagement.setdefault(origin, EngagementScore())

    # -- escalation ladder --------------------------------------------------

    def escalate(self, record: SwRecord, violation: ViolationRecord) -> tuple[EnforcementAction, ...]:
        """Map a violation to enforcement via the severity ladder.

        Three low violations within a virtual day promote to medium; a medium
        terminates but keeps the registration; a high (or the third medium of
        the day) terminates and deregisters when origin engagement is below
        the configured threshold.
        """
        st = self._states[record.sw_id]
        day = self._day(violation.ts)
        if day != st.ladder_day:
            st.ladder_day = day
            st.lows_today = 0
            st.mediums_today = 0
        spec = self.config.get(violation.policy_name)
        effective = spec.severity if spec is not None else Severity.MEDIUM
        if effective is Severity.LOW:
            st.lows_today += 1
            if st.lows_today >= self.promote_after:
                st.lows_today = 0
                effective = Severity.MEDIUM
        if effective is Severity.MEDIUM:
            st.mediums_today += 1
            if st.mediums_today >= self.promote_after:
                st.mediums_today = 0
                effective = Severity.HIGH
        record.severity_level = max(record.severity_level, effective.rank)
        record.violation_log.append(violation)
        if effective is Severity.LOW:
            return (EnforcementAction.LOG_ONLY,)
        if effective is Severity.MEDIUM:
            return (EnforcementAction.TERMINATE_SW,)
        score = self.engagement_for(str(record.origin)).value_at(violation.ts)
        if score < self.config.deregister_engagement_threshold:
            return (EnforcementAction.TERMINATE_SW, EnforcementAction.DEREGISTER_SW)
        return (EnforcementAction.TERMINATE_SW,)

    def _apply_ladder(self, st: _SwEngineState, violation: ViolationRecord, out: Decision) -> None:
        out.violations.append(violation)
        for action in self.escalate(st.record, violation):
            out.actions.append(
                ActionEntry(violation.ts, st.record.sw_id, action, violation.policy_name)
            )
            self._apply_action(st, violation.ts, action)

    def _apply_action(self, st: _SwEngineState, ts: int, action: EnforcementAction) -> None:
        if self.mode != "simulate":
            return
        if action is EnforcementAction.TERMINATE_SW:
            self._stop(st, ts)
        elif action is EnforcementAction.DEREGISTER_SW:
            self._stop(st, ts)
            st.record.state = SwState.DEREGISTERED

    # -- running intervals --------------------------------------------------

    def _wake(self, st: _SwEngineState, ts: int) -> None:
        if st.running or st.record.state is SwState.DEREGISTERED:
            return
        st.running = True
        st.activation_start = ts
        st.act_bg_count = 0
        st.act_bg_violated = False
        st.act_exec_violated = False
        st.update_chain = False
        st.chain_capped = False
        st.bracket_depth = 0
        st.last_bracket_end = None
        st.record.state = SwState.RUNNING

    def _stop(self, st: _SwEngineState, ts: int) -> None:
        if not st.running:
            return
        start = st.activation_start
        st.run_intervals.append((start, ts))
        self._accrue_exec(st, start, ts)
        st.running = False
        st.update_chain = False
        st.bracket_depth = 0
        if st.record.state is not SwState.DEREGISTERED:
            st.record.state = SwState.TERMINATED

    def _accrue_exec(self, st: _SwEngineState, start: int, end: int) -> None:
        # Split a closed running interval across virtual-day boundaries.
        t0 = self._t0 or 0
        day = (start - t0) // DAY_MS
        cursor = start
        while cursor < end:
            day_end = t0 + (day + 1) * DAY_MS
            segment_end = min(end, day_end)
            st.day_exec_ms[day] = st.day_exec_ms.get(day, 0) + (segment_end - cursor)
            cursor = segment_end
            day += 1

    # -- clock advance: execution caps and silent-push deadlines -----------

    def advance(self, now: int) -> Decision:
        """Process virtual time up to ``now``: exec-limit checks at 1 s tick
        granularity plus silent-push grace deadlines."""
        out = Decision(deliver=True)
        if self._t0 is None:
            return out
        for st in list(self._states.values()):
            self._advance_sw(st, now, out)
        self._last_ts = max(self._last_ts, now)
        out.actions.sort(key=lambda entry: entry.ts)
        out.violations.sort(key=lambda violation: violation.ts)
        out.notices.sort(key=lambda notice: notice.ts)
        return out

    def _advance_sw(self, st: _SwEngineState, now: int, out: Decision) -> None:
        while st.pending_silent and st.pending_silent[0][1] <= now:
            _push_ts, deadline = st.pending_silent.popleft()
            self._silent_push_detected(st, deadline, out)
        while st.running:
            crossing = self._next_crossing(st, now)
            if crossing is None:
                break
            ts, cause = crossing
            if cause == "self_update_cap":
                st.chain_capped = True
                out.actions.append(
                    ActionEntry(ts, st.record.sw_id, EnforcementAction.TERMINATE_SW, cause)
                )
                self._apply_action(st, ts, EnforcementAction.TERMINATE_SW)
            elif cause == "exec_per_day_exhausted":
                # Budget already violated today: keep stopping the worker,
                # but log no further violations.
                out.actions.append(
                    ActionEntry(ts, st.record.sw_id, EnforcementAction.TERMINATE_SW,
                                "exec_per_day")
                )
                self._apply_action(st, ts, EnforcementAction.TERMINATE_SW)
            else:
                spec = self.config.get(cause)
                if cause == "exec_per_activation":
                    st.act_exec_violated = True
                    observed = (ts - st.activation_start) / 60_000
                else:
                    day = self._day(ts)
                    st.day_exec_violated.add(day)
                    done = st.day_exec_ms.get(day, 0)
                    live_start = max(st.activation_start, (self._t0 or 0) + day * DAY_MS)
                    observed = (done + (ts - live_start)) / 60_000
                violation = ViolationRecord(cause, st.record.sw_id, ts, observed, spec.threshold)
                actions = self.escalate(st.record, violation)
                if EnforcementAction.TERMINATE_SW not in actions:
                    # Execution caps terminate regardless of ladder position.
                    actions = actions + (EnforcementAction.TERMINATE_SW,)
                out.violations.append(violation)
                for action in actions:
                    out.actions.append(ActionEntry(ts, st.record.sw_id, action, cause))
                    self._apply_action(st, ts, action)
            if self.mode == "simulate":
                break  # worker stopped; nothing left to cross

    def _next_crossing(self, st: _SwEngineState, now: int) -> Optional[tuple[int, str]]:
        candidates: list[tuple[int, str]] = []
        spec = self.config.get("exec_per_activation")
        if spec is not None and not st.act_exec_violated:
            ts = self._tick_after(st.activation_start + int(spec.threshold * 60_000))
            if ts <= now:
                candidates.append((ts, "exec_per_activation"))
        spec = self.config.get("exec_per_day")
        if spec is not None:
            crossing = self._day_crossing(st, now, int(spec.threshold * 60_000))
            if crossing is not None:
                candidates.append(crossing)
        cap = self.profile.self_update_delay_cap_minutes
        if cap is not None and st.update_chain and not st.chain_capped:
            ts = self._tick_after(st.chain_anchor + cap * 60_000)
            if ts <= now:
                candidates.append((ts, "self_update_cap"))
        return min(candidates) if candidates else None

    def _day_crossing(
        self, st: _SwEngineState, now: int, budget_ms: int
    ) -> Optional[tuple[int, str]]:
        t0 = self._t0 or 0
        day = (st.activation_start - t0) // DAY_MS
        last_day = (now - t0) // DAY_MS
        while day <= last_day:
            day_start = t0 + day * DAY_MS
            live_start = max(st.activation_start, day_start)
            if day in st.day_exec_violated:
                # Only meaningful in closed loop; open loop reported already.
                if self.mode == "simulate":
                    crossing = self._tick_after(live_start)
                    if crossing <= min(now, day_start + DAY_MS):
                        return crossing, "exec_per_day_exhausted"
            else:
                remaining = budget_ms - st.day_exec_ms.get(day, 0)
                crossing = self._tick_after(live_start + max(remaining, 0))
                if crossing <= min(now, day_start + DAY_MS):
                    return crossing, "exec_per_day"
            day += 1
        return None

    def _silent_push_detected(self, st: _SwEngineState, ts: int, out: Decision) -> None:
        st.record.silent_push_count += 1
        sw_id = st.record.sw_id
        if self.profile.default_notification_on_silent_push:
            out.notices.append(
                Notice(ts, sw_id, "default_notification", DEFAULT_NOTIFICATION_TITLE)
            )
        limit = self.profile.silent_push_limit
        if limit is not None and st.record.push_subscribed and st.record.silent_push_count >= limit:
            st.record.push_subscribed = False
            out.notices.append(
                Notice(ts, sw_id, "revoke_subscription", f"silent pushes reached {limit}")
            )

    # -- main event entry point --------------------------------------------

    def on_event(self, event: TraceEvent) -> Decision:
        """Advance the clock to the event, then judge the event itself."""
        if self._t0 is None:
            self._t0 = event.ts
        out = self.advance(event.ts)
        self._last_ts = event.ts
        kind = event.kind

        if kind == "page_visit":
            self.engagement_for(str(Origin.parse(event.origin))).visit(event.ts)
            return out
        if kind == "permission_grant":
            origin_key = str(Origin.parse(event.origin))
            for st in self._states.values():
                if str(st.record.origin) == origin_key:
                    renewed = not st.record.push_subscribed or st.record.silent_push_count > 0
                    st.record.push_subscribed = True
                    st.record.silent_push_count = 0
                    if renewed:
                        out.notices.append(
                            Notice(event.ts, st.record.sw_id, "subscription_renewed",
                                   event.get("permission", "notifications"))
                        )
            return out
        if event.sw_id is None:
            return out

        st = self._state_for(event)
        record = st.record

        if record.state is SwState.DEREGISTERED:
            out.deliver = False
            return out

        needed = REQUIRED_CAPABILITY.get(kind)
        if needed is not None and not check_capability(record, needed):
            out.deliver = False
            out.actions.append(
                ActionEntry(event.ts, record.sw_id, EnforcementAction.THROTTLE_EVENT,
                            f"capability:{needed.value}")
            )
            return out

        handler = getattr(self, f"_on_{kind}", None)
        if handler is not None:
            handler(st, event, out)
        if self.mode == "enforce":
            out.deliver = True
        return out

    # Closed-loop delivery helper: enforce mode always "happened".
    def _effective(self, out: Decision) -> bool:
        return out.deliver or self.mode == "enforce"

    # -- per-kind handlers ---------------------------------------------------

    def _on_register(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        st.expect_install = True

    def _on_install(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        if self.mode == "simulate" and not st.expect_install and not st.running:
            out.deliver = False
            return
        st.expect_install = False
        st.expect_activate = True
        self._wake(st, event.ts)

    def _on_activate(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        if self.mode == "simulate" and not st.expect_activate and not st.running:
            out.deliver = False
            return
        st.expect_activate = False
        self._wake(st, event.ts)

    def _on_update_check(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        if self.mode == "simulate" and not st.running:
            # update() is called from a handler; a dead worker cannot call it
            st.update_check_suppressed = True
            out.deliver = False
            return
        st.update_check_delivered = True

    def _on_update_found(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        if self.mode == "simulate" and not st.update_check_delivered and st.update_check_suppressed:
            st.update_check_suppressed = False
            out.deliver = False
            return
        st.update_check_delivered = False
        st.record.version += 1
        if st.running:
            # Self-update chain: anchor at the activation it is extending.
            if not st.update_chain:
                st.update_chain = True
                st.chain_anchor = st.activation_start
        else:
            self._wake(st, event.ts)  # browser-scheduled update; no cap anchor
        st.expect_install = True

    def _on_push(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        record = st.record
        if self.mode == "simulate" and not record.push_subscribed:
            out.deliver = False
            out.notices.append(
                Notice(event.ts, record.sw_id, "push_dropped", "subscription revoked")
            )
            return
        spec = self.config.get("push_per_hour")
        if spec is not None and event.origin not in self.config.allow_list:
            counts = st.windows.setdefault("push_per_hour", {})
            slot = self._slot(event.ts, spec.duration_in_minutes)
            counts[slot] = counts.get(slot, 0) + 1
            if counts[slot] > spec.threshold:
                out.deliver = False
                out.actions.append(
                    ActionEntry(event.ts, record.sw_id,
                                EnforcementAction.THROTTLE_EVENT, "push_per_hour")
                )
                if ("push_per_hour", slot) not in st.window_violated:
                    st.window_violated.add(("push_per_hour", slot))
                    self._apply_ladder(
                        st,
                        ViolationRecord("push_per_hour", record.sw_id, event.ts,
                                        counts[slot], spec.threshold),
                        out,
                    )
                if self.mode != "enforce":
                    return
        if self._effective(out):
            self._wake(st, event.ts)
            st.pending_silent.append((event.ts, event.ts + SILENT_PUSH_GRACE_MS))

    def _on_sync(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        self._wake(st, event.ts)

    def _on_periodicsync(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        self._wake(st, event.ts)

    def _on_fetch_event_start(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        self._wake(st, event.ts)
        st.bracket_depth += 1

    def _on_fetch_event_end(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        if st.bracket_depth == 0:
            if self.mode == "simulate":
                out.deliver = False  # its start was suppressed with the worker
                return
            raise UnbalancedBrackets(
                f"fetch_event_end at ts {event.ts} without open start for {event.sw_id!r}"
            )
        st.bracket_depth -= 1
        if st.bracket_depth == 0:
            st.last_bracket_end = event.ts

    def _on_fetch_request(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        if not event.get("initiator_is_sw"):
            return  # page-initiated; not worker execution
        if self.mode == "simulate" and not st.running:
            out.deliver = False
            return
        if self.mode == "enforce":
            self._wake(st, event.ts)
        foreground = st.bracket_depth > 0 or (
            st.last_bracket_end is not None and event.ts == st.last_bracket_end
        )
        if foreground:
            return
        domain = registrable_domain(_url_host(event.get("url", "")))
        if domain in st.first_party:
            return
        spec = self.config.get("bg_fetch_per_activation")
        if spec is None:
            return
        st.act_bg_count += 1
        if st.act_bg_count > spec.threshold:
            out.deliver = False
            out.actions.append(
                ActionEntry(event.ts, st.record.sw_id,
                            EnforcementAction.THROTTLE_EVENT, "bg_fetch_per_activation")
            )
            if not st.act_bg_violated:
                st.act_bg_violated = True
                self._apply_ladder(
                    st,
                    ViolationRecord("bg_fetch_per_activation", st.record.sw_id,
                                    event.ts, st.act_bg_count, spec.threshold),
                    out,
                )

    def _on_notification_show(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        if self.mode == "simulate" and not st.running:
            out.deliver = False
            return
        if self.mode == "enforce":
            self._wake(st, event.ts)
        if st.pending_silent:
            st.pending_silent.popleft()  # this push did show a notification
        tag = event.get("tag")
        if tag is not None:
            replaced = [
                notif_id for notif_id, (_ts, seen_tag) in st.visible.items()
                if seen_tag == tag
            ]
            if replaced:
                for notif_id in replaced:
                    del st.visible[notif_id]
                self._note_tag_reuse(st, tag, event, out)
        st.visible[event.get("notif_id", "")] = (event.ts, tag)

    def _note_tag_reuse(self, st: _SwEngineState, tag: str, event: TraceEvent, out: Decision) -> None:
        spec = self.config.get("tag_reuse")
        if spec is None:
            return
        counter = st.tag_counts.setdefault(tag, [0, 0])
        slot = self._slot(event.ts, spec.duration_in_minutes or 60)
        if slot != counter[0]:
            counter[:] = [slot, 0]
        counter[1] += 1
        if counter[1] > spec.threshold and (tag, slot) not in st.tag_violated:
            st.tag_violated.add((tag, slot))
            self._apply_ladder(
                st,
                ViolationRecord("tag_reuse", st.record.sw_id, event.ts,
                                counter[1], spec.threshold),
                out,
            )

    def _on_notification_click(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        notif_id = event.get("notif_id", "")
        if notif_id not in st.visible:
            if self.mode == "simulate":
                out.deliver = False  # cannot click a notification never shown
                return
        else:
            del st.visible[notif_id]
        self._wake(st, event.ts)

    def _on_notification_close(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        by_user = bool(event.get("by_user", False))
        if not by_user and self.mode == "simulate" and not st.running:
            out.deliver = False
            return
        notif_id = event.get("notif_id", "")
        shown = st.visible.pop(notif_id, None)
        if shown is None:
            if self.mode == "simulate":
                out.deliver = False
            return
        if by_user:
            return
        spec = self.config.get("notif_min_visible")
        if spec is None:
            return
        delta_s = (event.ts - shown[0]) / 1_000
        if delta_s < spec.threshold:
            self._apply_ladder(
                st,
                ViolationRecord("notif_min_visible", st.record.sw_id, event.ts,
                                delta_s, spec.threshold),
                out,
            )

    def _on_terminate(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        if not st.running:
            if self.mode == "simulate":
                out.deliver = False  # already stopped by policy
            return
        self._stop(st, event.ts)

    def _on_code_tampered(self, st: _SwEngineState, event: TraceEvent, out: Decision) -> None:
        st.record.code_tampered = True

    # -- spec-level helpers --------------------------------------------------

    def on_activation_tick(self, sw_id: str, now: int) -> Optional[ActionEntry]:
        """Run the execution-limit checks for one running worker at ``now``.

        Returns the terminate action when a cap fired, None otherwise.
        """
        st = self._states[sw_id]
        if not st.running:
            return None
        out = Decision(deliver=True)
        self._advance_sw(st, now, out)
        self._last_ts = max(self._last_ts, now)
        for entry in out.actions:
            if entry.action is EnforcementAction.TERMINATE_SW:
                return entry
        return None

    @staticmethod
    def check_notification_visibility(
        show_event: TraceEvent, close_event: TraceEvent, min_visible_s: float = 30.0
    ) -> Optional[ViolationRecord]:
        """Direct visibility check for a show/close pair.

        Raises DanglingClose when the close references a different notif_id.
        """
        if close_event.get("notif_id") != show_event.get("notif_id"):
            raise DanglingClose(f"close references unknown id {close_event.get('notif_id')!r}")
        if close_event.get("by_user", False):
            return None
        delta_s = (close_event.ts - show_event.ts) / 1_000
        if delta_s < min_visible_s:
            return ViolationRecord(
                "notif_min_visible", show_event.sw_id or "", close_event.ts,
                delta_s, min_visible_s,
            )
        return None

    def finish(self, end_ts: Optional[int] = None) -> Decision:
        """Flush deadlines/caps up to the end of the observed trace."""
        return self.advance(end_ts if end_ts is not None else self._last_ts)


def _url_host(url: str) -> str:
    return urlsplit(url).hostname or ""
