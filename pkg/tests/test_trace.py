import json
import random

import pytest

from sw_sentinel.trace import (
    BACKGROUND_FIRST_PARTY,
    BACKGROUND_THIRD_PARTY,
    FOREGROUND,
    EVENT_KINDS,
    InvariantViolation,
    MalformedLine,
    OutOfOrderTimestamp,
    TraceEvent,
    UnbalancedBrackets,
    UnknownEventKind,
    bracket_intervals,
    classify_background_fetch,
    emit_trace,
    parse_trace,
)

ORIGIN = "https://t.example"


def ev(ts, kind, sw_id="sw-1", **payload):
    return TraceEvent(ts=ts, kind=kind, origin=ORIGIN, sw_id=sw_id, scope="/",
                      payload=payload)


class TestParse:
    def test_two_push_lines(self):
        lines = [
            '{"ts":0,"kind":"push","origin":"https://t.example","sw_id":"sw-1","push_id":"a"}',
            '{"ts":1000,"kind":"push","origin":"https://t.example","sw_id":"sw-1","push_id":"b"}',
        ]
        events = parse_trace(lines)
        assert len(events) == 2
        assert events[1].get("push_id") == "b"

    def test_out_of_order_reports_line(self):
        lines = [
            '{"ts":1000,"kind":"push","origin":"https://t.example","push_id":"a"}',
            '{"ts":0,"kind":"push","origin":"https://t.example","push_id":"b"}',
        ]
        with pytest.raises(OutOfOrderTimestamp) as err:
            parse_trace(lines)
        assert err.value.line_no == 2

    def test_unknown_kind(self):
        with pytest.raises(UnknownEventKind):
            parse_trace(['{"ts":0,"kind":"telepathy","origin":"https://t.example"}'])

    def test_malformed_json(self):
        with pytest.raises(MalformedLine):
            parse_trace(["{nope"])

    def test_missing_required_payload(self):
        with pytest.raises(MalformedLine):
            parse_trace(['{"ts":0,"kind":"push","origin":"https://t.example"}'])
        with pytest.raises(MalformedLine):
            parse_trace(
                ['{"ts":0,"kind":"fetch_request","origin":"https://t.example","url":"x"}']
            )

    def test_bool_is_not_a_timestamp(self):
        with pytest.raises(MalformedLine):
            parse_trace(['{"ts":true,"kind":"push","origin":"https://t.example","push_id":"a"}'])

    def test_event_kind_enumeration_is_closed(self):
        assert len(EVENT_KINDS) == 18


class TestEmit:
    def test_empty(self):
        assert list(emit_trace([])) == []

    def test_unordered_input_rejected(self):
        events = [ev(1000, "push", push_id="a"), ev(0, "push", push_id="b")]
        with pytest.raises(InvariantViolation):
            list(emit_trace(events))

    def test_unknown_keys_preserved(self):
        line = ('{"ts":5,"kind":"terminate","origin":"https://t.example",'
                '"sw_id":"sw-1","cpu_ms":123,"zebra":"stripes"}')
        events = parse_trace([line])
        assert events[0].get("cpu_ms") == 123
        out = list(emit_trace(events))
        assert json.loads(out[0])["zebra"] == "stripes"

    def _random_trace(self, rng, n):
        kinds = sorted(EVENT_KINDS)
        ts = 0
        events = []
        for i in range(n):
            ts += rng.randint(0, 2000)
            kind = rng.choice(kinds)
            payload = {}
            if kind == "push":
                payload["push_id"] = f"p{i}"
            elif kind == "fetch_request":
                payload = {"url": "https://x.example/r", "initiator_is_sw": True}
            elif kind == "notification_show":
                payload = {"notif_id": f"n{i}", "title": "t"}
                if rng.random() < 0.5:
                    payload["tag"] = "tag-a"
            elif kind in ("notification_close", "notification_click"):
                payload = {"notif_id": f"n{i}"}
            elif kind == "permission_grant":
                payload = {"permission": "notifications"}
            elif kind == "update_found":
                payload = {"version": i}
            elif kind == "code_tampered":
                payload = {"source": "extension"}
            if rng.random() < 0.2:
                payload["extra_key"] = rng.randint(0, 9)
            events.append(
                TraceEvent(ts=ts, kind=kind, origin=ORIGIN,
                           sw_id=None if kind in ("page_visit", "permission_grant") else "sw-1",
                           scope="/", payload=payload)
            )
        return events

    def test_round_trip_identity_random_traces(self):
        rng = random.Random(21)
        for _ in range(100):
            events = self._random_trace(rng, rng.randint(0, 200))
            lines = list(emit_trace(events))
            parsed = parse_trace(lines)
            assert parsed == events
            assert list(emit_trace(parsed)) == lines  # byte-identical canonical form

    def test_large_round_trip(self):
        rng = random.Random(5)
        events = self._random_trace(rng, 10_000)
        assert parse_trace(emit_trace(events)) == events


class TestBrackets:
    def test_unbalanced_end(self):
        events = [ev(10, "fetch_event_end")]
        with pytest.raises(UnbalancedBrackets):
            bracket_intervals(events)

    def test_dangling_start(self):
        events = [ev(10, "fetch_event_start")]
        with pytest.raises(UnbalancedBrackets):
            bracket_intervals(events)

    def test_nested_brackets_merge(self):
        events = [
            ev(10, "fetch_event_start"),
            ev(20, "fetch_event_start"),
            ev(30, "fetch_event_end"),
            ev(40, "fetch_event_end"),
        ]
        assert bracket_intervals(events) == {"sw-1": [(10, 40)]}


class TestClassification:
    def _fetch(self, ts, url="https://victim.example/x"):
        return ev(ts, "fetch_request", url=url, initiator_is_sw=True)

    def test_inside_bracket_is_foreground(self):
        events = [ev(40, "fetch_event_start"), self._fetch(50), ev(60, "fetch_event_end")]
        assert classify_background_fetch(events, events[1], {"t.example"}) == FOREGROUND

    def test_import_domain_is_first_party(self):
        fetch = self._fetch(100, "https://cdn.push-provider.example/data")
        assert (
            classify_background_fetch([fetch], fetch, {"t.example", "push-provider.example"})
            == BACKGROUND_FIRST_PARTY
        )

    def test_third_party_outside_bracket(self):
        fetch = self._fetch(100)
        assert (
            classify_background_fetch([fetch], fetch, {"t.example"})
            == BACKGROUND_THIRD_PARTY
        )

    @staticmethod
    def _oracle(events, fetch, first_party):
        # Independent O(n^2) containment: depth at t from raw start/end counts.
        starts = [e.ts for e in events
                  if e.kind == "fetch_event_start" and e.sw_id == fetch.sw_id]
        ends = [e.ts for e in events
                if e.kind == "fetch_event_end" and e.sw_id == fetch.sw_id]
        depth = sum(1 for s in starts if s <= fetch.ts) - sum(
            1 for e in ends if e < fetch.ts
        )
        if depth > 0:
            return FOREGROUND
        host = fetch.get("url").split("//")[1].split("/")[0]
        labels = host.split(".")
        domain = ".".join(labels[-2:])
        if domain in first_party:
            return BACKGROUND_FIRST_PARTY
        return BACKGROUND_THIRD_PARTY

    def test_matches_oracle_on_random_traces(self):
        rng = random.Random(77)
        urls = [
            "https://victim.example/x",
            "https://cdn.ally.example/lib.js",
            "https://sub.t.example/own",
        ]
        first_party = {"t.example", "ally.example"}
        for round_no in range(120):
            ts = 0
            depth = 0
            events = []
            n = 10_000 if round_no == 0 else rng.randint(5, 300)
            for _ in range(n):
                ts += rng.randint(0, 50)
                roll = rng.random()
                if roll < 0.25:
                    events.append(ev(ts, "fetch_event_start"))
                    depth += 1
                elif roll < 0.5 and depth > 0:
                    events.append(ev(ts, "fetch_event_end"))
                    depth -= 1
                else:
                    events.append(self._fetch(ts, rng.choice(urls)))
            while depth > 0:
                ts += rng.randint(0, 50)
                events.append(ev(ts, "fetch_event_end"))
                depth -= 1
            intervals = bracket_intervals(events)
            fetches = [e for e in events if e.kind == "fetch_request"]
            if len(events) > 1_000:
                fetches = rng.sample(fetches, 200)  # keep the n^2 oracle tractable
            for event in fetches:
                got = classify_background_fetch(events, event, first_party,
                                                intervals=intervals)
                assert got == self._oracle(events, event, first_party)
