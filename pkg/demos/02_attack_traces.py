"""
Abuse workloads as traces
=========================

Each generator reproduces one service worker abuse as a deterministic event
trace. This script generates the unmitigated traces and summarizes what a
browser would experience without any of the new policies.

    python3 demos/02_attack_traces.py
"""

from collections import Counter

from sw_sentinel import analyze_trace
from sw_sentinel.scenarios import (
    gen_ddos,
    gen_notification_hider,
    gen_push_flood,
    gen_tag_reuser,
    gen_tracking_library,
    gen_webbot,
)

HOUR = 3_600_000

# -- Self-update loop (continuous execution via the update API) ---------------
# The activate handler waits 25 s and calls update; a "fresh" server script
# restarts the cycle, so the worker simply never stops running.
events = gen_webbot(seed=1, duration_ms=44 * 60_000)
report = analyze_trace(events)["sw-webbot"]
print("webbot activations (minutes):",
      [round(m, 1) for m in report.exec_minutes_per_activation])

# -- Push flood ----------------------------------------------------------------
# 50 pushes per hour, far beyond what almost all production workers receive.
events = gen_push_flood(seed=1, pushes_per_hour=50, duration_ms=3 * HOUR)
report = analyze_trace(events)["sw-pushflood"]
print("push flood per-hour counts:", report.pushes_per_hour_slots)

# -- DDoS ----------------------------------------------------------------------
# One push activation issuing 50 background requests per second for 30 min.
events = gen_ddos(seed=1, req_per_s=50, burst_minutes=30)
fetches = sum(1 for e in events if e.kind == "fetch_request")
print(f"ddos trace: {fetches:,} background fetches toward the victim")

# -- Notification hiding ---------------------------------------------------------
# Every push shows a notification and closes it programmatically within
# 100 ms, so the user never sees evidence of the activations.
events = gen_notification_hider(seed=1, duration_ms=10 * 60_000)
report = analyze_trace(events)["sw-hider"]
print("hider close deltas (s):", report.notification_close_deltas_s)

# -- Tag reuse -------------------------------------------------------------------
# One reused tag keeps replacing the visible notification in place.
events = gen_tag_reuser(seed=1, n_pushes=5)
tags = Counter(e.get("tag") for e in events if e.kind == "notification_show")
print("tag reuse:", dict(tags))

# -- Tracking library -------------------------------------------------------------
# An imported push-service library mirrors every page navigation to its own
# endpoint through background fetches.
events = gen_tracking_library(seed=1, page_visits=20)
tracking = [e for e in events if e.kind == "fetch_request"
            and "tracking.example" in e.get("url", "")]
print(f"tracking library: {len(tracking)} page visits exfiltrated")
