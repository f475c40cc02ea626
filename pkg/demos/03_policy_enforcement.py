"""
Closed-loop enforcement
=======================

The same attack workloads, now fed through the policy engine: events the
engine refuses (throttled, or from a terminated/deregistered worker) are
suppressed and never take effect. Default thresholds: 14 pushes/hour,
5 min/activation, 90 min/day, 5 background third-party fetches/activation.

    python3 demos/03_policy_enforcement.py
"""

from collections import Counter

from sw_sentinel import PolicyConfig, default_policies
from sw_sentinel.scenarios import Scenario, simulate

HOUR = 3_600_000
defaults = default_policies()
no_policies = PolicyConfig(())

# -- Push flood: delivery capped at the hourly threshold ----------------------
result = simulate(Scenario("push_flood", 1, {"pushes_per_hour": 50}, 3 * HOUR),
                  defaults, "chrome")
per_slot = Counter(e.ts // HOUR for e in result.delivered_events if e.kind == "push")
print("flood delivered per slot:", dict(per_slot))
print("flood violations:", [(v.policy_name, v.ts) for v in result.violations])

# -- DDoS: two layers (fetch budget, then the 5-minute execution cap) ----------
result = simulate(Scenario("ddos", 7, {"req_per_s": 50, "burst_minutes": 30}),
                  defaults, "chrome")
delivered = sum(1 for e in result.delivered_events if e.kind == "fetch_request")
print(f"ddos: {delivered} of 90,000 fetches delivered; "
      f"{len(result.suppressed_events):,} events suppressed")

# -- WebBot: the vendor self-update cap, no policies needed --------------------
capped = simulate(Scenario("webbot", 1, {}, 10 * 60_000), no_policies, "chrome")
free = simulate(Scenario("webbot", 1, {}, 10 * 60_000), no_policies, "firefox")
print("webbot longest run, chrome profile:",
      capped.max_continuous_ms("sw-webbot") / 1000, "s")
print("webbot longest run, firefox profile:",
      free.max_continuous_ms("sw-webbot") / 1000, "s")

# -- Silent pushes: vendor revocation vs. the renewal evasion -------------------
flood = {"pushes_per_hour": 16, "silent": True}
for profile in ("edge", "firefox"):
    result = simulate(Scenario("push_flood", 5, flood, HOUR), no_policies, profile)
    revoke = next(n for n in result.notices if n.kind == "revoke_subscription")
    pushes = sum(1 for e in result.delivered_events if e.kind == "push")
    print(f"{profile}: revoked after {pushes} silent pushes ({revoke.detail})")

# Renewing the subscription every 10 pushes resets the vendor counter, but
# the push-frequency policy still fires: layered defense.
evading = simulate(Scenario("push_flood", 5, dict(flood, renew_after=10), 3 * HOUR),
                   defaults, "firefox")
print("renewal evasion: revoked =",
      any(n.kind == "revoke_subscription" for n in evading.notices),
      "| push violations =",
      sum(1 for v in evading.violations if v.policy_name == "push_per_hour"))

# -- Severity ladder: repeated abuse ends in deregistration ---------------------
hidden = simulate(Scenario("notification_hider", 1, {}, 10 * 60_000),
                  defaults, "chrome")
print("hider actions:", Counter(a.action.value for a in hidden.actions))
print("hider final state:", {k: v.value for k, v in hidden.final_states.items()})
