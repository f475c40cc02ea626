"""Command-line entry point: gen / simulate / enforce / analyze /
csp-check / csp-audit.

Exit codes: 0 success, 1 policy denial or violation found (csp-check,
enforce --fail-on-violation), 2 usage or IO errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from typing import Any, Iterable, Optional

from . import csp as csp_mod
from . import forensics
from .policy import PolicyConfig, PolicyEngine, PROFILES, load_policies
from .scenarios import GENERATORS, Scenario, generate, simulate
from .trace import TraceError, emit_trace, read_trace

ENV_CONFIG = "SW_SENTINEL_CONFIG"


class CliError(Exception):
    """IO/validation failure reported as exit code 2."""


def _coerce(text: str) -> Any:
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def _parse_params(pairs: Iterable[str]) -> dict[str, Any]:
    params: dict[str, Any] = {}
    for pair in pairs:
        if "=" not in pair:
            raise CliError(f"--param expects k=v, got {pair!r}")
        key, value = pair.split("=", 1)
        params[key] = _coerce(value)
    return params


def _load_config(path: Optional[str]) -> PolicyConfig:
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    if path is None:
        return load_policies(None)
    try:
        with open(path, encoding="utf-8") as fh:
            return load_policies(fh.read())
    except OSError as exc:
        raise CliError(f"cannot read policy config {path}: {exc}") from exc


def _write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".sw-sentinel-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_trace_file(path: str, events) -> None:
    _write_text(path, "".join(line + "\n" for line in emit_trace(events)))


def _jsonl(rows: Iterable[dict[str, Any]]) -> str:
    return "".join(json.dumps(row, sort_keys=True) + "\n" for row in rows)


def _action_rows(actions) -> list[dict[str, Any]]:
    return [
        {"ts": a.ts, "sw_id": a.sw_id, "action": a.action.value, "reason": a.reason}
        for a in actions
    ]


def _violation_rows(violations) -> list[dict[str, Any]]:
    return [
        {"ts": v.ts, "sw_id": v.sw_id, "policy": v.policy_name,
         "observed": v.observed, "threshold": v.threshold}
        for v in violations
    ]


def _notice_rows(notices) -> list[dict[str, Any]]:
    return [
        {"ts": n.ts, "sw_id": n.sw_id, "kind": n.kind, "detail": n.detail}
        for n in notices
    ]


def _scenario_from_args(args: argparse.Namespace) -> Scenario:
    params = _parse_params(args.param or [])
    duration = params.pop("duration_ms", None)
    return Scenario(name=args.scenario, seed=args.seed, params=params,
                    duration_ms=duration)


def _cmd_gen(args: argparse.Namespace) -> int:
    scenario = _scenario_from_args(args)
    try:
        events = generate(scenario)
    except (KeyError, TypeError) as exc:
        raise CliError(f"cannot generate scenario: {exc}") from exc
    _write_trace_file(args.out, events)
    print(f"wrote {len(events)} events to {args.out}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _scenario_from_args(args)
    config = _load_config(args.policies)
    result = simulate(scenario, config, args.profile)
    out = args.out
    _write_trace_file(os.path.join(out, "delivered.jsonl"), result.delivered_events)
    _write_trace_file(os.path.join(out, "suppressed.jsonl"), result.suppressed_events)
    _write_text(os.path.join(out, "actions.jsonl"), _jsonl(_action_rows(result.actions)))
    _write_text(os.path.join(out, "violations.jsonl"),
                _jsonl(_violation_rows(result.violations)))
    _write_text(os.path.join(out, "notices.jsonl"), _jsonl(_notice_rows(result.notices)))
    _write_text(
        os.path.join(out, "final_states.json"),
        json.dumps({sw: state.value for sw, state in result.final_states.items()},
                   sort_keys=True, indent=2) + "\n",
    )
    print(
        f"delivered {len(result.delivered_events)}, "
        f"suppressed {len(result.suppressed_events)}, "
        f"violations {len(result.violations)}"
    )
    return 0


def _read_trace_checked(path: str):
    try:
        return read_trace(path)
    except OSError as exc:
        raise CliError(f"cannot read trace {path}: {exc}") from exc
    except TraceError as exc:
        raise CliError(f"invalid trace {path}: {exc}") from exc


def _cmd_enforce(args: argparse.Namespace) -> int:
    events = _read_trace_checked(args.trace)
    config = _load_config(args.policies)
    engine = PolicyEngine(config, args.profile, mode="enforce")
    actions, violations, notices = [], [], []
    for event in events:
        decision = engine.on_event(event)
        actions.extend(decision.actions)
        violations.extend(decision.violations)
        notices.extend(decision.notices)
    final = engine.finish(events[-1].ts if events else 0)
    actions.extend(final.actions)
    violations.extend(final.violations)
    notices.extend(final.notices)
    out = args.out
    _write_text(os.path.join(out, "violations.jsonl"),
                _jsonl(_violation_rows(violations)))
    _write_text(os.path.join(out, "actions.jsonl"), _jsonl(_action_rows(actions)))
    _write_text(os.path.join(out, "notices.jsonl"), _jsonl(_notice_rows(notices)))
    print(f"{len(violations)} violations, {len(actions)} actions")
    if args.fail_on_violation and violations:
        return 1
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    events = _read_trace_checked(args.trace)
    metadata = {}
    if args.meta:
        try:
            with open(args.meta, encoding="utf-8") as fh:
                metadata = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read metadata {args.meta}: {exc}") from exc
    reports = forensics.analyze_trace(events, metadata)
    report_obj = {
        sw_id: dataclasses.asdict(report) for sw_id, report in reports.items()
    }
    _write_text(os.path.join(args.out, "report.json"),
                json.dumps(report_obj, sort_keys=True, indent=2) + "\n")
    for metric, field_name in (
        ("pushes_per_hour", "pushes_per_hour_slots"),
        ("exec_minutes_per_activation", "exec_minutes_per_activation"),
        ("exec_minutes_per_day", "exec_minutes_per_day"),
        ("bg_fetches_per_activation", "bg_third_party_fetches_per_activation"),
        ("notification_close_deltas_s", "notification_close_deltas_s"),
    ):
        values: list[float] = []
        for report in reports.values():
            values.extend(getattr(report, field_name))
        path = os.path.join(args.out, f"cdf_{metric}.csv")
        os.makedirs(args.out, exist_ok=True)
        forensics.export_cdf(values, path)
    print(f"analyzed {len(reports)} workers into {args.out}")
    return 0


def _cmd_csp_check(args: argparse.Namespace) -> int:
    policy = csp_mod.parse_csp(args.header) if args.header is not None else None
    denied = False
    for import_url in args.imports or []:
        verdict = csp_mod.check_import(policy, args.origin, import_url)
        status = "allow" if verdict.allowed else "deny"
        print(f"import {import_url}: {status} ({verdict.rule})")
        denied = denied or not verdict.allowed
    eval_verdict = csp_mod.check_eval(policy)
    print(f"eval: {'allow' if eval_verdict.allowed else 'deny'} ({eval_verdict.rule})")
    denied = denied or not eval_verdict.allowed
    return 1 if denied else 0


def _cmd_csp_audit(args: argparse.Namespace) -> int:
    corpus = []
    try:
        with open(args.corpus, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CliError(
                        f"{args.corpus}:{line_no}: invalid JSON ({exc.msg})"
                    ) from exc
                corpus.append((obj.get("url", ""), obj.get("headers", {})))
    except OSError as exc:
        raise CliError(f"cannot read corpus {args.corpus}: {exc}") from exc
    summary = csp_mod.audit_headers(corpus)
    print(json.dumps(
        {
            "total": summary.total,
            "with_csp": summary.with_csp,
            "with_script_src": summary.with_script_src,
            "csp_fraction": summary.csp_fraction,
            "script_src_fraction": summary.script_src_fraction,
        },
        sort_keys=True,
    ))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sw-sentinel",
        description="Service worker abuse model: generate, enforce, analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a scenario trace")
    gen.add_argument("--scenario", required=True, choices=sorted(GENERATORS))
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--param", action="append", metavar="K=V")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen)

    sim = sub.add_parser("simulate", help="closed-loop scenario under policies")
    sim.add_argument("--scenario", required=True, choices=sorted(GENERATORS))
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--param", action="append", metavar="K=V")
    sim.add_argument("--policies", help=f"policy config (default ${ENV_CONFIG} or built-in)")
    sim.add_argument("--profile", default="chrome", choices=sorted(PROFILES))
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    enf = sub.add_parser("enforce", help="open-loop replay of a recorded trace")
    enf.add_argument("--trace", required=True)
    enf.add_argument("--policies")
    enf.add_argument("--profile", default="chrome", choices=sorted(PROFILES))
    enf.add_argument("--out", default=".", help="output directory")
    enf.add_argument("--fail-on-violation", action="store_true")
    enf.set_defaults(func=_cmd_enforce)

    ana = sub.add_parser("analyze", help="behavior aggregates and CDFs")
    ana.add_argument("--trace", required=True)
    ana.add_argument("--meta", help="sw_id -> {origin, rank, import_domains}")
    ana.add_argument("--out", required=True, help="output directory")
    ana.set_defaults(func=_cmd_analyze)

    chk = sub.add_parser("csp-check", help="verdicts for importScripts URLs")
    chk.add_argument("--header", help="CSP header value (omit for no header)")
    chk.add_argument("--origin", required=True)
    chk.add_argument("--import", dest="imports", action="append", metavar="URL")
    chk.set_defaults(func=_cmd_csp_check)

    aud = sub.add_parser("csp-audit", help="CSP adoption counts over a header corpus")
    aud.add_argument("--corpus", required=True)
    aud.set_defaults(func=_cmd_csp_audit)
    return parser


def run(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
