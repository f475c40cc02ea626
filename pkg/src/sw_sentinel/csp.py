"""Content-Security-Policy handling for service worker script responses.

Implements the fail-safe default ``script-src 'self'`` for worker scripts,
importScripts origin checks, and eval gating. Deliberately does NOT fall
back from script-src to default-src: the default exists to close the
unrestricted-import hole, and inheriting default-src would reopen it.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional
from urllib.parse import urlsplit

from .model import Origin

logger = logging.getLogger(__name__)

SELF = "'self'"
UNSAFE_EVAL = "'unsafe-eval'"
NONE = "'none'"

_KEYWORDS = {SELF, UNSAFE_EVAL, NONE}
# Valid CSP keywords we retain but never match (nonces/hashes are out of scope).
_INERT_KEYWORD_RE = re.compile(r"^'[a-z0-9+/=-]+'$", re.IGNORECASE)
_HOST_SOURCE_RE = re.compile(
    r"^(?:(?P<scheme>[a-z][a-z0-9+.-]*)://)?"
    r"(?P<host>(?:\*\.)?[a-z0-9-]+(?:\.[a-z0-9-]+)*|\*)"
    r"(?::(?P<port>\d+|\*))?$",
    re.IGNORECASE,
)

_DEFAULT_PORTS = {"https": 443, "http": 80}


@dataclass
class CspPolicy:
    """Parsed directive map. Duplicate directives keep the first occurrence."""

    directives: dict[str, tuple[str, ...]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def script_src(self) -> Optional[tuple[str, ...]]:
        return self.directives.get("script-src")

    def serialize(self) -> str:
        return "; ".join(
            name if not sources else f"{name} {' '.join(sources)}"
            for name, sources in self.directives.items()
        )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CspPolicy) and self.directives == other.directives


@dataclass(frozen=True)
class CspVerdict:
    allowed: bool
    rule: str


def _normalize_source(token: str) -> Optional[str]:
    """Canonical form of a source token, or None when it is malformed."""
    lowered = token.lower()
    if lowered in _KEYWORDS:
        return lowered
    if _INERT_KEYWORD_RE.match(token):
        return lowered  # recognized CSP keyword kept inert
    if _HOST_SOURCE_RE.match(token):
        return lowered
    return None


def parse_csp(header_value: str) -> CspPolicy:
    """Parse a CSP header value; malformed source tokens are skipped with a
    warning rather than failing the whole header (real headers are messy)."""
    policy = CspPolicy()
    for raw in header_value.split(";"):
        tokens = raw.split()
        if not tokens:
            continue
        name = tokens[0].lower()
        sources = []
        for token in tokens[1:]:
            normalized = _normalize_source(token)
            if normalized is None:
                message = f"malformed source {token!r} in directive {name!r}; skipped"
                policy.warnings.append(message)
                logger.warning("%s", message)
                continue
            sources.append(normalized)
        if name not in policy.directives:  # first occurrence wins
            policy.directives[name] = tuple(sources)
    return policy


def effective_sw_policy(parsed: Optional[CspPolicy]) -> CspPolicy:
    """The policy actually enforced on a worker script response.

    A missing header, or a header without script-src, yields
    script-src 'self'. default-src is intentionally not consulted.
    """
    result = CspPolicy()
    if parsed is not None:
        result.directives.update(parsed.directives)
    if "script-src" not in result.directives:
        result.directives["script-src"] = (SELF,)
    return result


def _host_matches(pattern: str, host: str) -> bool:
    if pattern == "*":
        return True
    if pattern.startswith("*."):
        suffix = pattern[1:]  # ".example.com"
        return host.endswith(suffix) and len(host) > len(suffix)
    return host == pattern


def host_source_matches(source: str, url: str) -> bool:
    """Whether a host-source token allows the given URL.

    Scheme-less sources assume https (worker scripts are https-only). A
    source without a port matches the scheme-default port only.
    """
    match = _HOST_SOURCE_RE.match(source)
    if not match:
        return False
    parts = urlsplit(url)
    if not parts.hostname:
        return False
    scheme = (parts.scheme or "https").lower()
    want_scheme = (match.group("scheme") or "https").lower()
    if scheme != want_scheme:
        return False
    if not _host_matches(match.group("host").lower(), parts.hostname.lower()):
        return False
    url_port = parts.port or _DEFAULT_PORTS.get(scheme)
    want_port = match.group("port")
    if want_port == "*":
        return True
    if want_port is None:
        return url_port == _DEFAULT_PORTS.get(want_scheme)
    return url_port == int(want_port)


def check_import(
    policy: Optional[CspPolicy], sw_origin: Origin | str, import_url: str
) -> CspVerdict:
    """Verdict for an importScripts URL against the effective script-src."""
    if isinstance(sw_origin, str):
        sw_origin = Origin.parse(sw_origin)
    effective = effective_sw_policy(policy)
    sources = effective.directives["script-src"]
    parts = urlsplit(import_url)
    if parts.hostname:
        scheme = parts.scheme or sw_origin.scheme
        same_origin = Origin.parse(f"{scheme}://{parts.netloc}") == sw_origin
    else:
        same_origin = True  # path-only URL resolves against the worker origin
    for source in sources:
        if source == SELF and same_origin:
            return CspVerdict(True, SELF)
        if source in _KEYWORDS or source.startswith("'"):
            continue
        if host_source_matches(source, import_url):
            return CspVerdict(True, source)
    return CspVerdict(False, f"script-src has no source allowing {import_url}")


def check_eval(policy: Optional[CspPolicy]) -> CspVerdict:
    """eval() is denied unless 'unsafe-eval' appears in the effective script-src."""
    effective = effective_sw_policy(policy)
    if UNSAFE_EVAL in effective.directives["script-src"]:
        return CspVerdict(True, UNSAFE_EVAL)
    return CspVerdict(False, "script-src lacks 'unsafe-eval'")


@dataclass(frozen=True)
class AuditSummary:
    total: int
    with_csp: int
    with_script_src: int

    @property
    def csp_fraction(self) -> float:
        return self.with_csp / self.total if self.total else 0.0

    @property
    def script_src_fraction(self) -> float:
        return self.with_script_src / self.total if self.total else 0.0


def _header_lookup(headers: Mapping[str, Any], name: str) -> Optional[str]:
    lowered = name.lower()
    for key, value in headers.items():
        if key.lower() == lowered:
            return value
    return None


def audit_headers(corpus: Iterable[tuple[str, Mapping[str, str]]]) -> AuditSummary:
    """Count worker-script responses carrying a CSP, and those with script-src.

    Worker responses are identified by the ``Service-Worker`` request header
    recorded alongside the response; other corpus entries are ignored.
    """
    total = with_csp = with_script_src = 0
    for _url, headers in corpus:
        if _header_lookup(headers, "Service-Worker") is None:
            continue
        total += 1
        csp_value = _header_lookup(headers, "Content-Security-Policy")
        if not csp_value:
            continue
        with_csp += 1
        if parse_csp(csp_value).script_src() is not None:
            with_script_src += 1
    return AuditSummary(total, with_csp, with_script_src)
