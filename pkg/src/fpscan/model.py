"""Domain records shared by every pipeline stage, plus URL decomposition."""

from __future__ import annotations

import ipaddress
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple
from urllib.parse import urlsplit

log = logging.getLogger(__name__)

SEPARATOR = ";"


class OriginParseError(ValueError):
    def __init__(self, raw: str, reason: str = "not an absolute URL"):
        super().__init__(f"cannot parse script origin {raw!r}: {reason}")
        self.raw = raw


class Origin(NamedTuple):
    script_domain: str
    filename: str

    @property
    def is_inline(self) -> bool:
        """True for origins without a distinct file (inline or page-level code)."""
        return self.filename == ""


@lru_cache(maxsize=65536)
def parse_origin(url: str) -> Origin:
    """Split a script URL into ``(script_domain, filename)``.

    The domain is the lower-cased host with any port removed. The filename is
    the last path segment followed by the full query string, so cache busters
    such as ``?v=482158`` stay part of it. Fragments are dropped.
    """
    if not url or not url.strip():
        raise OriginParseError(url, "empty")
    try:
        parts = urlsplit(url.strip())
        host = parts.hostname
    except ValueError as exc:
        raise OriginParseError(url, str(exc)) from exc
    if not parts.scheme or not host:
        raise OriginParseError(url)
    filename = parts.path.rsplit("/", 1)[-1]
    if parts.query:
        filename = f"{filename}?{parts.query}"
    return Origin(host.lower().rstrip("."), filename)


@lru_cache(maxsize=1)
def _suffix_list():
    from publicsuffixlist import PublicSuffixList

    return PublicSuffixList(only_icann=True)


def is_ip_literal(host: str) -> bool:
    try:
        ipaddress.ip_address(host.strip("[]"))
    except ValueError:
        return False
    return True


@lru_cache(maxsize=65536)
def first_level_domain(host: str) -> str:
    """Registrable domain of ``host`` per the bundled public-suffix snapshot.

    IP literals are their own domain. Hosts without a registrable part
    (single labels, bare suffixes) are returned unchanged and logged.
    """
    host = host.lower().rstrip(".")
    if is_ip_literal(host):
        return host
    registrable = _suffix_list().privatesuffix(host)
    if registrable is None:
        log.warning("no registrable domain for host %r; using it unchanged", host)
        return host
    return registrable


@dataclass(frozen=True)
class Observation:
    gid: int
    sid: int
    oid: int
    raw_name: str
    group: str | None
    origin_url: str


@dataclass(frozen=True)
class ScriptRecord:
    origin_url: str
    script_domain: str
    filename: str
    oid: int
    observations: tuple[Observation, ...]
    signature: str
    score: int
    groups: frozenset[str]

    @property
    def tokens(self) -> list[str]:
        return self.signature.split(SEPARATOR) if self.signature else []

    @property
    def sig_len(self) -> int:
        return self.signature.count(SEPARATOR) + 1 if self.signature else 0

    @property
    def is_inline(self) -> bool:
        return self.filename == ""


@dataclass(frozen=True)
class PageRecord:
    page_domain: str
    trace_id: str
    page_score: int
    scripts: tuple[ScriptRecord, ...]
    page_signature: str


@dataclass(frozen=True)
class ScanDataset:
    scan_id: str
    created_at: str | None
    pages: dict[str, PageRecord] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.pages)

    def iter_scripts(self):
        """Yield ``(page, script)`` pairs in page-domain then origin order."""
        for domain in sorted(self.pages):
            page = self.pages[domain]
            for script in page.scripts:
                yield page, script

    def script_count(self) -> int:
        return sum(len(p.scripts) for p in self.pages.values())
