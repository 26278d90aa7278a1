"""Transport security and security-header audit of fingerprinting-script responses."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping
from urllib.parse import urlsplit

from .filenet import exchange_index
from .ingest import TrafficCapture, TrafficExchange
from .model import ScanDataset
from .signatures import ActivityRating, rate_activity

log = logging.getLogger(__name__)

SECURITY_HEADERS = (
    "X-Content-Type-Options",
    "Referrer-Policy",
    "Content-Security-Policy",
    "Strict-Transport-Security",
)
REDIRECT_CODES = frozenset({301, 302})
EXTENDED_REDIRECT_CODES = frozenset({301, 302, 307, 308})


class TransportGroup(str, Enum):
    SECURE = "secure"
    INSECURE = "insecure"
    REDIRECTS = "redirects"


def classify_transport(exchange: TrafficExchange, strict_paper_mode: bool = False) -> TransportGroup:
    """Secure for https, redirects for an http request bounced to https, else insecure.

    The scheme comes from the captured request URL only. 307/308 count as
    redirects unless ``strict_paper_mode`` restricts them to 301/302.
    """
    scheme = urlsplit(exchange.request.url).scheme.lower()
    if scheme == "https":
        return TransportGroup.SECURE
    codes = REDIRECT_CODES if strict_paper_mode else EXTENDED_REDIRECT_CODES
    if scheme == "http" and exchange.response.status_code in codes:
        location = (exchange.response.header("Location") or "").strip()
        if location.lower().startswith("https://"):
            return TransportGroup.REDIRECTS
        log.warning("flow %s: redirect without absolute https Location (%r)",
                    exchange.flow_id, location)
    return TransportGroup.INSECURE


@dataclass
class HeaderAudit:
    counts: dict[str, dict[str, int]]
    totals: dict[str, int]

    def percentages(self) -> dict[str, dict[str, float]]:
        out = {}
        for group, total in self.totals.items():
            out[group] = {
                h: round(100.0 * n / total, 4) if total else 0.0
                for h, n in self.counts[group].items()
            }
        return out

    def overall(self) -> dict[str, float]:
        total = sum(self.totals.values())
        return {
            h: round(100.0 * sum(c[h] for c in self.counts.values()) / total, 4) if total else 0.0
            for h in SECURITY_HEADERS
        }

    def to_dict(self) -> dict:
        return {
            "totals": self.totals,
            "counts": self.counts,
            "percent": self.percentages(),
            "overall_percent": self.overall(),
        }


def audit_headers(exchanges_by_group: Mapping[TransportGroup | str, Iterable[TrafficExchange]]) -> HeaderAudit:
    """Count responses carrying each audited header, per transport group."""
    counts = {g.value: {h: 0 for h in SECURITY_HEADERS} for g in TransportGroup}
    totals = {g.value: 0 for g in TransportGroup}
    for group, exchanges in exchanges_by_group.items():
        name = TransportGroup(group).value
        for ex in exchanges:
            totals[name] += 1
            present = {k.lower() for k, _ in ex.response.headers}
            for header in SECURITY_HEADERS:
                if header.lower() in present:
                    counts[name][header] += 1
    return HeaderAudit(counts, totals)


@dataclass
class ScriptExchange:
    page_domain: str
    script_domain: str
    filename: str
    score: int
    exchange: TrafficExchange


@dataclass
class TransportReport:
    matched: list[ScriptExchange] = field(default_factory=list)
    groups: dict[str, list[ScriptExchange]] = field(default_factory=dict)
    unmatched: int = 0
    inline_skipped: int = 0
    no_capture: int = 0


def classify_scripts(
    dataset: ScanDataset,
    captures: Mapping[str, TrafficCapture],
    strict_paper_mode: bool = False,
) -> TransportReport:
    """Match page scripts to captured exchanges on host and filename, then classify.

    A script requested more than once yields one match per exchange.
    """
    report = TransportReport(groups={g.value: [] for g in TransportGroup})
    for domain in sorted(dataset.pages):
        page = dataset.pages[domain]
        capture = captures.get(domain)
        if capture is None:
            report.no_capture += len(page.scripts)
            continue
        index = exchange_index(capture)
        for script in page.scripts:
            if script.is_inline:
                report.inline_skipped += 1
                continue
            candidates = index.get((script.script_domain, script.filename))
            if not candidates:
                report.unmatched += 1
                continue
            # every captured request for the script is a match of its own
            for ex in candidates:
                item = ScriptExchange(domain, script.script_domain, script.filename, script.score, ex)
                report.matched.append(item)
                report.groups[classify_transport(ex, strict_paper_mode).value].append(item)
    return report


def group_intersections(groups: Mapping[str, Iterable[ScriptExchange]]) -> dict[str, list[str]]:
    """Script domains served through more than one transport group."""
    domains = {
        TransportGroup(g).value: {item.script_domain for item in items}
        for g, items in groups.items()
    }
    sec = domains.get("secure", set())
    ins = domains.get("insecure", set())
    red = domains.get("redirects", set())
    return {
        "insecure&secure": sorted(ins & sec),
        "redirects&secure": sorted(red & sec),
        "redirects&insecure": sorted(red & ins),
    }


def score_distribution_by_group(groups: Mapping[str, Iterable[ScriptExchange]]) -> dict[str, dict[str, int]]:
    """Low/Medium/High script counts within each transport group."""
    out = {}
    for g in TransportGroup:
        counts = {r.value: 0 for r in ActivityRating}
        for item in groups.get(g.value, ()):
            counts[rate_activity(item.score).value] += 1
        out[g.value] = counts
    return out


def security_audit(
    dataset: ScanDataset,
    captures: Mapping[str, TrafficCapture],
    strict_paper_mode: bool = False,
) -> dict:
    """Full audit report: groups, header percentages, intersections, activity."""
    report = classify_scripts(dataset, captures, strict_paper_mode)
    total = len(report.matched)
    group_counts = {g: len(items) for g, items in report.groups.items()}
    headers = audit_headers({g: [i.exchange for i in items] for g, items in report.groups.items()})
    return {
        "matches": total,
        "unmatched_scripts": report.unmatched,
        "inline_skipped": report.inline_skipped,
        "no_capture": report.no_capture,
        "strict_paper_mode": strict_paper_mode,
        "transport": {
            g: {"count": n, "percent": round(100.0 * n / total, 4) if total else 0.0}
            for g, n in group_counts.items()
        },
        "headers": headers.to_dict(),
        "intersections": group_intersections(report.groups),
        "activity": score_distribution_by_group(report.groups),
    }
