"""Script/page signatures, scores and activity ratings."""

from __future__ import annotations

from collections import Counter
from enum import Enum
from typing import Iterable, Sequence

from .catalog import FeatureCatalog, default_catalog
from .model import (
    SEPARATOR,
    Observation,
    PageRecord,
    ScanDataset,
    ScriptRecord,
    parse_origin,
)


class SignatureError(ValueError):
    pass


class ActivityRating(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


def compute_script_signature(observations: Sequence[Observation]) -> str:
    """Join the mapped feature groups of one script's observations in sID order."""
    if not observations:
        return ""
    origins = {o.origin_url for o in observations}
    if len(origins) > 1:
        raise SignatureError(f"observations span {len(origins)} origins: {sorted(origins)}")
    ordered = sorted(observations, key=lambda o: o.sid)
    return SEPARATOR.join(o.group for o in ordered if o.group)


def tokenize(signature: str) -> list[str]:
    return signature.split(SEPARATOR) if signature else []


def compute_script_score(signature: str) -> int:
    return len(set(tokenize(signature)))


def _url_key(script: ScriptRecord) -> bytes:
    return script.origin_url.encode("utf-8")


def order_scripts(scripts: Iterable[ScriptRecord], order: str = "url") -> list[ScriptRecord]:
    if order == "url":
        return sorted(scripts, key=_url_key)
    if order == "oid":
        return sorted(scripts, key=lambda s: (s.oid, _url_key(s)))
    raise ValueError(f"unknown script order {order!r}")


def compute_page_signature(scripts: Iterable[ScriptRecord], order: str = "url") -> str:
    parts = [s.signature for s in order_scripts(scripts, order) if s.signature]
    return SEPARATOR.join(parts)


def compute_page_score(scripts: Iterable[ScriptRecord]) -> int:
    groups: set[str] = set()
    for script in scripts:
        groups |= script.groups
    return len(groups)


def build_script(
    origin_url: str,
    oid: int,
    observations: Iterable[Observation],
    catalog: FeatureCatalog | None = None,
) -> ScriptRecord:
    catalog = catalog or default_catalog()
    obs = tuple(sorted(observations, key=lambda o: o.sid))
    for o in obs:
        if o.group is not None and o.group not in catalog:
            raise SignatureError(f"observation group {o.group!r} is not in the catalog")
    signature = compute_script_signature(obs)
    groups = frozenset(tokenize(signature))
    domain, filename = parse_origin(origin_url)
    return ScriptRecord(
        origin_url=origin_url,
        script_domain=domain,
        filename=filename,
        oid=oid,
        observations=obs,
        signature=signature,
        score=len(groups),
        groups=groups,
    )


def build_page(
    page_domain: str,
    scripts: Iterable[ScriptRecord],
    trace_id: str = "",
    order: str = "url",
) -> PageRecord:
    ordered = tuple(order_scripts(scripts, "url"))
    return PageRecord(
        page_domain=page_domain,
        trace_id=trace_id,
        page_score=compute_page_score(ordered),
        scripts=ordered,
        page_signature=compute_page_signature(ordered, order),
    )


def rate_activity(score: int) -> ActivityRating:
    if score < 0:
        raise ValueError(f"negative score {score}")
    if score < 3:
        return ActivityRating.LOW
    if score <= 6:
        return ActivityRating.MEDIUM
    return ActivityRating.HIGH


def activity_distribution(scripts: ScanDataset | Iterable[ScriptRecord]) -> dict:
    """Count scripts per activity rating.

    Accepts a dataset (every script of every page) or any iterable of
    scripts. Percentages are of the total and rounded to 4 decimals for
    reporting; the raw counts are exact.
    """
    if isinstance(scripts, ScanDataset):
        scripts = (s for _, s in scripts.iter_scripts())
    counts = Counter(rate_activity(s.score) for s in scripts)
    total = sum(counts.values())
    out = {"total": total, "ratings": {}}
    for rating in ActivityRating:
        n = counts.get(rating, 0)
        out["ratings"][rating.value] = {
            "count": n,
            "percent": round(100.0 * n / total, 4) if total else 0.0,
        }
    return out
