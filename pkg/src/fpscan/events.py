"""Event-handler catalog and aggregation of per-page handler counts."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

METHODS = ("attr", "prop", "jquery")
UNKNOWN = "unknown"
_NAME = re.compile(r"^on[a-z]+$")


@lru_cache(maxsize=1)
def _catalog() -> tuple[str, ...]:
    text = resources.files("fpscan.data").joinpath("event_handlers.json").read_text("utf-8")
    return tuple(sorted(json.loads(text)["handlers"]))


def handler_catalog() -> list[str]:
    """The 109 monitored ``on<event>`` handler names, sorted."""
    return list(_catalog())


def is_handler_name(name: str) -> bool:
    return bool(_NAME.match(name))


@dataclass(frozen=True)
class HandlerCounts:
    page_domain: str
    method: str
    counts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {', '.join(METHODS)}, got {self.method!r}")
        for name, n in self.counts.items():
            if isinstance(n, bool) or not isinstance(n, int) or n < 0:
                raise ValueError(f"{self.page_domain}: count for {name!r} must be a non-negative int")

    @classmethod
    def from_dict(cls, record: dict) -> "HandlerCounts":
        counts = record.get("counts")
        if counts is None:
            counts = {}
        if not isinstance(counts, dict):
            raise ValueError("counts must be an object")
        return cls(str(record["page_domain"]), str(record["method"]), dict(counts))

    def to_dict(self) -> dict:
        return {"page_domain": self.page_domain, "method": self.method, "counts": dict(self.counts)}


def read_handler_log(path: str | Path) -> list[HandlerCounts]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(HandlerCounts.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_handler_log(records: Iterable[HandlerCounts], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")
    return path


def _ranked(counter: Counter, top_n: int) -> list[dict]:
    items = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    return [{"handler": name, "value": value} for name, value in items]


def aggregate_handlers(records: Iterable[HandlerCounts], top_n: int = 15) -> dict:
    """Fold per-page handler counts into totals, per-method tallies and top-N lists.

    A page counts once per method when any handler of that method is
    non-zero, and once per handler for the spread ranking. Names outside
    the catalog are tallied under an unknown bucket and kept out of the
    rankings.
    """
    known = set(_catalog())
    events = {m: 0 for m in METHODS}
    method_pages: dict[str, set[str]] = {m: set() for m in METHODS}
    occurrence: Counter = Counter()
    spread: dict[str, set[str]] = {}
    pages: set[str] = set()
    active: set[str] = set()
    unknown_events = 0
    unknown_names: set[str] = set()

    for r in records:
        pages.add(r.page_domain)
        for name, n in r.counts.items():
            if n <= 0:
                continue
            events[r.method] += n
            method_pages[r.method].add(r.page_domain)
            active.add(r.page_domain)
            if name in known:
                occurrence[name] += n
                spread.setdefault(name, set()).add(r.page_domain)
            else:
                unknown_events += n
                unknown_names.add(name)

    return {
        "pages": len(pages),
        "pages_with_events": len(active),
        "total_events": sum(events.values()),
        "methods": {m: {"events": events[m], "pages": len(method_pages[m])} for m in METHODS},
        "top_by_occurrence": _ranked(occurrence, top_n),
        "top_by_pages": _ranked(Counter({k: len(v) for k, v in spread.items()}), top_n),
        UNKNOWN: {"events": unknown_events, "names": sorted(unknown_names)},
    }
