"""Monitor-log and traffic-capture ingestion, page filtering, relational snapshot."""

from __future__ import annotations

import base64
import gzip
import json
import logging
import os
import sqlite3
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .catalog import FeatureCatalog, default_catalog
from .model import Observation, OriginParseError, PageRecord, ScanDataset, ScriptRecord
from .signatures import build_page, build_script

log = logging.getLogger(__name__)

LOG_SCHEMA_VERSION = 1
SNAPSHOT_VERSION = 1
TRAFFIC_PREFIX = "traffic_"
TRAFFIC_SUFFIX = ".json.gz"


class IngestError(Exception):
    pass


class MalformedRecord(ValueError):
    pass


class TrafficLogError(IngestError):
    def __init__(self, path: Path | str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason


class SnapshotVersionError(IngestError):
    def __init__(self, found: object, expected: int = SNAPSHOT_VERSION):
        super().__init__(
            f"snapshot schema version {found} is not supported by this build "
            f"(expects version {expected})"
        )
        self.found = found
        self.expected = expected


@dataclass
class IngestReport:
    lines: int = 0
    blank: int = 0
    parsed: int = 0
    skipped: int = 0
    malformed: int = 0
    superseded: int = 0
    score_mismatch: int = 0
    group_fallback: int = 0
    bad_origins: int = 0
    errors: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lines": self.lines,
            "blank": self.blank,
            "parsed": self.parsed,
            "skipped": self.skipped,
            "malformed": self.malformed,
            "superseded": self.superseded,
            "score_mismatch": self.score_mismatch,
            "group_fallback": self.group_fallback,
            "bad_origins": self.bad_origins,
            "errors": self.errors[:50],
        }


def _as_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise MalformedRecord(f"{what} must be a non-negative integer, got {value!r}")
    return value


def _resolve_group(raw_name: str, logged: str | None, catalog: FeatureCatalog, report: IngestReport):
    group = catalog.group_of(raw_name)
    if group is None and logged is not None and logged in catalog:
        # collector knew a mapping our catalog lacks; keep its answer
        report.group_fallback += 1
        group = logged
    return group


def parse_record(record: dict, catalog: FeatureCatalog, report: IngestReport) -> PageRecord:
    """Turn one decoded JSONL record into a PageRecord."""
    if not isinstance(record, dict):
        raise MalformedRecord("record is not an object")
    version = record.get("schema_version")
    if version != LOG_SCHEMA_VERSION:
        raise MalformedRecord(f"unsupported schema_version {version!r}")
    page_domain = record.get("page_domain")
    if not isinstance(page_domain, str) or not page_domain:
        raise MalformedRecord("missing page_domain")
    trace_id = record.get("trace_id", "")
    if not isinstance(trace_id, str):
        raise MalformedRecord("trace_id must be a string")
    scripts_in = record.get("scripts")
    if not isinstance(scripts_in, list):
        raise MalformedRecord("scripts must be a list")

    scripts: list[ScriptRecord] = []
    seen_gids: set[int] = set()
    for entry in scripts_in:
        if not isinstance(entry, dict):
            raise MalformedRecord("script entry is not an object")
        origin_url = entry.get("origin_url")
        if not isinstance(origin_url, str):
            raise MalformedRecord("script without origin_url")
        oid = _as_int(entry.get("oid"), "oid")
        obs_in = entry.get("observations")
        if not isinstance(obs_in, list):
            raise MalformedRecord("observations must be a list")
        observations = []
        sids: set[int] = set()
        for o in obs_in:
            if not isinstance(o, dict):
                raise MalformedRecord("observation is not an object")
            gid = _as_int(o.get("gid"), "gid")
            sid = _as_int(o.get("sid"), "sid")
            raw_name = o.get("raw_name")
            if not isinstance(raw_name, str):
                raise MalformedRecord("observation without raw_name")
            logged = o.get("group")
            if logged is not None and not isinstance(logged, str):
                raise MalformedRecord("group must be a string or null")
            if sid in sids or gid in seen_gids:
                raise MalformedRecord(f"duplicate ordinal in {origin_url}")
            sids.add(sid)
            seen_gids.add(gid)
            observations.append(
                Observation(
                    gid=gid,
                    sid=sid,
                    oid=oid,
                    raw_name=raw_name,
                    group=_resolve_group(raw_name, logged, catalog, report),
                    origin_url=origin_url,
                )
            )
        try:
            scripts.append(build_script(origin_url, oid, observations, catalog))
        except OriginParseError:
            report.bad_origins += 1

    page = build_page(page_domain, scripts, trace_id=trace_id)
    logged_score = record.get("page_score")
    if isinstance(logged_score, int) and logged_score != page.page_score:
        report.score_mismatch += 1
    return page


def parse_monitor_log(
    path: str | Path,
    catalog: FeatureCatalog | None = None,
    scan_id: str | None = None,
) -> tuple[ScanDataset, IngestReport]:
    """Parse a newline-delimited JSON observation log.

    Malformed lines are counted and skipped. When a page domain occurs more
    than once the last record wins.
    """
    catalog = catalog or default_catalog()
    path = Path(path)
    report = IngestReport()
    pages: dict[str, PageRecord] = {}
    created_at = None
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IngestError(f"cannot read monitor log {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            report.lines += 1
            if not raw.strip():
                report.blank += 1
                continue
            try:
                record = json.loads(raw)
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                report.malformed += 1
                report.errors.append(f"line {lineno}: {exc.__class__.__name__}")
                continue
            if isinstance(record, dict) and record.get("type", "log_score") != "log_score":
                if record.get("type") == "scan_meta":
                    created_at = record.get("created_at", created_at)
                report.skipped += 1
                continue
            try:
                page = parse_record(record, catalog, report)
            except MalformedRecord as exc:
                report.malformed += 1
                report.errors.append(f"line {lineno}: {exc}")
                continue
            if page.page_domain in pages:
                report.superseded += 1
                del pages[page.page_domain]
            pages[page.page_domain] = page
            report.parsed += 1
    ordered = {d: pages[d] for d in sorted(pages)}
    return ScanDataset(scan_id or path.stem, created_at, ordered), report


def page_to_record(page: PageRecord) -> dict:
    """Inverse of :func:`parse_record`, in the JSONL log layout."""
    return {
        "schema_version": LOG_SCHEMA_VERSION,
        "trace_id": page.trace_id,
        "page_domain": page.page_domain,
        "page_score": page.page_score,
        "scripts": [
            {
                "origin_url": s.origin_url,
                "oid": s.oid,
                "observations": [
                    {"gid": o.gid, "sid": o.sid, "raw_name": o.raw_name, "group": o.group}
                    for o in s.observations
                ],
            }
            for s in sorted(page.scripts, key=lambda s: s.oid)
        ],
    }


def write_monitor_log(pages: Iterable[PageRecord], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for page in pages:
            fh.write(json.dumps(page_to_record(page), separators=(",", ":")))
            fh.write("\n")
    return path


def filter_pages(dataset: ScanDataset, min_page_score: int = 10) -> ScanDataset:
    kept = {d: p for d, p in dataset.pages.items() if p.page_score >= min_page_score}
    dropped = len(dataset.pages) - len(kept)
    if dropped:
        log.info("page-score filter (>= %d) dropped %d pages", min_page_score, dropped)
    return ScanDataset(dataset.scan_id, dataset.created_at, kept)


# -- traffic captures -------------------------------------------------------


def _header_pairs(value, what: str) -> tuple[tuple[str, str], ...]:
    if value is None:
        return ()
    if isinstance(value, dict):
        value = list(value.items())
    try:
        return tuple((str(k), str(v)) for k, v in value)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{what} headers malformed") from exc


def header_value(headers: Iterable[tuple[str, str]], name: str) -> str | None:
    name = name.lower()
    for key, value in headers:
        if key.lower() == name:
            return value
    return None


@dataclass(frozen=True)
class Request:
    method: str
    url: str
    host: str
    headers: tuple[tuple[str, str], ...] = ()

    def header(self, name: str) -> str | None:
        return header_value(self.headers, name)


@dataclass(frozen=True)
class Response:
    status_code: int
    headers: tuple[tuple[str, str], ...] = ()
    body: bytes = b""

    def header(self, name: str) -> str | None:
        return header_value(self.headers, name)


@dataclass(frozen=True)
class TrafficExchange:
    flow_id: str
    request: Request
    response: Response


@dataclass(frozen=True)
class TrafficCapture:
    page_domain: str
    exchanges: tuple[TrafficExchange, ...]


def traffic_filename(page_domain: str) -> str:
    return f"{TRAFFIC_PREFIX}{page_domain}{TRAFFIC_SUFFIX}"


def page_domain_from_filename(path: str | Path) -> str:
    name = Path(path).name
    if not (name.startswith(TRAFFIC_PREFIX) and name.endswith(TRAFFIC_SUFFIX)):
        raise TrafficLogError(path, "file name does not match traffic_<page_domain>.json.gz")
    return name[len(TRAFFIC_PREFIX) : -len(TRAFFIC_SUFFIX)]


def _exchange(flow_id: str, flow: dict) -> TrafficExchange:
    req, resp = flow["request"], flow["response"]
    url = str(req["url"])
    host = req.get("host")
    if not host:
        from urllib.parse import urlsplit

        host = urlsplit(url).hostname or ""
    status = resp["status_code"]
    if isinstance(status, bool) or not isinstance(status, int) or not 100 <= status <= 599:
        raise ValueError(f"flow {flow_id}: status_code {status!r} out of range")
    body_b64 = resp.get("body_b64") or ""
    return TrafficExchange(
        flow_id=str(flow_id),
        request=Request(
            method=str(req.get("method", "GET")),
            url=url,
            host=str(host).lower(),
            headers=_header_pairs(req.get("headers"), "request"),
        ),
        response=Response(
            status_code=status,
            headers=_header_pairs(resp.get("headers"), "response"),
            body=base64.b64decode(body_b64, validate=True),
        ),
    )


def load_traffic_log(path: str | Path) -> TrafficCapture:
    """Load one GZIP-compressed JSON capture (flow_id -> request/response)."""
    path = Path(path)
    page_domain = page_domain_from_filename(path)
    try:
        with gzip.open(path, "rb") as fh:
            payload = json.loads(fh.read())
    except (OSError, EOFError, zlib.error, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise TrafficLogError(path, f"{exc.__class__.__name__}: {exc}") from exc
    if not isinstance(payload, dict):
        raise TrafficLogError(path, "top level is not a flow map")
    exchanges = []
    try:
        for flow_id, flow in payload.items():
            exchanges.append(_exchange(flow_id, flow))
    except (KeyError, TypeError, ValueError) as exc:
        raise TrafficLogError(path, f"malformed flow: {exc}") from exc
    return TrafficCapture(page_domain, tuple(exchanges))


def dump_traffic_log(capture: TrafficCapture, directory: str | Path) -> Path:
    payload = {}
    for ex in capture.exchanges:
        payload[ex.flow_id] = {
            "request": {
                "method": ex.request.method,
                "url": ex.request.url,
                "host": ex.request.host,
                "headers": [list(h) for h in ex.request.headers],
            },
            "response": {
                "status_code": ex.response.status_code,
                "headers": [list(h) for h in ex.response.headers],
                "body_b64": base64.b64encode(ex.response.body).decode("ascii"),
            },
        }
    path = Path(directory) / traffic_filename(capture.page_domain)
    data = json.dumps(payload, sort_keys=False).encode("utf-8")
    # mtime=0 keeps the archive bytes reproducible
    with open(path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as fh:
        fh.write(data)
    return path


@dataclass
class TrafficLoadReport:
    loaded: int = 0
    missing: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "loaded": self.loaded,
            "missing": len(self.missing),
            "failed": len(self.failed),
            "failed_pages": dict(sorted(self.failed.items())),
        }


def load_traffic_dir(
    directory: str | Path, page_domains: Iterable[str]
) -> tuple[dict[str, TrafficCapture], TrafficLoadReport]:
    """Load captures for ``page_domains``; missing or corrupt ones are recorded."""
    directory = Path(directory)
    report = TrafficLoadReport()
    captures: dict[str, TrafficCapture] = {}
    for domain in sorted(page_domains):
        path = directory / traffic_filename(domain)
        if not path.exists():
            report.missing.append(domain)
            continue
        try:
            captures[domain] = load_traffic_log(path)
        except TrafficLogError as exc:
            log.warning("skipping capture: %s", exc)
            report.failed[domain] = exc.reason
            continue
        report.loaded += 1
    return captures, report


# -- relational snapshot ----------------------------------------------------

_SCHEMA = """
CREATE TABLE meta (key TEXT PRIMARY KEY, value TEXT);
CREATE TABLE fpcategories (
    id INTEGER PRIMARY KEY, name TEXT UNIQUE NOT NULL, rating TEXT NOT NULL);
CREATE TABLE fpscores (
    id INTEGER PRIMARY KEY, page_domain TEXT UNIQUE NOT NULL, trace_id TEXT NOT NULL,
    page_score INTEGER NOT NULL, page_signature TEXT NOT NULL);
CREATE TABLE fpscriptorigins (
    id INTEGER PRIMARY KEY, url TEXT NOT NULL, script_domain TEXT NOT NULL,
    filename TEXT NOT NULL, oid INTEGER NOT NULL, signature TEXT NOT NULL,
    score INTEGER NOT NULL);
CREATE TABLE fpscriptfunctioncalls (
    id INTEGER PRIMARY KEY, gid INTEGER NOT NULL, sid INTEGER NOT NULL,
    raw_name TEXT NOT NULL,
    fpscriptorigin_id INTEGER NOT NULL REFERENCES fpscriptorigins(id),
    fpcategory_id INTEGER REFERENCES fpcategories(id));
CREATE TABLE fpscores_fpscriptorigins (
    fpscore_id INTEGER NOT NULL REFERENCES fpscores(id),
    fpscriptorigin_id INTEGER UNIQUE NOT NULL REFERENCES fpscriptorigins(id));
CREATE TABLE fpscriptorigins_fpcategories (
    fpscriptorigin_id INTEGER NOT NULL REFERENCES fpscriptorigins(id),
    fpcategory_id INTEGER NOT NULL REFERENCES fpcategories(id),
    PRIMARY KEY (fpscriptorigin_id, fpcategory_id));
CREATE INDEX idx_calls_origin ON fpscriptfunctioncalls(fpscriptorigin_id);
CREATE INDEX idx_origins_url ON fpscriptorigins(url);
"""


def persist_snapshot(
    dataset: ScanDataset, path: str | Path, catalog: FeatureCatalog | None = None
) -> Path:
    """Write ``dataset`` as a single-file SQLite store (atomic replace)."""
    catalog = catalog or default_catalog()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if tmp.exists():
        tmp.unlink()
    con = sqlite3.connect(tmp)
    try:
        con.executescript(_SCHEMA)
        con.executemany(
            "INSERT INTO meta VALUES (?, ?)",
            [
                ("snapshot_version", str(SNAPSHOT_VERSION)),
                ("scan_id", dataset.scan_id),
                ("created_at", json.dumps(dataset.created_at)),
                ("catalog_version", str(catalog.version)),
            ],
        )
        cat_ids = {}
        for i, group in enumerate(catalog.groups, 1):
            cat_ids[group.name] = i
            con.execute("INSERT INTO fpcategories VALUES (?, ?, ?)", (i, group.name, group.rating.value))
        origin_id = 0
        call_id = 0
        calls, links, assoc = [], [], []
        for page_id, domain in enumerate(sorted(dataset.pages), 1):
            page = dataset.pages[domain]
            con.execute(
                "INSERT INTO fpscores VALUES (?, ?, ?, ?, ?)",
                (page_id, page.page_domain, page.trace_id, page.page_score, page.page_signature),
            )
            for script in page.scripts:
                origin_id += 1
                con.execute(
                    "INSERT INTO fpscriptorigins VALUES (?, ?, ?, ?, ?, ?, ?)",
                    (origin_id, script.origin_url, script.script_domain, script.filename,
                     script.oid, script.signature, script.score),
                )
                links.append((page_id, origin_id))
                for group in sorted(script.groups):
                    assoc.append((origin_id, cat_ids[group]))
                for o in script.observations:
                    call_id += 1
                    calls.append((call_id, o.gid, o.sid, o.raw_name, origin_id,
                                  cat_ids.get(o.group) if o.group else None))
        con.executemany("INSERT INTO fpscriptfunctioncalls VALUES (?, ?, ?, ?, ?, ?)", calls)
        con.executemany("INSERT INTO fpscores_fpscriptorigins VALUES (?, ?)", links)
        con.executemany("INSERT INTO fpscriptorigins_fpcategories VALUES (?, ?)", assoc)
        con.commit()
    finally:
        con.close()
    os.replace(tmp, path)
    return path


def load_snapshot(path: str | Path) -> ScanDataset:
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"snapshot {path} does not exist")
    con = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
    try:
        try:
            meta = dict(con.execute("SELECT key, value FROM meta"))
        except sqlite3.DatabaseError as exc:
            raise IngestError(f"{path} is not a snapshot: {exc}") from exc
        found = meta.get("snapshot_version")
        if found != str(SNAPSHOT_VERSION):
            raise SnapshotVersionError(found)
        categories = dict(con.execute("SELECT id, name FROM fpcategories"))
        calls: dict[int, list] = {}
        for gid, sid, raw_name, oid_ref, cat in con.execute(
            "SELECT gid, sid, raw_name, fpscriptorigin_id, fpcategory_id "
            "FROM fpscriptfunctioncalls ORDER BY id"
        ):
            calls.setdefault(oid_ref, []).append((gid, sid, raw_name, categories.get(cat)))
        scripts: dict[int, list[ScriptRecord]] = {}
        for page_id, origin_id, url, domain, filename, oid, signature, score in con.execute(
            "SELECT l.fpscore_id, o.id, o.url, o.script_domain, o.filename, o.oid, "
            "o.signature, o.score FROM fpscriptorigins o "
            "JOIN fpscores_fpscriptorigins l ON l.fpscriptorigin_id = o.id ORDER BY o.id"
        ):
            obs = tuple(
                Observation(gid=g, sid=s, oid=oid, raw_name=r, group=c, origin_url=url)
                for g, s, r, c in calls.get(origin_id, [])
            )
            groups = frozenset(signature.split(";")) if signature else frozenset()
            scripts.setdefault(page_id, []).append(
                ScriptRecord(url, domain, filename, oid, obs, signature, score, groups)
            )
        pages = {}
        for page_id, domain, trace_id, page_score, page_signature in con.execute(
            "SELECT id, page_domain, trace_id, page_score, page_signature FROM fpscores ORDER BY page_domain"
        ):
            pages[domain] = PageRecord(domain, trace_id, page_score,
                                       tuple(scripts.get(page_id, [])), page_signature)
    finally:
        con.close()
    return ScanDataset(meta.get("scan_id", path.stem), json.loads(meta.get("created_at", "null")), pages)
