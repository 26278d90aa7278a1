"""Command-line front-end: ``fpscan <subcommand> ...``.

Exit codes: 0 success, 1 fatal input error, 2 usage or validation error.
Every run writes its reports atomically plus a ``manifest.json`` with
versions, thresholds and input digests.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sqlite3
import sys
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .catalog import CatalogError, FeatureCatalog, load_catalog
from .differ import diff_scans
from .events import aggregate_handlers, read_handler_log
from .filenet import KEY_LIMIT, build_file_networks, compare_networks, extract_scripts, match_files
from .ingest import (
    LOG_SCHEMA_VERSION,
    SNAPSHOT_VERSION,
    IngestError,
    filter_pages,
    load_snapshot,
    load_traffic_dir,
    parse_monitor_log,
    persist_snapshot,
)
from .model import ScanDataset
from .networks import (
    NetworkParams,
    attribute_actor,
    build_networks,
    load_alias_map,
    load_domain_list,
    network_properties,
)
from .security import security_audit
from .signatures import activity_distribution, rate_activity
from .similarity import METRICS
from .synth import SynthConfig, SynthConfigError, generate, write_outputs

log = logging.getLogger("fpscan")

SNAPSHOT_NAME = "snapshot.sqlite"


class InputError(Exception):
    """Unreadable or unusable input: exit code 1."""


class ValidationError(Exception):
    """Bad flag values or config: exit code 2."""


# -- output helpers -----------------------------------------------------------


def atomic_write(path: Path, data: bytes) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return path


def to_json(payload) -> bytes:
    return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")


def to_csv(rows: Sequence[dict], columns: Sequence[str]) -> bytes:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(row.get(k)) for k in columns})
    return buf.getvalue().encode("utf-8")


def _cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return "|".join(str(v) for v in value)
    return "" if value is None else value


class Outputs:
    """Collects written files for the manifest."""

    def __init__(self, directory: Path, fmt: str):
        self.dir = directory
        self.fmt = fmt
        self.written: list[Path] = []

    def json(self, name: str, payload) -> None:
        self.written.append(atomic_write(self.dir / name, to_json(payload)))

    def table(self, stem: str, rows: Sequence[dict], columns: Sequence[str]) -> None:
        if self.fmt == "json":
            data = [{k: r.get(k) for k in columns} for r in rows]
            self.written.append(atomic_write(self.dir / f"{stem}.json", to_json(data)))
        else:
            self.written.append(atomic_write(self.dir / f"{stem}.csv", to_csv(rows, columns)))

    def add(self, path: Path) -> None:
        self.written.append(path)


def sha256_path(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for p in sorted(q for q in path.rglob("*") if q.is_file()):
            h.update(p.relative_to(path).as_posix().encode("utf-8") + b"\0")
            h.update(bytes.fromhex(sha256_path(p)))
        return h.hexdigest()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Outputs, args: argparse.Namespace, inputs: Iterable[Path], catalog: FeatureCatalog) -> None:
    thresholds = {
        k: getattr(args, k)
        for k in (
            "min_page_score", "min_script_score", "min_overlap_tokens", "min_overlap_ratio",
            "match_threshold", "metric", "min_sb_score", "min_both_changed_score",
            "strict_paper_mode", "seed", "format",
        )
        if hasattr(args, k)
    }
    manifest = {
        "command": args.command,
        "versions": {
            "fpscan": __version__,
            "catalog": catalog.version,
            "log_schema": LOG_SCHEMA_VERSION,
            "snapshot_schema": SNAPSHOT_VERSION,
        },
        "thresholds": thresholds,
        "inputs": {str(p): sha256_path(p) for p in inputs},
        "outputs": {
            p.relative_to(out.dir).as_posix(): sha256_path(p)
            for p in sorted(set(out.written))
        },
    }
    atomic_write(out.dir / "manifest.json", to_json(manifest))


# -- input helpers ------------------------------------------------------------


def _is_sqlite(path: Path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(16) == b"SQLite format 3\x00"


def load_scan(path: Path, catalog: FeatureCatalog, min_page_score: int) -> ScanDataset:
    """Read a snapshot file, a JSONL monitor log, or a directory holding one."""
    if not path.exists():
        raise InputError(f"{path}: no such file or directory")
    if path.is_dir():
        if (path / SNAPSHOT_NAME).is_file():
            path = path / SNAPSHOT_NAME
        else:
            logs = sorted(path.glob("*.jsonl"))
            if len(logs) != 1:
                raise InputError(f"{path}: expected {SNAPSHOT_NAME} or exactly one *.jsonl log")
            path = logs[0]
    try:
        if _is_sqlite(path):
            dataset = load_snapshot(path)
        else:
            dataset, report = parse_monitor_log(path, catalog)
            if report.malformed:
                log.warning("%s: %d malformed records skipped", path, report.malformed)
    except IngestError as exc:
        raise InputError(str(exc)) from exc
    return filter_pages(dataset, min_page_score)


def load_captures(directory: Path, dataset: ScanDataset):
    if not directory.is_dir():
        raise InputError(f"{directory}: traffic directory not found")
    captures, report = load_traffic_dir(directory, dataset.pages)
    return captures, report


def network_params(args) -> NetworkParams:
    try:
        return NetworkParams(args.min_script_score, args.min_overlap_tokens, args.min_overlap_ratio)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


# -- table builders -----------------------------------------------------------

NETWORK_COLUMNS = (
    "network_id", "score", "size", "sig_len", "files", "members", "actor_class",
    "actor_domain", "typical_names", "script_domains", "shared_signature",
)
SIGNATURE_COLUMNS = ("page_domain", "origin_url", "script_domain", "filename", "score", "rating", "sig_len", "signature")
PAGE_COLUMNS = ("page_domain", "trace_id", "page_score", "scripts", "page_signature")
DIFF_PAGE_COLUMNS = ("page_domain", "is_equal", "is_same_scripts", "is_same_score")
MATCH_COLUMNS = ("category", "origin_a", "origin_b", "score_a", "score_b", "similarity", "metric", "page_domain")
FILE_MATCH_COLUMNS = (
    "filename_a", "domain_a", "score_a", "page_a", "filename_b", "domain_b", "score_b", "page_b", "match_score",
)
FILE_NETWORK_COLUMNS = (
    "network_id", "size", "files", "pages", "avg_script_score", "same_match_score",
    "same_script_score", "same_domain", "same_filename", "example",
)
SBFB_COLUMNS = ("score", "sb_network", "fb_network", "n_sb", "n_fb", "intersection", "union", "example")


def network_rows(networks, cdns, aliases) -> list[dict]:
    rows = []
    for net in networks:
        row = network_properties(net)
        actor = attribute_actor(net, cdns, aliases=aliases).to_dict()
        row["actor_class"] = actor["class"]
        row["actor_domain"] = actor["actor_domain"]
        row["actor_evidence"] = actor["evidence"]
        row["member_origins"] = sorted({f"{p} {s.origin_url}" for p, s in net.members})
        rows.append(row)
    return rows


def _networks(args, dataset):
    params = network_params(args)
    cdns = load_domain_list(args.cdn_list) if args.cdn_list else set()
    aliases = load_alias_map(args.alias_map) if args.alias_map else {}
    nets = build_networks(dataset, params, workers=args.workers)
    return nets, network_rows(nets, cdns, aliases)


def signature_rows(dataset: ScanDataset) -> tuple[list[dict], list[dict]]:
    scripts, pages = [], []
    for domain in sorted(dataset.pages):
        page = dataset.pages[domain]
        pages.append({
            "page_domain": domain,
            "trace_id": page.trace_id,
            "page_score": page.page_score,
            "scripts": len(page.scripts),
            "page_signature": page.page_signature,
        })
        for s in page.scripts:
            scripts.append({
                "page_domain": domain,
                "origin_url": s.origin_url,
                "script_domain": s.script_domain,
                "filename": s.filename,
                "score": s.score,
                "rating": rate_activity(s.score).value,
                "sig_len": s.sig_len,
                "signature": s.signature,
            })
    return scripts, pages


def _diff(args, scan_a, scan_b):
    if args.metric not in METRICS:
        raise ValidationError(f"unknown metric {args.metric}")
    diff = diff_scans(
        scan_a, scan_b, metric=args.metric, use_similar=not args.no_similar,
        min_both_changed_score=args.min_both_changed_score, workers=args.workers,
    )
    page_rows = [
        {"page_domain": p.page_domain, "is_equal": p.flags.is_equal,
         "is_same_scripts": p.flags.is_same_scripts, "is_same_score": p.flags.is_same_score}
        for p in diff.pages
    ]
    match_rows = sorted(
        (m.to_row() for m in diff.matches(filtered=True)),
        key=lambda r: (r["page_domain"], r["origin_a"], r["origin_b"]),
    )
    return diff, page_rows, match_rows


def _filenet(args, dataset, captures, sb_networks):
    if not 1 <= args.match_threshold <= 100:
        raise ValidationError("--match-threshold must be in 1..100")
    key_limit = KEY_LIMIT if args.strict_paper_mode else None
    scripts, report = extract_scripts(dataset, captures, key_limit=key_limit)
    matches = match_files(scripts, args.match_threshold, workers=args.workers)
    fnets = build_file_networks(scripts, args.match_threshold, matches=matches)
    overlap = compare_networks(sb_networks, fnets, args.min_sb_score)
    return scripts, report, matches, fnets, overlap


# -- subcommands --------------------------------------------------------------


def cmd_ingest(args, catalog, out: Outputs) -> list[Path]:
    try:
        dataset, report = parse_monitor_log(args.input, catalog)
    except IngestError as exc:
        raise InputError(str(exc)) from exc
    kept = filter_pages(dataset, args.min_page_score)
    snapshot = out.dir / SNAPSHOT_NAME
    persist_snapshot(kept, snapshot, catalog)
    out.add(snapshot)
    out.json("ingest_report.json", {
        **report.to_dict(),
        "pages_total": len(dataset),
        "pages_kept": len(kept),
        "scripts_kept": kept.script_count(),
        "min_page_score": args.min_page_score,
    })
    return [args.input]


def cmd_signatures(args, catalog, out: Outputs) -> list[Path]:
    dataset = load_scan(args.input, catalog, args.min_page_score)
    scripts, pages = signature_rows(dataset)
    out.table("signatures", scripts, SIGNATURE_COLUMNS)
    out.table("pages", pages, PAGE_COLUMNS)
    out.json("activity.json", activity_distribution(dataset))
    return [args.input]


def cmd_networks(args, catalog, out: Outputs) -> list[Path]:
    dataset = load_scan(args.input, catalog, args.min_page_score)
    _, rows = _networks(args, dataset)
    out.table("networks", rows, NETWORK_COLUMNS)
    out.json("networks.json", {"count": len(rows), "networks": rows})
    return [args.input] + [Path(p) for p in (args.cdn_list, args.alias_map) if p]


def cmd_diff(args, catalog, out: Outputs) -> list[Path]:
    scan_a = load_scan(args.scan_a, catalog, args.min_page_score)
    scan_b = load_scan(args.scan_b, catalog, args.min_page_score)
    diff, page_rows, match_rows = _diff(args, scan_a, scan_b)
    out.table("diff_pages", page_rows, DIFF_PAGE_COLUMNS)
    out.table("diff_matches", match_rows, MATCH_COLUMNS)
    out.json("diff_summary.json", diff.summary)
    return [args.scan_a, args.scan_b]


def cmd_filenet(args, catalog, out: Outputs) -> list[Path]:
    dataset = load_scan(args.input, catalog, args.min_page_score)
    captures, load_report = load_captures(args.traffic, dataset)
    nets, _ = _networks(args, dataset)
    scripts, report, matches, fnets, overlap = _filenet(args, dataset, captures, nets)
    out.table("file_matches", [m.to_row() for m in matches], FILE_MATCH_COLUMNS)
    out.table("file_networks", [n.to_row() for n in fnets], FILE_NETWORK_COLUMNS)
    out.table("sb_vs_fb", [r.to_row() for r in overlap], SBFB_COLUMNS)
    out.json("filenet.json", {
        "traffic": load_report.to_dict(),
        "extraction": report.to_dict(),
        "matches": len(matches),
        "file_networks": len(fnets),
        "covered_scripts": sum(n.size for n in fnets),
        "sb_vs_fb": [r.to_row() for r in overlap],
    })
    return [args.input, args.traffic]


def cmd_security(args, catalog, out: Outputs) -> list[Path]:
    dataset = load_scan(args.input, catalog, args.min_page_score)
    captures, load_report = load_captures(args.traffic, dataset)
    audit = security_audit(dataset, captures, args.strict_paper_mode)
    audit["traffic"] = load_report.to_dict()
    out.json("security.json", audit)
    return [args.input, args.traffic]


def _events(args):
    try:
        records = read_handler_log(args.events)
    except OSError as exc:
        raise InputError(f"{args.events}: {exc}") from exc
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return aggregate_handlers(records, top_n=args.top)


def cmd_events(args, catalog, out: Outputs) -> list[Path]:
    report = _events(args)
    out.json("events.json", report)
    rows = []
    for key in ("top_by_occurrence", "top_by_pages"):
        for rank, r in enumerate(report[key], 1):
            rows.append({"ranking": key, "rank": rank, "handler": r["handler"], "value": r["value"]})
    out.table("events_top", rows, ("ranking", "rank", "handler", "value"))
    return [args.events]


def cmd_synth(args, catalog, out: Outputs) -> list[Path]:
    try:
        data = {}
        if args.config:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
            if not isinstance(data, dict):
                raise SynthConfigError("config must be a JSON object")
        if args.seed is not None:
            data["seed"] = args.seed
        config = SynthConfig.from_dict(data)
    except OSError as exc:
        raise InputError(f"{args.config}: {exc}") from exc
    except (SynthConfigError, json.JSONDecodeError) as exc:
        raise ValidationError(str(exc)) from exc
    result = generate(config, catalog)
    for path in write_outputs(result, config, out.dir):
        out.add(path)
    return [Path(args.config)] if args.config else []


def cmd_report(args, catalog, out: Outputs) -> list[Path]:
    from . import plotting

    inputs = [args.input]
    dataset = load_scan(args.input, catalog, args.min_page_score)
    figures = out.dir / "figures"
    report: dict = {"pages": len(dataset), "scripts": dataset.script_count()}

    activity = activity_distribution(dataset)
    report["activity"] = activity
    out.add(plotting.plot_activity(activity, figures / "activity.png"))

    nets, rows = _networks(args, dataset)
    report["networks"] = rows
    out.table("networks", rows, NETWORK_COLUMNS)
    out.add(plotting.plot_networks(rows, figures / "networks.png"))
    inputs += [Path(p) for p in (args.cdn_list, args.alias_map) if p]

    if args.scan_b:
        scan_b = load_scan(args.scan_b, catalog, args.min_page_score)
        diff, page_rows, match_rows = _diff(args, dataset, scan_b)
        report["diff"] = {"summary": diff.summary, "pages": page_rows, "matches": match_rows}
        out.table("diff_matches", match_rows, MATCH_COLUMNS)
        inputs.append(args.scan_b)

    if args.traffic:
        captures, load_report = load_captures(args.traffic, dataset)
        _, ext, matches, fnets, overlap = _filenet(args, dataset, captures, nets)
        report["filenet"] = {
            "extraction": ext.to_dict(),
            "matches": len(matches),
            "file_networks": [n.to_row() for n in fnets],
            "sb_vs_fb": [r.to_row() for r in overlap],
        }
        out.table("sb_vs_fb", [r.to_row() for r in overlap], SBFB_COLUMNS)
        audit = security_audit(dataset, captures, args.strict_paper_mode)
        audit["traffic"] = load_report.to_dict()
        report["security"] = audit
        out.add(plotting.plot_transport_activity(audit["activity"], figures / "transport_activity.png"))
        out.add(plotting.plot_header_percentages(audit["headers"]["percent"], figures / "security_headers.png"))
        inputs.append(args.traffic)

    if args.events:
        events = _events(args)
        report["events"] = events
        out.add(plotting.plot_top_handlers(events, figures / "top_handlers.png"))
        inputs.append(args.events)

    out.json("report.json", report)
    return inputs


# -- parser -------------------------------------------------------------------


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpscan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--out", type=Path, default=Path("fpscan-out"), help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    common.add_argument("--catalog", type=Path, help="feature-group catalog JSON")
    common.add_argument("--workers", type=_positive, default=1, help="worker processes")
    common.add_argument("--strict-paper-mode", action="store_true",
                        help="301/302-only redirects and the 256-char extraction-key limit")
    common.add_argument("-v", "--verbose", action="store_true")

    scan = argparse.ArgumentParser(add_help=False)
    scan.add_argument("--min-page-score", type=int, default=10)

    net = argparse.ArgumentParser(add_help=False)
    net.add_argument("--min-script-score", type=int, default=6)
    net.add_argument("--min-overlap-tokens", type=int, default=10)
    net.add_argument("--min-overlap-ratio", type=float, default=0.5)
    net.add_argument("--cdn-list", help="file with one CDN domain per line")
    net.add_argument("--alias-map", help="JSON object mapping domains to entity names")

    diff = argparse.ArgumentParser(add_help=False)
    diff.add_argument("--metric", choices=METRICS, default="cosine")
    diff.add_argument("--no-similar", action="store_true", help="exact signature matching only")
    diff.add_argument("--min-both-changed-score", type=int, default=3)

    files = argparse.ArgumentParser(add_help=False)
    files.add_argument("--match-threshold", type=int, default=95)
    files.add_argument("--min-sb-score", type=int, default=15)

    events = argparse.ArgumentParser(add_help=False)
    events.add_argument("--top", type=_positive, default=15)

    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", parents=[common, scan], help="monitor log -> snapshot")
    p.add_argument("input", type=Path)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("signatures", parents=[common, scan], help="script and page signatures")
    p.add_argument("input", type=Path)
    p.set_defaults(func=cmd_signatures)

    p = sub.add_parser("networks", parents=[common, scan, net], help="signature-based networks")
    p.add_argument("input", type=Path)
    p.set_defaults(func=cmd_networks)

    p = sub.add_parser("diff", parents=[common, scan, diff], help="compare two scans")
    p.add_argument("scan_a", type=Path)
    p.add_argument("scan_b", type=Path)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("filenet", parents=[common, scan, net, files], help="file-based networks")
    p.add_argument("input", type=Path)
    p.add_argument("--traffic", type=Path, required=True, help="directory of traffic captures")
    p.set_defaults(func=cmd_filenet)

    p = sub.add_parser("security", parents=[common, scan], help="transport and header audit")
    p.add_argument("input", type=Path)
    p.add_argument("--traffic", type=Path, required=True, help="directory of traffic captures")
    p.set_defaults(func=cmd_security)

    p = sub.add_parser("events", parents=[common, events], help="event-handler statistics")
    p.add_argument("events", type=Path)
    p.set_defaults(func=cmd_events)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic scan pair")
    p.add_argument("dest", type=Path, nargs="?", help="output directory (overrides --out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", type=Path, help="synthetic config JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", parents=[common, scan, net, diff, files, events],
                       help="consolidated JSON report with figures")
    p.add_argument("input", type=Path)
    p.add_argument("--scan-b", type=Path, help="second scan for the diff section")
    p.add_argument("--traffic", type=Path, help="traffic captures for file and security sections")
    p.add_argument("--events", type=Path, help="event-handler JSONL")
    p.set_defaults(func=cmd_report)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "dest", None) is not None:
        args.out = args.dest
    try:
        catalog = load_catalog(args.catalog)
    except (OSError, ValueError, CatalogError) as exc:
        print(f"fpscan: cannot load catalog: {exc}", file=sys.stderr)
        return 1
    out = Outputs(args.out, args.format)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        inputs = args.func(args, catalog, out)
        write_manifest(out, args, inputs, catalog)
    except ValidationError as exc:
        print(f"fpscan: {exc}", file=sys.stderr)
        return 2
    except (InputError, OSError, ValueError, sqlite3.Error) as exc:
        print(f"fpscan: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
