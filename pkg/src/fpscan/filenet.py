"""File-based networks: extract script bodies from captures, fuzzy-hash and cluster them."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .ctph import ROLLING_WINDOW, FuzzyHash, eliminate_sequences, ctph_compare, ctph_hash
from .ingest import TrafficCapture, TrafficExchange
from .model import OriginParseError, ScanDataset, parse_origin
from .networks import SignatureNetwork
from .parallel import UnionFind, chunked, pmap

log = logging.getLogger(__name__)

KEY_LIMIT = 256


@dataclass(frozen=True)
class ExtractedScript:
    page_domain: str
    script_domain: str
    script_score: int
    filename: str
    body: bytes = field(repr=False)

    @property
    def key(self) -> str:
        return f"{self.page_domain}_{self.script_domain}_{self.script_score}_{self.filename}"

    @property
    def member_key(self) -> str:
        return f"{self.script_domain}:{self.filename}"


@dataclass
class ExtractionReport:
    extracted: int = 0
    no_capture: int = 0
    inline_skipped: int = 0
    unmatched: int = 0
    empty_body: int = 0
    key_too_long: int = 0

    def to_dict(self) -> dict:
        return dict(vars(self))


def exchange_index(capture: TrafficCapture) -> dict[tuple[str, str], list[TrafficExchange]]:
    index: dict[tuple[str, str], list[TrafficExchange]] = {}
    for ex in capture.exchanges:
        try:
            origin = parse_origin(ex.request.url)
        except OriginParseError:
            continue
        index.setdefault((origin.script_domain, origin.filename), []).append(ex)
    return index


def pick_exchange(candidates: Sequence[TrafficExchange]) -> TrafficExchange:
    """First 200 response, otherwise the first candidate."""
    for ex in candidates:
        if ex.response.status_code == 200:
            return ex
    return candidates[0]


def extract_scripts(
    dataset: ScanDataset,
    captures: Mapping[str, TrafficCapture],
    key_limit: int | None = None,
) -> tuple[list[ExtractedScript], ExtractionReport]:
    """Pair each page script with the captured response that delivered it.

    Matching is exact on host and filename (query included). Inline scripts
    have no file of their own and are skipped. With ``key_limit`` set, keys
    of that many characters or more are excluded, as a file system with a
    name-length cap would force.
    """
    report = ExtractionReport()
    out = []
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
            body = pick_exchange(candidates).response.body
            if not body:
                report.empty_body += 1
                continue
            extracted = ExtractedScript(domain, script.script_domain, script.score, script.filename, body)
            if key_limit is not None and len(extracted.key) >= key_limit:
                report.key_too_long += 1
                continue
            out.append(extracted)
    report.extracted = len(out)
    out.sort(key=lambda s: s.key)
    return out, report


# -- matching and clustering ------------------------------------------------


@dataclass(frozen=True)
class FileMatch:
    a: ExtractedScript
    b: ExtractedScript
    match_score: int

    def to_row(self) -> dict:
        return {
            "filename_a": self.a.filename,
            "domain_a": self.a.script_domain,
            "score_a": self.a.script_score,
            "page_a": self.a.page_domain,
            "filename_b": self.b.filename,
            "domain_b": self.b.script_domain,
            "score_b": self.b.script_score,
            "page_b": self.b.page_domain,
            "match_score": self.match_score,
        }


@dataclass
class FileNetwork:
    members: list[ExtractedScript]
    matches: list[FileMatch]
    network_id: str = ""

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def same_match_score(self) -> bool:
        return len({m.match_score for m in self.matches}) <= 1

    @property
    def same_script_score(self) -> bool:
        return len({s.script_score for s in self.members}) == 1

    @property
    def same_domain(self) -> bool:
        return len({s.script_domain for s in self.members}) == 1

    @property
    def same_filename(self) -> bool:
        return len({s.filename for s in self.members}) == 1

    def member_keys(self) -> list[str]:
        return sorted({s.member_key for s in self.members})

    def to_row(self) -> dict:
        scores = [s.script_score for s in self.members]
        return {
            "network_id": self.network_id,
            "size": self.size,
            "files": len(self.member_keys()),
            "pages": len({s.page_domain for s in self.members}),
            "avg_script_score": f"{sum(scores) / len(scores):.4f}",
            "same_match_score": self.same_match_score,
            "same_script_score": self.same_script_score,
            "same_domain": self.same_domain,
            "same_filename": self.same_filename,
            "example": self.member_keys()[0],
        }


def _hash_body(body: bytes) -> str:
    return str(ctph_hash(body))


def _compare_chunk(args) -> list[tuple[int, int, int]]:
    pairs, hashes, threshold = args
    out = []
    for i, j in pairs:
        score = ctph_compare(hashes[i], hashes[j])
        if score >= threshold:
            out.append((i, j, score))
    return out


def _index_keys(h: FuzzyHash) -> set[tuple]:
    d1, d2 = eliminate_sequences(h.digest1), eliminate_sequences(h.digest2)
    keys: set[tuple] = {("eq", h.block_size, d1)}
    for bs, digest in ((h.block_size, d1), (h.block_size * 2, d2)):
        for i in range(len(digest) - ROLLING_WINDOW + 1):
            keys.add((bs, digest[i : i + ROLLING_WINDOW]))
    return keys


def candidate_pairs(hashes: Sequence[FuzzyHash]) -> list[tuple[int, int]]:
    """Hash pairs that can score above zero.

    A non-zero score needs equal first digests at one block size or a shared
    7-character substring between digests taken at the same block size, so
    pairs are drawn from an inverted index over exactly those keys.
    """
    index: dict[tuple, list[int]] = {}
    for i, h in enumerate(hashes):
        for key in _index_keys(h):
            index.setdefault(key, []).append(i)
    pairs: set[tuple[int, int]] = set()
    for ids in index.values():
        pairs.update(combinations(ids, 2))
    return sorted(pairs)


def match_files(
    scripts: Sequence[ExtractedScript], threshold: int = 95, workers: int = 1
) -> list[FileMatch]:
    """All unordered script pairs whose match score reaches ``threshold``."""
    if not 1 <= threshold <= 100:
        raise ValueError("threshold must be in [1, 100]")
    hashes = pmap(_hash_body, [s.body for s in scripts], workers)
    # identical hash strings always score 100, so compare each distinct hash once
    uniq: dict[str, list[int]] = {}
    for i, h in enumerate(hashes):
        uniq.setdefault(h, []).append(i)
    keys = list(uniq)
    pairs = candidate_pairs([FuzzyHash.parse(h) for h in keys])
    jobs = [(chunk, keys, threshold) for chunk in chunked(pairs, 2048)]
    hash_matches = [m for part in pmap(_compare_chunk, jobs, workers) for m in part]

    pair_scores: dict[tuple[int, int], int] = {}
    for idx in uniq.values():
        for i, j in combinations(idx, 2):
            pair_scores[(i, j)] = 100
    for hi, hj, score in hash_matches:
        for i in uniq[keys[hi]]:
            for j in uniq[keys[hj]]:
                pair_scores[(min(i, j), max(i, j))] = score
    return [FileMatch(scripts[i], scripts[j], s) for (i, j), s in sorted(pair_scores.items())]


def build_file_networks(
    scripts: Sequence[ExtractedScript],
    threshold: int = 95,
    workers: int = 1,
    matches: Sequence[FileMatch] | None = None,
) -> list[FileNetwork]:
    """Transitive clusters of matching files; singletons are dropped."""
    scripts = sorted(scripts, key=lambda s: s.key)
    if matches is None:
        matches = match_files(scripts, threshold, workers)
    position = {s: i for i, s in enumerate(scripts)}
    uf = UnionFind(len(scripts))
    for m in matches:
        uf.union(position[m.a], position[m.b])
    root_of = {i: uf.find(i) for i in range(len(scripts))}
    by_root: dict[int, list[FileMatch]] = {}
    for m in matches:
        by_root.setdefault(root_of[position[m.a]], []).append(m)
    networks = []
    for group in uf.groups():
        if len(group) < 2:
            continue
        networks.append(FileNetwork([scripts[i] for i in group], by_root.get(root_of[group[0]], [])))
    networks.sort(key=lambda n: (-n.size, n.members[0].key))
    for i, network in enumerate(networks, 1):
        network.network_id = f"FB{i:04d}"
    return networks


# -- signature-based vs file-based ------------------------------------------


@dataclass(frozen=True)
class NetworkOverlap:
    score: int
    sb_id: str
    fb_id: str
    n_sb: int
    n_fb: int
    intersection: int
    union: int
    example: str

    def to_row(self) -> dict:
        return {
            "score": self.score,
            "sb_network": self.sb_id,
            "fb_network": self.fb_id,
            "n_sb": self.n_sb,
            "n_fb": self.n_fb,
            "intersection": self.intersection,
            "union": self.union,
            "example": self.example,
        }


def compare_networks(
    signature_networks: Iterable[SignatureNetwork],
    file_networks: Iterable[FileNetwork],
    min_sb_score: int = 15,
) -> list[NetworkOverlap]:
    """Overlap of signature-based and file-based networks on ``domain:filename`` keys.

    Only signature networks scoring above ``min_sb_score`` are considered.
    Pairs without a shared key are not reported.
    """
    file_sets = [(fb.network_id, set(fb.member_keys())) for fb in file_networks]
    rows = []
    for sb in signature_networks:
        if sb.network_score <= min_sb_score:
            continue
        sb_keys = set(sb.member_keys())
        for fb_id, fb_keys in file_sets:
            common = sb_keys & fb_keys
            if not common:
                continue
            rows.append(NetworkOverlap(
                score=sb.network_score,
                sb_id=sb.network_id,
                fb_id=fb_id,
                n_sb=len(sb_keys),
                n_fb=len(fb_keys),
                intersection=len(common),
                union=len(sb_keys | fb_keys),
                example=min(common),
            ))
    rows.sort(key=lambda r: (-r.score, r.sb_id, r.fb_id))
    return rows
