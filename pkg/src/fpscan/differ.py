"""Two-scan comparison: page change flags and cross-scan script re-identification."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .ctph import ctph_compare, ctph_hash
from .model import PageRecord, ScanDataset, ScriptRecord
from .parallel import pmap
from .similarity import similarity


@dataclass(frozen=True)
class PageDiffProfile:
    script_count: int
    origin_concat: str
    sig_len_list: tuple[int, ...]
    score_list: tuple[int, ...]
    score_min: int
    score_max: int
    score_avg: float
    score_sum: int

    @classmethod
    def of(cls, page: PageRecord) -> "PageDiffProfile":
        scripts = sorted(page.scripts, key=lambda s: s.origin_url)
        scores = sorted(s.score for s in scripts)
        return cls(
            script_count=len(scripts),
            origin_concat="\n".join(s.origin_url for s in scripts),
            sig_len_list=tuple(sorted(s.sig_len for s in scripts)),
            score_list=tuple(scores),
            score_min=min(scores, default=0),
            score_max=max(scores, default=0),
            score_avg=sum(scores) / len(scores) if scores else 0.0,
            score_sum=sum(scores),
        )


@dataclass(frozen=True)
class PageDiffFlags:
    is_equal: bool
    is_same_scripts: bool
    is_same_score: bool


def compare_profiles(a: PageDiffProfile, b: PageDiffProfile) -> PageDiffFlags:
    same_shape = (
        a.script_count == b.script_count
        and a.score_min == b.score_min
        and a.score_max == b.score_max
    )
    is_same_scripts = same_shape and a.score_sum == b.score_sum and a.origin_concat == b.origin_concat
    return PageDiffFlags(
        is_equal=is_same_scripts and a.sig_len_list == b.sig_len_list,
        is_same_scripts=is_same_scripts,
        is_same_score=same_shape and a.score_list == b.score_list,
    )


def compare_pages(page_a: PageRecord, page_b: PageRecord) -> PageDiffFlags:
    if page_a.page_domain != page_b.page_domain:
        raise ValueError(f"cannot compare {page_a.page_domain!r} with {page_b.page_domain!r}")
    return compare_profiles(PageDiffProfile.of(page_a), PageDiffProfile.of(page_b))


@dataclass
class ScriptDiff:
    common: list[tuple[ScriptRecord, ScriptRecord]]
    only_a: list[ScriptRecord]
    only_b: list[ScriptRecord]

    @property
    def intersection(self) -> list[str]:
        return [a.origin_url for a, _ in self.common]

    @property
    def symmetric_difference(self) -> list[str]:
        return sorted(s.origin_url for s in self.only_a + self.only_b)


def diff_scripts(page_a: PageRecord, page_b: PageRecord) -> ScriptDiff:
    """Split two pages' scripts into shared and distinct origins."""
    a = {s.origin_url: s for s in page_a.scripts}
    b = {s.origin_url: s for s in page_b.scripts}
    common = [(a[u], b[u]) for u in sorted(a.keys() & b.keys())]
    only_a = [a[u] for u in sorted(a.keys() - b.keys())]
    only_b = [b[u] for u in sorted(b.keys() - a.keys())]
    return ScriptDiff(common, only_a, only_b)


class MatchCategory(str, Enum):
    SAME = "origin-same-behavior-same"
    BEHAVIOR_CHANGED = "origin-same-behavior-changed"
    FILENAME_CHANGED = "filename-changed"
    DOMAIN_CHANGED = "domain-changed"
    BOTH_CHANGED = "both-changed"


@dataclass(frozen=True)
class CrossScanMatch:
    script_a: ScriptRecord
    script_b: ScriptRecord
    category: MatchCategory
    similarity: float | None = None
    metric: str | None = None
    page_domain: str = ""

    def to_row(self) -> dict:
        return {
            "category": self.category.value,
            "origin_a": self.script_a.origin_url,
            "origin_b": self.script_b.origin_url,
            "score_a": self.script_a.score,
            "score_b": self.script_b.score,
            "similarity": "" if self.similarity is None else f"{self.similarity:.6f}",
            "metric": self.metric or "",
            "page_domain": self.page_domain,
        }


def origin_category(a: ScriptRecord, b: ScriptRecord) -> MatchCategory:
    same_domain = a.script_domain.lower() == b.script_domain.lower()
    same_file = a.filename == b.filename
    if same_domain and same_file:
        if a.signature == b.signature:
            return MatchCategory.SAME
        return MatchCategory.BEHAVIOR_CHANGED
    if same_domain:
        return MatchCategory.FILENAME_CHANGED
    if same_file:
        return MatchCategory.DOMAIN_CHANGED
    return MatchCategory.BOTH_CHANGED


def _changed_parts(a: ScriptRecord, b: ScriptRecord) -> int:
    return (a.script_domain.lower() != b.script_domain.lower()) + (a.filename != b.filename)


def match_changed_origins(
    scripts_a: Sequence[ScriptRecord],
    scripts_b: Sequence[ScriptRecord],
    page_domain: str = "",
) -> list[CrossScanMatch]:
    """Re-identify scripts whose origin changed but whose signature did not.

    Each script is used at most once. Candidates are taken greedily: longest
    signature first, then fewest changed origin parts, then URL order.
    Scripts without any mapped observation never match.
    """
    by_sig: dict[str, list[ScriptRecord]] = {}
    for b in scripts_b:
        if b.signature:
            by_sig.setdefault(b.signature, []).append(b)
    candidates = []
    for a in scripts_a:
        for b in by_sig.get(a.signature, ()):
            if a.origin_url == b.origin_url:
                continue
            candidates.append((-a.sig_len, _changed_parts(a, b), a.origin_url, b.origin_url, a, b))
    candidates.sort(key=lambda c: c[:4])
    used_a: set[str] = set()
    used_b: set[str] = set()
    out = []
    for *_, a, b in candidates:
        if a.origin_url in used_a or b.origin_url in used_b:
            continue
        used_a.add(a.origin_url)
        used_b.add(b.origin_url)
        out.append(CrossScanMatch(a, b, origin_category(a, b), page_domain=page_domain))
    return out


def _signature_hash(sig: str):
    return ctph_hash(sig.encode("utf-8"))


def preselect_by_fuzzy(sig_a: str, sig_b: str, min_score: int = 95, max_len_diff: float = 0.10) -> bool:
    """Fuzzy pre-match of two signatures.

    True when the CTPH score of the signature strings exceeds ``min_score``,
    both use the same feature groups, and their token counts differ by at most
    ``max_len_diff`` of the shorter one.
    """
    if not sig_a or not sig_b:
        return False
    ta, tb = sig_a.split(";"), sig_b.split(";")
    if set(ta) != set(tb):
        return False
    if abs(len(ta) - len(tb)) > max_len_diff * min(len(ta), len(tb)):
        return False
    return ctph_compare(_signature_hash(sig_a), _signature_hash(sig_b)) > min_score


@dataclass(frozen=True)
class SimilarityCriteria:
    min_length: int = 20
    threshold: float = 0.95
    max_group_diff: int = 1
    max_len_diff: float = 0.05


def accept_similar(a: ScriptRecord, b: ScriptRecord, sim: float,
                   criteria: SimilarityCriteria = SimilarityCriteria()) -> bool:
    la, lb = a.sig_len, b.sig_len
    if la <= criteria.min_length or lb <= criteria.min_length:
        return False
    if sim <= criteria.threshold:
        return False
    group_diff = len(a.groups ^ b.groups)
    if group_diff > criteria.max_group_diff:
        return False
    return (
        la == lb
        or len(a.groups) == len(b.groups)
        or abs(la - lb) <= criteria.max_len_diff * min(la, lb)
    )


def similar_signature_matches(
    scripts_a: Sequence[ScriptRecord],
    scripts_b: Sequence[ScriptRecord],
    metric: str = "cosine",
    criteria: SimilarityCriteria = SimilarityCriteria(),
    page_domain: str = "",
) -> list[CrossScanMatch]:
    """Pair scripts whose signatures are similar but not identical."""
    candidates = []
    for a in scripts_a:
        if a.sig_len <= criteria.min_length:
            continue
        for b in scripts_b:
            if b.sig_len <= criteria.min_length or a.origin_url == b.origin_url:
                continue
            sim = similarity(a.tokens, b.tokens, metric)
            if accept_similar(a, b, sim, criteria):
                candidates.append((-sim, -min(a.sig_len, b.sig_len), a.origin_url, b.origin_url, sim, a, b))
    candidates.sort(key=lambda c: c[:4])
    used_a: set[str] = set()
    used_b: set[str] = set()
    out = []
    for *_, sim, a, b in candidates:
        if a.origin_url in used_a or b.origin_url in used_b:
            continue
        used_a.add(a.origin_url)
        used_b.add(b.origin_url)
        out.append(CrossScanMatch(a, b, origin_category(a, b), sim, metric, page_domain))
    return out


# -- whole-scan diff --------------------------------------------------------


@dataclass
class PageDiffResult:
    page_domain: str
    flags: PageDiffFlags
    matches: list[CrossScanMatch]
    unmatched_a: int
    unmatched_b: int


def diff_page(args) -> PageDiffResult:
    page_a, page_b, metric, use_similar = args
    flags = compare_pages(page_a, page_b)
    diff = diff_scripts(page_a, page_b)
    domain = page_a.page_domain
    matches = [CrossScanMatch(a, b, origin_category(a, b), page_domain=domain) for a, b in diff.common]
    exact = match_changed_origins(diff.only_a, diff.only_b, domain)
    matches += exact
    left_a = [s for s in diff.only_a if s.origin_url not in {m.script_a.origin_url for m in exact}]
    left_b = [s for s in diff.only_b if s.origin_url not in {m.script_b.origin_url for m in exact}]
    if use_similar and left_a and left_b:
        similar = similar_signature_matches(left_a, left_b, metric, page_domain=domain)
        matches += similar
        done_a = {m.script_a.origin_url for m in similar}
        done_b = {m.script_b.origin_url for m in similar}
        left_a = [s for s in left_a if s.origin_url not in done_a]
        left_b = [s for s in left_b if s.origin_url not in done_b]
    return PageDiffResult(domain, flags, matches, len(left_a), len(left_b))


@dataclass
class ScanDiff:
    pages: list[PageDiffResult]
    only_in_a: list[str]
    only_in_b: list[str]
    metric: str
    min_both_changed_score: int = 3
    summary: dict = field(default_factory=dict)

    def matches(self, filtered: bool = True) -> list[CrossScanMatch]:
        out = [m for p in self.pages for m in p.matches]
        if filtered:
            out = [
                m for m in out
                if m.category is not MatchCategory.BOTH_CHANGED
                or m.script_a.score >= self.min_both_changed_score
            ]
        return out


def diff_scans(
    scan_a: ScanDataset,
    scan_b: ScanDataset,
    metric: str = "cosine",
    use_similar: bool = True,
    min_both_changed_score: int = 3,
    workers: int = 1,
) -> ScanDiff:
    common = sorted(scan_a.pages.keys() & scan_b.pages.keys())
    jobs = [(scan_a.pages[d], scan_b.pages[d], metric, use_similar) for d in common]
    pages = pmap(diff_page, jobs, workers)
    result = ScanDiff(
        pages=pages,
        only_in_a=sorted(scan_a.pages.keys() - scan_b.pages.keys()),
        only_in_b=sorted(scan_b.pages.keys() - scan_a.pages.keys()),
        metric=metric,
        min_both_changed_score=min_both_changed_score,
    )
    result.summary = summarize(result)
    return result


def summarize(diff: ScanDiff) -> dict:
    categories = {c.value: 0 for c in MatchCategory}
    similar = 0
    for m in diff.matches(filtered=True):
        categories[m.category.value] += 1
        similar += m.similarity is not None
    raw_both = sum(
        1 for m in diff.matches(filtered=False) if m.category is MatchCategory.BOTH_CHANGED
    )
    return {
        "pages_compared": len(diff.pages),
        "pages_only_in_a": len(diff.only_in_a),
        "pages_only_in_b": len(diff.only_in_b),
        "not_is_equal": sum(not p.flags.is_equal for p in diff.pages),
        "not_is_same_scripts": sum(not p.flags.is_same_scripts for p in diff.pages),
        "not_is_same_score": sum(not p.flags.is_same_score for p in diff.pages),
        "unchanged_pages": sum(p.flags.is_equal for p in diff.pages),
        "matches_by_category": categories,
        "similarity_matches": similar,
        "both_changed_filtered_out": raw_both - categories[MatchCategory.BOTH_CHANGED.value],
        "unmatched_a": sum(p.unmatched_a for p in diff.pages),
        "unmatched_b": sum(p.unmatched_b for p in diff.pages),
    }
