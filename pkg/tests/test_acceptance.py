"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
"""

from __future__ import annotations

import functools
import itertools
import random
import time

from cli_runner import make_corpus, run_all
from conftest import make_script
from ctph_corpus import config_script, corpus
from fixtures import MAIN, TRACKER, example_page, example_scripts
from fpscan.catalog import default_catalog
from fpscan.differ import MatchCategory, diff_scans, match_changed_origins, preselect_by_fuzzy
from fpscan.ctph import ctph_compare, ctph_hash
from fpscan.events import aggregate_handlers, handler_catalog
from fpscan.filenet import build_file_networks, compare_networks, extract_scripts
from fpscan.ingest import Request, Response, TrafficExchange
from fpscan.networks import build_networks
from fpscan.security import SECURITY_HEADERS, classify_transport, security_audit
from fpscan.signatures import rate_activity
from fpscan.similarity import METRICS, similarity
from fpscan.synth import ChurnConfig, NetworkSpec, SynthConfig, generate
from test_similarity import naive, random_pairs


def criterion(number: int, title: str):
    def wrap(func):
        @functools.wraps(func)
        def inner(*args, **kwargs):
            try:
                func(*args, **kwargs)
            except BaseException:
                print(f"\nFAIL criterion {number}: {title}")
                raise
            print(f"\nPASS criterion {number}: {title}")
        return inner
    return wrap


@criterion(1, "worked-example signatures, scores and page signature")
def test_c1_worked_examples():
    start = time.perf_counter()
    scripts = example_scripts()
    page = example_page()
    assert scripts[TRACKER].signature == "UserAgent;Canvas;WebGL;JS_fonts"
    assert scripts[MAIN].signature == "Screen_window;Screen_window"
    assert (scripts[TRACKER].score, scripts[MAIN].score) == (4, 1)
    assert page.page_score == 5
    assert page.page_signature == "Screen_window;Screen_window;UserAgent;Canvas;WebGL;JS_fonts"
    assert time.perf_counter() - start < 1.0


@criterion(2, "activity-rating boundaries")
def test_c2_rating_boundaries():
    got = [rate_activity(s).value for s in (0, 2, 3, 6, 7, 38)]
    assert got == ["Low", "Low", "Medium", "Medium", "High", "High"]


@criterion(3, "planted-network recovery at default thresholds")
def test_c3_planted_networks():
    out = generate(SynthConfig(seed=1, pages=200, noise_scripts=20, network_count=10, network_members=(5, 50)))
    start = time.perf_counter()
    nets = build_networks(out.scan_a, workers=1)
    elapsed = time.perf_counter() - start
    got = sorted((n.shared_signature, sorted([p, s.origin_url] for p, s in n.members)) for n in nets)
    want = sorted((t["shared_signature"], t["members"]) for t in out.truth.networks)
    assert len(want) == 10
    assert got == want
    assert elapsed < 30.0


@criterion(4, "cross-scan re-identification under churn plus the three worked cases")
def test_c4_reidentification():
    churn = ChurnConfig(cache_buster_rate=0.30, domain_churn_rate=0.05, both_churn_rate=0.02)
    out = generate(SynthConfig(seed=1, churn=churn))
    diff = diff_scans(out.scan_a, out.scan_b)
    got = {(m.page_domain, m.script_a.origin_url): (m.script_b.origin_url, m.category.value)
           for m in diff.matches(filtered=False)}
    truth = out.truth.matches
    assert len(got) == len(truth)
    for t in truth:
        assert got[(t["page_domain"], t["origin_a"])] == (t["origin_b"], t["category"])
    assert {t["category"] for t in truth} >= {"filename-changed", "domain-changed", "both-changed"}

    sig4 = ["UserAgent", "Canvas", "WebGL", "JS_fonts"]
    sig25 = default_catalog().names[:25] * 2
    cases = [
        ("https://cdn.site.com/app.js?v=482158", "https://cdn.site.com/app.js?v=482181", sig4,
         MatchCategory.FILENAME_CHANGED),
        ("https://xqheb9yszyrd.com/fp.js", "https://vk77lnizckm6.com/fp.js", sig4, MatchCategory.DOMAIN_CHANGED),
        ("https://missguided.com/mssgddsdstl.js", "https://missguided.co.uk/jywraijzsxptbytq.js", sig25,
         MatchCategory.BOTH_CHANGED),
    ]
    for url_a, url_b, tokens, category in cases:
        (m,) = match_changed_origins([make_script(url_a, tokens)], [make_script(url_b, tokens)])
        assert m.category is category
    assert make_script(cases[2][0], sig25).score == 25


@criterion(5, "similarity metrics equal the naive oracle; no false negatives against fuzzy pre-selection")
def test_c5_similarity():
    pairs = list(random_pairs(1000))
    for metric in METRICS:
        for a, b in pairs:
            assert abs(similarity(a, b, metric) - naive(a, b, metric)) <= 1e-12

    rng = random.Random(17)
    groups = default_catalog().names
    accepted = 0
    for _ in range(1500):
        base = [rng.choice(groups[: rng.randint(6, 30)]) for _ in range(rng.randint(21, 150))]
        other = list(base)
        for _ in range(rng.randint(1, 6)):
            op, i = rng.randrange(3), rng.randrange(len(other) - 1)
            if op == 0:
                other[i], other[i + 1] = other[i + 1], other[i]
            elif op == 1:
                other.insert(i, rng.choice(base))
            else:
                del other[i]
        if preselect_by_fuzzy(";".join(base), ";".join(other)):
            accepted += 1
            for metric in METRICS:
                assert similarity(base, other, metric) > 0.95
    assert accepted >= 100


@criterion(6, "CTPH hashes and scores identical to the reference implementation")
def test_c6_ctph(libfuzzy):
    files = corpus()
    assert len(files) >= 100
    ours = [str(ctph_hash(f)) for f in files]
    ref = [libfuzzy.hash(f) for f in files]
    assert ours == ref
    for a, b in itertools.combinations(ref, 2):
        assert ctph_compare(a, b) == libfuzzy.compare(a, b)
    h = ctph_hash(config_script("a.com"))
    assert ctph_compare(h, h) == 100
    assert ctph_compare(h, ctph_hash(config_script("b.org"))) >= 95


@criterion(7, "signature- vs file-based network rows match the engineered corpus")
def test_c7_sb_vs_fb():
    config = SynthConfig(
        seed=8, pages=200, noise_scripts=5, events_pages=0,
        networks=(
            NetworkSpec(4, 18, 30, "randomized"),                          # equal pair
            NetworkSpec(2, 20, 30, "randomized", extra_file_members=158),  # SB inside FB
            NetworkSpec(6, 17, 25, "randomized", file_members=3),          # FB inside SB
        ),
    )
    out = generate(config)
    scripts, _ = extract_scripts(out.scan_a, out.captures)
    rows = compare_networks(build_networks(out.scan_a), build_file_networks(scripts))
    fields = ("score", "n_sb", "n_fb", "intersection", "union", "example")
    got = sorted(tuple(getattr(r, f) for f in fields) for r in rows)
    want = sorted(tuple(t[f] for f in fields) for t in out.truth.sbfb_rows)
    assert got == want
    shapes = {(r.n_sb, r.n_fb, r.intersection, r.union) for r in rows}
    assert shapes == {(4, 4, 4, 4), (2, 160, 2, 160), (6, 3, 3, 6)}


@criterion(8, "planted transport and header mix recovered exactly")
def test_c8_security():
    mix = {"secure": 0.85, "insecure": 0.10, "redirects": 0.05}
    headers = {"Strict-Transport-Security": 0.30, "X-Content-Type-Options": 0.30,
               "Content-Security-Policy": 0.05, "Referrer-Policy": 0.016}
    out = generate(SynthConfig(seed=3, pages=25, noise_scripts=19, network_count=0,
                               transport=mix, headers=headers, events_pages=0))
    audit = security_audit(out.scan_a, out.captures)
    assert audit["matches"] == 500
    for group, frac in mix.items():
        assert audit["transport"][group]["percent"] == round(100 * frac, 4)
    for header, frac in headers.items():
        assert audit["headers"]["overall_percent"][header] == round(100 * frac, 4)
    assert set(SECURITY_HEADERS) == set(headers)
    assert audit["intersections"] == out.truth.intersections

    def hop(status):
        return TrafficExchange("f", Request("GET", "http://a.com/x.js", "a.com"),
                               Response(status, (("Location", "https://a.com/x.js"),)))

    for strict in (False, True):
        assert classify_transport(hop(301), strict).value == "redirects"
        assert classify_transport(hop(302), strict).value == "redirects"


@criterion(9, "every subcommand is byte-identical with 1 and 8 workers")
def test_c9_determinism(tmp_path):
    data = make_corpus(tmp_path)
    one = run_all(data, tmp_path / "w1", workers=1)
    eight = run_all(data, tmp_path / "w8", workers=8)
    assert set(one) == {"ingest", "signatures", "networks", "diff", "filenet", "security",
                        "events", "synth", "report"}
    for name in one:
        assert one[name] == eight[name], name


@criterion(10, "event catalog and planted-corpus aggregation")
def test_c10_events():
    names = handler_catalog()
    assert len(names) == 109 and "onclick" in names
    out = generate(SynthConfig(seed=10, pages=5, noise_scripts=1, network_count=0, events_pages=100))
    report = aggregate_handlers(out.events, top_n=15)
    truth = out.truth.events
    assert report["pages"] == len({r.page_domain for r in out.events})
    assert report["total_events"] == truth["total_events"]
    assert report["methods"] == truth["methods"]

    def top(mapping):
        return [{"handler": k, "value": v} for k, v in sorted(mapping.items(), key=lambda kv: (-kv[1], kv[0]))[:15]]

    assert report["top_by_occurrence"] == top(truth["occurrence"])
    assert report["top_by_pages"] == top(truth["spread"])
