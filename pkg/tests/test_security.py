from __future__ import annotations

import pytest

from conftest import make_dataset, make_page
from fpscan.catalog import default_catalog
from fpscan.ingest import Request, Response, TrafficCapture, TrafficExchange
from fpscan.security import (
    SECURITY_HEADERS,
    TransportGroup,
    audit_headers,
    classify_scripts,
    classify_transport,
    security_audit,
)
from fpscan.synth import SynthConfig, generate

GROUPS = default_catalog().names


def _ex(url, status=200, headers=(), flow="f"):
    host = url.split("/")[2]
    return TrafficExchange(flow, Request("GET", url, host), Response(status, tuple(headers), b"x"))


@pytest.mark.parametrize(
    "url, status, headers, strict, group",
    [
        ("https://a.com/x.js", 200, (), False, "secure"),
        ("http://a.com/x.js", 200, (), False, "insecure"),
        ("http://a.com/x.js", 301, (("Location", "https://a.com/x.js"),), False, "redirects"),
        ("http://a.com/x.js", 302, (("location", "https://a.com/x.js"),), True, "redirects"),
        ("http://a.com/x.js", 307, (("Location", "https://a.com/x.js"),), False, "redirects"),
        ("http://a.com/x.js", 307, (("Location", "https://a.com/x.js"),), True, "insecure"),
        ("http://a.com/x.js", 301, (("Location", "http://b.com/x.js"),), False, "insecure"),
        ("http://a.com/x.js", 301, (), False, "insecure"),
        ("https://a.com/x.js", 301, (("Location", "https://b.com/"),), False, "secure"),
    ],
)
def test_classify_transport(url, status, headers, strict, group):
    assert classify_transport(_ex(url, status, headers), strict) is TransportGroup(group)


def test_headers_case_insensitive():
    exs = [
        _ex("https://a.com/1.js", headers=(("strict-transport-security", "max-age=1"),)),
        _ex("https://a.com/2.js", headers=(("X-CONTENT-TYPE-OPTIONS", "nosniff"),
                                           ("Strict-Transport-Security", "max-age=1"))),
        _ex("https://a.com/3.js"),
        _ex("https://a.com/4.js"),
    ]
    audit = audit_headers({"secure": exs})
    assert audit.counts["secure"]["Strict-Transport-Security"] == 2
    assert audit.percentages()["secure"]["Strict-Transport-Security"] == 50.0
    assert audit.percentages()["secure"]["X-Content-Type-Options"] == 25.0
    assert audit.percentages()["insecure"]["Referrer-Policy"] == 0.0


def test_redirect_yields_two_matches():
    page = make_page("p.com", {"http://a.com/x.js": GROUPS[:8], "https://b.com/y.js": GROUPS[:2]})
    capture = TrafficCapture("p.com", (
        _ex("http://a.com/x.js", 301, (("Location", "https://a.com/x.js"),), "1"),
        _ex("https://a.com/x.js", 200, (), "2"),
        _ex("https://b.com/y.js", 200, (), "3"),
    ))
    report = classify_scripts(make_dataset([page]), {"p.com": capture})
    # the https follow-up shares host and filename, so it is a secure match of its own
    assert {g: len(v) for g, v in report.groups.items()} == {"secure": 2, "insecure": 0, "redirects": 1}


def test_missing_capture_and_unmatched():
    page = make_page("p.com", {"https://a.com/x.js": GROUPS[:3], "https://a.com/": GROUPS[:1]})
    other = make_page("q.com", {"https://a.com/x.js": GROUPS[:3]})
    capture = TrafficCapture("p.com", ())
    audit = security_audit(make_dataset([page, other]), {"p.com": capture})
    assert (audit["matches"], audit["unmatched_scripts"], audit["inline_skipped"], audit["no_capture"]) == (0, 1, 1, 1)
    assert audit["transport"]["secure"] == {"count": 0, "percent": 0.0}


def test_planted_mix_recovered():
    config = SynthConfig(
        seed=5, pages=25, noise_scripts=19, network_count=0, events_pages=0,
        transport={"secure": 0.85, "insecure": 0.10, "redirects": 0.05},
        headers={"Strict-Transport-Security": 0.30, "X-Content-Type-Options": 0.30,
                 "Content-Security-Policy": 0.05, "Referrer-Policy": 0.016},
    )
    out = generate(config)
    audit = security_audit(out.scan_a, out.captures)
    truth = out.truth
    assert audit["matches"] == truth.transport["matches"]
    for group in ("secure", "insecure", "redirects"):
        assert audit["transport"][group]["count"] == truth.transport[group]
    counts = {h: sum(audit["headers"]["counts"][g][h] for g in audit["headers"]["counts"]) for h in SECURITY_HEADERS}
    assert counts == truth.headers["counts"]
    assert audit["intersections"] == truth.intersections
    assert sum(sum(v.values()) for v in audit["activity"].values()) == audit["matches"]
