"""Hand-built worked-example fixtures shared by unit and acceptance tests."""

from __future__ import annotations

from fpscan.catalog import default_catalog
from fpscan.model import Observation, ScanDataset
from fpscan.signatures import build_page, build_script

TRACKER = "http://tracker.com/fp.js"
MAIN = "http://example.com/main.js"

# (gid, sid, oid, raw name, origin)
EXAMPLE_OBSERVATIONS = [
    (0, 0, 0, "navigator.userAgent", TRACKER),
    (1, 0, 1, "screen.height", MAIN),
    (2, 1, 0, "getImageData()", TRACKER),
    (3, 1, 1, "screen.width", MAIN),
    (4, 2, 0, "drawArrays()", TRACKER),
    (5, 3, 0, "fillText()", TRACKER),
]


def example_observations(catalog=None) -> list[Observation]:
    catalog = catalog or default_catalog()
    return [
        Observation(gid, sid, oid, raw, catalog.group_of(raw), url)
        for gid, sid, oid, raw, url in EXAMPLE_OBSERVATIONS
    ]


def example_scripts(catalog=None):
    catalog = catalog or default_catalog()
    obs = example_observations(catalog)
    by_url: dict[str, list[Observation]] = {}
    for o in obs:
        by_url.setdefault(o.origin_url, []).append(o)
    return {url: build_script(url, items[0].oid, items, catalog) for url, items in by_url.items()}


def example_page(catalog=None):
    return build_page("example.com", example_scripts(catalog).values(), trace_id="t-0001")


def example_dataset(catalog=None) -> ScanDataset:
    page = example_page(catalog)
    return ScanDataset("example", None, {page.page_domain: page})
