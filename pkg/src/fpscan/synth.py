"""Deterministic synthetic scan pairs with planted ground truth.

Everything is drawn from one seeded ``random.Random`` in a fixed order, so a
config always produces byte-identical outputs. Signatures only use catalog
groups; noise scripts stay at score <= 2 so the network prefilter separates
them from planted networks.
"""

from __future__ import annotations

import json
import random
import string
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .catalog import FeatureCatalog, default_catalog
from .events import METHODS, HandlerCounts, handler_catalog
from .ingest import (
    Request,
    Response,
    TrafficCapture,
    TrafficExchange,
)
from .model import Observation, PageRecord, ScanDataset, ScriptRecord, parse_origin
from .networks import longest_common_run
from .security import SECURITY_HEADERS
from .signatures import build_page, build_script

TLDS = ("com", "net", "org", "de", "io", "co.uk")
NAMING = ("shared", "randomized", "self-hosted")
_BODY_ALPHABET = (string.ascii_letters + string.digits + " ;(){}=.,\n\"+-*/<>!&|").encode("ascii")
# maps random bytes onto printable script-like characters
_BODY_TABLE = bytes(_BODY_ALPHABET[i % len(_BODY_ALPHABET)] for i in range(256))


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    members: int
    score: int
    length: int
    naming: str = "shared"
    file_members: int | None = None
    extra_file_members: int = 0


@dataclass(frozen=True)
class ChurnConfig:
    cache_buster_rate: float = 0.0
    domain_churn_rate: float = 0.0
    both_churn_rate: float = 0.0
    perturbation_rate: float = 0.0
    swap_k: int = 1


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 1
    pages: int = 200
    noise_scripts: int = 20
    networks: tuple[NetworkSpec, ...] | None = None
    network_count: int = 10
    network_members: tuple[int, int] = (5, 50)
    network_score: tuple[int, int] = (6, 20)
    network_length: tuple[int, int] = (12, 40)
    affix_max: int = 3
    file_clusters: tuple[int, ...] = ()
    churn: ChurnConfig = ChurnConfig()
    transport: dict = field(default_factory=lambda: {"secure": 1.0, "insecure": 0.0, "redirects": 0.0})
    headers: dict = field(default_factory=dict)
    body_bytes: tuple[int, int] = (1024, 4096)
    events_pages: int = 100
    unknown_handler_rate: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def rate(name, value):
            if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
                raise SynthConfigError(f"{name} must be in [0, 1], got {value!r}")

        if self.pages < 1:
            raise SynthConfigError("pages must be positive")
        if self.noise_scripts < 0:
            raise SynthConfigError("noise_scripts must be non-negative")
        c = self.churn
        for name in ("cache_buster_rate", "domain_churn_rate", "both_churn_rate", "perturbation_rate"):
            rate(f"churn.{name}", getattr(c, name))
        if c.cache_buster_rate + c.domain_churn_rate + c.both_churn_rate + c.perturbation_rate > 1.0 + 1e-12:
            raise SynthConfigError("churn and perturbation rates add up to more than 1")
        if c.swap_k < 1:
            raise SynthConfigError("churn.swap_k must be positive")
        if set(self.transport) - {"secure", "insecure", "redirects"}:
            raise SynthConfigError(f"unknown transport groups {sorted(set(self.transport))}")
        for k, v in self.transport.items():
            rate(f"transport.{k}", v)
        if abs(sum(self.transport.values()) - 1.0) > 1e-9:
            raise SynthConfigError("transport fractions must sum to 1")
        if self.transport.get("redirects", 0.0) >= 1.0:
            raise SynthConfigError("transport.redirects must be below 1")
        known = {h.lower() for h in SECURITY_HEADERS}
        for k, v in self.headers.items():
            if k.lower() not in known:
                raise SynthConfigError(f"unknown security header {k!r}")
            rate(f"headers.{k}", v)
        lo, hi = self.body_bytes
        if not 64 <= lo <= hi:
            raise SynthConfigError("body_bytes must satisfy 64 <= lo <= hi")
        rate("unknown_handler_rate", self.unknown_handler_rate)
        if self.events_pages < 0:
            raise SynthConfigError("events_pages must be non-negative")
        for size in self.file_clusters:
            if not 2 <= size <= self.pages:
                raise SynthConfigError(f"file cluster of {size} needs 2..{self.pages} pages")
        specs = self.networks
        if specs is None:
            for name in ("network_members", "network_score", "network_length"):
                a, b = getattr(self, name)
                if a > b:
                    raise SynthConfigError(f"{name} range is empty")
            if self.network_count < 0:
                raise SynthConfigError("network_count must be non-negative")
            if self.network_count and self.network_members[1] > self.pages:
                raise SynthConfigError("network larger than the page count")
            if self.network_count and (self.network_score[0] < 6 or self.network_length[0] < 10):
                raise SynthConfigError("planted networks need score >= 6 and length >= 10")
            if self.network_score[1] > 40:
                raise SynthConfigError("network_score must not exceed the 40 catalog groups")
            return
        for i, s in enumerate(specs):
            where = f"networks[{i}]"
            if not 2 <= s.members <= self.pages:
                raise SynthConfigError(f"{where}: {s.members} members need 2..{self.pages} pages")
            if not 6 <= s.score <= 40:
                raise SynthConfigError(f"{where}: score must be in 6..40")
            if s.length < max(10, s.score):
                raise SynthConfigError(f"{where}: length must be >= max(10, score)")
            if s.naming not in NAMING:
                raise SynthConfigError(f"{where}: naming must be one of {', '.join(NAMING)}")
            if s.file_members is not None and not (s.file_members == 0 or 2 <= s.file_members <= s.members):
                raise SynthConfigError(f"{where}: file_members must be 0 or 2..members")
            if s.extra_file_members < 0 or s.extra_file_members > self.pages:
                raise SynthConfigError(f"{where}: extra_file_members out of range")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise SynthConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            if "churn" in data:
                data["churn"] = ChurnConfig(**data["churn"])
            if data.get("networks") is not None:
                data["networks"] = tuple(NetworkSpec(**n) for n in data["networks"])
            for key in ("network_members", "network_score", "network_length", "body_bytes", "file_clusters"):
                if key in data:
                    data[key] = tuple(data[key])
            return cls(**data)
        except TypeError as exc:
            raise SynthConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "SynthConfig":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SynthConfigError(f"{path}: {exc}") from exc
        if not isinstance(payload, dict):
            raise SynthConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(payload)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GroundTruth:
    networks: list[dict] = field(default_factory=list)
    matches: list[dict] = field(default_factory=list)
    file_clusters: list[list[list[str]]] = field(default_factory=list)
    sbfb_rows: list[dict] = field(default_factory=list)
    transport: dict = field(default_factory=dict)
    headers: dict = field(default_factory=dict)
    intersections: dict = field(default_factory=dict)
    events: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthOutput:
    scan_a: ScanDataset
    scan_b: ScanDataset
    captures: dict[str, TrafficCapture]
    truth: GroundTruth
    events: list[HandlerCounts]


# -- internal script plan ---------------------------------------------------


@dataclass
class _Script:
    page: str
    origin_url: str
    tokens: list[str]
    body: bytes = b""
    transport: str = "secure"
    cluster: int | None = None  # planted file cluster index


class _Gen:
    def __init__(self, config: SynthConfig, catalog: FeatureCatalog):
        self.cfg = config
        self.rng = random.Random(config.seed)
        self.catalog = catalog
        self.groups = sorted(catalog.names)
        self.used_domains: set[str] = set()

    # names --------------------------------------------------------------

    def label(self, n: int) -> str:
        return "".join(self.rng.choices(string.ascii_lowercase + string.digits, k=n))

    def domain(self, prefix: str = "") -> str:
        while True:
            d = f"{prefix}{self.label(10)}.{self.rng.choice(TLDS)}"
            if d not in self.used_domains:
                self.used_domains.add(d)
                return d

    def filename(self) -> str:
        name = self.label(self.rng.randint(4, 16)) + ".js"
        if self.rng.random() < 0.2:
            name += f"?v={self.rng.randint(100000, 999999)}"
        return name

    # signatures ---------------------------------------------------------

    def template(self, score: int, length: int) -> list[str]:
        chosen = self.rng.sample(self.groups, score)
        tokens = chosen + [self.rng.choice(chosen) for _ in range(length - score)]
        self.rng.shuffle(tokens)
        return tokens

    def noise_tokens(self, first: str) -> list[str]:
        chosen = [first]
        if self.rng.random() < 0.5:
            chosen.append(self.rng.choice([g for g in self.groups if g != first]))
        length = self.rng.randint(len(chosen), 4)
        tokens = chosen + [self.rng.choice(chosen) for _ in range(length - len(chosen))]
        self.rng.shuffle(tokens)
        return tokens

    # bodies ---------------------------------------------------------------

    def body(self) -> bytes:
        size = self.rng.randint(*self.cfg.body_bytes)
        return self.rng.randbytes(size).translate(_BODY_TABLE)

    @staticmethod
    def clone(template: bytes, page: str) -> bytes:
        # one config line differs per site, the rest is byte-identical
        return f'window.__cfg={{site:"{page}"}};\n'.encode("ascii") + template

    # observations -------------------------------------------------------

    def observations(self, origin_url: str, tokens: list[str], oid: int, gid0: int) -> list[Observation]:
        out = []
        for sid, group in enumerate(tokens, 1):
            raw = self.rng.choice(self.catalog[group].members)
            out.append(Observation(gid0 + sid, sid, oid, raw, group, origin_url))
        return out


def _allocate(n: int, fractions: dict[str, float], order: list[str]) -> dict[str, int]:
    """Largest-remainder split of ``n`` items by ``fractions``; ties follow ``order``."""
    raw = {k: fractions.get(k, 0.0) * n for k in order}
    counts = {k: int(v) for k, v in raw.items()}
    rest = round(sum(raw.values())) - sum(counts.values())
    for k in sorted(order, key=lambda k: (-(raw[k] - counts[k]), order.index(k)))[:rest]:
        counts[k] += 1
    return counts


def _transport_counts(n_scripts: int, mix: dict[str, float]) -> dict[str, int]:
    """Script counts per transport so that *exchange* shares hit ``mix``.

    A redirected script is requested twice (the redirect, then the secure
    follow-up), so with r redirects there are n + r exchanges.
    """
    f_red = mix.get("redirects", 0.0)
    r = round(n_scripts * f_red / (1.0 - f_red))
    i = round((n_scripts + r) * mix.get("insecure", 0.0))
    if r + i > n_scripts:
        i = n_scripts - r
    return {"secure": n_scripts - r - i, "insecure": i, "redirects": r}


def generate(config: SynthConfig, catalog: FeatureCatalog | None = None) -> SynthOutput:
    """Build scan A, churned scan B, scan A's traffic, the events corpus and the truth."""
    catalog = catalog or default_catalog()
    g = _Gen(config, catalog)
    rng = g.rng
    truth = GroundTruth()

    page_names = [f"{g.label(8)}{i:04d}.{rng.choice(TLDS)}" for i in range(config.pages)]
    g.used_domains.update(page_names)
    plan: dict[str, list[_Script]] = {p: [] for p in page_names}
    origins: dict[str, set[tuple[str, str]]] = {p: set() for p in page_names}
    signatures: dict[str, set[tuple[str, ...]]] = {p: set() for p in page_names}

    def add(script: _Script) -> bool:
        key = parse_origin(script.origin_url)
        sig = tuple(script.tokens)
        if key in origins[script.page] or sig in signatures[script.page]:
            return False
        origins[script.page].add(key)
        signatures[script.page].add(sig)
        plan[script.page].append(script)
        return True

    # planted networks
    specs = config.networks
    if specs is None:
        specs = tuple(
            NetworkSpec(
                members=rng.randint(*config.network_members),
                score=(score := rng.randint(*config.network_score)),
                length=max(score, rng.randint(*config.network_length)),
            )
            for _ in range(config.network_count)
        )
    templates: list[list[str]] = []
    for spec in specs:
        while True:
            t = g.template(spec.score, spec.length)
            if all(longest_common_run(t, o)[0] < 10 for o in templates):
                break
        templates.append(t)

    file_templates: list[tuple[bytes, list[tuple[str, str]]]] = []
    for idx, (spec, template) in enumerate(zip(specs, templates)):
        actor = g.domain(f"fp{idx}-")
        shared_name = g.filename()
        pages = sorted(rng.sample(page_names, spec.members))
        file_members = spec.members if spec.file_members is None else spec.file_members
        body_template = g.body() if file_members or spec.extra_file_members else b""
        cluster_id = len(file_templates) if (file_members + spec.extra_file_members) >= 2 else None
        members = []
        for k, page in enumerate(pages):
            if spec.naming == "shared":
                url = f"https://{actor}/{shared_name}"
            elif spec.naming == "randomized":
                url = f"https://{actor}/{g.label(16)}.js"
            else:
                url = f"https://{page}/{shared_name}"
            tokens = list(template)
            if k:
                pre = [rng.choice(g.groups) for _ in range(rng.randint(0, config.affix_max))]
                suf = [rng.choice(g.groups) for _ in range(rng.randint(0, config.affix_max))]
                tokens = pre + tokens + suf
            s = _Script(page, url, tokens)
            if k < file_members:
                s.body = g.clone(body_template, page)
                s.cluster = cluster_id
            if not add(s):
                raise SynthConfigError(f"network {idx} collides with an existing script on {page}")
            members.append([page, url])
        extras_pages = sorted(rng.sample(page_names, spec.extra_file_members))
        for page in extras_pages:
            while True:
                s = _Script(page, f"https://{actor}/{g.label(16)}.js", g.noise_tokens(rng.choice(g.groups)))
                s.body = g.clone(body_template, page)
                s.cluster = cluster_id
                if add(s):
                    break
        truth.networks.append({
            "members": sorted(members),
            "shared_signature": ";".join(template),
            "score": spec.score,
            "page_domains": pages,
        })
        if cluster_id is not None:
            file_templates.append((body_template, []))

    # standalone file clusters (low score, no signature network)
    for size in config.file_clusters:
        cluster_id = len(file_templates)
        template = g.body()
        domain = g.domain("cl-")
        for page in sorted(rng.sample(page_names, size)):
            while True:
                s = _Script(page, f"https://{domain}/{g.label(12)}.js", g.noise_tokens(rng.choice(g.groups)))
                s.body = g.clone(template, page)
                s.cluster = cluster_id
                if add(s):
                    break
        file_templates.append((template, []))

    # noise: first groups cycle through a shuffled catalog so pages reach a decent score
    for page in page_names:
        order = list(g.groups)
        rng.shuffle(order)
        made = 0
        while made < config.noise_scripts:
            host = page if rng.random() < 0.3 else g.domain()
            s = _Script(page, f"https://{host}/{g.filename()}", g.noise_tokens(order[made % len(order)]))
            if add(s):
                made += 1

    all_scripts = [s for p in page_names for s in plan[p]]
    for s in all_scripts:
        if not s.body:
            s.body = g.body()

    # transport assignment, exact counts
    counts = _transport_counts(len(all_scripts), config.transport)
    labels = ["secure"] * counts["secure"] + ["insecure"] * counts["insecure"] + ["redirects"] * counts["redirects"]
    rng.shuffle(labels)
    for s, label in zip(all_scripts, labels):
        s.transport = label
        if label != "secure":
            s.origin_url = "http://" + s.origin_url[len("https://"):]

    for cluster_id, (_, members) in enumerate(file_templates):
        members.extend(
            [s.page, s.origin_url] for s in all_scripts if s.cluster == cluster_id
        )
        truth.file_clusters.append(sorted(members))
    by_page = {(s.page, parse_origin(s.origin_url)): s.origin_url for s in all_scripts}
    for net in truth.networks:
        net["members"] = sorted(
            [p, by_page[(p, parse_origin(u))]] for p, u in net["members"]
        )

    # scan A
    scan_a_pages = {}
    for i, page in enumerate(page_names):
        scripts = []
        gid = 0
        for oid, s in enumerate(plan[page], 1):
            obs = g.observations(s.origin_url, s.tokens, oid, gid)
            gid += len(obs)
            scripts.append(build_script(s.origin_url, oid, obs, catalog))
        scan_a_pages[page] = build_page(page, scripts, trace_id=f"A-{config.seed}-{i:05d}")
    scan_a = ScanDataset("scanA", None, dict(sorted(scan_a_pages.items())))

    # captures and header plant
    exchanges_by_page: dict[str, list[TrafficExchange]] = {p: [] for p in page_names}
    responses: list[tuple[str, int]] = []

    def exchange(page: str, url: str, status: int, headers: list, body: bytes) -> None:
        seq = len(exchanges_by_page[page])
        host = parse_origin(url).script_domain
        exchanges_by_page[page].append(
            TrafficExchange(
                f"{page}-{seq:05d}",
                Request("GET", url, host, (("Host", host), ("Accept", "*/*"))),
                Response(status, tuple(headers), body),
            )
        )

    for page in page_names:
        exchange(page, f"https://{page}/", 200, [("Content-Type", "text/html")], b"<html></html>")
        for s in plan[page]:
            js = [("Content-Type", "application/javascript")]
            if s.transport == "redirects":
                secure_url = "https://" + s.origin_url[len("http://"):]
                exchange(page, s.origin_url, 301, [("Location", secure_url)], b"")
                responses.append((page, len(exchanges_by_page[page]) - 1))
                exchange(page, secure_url, 200, list(js), s.body)
            else:
                exchange(page, s.origin_url, 200, list(js), s.body)
            responses.append((page, len(exchanges_by_page[page]) - 1))

    header_counts = {}
    for header in SECURITY_HEADERS:
        frac = next((v for k, v in config.headers.items() if k.lower() == header.lower()), 0.0)
        n = round(frac * len(responses))
        header_counts[header] = n
        for page, idx in rng.sample(responses, n):
            ex = exchanges_by_page[page][idx]
            name = header if rng.random() < 0.5 else header.lower()
            value = {"Strict-Transport-Security": "max-age=63072000",
                     "X-Content-Type-Options": "nosniff",
                     "Content-Security-Policy": "default-src 'self'",
                     "Referrer-Policy": "no-referrer"}[header]
            exchanges_by_page[page][idx] = TrafficExchange(
                ex.flow_id, ex.request,
                Response(ex.response.status_code, ex.response.headers + ((name, value),), ex.response.body),
            )
    captures = {p: TrafficCapture(p, tuple(exchanges_by_page[p])) for p in page_names}

    n_ex = len(responses)
    truth.transport = {
        "matches": n_ex,
        "secure": counts["secure"] + counts["redirects"],
        "insecure": counts["insecure"],
        "redirects": counts["redirects"],
    }
    truth.headers = {"matches": n_ex, "counts": header_counts}
    dom = {t: set() for t in ("secure", "insecure", "redirects")}
    for s in all_scripts:
        host = parse_origin(s.origin_url).script_domain
        dom[s.transport].add(host)
        if s.transport == "redirects":
            dom["secure"].add(host)
    truth.intersections = {
        "insecure&secure": sorted(dom["insecure"] & dom["secure"]),
        "redirects&secure": sorted(dom["redirects"] & dom["secure"]),
        "redirects&insecure": sorted(dom["redirects"] & dom["insecure"]),
    }

    # SB/FB expectations for networks that also form file clusters
    cluster_of_net = []
    cid = 0
    for spec in specs:
        fm = spec.members if spec.file_members is None else spec.file_members
        if fm + spec.extra_file_members >= 2:
            cluster_of_net.append(cid)
            cid += 1
        else:
            cluster_of_net.append(None)
    for net, c in zip(truth.networks, cluster_of_net):
        if c is None:
            continue
        sb = {_member_key(u) for _, u in net["members"]}
        fb = {_member_key(u) for _, u in truth.file_clusters[c]}
        if sb & fb:
            truth.sbfb_rows.append({
                "score": net["score"],
                "n_sb": len(sb),
                "n_fb": len(fb),
                "intersection": len(sb & fb),
                "union": len(sb | fb),
                "example": min(sb & fb),
            })

    scan_b, truth.matches = _churn(g, scan_a, config.churn, catalog)
    events, truth.events = _events(g, config)
    return SynthOutput(scan_a, scan_b, captures, truth, events)


def _member_key(url: str) -> str:
    o = parse_origin(url)
    return f"{o.script_domain}:{o.filename}"


def _churn(g: _Gen, scan_a: ScanDataset, churn: ChurnConfig, catalog: FeatureCatalog):
    rng = g.rng
    refs = [(page.page_domain, s.origin_url) for page, s in scan_a.iter_scripts() if not s.is_inline]
    n = len(refs)
    modes = _allocate(n, {
        "cache": churn.cache_buster_rate,
        "domain": churn.domain_churn_rate,
        "both": churn.both_churn_rate,
        "perturb": churn.perturbation_rate,
    }, ["cache", "domain", "both", "perturb"])
    labels = (["cache"] * modes["cache"] + ["domain"] * modes["domain"] + ["both"] * modes["both"]
              + ["perturb"] * modes["perturb"])
    labels += ["keep"] * (n - len(labels))
    rng.shuffle(labels)
    assignment = dict(zip(refs, labels))
    category = {
        "keep": "origin-same-behavior-same",
        "perturb": "origin-same-behavior-changed",
        "cache": "filename-changed",
        "domain": "domain-changed",
        "both": "both-changed",
    }

    matches = []
    pages = {}
    for page in scan_a.pages.values():
        taken = {parse_origin(s.origin_url) for s in page.scripts}
        scripts = []
        gid = 0
        for s in page.scripts:
            mode = assignment.get((page.page_domain, s.origin_url), "keep")
            scheme = s.origin_url.split("://", 1)[0]
            domain, filename = s.script_domain, s.filename
            tokens = s.tokens
            while mode in ("cache", "domain", "both"):
                if mode == "cache":
                    base = filename.split("?", 1)[0]
                    filename = f"{base}?v={rng.randint(100000, 999999)}"
                elif mode == "domain":
                    domain = g.domain()
                else:
                    domain = g.domain()
                    filename = g.label(16) + ".js"
                if (domain, filename) not in taken:
                    taken.add((domain, filename))
                    break
                domain, filename = s.script_domain, s.filename
            if mode == "perturb":
                tokens = _perturb(rng, list(tokens), churn.swap_k)
            url = f"{scheme}://{domain}/{filename}" if (domain, filename) != (s.script_domain, s.filename) else s.origin_url
            obs = [
                Observation(gid + sid, sid, s.oid,
                            o.raw_name if o.group == t else rng.choice(catalog[t].members), t, url)
                for sid, (o, t) in enumerate(_pad(s.observations, tokens), 1)
            ]
            gid += len(obs)
            scripts.append(build_script(url, s.oid, obs, catalog))
            matches.append({
                "page_domain": page.page_domain,
                "origin_a": s.origin_url,
                "origin_b": url,
                "category": category[mode],
                "score_a": s.score,
            })
        pages[page.page_domain] = build_page(page.page_domain, scripts, "B" + page.trace_id[1:])
    matches.sort(key=lambda m: (m["page_domain"], m["origin_a"]))
    return ScanDataset("scanB", None, pages), matches


def _pad(observations, tokens):
    """Pair new tokens with the old observations, repeating the last one if needed."""
    obs = list(observations)
    obs += [obs[-1]] * (len(tokens) - len(obs))
    return list(zip(obs, tokens))


def _perturb(rng: random.Random, tokens: list[str], k: int) -> list[str]:
    original = list(tokens)
    for _ in range(k):
        spots = [i for i in range(len(tokens) - 1) if tokens[i] != tokens[i + 1]]
        if not spots:
            break
        i = rng.choice(spots)
        tokens[i], tokens[i + 1] = tokens[i + 1], tokens[i]
    if tokens == original:
        tokens.append(rng.choice(sorted(set(tokens))))
    return tokens


def _events(g: _Gen, config: SynthConfig) -> tuple[list[HandlerCounts], dict]:
    rng = g.rng
    names = handler_catalog()
    known = set(names)
    weights = [1.0 / (rank + 1) for rank in range(len(names))]
    popularity = list(names)
    rng.shuffle(popularity)
    records = []
    occurrence: dict[str, int] = {}
    spread: dict[str, set[str]] = {}
    method_events = {m: 0 for m in METHODS}
    method_pages = {m: set() for m in METHODS}
    unknown = 0
    unknown_names: set[str] = set()
    for i in range(config.events_pages):
        page = f"events{i:04d}.test"
        for method in METHODS:
            if rng.random() < 0.25:
                continue
            counts: dict[str, int] = {}
            for name in rng.choices(popularity, weights=weights, k=rng.randint(1, 8)):
                counts[name] = counts.get(name, 0) + rng.randint(1, 40)
            if rng.random() < config.unknown_handler_rate:
                odd = "on" + g.label(6).replace("0", "x")
                counts[odd] = rng.randint(1, 5)
                unknown += counts[odd]
                unknown_names.add(odd)
            records.append(HandlerCounts(page, method, counts))
            for name, n in counts.items():
                method_events[method] += n
                method_pages[method].add(page)
                if name not in known:
                    continue
                occurrence[name] = occurrence.get(name, 0) + n
                spread.setdefault(name, set()).add(page)
    truth = {
        "total_events": sum(method_events.values()),
        "methods": {m: {"events": method_events[m], "pages": len(method_pages[m])} for m in METHODS},
        "occurrence": dict(sorted(occurrence.items())),
        "spread": {k: len(v) for k, v in sorted(spread.items())},
        "unknown_events": unknown,
    }
    return records, truth


# -- writing ------------------------------------------------------------------


def write_outputs(out: SynthOutput, config: SynthConfig, directory: str | Path) -> list[Path]:
    """Write both scans, scan A's traffic, the events corpus, config and truth."""
    from .events import write_handler_log
    from .ingest import dump_traffic_log, write_monitor_log

    directory = Path(directory)
    traffic = directory / "traffic"
    traffic.mkdir(parents=True, exist_ok=True)
    paths = [
        write_monitor_log(out.scan_a.pages.values(), directory / "scanA.jsonl"),
        write_monitor_log(out.scan_b.pages.values(), directory / "scanB.jsonl"),
        write_handler_log(out.events, directory / "events.jsonl"),
    ]
    for domain in sorted(out.captures):
        paths.append(dump_traffic_log(out.captures[domain], traffic))
    for name, payload in (("config.json", config.to_dict()), ("ground_truth.json", out.truth.to_dict())):
        path = directory / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        paths.append(path)
    return paths


def config_from_any(value: Any) -> SynthConfig:
    if isinstance(value, SynthConfig):
        return value
    if isinstance(value, dict):
        return SynthConfig.from_dict(value)
    return SynthConfig.from_file(value)
