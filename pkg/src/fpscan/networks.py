"""Signature-based fingerprinting networks and actor attribution."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import SEPARATOR, ScanDataset, ScriptRecord, first_level_domain
from .parallel import UnionFind, chunked, pmap
from .signatures import tokenize

log = logging.getLogger(__name__)

Member = tuple[str, ScriptRecord]  # (page_domain, script)

_MOD = (1 << 61) - 1
_BASE = 1_000_003


# -- longest common token run -------------------------------------------------


def _as_tokens(sig: str | Sequence[str]) -> list[str]:
    return tokenize(sig) if isinstance(sig, str) else list(sig)


def longest_common_run(a: Sequence, b: Sequence) -> tuple[int, int, int]:
    """Return ``(length, start_a, start_b)`` of the longest common contiguous run.

    Ties go to the earliest start in ``a``, then the earliest start in ``b``.
    """
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0, 0, 0
    if list(a) == list(b):
        return n, 0, 0
    codes: dict = {}
    arr_a = np.fromiter((codes.setdefault(t, len(codes)) for t in a), dtype=np.int64, count=n)
    arr_b = np.fromiter((codes.get(t, -1) for t in b), dtype=np.int64, count=m)
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    best = best_a = best_b = 0
    for i in range(n):
        eq = arr_b == arr_a[i]
        cur[1:] = np.where(eq, prev[:-1] + 1, 0)
        row_max = int(cur.max())
        if row_max > best:
            j = int(np.argmax(cur))  # first column reaching the max
            best, best_a, best_b = row_max, i - row_max + 1, j - row_max
        prev, cur = cur, prev
    return best, best_a, best_b


def token_overlap(sig_a: str | Sequence[str], sig_b: str | Sequence[str]) -> tuple[str, int]:
    """Longest common contiguous token run of two signatures and its length."""
    a, b = _as_tokens(sig_a), _as_tokens(sig_b)
    length, start, _ = longest_common_run(a, b)
    return SEPARATOR.join(a[start : start + length]), length


def _prefix_hashes(seq: Sequence[int]) -> list[int]:
    out = [0]
    h = 0
    for x in seq:
        h = (h * _BASE + x + 1) % _MOD
        out.append(h)
    return out


def common_run(seqs: Sequence[Sequence[int]]) -> tuple[int, ...]:
    """Longest contiguous run shared by every sequence.

    Ties go to the earliest occurrence in ``seqs[0]``.
    """
    if not seqs:
        return ()
    if any(len(s) == 0 for s in seqs):
        return ()
    first = seqs[0]
    if all(len(s) == len(first) and list(s) == list(first) for s in seqs[1:]):
        return tuple(first)
    prefixes = [_prefix_hashes(s) for s in seqs]

    def grams(idx: int, length: int) -> dict[int, list[int]]:
        pre = prefixes[idx]
        power = pow(_BASE, length, _MOD)
        table: dict[int, list[int]] = {}
        for i in range(len(seqs[idx]) - length + 1):
            h = (pre[i + length] - pre[i] * power) % _MOD
            table.setdefault(h, []).append(i)
        return table

    def find(length: int) -> int | None:
        if length == 0:
            return 0
        others = []
        for idx in range(1, len(seqs)):
            others.append(grams(idx, length))
        pre = prefixes[0]
        power = pow(_BASE, length, _MOD)
        for i in range(len(first) - length + 1):
            h = (pre[i + length] - pre[i] * power) % _MOD
            run = list(first[i : i + length])
            ok = True
            for idx, table in enumerate(others, 1):
                starts = table.get(h)
                seq = seqs[idx]
                if not starts or not any(list(seq[s : s + length]) == run for s in starts):
                    ok = False
                    break
            if ok:
                return i
        return None

    lo, hi = 0, min(len(s) for s in seqs)
    best_start = 0
    while lo < hi:
        mid = (lo + hi + 1) // 2
        start = find(mid)
        if start is None:
            hi = mid - 1
        else:
            lo, best_start = mid, start
    return tuple(first[best_start : best_start + lo])


# -- network building -------------------------------------------------------


@dataclass(frozen=True)
class NetworkParams:
    min_script_score: int = 6
    min_overlap_tokens: int = 10
    min_overlap_ratio: float = 0.5

    def __post_init__(self):
        if self.min_script_score < 0 or self.min_overlap_tokens < 1:
            raise ValueError("thresholds must be positive")
        if not 0.0 < self.min_overlap_ratio <= 1.0:
            raise ValueError("min_overlap_ratio must be in (0, 1]")


@dataclass
class SignatureNetwork:
    members: list[Member]
    shared_signature: str
    network_id: str = ""

    @property
    def tokens(self) -> list[str]:
        return tokenize(self.shared_signature)

    @property
    def sig_len(self) -> int:
        return len(self.tokens)

    @property
    def network_score(self) -> int:
        return len(set(self.tokens))

    @property
    def page_domains(self) -> list[str]:
        return sorted({page for page, _ in self.members})

    @property
    def size(self) -> int:
        return len(self.page_domains)

    @property
    def script_domains(self) -> list[str]:
        return sorted({s.script_domain for _, s in self.members})

    @property
    def file_keys(self) -> set[tuple[str, int, int]]:
        return {(s.filename, s.score, s.sig_len) for _, s in self.members}

    def member_keys(self) -> list[str]:
        """``script_domain:filename`` keys, the join key against file networks."""
        return sorted({f"{s.script_domain}:{s.filename}" for _, s in self.members})


def _collect_members(scripts) -> list[Member]:
    if isinstance(scripts, ScanDataset):
        return [(page.page_domain, s) for page, s in scripts.iter_scripts()]
    return list(scripts)


def _pair_matches(args) -> list[tuple[int, int]]:
    pairs, seqs, min_tokens, ratio = args
    out = []
    for i, j in pairs:
        a, b = seqs[i], seqs[j]
        length = longest_common_run(a, b)[0]
        if length >= min_tokens and length >= ratio * min(len(a), len(b)):
            out.append((i, j))
    return out


def _candidate_pairs(seqs: Sequence[Sequence[int]], k: int) -> list[tuple[int, int]]:
    """Signature pairs sharing at least one k-token run."""
    postings: dict[int, list[int]] = defaultdict(list)
    for idx, seq in enumerate(seqs):
        if len(seq) < k:
            continue
        pre = _prefix_hashes(seq)
        power = pow(_BASE, k, _MOD)
        seen = set()
        for i in range(len(seq) - k + 1):
            h = (pre[i + k] - pre[i] * power) % _MOD
            if h not in seen:
                seen.add(h)
                postings[h].append(idx)
    pairs = set()
    for ids in postings.values():
        for x in range(len(ids)):
            for y in range(x + 1, len(ids)):
                pairs.add((ids[x], ids[y]))
    return sorted(pairs)


def _member_key(member: Member) -> tuple[str, str]:
    page, script = member
    return page, script.origin_url


def _split_component(
    nodes: list[int],
    seqs: Sequence[tuple[int, ...]],
    adjacency: Mapping[int, set[int]],
    min_tokens: int,
) -> list[tuple[list[int], tuple[int, ...]]]:
    """Partition a matched component into groups whose common run is long enough.

    A component whose members all share a run of ``min_tokens`` is returned
    unchanged. Otherwise the best-connected node seeds a core; neighbours are
    added in breadth-first order while the core keeps a long enough common
    run, and the leftovers are re-split on their own.
    """
    run = common_run([seqs[n] for n in nodes])
    if len(run) >= min_tokens or len(nodes) == 1:
        return [(nodes, run)]
    remaining = set(nodes)
    out = []
    while remaining:
        seed = min(remaining, key=lambda n: (-len(adjacency[n] & remaining), n))
        core = [seed]
        core_run = seqs[seed]
        queue = sorted(adjacency[seed] & remaining)
        visited = {seed, *queue}
        while queue:
            node = queue.pop(0)
            trial = common_run([seqs[n] for n in core] + [seqs[node]])
            if len(trial) >= min_tokens:
                core.append(node)
                core_run = trial
                for nxt in sorted(adjacency[node] & remaining):
                    if nxt not in visited:
                        visited.add(nxt)
                        queue.append(nxt)
        out.append((sorted(core), tuple(core_run)))
        remaining -= set(core)
        # leftovers may have fallen apart; recurse per connected piece
        if remaining:
            pieces = _components(sorted(remaining), adjacency)
            for piece in pieces:
                out.extend(_split_component(piece, seqs, adjacency, min_tokens))
            remaining.clear()
    return out


def _components(nodes: list[int], adjacency: Mapping[int, set[int]]) -> list[list[int]]:
    allowed = set(nodes)
    seen: set[int] = set()
    out = []
    for start in nodes:
        if start in seen:
            continue
        stack, comp = [start], []
        seen.add(start)
        while stack:
            n = stack.pop()
            comp.append(n)
            for nxt in adjacency[n]:
                if nxt in allowed and nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        out.append(sorted(comp))
    return out


def build_networks(
    scripts: ScanDataset | Iterable[Member],
    params: NetworkParams | None = None,
    workers: int = 1,
) -> list[SignatureNetwork]:
    """Group behaviour-similar scripts into signature-based networks.

    Two scripts match when their longest common token run is at least
    ``min_overlap_tokens`` long and covers ``min_overlap_ratio`` of the
    shorter signature. Matches merge transitively; each network keeps the run
    shared by all of its members. Networks covering fewer than two page
    domains are dropped.
    """
    params = params or NetworkParams()
    members = [m for m in _collect_members(scripts) if m[1].score >= params.min_script_score]
    members.sort(key=_member_key)

    # identical signatures collapse to one node
    by_sig: dict[str, list[Member]] = {}
    for m in members:
        by_sig.setdefault(m[1].signature, []).append(m)
    signatures = sorted(by_sig, key=lambda s: _member_key(by_sig[s][0]))
    codes: dict[str, int] = {}
    seqs = [tuple(codes.setdefault(t, len(codes)) for t in tokenize(s)) for s in signatures]

    k = params.min_overlap_tokens
    candidates = _candidate_pairs(seqs, k)
    jobs = [(chunk, seqs, k, params.min_overlap_ratio) for chunk in chunked(candidates, 256)]
    matched = [pair for part in pmap(_pair_matches, jobs, workers) for pair in part]
    log.debug("%d signatures, %d candidate pairs, %d matches",
              len(seqs), len(candidates), len(matched))

    adjacency: dict[int, set[int]] = {i: set() for i in range(len(seqs))}
    uf = UnionFind(len(seqs))
    for i, j in matched:
        adjacency[i].add(j)
        adjacency[j].add(i)
        uf.union(i, j)

    inverse = {v: t for t, v in codes.items()}
    networks = []
    for component in uf.groups():
        if len(seqs[component[0]]) < k and len(component) == 1:
            continue
        for nodes, run in _split_component(component, seqs, adjacency, k):
            if len(run) < k:
                continue
            net_members = sorted((m for n in nodes for m in by_sig[signatures[n]]), key=_member_key)
            network = SignatureNetwork(net_members, SEPARATOR.join(inverse[c] for c in run))
            if network.size >= 2:
                networks.append(network)

    networks.sort(key=lambda n: (-n.size, -n.network_score, n.shared_signature,
                                 _member_key(n.members[0])))
    for i, network in enumerate(networks, 1):
        network.network_id = f"SB{i:04d}"
    return networks


def network_properties(network: SignatureNetwork, top_names: int = 3) -> dict:
    names = Counter(s.filename for _, s in network.members)
    typical = [n for n, _ in sorted(names.items(), key=lambda kv: (-kv[1], kv[0]))[:top_names]]
    return {
        "network_id": network.network_id,
        "score": network.network_score,
        "size": network.size,
        "sig_len": network.sig_len,
        "files": len(network.file_keys),
        "members": len(network.members),
        "typical_names": typical,
        "script_domains": network.script_domains,
        "page_domains": network.page_domains,
        "shared_signature": network.shared_signature,
    }


# -- actor attribution ------------------------------------------------------


class ActorClass(str, Enum):
    SAME_ORIGIN = "same-origin"
    THIRD_PARTY = "third-party"
    SELF_HOSTED = "self-hosted"
    CDN_CONCEALED = "cdn-concealed"
    UNATTRIBUTED = "unattributed"


@dataclass(frozen=True)
class ActorAttribution:
    actor_class: ActorClass
    actor_domain: str | None
    evidence: float

    def to_dict(self) -> dict:
        return {
            "class": self.actor_class.value,
            "actor_domain": self.actor_domain,
            "evidence": round(self.evidence, 6),
        }


class AttributionError(ValueError):
    pass


def _entity(domain: str, aliases: Mapping[str, str]) -> str:
    fld = first_level_domain(domain)
    return aliases.get(fld, aliases.get(domain, fld))


def attribute_actor(
    network: SignatureNetwork,
    cdn_domains: Iterable[str] = (),
    self_host_threshold: float = 0.8,
    majority_threshold: float = 0.5,
    aliases: Mapping[str, str] | None = None,
) -> ActorAttribution:
    """Classify who controls a network's scripts.

    Checked in order: self-hosting (scripts served from their own page's
    first-level domain), a majority script domain (third-party, or
    CDN-concealed when that domain is a known CDN), otherwise unattributed.
    """
    if not network.members:
        raise AttributionError("cannot attribute an empty network")
    aliases = dict(aliases or {})
    cdns = {d.lower() for d in cdn_domains}
    total = len(network.members)

    same = sum(
        1 for page, s in network.members
        if first_level_domain(s.script_domain) == first_level_domain(page)
    )
    self_fraction = same / total
    if self_fraction >= self_host_threshold:
        entities = {_entity(page, aliases) for page in network.page_domains}
        if len(entities) == 1:
            return ActorAttribution(ActorClass.SAME_ORIGIN, entities.pop(), self_fraction)
        return ActorAttribution(ActorClass.SELF_HOSTED, None, self_fraction)

    counts = Counter(first_level_domain(s.script_domain) for _, s in network.members)
    modal, n = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    fraction = n / total
    if fraction > majority_threshold:
        hosts = {s.script_domain for _, s in network.members
                 if first_level_domain(s.script_domain) == modal}
        if modal in cdns or hosts & cdns:
            return ActorAttribution(ActorClass.CDN_CONCEALED, None, fraction)
        return ActorAttribution(ActorClass.THIRD_PARTY, modal, fraction)
    return ActorAttribution(ActorClass.UNATTRIBUTED, None, fraction)


def load_domain_list(path) -> set[str]:
    """One domain per line; blank lines and ``#`` comments ignored."""
    out = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip().lower()
            if line:
                out.add(line)
    return out


def load_alias_map(path) -> dict[str, str]:
    """JSON object mapping a domain to its entity name."""
    import json

    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise ValueError("alias map must be a JSON object")
    return {str(k).lower(): str(v) for k, v in payload.items()}
