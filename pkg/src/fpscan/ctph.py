"""Context-triggered piecewise hashing (the ssdeep/spamsum construction).

Hashes serialize as ``blocksize:digest1:digest2`` and compare to a score in
[0, 100], compatible with ssdeep 2.13+ output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROLLING_WINDOW = 7
MIN_BLOCKSIZE = 3
SPAMSUM_LENGTH = 64
NUM_BLOCKHASHES = 31
HASH_PRIME = 0x01000193
HASH_INIT = 0x28021967
B64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"
_B64_SET = frozenset(B64)

# low 6 bits of the FNV-style piecewise hash only depend on low 6 bits of state
_SUM_TABLE = [[((h * HASH_PRIME) ^ c) & 0x3F for c in range(64)] for h in range(64)]


class CTPHError(ValueError):
    pass


@dataclass(frozen=True)
class FuzzyHash:
    block_size: int
    digest1: str
    digest2: str

    def __str__(self) -> str:
        return f"{self.block_size}:{self.digest1}:{self.digest2}"

    @classmethod
    def parse(cls, text: str) -> "FuzzyHash":
        parts = text.split(":")
        if len(parts) != 3:
            raise CTPHError(f"malformed fuzzy hash {text!r}")
        bs, d1, d2 = parts
        if not bs.isdigit() or int(bs) < MIN_BLOCKSIZE:
            raise CTPHError(f"malformed block size in {text!r}")
        if len(d1) > SPAMSUM_LENGTH or len(d2) > SPAMSUM_LENGTH:
            raise CTPHError(f"digest too long in {text!r}")
        if not (set(d1) <= _B64_SET and set(d2) <= _B64_SET):
            raise CTPHError(f"digest outside base64 alphabet in {text!r}")
        return cls(int(bs), d1, d2)


def _block_size(index: int) -> int:
    return MIN_BLOCKSIZE << index


def rolling_hashes(data: bytes) -> np.ndarray:
    """Rolling-hash value after each input byte (uint32)."""
    c = np.frombuffer(data, dtype=np.uint8).astype(np.uint64)
    n = len(c)
    padded = np.concatenate([np.zeros(ROLLING_WINDOW - 1, dtype=np.uint64), c])
    h1 = np.zeros(n, dtype=np.uint64)
    h2 = np.zeros(n, dtype=np.uint64)
    h3 = np.zeros(n, dtype=np.uint64)
    for k in range(ROLLING_WINDOW):
        lag = padded[ROLLING_WINDOW - 1 - k : ROLLING_WINDOW - 1 - k + n]
        h1 += lag
        h2 += np.uint64(ROLLING_WINDOW - k) * lag
        h3 ^= lag << np.uint64(5 * k)
    h3 &= np.uint64(0xFFFFFFFF)
    return ((h1 + h2 + h3) & np.uint64(0xFFFFFFFF)).astype(np.uint32)


# per-state rows of the sum table as bytes: rows[h][c] is the next state
_ROWS = tuple(bytes(row) for row in _SUM_TABLE)
_MASK6 = bytes(i & 0x3F for i in range(256))


class _BlockHash:
    __slots__ = ("digest", "h", "halfh", "last", "halflast")

    def __init__(self):
        self.digest: list[str] = []
        self.h = HASH_INIT & 0x3F
        self.halfh = HASH_INIT & 0x3F
        self.last = ""  # char written at slot 63 by the latest trigger once full
        self.halflast = ""


def _advance(h: int, segment: bytes) -> int:
    rows = _ROWS
    for c in segment:
        h = rows[h][c]
    return h


def _run_block(data: bytes, trigger: np.ndarray) -> _BlockHash:
    """Piecewise digest for one block size, segment by segment.

    ``h`` and ``halfh`` share resets for the first 31 triggers; while their
    values agree one pass over the segment serves both.
    """
    bh = _BlockHash()
    init = HASH_INIT & 0x3F
    full = SPAMSUM_LENGTH - 1
    half = SPAMSUM_LENGTH // 2
    d = data.translate(_MASK6)
    digest = bh.digest
    h = halfh = init
    prev = 0
    for p in np.flatnonzero(trigger).tolist():
        seg = d[prev : p + 1]
        prev = p + 1
        if h == halfh:
            h = halfh = _advance(h, seg)
        else:
            h = _advance(h, seg)
            halfh = _advance(halfh, seg)
        bh.halflast = B64[halfh]
        if len(digest) < full:
            digest.append(B64[h])
            h = init
            if len(digest) < half:
                halfh = init
                bh.halflast = ""
        else:
            bh.last = B64[h]
    seg = d[prev:]
    if h == halfh:
        h = halfh = _advance(h, seg)
    else:
        h = _advance(h, seg)
        halfh = _advance(halfh, seg)
    bh.h, bh.halfh = h, halfh
    return bh


def ctph_hash(body: bytes) -> FuzzyHash:
    """Compute the fuzzy hash of ``body``."""
    if not body:
        raise CTPHError("cannot hash empty input")
    data = bytes(body)
    total = len(data)
    roll = rolling_hashes(data)
    final_roll = int(roll[-1])

    # trigger counts per block size decide which hashes the streaming
    # algorithm would have forked and which block size it reports
    counts = []
    for index in range(NUM_BLOCKHASHES):
        bs = _block_size(index)
        n = int(np.count_nonzero(roll % np.uint32(bs) == np.uint32(bs - 1)))
        counts.append(n)
        if n == 0:
            break
    bhend = len(counts)  # hashes 0..bhend-1 exist; the last one saw no trigger
    if counts[-1] != 0:
        bhend = NUM_BLOCKHASHES

    def dlen(index: int) -> int:
        return min(counts[index], SPAMSUM_LENGTH - 1)

    bi = 0
    while _block_size(bi) * SPAMSUM_LENGTH < total:
        bi += 1
    if bi >= bhend:
        bi = bhend - 1
    while bi > 0 and dlen(bi) < SPAMSUM_LENGTH // 2:
        bi -= 1

    def triggers(index: int) -> np.ndarray:
        bs = _block_size(index)
        return roll % np.uint32(bs) == np.uint32(bs - 1)

    first = _run_block(data, triggers(bi))
    digest1 = "".join(first.digest)
    if final_roll != 0:
        digest1 += B64[first.h]
    elif first.last:
        digest1 += first.last

    if bi < bhend - 1:
        second = _run_block(data, triggers(bi + 1))
        digest2 = "".join(second.digest[: SPAMSUM_LENGTH // 2 - 1])
        if final_roll != 0:
            digest2 += B64[second.halfh]
        elif second.halflast:
            digest2 += second.halflast
    elif final_roll != 0:
        digest2 = B64[first.h]
    else:
        digest2 = ""
    return FuzzyHash(_block_size(bi), digest1, digest2)


# -- comparison -------------------------------------------------------------


def eliminate_sequences(s: str) -> str:
    """Collapse runs of more than three identical characters to three."""
    out = []
    for ch in s:
        if len(out) >= 3 and out[-1] == ch and out[-2] == ch and out[-3] == ch:
            continue
        out.append(ch)
    return "".join(out)


def _has_common_substring(s1: str, s2: str) -> bool:
    if len(s1) < ROLLING_WINDOW or len(s2) < ROLLING_WINDOW:
        return False
    grams = {s1[i : i + ROLLING_WINDOW] for i in range(len(s1) - ROLLING_WINDOW + 1)}
    return any(s2[i : i + ROLLING_WINDOW] in grams for i in range(len(s2) - ROLLING_WINDOW + 1))


def _lcs_length(s1: str, s2: str) -> int:
    """Longest common subsequence length, bit-parallel over ``s1``."""
    if not s1 or not s2:
        return 0
    masks: dict[str, int] = {}
    for i, ch in enumerate(s1):
        masks[ch] = masks.get(ch, 0) | (1 << i)
    full = (1 << len(s1)) - 1
    v = full
    for ch in s2:
        u = v & masks.get(ch, 0)
        v = ((v + u) | (v - u)) & full
    return len(s1) - bin(v).count("1")


def _edit_distance(s1: str, s2: str) -> int:
    """Levenshtein distance with insert/delete cost 1 and substitution cost 2.

    A substitution never beats a delete plus an insert at these costs, so the
    distance reduces to ``len1 + len2 - 2 * LCS``.
    """
    return len(s1) + len(s2) - 2 * _lcs_length(s1, s2)


def _score_strings(s1: str, s2: str, block_size: int) -> int:
    if len(s1) > SPAMSUM_LENGTH or len(s2) > SPAMSUM_LENGTH:
        return 0
    if not _has_common_substring(s1, s2):
        return 0
    dist = _edit_distance(s1, s2)
    score = dist * SPAMSUM_LENGTH // (len(s1) + len(s2))
    score = 100 * score // SPAMSUM_LENGTH
    if score >= 100:
        return 0
    score = 100 - score
    if block_size >= (99 + ROLLING_WINDOW) // ROLLING_WINDOW * MIN_BLOCKSIZE:
        return score
    cap = block_size // MIN_BLOCKSIZE * min(len(s1), len(s2))
    return min(score, cap)


def ctph_compare(h1: FuzzyHash | str, h2: FuzzyHash | str) -> int:
    """Similarity of two fuzzy hashes in [0, 100]."""
    a = FuzzyHash.parse(h1) if isinstance(h1, str) else h1
    b = FuzzyHash.parse(h2) if isinstance(h2, str) else h2
    bs1, bs2 = a.block_size, b.block_size
    if bs1 != bs2 and bs1 * 2 != bs2 and bs2 * 2 != bs1:
        return 0
    a1, a2 = eliminate_sequences(a.digest1), eliminate_sequences(a.digest2)
    b1, b2 = eliminate_sequences(b.digest1), eliminate_sequences(b.digest2)
    if bs1 == bs2 and a1 == b1 and a2 == b2:
        return 100
    if bs1 == bs2:
        return max(_score_strings(a1, b1, bs1), _score_strings(a2, b2, bs1 * 2))
    if bs1 == bs2 * 2:
        return _score_strings(a1, b2, bs1)
    return _score_strings(a2, b1, bs2)
